#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "dcpc/core_math.hpp"

namespace dcpc {

// weight * || map * z + offset ||_1
struct L1Term {
    double weight;
    Eigen::MatrixXd map;
    Eigen::VectorXd offset;
};

// weight * max{0, d_M^2(map * z + offset; summary) - radius}
struct HingeTerm {
    double weight;
    GaussianSummary summary;
    Eigen::MatrixXd map;
    Eigen::VectorXd offset;
    double radius;
};

// Canonical composite convex program:
//   min  1/2 z'Pz + q'z + c
//        + sum_i  lambda_i ||M_i z + m_i||_1
//        + sum_j  gamma_j max{0, d_M^2(S_j z + s_j) - d*_j}
//   s.t. A_eq z = b_eq,  A_in z <= b_in
// All pieces validated for dimensional consistency; P must be symmetric PSD.
class CompositeProblem {
  public:
    CompositeProblem(Eigen::MatrixXd P, Eigen::VectorXd q, double constant = 0.0);

    void add_l1(double weight, Eigen::MatrixXd map, Eigen::VectorXd offset);
    void add_hinge(double weight, GaussianSummary summary, Eigen::MatrixXd map,
                   Eigen::VectorXd offset, double radius);
    void set_equalities(Eigen::MatrixXd A, Eigen::VectorXd b);
    void set_inequalities(Eigen::MatrixXd A, Eigen::VectorXd b);

    Eigen::Index dim() const { return q_.size(); }
    const Eigen::MatrixXd& quadratic() const { return P_; }
    const Eigen::VectorXd& linear() const { return q_; }
    double constant() const { return c_; }
    const std::vector<L1Term>& l1_terms() const { return l1_; }
    const std::vector<HingeTerm>& hinge_terms() const { return hinges_; }
    const Eigen::MatrixXd& eq_matrix() const { return A_eq_; }
    const Eigen::VectorXd& eq_rhs() const { return b_eq_; }
    const Eigen::MatrixXd& ineq_matrix() const { return A_in_; }
    const Eigen::VectorXd& ineq_rhs() const { return b_in_; }

    // Full composite objective value (constraints not included).
    double objective(const Eigen::VectorXd& z) const;

    // Dense row-major dump of every piece, for offline inspection.
    nlohmann::json to_debug_json() const;

  private:
    Eigen::MatrixXd P_;
    Eigen::VectorXd q_;
    double c_;
    std::vector<L1Term> l1_;
    std::vector<HingeTerm> hinges_;
    Eigen::MatrixXd A_eq_{0, 0};
    Eigen::VectorXd b_eq_{0};
    Eigen::MatrixXd A_in_{0, 0};
    Eigen::VectorXd b_in_{0};
};

enum class SolveStatus { Optimal, MaxIterations, InfeasibleDetected };

std::string to_string(SolveStatus status);

struct KktResiduals {
    double stationarity = 0.0;
    double primal = 0.0;
    double complementarity = 0.0;
};

struct SolverResult {
    Eigen::VectorXd solution;
    double objective = 0.0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;  // stationarity
    double complementarity = 0.0;
    int iterations = 0;
    SolveStatus status = SolveStatus::MaxIterations;
};

struct SolveSettings {
    double tol_abs = 1e-8;
    double tol_rel = 1e-6;
    int max_iter = 50000;
    std::optional<Eigen::VectorXd> initial;  // warm start
};

// Operator-splitting (ADMM) solver. The smooth block carries the quadratic and
// the hinge-of-quadratic terms (handled through their gradients); the prox
// block carries the l1 terms and the constraint indicators. Terminates when
// the KKT residuals at the iterate fall below tol_abs + tol_rel * scale.
SolverResult solve(const CompositeProblem& problem, const SolveSettings& settings = {});

// Residuals at an arbitrary candidate: stationarity as the distance of the
// negated smooth gradient from the span of admissible l1 subgradients and
// constraint duals, primal feasibility, and complementary slackness.
KktResiduals kkt_residuals(const CompositeProblem& problem, const Eigen::VectorXd& candidate);

}  // namespace dcpc
