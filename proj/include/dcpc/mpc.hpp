#pragma once

#include <map>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "dcpc/core_math.hpp"
#include "dcpc/plant.hpp"
#include "dcpc/solver.hpp"
#include "dcpc/sysid.hpp"

namespace dcpc {

// {x : A x <= b}; no rows means unconstrained. Infinite box bounds are dropped.
struct PolyhedralSet {
    Eigen::MatrixXd A{0, 0};
    Eigen::VectorXd b{0};

    static PolyhedralSet unconstrained(int dim) {
        return {Eigen::MatrixXd(0, dim), Eigen::VectorXd(0)};
    }
    static PolyhedralSet box(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper);

    Eigen::Index rows() const { return A.rows(); }
};

enum class RegularizerKind { Quadratic, Hinge };

// Receding-horizon controller on an identified model, with a pre-stabilizing
// gain and a data-conformity regularizer on the predicted (x, u) pairs.
struct MPCConfig {
    int horizon = 8;                   // N
    Eigen::MatrixXd Q;                 // state cost, PSD
    Eigen::MatrixXd R;                 // input cost, PD
    PolyhedralSet state_set;           // X, applied at k = 1..N-1
    PolyhedralSet input_set;           // U, applied at k = 0..N-1
    PolyhedralSet terminal_set;        // X_N (defaults to X when empty-dimensioned)
    RegularizerKind regularizer = RegularizerKind::Quadratic;
    double gamma = 0.0;
    double confidence = 0.95;          // hinge radius level
    std::optional<GaussianSummary> data_summary;  // over stacked (x, u)
    SolveSettings solver;

    void validate(int r_x, int r_u) const;
};

// Assembles the horizon problem at state x0. Decision variables are the
// open-loop corrections and the predicted states, z = (u~_0..u~_{N-1},
// x_1..x_N), with the applied input u_k = K x_k + u~_k.
CompositeProblem build_mpc_problem(const LinearModel& model, const Eigen::MatrixXd& K,
                                   const Eigen::VectorXd& x0, const MPCConfig& config);

class MPCController : public Controller {
  public:
    MPCController(LinearModel model, Eigen::MatrixXd K, MPCConfig config);

    // measurement = current state
    Eigen::VectorXd step(const Eigen::VectorXd& x) override;
    std::map<std::string, double> last_diagnostics() const override { return diagnostics_; }

    const LinearModel& model() const { return model_; }
    const Eigen::MatrixXd& gain() const { return K_; }

  private:
    LinearModel model_;
    Eigen::MatrixXd K_;
    MPCConfig config_;
    std::optional<Eigen::VectorXd> warm_start_;
    std::map<std::string, double> diagnostics_;
};

}  // namespace dcpc
