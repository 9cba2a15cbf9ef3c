#pragma once

#include <deque>
#include <map>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "dcpc/core_math.hpp"
#include "dcpc/mpc.hpp"
#include "dcpc/plant.hpp"
#include "dcpc/solver.hpp"

namespace dcpc {

// Hankel blocks of one offline data record, partitioned into past/future, plus
// the Gaussian summary of the depth-T_ini input-output windows that act as
// surrogate states. The output Hankel is one block deeper than the input one
// (the cost carries a terminal output), both truncated to a common column
// count n_c = T + 1 - T_ini - N.
struct DeePCData {
    Eigen::MatrixXd U_p;  // (T_ini r_u) x n_c
    Eigen::MatrixXd Y_p;  // (T_ini r_y) x n_c
    Eigen::MatrixXd U_f;  // (N r_u) x n_c
    Eigen::MatrixXd Y_f;  // ((N+1) r_y) x n_c
    GaussianSummary surrogate_summary;  // dimension (r_u + r_y) T_ini
    int T_ini = 0;
    int N = 0;
    int r_u = 0;
    int r_y = 0;

    Eigen::Index cols() const { return U_p.cols(); }
};

// u_record / y_record hold the T+1 samples as columns. epsilon <= 0 selects
// the default ridge 1e-6 * trace / dim.
DeePCData build_deepc_data(const Eigen::MatrixXd& u_record, const Eigen::MatrixXd& y_record,
                           int T_ini, int N, double epsilon = 0.0);

struct DeePCConfig {
    Eigen::MatrixXd Q_y;  // output cost, PSD
    Eigen::MatrixXd R;    // input cost, PD
    double lambda_g = 1.0;
    double lambda_rho = 1.0;
    double gamma = 0.0;
    RegularizerKind regularizer = RegularizerKind::Quadratic;
    double confidence = 0.95;
    PolyhedralSet input_set;   // U, applied at k = 0..N-1
    PolyhedralSet output_set;  // Y, applied at k = 0..N
    SolveSettings solver;

    void validate(int r_u, int r_y) const;
};

// Ring buffers of the most recent T_ini input-output pairs.
class IniWindow {
  public:
    IniWindow(int T_ini, int r_u, int r_y) : T_ini_(T_ini), r_u_(r_u), r_y_(r_y) {}

    bool warmed_up() const { return static_cast<int>(inputs_.size()) == T_ini_; }
    int size() const { return static_cast<int>(inputs_.size()); }
    void push(const Eigen::VectorXd& u, const Eigen::VectorXd& y);

    // col(u_{-T_ini}, ..., u_{-1}); requires a warmed-up window.
    Eigen::VectorXd u_ini() const;
    Eigen::VectorXd y_ini() const;

  private:
    int T_ini_, r_u_, r_y_;
    std::deque<Eigen::VectorXd> inputs_, outputs_;
};

// 0/1 selector with Psi_k = S_k col(u_ini, y_ini, u, y): the T_ini most recent
// input-output samples ending at step k, inputs stacked before outputs.
Eigen::MatrixXd psi_map(int k, int T_ini, int N, int r_u, int r_y);

// Precomputed horizon problem; only the pieces touched by (u_ini, y_ini) are
// rebuilt per step.
class DeePCProblemTemplate {
  public:
    DeePCProblemTemplate(const DeePCData& data, const DeePCConfig& config);

    CompositeProblem instantiate(const Eigen::VectorXd& u_ini,
                                 const Eigen::VectorXd& y_ini) const;

    // mean_k d_M^2(Psi_k(g)) against the surrogate summary
    double mean_window_distance_sq(const Eigen::VectorXd& g, const Eigen::VectorXd& u_ini,
                                   const Eigen::VectorXd& y_ini) const;

  private:
    const DeePCData& data_;
    const DeePCConfig& config_;
    Eigen::MatrixXd P_;                      // quadratic part incl. folded regularizer
    std::vector<Eigen::MatrixXd> psi_maps_;  // G_k, decision part of Psi_k
    std::vector<Eigen::MatrixXd> psi_ini_;   // picks of col(u_ini, y_ini) per k
    std::vector<Eigen::MatrixXd> whitened_maps_;
    double hinge_radius_ = 0.0;
};

CompositeProblem build_deepc_problem(const DeePCData& data, const DeePCConfig& config,
                                     const IniWindow& ini);

// Receding-horizon output-feedback controller. The first T_ini calls apply
// u = 0 to fill the ini window before the optimizer activates.
class DeePCController : public Controller {
  public:
    DeePCController(DeePCData data, DeePCConfig config);

    Eigen::VectorXd step(const Eigen::VectorXd& y) override;
    std::map<std::string, double> last_diagnostics() const override { return diagnostics_; }

    bool warmed_up() const { return window_.warmed_up(); }
    const DeePCData& data() const { return data_; }

  private:
    DeePCData data_;
    DeePCConfig config_;
    DeePCProblemTemplate template_;
    IniWindow window_;
    std::optional<Eigen::VectorXd> warm_start_;
    std::map<std::string, double> diagnostics_;
};

// mean_t d_M^2 of the realized depth-T_ini windows of a closed-loop trajectory
// against a surrogate summary, over steps t < upto (negative: all recorded).
double mean_realized_window_dsq(const Trajectory& traj, const GaussianSummary& summary,
                                int T_ini, int upto = -1);

}  // namespace dcpc
