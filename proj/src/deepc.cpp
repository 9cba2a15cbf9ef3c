#include "dcpc/deepc.hpp"

#include <sstream>
#include <stdexcept>

namespace dcpc {

namespace {

void require(bool cond, const std::string& message) {
    if (!cond) throw std::invalid_argument(message);
}

double min_eigenvalue(const Eigen::MatrixXd& sym) {
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym, Eigen::EigenvaluesOnly)
        .eigenvalues()
        .minCoeff();
}

}  // namespace

DeePCData build_deepc_data(const Eigen::MatrixXd& u_record, const Eigen::MatrixXd& y_record,
                           int T_ini, int N, double epsilon) {
    require(T_ini >= 1, "build_deepc_data: T_ini must be >= 1");
    require(N >= 1, "build_deepc_data: N must be >= 1");
    require(u_record.cols() == y_record.cols(),
            "build_deepc_data: input and output records must have the same length");
    const Eigen::Index samples = u_record.cols();  // T + 1
    if (samples < T_ini + N + 1) {
        std::ostringstream msg;
        msg << "build_deepc_data: need at least T_ini + N + 1 = " << (T_ini + N + 1)
            << " samples, got " << samples;
        throw std::invalid_argument(msg.str());
    }

    const int r_u = static_cast<int>(u_record.rows());
    const int r_y = static_cast<int>(y_record.rows());

    const HankelBlock hu = hankel(T_ini + N, u_record);
    const HankelBlock hy = hankel(T_ini + N + 1, y_record);
    const Eigen::Index n_c = hy.cols();  // common column count

    // Surrogate states: depth-T_ini windows with a successor sample, i.e. the
    // first T + 1 - T_ini columns of the depth-T_ini Hankels, inputs stacked
    // over outputs. Normalization is the column count by construction.
    const Eigen::Index n_windows = samples - T_ini;
    Eigen::MatrixXd stacked(T_ini * (r_u + r_y), n_windows);
    stacked.topRows(T_ini * r_u) = hankel(T_ini, u_record).data.leftCols(n_windows);
    stacked.bottomRows(T_ini * r_y) = hankel(T_ini, y_record).data.leftCols(n_windows);

    return DeePCData{
        hu.data.topLeftCorner(T_ini * r_u, n_c),
        hy.data.topLeftCorner(T_ini * r_y, n_c),
        hu.data.block(T_ini * r_u, 0, N * r_u, n_c),
        hy.data.block(T_ini * r_y, 0, (N + 1) * r_y, n_c),
        epsilon > 0.0 ? empirical_summary(stacked, epsilon)
                      : empirical_summary_auto_ridge(stacked, 1e-6),
        T_ini,
        N,
        r_u,
        r_y,
    };
}

void DeePCConfig::validate(int r_u, int r_y) const {
    require(Q_y.rows() == r_y && Q_y.cols() == r_y, "DeePCConfig: Q_y must be r_y x r_y");
    require(R.rows() == r_u && R.cols() == r_u, "DeePCConfig: R must be r_u x r_u");
    require(min_eigenvalue(Q_y) >= -1e-10, "DeePCConfig: Q_y must be positive semidefinite");
    require(min_eigenvalue(R) >= 1e-10, "DeePCConfig: R must be positive definite");
    require(lambda_g >= 0.0, "DeePCConfig: lambda_g must be nonnegative");
    require(lambda_rho >= 0.0, "DeePCConfig: lambda_rho must be nonnegative");
    require(gamma >= 0.0, "DeePCConfig: gamma must be nonnegative");
    require(confidence > 0.0 && confidence < 1.0, "DeePCConfig: confidence must lie in (0,1)");
    if (input_set.rows() > 0) require(input_set.A.cols() == r_u, "DeePCConfig: input set width");
    if (output_set.rows() > 0) require(output_set.A.cols() == r_y, "DeePCConfig: output set width");
}

void IniWindow::push(const Eigen::VectorXd& u, const Eigen::VectorXd& y) {
    require(u.size() == r_u_ && y.size() == r_y_, "IniWindow::push: dimension mismatch");
    inputs_.push_back(u);
    outputs_.push_back(y);
    if (static_cast<int>(inputs_.size()) > T_ini_) {
        inputs_.pop_front();
        outputs_.pop_front();
    }
}

Eigen::VectorXd IniWindow::u_ini() const {
    require(warmed_up(), "IniWindow: not warmed up");
    Eigen::VectorXd out(T_ini_ * r_u_);
    for (int i = 0; i < T_ini_; ++i) out.segment(i * r_u_, r_u_) = inputs_[i];
    return out;
}

Eigen::VectorXd IniWindow::y_ini() const {
    require(warmed_up(), "IniWindow: not warmed up");
    Eigen::VectorXd out(T_ini_ * r_y_);
    for (int i = 0; i < T_ini_; ++i) out.segment(i * r_y_, r_y_) = outputs_[i];
    return out;
}

Eigen::MatrixXd psi_map(int k, int T_ini, int N, int r_u, int r_y) {
    require(k >= 0 && k < N, "psi_map: k must lie in 0..N-1");
    const Eigen::Index p = static_cast<Eigen::Index>(T_ini) * (r_u + r_y);
    const Eigen::Index length =
        static_cast<Eigen::Index>(T_ini) * (r_u + r_y) + N * r_u + (N + 1) * r_y;
    const Eigen::Index u_decision0 = static_cast<Eigen::Index>(T_ini) * (r_u + r_y);
    const Eigen::Index y_decision0 = u_decision0 + static_cast<Eigen::Index>(N) * r_u;

    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(p, length);
    for (int i = 0; i < T_ini; ++i) {
        const int t = k - T_ini + 1 + i;
        // u_t rows
        const Eigen::Index u_row = static_cast<Eigen::Index>(i) * r_u;
        const Eigen::Index u_src = t < 0
                                       ? static_cast<Eigen::Index>(T_ini + t) * r_u
                                       : u_decision0 + static_cast<Eigen::Index>(t) * r_u;
        S.block(u_row, u_src, r_u, r_u).setIdentity();
        // y_t rows
        const Eigen::Index y_row = static_cast<Eigen::Index>(T_ini) * r_u +
                                   static_cast<Eigen::Index>(i) * r_y;
        const Eigen::Index y_src =
            t < 0 ? static_cast<Eigen::Index>(T_ini) * r_u +
                        static_cast<Eigen::Index>(T_ini + t) * r_y
                  : y_decision0 + static_cast<Eigen::Index>(t) * r_y;
        S.block(y_row, y_src, r_y, r_y).setIdentity();
    }
    return S;
}

DeePCProblemTemplate::DeePCProblemTemplate(const DeePCData& data, const DeePCConfig& config)
    : data_(data), config_(config) {
    config_.validate(data.r_u, data.r_y);
    const Eigen::Index n = data.cols();
    const int N = data.N;
    const int T_ini = data.T_ini;
    const int r_u = data.r_u;
    const int r_y = data.r_y;

    // quadratic cost: sum_{k=0}^{N} y_k' Q_y y_k + sum_{k=0}^{N-1} u_k' R u_k
    P_ = Eigen::MatrixXd::Zero(n, n);
    for (int k = 0; k <= N; ++k) {
        const auto yk = data.Y_f.middleRows(k * r_y, r_y);
        P_.noalias() += 2.0 * yk.transpose() * config.Q_y * yk;
    }
    for (int k = 0; k < N; ++k) {
        const auto uk = data.U_f.middleRows(k * r_u, r_u);
        P_.noalias() += 2.0 * uk.transpose() * config.R * uk;
    }

    if (config.gamma > 0.0) {
        // Psi_k = G_k g + S_ini_k col(u_ini, y_ini)
        const Eigen::Index ini_len = static_cast<Eigen::Index>(T_ini) * (r_u + r_y);
        Eigen::MatrixXd W(ini_len + static_cast<Eigen::Index>(N) * r_u +
                              static_cast<Eigen::Index>(N + 1) * r_y,
                          n);
        W.topRows(ini_len).setZero();
        W.middleRows(ini_len, N * r_u) = data.U_f;
        W.bottomRows((N + 1) * r_y) = data.Y_f;
        for (int k = 0; k < N; ++k) {
            const Eigen::MatrixXd S = psi_map(k, T_ini, N, r_u, r_y);
            psi_maps_.push_back(S * W);
            psi_ini_.push_back(S.leftCols(ini_len));
            whitened_maps_.push_back(data.surrogate_summary.whiten(psi_maps_.back()));
        }
        if (config.regularizer == RegularizerKind::Quadratic) {
            for (int k = 0; k < N; ++k) {
                P_.noalias() += 2.0 * config.gamma * whitened_maps_[k].transpose() *
                                whitened_maps_[k];
            }
        } else {
            hinge_radius_ = chi2_confidence_radius(
                static_cast<int>(data.surrogate_summary.dim()), config.confidence);
        }
    }
}

CompositeProblem DeePCProblemTemplate::instantiate(const Eigen::VectorXd& u_ini,
                                                   const Eigen::VectorXd& y_ini) const {
    const Eigen::Index n = data_.cols();
    require(u_ini.size() == static_cast<Eigen::Index>(data_.T_ini) * data_.r_u,
            "DeePCProblemTemplate: u_ini length mismatch");
    require(y_ini.size() == static_cast<Eigen::Index>(data_.T_ini) * data_.r_y,
            "DeePCProblemTemplate: y_ini length mismatch");

    Eigen::VectorXd q = Eigen::VectorXd::Zero(n);
    double c = 0.0;

    Eigen::VectorXd ini(u_ini.size() + y_ini.size());
    ini << u_ini, y_ini;

    std::vector<Eigen::VectorXd> offsets;
    if (config_.gamma > 0.0) {
        const GaussianSummary& summary = data_.surrogate_summary;
        for (std::size_t k = 0; k < psi_maps_.size(); ++k) {
            offsets.push_back(psi_ini_[k] * ini);
            if (config_.regularizer == RegularizerKind::Quadratic) {
                const Eigen::VectorXd d = summary.whiten(offsets.back() - summary.mean());
                q.noalias() += 2.0 * config_.gamma * whitened_maps_[k].transpose() * d;
                c += config_.gamma * d.squaredNorm();
            }
        }
    }

    CompositeProblem problem(P_, std::move(q), c);
    if (config_.gamma > 0.0 && config_.regularizer == RegularizerKind::Hinge) {
        for (std::size_t k = 0; k < psi_maps_.size(); ++k) {
            problem.add_hinge(config_.gamma, data_.surrogate_summary, psi_maps_[k],
                              offsets[k], hinge_radius_);
        }
    }

    if (config_.lambda_g > 0.0) {
        problem.add_l1(config_.lambda_g, Eigen::MatrixXd::Identity(n, n),
                       Eigen::VectorXd::Zero(n));
    }
    if (config_.lambda_rho > 0.0) {
        problem.add_l1(config_.lambda_rho, data_.Y_p, -y_ini);
    }
    problem.set_equalities(data_.U_p, u_ini);

    std::vector<Eigen::RowVectorXd> rows;
    std::vector<double> rhs;
    for (int k = 0; k < data_.N && config_.input_set.rows() > 0; ++k) {
        const auto uk = data_.U_f.middleRows(k * data_.r_u, data_.r_u);
        for (Eigen::Index i = 0; i < config_.input_set.rows(); ++i) {
            rows.emplace_back(config_.input_set.A.row(i) * uk);
            rhs.push_back(config_.input_set.b(i));
        }
    }
    for (int k = 0; k <= data_.N && config_.output_set.rows() > 0; ++k) {
        const auto yk = data_.Y_f.middleRows(k * data_.r_y, data_.r_y);
        for (Eigen::Index i = 0; i < config_.output_set.rows(); ++i) {
            rows.emplace_back(config_.output_set.A.row(i) * yk);
            rhs.push_back(config_.output_set.b(i));
        }
    }
    if (!rows.empty()) {
        Eigen::MatrixXd A_in(static_cast<Eigen::Index>(rows.size()), n);
        Eigen::VectorXd b_in(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            A_in.row(static_cast<Eigen::Index>(i)) = rows[i];
            b_in(static_cast<Eigen::Index>(i)) = rhs[i];
        }
        problem.set_inequalities(std::move(A_in), std::move(b_in));
    }
    return problem;
}

double DeePCProblemTemplate::mean_window_distance_sq(const Eigen::VectorXd& g,
                                                     const Eigen::VectorXd& u_ini,
                                                     const Eigen::VectorXd& y_ini) const {
    const int N = data_.N;
    Eigen::VectorXd ini(u_ini.size() + y_ini.size());
    ini << u_ini, y_ini;
    const Eigen::Index ini_len = ini.size();
    double total = 0.0;
    for (int k = 0; k < N; ++k) {
        const Eigen::MatrixXd S = psi_map(k, data_.T_ini, N, data_.r_u, data_.r_y);
        Eigen::VectorXd stacked(ini_len + data_.U_f.rows() + data_.Y_f.rows());
        stacked << ini, data_.U_f * g, data_.Y_f * g;
        total += data_.surrogate_summary.mahalanobis_sq(S * stacked);
    }
    return total / N;
}

CompositeProblem build_deepc_problem(const DeePCData& data, const DeePCConfig& config,
                                     const IniWindow& ini) {
    require(ini.warmed_up(), "build_deepc_problem: ini window is not warmed up");
    return DeePCProblemTemplate(data, config).instantiate(ini.u_ini(), ini.y_ini());
}

DeePCController::DeePCController(DeePCData data, DeePCConfig config)
    : data_(std::move(data)),
      config_(std::move(config)),
      template_(data_, config_),
      window_(data_.T_ini, data_.r_u, data_.r_y) {}

Eigen::VectorXd DeePCController::step(const Eigen::VectorXd& y) {
    require(y.size() == data_.r_y, "DeePCController::step: measurement dimension mismatch");
    diagnostics_.clear();

    if (!window_.warmed_up()) {
        const Eigen::VectorXd u = Eigen::VectorXd::Zero(data_.r_u);
        window_.push(u, y);
        return u;
    }

    const Eigen::VectorXd u_ini = window_.u_ini();
    const Eigen::VectorXd y_ini = window_.y_ini();
    const CompositeProblem problem = template_.instantiate(u_ini, y_ini);
    SolveSettings settings = config_.solver;
    settings.initial = warm_start_;
    const SolverResult result = solve(problem, settings);
    if (result.status != SolveStatus::Optimal) {
        std::ostringstream msg;
        msg << "deepc solve did not converge (status " << to_string(result.status)
            << ", primal " << result.primal_residual << ", dual " << result.dual_residual
            << ")";
        throw std::runtime_error(msg.str());
    }
    warm_start_ = result.solution;

    const Eigen::VectorXd u0 = (data_.U_f * result.solution).head(data_.r_u);

    diagnostics_["objective"] = result.objective;
    diagnostics_["iterations"] = static_cast<double>(result.iterations);
    diagnostics_["rho_l1"] = (data_.Y_p * result.solution - y_ini).lpNorm<1>();
    diagnostics_["mean_psi_dsq"] =
        template_.mean_window_distance_sq(result.solution, u_ini, y_ini);

    window_.push(u0, y);
    return u0;
}

double mean_realized_window_dsq(const Trajectory& traj, const GaussianSummary& summary,
                                int T_ini, int upto) {
    const int r_u = static_cast<int>(traj.inputs.rows());
    const int r_y = static_cast<int>(traj.outputs.rows());
    require(summary.dim() == static_cast<Eigen::Index>(T_ini) * (r_u + r_y),
            "mean_realized_window_dsq: summary dimension mismatch");
    Eigen::Index last = traj.inputs.cols();
    if (upto >= 0) last = std::min<Eigen::Index>(last, upto);

    double total = 0.0;
    int count = 0;
    Eigen::VectorXd window(summary.dim());
    for (Eigen::Index t = T_ini - 1; t < last; ++t) {
        for (int i = 0; i < T_ini; ++i) {
            window.segment(i * r_u, r_u) = traj.inputs.col(t - T_ini + 1 + i);
            window.segment(T_ini * r_u + i * r_y, r_y) = traj.outputs.col(t - T_ini + 1 + i);
        }
        total += summary.mahalanobis_sq(window);
        ++count;
    }
    return count > 0 ? total / count : 0.0;
}

}  // namespace dcpc
