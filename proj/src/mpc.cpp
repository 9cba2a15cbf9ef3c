#include "dcpc/mpc.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dcpc {

PolyhedralSet PolyhedralSet::box(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
    if (lower.size() != upper.size()) {
        throw std::invalid_argument("PolyhedralSet::box: bound length mismatch");
    }
    const Eigen::Index dim = lower.size();
    std::vector<std::pair<Eigen::RowVectorXd, double>> rows;
    for (Eigen::Index i = 0; i < dim; ++i) {
        if (std::isfinite(upper(i))) {
            Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(dim);
            row(i) = 1.0;
            rows.emplace_back(row, upper(i));
        }
        if (std::isfinite(lower(i))) {
            Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(dim);
            row(i) = -1.0;
            rows.emplace_back(row, -lower(i));
        }
    }
    PolyhedralSet set;
    set.A.resize(static_cast<Eigen::Index>(rows.size()), dim);
    set.b.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        set.A.row(static_cast<Eigen::Index>(i)) = rows[i].first;
        set.b(static_cast<Eigen::Index>(i)) = rows[i].second;
    }
    return set;
}

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

void MPCConfig::validate(int r_x, int r_u) const {
    require(horizon >= 1, "MPCConfig: horizon must be >= 1");
    require(Q.rows() == r_x && Q.cols() == r_x, "MPCConfig: Q must be r_x x r_x");
    require(R.rows() == r_u && R.cols() == r_u, "MPCConfig: R must be r_u x r_u");
    require(min_eigenvalue(Q) >= -1e-10, "MPCConfig: Q must be positive semidefinite");
    require(min_eigenvalue(R) >= 1e-10, "MPCConfig: R must be positive definite");
    require(gamma >= 0.0, "MPCConfig: gamma must be nonnegative");
    require(confidence > 0.0 && confidence < 1.0, "MPCConfig: confidence must lie in (0,1)");
    if (state_set.rows() > 0) require(state_set.A.cols() == r_x, "MPCConfig: state set width");
    if (input_set.rows() > 0) require(input_set.A.cols() == r_u, "MPCConfig: input set width");
    if (terminal_set.rows() > 0) require(terminal_set.A.cols() == r_x, "MPCConfig: terminal set width");
    if (gamma > 0.0) {
        require(data_summary.has_value(), "MPCConfig: gamma > 0 requires a data summary");
        require(data_summary->dim() == r_x + r_u,
                "MPCConfig: data summary must describe stacked (x, u)");
    }
}

CompositeProblem build_mpc_problem(const LinearModel& model, const Eigen::MatrixXd& K,
                                   const Eigen::VectorXd& x0, const MPCConfig& config) {
    const Eigen::Index r_x = model.A.rows();
    const Eigen::Index r_u = model.B.cols();
    require(model.A.cols() == r_x && model.B.rows() == r_x, "build_mpc_problem: bad model dims");
    require(K.rows() == r_u && K.cols() == r_x, "build_mpc_problem: K must be r_u x r_x");
    require(x0.size() == r_x, "build_mpc_problem: x0 dimension mismatch");
    require(x0.allFinite(), "build_mpc_problem: x0 must be finite");
    config.validate(static_cast<int>(r_x), static_cast<int>(r_u));

    const Eigen::MatrixXd A_cl = model.A + model.B * K;
    {
        const double radius = spectral_radius(A_cl);
        if (radius >= 1.0) {
            std::ostringstream msg;
            msg << "build_mpc_problem: K does not stabilize the model (spectral radius "
                << radius << ")";
            throw std::invalid_argument(msg.str());
        }
    }

    const int N = config.horizon;
    const Eigen::Index n = N * (r_u + r_x);
    const auto iu = [&](int k) { return static_cast<Eigen::Index>(k) * r_u; };
    const auto ix = [&](int k) { return N * r_u + static_cast<Eigen::Index>(k - 1) * r_x; };

    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd q = Eigen::VectorXd::Zero(n);
    double c = x0.dot(config.Q * x0);

    // state costs x_k' Q x_k for k = 1..N (terminal weight equals Q)
    for (int k = 1; k <= N; ++k) {
        P.block(ix(k), ix(k), r_x, r_x) += 2.0 * config.Q;
    }
    // input costs with u_k = K x_k + u~_k
    P.block(iu(0), iu(0), r_u, r_u) += 2.0 * config.R;
    q.segment(iu(0), r_u) += 2.0 * config.R * K * x0;
    c += x0.dot(K.transpose() * config.R * K * x0);
    for (int k = 1; k < N; ++k) {
        P.block(iu(k), iu(k), r_u, r_u) += 2.0 * config.R;
        P.block(iu(k), ix(k), r_u, r_x) += 2.0 * config.R * K;
        P.block(ix(k), iu(k), r_x, r_u) += 2.0 * (config.R * K).transpose();
        P.block(ix(k), ix(k), r_x, r_x) += 2.0 * K.transpose() * config.R * K;
    }

    // affine maps z -> (x_k; u_k), k = 0..N-1, for the regularizer
    const Eigen::Index p = r_x + r_u;
    std::vector<Eigen::MatrixXd> maps;
    std::vector<Eigen::VectorXd> offsets;
    if (config.gamma > 0.0) {
        for (int k = 0; k < N; ++k) {
            Eigen::MatrixXd E = Eigen::MatrixXd::Zero(p, n);
            Eigen::VectorXd e = Eigen::VectorXd::Zero(p);
            if (k == 0) {
                e.head(r_x) = x0;
                e.tail(r_u) = K * x0;
                E.block(r_x, iu(0), r_u, r_u) = Eigen::MatrixXd::Identity(r_u, r_u);
            } else {
                E.block(0, ix(k), r_x, r_x) = Eigen::MatrixXd::Identity(r_x, r_x);
                E.block(r_x, ix(k), r_u, r_x) = K;
                E.block(r_x, iu(k), r_u, r_u) = Eigen::MatrixXd::Identity(r_u, r_u);
            }
            maps.push_back(std::move(E));
            offsets.push_back(std::move(e));
        }
        if (config.regularizer == RegularizerKind::Quadratic) {
            const GaussianSummary& summary = *config.data_summary;
            for (int k = 0; k < N; ++k) {
                const Eigen::MatrixXd W = summary.whiten(maps[k]);
                const Eigen::VectorXd d = summary.whiten(offsets[k] - summary.mean());
                P.noalias() += 2.0 * config.gamma * W.transpose() * W;
                q.noalias() += 2.0 * config.gamma * W.transpose() * d;
                c += config.gamma * d.squaredNorm();
            }
        }
    }

    CompositeProblem problem(std::move(P), std::move(q), c);

    if (config.gamma > 0.0 && config.regularizer == RegularizerKind::Hinge) {
        const double radius =
            chi2_confidence_radius(static_cast<int>(p), config.confidence);
        for (int k = 0; k < N; ++k) {
            problem.add_hinge(config.gamma, *config.data_summary, maps[k], offsets[k], radius);
        }
    }

    // dynamics: x_{k+1} = A_cl x_k + B u~_k
    Eigen::MatrixXd A_eq = Eigen::MatrixXd::Zero(N * r_x, n);
    Eigen::VectorXd b_eq = Eigen::VectorXd::Zero(N * r_x);
    for (int k = 0; k < N; ++k) {
        A_eq.block(k * r_x, ix(k + 1), r_x, r_x) = Eigen::MatrixXd::Identity(r_x, r_x);
        A_eq.block(k * r_x, iu(k), r_x, r_u) = -model.B;
        if (k == 0) {
            b_eq.segment(0, r_x) = A_cl * x0;
        } else {
            A_eq.block(k * r_x, ix(k), r_x, r_x) = -A_cl;
        }
    }
    problem.set_equalities(std::move(A_eq), std::move(b_eq));

    // input constraints k = 0..N-1, state constraints k = 1..N-1, terminal at N
    const PolyhedralSet& terminal =
        config.terminal_set.A.size() > 0 || config.terminal_set.b.size() > 0
            ? config.terminal_set
            : config.state_set;
    std::vector<Eigen::RowVectorXd> rows;
    std::vector<double> rhs;
    const auto add_rows = [&](const PolyhedralSet& set, auto&& fill) {
        for (Eigen::Index i = 0; i < set.rows(); ++i) {
            Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n);
            double offset = 0.0;
            fill(set.A.row(i), row, offset);
            rows.push_back(std::move(row));
            rhs.push_back(set.b(i) - offset);
        }
    };
    for (int k = 0; k < N; ++k) {
        add_rows(config.input_set, [&](const auto& a, Eigen::RowVectorXd& row, double& offset) {
            row.segment(iu(k), r_u) = a;
            if (k == 0) {
                offset = a.dot(K * x0);
            } else {
                row.segment(ix(k), r_x) = a * K;
            }
        });
    }
    for (int k = 1; k < N; ++k) {
        add_rows(config.state_set, [&](const auto& a, Eigen::RowVectorXd& row, double&) {
            row.segment(ix(k), r_x) = a;
        });
    }
    add_rows(terminal, [&](const auto& a, Eigen::RowVectorXd& row, double&) {
        row.segment(ix(N), r_x) = a;
    });
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

MPCController::MPCController(LinearModel model, Eigen::MatrixXd K, MPCConfig config)
    : model_(std::move(model)), K_(std::move(K)), config_(std::move(config)) {
    config_.validate(static_cast<int>(model_.A.rows()), static_cast<int>(model_.B.cols()));
    const double radius = spectral_radius(model_.A + model_.B * K_);
    if (radius >= 1.0) {
        throw std::invalid_argument("MPCController: gain does not stabilize the model");
    }
}

Eigen::VectorXd MPCController::step(const Eigen::VectorXd& x) {
    const CompositeProblem problem = build_mpc_problem(model_, K_, x, config_);
    SolveSettings settings = config_.solver;
    settings.initial = warm_start_;
    const SolverResult result = solve(problem, settings);
    if (result.status != SolveStatus::Optimal) {
        std::ostringstream msg;
        msg << "mpc solve did not converge (status " << to_string(result.status)
            << ", primal " << result.primal_residual << ", dual " << result.dual_residual << ")";
        throw std::runtime_error(msg.str());
    }
    warm_start_ = result.solution;

    const Eigen::Index r_u = model_.B.cols();
    const Eigen::VectorXd u0 = K_ * x + result.solution.head(r_u);

    diagnostics_.clear();
    diagnostics_["objective"] = result.objective;
    diagnostics_["iterations"] = static_cast<double>(result.iterations);
    if (config_.data_summary) {
        const int N = config_.horizon;
        const Eigen::Index r_x = model_.A.rows();
        double total = 0.0;
        Eigen::VectorXd xu(r_x + r_u);
        for (int k = 0; k < N; ++k) {
            const Eigen::VectorXd xk =
                k == 0 ? x
                       : result.solution.segment(N * r_u + (k - 1) * r_x, r_x).eval();
            xu.head(r_x) = xk;
            xu.tail(r_u) = K_ * xk + result.solution.segment(k * r_u, r_u);
            total += config_.data_summary->mahalanobis_sq(xu);
        }
        diagnostics_["mean_xu_dsq"] = total / config_.horizon;
    }
    return u0;
}

}  // namespace dcpc
