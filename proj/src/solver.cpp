#include "dcpc/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace dcpc {

namespace {

void require(bool cond, const std::string& message) {
    if (!cond) throw std::invalid_argument(message);
}

nlohmann::json matrix_rows(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

nlohmann::json vector_entries(const Eigen::VectorXd& v) {
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

double largest_eigenvalue(const Eigen::MatrixXd& sym) {
    // Deterministic power iteration; enough accuracy for step-size bounds.
    if (sym.rows() == 0) return 0.0;
    Eigen::VectorXd v = Eigen::VectorXd::Ones(sym.rows()).normalized();
    double lambda = 0.0;
    for (int it = 0; it < 100; ++it) {
        Eigen::VectorXd next = sym * v;
        const double norm = next.norm();
        if (norm == 0.0) return 0.0;
        next /= norm;
        const double estimate = next.dot(sym * next);
        if (std::abs(estimate - lambda) < 1e-10 * std::max(1.0, std::abs(estimate))) {
            return estimate;
        }
        lambda = estimate;
        v = next;
    }
    return lambda;
}

}  // namespace

CompositeProblem::CompositeProblem(Eigen::MatrixXd P, Eigen::VectorXd q, double constant)
    : P_(std::move(P)), q_(std::move(q)), c_(constant) {
    require(P_.rows() == P_.cols(), "CompositeProblem: P must be square");
    require(P_.rows() == q_.size(), "CompositeProblem: P/q dimension mismatch");

    if (P_.size() > 0) {
        const double scale = P_.cwiseAbs().maxCoeff();
        const double asym = (P_ - P_.transpose()).cwiseAbs().maxCoeff();
        require(asym <= 1e-12 * std::max(1.0, scale), "CompositeProblem: P is not symmetric");
        P_ = 0.5 * (P_ + P_.transpose()).eval();

        const double shift = 1e-10 * std::max(1.0, scale);
        Eigen::LLT<Eigen::MatrixXd> llt(
            (P_ + shift * Eigen::MatrixXd::Identity(P_.rows(), P_.cols())).eval());
        if (llt.info() != Eigen::Success) {
            const double min_eig =
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(P_, Eigen::EigenvaluesOnly)
                    .eigenvalues()
                    .minCoeff();
            if (min_eig < -shift) {
                std::ostringstream msg;
                msg << "CompositeProblem: P is not positive semidefinite (min eigenvalue "
                    << min_eig << ")";
                throw std::invalid_argument(msg.str());
            }
        }
    }
}

void CompositeProblem::add_l1(double weight, Eigen::MatrixXd map, Eigen::VectorXd offset) {
    require(weight >= 0.0, "CompositeProblem::add_l1: weight must be nonnegative");
    require(map.cols() == dim(), "CompositeProblem::add_l1: map width mismatch");
    require(map.rows() == offset.size(), "CompositeProblem::add_l1: map/offset mismatch");
    l1_.push_back({weight, std::move(map), std::move(offset)});
}

void CompositeProblem::add_hinge(double weight, GaussianSummary summary, Eigen::MatrixXd map,
                                 Eigen::VectorXd offset, double radius) {
    require(weight >= 0.0, "CompositeProblem::add_hinge: weight must be nonnegative");
    require(radius >= 0.0, "CompositeProblem::add_hinge: radius must be nonnegative");
    require(map.cols() == dim(), "CompositeProblem::add_hinge: map width mismatch");
    require(map.rows() == offset.size(), "CompositeProblem::add_hinge: map/offset mismatch");
    require(map.rows() == summary.dim(), "CompositeProblem::add_hinge: summary dimension mismatch");
    hinges_.push_back({weight, std::move(summary), std::move(map), std::move(offset), radius});
}

void CompositeProblem::set_equalities(Eigen::MatrixXd A, Eigen::VectorXd b) {
    require(A.cols() == dim(), "CompositeProblem::set_equalities: matrix width mismatch");
    require(A.rows() == b.size(), "CompositeProblem::set_equalities: rhs length mismatch");
    A_eq_ = std::move(A);
    b_eq_ = std::move(b);
}

void CompositeProblem::set_inequalities(Eigen::MatrixXd A, Eigen::VectorXd b) {
    require(A.cols() == dim(), "CompositeProblem::set_inequalities: matrix width mismatch");
    require(A.rows() == b.size(), "CompositeProblem::set_inequalities: rhs length mismatch");
    A_in_ = std::move(A);
    b_in_ = std::move(b);
}

double CompositeProblem::objective(const Eigen::VectorXd& z) const {
    require(z.size() == dim(), "CompositeProblem::objective: dimension mismatch");
    double value = c_ + 0.5 * z.dot(P_ * z) + q_.dot(z);
    for (const auto& term : l1_) {
        value += term.weight * (term.map * z + term.offset).lpNorm<1>();
    }
    for (const auto& term : hinges_) {
        value += term.weight *
                 hinge_penalty(term.summary.mahalanobis_sq(term.map * z + term.offset),
                               term.radius);
    }
    return value;
}

nlohmann::json CompositeProblem::to_debug_json() const {
    nlohmann::json j;
    j["dim"] = dim();
    j["quadratic"] = {{"P", matrix_rows(P_)}, {"q", vector_entries(q_)}, {"c", c_}};
    j["l1_terms"] = nlohmann::json::array();
    for (const auto& t : l1_) {
        j["l1_terms"].push_back(
            {{"weight", t.weight}, {"map", matrix_rows(t.map)}, {"offset", vector_entries(t.offset)}});
    }
    j["hinge_terms"] = nlohmann::json::array();
    for (const auto& t : hinges_) {
        j["hinge_terms"].push_back({{"weight", t.weight},
                                    {"mean", vector_entries(t.summary.mean())},
                                    {"covariance", matrix_rows(t.summary.covariance())},
                                    {"map", matrix_rows(t.map)},
                                    {"offset", vector_entries(t.offset)},
                                    {"radius", t.radius}});
    }
    j["equalities"] = {{"A", matrix_rows(A_eq_)}, {"b", vector_entries(b_eq_)}};
    j["inequalities"] = {{"A", matrix_rows(A_in_)}, {"b", vector_entries(b_in_)}};
    return j;
}

std::string to_string(SolveStatus status) {
    switch (status) {
        case SolveStatus::Optimal: return "optimal";
        case SolveStatus::MaxIterations: return "max_iter";
        case SolveStatus::InfeasibleDetected: return "infeasible_detected";
    }
    return "unknown";
}

namespace {

// Whitened hinge data: d_M^2(map z + offset) = ||W z + c||^2.
struct HingeData {
    double weight;
    Eigen::MatrixXd W;
    Eigen::VectorXd c;
    Eigen::MatrixXd curvature;       // 2 * weight * W'W
    Eigen::VectorXd linear;          // 2 * weight * W'c
    double radius;

    double value(const Eigen::VectorXd& z) const { return (W * z + c).squaredNorm(); }
    bool active(const Eigen::VectorXd& z) const { return value(z) > radius; }
};

std::vector<HingeData> whiten_hinges(const CompositeProblem& prob) {
    std::vector<HingeData> out;
    out.reserve(prob.hinge_terms().size());
    for (const auto& t : prob.hinge_terms()) {
        HingeData h;
        h.weight = t.weight;
        h.W = t.summary.whiten(t.map);
        h.c = t.summary.whiten(t.offset - t.summary.mean());
        h.curvature = 2.0 * t.weight * h.W.transpose() * h.W;
        h.linear = 2.0 * t.weight * h.W.transpose() * h.c;
        h.radius = t.radius;
        out.push_back(std::move(h));
    }
    return out;
}

// Gradient of the hinge part under the one-sided convention: zero inside the
// confidence set, the quadratic's gradient outside.
Eigen::VectorXd hinge_gradient(const std::vector<HingeData>& hinges, const Eigen::VectorXd& z) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(z.size());
    for (const auto& h : hinges) {
        const Eigen::VectorXd r = h.W * z + h.c;
        if (r.squaredNorm() > h.radius) {
            g.noalias() += 2.0 * h.weight * (h.W.transpose() * r);
        }
    }
    return g;
}

double hinge_value(const std::vector<HingeData>& hinges, const Eigen::VectorXd& z) {
    double v = 0.0;
    for (const auto& h : hinges) {
        v += h.weight * std::max(0.0, h.value(z) - h.radius);
    }
    return v;
}

enum class BlockKind { L1, Equality, Inequality };

struct Block {
    BlockKind kind;
    Eigen::Index row0;
    Eigen::Index rows;
    double weight;           // l1 weight
    Eigen::VectorXd offset;  // l1 offset or constraint rhs
    double rho_ratio;        // per-block penalty multiplier
};

// min 1/2 ||r0 + F w||^2 over lo <= w <= hi. Projected FISTA to identify the
// bound pattern, then an exact least-squares refinement on the free subspace.
// Deterministic; used only to certify residuals.
Eigen::VectorXd bounded_least_squares(const Eigen::VectorXd& r0, const Eigen::MatrixXd& F,
                                      const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
    const Eigen::Index nw = F.cols();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(nw).cwiseMax(lo).cwiseMin(hi);
    if (nw == 0) return w;

    const Eigen::MatrixXd G = F.transpose() * F;
    const Eigen::VectorXd b = F.transpose() * r0;
    const double lip = 1.1 * largest_eigenvalue(G);
    if (lip <= 0.0) return w;
    const double step = 1.0 / lip;

    Eigen::VectorXd momentum = w;
    double t = 1.0;
    for (int it = 0; it < 500; ++it) {
        const Eigen::VectorXd grad = b + G * momentum;
        Eigen::VectorXd next = (momentum - step * grad).cwiseMax(lo).cwiseMin(hi);
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        momentum = next + ((t - 1.0) / t_next) * (next - w);
        const double change = (next - w).cwiseAbs().maxCoeff();
        w = std::move(next);
        t = t_next;
        if (change < 1e-13 * std::max(1.0, w.cwiseAbs().maxCoeff())) break;
    }

    // Subspace refinement: pin coordinates sitting on a bound whose gradient
    // points outward, solve the rest exactly, clamp, repeat a few times.
    Eigen::VectorXd refined = w;
    for (int pass = 0; pass < 4; ++pass) {
        const Eigen::VectorXd grad = b + G * refined;
        std::vector<Eigen::Index> free;
        for (Eigen::Index j = 0; j < nw; ++j) {
            const double span = std::max(1.0, std::abs(refined(j)));
            const bool at_lo = refined(j) - lo(j) <= 1e-11 * span;
            const bool at_hi = hi(j) - refined(j) <= 1e-11 * span;
            if ((at_lo && grad(j) > 0.0) || (at_hi && grad(j) < 0.0)) continue;
            free.push_back(j);
        }
        if (free.empty()) break;
        Eigen::MatrixXd Ff(F.rows(), static_cast<Eigen::Index>(free.size()));
        Eigen::VectorXd fixed_part = r0;
        for (Eigen::Index j = 0, k = 0; j < nw; ++j) {
            if (k < static_cast<Eigen::Index>(free.size()) && free[static_cast<std::size_t>(k)] == j) {
                Ff.col(k++) = F.col(j);
            } else {
                fixed_part.noalias() += refined(j) * F.col(j);
            }
        }
        const Eigen::VectorXd wf =
            Ff.colPivHouseholderQr().solve(-fixed_part).cwiseMax(
                [&] {
                    Eigen::VectorXd l(free.size());
                    for (std::size_t k = 0; k < free.size(); ++k) l(static_cast<Eigen::Index>(k)) = lo(free[k]);
                    return l;
                }())
                .cwiseMin([&] {
                    Eigen::VectorXd h(free.size());
                    for (std::size_t k = 0; k < free.size(); ++k) h(static_cast<Eigen::Index>(k)) = hi(free[k]);
                    return h;
                }());
        bool changed = false;
        for (std::size_t k = 0; k < free.size(); ++k) {
            if (refined(free[k]) != wf(static_cast<Eigen::Index>(k))) changed = true;
            refined(free[k]) = wf(static_cast<Eigen::Index>(k));
        }
        if (!changed) break;
    }
    if ((r0 + F * refined).squaredNorm() < (r0 + F * w).squaredNorm()) w = refined;
    return w;
}

// Tolerance for identifying zero l1 components / binding inequalities.
double activity_tolerance(double magnitude) { return 1e-6 * std::max(1.0, magnitude); }

}  // namespace

KktResiduals kkt_residuals(const CompositeProblem& prob, const Eigen::VectorXd& z) {
    require(z.size() == prob.dim(), "kkt_residuals: candidate dimension mismatch");
    const Eigen::Index n = prob.dim();
    const std::vector<HingeData> hinges = whiten_hinges(prob);

    Eigen::VectorXd r0 = prob.quadratic() * z + prob.linear();

    std::vector<Eigen::VectorXd> columns;
    std::vector<double> lo, hi;

    // Hinge terms: fixed gradient when strictly outside, nothing inside, and a
    // [0,1]-weighted gradient direction within a band around the boundary.
    for (const auto& h : hinges) {
        const Eigen::VectorXd r = h.W * z + h.c;
        const double val = r.squaredNorm();
        const double band = 1e-7 * std::max(1.0, h.radius);
        if (val > h.radius + band) {
            r0.noalias() += 2.0 * h.weight * (h.W.transpose() * r);
        } else if (val >= h.radius - band) {
            columns.push_back(2.0 * h.weight * (h.W.transpose() * r));
            lo.push_back(0.0);
            hi.push_back(1.0);
        }
    }

    for (const auto& term : prob.l1_terms()) {
        const Eigen::VectorXd t = term.map * z + term.offset;
        const double eps = activity_tolerance(t.size() > 0 ? t.cwiseAbs().maxCoeff() : 0.0);
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            if (std::abs(t(i)) > eps) {
                r0.noalias() +=
                    term.weight * (t(i) > 0 ? 1.0 : -1.0) * term.map.row(i).transpose();
            } else {
                columns.push_back(term.map.row(i).transpose());
                lo.push_back(-term.weight);
                hi.push_back(term.weight);
            }
        }
    }

    KktResiduals res;

    const Eigen::MatrixXd& A_eq = prob.eq_matrix();
    if (A_eq.rows() > 0) {
        const Eigen::VectorXd gap = A_eq * z - prob.eq_rhs();
        res.primal = std::max(res.primal, gap.cwiseAbs().maxCoeff());
        for (Eigen::Index i = 0; i < A_eq.rows(); ++i) {
            columns.push_back(A_eq.row(i).transpose());
            lo.push_back(-1e300);
            hi.push_back(1e300);
        }
    }

    std::vector<Eigen::Index> active_rows;
    const Eigen::MatrixXd& A_in = prob.ineq_matrix();
    Eigen::VectorXd slack;
    if (A_in.rows() > 0) {
        slack = prob.ineq_rhs() - A_in * z;
        res.primal = std::max(res.primal, std::max(0.0, -slack.minCoeff()));
        const double eps = activity_tolerance(slack.cwiseAbs().maxCoeff());
        for (Eigen::Index i = 0; i < A_in.rows(); ++i) {
            if (slack(i) <= eps) {
                active_rows.push_back(i);
                columns.push_back(A_in.row(i).transpose());
                lo.push_back(0.0);
                hi.push_back(1e300);
            }
        }
    }

    Eigen::MatrixXd F(n, static_cast<Eigen::Index>(columns.size()));
    Eigen::VectorXd lo_v(F.cols()), hi_v(F.cols());
    for (Eigen::Index j = 0; j < F.cols(); ++j) {
        F.col(j) = columns[static_cast<std::size_t>(j)];
        lo_v(j) = lo[static_cast<std::size_t>(j)];
        hi_v(j) = hi[static_cast<std::size_t>(j)];
    }
    const Eigen::VectorXd w = bounded_least_squares(r0, F, lo_v, hi_v);
    res.stationarity = F.cols() > 0 ? (r0 + F * w).cwiseAbs().maxCoeff()
                                    : (n > 0 ? r0.cwiseAbs().maxCoeff() : 0.0);

    // Complementarity of the estimated multipliers on the active inequalities.
    const Eigen::Index n_active = static_cast<Eigen::Index>(active_rows.size());
    for (Eigen::Index j = 0; j < n_active; ++j) {
        const double mu = w(F.cols() - n_active + j);
        res.complementarity = std::max(
            res.complementarity,
            std::abs(mu * slack(active_rows[static_cast<std::size_t>(j)])));
    }
    return res;
}

namespace {

struct AdmmWorkspace {
    Eigen::MatrixXd B;          // stacked l1 / eq / ineq maps
    Eigen::VectorXd rho_ratio;  // per-row penalty multiplier
    std::vector<Block> blocks;
    Eigen::MatrixXd BtRB;       // B' diag(ratio) B
    double btrb_eig = 0.0;
    std::vector<HingeData> hinges;
    double sigma = 1e-6;
    double lipschitz = 0.0;     // smooth-block gradient bound (power iteration)
};

AdmmWorkspace build_workspace(const CompositeProblem& prob) {
    AdmmWorkspace ws;
    const Eigen::Index n = prob.dim();

    Eigen::Index rows = 0;
    for (const auto& t : prob.l1_terms()) rows += t.map.rows();
    rows += prob.eq_matrix().rows() + prob.ineq_matrix().rows();

    ws.B.resize(rows, n);
    ws.rho_ratio.resize(rows);
    Eigen::Index at = 0;
    for (const auto& t : prob.l1_terms()) {
        ws.B.middleRows(at, t.map.rows()) = t.map;
        ws.rho_ratio.segment(at, t.map.rows()).setOnes();
        ws.blocks.push_back({BlockKind::L1, at, t.map.rows(), t.weight, t.offset, 1.0});
        at += t.map.rows();
    }
    if (prob.eq_matrix().rows() > 0) {
        const Eigen::Index m = prob.eq_matrix().rows();
        ws.B.middleRows(at, m) = prob.eq_matrix();
        ws.rho_ratio.segment(at, m).setConstant(1e3);
        ws.blocks.push_back({BlockKind::Equality, at, m, 0.0, prob.eq_rhs(), 1e3});
        at += m;
    }
    if (prob.ineq_matrix().rows() > 0) {
        const Eigen::Index m = prob.ineq_matrix().rows();
        ws.B.middleRows(at, m) = prob.ineq_matrix();
        ws.rho_ratio.segment(at, m).setOnes();
        ws.blocks.push_back({BlockKind::Inequality, at, m, 0.0, prob.ineq_rhs(), 1.0});
        at += m;
    }

    if (rows > 0) {
        ws.BtRB = ws.B.transpose() * ws.rho_ratio.asDiagonal() * ws.B;
        ws.btrb_eig = largest_eigenvalue(ws.BtRB);
    } else {
        ws.BtRB = Eigen::MatrixXd::Zero(n, n);
    }
    ws.hinges = whiten_hinges(prob);

    ws.lipschitz = largest_eigenvalue(prob.quadratic());
    for (const auto& h : ws.hinges) ws.lipschitz += largest_eigenvalue(h.curvature);
    return ws;
}

// phi(z) = 1/2 z'Pz + q'z + hinge(z) + sigma/2 ||z - z_ref||^2
//        + rho/2 sum ratio_i (B z - target)_i^2
class SmoothBlockObjective {
  public:
    SmoothBlockObjective(const CompositeProblem& prob, const AdmmWorkspace& ws, double rho,
                         const Eigen::VectorXd& z_ref, const Eigen::VectorXd& target)
        : prob_(prob), ws_(ws), rho_(rho), z_ref_(z_ref), target_(target) {}

    double value(const Eigen::VectorXd& z) const {
        return smooth_value(z) + hinge_value(ws_.hinges, z);
    }

    double smooth_value(const Eigen::VectorXd& z) const {
        double v = 0.5 * z.dot(prob_.quadratic() * z) + prob_.linear().dot(z);
        v += 0.5 * ws_.sigma * (z - z_ref_).squaredNorm();
        if (ws_.B.rows() > 0) {
            const Eigen::VectorXd gap = ws_.B * z - target_;
            v += 0.5 * rho_ * gap.dot(ws_.rho_ratio.asDiagonal() * gap);
        }
        return v;
    }

    Eigen::VectorXd smooth_gradient(const Eigen::VectorXd& z) const {
        Eigen::VectorXd g = prob_.quadratic() * z + prob_.linear();
        g.noalias() += ws_.sigma * (z - z_ref_);
        if (ws_.B.rows() > 0) {
            g.noalias() += rho_ * (ws_.B.transpose() *
                                   (ws_.rho_ratio.asDiagonal() * (ws_.B * z - target_)));
        }
        return g;
    }

    Eigen::VectorXd gradient(const Eigen::VectorXd& z) const {
        return smooth_gradient(z) + hinge_gradient(ws_.hinges, z);
    }

    // Curvature of the smooth (non-hinge) part along a direction.
    double smooth_curvature(const Eigen::VectorXd& d) const {
        double a = d.dot(prob_.quadratic() * d) + ws_.sigma * d.squaredNorm();
        if (ws_.B.rows() > 0) {
            const Eigen::VectorXd bd = ws_.B * d;
            a += rho_ * bd.dot(ws_.rho_ratio.asDiagonal() * bd);
        }
        return a;
    }

  private:
    const CompositeProblem& prob_;
    const AdmmWorkspace& ws_;
    double rho_;
    const Eigen::VectorXd& z_ref_;
    const Eigen::VectorXd& target_;
};

// Exact minimization of the piecewise-quadratic phi along z + alpha * d.
// Returns the step; 0 means no decrease is possible along d.
double exact_line_search(const SmoothBlockObjective& phi, const std::vector<HingeData>& hinges,
                         const Eigen::VectorXd& z, const Eigen::VectorXd& d, double alpha_max) {
    // phi(alpha) - phi(0) = B0 a + A0 a^2 + sum_j w_j [max(0,q_j(a)-r_j) - max(0,q_j(0)-r_j)]
    const double A0 = 0.5 * phi.smooth_curvature(d);
    const double B0 = phi.smooth_gradient(z).dot(d);

    struct HingeRay {
        double a, b, c0;  // q_j(alpha) = a alpha^2 + b alpha + c0
        double radius, weight;
        double excess(double alpha) const {
            return std::max(0.0, a * alpha * alpha + b * alpha + c0 - radius);
        }
    };
    std::vector<HingeRay> rays;
    std::vector<double> breakpoints{0.0, alpha_max};
    for (const auto& h : hinges) {
        const Eigen::VectorXd r = h.W * z + h.c;
        const Eigen::VectorXd wd = h.W * d;
        HingeRay ray{wd.squaredNorm(), 2.0 * r.dot(wd), r.squaredNorm(), h.radius, h.weight};
        // boundary crossings q_j(alpha) = radius in (0, alpha_max)
        const double cc = ray.c0 - ray.radius;
        if (std::abs(ray.a) > 1e-300) {
            const double disc = ray.b * ray.b - 4.0 * ray.a * cc;
            if (disc >= 0.0) {
                const double sq = std::sqrt(disc);
                for (const double root : {(-ray.b - sq) / (2.0 * ray.a), (-ray.b + sq) / (2.0 * ray.a)}) {
                    if (root > 0.0 && root < alpha_max) breakpoints.push_back(root);
                }
            }
        } else if (std::abs(ray.b) > 1e-300) {
            const double root = -cc / ray.b;
            if (root > 0.0 && root < alpha_max) breakpoints.push_back(root);
        }
        rays.push_back(ray);
    }
    std::sort(breakpoints.begin(), breakpoints.end());

    const auto delta_phi = [&](double alpha) {
        double v = B0 * alpha + A0 * alpha * alpha;
        for (const auto& ray : rays) v += ray.weight * (ray.excess(alpha) - ray.excess(0.0));
        return v;
    };

    double best_alpha = 0.0;
    double best_value = 0.0;
    const auto consider = [&](double alpha) {
        if (alpha <= 0.0 || alpha > alpha_max) return;
        const double v = delta_phi(alpha);
        if (v < best_value) {
            best_value = v;
            best_alpha = alpha;
        }
    };

    for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
        const double left = breakpoints[i];
        const double right = breakpoints[i + 1];
        if (right - left < 1e-300) continue;
        const double mid = 0.5 * (left + right);
        double A = A0;
        double B = B0;
        for (const auto& ray : rays) {
            if (ray.a * mid * mid + ray.b * mid + ray.c0 > ray.radius) {
                A += ray.weight * ray.a;
                B += ray.weight * ray.b;
            }
        }
        consider(right);
        if (A > 0.0) {
            const double vertex = -B / (2.0 * A);
            if (vertex > left && vertex < right) consider(vertex);
        }
    }
    return best_alpha;
}

// Active-set polish: fixes the identified zero l1 components, binding
// inequalities and strictly active hinges, then solves the reduced KKT system.
bool try_polish(const CompositeProblem& prob, const std::vector<HingeData>& hinges,
                const Eigen::VectorXd& z, Eigen::VectorXd* out) {
    const Eigen::Index n = prob.dim();

    std::vector<Eigen::VectorXd> constraint_rows;
    std::vector<double> constraint_rhs;

    Eigen::MatrixXd H = prob.quadratic();
    Eigen::VectorXd g = prob.linear();

    for (const auto& h : hinges) {
        const double val = h.value(z);
        const double band = 1e-7 * std::max(1.0, h.radius);
        if (val > h.radius + band) {
            H += h.curvature;
            g += h.linear;
        }
    }

    for (const auto& term : prob.l1_terms()) {
        const Eigen::VectorXd t = term.map * z + term.offset;
        const double eps = activity_tolerance(t.size() > 0 ? t.cwiseAbs().maxCoeff() : 0.0);
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            if (std::abs(t(i)) > eps) {
                g.noalias() +=
                    term.weight * (t(i) > 0 ? 1.0 : -1.0) * term.map.row(i).transpose();
            } else {
                constraint_rows.push_back(term.map.row(i).transpose());
                constraint_rhs.push_back(-term.offset(i));
            }
        }
    }
    for (Eigen::Index i = 0; i < prob.eq_matrix().rows(); ++i) {
        constraint_rows.push_back(prob.eq_matrix().row(i).transpose());
        constraint_rhs.push_back(prob.eq_rhs()(i));
    }
    if (prob.ineq_matrix().rows() > 0) {
        const Eigen::VectorXd slack = prob.ineq_rhs() - prob.ineq_matrix() * z;
        const double eps = activity_tolerance(slack.cwiseAbs().maxCoeff());
        for (Eigen::Index i = 0; i < slack.size(); ++i) {
            if (slack(i) <= eps) {
                constraint_rows.push_back(prob.ineq_matrix().row(i).transpose());
                constraint_rhs.push_back(prob.ineq_rhs()(i));
            }
        }
    }

    const Eigen::Index m = static_cast<Eigen::Index>(constraint_rows.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + m, n + m);
    kkt.topLeftCorner(n, n) = H;
    Eigen::VectorXd rhs(n + m);
    rhs.head(n) = -g;
    for (Eigen::Index i = 0; i < m; ++i) {
        kkt.block(0, n + i, n, 1) = constraint_rows[static_cast<std::size_t>(i)];
        kkt.block(n + i, 0, 1, n) = constraint_rows[static_cast<std::size_t>(i)].transpose();
        rhs(n + i) = constraint_rhs[static_cast<std::size_t>(i)];
    }

    Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    const Eigen::VectorXd sol = lu.solve(rhs);
    if (!sol.allFinite()) return false;
    const double scale = std::max(1.0, rhs.cwiseAbs().maxCoeff());
    if ((kkt * sol - rhs).cwiseAbs().maxCoeff() > 1e-9 * scale) return false;
    *out = sol.head(n);
    return true;
}

}  // namespace

SolverResult solve(const CompositeProblem& prob, const SolveSettings& settings) {
    const Eigen::Index n = prob.dim();
    require(settings.max_iter >= 1, "solve: max_iter must be positive");

    Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
    if (settings.initial) {
        require(settings.initial->size() == n, "solve: initial iterate dimension mismatch");
        z = *settings.initial;
    }

    SolverResult result;

    // Infeasibility detection is limited to inconsistent equality systems.
    if (prob.eq_matrix().rows() > 0) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_a(prob.eq_matrix());
        Eigen::MatrixXd augmented(prob.eq_matrix().rows(), n + 1);
        augmented << prob.eq_matrix(), prob.eq_rhs();
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_ab(augmented);
        if (qr_ab.rank() > qr_a.rank()) {
            result.status = SolveStatus::InfeasibleDetected;
            result.solution = z;
            result.objective = prob.objective(z);
            const KktResiduals kkt = kkt_residuals(prob, z);
            result.primal_residual = kkt.primal;
            result.dual_residual = kkt.stationarity;
            result.complementarity = kkt.complementarity;
            return result;
        }
    }

    AdmmWorkspace ws = build_workspace(prob);
    const Eigen::Index rows = ws.B.rows();
    const bool has_hinges = !ws.hinges.empty();
    const double alpha = 1.6;  // over-relaxation

    double rho = 1.0;
    Eigen::VectorXd v = rows > 0 ? (ws.B * z).eval() : Eigen::VectorXd(0);
    for (const auto& block : ws.blocks) {
        if (block.kind == BlockKind::Equality) {
            v.segment(block.row0, block.rows) = block.offset;
        } else if (block.kind == BlockKind::Inequality) {
            v.segment(block.row0, block.rows) =
                v.segment(block.row0, block.rows).cwiseMin(block.offset);
        }
    }
    Eigen::VectorXd u = Eigen::VectorXd::Zero(rows);

    Eigen::LDLT<Eigen::MatrixXd> factor;
    std::vector<bool> factored_active;
    bool factor_valid = false;

    const auto refactor = [&](const std::vector<bool>& active) {
        Eigen::MatrixXd H = prob.quadratic();
        H.diagonal().array() += ws.sigma;
        if (rows > 0) H.noalias() += rho * ws.BtRB;
        for (std::size_t j = 0; j < ws.hinges.size(); ++j) {
            if (active[j]) H += ws.hinges[j].curvature;
        }
        factor.compute(H);
        factored_active = active;
        factor_valid = true;
    };

    const auto current_active = [&](const Eigen::VectorXd& at) {
        std::vector<bool> act(ws.hinges.size());
        for (std::size_t j = 0; j < ws.hinges.size(); ++j) act[j] = ws.hinges[j].active(at);
        return act;
    };

    Eigen::VectorXd z_best = z;
    double best_score = std::numeric_limits<double>::infinity();
    int iter = 0;
    const int check_interval = 25;
    bool converged = false;
    double certify_shrink = 1.0;
    KktResiduals final_kkt;
    bool have_final_kkt = false;

    // Certifies a candidate via the subgradient-aware residuals, preferring the
    // active-set polish when it improves them.
    const auto certify = [&](const Eigen::VectorXd& candidate, double eps_prim,
                             double eps_dual) {
        KktResiduals kkt = kkt_residuals(prob, candidate);
        Eigen::VectorXd chosen = candidate;
        Eigen::VectorXd polished;
        if (try_polish(prob, ws.hinges, candidate, &polished)) {
            const KktResiduals kkt_pol = kkt_residuals(prob, polished);
            if (kkt_pol.stationarity + kkt_pol.primal + kkt_pol.complementarity <
                kkt.stationarity + kkt.primal + kkt.complementarity) {
                kkt = kkt_pol;
                chosen = polished;
            }
        }
        const bool pass = kkt.primal <= eps_prim && kkt.stationarity <= eps_dual;
        if (pass) {
            z_best = chosen;
            final_kkt = kkt;
            have_final_kkt = true;
        }
        return pass;
    };

    Eigen::VectorXd target(rows), Bz(rows), y(rows);

    while (iter < settings.max_iter) {
        ++iter;

        // --- smooth block: quadratic + hinge terms ---
        target = v - u;
        const Eigen::VectorXd z_ref = z;
        if (!has_hinges) {
            if (!factor_valid) refactor({});
            Eigen::VectorXd rhs = -prob.linear() + ws.sigma * z_ref;
            if (rows > 0) {
                rhs.noalias() += rho * (ws.B.transpose() * (ws.rho_ratio.asDiagonal() * target));
            }
            z = factor.solve(rhs);
        } else {
            // Semismooth Newton with an exact piecewise-quadratic line search;
            // the hinge terms enter through their gradients and the curvature of
            // the currently active set.
            SmoothBlockObjective phi(prob, ws, rho, z_ref, target);
            const double grad_tol =
                1e-11 * std::max(1.0, prob.linear().size() > 0
                                          ? prob.linear().cwiseAbs().maxCoeff()
                                          : 0.0);
            for (int inner = 0; inner < 50; ++inner) {
                const Eigen::VectorXd grad = phi.gradient(z);
                if (grad.cwiseAbs().maxCoeff() <= grad_tol) break;
                const std::vector<bool> act = current_active(z);
                if (!factor_valid || act != factored_active) refactor(act);
                const Eigen::VectorXd direction = factor.solve(-grad);
                const double step = exact_line_search(phi, ws.hinges, z, direction, 4.0);
                if (step <= 0.0) break;  // stationary along this direction
                z += step * direction;
            }
        }

        if (rows == 0) {
            // Pure smooth problem; proximal-point iteration on f.
            if (iter % 5 == 0 || iter == settings.max_iter) {
                const double scale =
                    std::max({(prob.quadratic() * z).cwiseAbs().maxCoeff(),
                              prob.linear().size() > 0 ? prob.linear().cwiseAbs().maxCoeff() : 0.0,
                              1e-12});
                if (certify(z, settings.tol_abs,
                            settings.tol_abs + settings.tol_rel * scale)) {
                    converged = true;
                    break;
                }
            }
            z_best = z;
            continue;
        }

        // --- prox block: l1 terms and constraint indicators, over-relaxed ---
        Bz.noalias() = ws.B * z;
        Eigen::VectorXd w_vec = alpha * Bz + (1.0 - alpha) * v + u;
        for (const auto& block : ws.blocks) {
            auto seg = w_vec.segment(block.row0, block.rows);
            switch (block.kind) {
                case BlockKind::L1: {
                    const double threshold = block.weight / (rho * block.rho_ratio);
                    const Eigen::VectorXd shifted = seg + block.offset;
                    v.segment(block.row0, block.rows) =
                        shifted.cwiseSign().cwiseProduct(
                            (shifted.cwiseAbs().array() - threshold).max(0.0).matrix()) -
                        block.offset;
                    break;
                }
                case BlockKind::Equality:
                    v.segment(block.row0, block.rows) = block.offset;
                    break;
                case BlockKind::Inequality:
                    v.segment(block.row0, block.rows) = seg.cwiseMin(block.offset);
                    break;
            }
        }
        u = w_vec - v;

        if (iter % check_interval == 0 || iter == settings.max_iter) {
            Bz.noalias() = ws.B * z;
            y = rho * (ws.rho_ratio.asDiagonal() * u);
            const double prim = (Bz - v).cwiseAbs().maxCoeff();
            const double prim_scale = std::max(Bz.cwiseAbs().maxCoeff(), v.cwiseAbs().maxCoeff());
            const Eigen::VectorXd smooth_grad =
                prob.quadratic() * z + prob.linear() + hinge_gradient(ws.hinges, z);
            const Eigen::VectorXd bty = ws.B.transpose() * y;
            const double dual = (smooth_grad + bty).cwiseAbs().maxCoeff();
            const double dual_scale =
                std::max({(prob.quadratic() * z).cwiseAbs().maxCoeff(),
                          prob.linear().size() > 0 ? prob.linear().cwiseAbs().maxCoeff() : 0.0,
                          bty.cwiseAbs().maxCoeff()});
            const double eps_prim = settings.tol_abs + settings.tol_rel * prim_scale;
            const double eps_dual = settings.tol_abs + settings.tol_rel * dual_scale;

            const double score =
                prim / std::max(eps_prim, 1e-300) + dual / std::max(eps_dual, 1e-300);
            if (score < best_score) {
                best_score = score;
                z_best = z;
            }
            if (prim <= certify_shrink * eps_prim && dual <= certify_shrink * eps_dual) {
                if (certify(z, eps_prim, eps_dual)) {
                    converged = true;
                    break;
                }
                // internal residuals passed but certification did not: the active
                // set is not settled yet, demand more accuracy before retrying
                certify_shrink = std::max(certify_shrink * 0.25, 1e-8);
            }

            // residual balancing
            if (iter % (2 * check_interval) == 0) {
                const double prim_rel = prim / std::max(prim_scale, 1e-10);
                const double dual_rel = dual / std::max(dual_scale, 1e-10);
                const double ratio = std::sqrt(prim_rel / std::max(dual_rel, 1e-300));
                const double rho_new = std::clamp(rho * ratio, 1e-6, 1e6);
                if (rho_new > 5.0 * rho || rho_new < 0.2 * rho) {
                    u *= rho / rho_new;
                    rho = rho_new;
                    factor_valid = false;
                }
            }
        }
    }

    if (!have_final_kkt) {
        // max_iter exit: report the best snapshot, polished when that helps.
        KktResiduals kkt = kkt_residuals(prob, z_best);
        Eigen::VectorXd polished;
        if (try_polish(prob, ws.hinges, z_best, &polished)) {
            const KktResiduals kkt_pol = kkt_residuals(prob, polished);
            if (kkt_pol.stationarity + kkt_pol.primal + kkt_pol.complementarity <
                kkt.stationarity + kkt.primal + kkt.complementarity) {
                kkt = kkt_pol;
                z_best = polished;
            }
        }
        final_kkt = kkt;
        if (kkt.primal <= settings.tol_abs && kkt.stationarity <= settings.tol_abs) {
            converged = true;  // absolute pass reached on the final snapshot
        }
    }

    result.solution = z_best;
    result.iterations = iter;
    result.objective = prob.objective(z_best);
    result.primal_residual = final_kkt.primal;
    result.dual_residual = final_kkt.stationarity;
    result.complementarity = final_kkt.complementarity;
    result.status = converged ? SolveStatus::Optimal : SolveStatus::MaxIterations;
    return result;
}

}  // namespace dcpc
