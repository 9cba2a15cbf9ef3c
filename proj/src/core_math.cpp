#include "dcpc/core_math.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dcpc {

namespace {

void require(bool cond, const std::string& message) {
    if (!cond) throw std::invalid_argument(message);
}

}  // namespace

GaussianSummary::GaussianSummary(Eigen::VectorXd mean, Eigen::MatrixXd covariance, double ridge)
    : mean_(std::move(mean)), covariance_(std::move(covariance)), ridge_(ridge) {
    require(covariance_.rows() == covariance_.cols(), "GaussianSummary: covariance must be square");
    require(covariance_.rows() == mean_.size(), "GaussianSummary: mean/covariance dimension mismatch");
    require(ridge_ >= 0.0, "GaussianSummary: ridge must be nonnegative");

    const double scale = covariance_.cwiseAbs().maxCoeff();
    const double asym = (covariance_ - covariance_.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * std::max(1.0, scale)) {
        throw std::invalid_argument("GaussianSummary: covariance is not symmetric");
    }
    covariance_ = 0.5 * (covariance_ + covariance_.transpose()).eval();

    Eigen::LLT<Eigen::MatrixXd> llt(covariance_);
    bool ok = llt.info() == Eigen::Success;
    if (ok) {
        factor_ = llt.matrixL();
        // LLT can run to completion on a numerically singular matrix; reject
        // factors whose pivots collapse relative to the largest one.
        const double pivot_max = factor_.diagonal().maxCoeff();
        const double pivot_min = factor_.diagonal().minCoeff();
        ok = pivot_min > 1e-7 * pivot_max && pivot_max > 0.0;
    }
    if (!ok) {
        std::ostringstream msg;
        msg << "GaussianSummary: covariance factorization failed (dimension " << mean_.size()
            << "); the matrix is not positive definite";
        if (ridge_ == 0.0) msg << " -- consider a positive ridge";
        throw std::runtime_error(msg.str());
    }
}

double GaussianSummary::mahalanobis_sq(const Eigen::VectorXd& point) const {
    require(point.size() == dim(), "mahalanobis_sq: point dimension mismatch");
    const Eigen::VectorXd w =
        factor_.triangularView<Eigen::Lower>().solve(point - mean_);
    return w.squaredNorm();
}

Eigen::MatrixXd GaussianSummary::solve(const Eigen::MatrixXd& rhs) const {
    require(rhs.rows() == dim(), "GaussianSummary::solve: dimension mismatch");
    Eigen::MatrixXd half = factor_.triangularView<Eigen::Lower>().solve(rhs);
    return factor_.transpose().triangularView<Eigen::Upper>().solve(half);
}

Eigen::MatrixXd GaussianSummary::whiten(const Eigen::MatrixXd& rhs) const {
    require(rhs.rows() == dim(), "GaussianSummary::whiten: dimension mismatch");
    return factor_.triangularView<Eigen::Lower>().solve(rhs);
}

double mahalanobis_sq(const Eigen::VectorXd& point, const GaussianSummary& summary) {
    return summary.mahalanobis_sq(point);
}

GaussianSummary empirical_summary(const Eigen::MatrixXd& columns, double ridge) {
    const Eigen::Index n = columns.cols();
    require(n >= 2, "empirical_summary: need at least 2 columns");
    require(ridge >= 0.0, "empirical_summary: ridge must be nonnegative");

    const Eigen::VectorXd mean = columns.rowwise().mean();
    const Eigen::MatrixXd centered = columns.colwise() - mean;
    Eigen::MatrixXd cov = (centered * centered.transpose()) / static_cast<double>(n);
    cov.diagonal().array() += ridge;
    return GaussianSummary(mean, cov, ridge);
}

GaussianSummary empirical_summary_auto_ridge(const Eigen::MatrixXd& columns, double scale) {
    const Eigen::Index n = columns.cols();
    require(n >= 2, "empirical_summary_auto_ridge: need at least 2 columns");
    const Eigen::VectorXd mean = columns.rowwise().mean();
    const Eigen::MatrixXd centered = columns.colwise() - mean;
    Eigen::MatrixXd cov = (centered * centered.transpose()) / static_cast<double>(n);
    double ridge = scale * cov.trace() / static_cast<double>(cov.rows());
    if (!(ridge > 0.0)) ridge = scale;  // degenerate all-equal data
    cov.diagonal().array() += ridge;
    return GaussianSummary(mean, cov, ridge);
}

double regularized_lower_gamma(double s, double x) {
    require(s > 0.0, "regularized_lower_gamma: s must be positive");
    require(x >= 0.0, "regularized_lower_gamma: x must be nonnegative");
    if (x == 0.0) return 0.0;

    const double log_prefix = s * std::log(x) - x - std::lgamma(s);
    if (x < s + 1.0) {
        // Series: P(s,x) = x^s e^{-x} / Gamma(s) * sum_n x^n / (s (s+1) ... (s+n))
        double term = 1.0 / s;
        double sum = term;
        for (int n = 1; n < 1000; ++n) {
            term *= x / (s + n);
            sum += term;
            if (std::abs(term) < std::abs(sum) * 1e-17) break;
        }
        return std::exp(log_prefix) * sum;
    }
    // Continued fraction (modified Lentz) for Q(s,x); P = 1 - Q.
    const double tiny = 1e-300;
    double b = x + 1.0 - s;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 1000; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - s);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-17) break;
    }
    return 1.0 - std::exp(log_prefix) * h;
}

double chi2_confidence_radius(int dof, double confidence) {
    require(dof >= 1, "chi2_confidence_radius: dof must be positive");
    require(confidence > 0.0 && confidence < 1.0,
            "chi2_confidence_radius: confidence must lie in (0,1)");

    const auto cdf = [dof](double d) {
        return regularized_lower_gamma(0.5 * dof, 0.5 * d);
    };

    double lo = 0.0;
    double hi = static_cast<double>(dof);
    int expansions = 0;
    while (cdf(hi) < confidence) {
        hi *= 2.0;
        if (++expansions > 200) {
            throw std::runtime_error("chi2_confidence_radius: bracket expansion failed");
        }
    }
    double mid = 0.5 * (lo + hi);
    for (int it = 0; it < 400 && hi - lo > 1e-12 * std::max(1.0, hi); ++it) {
        mid = 0.5 * (lo + hi);
        if (cdf(mid) < confidence) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    mid = 0.5 * (lo + hi);
    const double residual = cdf(mid) - confidence;
    if (std::abs(residual) > 1e-9) {
        std::ostringstream msg;
        msg << "chi2_confidence_radius: bisection residual " << residual
            << " exceeds tolerance 1e-9";
        throw std::runtime_error(msg.str());
    }
    return mid;
}

HankelBlock hankel(int depth, const Eigen::MatrixXd& samples) {
    require(depth >= 1, "hankel: depth must be positive");
    const Eigen::Index m = samples.cols();
    if (m < depth) {
        std::ostringstream msg;
        msg << "hankel: need at least " << depth << " samples, got " << m;
        throw std::invalid_argument(msg.str());
    }
    const Eigen::Index r = samples.rows();
    const Eigen::Index n_cols = m - depth + 1;

    HankelBlock block;
    block.depth = depth;
    block.block_size = static_cast<int>(r);
    block.data.resize(depth * r, n_cols);
    for (int i = 0; i < depth; ++i) {
        block.data.block(i * r, 0, r, n_cols) = samples.middleCols(i, n_cols);
    }
    return block;
}

HankelBlock hankel(int depth, const std::vector<Eigen::VectorXd>& samples) {
    require(!samples.empty(), "hankel: empty sample sequence");
    const Eigen::Index r = samples.front().size();
    Eigen::MatrixXd m(r, static_cast<Eigen::Index>(samples.size()));
    for (std::size_t j = 0; j < samples.size(); ++j) {
        require(samples[j].size() == r, "hankel: inconsistent sample dimensions");
        m.col(static_cast<Eigen::Index>(j)) = samples[j];
    }
    return hankel(depth, m);
}

RankReport full_row_rank(const Eigen::MatrixXd& D) {
    RankReport report;
    if (D.size() == 0) return report;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(D);
    const auto& sv = svd.singularValues();
    report.largest_singular_value = sv(0);
    report.smallest_singular_value = sv(sv.size() - 1);
    report.full_row_rank = D.rows() <= D.cols() &&
                           report.smallest_singular_value >
                               1e-10 * report.largest_singular_value &&
                           report.largest_singular_value > 0.0;
    return report;
}

}  // namespace dcpc
