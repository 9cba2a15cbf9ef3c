#pragma once

#include <vector>

#include <Eigen/Dense>

namespace dcpc {

// Empirical Gaussian description of a data cloud: mean, covariance and its
// Cholesky factor. Immutable after construction; all queries go through the
// stored factor, never an explicit inverse.
class GaussianSummary {
  public:
    // Validates symmetry (1e-12 relative), factorizes. Throws std::runtime_error
    // if the covariance is not positive definite.
    GaussianSummary(Eigen::VectorXd mean, Eigen::MatrixXd covariance, double ridge = 0.0);

    Eigen::Index dim() const { return mean_.size(); }
    const Eigen::VectorXd& mean() const { return mean_; }
    const Eigen::MatrixXd& covariance() const { return covariance_; }
    // Lower-triangular L with L L^T = covariance.
    const Eigen::MatrixXd& factor() const { return factor_; }
    double ridge() const { return ridge_; }

    // Squared Mahalanobis distance (x - mean)^T Sigma^{-1} (x - mean).
    double mahalanobis_sq(const Eigen::VectorXd& point) const;

    // Sigma^{-1} * rhs via two triangular solves.
    Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;

    // L^{-1} * rhs; maps into whitened coordinates where the summary is standard normal.
    Eigen::MatrixXd whiten(const Eigen::MatrixXd& rhs) const;

  private:
    Eigen::VectorXd mean_;
    Eigen::MatrixXd covariance_;
    Eigen::MatrixXd factor_;
    double ridge_;
};

double mahalanobis_sq(const Eigen::VectorXd& point, const GaussianSummary& summary);

// mean = column average, covariance = n^{-1} (C - mu)(C - mu)^T + ridge * I,
// normalized by exactly the number of columns supplied. Requires n >= 2.
GaussianSummary empirical_summary(const Eigen::MatrixXd& columns, double ridge);

// Same, with ridge = scale * trace(cov) / dim so the summary is always invertible.
GaussianSummary empirical_summary_auto_ridge(const Eigen::MatrixXd& columns, double scale);

// Regularized lower incomplete gamma P(s, x): series for x < s + 1, continued
// fraction otherwise. Absolute accuracy ~1e-12.
double regularized_lower_gamma(double s, double x);

// Radius d* with P(dof/2, d*/2) = confidence, i.e. the squared-Mahalanobis
// level whose ellipsoid holds `confidence` probability mass under a Gaussian.
// Bracketed bisection on the monotone chi-squared CDF.
double chi2_confidence_radius(int dof, double confidence);

// max{0, d_sq - radius}
inline double hinge_penalty(double d_sq, double radius) {
    return d_sq > radius ? d_sq - radius : 0.0;
}

// Block Hankel matrix: column j stacks samples j .. j+depth-1.
struct HankelBlock {
    int depth = 0;        // block rows
    int block_size = 0;   // sample dimension r_a
    Eigen::MatrixXd data; // (depth * block_size) x n_cols

    Eigen::Index cols() const { return data.cols(); }
    // Rows of sample-block i (0-based).
    Eigen::Block<const Eigen::MatrixXd> block_row(int i) const {
        return data.block(i * block_size, 0, block_size, data.cols());
    }
};

// samples given as matrix columns; n_cols = samples.cols() - depth + 1.
HankelBlock hankel(int depth, const Eigen::MatrixXd& samples);
HankelBlock hankel(int depth, const std::vector<Eigen::VectorXd>& samples);

struct RankReport {
    bool full_row_rank = false;
    double smallest_singular_value = 0.0;
    double largest_singular_value = 0.0;
};

// Full row rank iff rows <= cols and sigma_min > 1e-10 * sigma_max.
RankReport full_row_rank(const Eigen::MatrixXd& D);

}  // namespace dcpc
