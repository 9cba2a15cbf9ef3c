#pragma once

#include <Eigen/Dense>

namespace dcpc {

// Least-squares fit of x+ = A x + B u.
struct LinearModel {
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;
    double residual_norm = 0.0;  // Frobenius norm of X1 - [A B] [X0; U0]
};

// Minimizes ||X1 - [A B] [X0; U0]||_F via column-pivoted QR of the stacked
// regressor. Throws std::invalid_argument when [X0; U0] lacks full row rank.
LinearModel fit_linear_model(const Eigen::MatrixXd& X0, const Eigen::MatrixXd& U0,
                             const Eigen::MatrixXd& X1);

// Fixed-point iteration P <- Q + A'PA - A'PB (R + B'PB)^{-1} B'PA from P0 = Q,
// symmetrized each sweep. Throws std::runtime_error when the iteration does not
// settle (non-stabilizable pair).
Eigen::MatrixXd solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                           const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                           double tol = 1e-12, int max_iter = 100000);

struct LqrGain {
    Eigen::MatrixXd K;       // u = K x, negative feedback folded in
    double spectral_radius;  // rho(A + B K), verified < 1
};

LqrGain lqr_gain(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                 const Eigen::MatrixXd& R);

double spectral_radius(const Eigen::MatrixXd& M);

}  // namespace dcpc
