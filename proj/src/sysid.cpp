#include "dcpc/sysid.hpp"

#include <sstream>
#include <stdexcept>

#include "dcpc/core_math.hpp"

namespace dcpc {

LinearModel fit_linear_model(const Eigen::MatrixXd& X0, const Eigen::MatrixXd& U0,
                             const Eigen::MatrixXd& X1) {
    const Eigen::Index r_x = X0.rows();
    const Eigen::Index r_u = U0.rows();
    const Eigen::Index n = X0.cols();
    if (U0.cols() != n || X1.cols() != n || X1.rows() != r_x) {
        throw std::invalid_argument("fit_linear_model: inconsistent data dimensions");
    }

    Eigen::MatrixXd Z(r_x + r_u, n);
    Z.topRows(r_x) = X0;
    Z.bottomRows(r_u) = U0;

    const RankReport rank = full_row_rank(Z);
    if (!rank.full_row_rank) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> probe(Z.transpose());
        std::ostringstream msg;
        msg << "fit_linear_model: stacked regressor is rank deficient (rank " << probe.rank()
            << " of required " << (r_x + r_u) << ")";
        throw std::invalid_argument(msg.str());
    }

    // Theta' solves the transposed least-squares problem by orthogonal factorization.
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z.transpose());
    const Eigen::MatrixXd theta = qr.solve(X1.transpose()).transpose();

    LinearModel model;
    model.A = theta.leftCols(r_x);
    model.B = theta.rightCols(r_u);
    model.residual_norm = (X1 - theta * Z).norm();
    return model;
}

double spectral_radius(const Eigen::MatrixXd& M) {
    return Eigen::EigenSolver<Eigen::MatrixXd>(M, false).eigenvalues().cwiseAbs().maxCoeff();
}

Eigen::MatrixXd solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                           const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R, double tol,
                           int max_iter) {
    const Eigen::Index n = A.rows();
    if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n ||
        R.rows() != B.cols() || R.cols() != B.cols()) {
        throw std::invalid_argument("solve_dare: inconsistent dimensions");
    }

    Eigen::MatrixXd P = Q;
    for (int it = 0; it < max_iter; ++it) {
        const Eigen::MatrixXd BtP = B.transpose() * P;
        const Eigen::MatrixXd gain_denominator = R + BtP * B;
        const Eigen::MatrixXd next_raw =
            Q + A.transpose() * P * A -
            (BtP * A).transpose() * gain_denominator.ldlt().solve(BtP * A);
        const Eigen::MatrixXd next = 0.5 * (next_raw + next_raw.transpose());
        const double diff = (next - P).cwiseAbs().maxCoeff();
        P = next;
        if (diff < tol) return P;
    }
    throw std::runtime_error(
        "solve_dare: no convergence; (A, B) may not be stabilizable or (A, Q) not detectable");
}

LqrGain lqr_gain(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                 const Eigen::MatrixXd& R) {
    const Eigen::MatrixXd P = solve_dare(A, B, Q, R);
    const Eigen::MatrixXd BtPB = R + B.transpose() * P * B;
    LqrGain result;
    result.K = -BtPB.ldlt().solve(B.transpose() * P * A);
    result.spectral_radius = spectral_radius(A + B * result.K);
    if (result.spectral_radius >= 1.0) {
        std::ostringstream msg;
        msg << "lqr_gain: closed loop not contractive (spectral radius " << result.spectral_radius
            << ")";
        throw std::runtime_error(msg.str());
    }
    return result;
}

}  // namespace dcpc
