#include "dcpc/core_math.hpp"

#include <cmath>
#include <doctest.h>

#include "dcpc/rng.hpp"

using namespace dcpc;

namespace {

// erf(x) by Taylor series, independent of any library erf.
double erf_series(double x) {
    double term = x;
    double sum = x;
    for (int n = 1; n < 200; ++n) {
        term *= -x * x / n;
        sum += term / (2 * n + 1);
        if (std::abs(term) < 1e-18) break;
    }
    return sum * 2.0 / std::sqrt(M_PI);
}

// chi-squared(4) density, for the quadrature cross-check.
double chi2_4_density(double x) { return 0.25 * x * std::exp(-0.5 * x); }

}  // namespace

TEST_CASE("mahalanobis_sq basic values") {
    Eigen::VectorXd mu(2);
    mu << 1.0, -2.0;

    SUBCASE("identity covariance") {
        GaussianSummary s(mu, Eigen::MatrixXd::Identity(2, 2));
        CHECK(s.mahalanobis_sq(mu) == doctest::Approx(0.0));
        Eigen::VectorXd p = mu;
        p(0) += 1.0;
        CHECK(s.mahalanobis_sq(p) == doctest::Approx(1.0));
    }
    SUBCASE("diagonal covariance scales coordinates") {
        Eigen::MatrixXd cov = Eigen::Vector2d(4.0, 1.0).asDiagonal();
        GaussianSummary s(mu, cov);
        Eigen::VectorXd p = mu;
        p(0) += 2.0;
        CHECK(s.mahalanobis_sq(p) == doctest::Approx(1.0));
    }
    SUBCASE("dimension mismatch is an input error") {
        GaussianSummary s(mu, Eigen::MatrixXd::Identity(2, 2));
        CHECK_THROWS_AS(s.mahalanobis_sq(Eigen::VectorXd::Zero(3)), std::invalid_argument);
    }
}

TEST_CASE("mahalanobis_sq is invariant under invertible linear maps") {
    GaussianStream rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        const int r = 2 + trial % 3;
        Eigen::MatrixXd cols(r, 40);
        for (int j = 0; j < cols.cols(); ++j) cols.col(j) = rng.next(r);

        Eigen::MatrixXd m = Eigen::MatrixXd::Identity(r, r);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < r; ++j) m(i, j) += 0.3 * rng.next();

        const Eigen::VectorXd point = rng.next(r);
        const double d1 = empirical_summary(cols, 0.0).mahalanobis_sq(point);
        const double d2 = empirical_summary(m * cols, 0.0).mahalanobis_sq(m * point);
        CHECK(d2 == doctest::Approx(d1).epsilon(1e-8));
    }
}

TEST_CASE("regularized_lower_gamma") {
    CHECK(regularized_lower_gamma(0.7, 0.0) == 0.0);
    CHECK(regularized_lower_gamma(3.0, 0.0) == 0.0);
    // P(1, x) = 1 - e^{-x}
    CHECK(regularized_lower_gamma(1.0, std::log(2.0)) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(regularized_lower_gamma(1.0, 2.5) ==
          doctest::Approx(1.0 - std::exp(-2.5)).epsilon(1e-12));
    // P(1/2, 1/2) equals the one-sigma univariate Gaussian mass erf(1/sqrt(2)).
    CHECK(regularized_lower_gamma(0.5, 0.5) ==
          doctest::Approx(erf_series(1.0 / std::sqrt(2.0))).epsilon(1e-12));

    SUBCASE("nondecreasing in x with limit 1") {
        for (double s : {0.5, 1.0, 2.5, 7.0}) {
            double prev = 0.0;
            for (double x = 0.0; x <= 10.0 * s; x += 0.25 * s) {
                const double v = regularized_lower_gamma(s, x);
                CHECK(v >= prev - 1e-14);
                prev = v;
            }
            CHECK(regularized_lower_gamma(s, 50.0 * s) > 1.0 - 1e-9);
        }
    }
}

TEST_CASE("chi2_confidence_radius") {
    // Closed form for two degrees of freedom: CDF = 1 - e^{-d/2}.
    CHECK(chi2_confidence_radius(2, 0.95) ==
          doctest::Approx(-2.0 * std::log(0.05)).epsilon(1e-9));

    // Inverse check of the two-sigma interval: d* = 4 at one dof is ~95.45%.
    CHECK(regularized_lower_gamma(0.5, 2.0) == doctest::Approx(0.9545).epsilon(5e-4));
    CHECK(chi2_confidence_radius(1, regularized_lower_gamma(0.5, 2.0)) ==
          doctest::Approx(4.0).epsilon(1e-8));

    SUBCASE("four dof value cross-checked by quadrature") {
        const double d = chi2_confidence_radius(4, 0.95);
        CHECK(d == doctest::Approx(9.4877).epsilon(1e-4));
        // Trapezoid integration of the chi2(4) density with step 1e-5.
        const double h = 1e-5;
        const long steps = static_cast<long>(d / h);
        double integral = 0.5 * (chi2_4_density(0.0) + chi2_4_density(d));
        for (long i = 1; i < steps; ++i) integral += chi2_4_density(h * static_cast<double>(i));
        integral *= h;
        integral += chi2_4_density(d) * (d - h * static_cast<double>(steps));
        CHECK(integral == doctest::Approx(0.95).epsilon(1e-6));
    }

    SUBCASE("strictly increasing in confidence and dof") {
        for (int dof : {1, 2, 3, 5, 9}) {
            double prev = 0.0;
            for (double conf : {0.1, 0.3, 0.5, 0.8, 0.95, 0.999}) {
                const double d = chi2_confidence_radius(dof, conf);
                CHECK(d > prev);
                prev = d;
            }
        }
        for (double conf : {0.5, 0.9, 0.99}) {
            double prev = 0.0;
            for (int dof = 1; dof <= 12; ++dof) {
                const double d = chi2_confidence_radius(dof, conf);
                CHECK(d > prev);
                prev = d;
            }
        }
    }

    CHECK_THROWS_AS(chi2_confidence_radius(2, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(chi2_confidence_radius(2, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(chi2_confidence_radius(0, 0.5), std::invalid_argument);
}

TEST_CASE("hinge_penalty") {
    CHECK(hinge_penalty(3.0, 4.0) == 0.0);
    CHECK(hinge_penalty(4.0, 4.0) == 0.0);
    CHECK(hinge_penalty(6.5, 4.0) == doctest::Approx(2.5));
}

TEST_CASE("hankel construction") {
    SUBCASE("scalar samples") {
        Eigen::MatrixXd samples(1, 4);
        samples << 1, 2, 3, 4;
        const HankelBlock h = hankel(2, samples);
        CHECK(h.data.rows() == 2);
        CHECK(h.data.cols() == 3);
        Eigen::MatrixXd expected(2, 3);
        expected << 1, 2, 3, 2, 3, 4;
        CHECK(h.data == expected);
    }
    SUBCASE("depth equal to sample count gives one column") {
        Eigen::MatrixXd samples(2, 3);
        samples << 1, 2, 3, 4, 5, 6;
        const HankelBlock h = hankel(3, samples);
        CHECK(h.cols() == 1);
        Eigen::VectorXd expected(6);
        expected << 1, 4, 2, 5, 3, 6;
        CHECK(h.data.col(0) == expected);
    }
    SUBCASE("vector-block samples, indices enumerated by hand") {
        Eigen::MatrixXd samples(2, 5);
        samples << 10, 11, 12, 13, 14, 20, 21, 22, 23, 24;
        const HankelBlock h = hankel(3, samples);
        CHECK(h.data.rows() == 6);
        CHECK(h.data.cols() == 3);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                CHECK(h.data(2 * i, j) == 10 + i + j);
                CHECK(h.data(2 * i + 1, j) == 20 + i + j);
            }
        }
    }
    SUBCASE("block-shift structure holds bitwise") {
        GaussianStream rng(3);
        Eigen::MatrixXd samples(3, 12);
        for (int j = 0; j < 12; ++j) samples.col(j) = rng.next(3);
        const HankelBlock h = hankel(4, samples);
        for (int i = 1; i < h.depth; ++i) {
            for (int j = 0; j + 1 < h.cols(); ++j) {
                CHECK(h.block_row(i).col(j) == h.block_row(i - 1).col(j + 1));
            }
        }
    }
    SUBCASE("too few samples") {
        CHECK_THROWS_AS(hankel(5, Eigen::MatrixXd::Zero(1, 4)), std::invalid_argument);
    }
}

TEST_CASE("empirical_summary") {
    SUBCASE("zero spread collapses to ridge identity") {
        Eigen::VectorXd v(3);
        v << 1.0, -2.0, 0.5;
        Eigen::MatrixXd cols = v.replicate(1, 7);
        const double eps = 1e-3;
        const GaussianSummary s = empirical_summary(cols, eps);
        CHECK((s.mean() - v).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
        CHECK((s.covariance() - eps * Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() ==
              doctest::Approx(0.0));
    }
    SUBCASE("two-point variance uses 1/n normalization") {
        Eigen::MatrixXd cols(1, 2);
        cols << -1.0, 1.0;
        const GaussianSummary s = empirical_summary(cols, 0.0);
        CHECK(s.mean()(0) == doctest::Approx(0.0));
        CHECK(s.covariance()(0, 0) == doctest::Approx(1.0));
    }
    SUBCASE("matches a summation-order oracle") {
        GaussianStream rng(99);
        Eigen::MatrixXd cols(3, 50);
        for (int j = 0; j < 50; ++j) cols.col(j) = rng.next(3);
        const GaussianSummary s = empirical_summary(cols, 1e-6);

        // Oracle: accumulate mean and outer products entry by entry.
        Eigen::Vector3d mu = Eigen::Vector3d::Zero();
        for (int j = 0; j < 50; ++j) mu += cols.col(j);
        mu /= 50.0;
        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (int j = 0; j < 50; ++j) {
            const Eigen::Vector3d d = cols.col(j) - mu;
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) cov(a, b) += d(a) * d(b);
        }
        cov /= 50.0;
        cov += 1e-6 * Eigen::Matrix3d::Identity();
        CHECK((s.covariance() - cov).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((s.mean() - mu).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("ridge shifts the covariance by exactly eps I") {
        GaussianStream rng(5);
        Eigen::MatrixXd cols(2, 30);
        for (int j = 0; j < 30; ++j) cols.col(j) = rng.next(2);
        const double eps = 0.37;
        const Eigen::MatrixXd diff =
            empirical_summary(cols, eps).covariance() - empirical_summary(cols, 0.0).covariance();
        CHECK((diff - eps * Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-14);
    }
    SUBCASE("rank-deficient data without ridge reports a numerical error") {
        Eigen::MatrixXd cols(3, 5);  // 3-dim data on a line -> singular covariance
        for (int j = 0; j < 5; ++j) cols.col(j) = j * Eigen::Vector3d(1.0, 2.0, 3.0);
        CHECK_THROWS_AS(empirical_summary(cols, 0.0), std::runtime_error);
        CHECK_NOTHROW(empirical_summary(cols, 1e-8));
    }
    SUBCASE("factor reconstructs the covariance") {
        GaussianStream rng(11);
        Eigen::MatrixXd cols(4, 25);
        for (int j = 0; j < 25; ++j) cols.col(j) = rng.next(4);
        const GaussianSummary s = empirical_summary(cols, 1e-9);
        const Eigen::MatrixXd rebuilt = s.factor() * s.factor().transpose();
        CHECK((rebuilt - s.covariance()).norm() < 1e-10 * s.covariance().norm());
    }
    CHECK_THROWS_AS(empirical_summary(Eigen::MatrixXd::Zero(2, 1), 0.1), std::invalid_argument);
}

TEST_CASE("full_row_rank") {
    CHECK(full_row_rank(Eigen::MatrixXd::Identity(3, 3)).full_row_rank);

    Eigen::MatrixXd dup(3, 4);
    dup << 1, 2, 3, 4, 5, 6, 7, 8, 1, 2, 3, 4;
    const RankReport r = full_row_rank(dup);
    CHECK_FALSE(r.full_row_rank);
    CHECK(r.smallest_singular_value < 1e-12 * r.largest_singular_value);

    // more rows than columns can never have full row rank
    CHECK_FALSE(full_row_rank(Eigen::MatrixXd::Random(5, 3)).full_row_rank);
}
