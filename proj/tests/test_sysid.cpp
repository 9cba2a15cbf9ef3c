#include "dcpc/sysid.hpp"

#include <cmath>
#include <doctest.h>

#include "dcpc/plant.hpp"
#include "dcpc/rng.hpp"

using namespace dcpc;

TEST_CASE("fit_linear_model") {
    SUBCASE("exact recovery from noiseless data") {
        Eigen::Matrix2d A;
        A << 0.9, 0.1, 0.0, 0.8;
        Eigen::Vector2d B(0.0, 1.0);

        GaussianStream rng(17);
        const int n = 40;
        Eigen::MatrixXd X0(2, n), U0(1, n), X1(2, n);
        Eigen::Vector2d x = Eigen::Vector2d::Zero();
        for (int k = 0; k < n; ++k) {
            const double u = rng.next();
            X0.col(k) = x;
            U0(0, k) = u;
            x = A * x + B * u;
            X1.col(k) = x;
        }
        const LinearModel m = fit_linear_model(X0, U0, X1);
        CHECK((m.A - A).cwiseAbs().maxCoeff() < 1e-8);
        CHECK((m.B - B).cwiseAbs().maxCoeff() < 1e-8);
        CHECK(m.residual_norm < 1e-10);
    }

    SUBCASE("identity dynamics") {
        GaussianStream rng(3);
        Eigen::MatrixXd X0(2, 12);
        Eigen::MatrixXd U0(1, 12);
        for (int k = 0; k < 12; ++k) {
            X0.col(k) = rng.next(2);
            U0(0, k) = rng.next();
        }
        const LinearModel m = fit_linear_model(X0, U0, X0);
        CHECK((m.A - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(m.B.cwiseAbs().maxCoeff() < 1e-10);
    }

    SUBCASE("determined scalar system") {
        Eigen::MatrixXd X0(1, 3), U0(1, 3), X1(1, 3);
        X0 << 1.0, 2.0, -1.0;
        U0 << 0.5, -1.0, 2.0;
        for (int k = 0; k < 3; ++k) X1(0, k) = 0.5 * X0(0, k) + 2.0 * U0(0, k);
        const LinearModel m = fit_linear_model(X0, U0, X1);
        CHECK(m.A(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(m.B(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
    }

    SUBCASE("rank-deficient regressor names the rank") {
        Eigen::MatrixXd X0 = Eigen::MatrixXd::Zero(2, 8);  // states identically zero
        Eigen::MatrixXd U0(1, 8);
        GaussianStream rng(8);
        for (int k = 0; k < 8; ++k) U0(0, k) = rng.next();
        CHECK_THROWS_WITH_AS(fit_linear_model(X0, U0, X0),
                             doctest::Contains("rank deficient"), std::invalid_argument);
    }

    SUBCASE("local optimality against random perturbations") {
        GaussianStream rng(23);
        Eigen::MatrixXd X0(2, 30), U0(1, 30), X1(2, 30);
        for (int k = 0; k < 30; ++k) {
            X0.col(k) = rng.next(2);
            U0(0, k) = rng.next();
            X1.col(k) = rng.next(2);  // pure noise target
        }
        const LinearModel m = fit_linear_model(X0, U0, X1);
        Eigen::MatrixXd Z(3, 30);
        Z.topRows(2) = X0;
        Z.bottomRows(1) = U0;
        Eigen::MatrixXd theta(2, 3);
        theta << m.A, m.B;
        for (int trial = 0; trial < 100; ++trial) {
            Eigen::MatrixXd perturbed = theta;
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 3; ++j) perturbed(i, j) += 0.05 * rng.next();
            CHECK((X1 - perturbed * Z).norm() >= m.residual_norm - 1e-12);
        }
    }
}

TEST_CASE("solve_dare") {
    SUBCASE("uncontrolled stable scalar is a geometric series") {
        const double a = 0.7, q = 2.0;
        const Eigen::MatrixXd P =
            solve_dare(Eigen::MatrixXd::Constant(1, 1, a), Eigen::MatrixXd::Zero(1, 1),
                       Eigen::MatrixXd::Constant(1, 1, q), Eigen::MatrixXd::Identity(1, 1));
        CHECK(P(0, 0) == doctest::Approx(q / (1.0 - a * a)).epsilon(1e-10));
    }

    SUBCASE("A = 0 gives P = Q") {
        Eigen::Matrix2d Q;
        Q << 3.0, 1.0, 1.0, 2.0;
        const Eigen::MatrixXd P = solve_dare(Eigen::Matrix2d::Zero(), Eigen::Vector2d(0.0, 1.0),
                                             Q, Eigen::MatrixXd::Identity(1, 1));
        CHECK((P - Q).cwiseAbs().maxCoeff() < 1e-12);
    }

    SUBCASE("scalar a=b=Q=R=1 gives the golden ratio") {
        const Eigen::MatrixXd one = Eigen::MatrixXd::Identity(1, 1);
        const Eigen::MatrixXd P = solve_dare(one, one, one, one);
        CHECK(P(0, 0) == doctest::Approx((1.0 + std::sqrt(5.0)) / 2.0).epsilon(1e-10));
    }

    SUBCASE("residual and symmetry at return") {
        BenchmarkPlant plant(0.0);
        const Eigen::MatrixXd A = plant.linear_A();
        const Eigen::MatrixXd B = plant.linear_B();
        const Eigen::MatrixXd Q = Eigen::Matrix2d::Identity();
        const Eigen::MatrixXd R = Eigen::MatrixXd::Identity(1, 1);
        const Eigen::MatrixXd P = solve_dare(A, B, Q, R);
        const Eigen::MatrixXd BtPA = B.transpose() * P * A;
        const Eigen::MatrixXd recomputed =
            Q + A.transpose() * P * A -
            BtPA.transpose() * (R + B.transpose() * P * B).ldlt().solve(BtPA);
        CHECK((P - recomputed).cwiseAbs().maxCoeff() < 1e-11);
        CHECK((P - P.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    }

    SUBCASE("non-stabilizable pair fails with a numerical error") {
        // unstable mode with no input authority
        Eigen::Matrix2d A;
        A << 1.5, 0.0, 0.0, 0.5;
        const Eigen::Vector2d B(0.0, 1.0);
        CHECK_THROWS_AS(solve_dare(A, B, Eigen::Matrix2d::Identity(),
                                   Eigen::MatrixXd::Identity(1, 1), 1e-12, 2000),
                        std::runtime_error);
    }
}

TEST_CASE("lqr_gain") {
    SUBCASE("A = 0 needs no feedback") {
        const LqrGain g =
            lqr_gain(Eigen::Matrix2d::Zero(), Eigen::Vector2d(0.0, 1.0),
                     Eigen::Matrix2d::Identity(), Eigen::MatrixXd::Identity(1, 1));
        CHECK(g.K.cwiseAbs().maxCoeff() < 1e-14);
        CHECK(g.spectral_radius == doctest::Approx(0.0));
    }

    SUBCASE("scalar golden-ratio gain") {
        const Eigen::MatrixXd one = Eigen::MatrixXd::Identity(1, 1);
        const LqrGain g = lqr_gain(one, one, one, one);
        const double P = (1.0 + std::sqrt(5.0)) / 2.0;
        CHECK(g.K(0, 0) == doctest::Approx(-P / (1.0 + P)).epsilon(1e-10));
        CHECK(g.spectral_radius < 1.0);
    }

    SUBCASE("stabilizes the linearized benchmark") {
        BenchmarkPlant plant(0.0);
        const LqrGain g = lqr_gain(plant.linear_A(), plant.linear_B(),
                                   Eigen::Matrix2d::Identity(), Eigen::MatrixXd::Identity(1, 1));
        CHECK(g.spectral_radius < 1.0);
    }
}
