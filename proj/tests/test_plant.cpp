#include "dcpc/plant.hpp"

#include <cmath>
#include <doctest.h>

#include "dcpc/core_math.hpp"

using namespace dcpc;

namespace {

class ConstantController : public Controller {
  public:
    explicit ConstantController(double u) : u_(u) {}
    Eigen::VectorXd step(const Eigen::VectorXd&) override {
        return Eigen::VectorXd::Constant(1, u_);
    }

  private:
    double u_;
};

class StaticOutputFeedback : public Controller {
  public:
    explicit StaticOutputFeedback(double gain) : gain_(gain) {}
    Eigen::VectorXd step(const Eigen::VectorXd& y) override { return gain_ * y; }

  private:
    double gain_;
};

}  // namespace

TEST_CASE("benchmark_step") {
    const double theta = 1.0 / 9.0;
    CHECK(benchmark_step({0, 0}, 0.0, {0, 0}, theta).isZero());

    const Eigen::Vector2d a = benchmark_step({0, 1}, 0.0, {0, 0}, theta);
    CHECK(a(0) == doctest::Approx(0.1 + 1.0 / 9.0).epsilon(1e-15));
    CHECK(a(1) == doctest::Approx(0.95).epsilon(1e-15));

    const Eigen::Vector2d b = benchmark_step({10, 0}, 1.0, {0, 0}, theta);
    CHECK(b(0) == doctest::Approx(9.8).epsilon(1e-15));
    CHECK(b(1) == doctest::Approx(0.1 + std::tanh(10.0) / 9.0).epsilon(1e-15));
}

TEST_CASE("benchmark_output selects x2") {
    CHECK(benchmark_output({5, 2}, 0.0) == doctest::Approx(2.0));
    CHECK(benchmark_output({0, 0}, 0.3) == doctest::Approx(0.3));
    CHECK(benchmark_output({1, -1}, 0.05) == doctest::Approx(-0.95));
}

TEST_CASE("theta = 0 reduces to the exact affine map") {
    BenchmarkPlant plant(0.0);
    const Eigen::Matrix2d A = plant.linear_A();
    const Eigen::Vector2d B = plant.linear_B();
    GaussianStream rng(4);
    for (int i = 0; i < 50; ++i) {
        const Eigen::Vector2d x = 10.0 * rng.next(2);
        const double u = 5.0 * rng.next();
        const Eigen::Vector2d w = rng.next(2);
        const Eigen::Vector2d expected = A * x + B * u + w;
        CHECK((benchmark_step(x, u, w, 0.0) - expected).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("gaussian stream covariance matches the configured noise") {
    BenchmarkPlant plant;
    GaussianStream rng(2024);
    const int n = 100000;
    Eigen::Vector2d sum = Eigen::Vector2d::Zero();
    Eigen::Matrix2d outer = Eigen::Matrix2d::Zero();
    for (int i = 0; i < n; ++i) {
        const Eigen::Vector2d w = plant.draw_process_noise(rng);
        sum += w;
        outer += w * w.transpose();
    }
    const Eigen::Vector2d mean = sum / n;
    const Eigen::Matrix2d cov = outer / n - mean * mean.transpose();
    CHECK(cov(0, 0) == doctest::Approx(0.1).epsilon(0.05));
    CHECK(cov(1, 1) == doctest::Approx(0.05).epsilon(0.05));
    CHECK(std::abs(cov(0, 1)) < 0.01);
}

TEST_CASE("collect_data") {
    BenchmarkPlant plant;
    const Eigen::MatrixXd K0 = Eigen::MatrixXd::Constant(1, 1, -6.0);

    SUBCASE("T = 0 records a single sample") {
        const Trajectory t = collect_data(plant, K0, 0, 7);
        CHECK(t.states.cols() == 1);
        CHECK(t.inputs.cols() == 1);
        CHECK(t.outputs.cols() == 1);
        CHECK(t.states.col(0).isZero());
    }

    SUBCASE("zero noise and zero gain stay at the origin") {
        BenchmarkPlant quiet(1.0 / 9.0, {0.0, 0.0}, 0.0);
        const Trajectory t = collect_data(quiet, Eigen::MatrixXd::Zero(1, 1), 25, 7);
        CHECK(t.states.cwiseAbs().maxCoeff() == 0.0);
        CHECK(t.outputs.cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("identical seeds give bit-identical trajectories") {
        const Trajectory a = collect_data(plant, K0, 60, 123);
        const Trajectory b = collect_data(plant, K0, 60, 123);
        CHECK(a.states == b.states);
        CHECK(a.inputs == b.inputs);
        CHECK(a.outputs == b.outputs);
        const Trajectory c = collect_data(plant, K0, 60, 124);
        CHECK(a.outputs != c.outputs);
    }

    SUBCASE("inputs follow the static output feedback") {
        const Trajectory t = collect_data(plant, K0, 40, 9);
        CHECK((t.inputs + 6.0 * t.outputs).cwiseAbs().maxCoeff() < 1e-14);
    }

    SUBCASE("T = 200 yields a persistently exciting input Hankel") {
        const Trajectory t = collect_data(plant, K0, 200, 42);
        const HankelBlock h = hankel(12, t.inputs);  // depth T_ini + N at benchmark settings
        const RankReport r = full_row_rank(h.data);
        CHECK(r.full_row_rank);
    }
}

TEST_CASE("simulate_closed_loop") {
    SUBCASE("stable linear loop stays bounded") {
        BenchmarkPlant plant(0.0, {0.01, 0.01}, 0.01);
        StaticOutputFeedback ctrl(-2.0);  // x2+ = (.95 - .2) x2, stable
        SimulationOptions opts;
        opts.T_sim = 200;
        opts.seed = 5;
        const Trajectory t = simulate_closed_loop(plant, ctrl, opts);
        CHECK(t.metadata.at("unstable") == "false");
        CHECK(t.states.cols() == 201);
        CHECK(t.inputs.cols() == 200);
        CHECK(t.outputs.cols() == 201);
        CHECK(t.outputs.cwiseAbs().maxCoeff() < 10.0);
    }

    SUBCASE("divergent drive trips the abort threshold") {
        // A constant u = +20 saturates tanh and parks x2 near 84, well past the
        // threshold; the loop must flag and stop early.
        BenchmarkPlant plant;
        ConstantController ctrl(20.0);
        SimulationOptions opts;
        opts.T_sim = 400;
        opts.seed = 11;
        opts.abort_threshold = 50.0;
        const Trajectory t = simulate_closed_loop(plant, ctrl, opts);
        CHECK(t.metadata.at("unstable") == "true");
        const int first = std::stoi(t.metadata.at("first_unstable_step"));
        CHECK(first < 400);
        CHECK(t.outputs.col(t.outputs.cols() - 1).cwiseAbs().maxCoeff() > 50.0);
        // aborted runs keep the one-more-state-than-input alignment
        CHECK(t.states.cols() == t.inputs.cols() + 1);
    }

    SUBCASE("controller failures carry the step index and partial trajectory") {
        class FailingController : public Controller {
          public:
            Eigen::VectorXd step(const Eigen::VectorXd&) override {
                if (++calls_ >= 4) throw std::runtime_error("solver did not converge");
                return Eigen::VectorXd::Zero(1);
            }

          private:
            int calls_ = 0;
        };
        BenchmarkPlant plant;
        FailingController ctrl;
        SimulationOptions opts;
        opts.T_sim = 10;
        opts.seed = 3;
        try {
            simulate_closed_loop(plant, ctrl, opts);
            FAIL("expected ControllerStepError");
        } catch (const ControllerStepError& e) {
            CHECK(e.step == 3);
            CHECK(e.partial.states.cols() == 4);
            CHECK(e.partial.inputs.cols() == 3);
        }
    }
}

TEST_CASE("trajectory serialization") {
    BenchmarkPlant plant;
    const Trajectory t = collect_data(plant, Eigen::MatrixXd::Constant(1, 1, -6.0), 5, 21);

    const std::string csv = t.to_csv();
    CHECK(csv.substr(0, csv.find('\n')) == "k,x1,x2,u,y");
    // header + T+1 rows
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);

    const std::string json = t.to_json_string();
    CHECK(json.find("\"seed\": 21") != std::string::npos);
    CHECK(json.find("\"states\"") != std::string::npos);
}
