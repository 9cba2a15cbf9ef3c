#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dcpc/rng.hpp"

namespace dcpc {

// Discrete-time plant with additive process/measurement noise. step and output
// are deterministic in (x, u, noise draw); instances are immutable.
class PlantModel {
  public:
    virtual ~PlantModel() = default;

    virtual int state_dim() const = 0;
    virtual int input_dim() const = 0;
    virtual int output_dim() const = 0;

    virtual Eigen::VectorXd step(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                 const Eigen::VectorXd& w) const = 0;
    virtual Eigen::VectorXd output(const Eigen::VectorXd& x, const Eigen::VectorXd& nu) const = 0;

    // Per-axis standard deviations of the (diagonal-covariance) noises.
    virtual Eigen::VectorXd process_noise_stddev() const = 0;
    virtual Eigen::VectorXd output_noise_stddev() const = 0;

    Eigen::VectorXd draw_process_noise(GaussianStream& stream) const {
        return process_noise_stddev().cwiseProduct(stream.next(state_dim()));
    }
    Eigen::VectorXd draw_output_noise(GaussianStream& stream) const {
        return output_noise_stddev().cwiseProduct(stream.next(output_dim()));
    }
};

// x1+ = .98 x1 + .1 x2 + theta x2^2
// x2+ = .95 x2 + (0.1 + theta tanh(x1)) u
// y   = x2
// The input gain drifts with x1 and the quadratic term feeds x2 back into x1,
// so the plant is LTI only near the origin (exactly LTI when theta = 0).
class BenchmarkPlant final : public PlantModel {
  public:
    explicit BenchmarkPlant(double theta = 1.0 / 9.0,
                            Eigen::Vector2d process_noise_cov = {0.1, 0.05},
                            double output_noise_var = 0.1);

    int state_dim() const override { return 2; }
    int input_dim() const override { return 1; }
    int output_dim() const override { return 1; }

    Eigen::VectorXd step(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                         const Eigen::VectorXd& w) const override;
    Eigen::VectorXd output(const Eigen::VectorXd& x, const Eigen::VectorXd& nu) const override;

    Eigen::VectorXd process_noise_stddev() const override {
        return process_noise_cov_.cwiseSqrt();
    }
    Eigen::VectorXd output_noise_stddev() const override {
        return Eigen::VectorXd::Constant(1, std::sqrt(output_noise_var_));
    }

    double theta() const { return theta_; }
    // Exact (A, B, C) of the theta = 0 plant.
    Eigen::Matrix2d linear_A() const;
    Eigen::Vector2d linear_B() const;
    Eigen::RowVector2d linear_C() const;

  private:
    double theta_;
    Eigen::Vector2d process_noise_cov_;
    double output_noise_var_;
};

Eigen::Vector2d benchmark_step(const Eigen::Vector2d& x, double u, const Eigen::Vector2d& w,
                               double theta);
double benchmark_output(const Eigen::Vector2d& x, double nu);

// Time-indexed record of one simulation run. Columns are time steps. states and
// outputs carry one more column than inputs when a terminal sample is recorded.
struct Trajectory {
    Eigen::MatrixXd states;
    Eigen::MatrixXd inputs;
    Eigen::MatrixXd outputs;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> metadata;
    std::map<std::string, std::vector<double>> diagnostics;

    Eigen::Index steps() const { return inputs.cols(); }
    void validate() const;

    std::string to_csv() const;
    std::string to_json_string() const;
    void write_csv(const std::string& path) const;
    void write_json(const std::string& path) const;
};

// Stateful feedback law driven by a per-step measurement.
class Controller {
  public:
    virtual ~Controller() = default;
    virtual Eigen::VectorXd step(const Eigen::VectorXd& measurement) = 0;
    // Diagnostics of the most recent step (empty when none).
    virtual std::map<std::string, double> last_diagnostics() const { return {}; }
};

// Thrown when a controller's internal solve fails mid-loop; carries the step
// index and the trajectory recorded so far.
class ControllerStepError : public std::runtime_error {
  public:
    ControllerStepError(int step, const std::string& what, Trajectory partial)
        : std::runtime_error(what), step(step), partial(std::move(partial)) {}
    int step;
    Trajectory partial;
};

// Closed-loop data collection with static output feedback u_k = K0 y_k, from a
// zero initial state, recording T+1 samples (states, inputs, outputs).
Trajectory collect_data(const PlantModel& plant, const Eigen::MatrixXd& K0, int T,
                        std::uint64_t seed);

enum class MeasurementKind { Output, State };

struct SimulationOptions {
    int T_sim = 100;
    std::uint64_t seed = 0;
    double abort_threshold = 50.0;
    MeasurementKind feed = MeasurementKind::Output;
};

// Runs plant and controller in feedback from a zero initial state for T_sim
// steps, aborting early once any |y| exceeds abort_threshold or turns
// non-finite (metadata: unstable, first_unstable_step). Controller solve
// failures are rethrown as ControllerStepError with the partial trajectory.
Trajectory simulate_closed_loop(const PlantModel& plant, Controller& controller,
                                const SimulationOptions& options);

}  // namespace dcpc
