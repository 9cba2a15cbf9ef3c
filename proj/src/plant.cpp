#include "dcpc/plant.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace dcpc {

BenchmarkPlant::BenchmarkPlant(double theta, Eigen::Vector2d process_noise_cov,
                               double output_noise_var)
    : theta_(theta),
      process_noise_cov_(std::move(process_noise_cov)),
      output_noise_var_(output_noise_var) {
    if (process_noise_cov_.minCoeff() < 0.0 || output_noise_var_ < 0.0) {
        throw std::invalid_argument("BenchmarkPlant: noise covariances must be nonnegative");
    }
}

Eigen::Vector2d benchmark_step(const Eigen::Vector2d& x, double u, const Eigen::Vector2d& w,
                               double theta) {
    Eigen::Vector2d next;
    next(0) = 0.98 * x(0) + 0.1 * x(1) + theta * x(1) * x(1);
    next(1) = 0.95 * x(1) + (0.1 + theta * std::tanh(x(0))) * u;
    return next + w;
}

double benchmark_output(const Eigen::Vector2d& x, double nu) { return x(1) + nu; }

Eigen::VectorXd BenchmarkPlant::step(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                     const Eigen::VectorXd& w) const {
    return benchmark_step(x, u(0), w, theta_);
}

Eigen::VectorXd BenchmarkPlant::output(const Eigen::VectorXd& x, const Eigen::VectorXd& nu) const {
    return Eigen::VectorXd::Constant(1, benchmark_output(x, nu(0)));
}

Eigen::Matrix2d BenchmarkPlant::linear_A() const {
    Eigen::Matrix2d A;
    A << 0.98, 0.1, 0.0, 0.95;
    return A;
}

Eigen::Vector2d BenchmarkPlant::linear_B() const { return {0.0, 0.1}; }

Eigen::RowVector2d BenchmarkPlant::linear_C() const { return {0.0, 1.0}; }

void Trajectory::validate() const {
    const Eigen::Index n = states.cols();
    if (outputs.cols() != n) {
        throw std::invalid_argument("Trajectory: outputs must align with states index-for-index");
    }
    if (inputs.cols() != n && inputs.cols() != n - 1) {
        throw std::invalid_argument(
            "Trajectory: inputs must have the same count as states or one fewer");
    }
}

std::string Trajectory::to_csv() const {
    validate();
    std::ostringstream out;
    out.precision(17);
    out << "k";
    for (Eigen::Index i = 0; i < states.rows(); ++i) out << ",x" << (i + 1);
    for (Eigen::Index i = 0; i < inputs.rows(); ++i) out << ",u" << (inputs.rows() > 1 ? std::to_string(i + 1) : "");
    for (Eigen::Index i = 0; i < outputs.rows(); ++i) out << ",y" << (outputs.rows() > 1 ? std::to_string(i + 1) : "");
    out << "\n";
    for (Eigen::Index k = 0; k < states.cols(); ++k) {
        out << k;
        for (Eigen::Index i = 0; i < states.rows(); ++i) out << "," << states(i, k);
        for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
            out << ",";
            if (k < inputs.cols()) out << inputs(i, k);
        }
        for (Eigen::Index i = 0; i < outputs.rows(); ++i) out << "," << outputs(i, k);
        out << "\n";
    }
    return out.str();
}

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

std::string Trajectory::to_json_string() const {
    validate();
    nlohmann::json j;
    j["seed"] = seed;
    j["states"] = matrix_to_json(states);
    j["inputs"] = matrix_to_json(inputs);
    j["outputs"] = matrix_to_json(outputs);
    j["metadata"] = metadata;
    j["diagnostics"] = diagnostics;
    return j.dump(2);
}

void Trajectory::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("Trajectory::write_csv: cannot open " + path);
    out << to_csv();
}

void Trajectory::write_json(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("Trajectory::write_json: cannot open " + path);
    out << to_json_string() << "\n";
}

Trajectory collect_data(const PlantModel& plant, const Eigen::MatrixXd& K0, int T,
                        std::uint64_t seed) {
    if (T < 0) throw std::invalid_argument("collect_data: T must be nonnegative");
    if (K0.rows() != plant.input_dim() || K0.cols() != plant.output_dim()) {
        throw std::invalid_argument("collect_data: K0 must be input_dim x output_dim");
    }

    GaussianStream process_noise(derive_seed(seed, 1));
    GaussianStream output_noise(derive_seed(seed, 2));

    const Eigen::Index n = T + 1;
    Trajectory traj;
    traj.seed = seed;
    traj.states.resize(plant.state_dim(), n);
    traj.inputs.resize(plant.input_dim(), n);
    traj.outputs.resize(plant.output_dim(), n);

    Eigen::VectorXd x = Eigen::VectorXd::Zero(plant.state_dim());
    for (Eigen::Index k = 0; k < n; ++k) {
        const Eigen::VectorXd y = plant.output(x, plant.draw_output_noise(output_noise));
        const Eigen::VectorXd u = K0 * y;
        traj.states.col(k) = x;
        traj.inputs.col(k) = u;
        traj.outputs.col(k) = y;
        if (k + 1 < n) {
            x = plant.step(x, u, plant.draw_process_noise(process_noise));
        }
    }
    traj.metadata["kind"] = "collection";
    return traj;
}

Trajectory simulate_closed_loop(const PlantModel& plant, Controller& controller,
                                const SimulationOptions& options) {
    if (options.T_sim < 1) throw std::invalid_argument("simulate_closed_loop: T_sim must be >= 1");

    GaussianStream process_noise(derive_seed(options.seed, 1));
    GaussianStream output_noise(derive_seed(options.seed, 2));

    std::vector<Eigen::VectorXd> states, inputs, outputs;
    states.reserve(options.T_sim + 1);

    Trajectory traj;
    traj.seed = options.seed;
    traj.metadata["kind"] = "closed_loop";
    traj.metadata["unstable"] = "false";

    const auto finalize = [&](Trajectory& t) {
        t.states.resize(plant.state_dim(), static_cast<Eigen::Index>(states.size()));
        for (std::size_t i = 0; i < states.size(); ++i) t.states.col(i) = states[i];
        t.inputs.resize(plant.input_dim(), static_cast<Eigen::Index>(inputs.size()));
        for (std::size_t i = 0; i < inputs.size(); ++i) t.inputs.col(i) = inputs[i];
        t.outputs.resize(plant.output_dim(), static_cast<Eigen::Index>(outputs.size()));
        for (std::size_t i = 0; i < outputs.size(); ++i) t.outputs.col(i) = outputs[i];
    };

    Eigen::VectorXd x = Eigen::VectorXd::Zero(plant.state_dim());
    for (int k = 0; k <= options.T_sim; ++k) {
        const Eigen::VectorXd y = plant.output(x, plant.draw_output_noise(output_noise));
        states.push_back(x);
        outputs.push_back(y);

        const bool blown = !y.allFinite() || !x.allFinite() ||
                           y.cwiseAbs().maxCoeff() > options.abort_threshold;
        if (blown) {
            traj.metadata["unstable"] = "true";
            traj.metadata["first_unstable_step"] = std::to_string(k);
            break;
        }
        if (k == options.T_sim) break;  // terminal sample recorded, no further input

        Eigen::VectorXd u;
        try {
            u = controller.step(options.feed == MeasurementKind::Output ? y : x);
        } catch (const std::exception& e) {
            finalize(traj);
            std::ostringstream msg;
            msg << "controller failed at step " << k << ": " << e.what();
            throw ControllerStepError(k, msg.str(), traj);
        }
        inputs.push_back(u);
        for (const auto& [key, value] : controller.last_diagnostics()) {
            traj.diagnostics[key].push_back(value);
        }

        x = plant.step(x, u, plant.draw_process_noise(process_noise));
    }

    finalize(traj);
    return traj;
}

}  // namespace dcpc
