#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace dcpc {

// SplitMix64 finalizer; used both as a stream derivation hash and to seed engines.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives an independent child seed from (base, stream). Distinct streams of the
// same base are decorrelated, so Monte Carlo replicas can run concurrently while
// staying reproducible.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    return splitmix64(splitmix64(base) ^ splitmix64(stream * 0xd6e8feb86659fd93ULL + 1));
}

// Deterministic standard-normal stream. Box-Muller on explicitly constructed
// uniforms so draws do not depend on the standard library's distribution
// implementation.
class GaussianStream {
  public:
    explicit GaussianStream(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    double next() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0,1], u2 in [0,1)
        const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    Eigen::VectorXd next(Eigen::Index n) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = next();
        return v;
    }

  private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace dcpc
