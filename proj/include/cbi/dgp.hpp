#pragma once

// Synthetic protest population: four background aspects, a violence flag, a
// true protest label defined by their conjunction, one covariate, and a
// linear outcome.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cbi/core_model.hpp"
#include "cbi/random.hpp"

namespace cbi {

struct SimulationConfig {
    double p_z1 = 0.2;   // meets a basic protest definition
    double p_z2 = 0.96;  // not a hunger strike
    double p_z3 = 0.9;   // directed against someone
    double p_z4 = 0.88;  // more than three attendees
    double p_v = 0.05;   // violent event
    double beta0 = -2.0;
    double tau = 1.0;
    double beta1 = -5.0;
    double beta2 = 1.0;
    double noise_sd = 1.0;
    std::size_t N = 10'000;
    double label_fraction = 0.1;
    double llm_error = 0.1;
    std::uint64_t seed = 0;

    friend bool operator==(const SimulationConfig&, const SimulationConfig&) = default;
};

inline void validate(const SimulationConfig& c) {
    const auto prob = [](double p, const char* name) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw Error(std::string("SimulationConfig: ") + name + " must lie in [0,1]");
        }
    };
    prob(c.p_z1, "p_z1");
    prob(c.p_z2, "p_z2");
    prob(c.p_z3, "p_z3");
    prob(c.p_z4, "p_z4");
    prob(c.p_v, "p_v");
    prob(c.llm_error, "llm_error");
    if (!(c.noise_sd > 0.0) || !std::isfinite(c.noise_sd)) {
        throw Error("SimulationConfig: noise_sd must be positive");
    }
    if (c.N < 1) throw Error("SimulationConfig: N must be at least 1");
    if (!(c.label_fraction > 0.0 && c.label_fraction <= 1.0)) {
        throw Error("SimulationConfig: label_fraction must lie in (0,1]");
    }
    for (double b : {c.beta0, c.tau, c.beta1, c.beta2}) {
        if (!std::isfinite(b)) throw Error("SimulationConfig: coefficients must be finite");
    }
}

struct PopulationUnit {
    Label z1 = 0, z2 = 0, z3 = 0, z4 = 0;
    Label v = 0;  // violent event
    Label d = 0;  // true protest label
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const PopulationUnit&, const PopulationUnit&) = default;
};

/// Draws cfg.N units. Per unit the draw order is z1, z2, z3, z4, v, x, eps;
/// units are drawn in index order.
inline std::vector<PopulationUnit> generate_population(const SimulationConfig& cfg,
                                                       RandomStream& rng) {
    validate(cfg);
    std::vector<PopulationUnit> units(cfg.N);
    for (auto& u : units) {
        u.z1 = rng.bernoulli(cfg.p_z1);
        u.z2 = rng.bernoulli(cfg.p_z2);
        u.z3 = rng.bernoulli(cfg.p_z3);
        u.z4 = rng.bernoulli(cfg.p_z4);
        u.v = rng.bernoulli(cfg.p_v);
        u.d = (u.z1 && u.z2 && u.z3 && u.z4 && !u.v) ? 1 : 0;
        u.x = rng.normal();
        const double eps = cfg.noise_sd * rng.normal();
        u.y = cfg.beta0 + cfg.tau * u.d + cfg.beta1 * u.v + cfg.beta2 * u.x + eps;
    }
    return units;
}

inline std::vector<PopulationUnit> generate_population(const SimulationConfig& cfg) {
    RandomStream rng(cfg.seed);
    return generate_population(cfg, rng);
}

/// E[d] in closed form.
inline double true_prevalence(const SimulationConfig& cfg) {
    validate(cfg);
    return cfg.p_z1 * cfg.p_z2 * cfg.p_z3 * cfg.p_z4 * (1.0 - cfg.p_v);
}

}  // namespace cbi
