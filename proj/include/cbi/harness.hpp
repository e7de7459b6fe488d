#pragma once

// Monte Carlo experiment grid: condition x delta x method x replicate.

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "cbi/annotation.hpp"
#include "cbi/core_model.hpp"
#include "cbi/dgp.hpp"
#include "cbi/estimators.hpp"
#include "cbi/random.hpp"

namespace cbi {

/// What a replicate estimates. The first three target the prevalence of the
/// protest label; the rest target the label coefficient of y ~ label + x.
enum class Method {
    Pessimist,     // mean of gold labels on the labeled subsample
    Optimist,      // mean of LLM labels on every unit
    PPI,           // prediction-powered mean
    OLS,           // regression on expert labels for every unit
    DSL,           // design-corrected regression
    PessimistOLS,  // regression on the labeled subsample only
    OptimistOLS,   // regression on LLM labels for every unit
};

inline constexpr Method kAllMethods[] = {Method::Pessimist, Method::Optimist,
                                         Method::PPI,       Method::OLS,
                                         Method::DSL,       Method::PessimistOLS,
                                         Method::OptimistOLS};

inline std::string_view to_string(Method m) {
    switch (m) {
        case Method::Pessimist: return "pessimist";
        case Method::Optimist: return "optimist";
        case Method::PPI: return "ppi";
        case Method::OLS: return "ols";
        case Method::DSL: return "dsl";
        case Method::PessimistOLS: return "pessimist_ols";
        case Method::OptimistOLS: return "optimist_ols";
    }
    return "";
}

inline Method parse_method(std::string_view s) {
    for (Method m : kAllMethods) {
        if (to_string(m) == s) return m;
    }
    throw Error("unknown estimator '" + std::string(s) + "'");
}

inline bool is_regression(Method m) {
    return m == Method::OLS || m == Method::DSL || m == Method::PessimistOLS ||
           m == Method::OptimistOLS;
}

inline bool needs_expert_labels(Method m) {
    return m != Method::Optimist && m != Method::OptimistOLS;
}

inline void check_compatible(const AnnotationCondition& cond, Method m) {
    if (cond.expert_codebook == ExpertCodebook::None && needs_expert_labels(m)) {
        throw Error("estimator '" + std::string(to_string(m)) +
                    "' needs expert labels, but the condition (expert=none, llm=" +
                    std::string(to_string(cond.llm_codebook)) + ") is the '" +
                    std::string(to_string(approach_row(cond))) +
                    "' row, which collects no gold labels");
    }
}

namespace detail {

inline Codebook expert_codebook_of(const AnnotationCondition& c) {
    return c.expert_codebook == ExpertCodebook::Incomplete ? Codebook::Incomplete
                                                           : Codebook::Complete;
}

inline EstimateResult regression_result(EstimatorKind kind, const Eigen::VectorXd& b,
                                        std::size_t n, std::size_t N) {
    EstimateResult r;
    r.estimator = kind;
    r.point = b(0);
    r.n_used = n;
    r.N_used = N;
    return r;
}

}  // namespace detail

/// Estimate `m` on an already annotated population.
inline EstimateResult estimate(const AnnotatedPopulation& ap, Method m) {
    check_compatible(ap.condition, m);
    const std::size_t N = ap.units.size();
    switch (m) {
        case Method::Pessimist: return pessimist_mean(*ap.expert_labels);
        case Method::Optimist: return optimist_mean(ap.llm_labels);
        case Method::PPI: {
            std::vector<LabelPair> paired;
            paired.reserve(ap.sampled_indices.size());
            for (std::size_t k = 0; k < ap.sampled_indices.size(); ++k) {
                paired.emplace_back(ap.llm_labels[ap.sampled_indices[k]], (*ap.expert_labels)[k]);
            }
            return ppi_mean(ap.llm_labels, paired);
        }
        case Method::OLS: {
            Dataset d = to_dataset(ap);
            const Codebook cb = detail::expert_codebook_of(ap.condition);
            for (std::size_t i = 0; i < N; ++i) {
                d.records[i].gold_label = expert_label(ap.units[i], cb);
                d.records[i].sampled = true;
            }
            d.n_labeled = N;
            const auto b = ols_on_labels(d, RegressionSpec{}, LabelSource::Gold);
            auto r = detail::regression_result(EstimatorKind::OLS, b, N, N);
            return r;
        }
        case Method::DSL: {
            const Dataset d = to_dataset(ap);
            return dsl_regress(d, RegressionSpec{}, design_probability(d));
        }
        case Method::PessimistOLS: {
            const Dataset d = to_dataset(ap);
            const auto b = ols_on_labels(d, RegressionSpec{}, LabelSource::Gold);
            return detail::regression_result(EstimatorKind::OLS, b, d.n_labeled, 0);
        }
        case Method::OptimistOLS: {
            const Dataset d = to_dataset(ap);
            const auto b = ols_on_labels(d, RegressionSpec{}, LabelSource::Llm);
            return detail::regression_result(EstimatorKind::OLS, b, 0, N);
        }
    }
    throw Error("unhandled estimator");
}

/// One replicate: generate, annotate, estimate. cfg.llm_error is the LLM flip
/// rate; `seed` keys the single stream used for every draw.
inline EstimateResult run_cell(const SimulationConfig& cfg, const AnnotationCondition& cond,
                               Method m, std::uint64_t seed) {
    validate(cfg);
    check_compatible(cond, m);
    RandomStream rng(seed);
    auto pop = generate_population(cfg, rng);
    const auto ap = annotate(std::move(pop), cond, cfg.llm_error, cfg.label_fraction, rng);
    return estimate(ap, m);
}

struct ExperimentGrid {
    SimulationConfig base_config;
    std::vector<double> deltas{0.05, 0.10, 0.20, 0.30};
    std::vector<AnnotationCondition> conditions;
    std::vector<Method> estimators;
    std::size_t n_seeds = 250;
    std::uint64_t seed_base = 0;
};

inline void validate(const ExperimentGrid& g) {
    validate(g.base_config);
    if (g.n_seeds < 1) throw Error("grid: n_seeds must be at least 1");
    if (g.deltas.empty() || g.conditions.empty() || g.estimators.empty()) {
        throw Error("grid: deltas, conditions and estimators must be nonempty");
    }
    for (double d : g.deltas) {
        if (!(d >= 0.0 && d <= 1.0)) throw Error("grid: every delta must lie in [0,1]");
    }
    for (const auto& c : g.conditions) {
        for (Method m : g.estimators) check_compatible(c, m);
    }
}

struct CellId {
    AnnotationCondition condition;
    double delta = 0.0;
    Method method = Method::DSL;

    std::string key() const {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(delta)));
        return "expert=" + std::string(to_string(condition.expert_codebook)) +
               ";llm=" + std::string(to_string(condition.llm_codebook)) + ";delta=" + buf +
               ";method=" + std::string(to_string(method));
    }

    std::string describe() const {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", delta);
        return "(expert=" + std::string(to_string(condition.expert_codebook)) +
               ", llm=" + std::string(to_string(condition.llm_codebook)) + ", delta=" + buf +
               ", estimator=" + std::string(to_string(method)) + ")";
    }
};

/// Stream seed of replicate r of a cell.
inline std::uint64_t replicate_seed(std::uint64_t seed_base, const CellId& cell, std::size_t r) {
    return derive_seed(seed_base, fnv1a64(cell.key()), static_cast<std::uint64_t>(r));
}

struct ExperimentSummary {
    CellId cell;
    std::size_t n_seeds = 0;
    double mean_estimate = 0.0;
    double p2_5 = 0.0;
    double p97_5 = 0.0;
    double truth = 0.0;
    bool covers_truth = false;
};

/// Empirical quantile with linear interpolation between order statistics:
/// h = (n - 1) q on the sorted sample.
inline double empirical_quantile(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw Error("quantile of an empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct Aggregate {
    double mean = 0.0;
    double p2_5 = 0.0;
    double p97_5 = 0.0;
    bool covers_truth = false;
};

inline Aggregate aggregate(std::span<const double> points, double truth) {
    if (points.empty()) throw Error("aggregate: no replicate estimates");
    std::vector<double> s(points.begin(), points.end());
    std::sort(s.begin(), s.end());
    double sum = 0.0;
    for (double p : points) sum += p;
    Aggregate a;
    a.mean = sum / static_cast<double>(points.size());
    a.p2_5 = empirical_quantile(s, 0.025);
    a.p97_5 = empirical_quantile(s, 0.975);
    a.covers_truth = a.p2_5 <= truth && truth <= a.p97_5;
    return a;
}

inline double truth_for(const SimulationConfig& cfg, Method m) {
    return is_regression(m) ? cfg.tau : true_prevalence(cfg);
}

/// Cells in grid order: conditions, then deltas, then estimators.
inline std::vector<CellId> grid_cells(const ExperimentGrid& g) {
    std::vector<CellId> cells;
    for (const auto& c : g.conditions) {
        for (double d : g.deltas) {
            for (Method m : g.estimators) cells.push_back({c, d, m});
        }
    }
    return cells;
}

/// Runs every replicate of every cell. Work is spread over `parallelism`
/// threads; results are keyed by (cell, replicate) so the output does not
/// depend on the thread count.
inline std::vector<ExperimentSummary> run_grid(const ExperimentGrid& g,
                                               std::size_t parallelism = 1) {
    validate(g);
    const auto cells = grid_cells(g);
    const std::size_t total = cells.size() * g.n_seeds;
    std::vector<double> points(total);
    std::vector<std::exception_ptr> errors(total);

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t item = next++; item < total; item = next++) {
            const std::size_t c = item / g.n_seeds;
            const std::size_t r = item % g.n_seeds;
            try {
                SimulationConfig cfg = g.base_config;
                cfg.llm_error = cells[c].delta;
                points[item] = run_cell(cfg, cells[c].condition, cells[c].method,
                                        replicate_seed(g.seed_base, cells[c], r))
                                   .point;
            } catch (...) {
                errors[item] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::max<std::size_t>(1, std::min(parallelism, total));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }

    for (std::size_t item = 0; item < total; ++item) {
        if (!errors[item]) continue;
        const auto& cell = cells[item / g.n_seeds];
        try {
            std::rethrow_exception(errors[item]);
        } catch (const std::exception& e) {
            throw Error("cell " + cell.describe() + " replicate " +
                        std::to_string(item % g.n_seeds) + ": " + e.what());
        }
    }

    std::vector<ExperimentSummary> out;
    out.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const std::span<const double> pts(points.data() + c * g.n_seeds, g.n_seeds);
        const double truth = truth_for(g.base_config, cells[c].method);
        const auto a = aggregate(pts, truth);
        out.push_back({cells[c], g.n_seeds, a.mean, a.p2_5, a.p97_5, truth, a.covers_truth});
    }
    return out;
}

}  // namespace cbi
