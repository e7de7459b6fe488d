#pragma once

// Expert and LLM annotation of a simulated population.
//
// Experts apply their codebook without error. The LLM applies its codebook
// and then flips the label with probability delta.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "cbi/core_model.hpp"
#include "cbi/dgp.hpp"
#include "cbi/random.hpp"

namespace cbi {

/// Complete codebooks exclude violent events; incomplete ones do not.
inline Label expert_label(const PopulationUnit& u, Codebook codebook) {
    return codebook == Codebook::Complete ? u.d : ((u.d || u.v) ? 1 : 0);
}

inline void check_delta(double delta) {
    if (!(delta >= 0.0 && delta <= 1.0)) throw Error("llm error rate must lie in [0,1]");
}

inline Label llm_label(const PopulationUnit& u, Codebook codebook, double delta,
                       RandomStream& rng) {
    check_delta(delta);
    const Label base = expert_label(u, codebook);
    return rng.uniform() <= delta ? 1 - base : base;
}

struct AnnotatedPopulation {
    std::vector<PopulationUnit> units;
    AnnotationCondition condition;
    std::optional<std::vector<Label>> expert_labels;  // aligned with sampled_indices
    std::vector<Label> llm_labels;                     // one per unit
    std::vector<std::size_t> sampled_indices;          // ascending
};

/// Simple random sample of k distinct indices from [0, n), sorted ascending.
/// Partial Fisher-Yates; consumes exactly k draws.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                           RandomStream& rng) {
    if (k > n) throw Error("sample size exceeds population size");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

inline std::size_t labeled_count(std::size_t N, double label_fraction) {
    // Guard against 0.1 * 10000 = 1000.0000000000001 rounding up.
    const double raw = label_fraction * static_cast<double>(N);
    const double rounded = std::round(raw);
    const double n = std::abs(raw - rounded) < 1e-9 ? rounded : std::ceil(raw);
    return std::min(N, static_cast<std::size_t>(n));
}

/// LLM labels are drawn first, one uniform per unit in index order, then the
/// labeled subsample.
inline AnnotatedPopulation annotate(std::vector<PopulationUnit> pop,
                                    const AnnotationCondition& cond, double delta,
                                    double label_fraction, RandomStream& rng) {
    if (pop.empty()) throw Error("annotate: population is empty");
    check_delta(delta);
    if (cond.expert_codebook != ExpertCodebook::None &&
        !(label_fraction > 0.0 && label_fraction <= 1.0)) {
        throw Error("annotate: label_fraction must lie in (0,1] when experts annotate");
    }

    AnnotatedPopulation out;
    out.condition = cond;
    out.llm_labels.reserve(pop.size());
    for (const auto& u : pop) {
        out.llm_labels.push_back(llm_label(u, cond.llm_codebook, delta, rng));
    }
    if (cond.expert_codebook != ExpertCodebook::None) {
        const Codebook cb = cond.expert_codebook == ExpertCodebook::Complete
                                ? Codebook::Complete
                                : Codebook::Incomplete;
        out.sampled_indices =
            sample_without_replacement(pop.size(), labeled_count(pop.size(), label_fraction), rng);
        std::vector<Label> gold;
        gold.reserve(out.sampled_indices.size());
        for (std::size_t i : out.sampled_indices) gold.push_back(expert_label(pop[i], cb));
        out.expert_labels = std::move(gold);
    }
    out.units = std::move(pop);
    return out;
}

/// Flattens an annotated population into the dataset used by the estimators,
/// with x as the single covariate.
inline Dataset to_dataset(const AnnotatedPopulation& ap) {
    std::vector<LabeledRecord> recs(ap.units.size());
    for (std::size_t i = 0; i < ap.units.size(); ++i) {
        recs[i].id = std::to_string(i);
        recs[i].y = ap.units[i].y;
        recs[i].x = {ap.units[i].x};
        recs[i].llm_label = ap.llm_labels[i];
    }
    if (ap.expert_labels) {
        for (std::size_t k = 0; k < ap.sampled_indices.size(); ++k) {
            auto& r = recs[ap.sampled_indices[k]];
            r.gold_label = (*ap.expert_labels)[k];
            r.sampled = true;
        }
    }
    return make_dataset(std::move(recs), {"x"});
}

}  // namespace cbi
