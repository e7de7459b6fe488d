#pragma once

// Shared data model: labeled records, datasets, annotation conditions and
// estimator results.

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cbi {

/// Binary class label. Stored as an integer so it can enter a design matrix
/// directly.
using Label = int;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct LabeledRecord {
    std::string id;
    double y = 0.0;
    std::vector<double> x;  // covariates, may be empty
    std::optional<Label> gold_label;
    std::optional<Label> llm_label;
    bool sampled = false;

    friend bool operator==(const LabeledRecord&, const LabeledRecord&) = default;
};

struct Dataset {
    std::vector<std::string> covariate_names;
    std::vector<LabeledRecord> records;
    std::size_t n_total = 0;
    std::size_t n_labeled = 0;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Builds a dataset with the counts derived from the records.
inline Dataset make_dataset(std::vector<LabeledRecord> records,
                            std::vector<std::string> covariate_names = {}) {
    Dataset d;
    d.covariate_names = std::move(covariate_names);
    d.records = std::move(records);
    d.n_total = d.records.size();
    for (const auto& r : d.records) {
        if (r.sampled) ++d.n_labeled;
    }
    return d;
}

struct Violation {
    std::optional<std::size_t> index;  // absent for dataset-level violations
    std::string message;

    friend bool operator==(const Violation&, const Violation&) = default;
};

/// Reports every invariant violation of `d`. Empty iff the dataset is valid.
inline std::vector<Violation> validate_dataset(const Dataset& d) {
    std::vector<Violation> out;
    const auto is_binary = [](Label l) { return l == 0 || l == 1; };
    std::size_t sampled = 0;
    for (std::size_t i = 0; i < d.records.size(); ++i) {
        const auto& r = d.records[i];
        if (r.sampled) ++sampled;
        if (r.sampled && !r.gold_label) {
            out.push_back({i, "sampled record has no gold_label"});
        }
        if (!r.sampled && r.gold_label) {
            out.push_back({i, "gold_label present on a record that is not sampled"});
        }
        if (r.gold_label && !is_binary(*r.gold_label)) {
            out.push_back({i, "gold_label is not 0 or 1"});
        }
        if (r.llm_label && !is_binary(*r.llm_label)) {
            out.push_back({i, "llm_label is not 0 or 1"});
        }
        if (r.x.size() != d.covariate_names.size()) {
            out.push_back({i, "covariate count does not match covariate_names"});
        }
    }
    if (d.n_total != d.records.size()) {
        out.push_back({std::nullopt, "n_total does not equal the number of records"});
    }
    if (d.n_labeled != sampled) {
        out.push_back({std::nullopt, "n_labeled does not equal the number of sampled records"});
    }
    if (d.n_labeled > d.n_total) {
        out.push_back({std::nullopt, "n_labeled exceeds n_total"});
    }
    return out;
}

enum class Codebook { Complete, Incomplete };
enum class ExpertCodebook { Complete, Incomplete, None };

inline std::string_view to_string(Codebook c) {
    return c == Codebook::Complete ? "complete" : "incomplete";
}

inline std::string_view to_string(ExpertCodebook c) {
    switch (c) {
        case ExpertCodebook::Complete: return "complete";
        case ExpertCodebook::Incomplete: return "incomplete";
        case ExpertCodebook::None: return "none";
    }
    return "none";
}

inline ExpertCodebook parse_expert_codebook(std::string_view s) {
    if (s == "complete") return ExpertCodebook::Complete;
    if (s == "incomplete") return ExpertCodebook::Incomplete;
    if (s == "none") return ExpertCodebook::None;
    throw Error("unknown expert codebook '" + std::string(s) + "'");
}

inline Codebook parse_codebook(std::string_view s) {
    if (s == "complete") return Codebook::Complete;
    if (s == "incomplete") return Codebook::Incomplete;
    throw Error("unknown llm codebook '" + std::string(s) + "'");
}

/// Which codebook the expert annotators and the LLM receive.
struct AnnotationCondition {
    ExpertCodebook expert_codebook = ExpertCodebook::Complete;
    Codebook llm_codebook = Codebook::Complete;

    friend bool operator==(const AnnotationCondition&, const AnnotationCondition&) = default;
};

/// Rows of the inference-approach comparison table.
enum class ApproachRow {
    Pessimist,
    Optimist,
    Pragmatist,
    ProceduralError,
    ReliabilityError,
    ConceptualizationError,
};

inline std::string_view to_string(ApproachRow r) {
    switch (r) {
        case ApproachRow::Pessimist: return "Pessimist";
        case ApproachRow::Optimist: return "Optimist";
        case ApproachRow::Pragmatist: return "Pragmatist";
        case ApproachRow::ProceduralError: return "Procedural error";
        case ApproachRow::ReliabilityError: return "Reliability error";
        case ApproachRow::ConceptualizationError: return "Conceptualization error";
    }
    return "";
}

// Pessimist and Pragmatist share the (complete, complete) annotation; they
// differ in which labels the estimator consumes.
inline AnnotationCondition condition_for(ApproachRow r) {
    switch (r) {
        case ApproachRow::Pessimist: return {ExpertCodebook::Complete, Codebook::Complete};
        case ApproachRow::Optimist: return {ExpertCodebook::None, Codebook::Complete};
        case ApproachRow::Pragmatist: return {ExpertCodebook::Complete, Codebook::Complete};
        case ApproachRow::ProceduralError: return {ExpertCodebook::Incomplete, Codebook::Complete};
        case ApproachRow::ReliabilityError: return {ExpertCodebook::Complete, Codebook::Incomplete};
        case ApproachRow::ConceptualizationError:
            return {ExpertCodebook::Incomplete, Codebook::Incomplete};
    }
    return {};
}

/// Table row an annotation condition corresponds to when both label
/// sources are combined (or when only LLM labels exist).
inline ApproachRow approach_row(const AnnotationCondition& c) {
    if (c.expert_codebook == ExpertCodebook::None) return ApproachRow::Optimist;
    const bool expert_complete = c.expert_codebook == ExpertCodebook::Complete;
    const bool llm_complete = c.llm_codebook == Codebook::Complete;
    if (expert_complete && llm_complete) return ApproachRow::Pragmatist;
    if (!expert_complete && llm_complete) return ApproachRow::ProceduralError;
    if (expert_complete && !llm_complete) return ApproachRow::ReliabilityError;
    return ApproachRow::ConceptualizationError;
}

enum class EstimatorKind { Pessimist, Optimist, PPI, OLS, DSL };

inline std::string_view to_string(EstimatorKind e) {
    switch (e) {
        case EstimatorKind::Pessimist: return "pessimist";
        case EstimatorKind::Optimist: return "optimist";
        case EstimatorKind::PPI: return "ppi";
        case EstimatorKind::OLS: return "ols";
        case EstimatorKind::DSL: return "dsl";
    }
    return "";
}

struct EstimateResult {
    EstimatorKind estimator = EstimatorKind::Pessimist;
    double point = 0.0;
    std::optional<double> half_width;  // normal-approximation CI half-width
    std::size_t n_used = 0;
    std::size_t N_used = 0;
};

}  // namespace cbi
