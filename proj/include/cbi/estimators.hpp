#pragma once

// Prevalence estimators (pessimist, optimist, prediction-powered) and the
// regression estimators (OLS and the design-based corrected regression).
//
// Empirical variances divide by the sample size, not sample size minus one.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "cbi/core_model.hpp"
#include "cbi/linalg.hpp"

namespace cbi {

/// Two-sided normal multiplier. alpha = 0.05 gives exactly 1.96.
inline double normal_multiplier(double alpha = 0.05) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error("alpha must lie in (0,1)");
    if (alpha == 0.05) return 1.96;
    return boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - alpha / 2.0);
}

namespace detail {

inline double mean(std::span<const Label> v) {
    double s = 0.0;
    for (Label l : v) s += l;
    return s / static_cast<double>(v.size());
}

inline double variance(std::span<const Label> v, double m) {
    double s = 0.0;
    for (Label l : v) s += (l - m) * (l - m);
    return s / static_cast<double>(v.size());
}

inline void check_binary(std::span<const Label> v, const char* what) {
    for (Label l : v) {
        if (l != 0 && l != 1) throw Error(std::string(what) + " contains a label other than 0/1");
    }
}

}  // namespace detail

/// Mean of the gold labels with a normal-approximation interval.
inline EstimateResult pessimist_mean(std::span<const Label> gold, double alpha = 0.05) {
    if (gold.size() < 2) throw Error("pessimist_mean needs at least 2 gold labels");
    detail::check_binary(gold, "gold labels");
    const double m = detail::mean(gold);
    const double var = detail::variance(gold, m);
    const double n = static_cast<double>(gold.size());
    return {EstimatorKind::Pessimist, m, normal_multiplier(alpha) * std::sqrt(var / n),
            gold.size(), 0};
}

/// Mean of the LLM labels with a normal-approximation interval.
inline EstimateResult optimist_mean(std::span<const Label> llm, double alpha = 0.05) {
    if (llm.size() < 2) throw Error("optimist_mean needs at least 2 LLM labels");
    detail::check_binary(llm, "LLM labels");
    const double m = detail::mean(llm);
    const double var = detail::variance(llm, m);
    const double N = static_cast<double>(llm.size());
    return {EstimatorKind::Optimist, m, normal_multiplier(alpha) * std::sqrt(var / N), 0,
            llm.size()};
}

/// (llm_label, gold_label) for one unit of the labeled subsample.
using LabelPair = std::pair<Label, Label>;

/// Intermediate quantities of the prediction-powered mean.
struct PpiComponents {
    double theta_f = 0.0;    // mean LLM label over all units
    double rectifier = 0.0;  // mean (llm - gold) over the labeled units
    double var_f = 0.0;      // variance of the LLM labels
    double var_rect = 0.0;   // variance of (llm - gold) on the labeled units
};

inline PpiComponents ppi_components(std::span<const Label> llm,
                                    std::span<const LabelPair> paired) {
    if (llm.size() < 2) throw Error("ppi_mean needs at least 2 LLM labels");
    if (paired.size() < 2) throw Error("ppi_mean needs at least 2 gold-labeled units");
    detail::check_binary(llm, "LLM labels");
    for (const auto& [f, y] : paired) {
        if ((f != 0 && f != 1) || (y != 0 && y != 1)) throw Error("paired labels must be 0/1");
    }
    const double n = static_cast<double>(paired.size());

    PpiComponents c;
    c.theta_f = detail::mean(llm);
    for (const auto& [f, y] : paired) c.rectifier += f - y;
    c.rectifier /= n;
    c.var_f = detail::variance(llm, c.theta_f);
    for (const auto& [f, y] : paired) {
        const double e = (f - y) - c.rectifier;
        c.var_rect += e * e;
    }
    c.var_rect /= n;
    return c;
}

/// Prediction-powered mean: LLM-only mean minus the rectifier estimated on
/// the labeled subsample.
inline EstimateResult ppi_mean(std::span<const Label> llm, std::span<const LabelPair> paired,
                               double alpha = 0.05) {
    const auto c = ppi_components(llm, paired);
    const double N = static_cast<double>(llm.size());
    const double n = static_cast<double>(paired.size());
    const double w = normal_multiplier(alpha) * std::sqrt(c.var_f / N + c.var_rect / n);
    return {EstimatorKind::PPI, c.theta_f - c.rectifier, w, paired.size(), llm.size()};
}

/// Coefficients minimizing squared residuals. Throws RankDeficientError
/// naming the first dependent column.
inline Eigen::VectorXd ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                           const std::vector<std::string>& column_names = {}) {
    return least_squares(design, response, column_names);
}

/// Regression of the response on (label, covariates..., intercept). The label
/// coefficient is the estimand.
struct RegressionSpec {
    // Indices into Dataset::covariate_names; absent means every covariate.
    std::optional<std::vector<std::size_t>> covariates;
    std::size_t target_coefficient = 0;

    std::vector<std::size_t> resolve(const Dataset& d) const {
        std::vector<std::size_t> cols;
        if (!covariates) {
            for (std::size_t j = 0; j < d.covariate_names.size(); ++j) cols.push_back(j);
        } else {
            cols = *covariates;
            for (std::size_t j : cols) {
                if (j >= d.covariate_names.size()) throw Error("covariate index out of range");
            }
        }
        if (target_coefficient >= cols.size() + 2) {
            throw Error("target coefficient index out of range");
        }
        return cols;
    }

    std::vector<std::string> names(const Dataset& d) const {
        std::vector<std::string> out{"label"};
        for (std::size_t j : resolve(d)) out.push_back(d.covariate_names[j]);
        out.emplace_back("intercept");
        return out;
    }
};

enum class LabelSource { Gold, Llm };

/// OLS of y on (label, covariates, 1). With LabelSource::Gold only records
/// carrying a gold label enter; with Llm every record must carry an LLM label.
inline Eigen::VectorXd ols_on_labels(const Dataset& d, const RegressionSpec& spec,
                                     LabelSource source) {
    const auto cols = spec.resolve(d);
    const auto k = static_cast<Eigen::Index>(cols.size() + 2);
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < d.records.size(); ++i) {
        const auto& r = d.records[i];
        const bool has = source == LabelSource::Gold ? r.gold_label.has_value()
                                                     : r.llm_label.has_value();
        if (has) {
            rows.push_back(i);
        } else if (source == LabelSource::Llm) {
            throw Error("record " + std::to_string(i) + " has no llm_label");
        }
    }
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), k);
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& rec = d.records[rows[r]];
        const auto ri = static_cast<Eigen::Index>(r);
        X(ri, 0) = source == LabelSource::Gold ? *rec.gold_label : *rec.llm_label;
        for (std::size_t j = 0; j < cols.size(); ++j) {
            X(ri, static_cast<Eigen::Index>(j + 1)) = rec.x.at(cols[j]);
        }
        X(ri, k - 1) = 1.0;
        y(ri) = rec.y;
    }
    return ols(X, y, spec.names(d));
}

/// Corrected normal equations, scaled by 1/N.
struct MomentSystem {
    Eigen::MatrixXd gram;
    Eigen::VectorXd cross;
};

/// Every normal-equation entry that involves the label is replaced by
///   m(llm) + (sampled / pi) * (m(gold) - m(llm)),
/// which is design-unbiased for the same entry computed from gold labels on
/// every record. Entries without the label are computed directly.
inline MomentSystem dsl_moments(const Dataset& d, const RegressionSpec& spec, double pi) {
    if (!(pi > 0.0 && pi <= 1.0)) throw Error("dsl: sampling probability pi must lie in (0,1]");
    if (d.records.empty()) throw Error("dsl: dataset is empty");
    const auto cols = spec.resolve(d);
    const auto k = static_cast<Eigen::Index>(cols.size() + 2);

    MomentSystem m{Eigen::MatrixXd::Zero(k, k), Eigen::VectorXd::Zero(k)};
    Eigen::VectorXd z(k);  // label-free part of the regressor vector
    for (std::size_t i = 0; i < d.records.size(); ++i) {
        const auto& r = d.records[i];
        if (!r.llm_label) throw Error("dsl: record " + std::to_string(i) + " has no llm_label");
        if (r.sampled && !r.gold_label) {
            throw Error("dsl: sampled record " + std::to_string(i) + " has no gold_label");
        }
        const double f = *r.llm_label;
        const double w = r.sampled ? 1.0 / pi : 0.0;
        const double g = r.sampled ? static_cast<double>(*r.gold_label) : 0.0;

        // Corrected first and second label moments.
        const double a1 = f + w * (g - f);
        const double a2 = f * f + w * (g * g - f * f);

        z(0) = 0.0;
        for (std::size_t j = 0; j < cols.size(); ++j) {
            z(static_cast<Eigen::Index>(j + 1)) = r.x.at(cols[j]);
        }
        z(k - 1) = 1.0;

        m.gram.bottomRightCorner(k - 1, k - 1) += z.tail(k - 1) * z.tail(k - 1).transpose();
        m.gram(0, 0) += a2;
        for (Eigen::Index j = 1; j < k; ++j) {
            m.gram(0, j) += a1 * z(j);
            m.gram(j, 0) += a1 * z(j);
        }
        m.cross(0) += a1 * r.y;
        m.cross.tail(k - 1) += z.tail(k - 1) * r.y;
    }
    const double N = static_cast<double>(d.records.size());
    m.gram /= N;
    m.cross /= N;
    return m;
}

inline Eigen::VectorXd dsl_coefficients(const Dataset& d, const RegressionSpec& spec,
                                        double pi) {
    const auto m = dsl_moments(d, spec, pi);
    return solve_moments(m.gram, m.cross, spec.names(d));
}

/// Design-corrected regression; reports the target coefficient. Intervals come
/// from replication, so half_width is left empty.
inline EstimateResult dsl_regress(const Dataset& d, const RegressionSpec& spec, double pi) {
    const auto b = dsl_coefficients(d, spec, pi);
    EstimateResult out;
    out.estimator = EstimatorKind::DSL;
    out.point = b(static_cast<Eigen::Index>(spec.target_coefficient));
    std::size_t n = 0;
    for (const auto& r : d.records) n += r.sampled ? 1 : 0;
    out.n_used = n;
    out.N_used = d.records.size();
    return out;
}

/// pi = n_labeled / n_total for a dataset whose labeled rows are a simple
/// random sample.
inline double design_probability(const Dataset& d) {
    if (d.records.empty()) return 0.0;
    std::size_t n = 0;
    for (const auto& r : d.records) n += r.sampled ? 1 : 0;
    return static_cast<double>(n) / static_cast<double>(d.records.size());
}

/// Labels for the prevalence estimators pulled out of a dataset.
inline std::vector<Label> gold_labels(const Dataset& d) {
    std::vector<Label> out;
    for (const auto& r : d.records) {
        if (r.gold_label) out.push_back(*r.gold_label);
    }
    return out;
}

inline std::vector<Label> llm_labels(const Dataset& d) {
    std::vector<Label> out;
    out.reserve(d.records.size());
    for (std::size_t i = 0; i < d.records.size(); ++i) {
        if (!d.records[i].llm_label) {
            throw Error("record " + std::to_string(i) + " has no llm_label");
        }
        out.push_back(*d.records[i].llm_label);
    }
    return out;
}

inline std::vector<LabelPair> paired_labels(const Dataset& d) {
    std::vector<LabelPair> out;
    for (std::size_t i = 0; i < d.records.size(); ++i) {
        const auto& r = d.records[i];
        if (!r.gold_label) continue;
        if (!r.llm_label) throw Error("record " + std::to_string(i) + " has no llm_label");
        out.emplace_back(*r.llm_label, *r.gold_label);
    }
    return out;
}

}  // namespace cbi
