#pragma once

// File formats: dataset CSV, summary CSV/JSON, grid configuration JSON, run
// manifest, and the SVG interval plot.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "cbi/core_model.hpp"
#include "cbi/dgp.hpp"
#include "cbi/harness.hpp"
#include "cbi/random.hpp"

namespace cbi {

inline constexpr std::string_view kToolVersion = "1.0.0";

// ---------------------------------------------------------------------------
// CSV primitives (RFC 4180 quoting, '\n' line endings)

inline std::string csv_quote(std::string_view field) {
    const bool needs = field.find_first_of(",\"\n\r") != std::string_view::npos;
    if (!needs) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

/// Splits a CSV text into records. Quoted fields may contain separators,
/// doubled quotes and newlines. Each record carries its starting line number.
struct CsvRow {
    std::size_t line = 0;
    std::vector<std::string> fields;
};

inline std::vector<CsvRow> parse_csv(std::string_view text) {
    std::vector<CsvRow> rows;
    CsvRow row;
    std::string field;
    std::size_t line = 1;
    row.line = 1;
    bool in_quotes = false;
    bool field_started = false;
    bool any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field += c;
            }
            continue;
        }
        switch (c) {
            case '"':
                if (!field.empty()) {
                    throw Error("line " + std::to_string(line) + ": stray quote in field");
                }
                in_quotes = true;
                field_started = true;
                any = true;
                break;
            case ',':
                row.fields.push_back(std::move(field));
                field.clear();
                field_started = false;
                any = true;
                break;
            case '\r': break;
            case '\n':
                if (any || field_started || !field.empty()) {
                    row.fields.push_back(std::move(field));
                    rows.push_back(std::move(row));
                }
                field.clear();
                row = CsvRow{};
                ++line;
                row.line = line;
                any = field_started = false;
                break;
            default:
                field += c;
                any = true;
        }
    }
    if (in_quotes) throw Error("line " + std::to_string(row.line) + ": unterminated quote");
    if (any || field_started || !field.empty()) {
        row.fields.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("failed writing '" + path + "'");
}

/// Shortest decimal text that parses back to the same double.
inline std::string format_exact(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

/// Six significant digits.
inline std::string format_6g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline double parse_double(std::string_view s, std::size_t line, std::string_view column) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, v);
    if (s.empty() || res.ec != std::errc() || res.ptr != end || !std::isfinite(v)) {
        throw Error("line " + std::to_string(line) + ": column '" + std::string(column) +
                    "' is not a finite number: '" + std::string(s) + "'");
    }
    return v;
}

// ---------------------------------------------------------------------------
// Dataset CSV: id,y,<covariates...>,llm_label,gold_label

namespace detail {

enum class LabelAlphabet { Digits, YesNo, TrueFalse };

inline std::optional<std::pair<Label, LabelAlphabet>> parse_label_token(std::string_view s) {
    if (s == "0") return std::pair{0, LabelAlphabet::Digits};
    if (s == "1") return std::pair{1, LabelAlphabet::Digits};
    if (s == "no") return std::pair{0, LabelAlphabet::YesNo};
    if (s == "yes") return std::pair{1, LabelAlphabet::YesNo};
    if (s == "false") return std::pair{0, LabelAlphabet::TrueFalse};
    if (s == "true") return std::pair{1, LabelAlphabet::TrueFalse};
    return std::nullopt;
}

}  // namespace detail

inline std::string dataset_to_csv(const Dataset& d) {
    std::string out = "id,y";
    for (const auto& n : d.covariate_names) out += "," + csv_quote(n);
    out += ",llm_label,gold_label\n";
    for (const auto& r : d.records) {
        out += csv_quote(r.id);
        out += ',';
        out += format_exact(r.y);
        for (double x : r.x) {
            out += ',';
            out += format_exact(x);
        }
        out += ',';
        if (r.llm_label) out += std::to_string(*r.llm_label);
        out += ',';
        if (r.gold_label) out += std::to_string(*r.gold_label);
        out += '\n';
    }
    return out;
}

inline void write_dataset_csv(const Dataset& d, const std::string& path) {
    write_file(path, dataset_to_csv(d));
}

/// Parses the dataset schema. Rows with an empty gold_label are unsampled.
/// Labels may be written 0/1, no/yes or false/true, but one file must use a
/// single alphabet.
inline Dataset dataset_from_csv(std::string_view text) {
    const auto rows = parse_csv(text);
    if (rows.empty()) throw Error("dataset CSV is empty");
    const auto& header = rows.front().fields;
    if (header.size() < 4 || header[0] != "id" || header[1] != "y" ||
        header[header.size() - 2] != "llm_label" || header.back() != "gold_label") {
        throw Error("line 1: header must be id,y,<covariates...>,llm_label,gold_label");
    }
    std::vector<std::string> cov(header.begin() + 2, header.end() - 2);
    std::set<std::string> seen_ids;

    std::optional<detail::LabelAlphabet> alphabet;
    auto label = [&](const std::string& s, std::size_t line,
                     std::string_view column) -> std::optional<Label> {
        if (s.empty()) return std::nullopt;
        const auto t = detail::parse_label_token(s);
        if (!t) {
            throw Error("line " + std::to_string(line) + ": column '" + std::string(column) +
                        "' is not a binary label: '" + s + "'");
        }
        if (alphabet && *alphabet != t->second) {
            throw Error("line " + std::to_string(line) +
                        ": mixed label alphabet (labels must all be 0/1, no/yes or false/true)");
        }
        alphabet = t->second;
        return t->first;
    };

    std::vector<LabeledRecord> recs;
    recs.reserve(rows.size() - 1);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.fields.size() != header.size()) {
            throw Error("line " + std::to_string(row.line) + ": expected " +
                        std::to_string(header.size()) + " fields, found " +
                        std::to_string(row.fields.size()));
        }
        LabeledRecord r;
        r.id = row.fields[0];
        if (!seen_ids.insert(r.id).second) {
            throw Error("line " + std::to_string(row.line) + ": duplicate id '" + r.id + "'");
        }
        r.y = parse_double(row.fields[1], row.line, "y");
        for (std::size_t j = 0; j < cov.size(); ++j) {
            r.x.push_back(parse_double(row.fields[2 + j], row.line, cov[j]));
        }
        r.llm_label = label(row.fields[header.size() - 2], row.line, "llm_label");
        r.gold_label = label(row.fields.back(), row.line, "gold_label");
        r.sampled = r.gold_label.has_value();
        recs.push_back(std::move(r));
    }
    auto d = make_dataset(std::move(recs), std::move(cov));
    if (const auto v = validate_dataset(d); !v.empty()) {
        throw Error("dataset invalid: " + v.front().message);
    }
    return d;
}

inline Dataset read_dataset_csv(const std::string& path) {
    return dataset_from_csv(read_file(path));
}

// ---------------------------------------------------------------------------
// Grid configuration JSON

inline nlohmann::ordered_json to_json(const SimulationConfig& c) {
    return nlohmann::ordered_json{
        {"p_z1", c.p_z1},         {"p_z2", c.p_z2},
        {"p_z3", c.p_z3},         {"p_z4", c.p_z4},
        {"p_v", c.p_v},           {"beta0", c.beta0},
        {"tau", c.tau},           {"beta1", c.beta1},
        {"beta2", c.beta2},       {"noise_sd", c.noise_sd},
        {"N", c.N},               {"label_fraction", c.label_fraction},
        {"llm_error", c.llm_error}, {"seed", c.seed},
    };
}

inline SimulationConfig simulation_config_from_json(const nlohmann::json& j) {
    static const std::set<std::string> known{"p_z1", "p_z2", "p_z3", "p_z4", "p_v",
                                             "beta0", "tau", "beta1", "beta2", "noise_sd",
                                             "N", "label_fraction", "llm_error", "seed"};
    if (!j.is_object()) throw Error("base_config must be an object");
    for (const auto& [k, v] : j.items()) {
        if (!known.count(k)) throw Error("base_config: unknown field '" + k + "'");
    }
    SimulationConfig c;
    auto get = [&](const char* k, auto& field) {
        if (j.contains(k)) field = j.at(k).get<std::remove_reference_t<decltype(field)>>();
    };
    get("p_z1", c.p_z1);
    get("p_z2", c.p_z2);
    get("p_z3", c.p_z3);
    get("p_z4", c.p_z4);
    get("p_v", c.p_v);
    get("beta0", c.beta0);
    get("tau", c.tau);
    get("beta1", c.beta1);
    get("beta2", c.beta2);
    get("noise_sd", c.noise_sd);
    get("N", c.N);
    get("label_fraction", c.label_fraction);
    get("llm_error", c.llm_error);
    get("seed", c.seed);
    validate(c);
    return c;
}

inline nlohmann::ordered_json to_json(const ExperimentGrid& g) {
    nlohmann::ordered_json conds = nlohmann::ordered_json::array();
    for (const auto& c : g.conditions) {
        conds.push_back({{"expert_codebook", to_string(c.expert_codebook)},
                         {"llm_codebook", to_string(c.llm_codebook)}});
    }
    nlohmann::ordered_json ests = nlohmann::ordered_json::array();
    for (Method m : g.estimators) ests.push_back(to_string(m));
    return nlohmann::ordered_json{{"base_config", to_json(g.base_config)},
                                  {"deltas", g.deltas},
                                  {"conditions", conds},
                                  {"estimators", ests},
                                  {"n_seeds", g.n_seeds},
                                  {"seed_base", g.seed_base}};
}

inline ExperimentGrid grid_from_json(const nlohmann::json& j) {
    try {
        ExperimentGrid g;
        if (j.contains("base_config")) g.base_config = simulation_config_from_json(j["base_config"]);
        if (j.contains("deltas")) g.deltas = j["deltas"].get<std::vector<double>>();
        g.conditions.clear();
        for (const auto& c : j.at("conditions")) {
            g.conditions.push_back({parse_expert_codebook(c.at("expert_codebook").get<std::string>()),
                                    parse_codebook(c.at("llm_codebook").get<std::string>())});
        }
        for (const auto& e : j.at("estimators")) g.estimators.push_back(parse_method(e.get<std::string>()));
        if (j.contains("n_seeds")) g.n_seeds = j["n_seeds"].get<std::size_t>();
        if (j.contains("seed_base")) g.seed_base = j["seed_base"].get<std::uint64_t>();
        validate(g);
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("grid configuration: ") + e.what());
    }
}

inline ExperimentGrid read_grid_json(const std::string& path) {
    try {
        return grid_from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error("'" + path + "': " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Run manifest

struct RunManifest {
    std::string config_hash;  // also the manifest hash carried by every artifact
    std::string tool_version{kToolVersion};
    std::string started_at;
    std::string finished_at;
    std::uint64_t seed_base = 0;
    std::vector<std::string> outputs;
};

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Hash of the canonical grid configuration and the tool version. Timestamps
/// are excluded so reruns of one configuration share a hash.
inline std::string config_hash(const ExperimentGrid& g) {
    return hex64(fnv1a64(to_json(g).dump() + "|" + std::string(kToolVersion)));
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline void write_manifest(const RunManifest& m, const std::string& path) {
    nlohmann::ordered_json j{{"config_hash", m.config_hash}, {"tool_version", m.tool_version},
                             {"started_at", m.started_at},   {"finished_at", m.finished_at},
                             {"seed_base", m.seed_base},     {"outputs", m.outputs}};
    write_file(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Summaries

enum class SummaryFormat { Csv, Json };

inline SummaryFormat parse_summary_format(std::string_view s) {
    if (s == "csv") return SummaryFormat::Csv;
    if (s == "json") return SummaryFormat::Json;
    throw Error("unknown format '" + std::string(s) + "' (expected csv or json)");
}

inline constexpr std::string_view kSummaryHeader =
    "manifest,expert_codebook,llm_codebook,delta,estimator,n_seeds,mean_estimate,p2_5,p97_5,"
    "truth,covers_truth";

inline std::string summaries_to_csv(const std::vector<ExperimentSummary>& s,
                                    std::string_view manifest_hash) {
    std::string out(kSummaryHeader);
    out += '\n';
    for (const auto& e : s) {
        out += std::string(manifest_hash) + ',' +
               std::string(to_string(e.cell.condition.expert_codebook)) + ',' +
               std::string(to_string(e.cell.condition.llm_codebook)) + ',' +
               format_6g(e.cell.delta) + ',' + std::string(to_string(e.cell.method)) + ',' +
               std::to_string(e.n_seeds) + ',' + format_6g(e.mean_estimate) + ',' +
               format_6g(e.p2_5) + ',' + format_6g(e.p97_5) + ',' + format_6g(e.truth) + ',' +
               (e.covers_truth ? "true" : "false") + '\n';
    }
    return out;
}

inline std::string summaries_to_json(const std::vector<ExperimentSummary>& s,
                                     std::string_view manifest_hash) {
    // Round to six significant digits, then let the writer print the shortest
    // representation of that value.
    auto r6 = [](double v) { return std::stod(format_6g(v)); };
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& e : s) {
        rows.push_back({{"manifest", manifest_hash},
                        {"expert_codebook", to_string(e.cell.condition.expert_codebook)},
                        {"llm_codebook", to_string(e.cell.condition.llm_codebook)},
                        {"delta", r6(e.cell.delta)},
                        {"estimator", to_string(e.cell.method)},
                        {"n_seeds", e.n_seeds},
                        {"mean_estimate", r6(e.mean_estimate)},
                        {"p2_5", r6(e.p2_5)},
                        {"p97_5", r6(e.p97_5)},
                        {"truth", r6(e.truth)},
                        {"covers_truth", e.covers_truth}});
    }
    return rows.dump(2) + "\n";
}

inline void write_summary(const std::vector<ExperimentSummary>& s, const std::string& path,
                          SummaryFormat format, std::string_view manifest_hash) {
    if (s.empty()) throw Error("write_summary: no summaries");
    write_file(path, format == SummaryFormat::Csv ? summaries_to_csv(s, manifest_hash)
                                                  : summaries_to_json(s, manifest_hash));
}

inline std::vector<ExperimentSummary> summaries_from_csv(std::string_view text) {
    const auto rows = parse_csv(text);
    if (rows.empty()) throw Error("summary CSV is empty");
    std::string header;
    for (std::size_t i = 0; i < rows[0].fields.size(); ++i) {
        header += (i ? "," : "") + rows[0].fields[i];
    }
    if (header != kSummaryHeader) throw Error("line 1: unexpected summary header");
    std::vector<ExperimentSummary> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& f = rows[i].fields;
        const auto line = rows[i].line;
        if (f.size() != 11) throw Error("line " + std::to_string(line) + ": expected 11 fields");
        ExperimentSummary s;
        s.cell.condition = {parse_expert_codebook(f[1]), parse_codebook(f[2])};
        s.cell.delta = parse_double(f[3], line, "delta");
        s.cell.method = parse_method(f[4]);
        s.n_seeds = static_cast<std::size_t>(parse_double(f[5], line, "n_seeds"));
        s.mean_estimate = parse_double(f[6], line, "mean_estimate");
        s.p2_5 = parse_double(f[7], line, "p2_5");
        s.p97_5 = parse_double(f[8], line, "p97_5");
        s.truth = parse_double(f[9], line, "truth");
        if (f[10] != "true" && f[10] != "false") {
            throw Error("line " + std::to_string(line) + ": covers_truth must be true or false");
        }
        s.covers_truth = f[10] == "true";
        out.push_back(s);
    }
    return out;
}

inline std::vector<ExperimentSummary> read_summary_csv(const std::string& path) {
    return summaries_from_csv(read_file(path));
}

// ---------------------------------------------------------------------------
// Estimate output

inline nlohmann::ordered_json to_json(const EstimateResult& r) {
    nlohmann::ordered_json j{{"estimator", to_string(r.estimator)}, {"point", r.point}};
    if (r.half_width) {
        j["half_width"] = *r.half_width;
        j["lower"] = r.point - *r.half_width;
        j["upper"] = r.point + *r.half_width;
    } else {
        j["half_width"] = nullptr;
    }
    j["n_used"] = r.n_used;
    j["N_used"] = r.N_used;
    return j;
}

// ---------------------------------------------------------------------------
// Interval plot

/// SVG with, per summary, a dot at the mean and a vertical bar spanning the
/// empirical band, grouped by annotation condition, plus one dashed
/// horizontal line per distinct truth value.
inline std::string figure_svg(const std::vector<ExperimentSummary>& s) {
    if (s.empty()) throw Error("emit_figure: no summaries");
    for (const auto& e : s) {
        if (e.cell.method != s.front().cell.method) {
            throw Error("emit_figure: summaries mix estimators '" +
                        std::string(to_string(s.front().cell.method)) + "' and '" +
                        std::string(to_string(e.cell.method)) + "'");
        }
    }

    // Group by condition, keeping first-appearance order.
    std::vector<AnnotationCondition> groups;
    for (const auto& e : s) {
        if (std::find(groups.begin(), groups.end(), e.cell.condition) == groups.end()) {
            groups.push_back(e.cell.condition);
        }
    }
    std::vector<double> truths;
    double lo = s.front().p2_5, hi = s.front().p97_5;
    for (const auto& e : s) {
        lo = std::min({lo, e.p2_5, e.mean_estimate, e.truth});
        hi = std::max({hi, e.p97_5, e.mean_estimate, e.truth});
        if (std::find(truths.begin(), truths.end(), e.truth) == truths.end()) {
            truths.push_back(e.truth);
        }
    }
    const double pad = (hi - lo) > 0 ? 0.1 * (hi - lo) : 0.5;
    lo -= pad;
    hi += pad;

    constexpr double width = 720, height = 420, left = 70, right = 20, top = 40, bottom = 60;
    const double plot_w = width - left - right;
    const double plot_h = height - top - bottom;
    const auto ypix = [&](double v) { return top + (hi - v) / (hi - lo) * plot_h; };

    std::ostringstream o;
    o.setf(std::ios::fixed);
    o.precision(2);
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    o << "<title>" << to_string(s.front().cell.method)
      << ": mean estimate and 95% empirical interval</title>\n";
    o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\""
      << plot_h << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double v = lo + (hi - lo) * t / 4.0;
        o << "<text class=\"tick\" x=\"" << left - 6 << "\" y=\"" << ypix(v) + 4
          << "\" text-anchor=\"end\" font-size=\"11\">" << format_6g(v) << "</text>\n";
    }
    for (double t : truths) {
        o << "<line class=\"truth\" x1=\"" << left << "\" x2=\"" << left + plot_w << "\" y1=\""
          << ypix(t) << "\" y2=\"" << ypix(t)
          << "\" stroke=\"#000\" stroke-dasharray=\"6,4\"/>\n";
    }

    static constexpr const char* kColors[] = {"#F8766D", "#00BFC4", "#7CAE00", "#C77CFF",
                                              "#E68613", "#0CB702"};
    const double group_w = plot_w / static_cast<double>(groups.size());
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        std::vector<const ExperimentSummary*> members;
        for (const auto& e : s) {
            if (e.cell.condition == groups[gi]) members.push_back(&e);
        }
        const char* color = kColors[gi % std::size(kColors)];
        const double x0 = left + group_w * static_cast<double>(gi);
        o << "<g class=\"condition\" data-expert=\"" << to_string(groups[gi].expert_codebook)
          << "\" data-llm=\"" << to_string(groups[gi].llm_codebook) << "\">\n";
        for (std::size_t k = 0; k < members.size(); ++k) {
            const auto& e = *members[k];
            const double x = x0 + group_w * (static_cast<double>(k) + 1.0) /
                                      (static_cast<double>(members.size()) + 1.0);
            o << "<line class=\"bar\" x1=\"" << x << "\" x2=\"" << x << "\" y1=\""
              << ypix(e.p2_5) << "\" y2=\"" << ypix(e.p97_5) << "\" stroke=\"" << color
              << "\" stroke-width=\"2\"/>\n";
            o << "<circle class=\"dot\" cx=\"" << x << "\" cy=\"" << ypix(e.mean_estimate)
              << "\" r=\"4\" fill=\"" << color << "\"/>\n";
            o << "<text class=\"delta\" x=\"" << x << "\" y=\"" << top + plot_h + 16
              << "\" text-anchor=\"middle\" font-size=\"10\">" << format_6g(e.cell.delta)
              << "</text>\n";
        }
        o << "<text class=\"group\" x=\"" << x0 + group_w / 2 << "\" y=\"" << top + plot_h + 36
          << "\" text-anchor=\"middle\" font-size=\"12\">expert=" << to_string(groups[gi].expert_codebook)
          << ", llm=" << to_string(groups[gi].llm_codebook) << "</text>\n";
        o << "</g>\n";
    }
    o << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 6
      << "\" text-anchor=\"middle\" font-size=\"12\">LLM error rate</text>\n";
    o << "</svg>\n";
    return o.str();
}

inline void emit_figure(const std::vector<ExperimentSummary>& s, const std::string& path) {
    write_file(path, figure_svg(s));
}

}  // namespace cbi
