// Command-line front end: simulate, estimate, figure, annotate, generate.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "cbi/annotator.hpp"
#include "cbi/cbi.hpp"

namespace fs = std::filesystem;

namespace {

int run_simulate(const std::string& config, std::optional<std::uint64_t> seed,
                 const std::string& out_dir, const std::string& format, std::size_t parallelism) {
    cbi::RunManifest manifest;
    manifest.started_at = cbi::utc_timestamp();
    auto grid = cbi::read_grid_json(config);
    if (seed) grid.seed_base = *seed;
    const auto fmt = cbi::parse_summary_format(format);
    manifest.seed_base = grid.seed_base;
    manifest.config_hash = cbi::config_hash(grid);

    const auto summaries = cbi::run_grid(grid, parallelism);

    fs::create_directories(out_dir);
    const auto summary_path =
        (fs::path(out_dir) / (fmt == cbi::SummaryFormat::Csv ? "summary.csv" : "summary.json"))
            .string();
    const auto config_path = (fs::path(out_dir) / "config.json").string();
    const auto manifest_path = (fs::path(out_dir) / "manifest.json").string();
    cbi::write_summary(summaries, summary_path, fmt, manifest.config_hash);
    cbi::write_file(config_path, cbi::to_json(grid).dump(2) + "\n");
    manifest.outputs = {summary_path, config_path};
    manifest.finished_at = cbi::utc_timestamp();
    cbi::write_manifest(manifest, manifest_path);
    std::cout << summary_path << "\n";
    return 0;
}

int run_estimate(const std::string& dataset_path, const std::string& estimator,
                 std::optional<double> pi, const std::string& label, const std::string& format,
                 const std::string& out) {
    const auto d = cbi::read_dataset_csv(dataset_path);
    cbi::EstimateResult r;
    if (estimator == "pessimist") {
        r = cbi::pessimist_mean(cbi::gold_labels(d));
    } else if (estimator == "optimist") {
        r = cbi::optimist_mean(cbi::llm_labels(d));
    } else if (estimator == "ppi") {
        r = cbi::ppi_mean(cbi::llm_labels(d), cbi::paired_labels(d));
    } else if (estimator == "ols") {
        const auto source = label == "llm" ? cbi::LabelSource::Llm : cbi::LabelSource::Gold;
        const auto b = cbi::ols_on_labels(d, cbi::RegressionSpec{}, source);
        r.estimator = cbi::EstimatorKind::OLS;
        r.point = b(0);
        r.n_used = source == cbi::LabelSource::Gold ? d.n_labeled : 0;
        r.N_used = source == cbi::LabelSource::Llm ? d.n_total : 0;
    } else if (estimator == "dsl") {
        r = cbi::dsl_regress(d, cbi::RegressionSpec{}, pi.value_or(cbi::design_probability(d)));
    } else {
        throw cbi::Error("unknown estimator '" + estimator + "'");
    }

    std::string text;
    if (format == "json") {
        text = cbi::to_json(r).dump(2) + "\n";
    } else if (format == "csv") {
        text = "estimator,point,half_width,n_used,N_used\n" +
               std::string(cbi::to_string(r.estimator)) + ',' + cbi::format_6g(r.point) + ',' +
               (r.half_width ? cbi::format_6g(*r.half_width) : std::string()) + ',' +
               std::to_string(r.n_used) + ',' + std::to_string(r.N_used) + '\n';
    } else {
        throw cbi::Error("unknown format '" + format + "'");
    }
    if (out.empty()) {
        std::cout << text;
    } else {
        cbi::write_file(out, text);
    }
    return 0;
}

int run_figure(const std::string& summaries, const std::string& out,
               const std::string& estimator) {
    auto s = cbi::read_summary_csv(summaries);
    if (!estimator.empty()) {
        const auto m = cbi::parse_method(estimator);
        std::erase_if(s, [&](const cbi::ExperimentSummary& e) { return e.cell.method != m; });
    }
    cbi::emit_figure(s, out);
    std::cout << out << "\n";
    return 0;
}

int run_generate(const std::string& config, std::uint64_t seed, double delta,
                 const std::string& expert, const std::string& llm, const std::string& out) {
    cbi::SimulationConfig cfg;
    if (!config.empty()) {
        cfg = cbi::simulation_config_from_json(nlohmann::json::parse(cbi::read_file(config)));
    }
    cfg.seed = seed;
    cfg.llm_error = delta;
    cbi::validate(cfg);
    cbi::RandomStream rng(cfg.seed);
    auto pop = cbi::generate_population(cfg, rng);
    const cbi::AnnotationCondition cond{cbi::parse_expert_codebook(expert), cbi::parse_codebook(llm)};
    const auto ap = cbi::annotate(std::move(pop), cond, delta, cfg.label_fraction, rng);
    cbi::write_dataset_csv(cbi::to_dataset(ap), out);
    std::cout << out << "\n";
    return 0;
}

int run_annotate(const std::string& documents, const std::string& codebook,
                 const std::string& endpoint, const std::string& model, const std::string& out,
                 std::size_t concurrency, int max_retries, int timeout_ms) {
    cbi::annotator::AnnotationJob job;
    job.documents = cbi::annotator::documents_from_csv(cbi::read_file(documents));
    job.codebook = cbi::annotator::read_codebook(codebook);
    job.endpoint = endpoint;
    job.model = model;
    job.concurrency = concurrency;
    job.max_retries = max_retries;
    job.timeout = std::chrono::milliseconds(timeout_ms);
    const auto rows = cbi::annotator::annotate_documents(job);
    cbi::write_file(out, cbi::annotator::outcomes_to_csv(rows));
    std::size_t failures = 0;
    for (const auto& r : rows) failures += r.label ? 0 : 1;
    std::cout << out << " (" << rows.size() << " documents, " << failures << " without a label)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Codebook-aware inference with LLM labels: estimators and simulation"};
    app.set_version_flag("--version", std::string(cbi::kToolVersion));
    app.require_subcommand(1);

    std::string config, out = "out", format = "csv";
    std::optional<std::uint64_t> seed;
    std::size_t parallelism = 1;
    auto* sim = app.add_subcommand("simulate", "Run an experiment grid and write summaries");
    sim->add_option("--config", config, "Grid configuration JSON")->required()->check(CLI::ExistingFile);
    sim->add_option("--seed", seed, "Override seed_base");
    sim->add_option("--out", out, "Output directory");
    sim->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    sim->add_option("--parallelism", parallelism, "Worker threads")->check(CLI::PositiveNumber);

    std::string dataset, estimator = "ppi", label = "gold", est_format = "json", est_out;
    std::optional<double> pi;
    auto* est = app.add_subcommand("estimate", "Estimate from a dataset CSV");
    est->add_option("--dataset", dataset, "Dataset CSV (id,y,x...,llm_label,gold_label)")
        ->required()
        ->check(CLI::ExistingFile);
    est->add_option("--estimator", estimator, "pessimist|optimist|ppi|ols|dsl")
        ->check(CLI::IsMember({"pessimist", "optimist", "ppi", "ols", "dsl"}));
    est->add_option("--pi", pi, "Labeling probability for dsl (default n_labeled/n_total)");
    est->add_option("--label", label, "Label column for ols: gold or llm")
        ->check(CLI::IsMember({"gold", "llm"}));
    est->add_option("--format", est_format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
    est->add_option("--out", est_out, "Write to a file instead of stdout");

    std::string summaries, fig_out = "figure.svg", fig_estimator;
    auto* fig = app.add_subcommand("figure", "Render summaries as an SVG interval plot");
    fig->add_option("--summaries", summaries, "Summary CSV")->required()->check(CLI::ExistingFile);
    fig->add_option("--out", fig_out, "Output SVG path");
    fig->add_option("--estimator", fig_estimator, "Plot only this estimator");

    std::string gen_config, gen_out = "dataset.csv", expert = "complete", llm = "complete";
    std::uint64_t gen_seed = 0;
    double delta = 0.1;
    auto* gen = app.add_subcommand("generate", "Write one simulated, annotated dataset as CSV");
    gen->add_option("--config", gen_config, "SimulationConfig JSON (defaults otherwise)");
    gen->add_option("--seed", gen_seed, "Stream seed");
    gen->add_option("--delta", delta, "LLM error rate")->check(CLI::Range(0.0, 1.0));
    gen->add_option("--expert", expert, "complete|incomplete|none");
    gen->add_option("--llm", llm, "complete|incomplete");
    gen->add_option("--out", gen_out, "Output CSV path");

    std::string documents, codebook, endpoint = "https://api.openai.com", model, ann_out = "labels.csv";
    std::size_t concurrency = 4;
    int max_retries = 3, timeout_ms = 30'000;
    auto* ann = app.add_subcommand("annotate", "Label documents with an LLM endpoint");
    ann->add_option("--documents", documents, "Documents CSV (id,text)")->required()->check(CLI::ExistingFile);
    ann->add_option("--codebook", codebook, "Codebook JSON")->required()->check(CLI::ExistingFile);
    ann->add_option("--endpoint", endpoint, "OpenAI-compatible base URL or full chat-completions URL");
    ann->add_option("--model", model, "Model name")->required();
    ann->add_option("--out", ann_out, "Output CSV (id,llm_label,raw)");
    ann->add_option("--concurrency", concurrency, "Maximum in-flight requests")->check(CLI::PositiveNumber);
    ann->add_option("--max-retries", max_retries, "Retries per document")->check(CLI::NonNegativeNumber);
    ann->add_option("--timeout-ms", timeout_ms, "Request timeout")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*sim) return run_simulate(config, seed, out, format, parallelism);
        if (*est) return run_estimate(dataset, estimator, pi, label, est_format, est_out);
        if (*fig) return run_figure(summaries, fig_out, fig_estimator);
        if (*gen) return run_generate(gen_config, gen_seed, delta, expert, llm, gen_out);
        if (*ann) {
            return run_annotate(documents, codebook, endpoint, model, ann_out, concurrency,
                                max_retries, timeout_ms);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
