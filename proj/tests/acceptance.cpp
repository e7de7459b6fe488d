// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cbi/annotator.hpp"
#include "cbi/cbi.hpp"
#include "oracles.hpp"
#include "stub_server.hpp"

using namespace cbi;
namespace fs = std::filesystem;

namespace {

constexpr AnnotationCondition kComplete{ExpertCodebook::Complete, Codebook::Complete};
constexpr AnnotationCondition kIncomplete{ExpertCodebook::Incomplete, Codebook::Incomplete};

struct Outcome {
    bool pass = false;
    std::vector<std::string> details;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double width(const ExperimentSummary& s) { return s.p97_5 - s.p2_5; }

const ExperimentSummary& find(const std::vector<ExperimentSummary>& v, AnnotationCondition c,
                              double delta, Method m) {
    for (const auto& s : v) {
        if (s.cell.condition == c && s.cell.delta == delta && s.cell.method == m) return s;
    }
    throw Error("missing cell");
}

std::string band(const ExperimentSummary& s) {
    return fmt("mean %.4f band [%.4f, %.4f]", s.mean_estimate, s.p2_5, s.p97_5);
}

Dataset simulated(std::size_t N, double delta, double fraction, AnnotationCondition cond,
                  std::uint64_t seed) {
    SimulationConfig c;
    c.N = N;
    RandomStream r(seed);
    return to_dataset(annotate(generate_population(c, r), cond, delta, fraction, r));
}

// 1. Collapse identities of the prediction-powered mean.
Outcome collapse_identities() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    double worst_full = 0, worst_perfect_point = 0, worst_perfect_width = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto d = simulated(2000, 0.2, 1.0, kComplete, seed);
        const auto llm = llm_labels(d);
        const auto gold = gold_labels(d);
        worst_full = std::max(worst_full, std::abs(ppi_mean(llm, paired_labels(d)).point -
                                                   pessimist_mean(gold).point));

        auto d2 = simulated(2000, 0.2, 0.1, kComplete, seed + 100);
        for (auto& r : d2.records) {
            if (r.sampled) r.llm_label = r.gold_label;
        }
        const auto p = ppi_mean(llm_labels(d2), paired_labels(d2));
        const auto opt = optimist_mean(llm_labels(d2));
        worst_perfect_point = std::max(worst_perfect_point, std::abs(p.point - opt.point));
        worst_perfect_width = std::max(worst_perfect_width, std::abs(*p.half_width - *opt.half_width));
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.pass = worst_full <= 1e-12 && worst_perfect_point <= 1e-12 && worst_perfect_width <= 1e-12 &&
             secs < 1.0;
    o.details.push_back(fmt("n=N: max |ppi - gold mean| = %.3g", worst_full));
    o.details.push_back(fmt("llm=gold on paired set: max |ppi - optimist| point %.3g, width %.3g",
                            worst_perfect_point, worst_perfect_width));
    o.details.push_back(fmt("runtime %.3f s (limit 1 s)", secs));
    return o;
}

// 2. Coverage of the prediction-powered interval.
Outcome ppi_coverage() {
    Outcome o;
    SimulationConfig cfg;
    cfg.llm_error = 0.2;
    const double truth = true_prevalence(cfg);
    const CellId cell{kComplete, 0.2, Method::PPI};
    const int reps = 1000;
    int covered = 0;
    for (int r = 0; r < reps; ++r) {
        const auto e = run_cell(cfg, kComplete, Method::PPI, replicate_seed(7001, cell, r));
        if (e.n_used != 1000 || e.N_used != 10'000) throw Error("unexpected sample sizes");
        if (std::abs(e.point - truth) <= *e.half_width) ++covered;
    }
    const double rate = static_cast<double>(covered) / reps;
    o.pass = rate >= 0.93 && rate <= 0.97;
    o.details.push_back(fmt("coverage %.3f over %d replicates (required 0.93-0.97)", rate, reps));
    return o;
}

std::vector<ExperimentSummary> figure3_grid() {
    ExperimentGrid g;
    g.deltas = {0.05, 0.10, 0.20, 0.30};
    g.conditions = {kComplete, kIncomplete};
    g.estimators = {Method::DSL};
    g.n_seeds = 250;
    g.seed_base = 20250101;
    return run_grid(g, std::max(1u, std::thread::hardware_concurrency()));
}

// 3. Figure 3: complete codebook unbiased for tau, incomplete codebook biased
// toward the probability limit of the regression on d|v.
Outcome figure3(const std::vector<ExperimentSummary>& grid) {
    Outcome o;
    const auto pop = oracle::population(1'000'000, 424242);
    const double plim = oracle::label_coefficient(pop, /*incomplete=*/true);
    const double plim_complete = oracle::label_coefficient(pop, /*incomplete=*/false);
    o.details.push_back(fmt("brute-force plim (10^6 units): incomplete %.4f, complete %.4f", plim,
                            plim_complete));
    bool ok = std::abs(plim - (-0.542)) < 0.01;
    for (double d : {0.05, 0.10, 0.20, 0.30}) {
        const auto& c = find(grid, kComplete, d, Method::DSL);
        const auto& i = find(grid, kIncomplete, d, Method::DSL);
        const bool c_ok = std::abs(c.mean_estimate - 1.0) <= 0.05 && c.p2_5 <= 1.0 && 1.0 <= c.p97_5;
        const bool i_ok = !(i.p2_5 <= 1.0 && 1.0 <= i.p97_5) && std::abs(i.mean_estimate - plim) <= 0.05;
        ok = ok && c_ok && i_ok;
        o.details.push_back(fmt("delta %.2f complete   %s -> %s", d, band(c).c_str(),
                                c_ok ? "ok" : "mean not within 0.05 of 1 or band misses 1"));
        o.details.push_back(fmt("delta %.2f incomplete %s -> %s", d, band(i).c_str(),
                                i_ok ? "ok" : "band covers 1 or mean not within 0.05 of plim"));
    }
    o.pass = ok;
    return o;
}

// 4. Band width shrinks with the LLM error rate (complete codebook).
Outcome variance_monotonicity(const std::vector<ExperimentSummary>& grid) {
    Outcome o;
    const std::vector<double> deltas{0.05, 0.10, 0.20, 0.30};
    std::vector<double> w;
    for (double d : deltas) w.push_back(width(find(grid, kComplete, d, Method::DSL)));
    int inversions = 0;
    for (std::size_t k = 0; k + 1 < w.size(); ++k) inversions += w[k] > w[k + 1];
    o.pass = w.front() < w.back() && inversions <= 1;
    o.details.push_back(fmt("band widths at delta 0.05/0.10/0.20/0.30: %.4f %.4f %.4f %.4f; "
                            "adjacent inversions %d (max 1)",
                            w[0], w[1], w[2], w[3], inversions));
    return o;
}

// 5. Figure A1: small-n regression vs DSL, and the uncorrected LLM regression.
Outcome figure_a1() {
    Outcome o;
    ExperimentGrid g;
    g.deltas = {0.10};
    g.conditions = {kComplete, kIncomplete};
    g.estimators = {Method::OLS, Method::PessimistOLS, Method::DSL, Method::OptimistOLS};
    g.n_seeds = 50;
    g.seed_base = 20250102;
    const auto s = run_grid(g, std::max(1u, std::thread::hardware_concurrency()));
    const auto& pess = find(s, kComplete, 0.1, Method::PessimistOLS);
    const auto& dsl = find(s, kComplete, 0.1, Method::DSL);
    const auto& llm = find(s, kIncomplete, 0.1, Method::OptimistOLS);
    const bool pess_covers = pess.covers_truth;
    const bool wider = width(pess) > width(dsl);
    const bool llm_excludes = !llm.covers_truth;
    o.pass = pess_covers && wider && llm_excludes;
    o.details.push_back(fmt("pessimist_ols complete %s covers tau: %s", band(pess).c_str(),
                            pess_covers ? "yes" : "no"));
    o.details.push_back(fmt("dsl complete %s; pessimist width %.4f > dsl width %.4f: %s",
                            band(dsl).c_str(), width(pess), width(dsl), wider ? "yes" : "no"));
    o.details.push_back(fmt("optimist_ols incomplete %s excludes tau: %s", band(llm).c_str(),
                            llm_excludes ? "yes" : "no"));
    for (const auto& e : s) {
        if (e.cell.method == Method::OLS) {
            o.details.push_back(fmt("reference ols on all expert labels, expert=%s: %s",
                                    std::string(to_string(e.cell.condition.expert_codebook)).c_str(),
                                    band(e).c_str()));
        }
    }
    return o;
}

// 6. Rows of the approach table under DSL.
Outcome table_rows() {
    Outcome o;
    const std::vector<std::pair<ApproachRow, bool>> rows{
        {ApproachRow::Pragmatist, true},
        {ApproachRow::ProceduralError, false},
        {ApproachRow::ReliabilityError, true},
        {ApproachRow::ConceptualizationError, false}};
    ExperimentGrid g;
    g.deltas = {0.10};
    for (const auto& [row, _] : rows) g.conditions.push_back(condition_for(row));
    g.estimators = {Method::DSL};
    g.n_seeds = 50;
    g.seed_base = 20250103;
    const auto s = run_grid(g, std::max(1u, std::thread::hardware_concurrency()));
    bool ok = true;
    for (const auto& [row, should_cover] : rows) {
        const auto& e = find(s, condition_for(row), 0.1, Method::DSL);
        const bool row_ok = e.covers_truth == should_cover;
        ok = ok && row_ok;
        o.details.push_back(fmt("%-24s %s; expected %s tau=1 -> %s",
                                std::string(to_string(row)).c_str(), band(e).c_str(),
                                should_cover ? "covering" : "excluding", row_ok ? "ok" : "FAIL"));
    }
    o.pass = ok;
    return o;
}

// 7. Estimator micro-oracles.
Outcome micro_oracles() {
    Outcome o;
    bool ok = true;
    auto check = [&](const char* what, double got, double want, double tol) {
        const bool pass = std::abs(got - want) <= tol;
        ok = ok && pass;
        o.details.push_back(fmt("%s: %.15g vs %.15g (tol %.0e) %s", what, got, want, tol,
                                pass ? "ok" : "FAIL"));
    };
    const auto p = pessimist_mean(std::vector<Label>{1, 0, 1, 0});
    check("pessimist [1,0,1,0] point", p.point, 0.5, 1e-12);
    check("pessimist [1,0,1,0] half-width", *p.half_width, 0.49, 1e-12);
    const auto q = optimist_mean(std::vector<Label>{1, 0});
    check("optimist [1,0] half-width", *q.half_width, 1.96 * std::sqrt(0.25 / 2), 1e-12);
    const auto q8 = optimist_mean(std::vector<Label>{1, 1, 0, 0, 1, 1, 0, 0});
    check("optimist 8-label half-width", *q8.half_width, 1.96 * std::sqrt(0.25 / 8), 1e-12);

    RandomStream r(77);
    Eigen::MatrixXd X(500, 3);
    Eigen::VectorXd y(500);
    for (int i = 0; i < 500; ++i) {
        const double a = r.bernoulli(0.3), x = r.normal();
        X.row(i) << a, x, 1.0;
        y(i) = 2 + 3 * a - x;
    }
    const auto b = ols(X, y);
    check("ols noiseless label coefficient", b(0), 3.0, 1e-10);
    check("ols noiseless covariate coefficient", b(1), -1.0, 1e-10);
    check("ols noiseless intercept", b(2), 2.0, 1e-10);

    const auto d = simulated(10'000, 0.2, 1.0, kComplete, 78);
    const auto gold = ols_on_labels(d, {}, LabelSource::Gold);
    const double diff = (dsl_coefficients(d, {}, 1.0) - gold).cwiseAbs().maxCoeff();
    check("dsl(pi=1) - ols on gold, max abs", diff, 0.0, 1e-10);
    o.pass = ok;
    return o;
}

// 8. `simulate` output is byte-identical across runs and thread counts.
Outcome determinism() {
    Outcome o;
    const fs::path root = fs::temp_directory_path() / "cbi_acceptance_determinism";
    fs::remove_all(root);
    std::vector<std::string> files;
    bool ran = true;
    for (int par : {1, 1, 8, 8}) {
        const auto dir = root / ("run" + std::to_string(files.size()) + "_p" + std::to_string(par));
        const std::string cmd = std::string("\"") + CBI_CLI_PATH + "\" simulate --config \"" +
                                CBI_CONFIG_DIR + "/figure3.json\" --seed 555 --out \"" +
                                dir.string() + "\" --parallelism " + std::to_string(par) +
                                " > /dev/null";
        if (std::system(cmd.c_str()) != 0) ran = false;
        files.push_back(ran ? read_file((dir / "summary.csv").string()) : std::string());
    }
    bool same = ran;
    for (const auto& f : files) same = same && f == files.front() && !f.empty();
    o.pass = same;
    o.details.push_back(fmt("4 runs (parallelism 1,1,8,8): %s, %zu bytes each",
                            same ? "byte-identical" : "DIFFERENT", files.front().size()));
    return o;
}

// 9. Annotator contract against a local stub endpoint.
Outcome annotator_contract() {
    Outcome o;
    using namespace cbi::annotator;
    auto run = [](const char* reply) {
        testing_stub::StubServer s(
            [reply](const std::string&) { return std::pair{200, std::string(reply)}; });
        AnnotationJob job;
        job.documents = {{"a", "Protesters marched to city hall."},
                         {"b", "Rioters smashed shop windows."},
                         {"c", "A quiet day in the capital."}};
        job.codebook = {"protest", "protest", DefinitionType::SurfaceForm};
        job.endpoint = s.url();
        job.model = "stub";
        job.backoff = std::chrono::milliseconds(1);
        job.api_key = "k";
        return annotate_documents(job);
    };
    bool ok = true;
    const auto yes = run("yes");
    for (const auto& r : yes) ok = ok && r.label == 1;
    o.details.push_back(fmt("stub 'yes' -> all labels 1: %s", ok ? "ok" : "FAIL"));
    const auto no = run("No.");
    bool ok_no = true;
    for (const auto& r : no) ok_no = ok_no && r.label == 0;
    o.details.push_back(fmt("stub 'No.' -> all labels 0: %s", ok_no ? "ok" : "FAIL"));
    const auto maybe = run("maybe");
    bool ok_maybe = maybe.size() == 3;
    for (const auto& r : maybe) ok_maybe = ok_maybe && !r.label && r.status == Status::ParseFailure;
    o.details.push_back(fmt("stub 'maybe' -> parse failures, no labels, %zu rows: %s",
                            maybe.size(), ok_maybe ? "ok" : "FAIL"));
    o.pass = ok && ok_no && ok_maybe;
    return o;
}

}  // namespace

int main() {
    int failures = 0;
    auto report = [&](int id, const char* name, const std::function<Outcome()>& f) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = f();
        } catch (const std::exception& e) {
            o.pass = false;
            o.details.push_back(std::string("exception: ") + e.what());
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%s] criterion %d: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name, secs);
        for (const auto& d : o.details) std::printf("         %s\n", d.c_str());
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    };

    report(1, "prediction-powered collapse identities", collapse_identities);
    report(2, "prediction-powered interval coverage", ppi_coverage);
    std::vector<ExperimentSummary> grid;
    report(3, "DSL grid: complete unbiased for tau, incomplete biased", [&] {
        grid = figure3_grid();
        return figure3(grid);
    });
    report(4, "band width decreases with LLM accuracy", [&] {
        if (grid.empty()) throw Error("criterion 3 grid unavailable");
        return variance_monotonicity(grid);
    });
    report(5, "small-n vs DSL vs uncorrected LLM regression", figure_a1);
    report(6, "approach table rows under DSL", table_rows);
    report(7, "estimator micro-oracles", micro_oracles);
    report(8, "simulate determinism across runs and parallelism", determinism);
    report(9, "annotator contract against stub endpoint", annotator_contract);

    std::printf("%d of 9 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
