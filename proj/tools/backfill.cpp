// Command-line front end: simulate, benchmark, calibrate, report, serve, scenarios.

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <omp.h>

#include "backfill/config.hpp"
#include "backfill/server.hpp"
#include "backfill/simulate.hpp"

using namespace backfill;

namespace {

struct CommonOptions {
    std::string scenarios = "all";
    int sims = 1000;
    std::uint64_t seed = 20240601;
    std::vector<std::string> policies{"none"};
    std::vector<int> cycles{1};
    std::string prior = "vague";
    std::string out = "out";
    int workers = omp_get_max_threads();
    std::string design;

    // Rule overrides; unset keeps the design file or default value.
    std::optional<int> n_max;
    std::optional<double> psi;
    std::optional<double> cv_limit;
    std::optional<double> kfold;
    bool restrict_recommendation = false;
    bool very_safe_by_selection = false;
};

void add_common(CLI::App* app, CommonOptions& o, bool with_policy)
{
    app->add_option("--scenarios", o.scenarios, "Scenario selector: all, 1-17, 1,3,5 or a JSON file")
        ->capture_default_str();
    app->add_option("--sims", o.sims, "Replicates per scenario and design")->capture_default_str()->check(
        CLI::PositiveNumber);
    app->add_option("--seed", o.seed, "Master seed")->capture_default_str();
    if (with_policy) {
        app->add_option("--policy", o.policies, "Backfill policies: none, partial, full")
            ->delimiter(',')
            ->check(CLI::IsMember({"none", "partial", "full"}))
            ->capture_default_str();
        app->add_option("--prior", o.prior, "Builtin prior id, 'auto', or a JSON prior file")->capture_default_str();
    }
    app->add_option("--cycles", o.cycles, "Follow-up cycles per patient")
        ->delimiter(',')
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--out", o.out, "Output directory")->capture_default_str();
    app->add_option("--workers", o.workers, "OpenMP threads")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--design", o.design, "Design configuration file (JSON)");
    app->add_option("--n-max", o.n_max, "Maximum sample size");
    app->add_option("--psi", o.psi, "Hard-safety posterior threshold");
    app->add_option("--cv-limit", o.cv_limit, "Precision stopping CV limit");
    app->add_option("--kfold", o.kfold, "Maximum fold-rise over the highest experimented dose");
    app->add_flag("--restrict-to-experimented", o.restrict_recommendation,
                  "Only recommend doses that have been given");
    app->add_flag("--very-safe-by-selection", o.very_safe_by_selection,
                  "Score all-safe scenarios by selection of the top dose instead of a very-safe stop");
}

RunManifest manifest_from(const CommonOptions& o)
{
    RunManifest m;
    if (!o.design.empty()) {
        m.design_ref = o.design;
        m.base = load_design(o.design);
    }
    auto& rules = m.base.rules;
    if (o.n_max) rules.n_max = *o.n_max;
    if (o.psi) rules.psi = *o.psi;
    if (o.cv_limit) rules.cv_limit = *o.cv_limit;
    if (o.kfold) rules.kfold = *o.kfold;
    if (o.restrict_recommendation) rules.restrict_recommendation_to_experimented = true;
    m.classification.very_safe_stop_is_correct = !o.very_safe_by_selection;
    m.scenario_selector = o.scenarios;
    m.scenarios = select_scenarios(o.scenarios);
    m.policies.clear();
    for (const auto& p : o.policies) {
        m.policies.push_back(backfill_policy_from_string(p));
    }
    m.cycles = o.cycles;
    m.prior = o.prior;
    m.sims = o.sims;
    m.seed = o.seed;
    m.out = o.out;
    m.workers = o.workers;
    return m;
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream f(path);
    f << text;
    if (!f) {
        throw std::runtime_error("cannot write " + path.string());
    }
}

int cmd_simulate(const CommonOptions& o, bool archive)
{
    const RunManifest m = manifest_from(o);
    const SimulationOutput out = run_simulation(m, archive);
    write_simulation_outputs(m, out);
    std::cout << "wrote " << (m.out / "summary.csv").string() << " (" << out.rows.size() << " rows)\n";
    return 0;
}

int cmd_benchmark(const CommonOptions& o)
{
    const RunManifest m = manifest_from(o);
    const auto rows = run_benchmarks(m);
    write_text(m.out / "benchmark.csv", summary_csv(m.hash(), m.seed, rows, m.base.grid.size()));
    std::cout << "wrote " << (m.out / "benchmark.csv").string() << '\n';
    return 0;
}

int cmd_calibrate(CommonOptions o, const std::vector<std::string>& candidate_ids)
{
    if (o.policies.size() != 1 || o.cycles.size() != 1) {
        throw ConfigError("calibrate takes exactly one --policy and one --cycles value");
    }
    RunManifest m = manifest_from(o);
    DesignConfig base = m.base;
    base.backfill = m.policies.front();
    base.followup_cycles = m.cycles.front();
    std::vector<CalibrationCandidate> candidates;
    for (const auto& id : candidate_ids.empty() ? builtin_prior_ids() : candidate_ids) {
        candidates.push_back(CalibrationCandidate{id, resolve_prior(id)});
    }
    const auto result = calibrate(base, candidates, m.scenarios, m.sims, m.seed, m.workers, m.classification);
    write_text(m.out / "calibration.csv", calibration_csv(m.hash(), m.seed, result, m.scenarios));
    std::cout << "best prior: " << result.scores[result.best].candidate.id << '\n';
    return 0;
}

int cmd_report(const std::string& archive, const std::string& out)
{
    std::ifstream f(archive);
    if (!f) {
        throw std::runtime_error("cannot open archive " + archive);
    }
    const ReportFiles r = build_report(f);
    const std::filesystem::path dir = out;
    write_text(dir / "pcs_pas.csv", r.pcs_pas);
    write_text(dir / "size_duration.csv", r.size_duration);
    write_text(dir / "dlt_exposure.csv", r.dlt_exposure);
    std::cout << "wrote report tables to " << dir.string() << '\n';
    return 0;
}

int cmd_serve(const std::string& host, int port, std::string data_dir)
{
    if (data_dir.empty()) {
        const char* env = std::getenv("BACKFILL_DATA_DIR");
        data_dir = env ? env : "data";
    }
    std::optional<std::string> token;
    if (const char* env = std::getenv("BACKFILL_TOKEN")) {
        token = env;
    }
    ConductService service(data_dir);
    ConductServer server(service, token);
    const int bound = server.bind(host, port);
    if (bound < 0) {
        std::cerr << "cannot bind " << host << ':' << port << '\n';
        return 1;
    }
    std::cout << "listening on " << host << ':' << bound << " (data: " << data_dir << ")" << std::endl;
    return server.listen() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Dose-escalation trial simulator with backfilling"};
    app.require_subcommand(1);

    CommonOptions sim_opts;
    bool no_archive = false;
    auto* simulate = app.add_subcommand("simulate", "Simulate trials and write summary.csv, trials.jsonl, manifest.json");
    add_common(simulate, sim_opts, true);
    simulate->add_flag("--no-archive", no_archive, "Skip the per-trial archive");

    CommonOptions bench_opts;
    auto* benchmark = app.add_subcommand("benchmark", "Non-parametric benchmark selection rates");
    add_common(benchmark, bench_opts, false);

    CommonOptions cal_opts;
    std::vector<std::string> candidates;
    auto* calibrate_cmd = app.add_subcommand("calibrate", "Rank candidate priors by mean PCS across scenarios");
    add_common(calibrate_cmd, cal_opts, true);
    calibrate_cmd->add_option("--candidate", candidates, "Builtin prior id or JSON prior file (repeatable)");

    std::string archive = "out/trials.jsonl";
    std::string report_out = "out/report";
    auto* report = app.add_subcommand("report", "Plot-ready tables from a trials.jsonl archive");
    report->add_option("--archive", archive, "Archive written by simulate")->capture_default_str();
    report->add_option("--out", report_out, "Output directory")->capture_default_str();

    std::string host = "127.0.0.1";
    int port = 8080;
    std::string data_dir;
    auto* serve = app.add_subcommand("serve", "Live-conduct HTTP service");
    serve->add_option("--bind", host, "Bind address")->capture_default_str();
    serve->add_option("--port", port, "Port (0 picks a free one)")->capture_default_str();
    serve->add_option("--data-dir", data_dir, "Event log directory (default: $BACKFILL_DATA_DIR or ./data)");

    std::string scenarios_out = "scenarios.json";
    auto* scenarios = app.add_subcommand("scenarios", "Export the builtin scenarios as JSON");
    scenarios->add_option("--out", scenarios_out, "Output file")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*simulate) return cmd_simulate(sim_opts, !no_archive);
        if (*benchmark) return cmd_benchmark(bench_opts);
        if (*calibrate_cmd) return cmd_calibrate(cal_opts, candidates);
        if (*report) return cmd_report(archive, report_out);
        if (*serve) return cmd_serve(host, port, data_dir);
        if (*scenarios) {
            const auto list = builtin_scenarios();
            save_scenarios(scenarios_out, list);
            std::cout << "wrote " << list.size() << " scenarios to " << scenarios_out << '\n';
            return 0;
        }
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 1;
    }
    return 0;
}
