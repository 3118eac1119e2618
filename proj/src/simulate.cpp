#include "backfill/simulate.hpp"

#include <cstdio>
#include <exception>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>

#include <omp.h>

#include "backfill/config.hpp"

namespace backfill {

using nlohmann::json;

std::uint64_t trial_seed(std::uint64_t master_seed, const Scenario& scenario, int replicate)
{
    return derive_seed(master_seed,
                       {tag(StreamTag::Replicate), hash_label(scenario.label), static_cast<std::uint64_t>(replicate)});
}

std::vector<TrialResult> simulate_serial(const DesignConfig& design, const Scenario& scenario, int sims,
                                         std::uint64_t master_seed)
{
    std::vector<TrialResult> out;
    out.reserve(static_cast<std::size_t>(sims));
    for (int r = 0; r < sims; ++r) {
        out.push_back(run_trial(design, scenario, trial_seed(master_seed, scenario, r)));
    }
    return out;
}

std::vector<TrialResult> simulate_parallel(const DesignConfig& design, const Scenario& scenario, int sims,
                                           std::uint64_t master_seed, int workers)
{
    design.validate();
    std::vector<TrialResult> out(static_cast<std::size_t>(sims));
    std::exception_ptr failure;
    std::mutex failure_mutex;

#pragma omp parallel for schedule(dynamic, 4) num_threads(workers > 0 ? workers : 1)
    for (int r = 0; r < sims; ++r) {
        try {
            out[static_cast<std::size_t>(r)] = run_trial(design, scenario, trial_seed(master_seed, scenario, r));
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) {
                failure = std::current_exception();
            }
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
    return out;
}

std::string auto_prior_id(BackfillPolicy policy, int cycles)
{
    const std::string c = cycles == 1 ? "1cycle" : "3cycle";
    return "calibrated-" + c + (policy == BackfillPolicy::None ? "-nobackfill" : "-backfill");
}

std::vector<DesignVariant> RunManifest::variants() const
{
    std::vector<DesignVariant> out;
    for (int c : cycles) {
        for (BackfillPolicy p : policies) {
            DesignVariant v;
            v.policy = p;
            v.cycles = c;
            v.prior_id = prior == "auto" ? auto_prior_id(p, c) : prior;
            v.design = base;
            v.design.backfill = p;
            v.design.followup_cycles = c;
            v.design.prior = resolve_prior(v.prior_id);
            out.push_back(std::move(v));
        }
    }
    return out;
}

json RunManifest::canonical() const
{
    json policies_json = json::array();
    for (auto p : policies) {
        policies_json.push_back(std::string(to_string(p)));
    }
    json labels = json::array();
    for (const auto& s : scenarios) {
        labels.push_back(scenario_to_json(s));
    }
    return json{{"design_ref", design_ref},
                {"design", to_json(base)},
                {"scenario_selector", scenario_selector},
                {"scenarios", labels},
                {"policies", policies_json},
                {"cycles", cycles},
                {"prior", prior},
                {"sims", sims},
                {"seed", seed},
                {"classification",
                 {{"band_lower", classification.band_lower},
                  {"band_upper", classification.band_upper},
                  {"very_safe_stop_is_correct", classification.very_safe_stop_is_correct}}}};
}

std::uint64_t RunManifest::hash() const
{
    return hash_label(canonical().dump());
}

void RunManifest::validate() const
{
    if (sims < 1) {
        throw ConfigError("sims must be >= 1");
    }
    if (scenarios.empty()) {
        throw ConfigError("no scenarios selected");
    }
    if (policies.empty() || cycles.empty()) {
        throw ConfigError("need at least one policy and one cycle setting");
    }
    for (int c : cycles) {
        if (c < 1) {
            throw ConfigError("cycles must be >= 1");
        }
    }
    for (const auto& v : variants()) {
        v.design.validate();
    }
    for (const auto& s : scenarios) {
        s.validate();
        if (!(s.grid == base.grid)) {
            throw ConfigError("scenario '" + s.label + "' dose grid does not match the design grid");
        }
    }
}

SimulationOutput run_simulation(const RunManifest& manifest, bool keep_archive)
{
    manifest.validate();
    SimulationOutput out;
    for (const auto& v : manifest.variants()) {
        for (const auto& scenario : manifest.scenarios) {
            auto results = simulate_parallel(v.design, scenario, manifest.sims, manifest.seed, manifest.workers);
            SummaryRow row{scenario.label, std::string(to_string(v.policy)), v.cycles, v.prior_id,
                           aggregate(results, scenario, manifest.classification)};
            out.rows.push_back(std::move(row));
            if (!keep_archive) {
                continue;
            }
            for (int r = 0; r < manifest.sims; ++r) {
                auto& res = results[static_cast<std::size_t>(r)];
                ArchiveRecord rec;
                rec.scenario = scenario.label;
                rec.policy = std::string(to_string(v.policy));
                rec.cycles = v.cycles;
                rec.prior = v.prior_id;
                rec.replicate = r;
                rec.seed = trial_seed(manifest.seed, scenario, r);
                rec.selection = classify_selection(res, scenario, manifest.classification);
                rec.overdosed = overdosed_patients(res, scenario, manifest.classification);
                rec.result = std::move(res);
                out.archive.push_back(std::move(rec));
            }
        }
    }
    return out;
}

std::vector<SummaryRow> run_benchmarks(const RunManifest& manifest)
{
    if (manifest.sims < 1 || manifest.scenarios.empty()) {
        throw ConfigError("benchmark needs sims >= 1 and at least one scenario");
    }
    std::vector<SummaryRow> rows;
    for (int c : manifest.cycles) {
        for (const auto& scenario : manifest.scenarios) {
            const std::uint64_t seed = derive_seed(manifest.seed, {tag(StreamTag::Benchmark), hash_label(scenario.label)});
            rows.push_back(SummaryRow{scenario.label, "benchmark", c, "-",
                                      run_benchmark(scenario, manifest.base.rules.n_max, c, manifest.base.rules.tau1,
                                                    manifest.sims, seed, manifest.classification)});
        }
    }
    return rows;
}

namespace {

std::string num(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string num(const std::optional<double>& v)
{
    return v ? num(*v) : std::string{};
}

} // namespace

std::string provenance_line(std::uint64_t manifest_hash, std::uint64_t seed)
{
    char buf[96];
    std::snprintf(buf, sizeof buf, "# manifest_hash=%016llx seed=%llu\n", static_cast<unsigned long long>(manifest_hash),
                  static_cast<unsigned long long>(seed));
    return buf;
}

std::string summary_csv(std::uint64_t manifest_hash, std::uint64_t seed, std::span<const SummaryRow> rows,
                        std::size_t n_doses)
{
    std::ostringstream out;
    out << provenance_line(manifest_hash, seed);
    out << "scenario,policy,cycles,prior,pcs,pas,mean_n,mean_duration_weeks,mean_dlts,pct_dlt,mean_overdosed";
    for (std::size_t j = 0; j < n_doses; ++j) {
        out << ",sel_d" << j + 1;
    }
    out << ",sel_none";
    for (std::size_t k = 1; k < kStopReasonCount; ++k) {
        out << ",stop_" << to_string(static_cast<StopReason>(k));
    }
    out << '\n';
    for (const auto& row : rows) {
        const auto& s = row.summary;
        out << row.scenario << ',' << row.policy << ',' << row.cycles << ',' << row.prior << ',' << num(s.pcs) << ','
            << num(s.pas) << ',' << num(s.mean_n) << ',' << num(s.mean_duration) << ',' << num(s.mean_dlts) << ','
            << num(s.pct_dlt) << ',' << num(s.mean_overdosed);
        for (std::size_t j = 0; j < n_doses; ++j) {
            out << ',' << (j < s.selections.size() ? s.selections[j] : 0);
        }
        out << ',' << s.no_selection;
        for (std::size_t k = 1; k < kStopReasonCount; ++k) {
            out << ',' << s.stop_counts[k];
        }
        out << '\n';
    }
    return out.str();
}

void write_archive(std::ostream& out, const RunManifest& manifest, std::span<const ArchiveRecord> records)
{
    out << json{{"manifest_hash", manifest.hash()}, {"seed", manifest.seed}}.dump() << '\n';
    for (const auto& rec : records) {
        json j{{"scenario", rec.scenario},
               {"policy", rec.policy},
               {"cycles", rec.cycles},
               {"prior", rec.prior},
               {"replicate", rec.replicate},
               {"seed", rec.seed},
               {"correct", rec.selection.correct},
               {"acceptable", rec.selection.acceptable},
               {"overdosed", rec.overdosed},
               {"result", to_json(rec.result)}};
        out << j.dump() << '\n';
    }
}

void write_simulation_outputs(const RunManifest& manifest, const SimulationOutput& output)
{
    std::filesystem::create_directories(manifest.out);
    const auto hash = manifest.hash();
    {
        std::ofstream f(manifest.out / "summary.csv");
        f << summary_csv(hash, manifest.seed, output.rows, manifest.base.grid.size());
    }
    {
        std::ofstream f(manifest.out / "trials.jsonl");
        write_archive(f, manifest, output.archive);
    }
    {
        std::ofstream f(manifest.out / "manifest.json");
        json m = manifest.canonical();
        m["manifest_hash"] = hash;
        f << m.dump(2) << '\n';
    }
}

std::size_t best_calibration_score(std::span<const CalibrationScore> scores)
{
    std::size_t best = 0;
    for (std::size_t k = 1; k < scores.size(); ++k) {
        const auto& a = scores[k];
        const auto& b = scores[best];
        if (a.mean_pcs != b.mean_pcs) {
            if (a.mean_pcs > b.mean_pcs) best = k;
        } else if (a.mean_pas != b.mean_pas) {
            if (a.mean_pas > b.mean_pas) best = k;
        } else if (a.mean_n < b.mean_n) {
            best = k;
        }
    }
    return best;
}

CalibrationResult calibrate(const DesignConfig& base, std::span<const CalibrationCandidate> candidates,
                            std::span<const Scenario> scenarios, int sims, std::uint64_t seed, int workers,
                            const ClassificationConfig& classification)
{
    if (candidates.empty()) {
        throw ConfigError("calibration needs at least one candidate prior");
    }
    if (scenarios.empty() || sims < 1) {
        throw ConfigError("calibration needs scenarios and sims >= 1");
    }
    CalibrationResult result;
    for (const auto& candidate : candidates) {
        DesignConfig design = base;
        design.prior = candidate.prior;
        CalibrationScore score{candidate, 0.0, 0.0, 0.0, {}};
        for (const auto& scenario : scenarios) {
            const auto results = simulate_parallel(design, scenario, sims, seed, workers);
            score.per_scenario.push_back(aggregate(results, scenario, classification));
            score.mean_pcs += score.per_scenario.back().pcs;
            score.mean_pas += score.per_scenario.back().pas;
            score.mean_n += score.per_scenario.back().mean_n;
        }
        const double n = static_cast<double>(scenarios.size());
        score.mean_pcs /= n;
        score.mean_pas /= n;
        score.mean_n /= n;
        result.scores.push_back(std::move(score));
    }
    result.best = best_calibration_score(result.scores);
    return result;
}

std::string calibration_csv(std::uint64_t manifest_hash, std::uint64_t seed, const CalibrationResult& result,
                            std::span<const Scenario> scenarios)
{
    std::ostringstream out;
    out << provenance_line(manifest_hash, seed);
    out << "candidate,c1,c2,v1,v2,mean_pcs,mean_pas,mean_n,best";
    for (const auto& s : scenarios) {
        out << ",pcs_s" << s.label;
    }
    out << '\n';
    for (std::size_t k = 0; k < result.scores.size(); ++k) {
        const auto& sc = result.scores[k];
        const auto& p = sc.candidate.prior;
        out << sc.candidate.id << ',' << num(p.c1) << ',' << num(p.c2) << ',' << num(p.v1) << ',' << num(p.v2) << ','
            << num(sc.mean_pcs) << ',' << num(sc.mean_pas) << ',' << num(sc.mean_n) << ','
            << (k == result.best ? 1 : 0);
        for (const auto& s : sc.per_scenario) {
            out << ',' << num(s.pcs);
        }
        out << '\n';
    }
    return out.str();
}

ReportFiles build_report(std::istream& archive)
{
    std::string line;
    if (!std::getline(archive, line)) {
        throw std::runtime_error("archive is empty");
    }
    const json header = json::parse(line);
    const std::uint64_t hash = header.at("manifest_hash").get<std::uint64_t>();
    const std::uint64_t seed = header.at("seed").get<std::uint64_t>();

    struct Acc {
        double n = 0, correct = 0, acceptable = 0, size = 0, duration = 0, dlts = 0, pct = 0, over = 0;
    };
    std::vector<std::string> order;
    std::map<std::string, Acc> groups;
    while (std::getline(archive, line)) {
        if (line.empty()) {
            continue;
        }
        const json rec = json::parse(line);
        const std::string key = rec.at("scenario").get<std::string>() + ',' + rec.at("policy").get<std::string>() +
                                ',' + std::to_string(rec.at("cycles").get<int>()) + ',' +
                                rec.at("prior").get<std::string>();
        auto [it, inserted] = groups.try_emplace(key);
        if (inserted) {
            order.push_back(key);
        }
        auto& a = it->second;
        const auto& r = rec.at("result");
        const double n = r.at("n_enrolled").get<double>();
        const double d = r.at("n_dlts").get<double>();
        a.n += 1;
        a.correct += rec.at("correct").get<bool>() ? 1 : 0;
        a.acceptable += rec.at("acceptable").get<bool>() ? 1 : 0;
        a.size += n;
        a.duration += r.at("duration_weeks").get<double>();
        a.dlts += d;
        a.pct += n > 0 ? 100.0 * d / n : 0.0;
        a.over += rec.at("overdosed").get<double>();
    }

    const std::string prov = provenance_line(hash, seed);
    std::ostringstream pcs, size, dlt;
    pcs << prov << "scenario,policy,cycles,prior,metric,value\n";
    size << prov << "scenario,policy,cycles,prior,mean_n,mean_duration_weeks\n";
    dlt << prov << "scenario,policy,cycles,prior,mean_dlts,pct_dlt,mean_overdosed\n";
    for (const auto& key : order) {
        const auto& a = groups.at(key);
        pcs << key << ",pcs," << num(a.correct / a.n) << '\n';
        pcs << key << ",pas," << num(a.acceptable / a.n) << '\n';
        size << key << ',' << num(a.size / a.n) << ',' << num(a.duration / a.n) << '\n';
        dlt << key << ',' << num(a.dlts / a.n) << ',' << num(a.pct / a.n) << ',' << num(a.over / a.n) << '\n';
    }
    return ReportFiles{pcs.str(), size.str(), dlt.str()};
}

} // namespace backfill
