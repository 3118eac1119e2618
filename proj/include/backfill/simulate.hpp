#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "backfill/metrics.hpp"
#include "backfill/trial.hpp"

namespace backfill {

/// Seed of one replicate. Depends on the scenario label, not on the design,
/// so every design variant sees the same patients (common random numbers).
std::uint64_t trial_seed(std::uint64_t master_seed, const Scenario& scenario, int replicate);

/// Reference implementation: replicates one after another.
std::vector<TrialResult> simulate_serial(const DesignConfig& design, const Scenario& scenario, int sims,
                                         std::uint64_t master_seed);

/// OpenMP over replicates. Output is identical to simulate_serial for any
/// worker count (each replicate owns its seed and its output slot).
std::vector<TrialResult> simulate_parallel(const DesignConfig& design, const Scenario& scenario, int sims,
                                           std::uint64_t master_seed, int workers);

struct DesignVariant {
    BackfillPolicy policy = BackfillPolicy::None;
    int cycles = 1;
    std::string prior_id;
    DesignConfig design;
};

/// Prior id "auto" picks the calibrated prior matching (cycles, backfilling).
std::string auto_prior_id(BackfillPolicy policy, int cycles);

struct RunManifest {
    std::string design_ref = "default";  ///< path of the design file, or "default"
    DesignConfig base;
    std::string scenario_selector = "all";
    std::vector<Scenario> scenarios;
    std::vector<BackfillPolicy> policies{BackfillPolicy::None};
    std::vector<int> cycles{1};
    std::string prior = "vague";
    int sims = 1000;
    std::uint64_t seed = 20240601;
    std::filesystem::path out = "out";
    int workers = 1;
    ClassificationConfig classification;

    std::vector<DesignVariant> variants() const;
    /// Everything that affects numerical output; excludes out and workers.
    nlohmann::json canonical() const;
    std::uint64_t hash() const;
    void validate() const;
};

struct SummaryRow {
    std::string scenario;
    std::string policy;  ///< backfill policy name, or "benchmark"
    int cycles = 1;
    std::string prior;
    ScenarioSummary summary;
};

struct ArchiveRecord {
    std::string scenario;
    std::string policy;
    int cycles = 1;
    std::string prior;
    int replicate = 0;
    std::uint64_t seed = 0;
    SelectionClass selection;
    int overdosed = 0;
    TrialResult result;
};

struct SimulationOutput {
    std::vector<SummaryRow> rows;
    std::vector<ArchiveRecord> archive;
};

SimulationOutput run_simulation(const RunManifest& manifest, bool keep_archive = true);
std::vector<SummaryRow> run_benchmarks(const RunManifest& manifest);

/// "# manifest_hash=<hex> seed=<n>" line that heads every output file.
std::string provenance_line(std::uint64_t manifest_hash, std::uint64_t seed);

/// Fixed column order; first line is the provenance comment.
std::string summary_csv(std::uint64_t manifest_hash, std::uint64_t seed, std::span<const SummaryRow> rows,
                        std::size_t n_doses);

void write_archive(std::ostream& out, const RunManifest& manifest, std::span<const ArchiveRecord> records);

/// Writes summary.csv, trials.jsonl and manifest.json to manifest.out.
void write_simulation_outputs(const RunManifest& manifest, const SimulationOutput& output);

struct CalibrationCandidate {
    std::string id;
    PriorHyper prior;
};

struct CalibrationScore {
    CalibrationCandidate candidate;
    double mean_pcs = 0.0;
    double mean_pas = 0.0;
    double mean_n = 0.0;
    std::vector<ScenarioSummary> per_scenario;
};

struct CalibrationResult {
    std::size_t best = 0;
    std::vector<CalibrationScore> scores;
};

/// Ranks candidates by mean PCS over the scenarios, then higher mean PAS,
/// then lower mean sample size. All candidates share replicate seeds.
CalibrationResult calibrate(const DesignConfig& base, std::span<const CalibrationCandidate> candidates,
                            std::span<const Scenario> scenarios, int sims, std::uint64_t seed, int workers,
                            const ClassificationConfig& classification);

/// Index of the winning score under the calibration ordering.
std::size_t best_calibration_score(std::span<const CalibrationScore> scores);

std::string calibration_csv(std::uint64_t manifest_hash, std::uint64_t seed, const CalibrationResult& result,
                            std::span<const Scenario> scenarios);

struct ReportFiles {
    std::string pcs_pas;
    std::string size_duration;
    std::string dlt_exposure;
};

/// Long-format, plot-ready tables built from a trials.jsonl archive.
ReportFiles build_report(std::istream& archive);

} // namespace backfill
