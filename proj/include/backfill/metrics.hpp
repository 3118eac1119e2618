#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "backfill/rules.hpp"
#include "backfill/scenario.hpp"
#include "backfill/trial.hpp"

namespace backfill {

struct ClassificationConfig {
    double band_lower = 0.18;  ///< acceptable band on true cycle-1 toxicity
    double band_upper = 0.33;  ///< also the "overly toxic" threshold
    /// In a scenario with no MTD where every dose sits below the band, a
    /// highest-dose-very-safe stop counts as correct. When false, selecting
    /// the highest dose counts instead.
    bool very_safe_stop_is_correct = true;
};

struct SelectionClass {
    bool correct = false;
    bool acceptable = false;
};

/// True when every dose's cycle-1 toxicity exceeds the band.
bool all_doses_unsafe(const Scenario& scenario, const ClassificationConfig& config);
/// True when the scenario marks no MTD and every dose sits below the band.
bool all_doses_very_safe(const Scenario& scenario, const ClassificationConfig& config);

SelectionClass classify_selection(const TrialResult& result, const Scenario& scenario,
                                  const ClassificationConfig& config);

/// Patients assigned to doses whose true cycle-1 toxicity exceeds band_upper.
int overdosed_patients(const TrialResult& result, const Scenario& scenario, const ClassificationConfig& config);

struct ScenarioSummary {
    std::size_t sims = 0;
    double pcs = 0.0;
    double pas = 0.0;
    double mean_n = 0.0;
    std::optional<double> mean_duration;   ///< absent for the benchmark
    std::optional<double> mean_dlts;
    std::optional<double> pct_dlt;         ///< mean per-trial percentage of patients with a DLT
    std::optional<double> mean_overdosed;
    std::vector<std::size_t> selections;   ///< per dose
    std::size_t no_selection = 0;
    std::array<std::size_t, kStopReasonCount> stop_counts{};
};

/// Folds per-trial results in list order.
ScenarioSummary aggregate(std::span<const TrialResult> results, const Scenario& scenario,
                          const ClassificationConfig& config);

/// Outcome of one benchmark replicate.
struct BenchmarkSelection {
    std::optional<std::size_t> dose;  ///< absent when flagged unsafe
    std::vector<double> estimates;
};

/// Complete-information estimate from latent tolerances: patient i with
/// tolerance u_i has a DLT at dose j iff u_i <= p_j.
BenchmarkSelection benchmark_select(std::span<const double> tolerances, std::span<const double> probs, double target,
                                    const ClassificationConfig& config, bool flag_unsafe);

/// Non-parametric benchmark over `sims` replicates of n_max patients.
/// Uses the S-cycle curve and tau_S. Throws std::invalid_argument for a
/// non-monotone toxicity curve.
ScenarioSummary run_benchmark(const Scenario& scenario, int n_max, int cycles, double tau1, int sims,
                              std::uint64_t seed, const ClassificationConfig& config, bool flag_unsafe = true);

} // namespace backfill
