#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace backfill {

enum class StopReason {
    None,
    SufficientInformation,
    LowestUnsafe,
    HighestVerySafe,
    Precision,
    HardSafety,
    MaxPatients,
};

std::string_view to_string(StopReason reason);
StopReason stop_reason_from_string(std::string_view name);
inline constexpr std::size_t kStopReasonCount = 7;

/// Safety stops end the trial without a recommended dose.
constexpr bool is_safety_stop(StopReason r) noexcept
{
    return r == StopReason::HardSafety || r == StopReason::LowestUnsafe;
}

struct RuleConfig {
    double tau1 = 0.3;          ///< cycle-1 target; also the threshold of the lowest-unsafe / highest-safe rules
    double psi = 0.95;          ///< hard-safety posterior threshold
    double kfold = 2.0;         ///< maximum fold-rise over the highest experimented dose
    double unsafe_prob = 0.80;  ///< lowest dose unsafe if P(p_1 > tau1) exceeds this
    double safe_prob = 0.80;    ///< highest dose very safe if P(p_J <= tau1) exceeds this
    double cv_limit = 0.30;
    int min_escalation_cohorts_for_precision = 3;
    int cohorts_for_sufficient_info = 3;
    int n_max = 54;
    bool restrict_recommendation_to_experimented = false;

    // Order in which triggered rules are reported; the first one wins.
    std::array<StopReason, 6> priority{StopReason::HardSafety,      StopReason::LowestUnsafe,
                                       StopReason::MaxPatients,     StopReason::HighestVerySafe,
                                       StopReason::SufficientInformation, StopReason::Precision};

    void validate(int cohort_size) const;
    friend bool operator==(const RuleConfig&, const RuleConfig&) = default;
};

struct DoseTally {
    int patients = 0;
    int dlts = 0;
    int escalation_cohorts = 0;
    int backfill_cohorts = 0;

    int cohorts() const noexcept { return escalation_cohorts + backfill_cohorts; }
    friend bool operator==(const DoseTally&, const DoseTally&) = default;
};

/// Counts entering the Beta-binomial hard-safety test at one dose.
struct SafetyCount {
    int n = 0;
    int dlts = 0;
};

struct StopDecision {
    bool stopped = false;
    StopReason reason = StopReason::None;
    bool recommends_dose = true;
    friend bool operator==(const StopDecision&, const StopDecision&) = default;
};

/// P(p > tau1) > psi under a Beta(1 + dlts, 1 + n - dlts) posterior.
bool hard_safety_excluded(int dlts, int n, double tau1, double psi);

/// Upper tail P(p > x) of Beta(a, b).
double beta_upper_tail(double a, double b, double x);

/// True when `candidate` is within kfold of the highest experimented dose.
bool kfold_cap(double candidate, double max_experimented_dose, double kfold);

/// Lowest excluded dose; every dose from it upwards is inadmissible.
std::optional<std::size_t> first_excluded_dose(std::span<const SafetyCount> counts, double tau1, double psi);

/// Everything the stopping rules look at, derived from the trial state and
/// the current posterior.
struct RuleInputs {
    std::span<const DoseTally> tallies;
    std::optional<std::size_t> first_excluded;
    double prob_lowest_above = 0.0;           ///< P(p_{d_1} > tau1)
    double prob_highest_at_or_below = 0.0;    ///< P(p_{d_J} <= tau1)
    std::optional<double> mtd_cv;             ///< absent when undefined
    int escalation_cohorts_followed = 0;      ///< non-backfill cohorts with >= 1 cycle observed
    int n_enrolled = 0;
    std::size_t next_dose = 0;
};

/// Which rules currently fire, independent of priority.
struct RuleStatus {
    bool hard_safety = false;
    bool lowest_unsafe = false;
    bool max_patients = false;
    bool highest_very_safe = false;
    bool sufficient_information = false;
    bool precision = false;
    bool precision_eligible = false;

    bool fired(StopReason r) const noexcept;
};

RuleStatus evaluate_rules(const RuleInputs& in, const RuleConfig& config);

/// First triggered rule in config.priority order.
StopDecision evaluate_stopping(const RuleInputs& in, const RuleConfig& config);

} // namespace backfill
