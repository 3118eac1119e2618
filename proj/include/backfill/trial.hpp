#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "backfill/posterior.hpp"
#include "backfill/rules.hpp"
#include "backfill/scenario.hpp"

namespace backfill {

enum class BackfillPolicy { None, Partial, Full };

std::string_view to_string(BackfillPolicy policy);
BackfillPolicy backfill_policy_from_string(std::string_view name);

enum class CohortKind { Escalation, Backfill };

std::string_view to_string(CohortKind kind);

struct DesignConfig {
    DoseGrid grid = default_grid();
    PriorHyper prior{};
    RuleConfig rules{};
    int cohort_size = 3;
    int followup_cycles = 1;  ///< S
    int cycle_weeks = 6;
    BackfillPolicy backfill = BackfillPolicy::None;
    int backfill_cohorts_per_dose = 2;
    SamplerConfig sampler{};

    /// tau_S, the target on the S-cycle scale used for dose selection and the MTD.
    double target() const { return target_for_followup(rules.tau1, followup_cycles); }
    bool tite() const noexcept { return followup_cycles > 1; }

    /// Throws ConfigError describing the first violated constraint.
    void validate() const;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct PatientRecord {
    std::size_t dose = 0;
    int enroll_week = 0;
    int cohort = 0;                ///< index into TrialState::cohorts
    int cycles_observed = 0;       ///< completed cycles with a known outcome
    std::optional<int> dlt_cycle;  ///< observed DLT cycle, if any

    bool complete(int total_cycles) const noexcept { return dlt_cycle.has_value() || cycles_observed >= total_cycles; }
};

struct CohortRecord {
    std::size_t dose = 0;
    int enroll_week = 0;
    CohortKind kind = CohortKind::Escalation;
    int ordinal = 0;                ///< position among cohorts of the same kind
    std::optional<bool> activity;   ///< activity signal once observed
    int decision = -1;              ///< decision that enrolled it (-1 = start)
};

/// Everything known about a running trial. Clock and enrollment weeks are
/// in weeks; decisions happen every cycle_weeks.
struct TrialState {
    int clock_weeks = 0;
    std::vector<PatientRecord> patients;
    std::vector<CohortRecord> cohorts;
    std::vector<bool> surpassed;    ///< escalation has moved above this dose at some point
    std::vector<bool> backfilled;   ///< dose received backfill cohorts
    bool model_phase_started = false;  ///< TITE start-up over (a DLT has been observed)
    std::size_t current_dose = 0;      ///< dose of the latest escalation cohort
    int decisions = 0;
    bool stopped = false;

    static TrialState initial(const DesignConfig& design);

    std::vector<Observation> observations(const DesignConfig& design) const;
    std::vector<DoseTally> tallies(std::size_t n_doses) const;
    std::vector<SafetyCount> safety_counts(std::size_t n_doses) const;
    int escalation_cohorts_followed() const;
    std::optional<std::size_t> highest_experimented() const;
    int n_enrolled() const noexcept { return static_cast<int>(patients.size()); }
    int n_dlts() const;
    bool activity_seen_at_or_below(std::size_t dose) const;
};

/// A cohort to enroll as the result of a decision.
struct Enrollment {
    std::size_t dose = 0;
    CohortKind kind = CohortKind::Escalation;
    int size = 0;
};

struct Decision {
    int index = 0;
    int week = 0;
    bool startup = false;
    std::vector<DoseSummary> summaries;  ///< thresholds: {tau1}
    std::optional<double> mtd_cv;
    std::optional<std::size_t> first_excluded;
    RuleStatus rules;
    StopDecision stop;
    std::optional<std::size_t> next_dose;  ///< selected dose, whether or not the trial stops
    std::vector<Enrollment> enrollments;   ///< empty when stopped
    SamplerDiagnostics diagnostics;
};

/// Distances to the target closer than this count as ties, which go to the lower dose.
inline constexpr double kTieTolerance = 1e-12;

/// Posterior-mean selection: argmin |mean - target| over admissible doses
/// satisfying the k-fold cap, ties to the lower dose. `admissible_count` is
/// the number of admissible doses counted from the bottom of the grid.
std::size_t recommend_next_dose(std::span<const DoseSummary> summaries, std::size_t admissible_count,
                                double target, const DoseGrid& grid, std::optional<double> max_experimented,
                                double kfold);

/// Mean-toxicity overload used by tests and the conduct service.
std::size_t recommend_next_dose(std::span<const double> means, std::size_t admissible_count, double target,
                                const DoseGrid& grid, std::optional<double> max_experimented, double kfold);

/// One decision at state.clock_weeks from the data observed so far. Pure.
Decision decide(const DesignConfig& design, const TrialState& state, std::uint64_t fit_seed);

/// Enrolls the cohorts of a non-stopping decision and updates the ledger.
/// Returns the indices of the new cohorts.
std::vector<int> apply_decision(const DesignConfig& design, TrialState& state, const Decision& decision);

/// Adds a cohort at `week`. Returns its index.
int enroll_cohort(TrialState& state, std::size_t dose, CohortKind kind, int size, int week, int decision);

/// One observed (or hypothetical) cycle outcome.
struct CycleOutcome {
    int patient = 0;
    int cycle = 1;  ///< 1-based
    bool dlt = false;
};

class OutcomeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A cycle outcome that has already been recorded.
class DuplicateOutcome : public OutcomeError {
public:
    using OutcomeError::OutcomeError;
};

/// Records a cycle outcome. Cycles must arrive in order; a cycle already
/// recorded throws unless `amend` is set. Amending rewrites the cycle's DLT flag.
void record_outcome(TrialState& state, const DesignConfig& design, const CycleOutcome& outcome, bool amend = false);

/// Cycles of follow-up a patient has completed by `week` (capped at S).
int cycles_elapsed(const DesignConfig& design, const PatientRecord& patient, int week);

/// True when every patient has reported all cycles that end by the next
/// decision time (clock + cycle_weeks).
bool ready_for_decision(const DesignConfig& design, const TrialState& state);

/// True when every enrolled patient has finished follow-up.
bool follow_up_complete(const DesignConfig& design, const TrialState& state);

/// Fit seed for the decision with the given index.
std::uint64_t decision_seed(std::uint64_t trial_seed, int decision_index);

struct DecisionTrace {
    int week = 0;
    bool startup = false;
    std::optional<std::size_t> next_dose;
    StopReason reason = StopReason::None;
    std::vector<double> mean_tox;
    std::optional<double> mtd_cv;
    std::optional<std::size_t> first_excluded;

    friend bool operator==(const DecisionTrace&, const DecisionTrace&) = default;
};

DecisionTrace trace_of(const Decision& d);

struct CohortEntry {
    std::size_t dose = 0;
    int week = 0;
    CohortKind kind = CohortKind::Escalation;
    int size = 0;

    friend bool operator==(const CohortEntry&, const CohortEntry&) = default;
};

struct TrialResult {
    std::optional<std::size_t> recommendation;
    StopReason stop_reason = StopReason::None;
    int n_enrolled = 0;
    int n_dlts = 0;
    int duration_weeks = 0;
    std::vector<DoseTally> tallies;
    std::vector<CohortEntry> cohorts;
    std::vector<DecisionTrace> trace;

    friend bool operator==(const TrialResult&, const TrialResult&) = default;
};

/// Final recommendation from complete data: posterior-mean selection over the
/// doses below the first exclusion (optionally only experimented ones).
std::optional<std::size_t> final_recommendation(const DesignConfig& design, const TrialState& state,
                                                 const Decision& final_fit);

/// Simulates one complete trial. Patients' outcomes come from per-patient
/// streams keyed by (seed, cohort kind, cohort ordinal, position), so designs
/// that differ only in backfilling see identical escalation outcomes.
TrialResult run_trial(const DesignConfig& design, const Scenario& scenario, std::uint64_t seed);

struct WhatIfResult {
    Decision decision;
};

/// Applies hypothetical outcomes to a copy of `state` and evaluates the
/// decision that would follow. Throws OutcomeError on malformed input.
WhatIfResult what_if(const DesignConfig& design, const TrialState& state, std::span<const CycleOutcome> hypothetical,
                     std::uint64_t fit_seed);

} // namespace backfill
