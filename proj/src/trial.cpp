#include "backfill/trial.hpp"

#include <limits>
#include <algorithm>
#include <cmath>

namespace backfill {

std::string_view to_string(BackfillPolicy policy)
{
    switch (policy) {
    case BackfillPolicy::None: return "none";
    case BackfillPolicy::Partial: return "partial";
    case BackfillPolicy::Full: return "full";
    }
    return "none";
}

BackfillPolicy backfill_policy_from_string(std::string_view name)
{
    if (name == "none") return BackfillPolicy::None;
    if (name == "partial") return BackfillPolicy::Partial;
    if (name == "full") return BackfillPolicy::Full;
    throw ConfigError("unknown backfill policy '" + std::string(name) + "'");
}

std::string_view to_string(CohortKind kind)
{
    return kind == CohortKind::Escalation ? "escalation" : "backfill";
}

void DesignConfig::validate() const
{
    if (grid.size() < 2) {
        throw ConfigError("design needs a dose grid with at least two doses");
    }
    if (cohort_size < 1) {
        throw ConfigError("cohort_size must be >= 1");
    }
    if (followup_cycles < 1) {
        throw ConfigError("followup_cycles must be >= 1");
    }
    if (cycle_weeks < 1) {
        throw ConfigError("cycle_weeks must be >= 1");
    }
    if (backfill_cohorts_per_dose < 0) {
        throw ConfigError("backfill_cohorts_per_dose must be >= 0");
    }
    try {
        prior.validate();
        rules.validate(cohort_size);
        sampler.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

TrialState TrialState::initial(const DesignConfig& design)
{
    TrialState s;
    s.surpassed.assign(design.grid.size(), false);
    s.backfilled.assign(design.grid.size(), false);
    enroll_cohort(s, 0, CohortKind::Escalation, std::min(design.cohort_size, design.rules.n_max), 0, -1);
    return s;
}

std::vector<Observation> TrialState::observations(const DesignConfig& design) const
{
    const int total = design.followup_cycles;
    std::vector<Observation> out;
    out.reserve(patients.size());
    for (const auto& p : patients) {
        const bool dlt = p.dlt_cycle.has_value();
        const int u = dlt ? *p.dlt_cycle : std::min(p.cycles_observed, total);
        if (u < 1) {
            continue;
        }
        out.push_back(Observation{design.grid[p.dose], tite_weight(u, total, dlt), dlt});
    }
    return out;
}

std::vector<DoseTally> TrialState::tallies(std::size_t n_doses) const
{
    std::vector<DoseTally> t(n_doses);
    for (const auto& p : patients) {
        t[p.dose].patients += 1;
        t[p.dose].dlts += p.dlt_cycle ? 1 : 0;
    }
    for (const auto& c : cohorts) {
        (c.kind == CohortKind::Escalation ? t[c.dose].escalation_cohorts : t[c.dose].backfill_cohorts) += 1;
    }
    return t;
}

std::vector<SafetyCount> TrialState::safety_counts(std::size_t n_doses) const
{
    // Cycle-1 outcomes of every patient who has completed a cycle.
    std::vector<SafetyCount> c(n_doses);
    for (const auto& p : patients) {
        if (p.cycles_observed >= 1 || p.dlt_cycle) {
            c[p.dose].n += 1;
            c[p.dose].dlts += (p.dlt_cycle && *p.dlt_cycle == 1) ? 1 : 0;
        }
    }
    return c;
}

int TrialState::escalation_cohorts_followed() const
{
    int count = 0;
    for (std::size_t k = 0; k < cohorts.size(); ++k) {
        if (cohorts[k].kind != CohortKind::Escalation) {
            continue;
        }
        const bool followed = std::any_of(patients.begin(), patients.end(), [&](const PatientRecord& p) {
            return p.cohort == static_cast<int>(k) && (p.cycles_observed >= 1 || p.dlt_cycle);
        });
        count += followed ? 1 : 0;
    }
    return count;
}

std::optional<std::size_t> TrialState::highest_experimented() const
{
    std::optional<std::size_t> out;
    for (const auto& p : patients) {
        if (!out || p.dose > *out) {
            out = p.dose;
        }
    }
    return out;
}

int TrialState::n_dlts() const
{
    return static_cast<int>(std::count_if(patients.begin(), patients.end(),
                                          [](const PatientRecord& p) { return p.dlt_cycle.has_value(); }));
}

bool TrialState::activity_seen_at_or_below(std::size_t dose) const
{
    return std::any_of(cohorts.begin(), cohorts.end(),
                       [dose](const CohortRecord& c) { return c.dose <= dose && c.activity.value_or(false); });
}

int enroll_cohort(TrialState& state, std::size_t dose, CohortKind kind, int size, int week, int decision)
{
    CohortRecord c;
    c.dose = dose;
    c.enroll_week = week;
    c.kind = kind;
    c.ordinal = static_cast<int>(
        std::count_if(state.cohorts.begin(), state.cohorts.end(), [kind](const CohortRecord& r) { return r.kind == kind; }));
    c.decision = decision;
    const int index = static_cast<int>(state.cohorts.size());
    state.cohorts.push_back(c);
    for (int m = 0; m < size; ++m) {
        PatientRecord p;
        p.dose = dose;
        p.enroll_week = week;
        p.cohort = index;
        state.patients.push_back(p);
    }
    return index;
}

std::size_t recommend_next_dose(std::span<const double> means, std::size_t admissible_count, double target,
                                const DoseGrid& grid, std::optional<double> max_experimented, double kfold)
{
    const std::size_t limit = std::min(admissible_count, means.size());
    std::size_t best = 0;
    double best_distance = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < limit; ++j) {
        if (max_experimented && j > 0 && !kfold_cap(grid[j], *max_experimented, kfold)) {
            continue;
        }
        const double distance = std::abs(means[j] - target);
        if (distance < best_distance - kTieTolerance) {
            best = j;
            best_distance = distance;
        }
    }
    return best;
}

std::size_t recommend_next_dose(std::span<const DoseSummary> summaries, std::size_t admissible_count, double target,
                                const DoseGrid& grid, std::optional<double> max_experimented, double kfold)
{
    std::vector<double> means(summaries.size());
    std::transform(summaries.begin(), summaries.end(), means.begin(), [](const DoseSummary& s) { return s.mean_tox; });
    return recommend_next_dose(means, admissible_count, target, grid, max_experimented, kfold);
}

namespace {

std::vector<Enrollment> plan_enrollments(const DesignConfig& design, const TrialState& state, std::size_t next)
{
    std::vector<Enrollment> plan;
    int capacity = design.rules.n_max - state.n_enrolled();
    const int escalation_size = std::min(design.cohort_size, capacity);
    if (escalation_size <= 0) {
        return plan;
    }
    plan.push_back(Enrollment{next, CohortKind::Escalation, escalation_size});
    capacity -= escalation_size;
    if (design.backfill == BackfillPolicy::None) {
        return plan;
    }

    // Doses the escalation passes for the first time, highest first so that a
    // truncated wave keeps the cohorts nearest the escalation front.
    for (std::size_t j = next; j-- > 0;) {
        if (state.surpassed[j]) {
            continue;
        }
        if (design.backfill == BackfillPolicy::Partial && !state.activity_seen_at_or_below(j)) {
            continue;
        }
        for (int k = 0; k < design.backfill_cohorts_per_dose && capacity > 0; ++k) {
            const int size = std::min(design.cohort_size, capacity);
            plan.push_back(Enrollment{j, CohortKind::Backfill, size});
            capacity -= size;
        }
    }
    return plan;
}

} // namespace

Decision decide(const DesignConfig& design, const TrialState& state, std::uint64_t fit_seed)
{
    const std::size_t n_doses = design.grid.size();
    const double target = design.target();
    const std::vector<Observation> data = state.observations(design);

    Xoshiro256 rng(fit_seed);
    const PosteriorDraws draws = fit(data, design.prior, design.sampler, rng);

    Decision d;
    d.index = state.decisions;
    d.week = state.clock_weeks;
    d.diagnostics = draws.diagnostics;
    const double thresholds[] = {design.rules.tau1};
    d.summaries = dose_summaries(draws, design.grid, thresholds);
    try {
        d.mtd_cv = cv_mtd(mtd_draws(draws, target));
    } catch (const UndefinedCv&) {
        d.mtd_cv.reset();
    }

    const auto counts = state.safety_counts(n_doses);
    d.first_excluded = first_excluded_dose(counts, design.rules.tau1, design.rules.psi);
    const std::size_t admissible = d.first_excluded.value_or(n_doses);

    const bool any_dlt = std::any_of(state.patients.begin(), state.patients.end(),
                                     [](const PatientRecord& p) { return p.dlt_cycle.has_value(); });
    d.startup = design.tite() && !any_dlt;

    if (admissible > 0) {
        if (d.startup) {
            d.next_dose = std::min(state.current_dose + 1, admissible - 1);
        } else {
            std::optional<double> max_dose;
            if (auto h = state.highest_experimented()) {
                max_dose = design.grid[*h];
            }
            d.next_dose = recommend_next_dose(d.summaries, admissible, target, design.grid, max_dose,
                                              design.rules.kfold);
        }
    }

    const auto tallies = state.tallies(n_doses);
    RuleInputs in;
    in.tallies = tallies;
    in.first_excluded = d.first_excluded;
    in.prob_lowest_above = d.summaries.front().prob_above.front();
    in.prob_highest_at_or_below = d.summaries.back().prob_at_or_below.front();
    in.mtd_cv = d.mtd_cv;
    in.escalation_cohorts_followed = state.escalation_cohorts_followed();
    in.n_enrolled = state.n_enrolled();
    in.next_dose = d.next_dose.value_or(0);
    d.rules = evaluate_rules(in, design.rules);
    d.stop = evaluate_stopping(in, design.rules);

    if (!d.stop.stopped && d.next_dose) {
        d.enrollments = plan_enrollments(design, state, *d.next_dose);
    }
    return d;
}

std::vector<int> apply_decision(const DesignConfig& design, TrialState& state, const Decision& decision)
{
    std::vector<int> added;
    state.decisions += 1;
    state.model_phase_started = state.model_phase_started || !decision.startup;
    if (decision.stop.stopped || !decision.next_dose) {
        state.stopped = true;
        return added;
    }
    const std::size_t next = *decision.next_dose;
    for (const auto& e : decision.enrollments) {
        added.push_back(enroll_cohort(state, e.dose, e.kind, e.size, state.clock_weeks, decision.index));
        if (e.kind == CohortKind::Backfill) {
            state.backfilled[e.dose] = true;
        }
    }
    for (std::size_t j = 0; j < next && j < design.grid.size(); ++j) {
        state.surpassed[j] = true;
    }
    state.current_dose = next;
    return added;
}

void record_outcome(TrialState& state, const DesignConfig& design, const CycleOutcome& outcome, bool amend)
{
    if (outcome.patient < 0 || outcome.patient >= state.n_enrolled()) {
        throw OutcomeError("unknown patient " + std::to_string(outcome.patient));
    }
    if (outcome.cycle < 1 || outcome.cycle > design.followup_cycles) {
        throw OutcomeError("cycle " + std::to_string(outcome.cycle) + " outside follow-up window");
    }
    auto& p = state.patients[static_cast<std::size_t>(outcome.patient)];
    const int recorded = p.dlt_cycle.value_or(p.cycles_observed);
    if (amend) {
        if (outcome.cycle > recorded) {
            throw OutcomeError("cannot amend cycle " + std::to_string(outcome.cycle) + " of patient " +
                               std::to_string(outcome.patient) + ": not yet recorded");
        }
        if (outcome.dlt) {
            p.dlt_cycle = outcome.cycle;
            p.cycles_observed = outcome.cycle;
        } else if (p.dlt_cycle && *p.dlt_cycle == outcome.cycle) {
            p.dlt_cycle.reset();
        }
        return;
    }
    if (p.dlt_cycle) {
        if (outcome.cycle <= *p.dlt_cycle) {
            throw DuplicateOutcome("cycle " + std::to_string(outcome.cycle) + " of patient " +
                                   std::to_string(outcome.patient) + " already recorded");
        }
        throw OutcomeError("patient " + std::to_string(outcome.patient) + " already had a DLT");
    }
    if (outcome.cycle <= p.cycles_observed) {
        throw DuplicateOutcome("cycle " + std::to_string(outcome.cycle) + " of patient " +
                               std::to_string(outcome.patient) + " already recorded");
    }
    if (outcome.cycle != p.cycles_observed + 1) {
        throw OutcomeError("out-of-order cycle " + std::to_string(outcome.cycle) + " for patient " +
                           std::to_string(outcome.patient) + "; expected " + std::to_string(p.cycles_observed + 1));
    }
    p.cycles_observed = outcome.cycle;
    if (outcome.dlt) {
        p.dlt_cycle = outcome.cycle;
    }
}

int cycles_elapsed(const DesignConfig& design, const PatientRecord& patient, int week)
{
    if (week <= patient.enroll_week) {
        return 0;
    }
    return std::min(design.followup_cycles, (week - patient.enroll_week) / design.cycle_weeks);
}

bool ready_for_decision(const DesignConfig& design, const TrialState& state)
{
    const int next_week = state.clock_weeks + design.cycle_weeks;
    return std::all_of(state.patients.begin(), state.patients.end(), [&](const PatientRecord& p) {
        return p.dlt_cycle.has_value() || p.cycles_observed >= cycles_elapsed(design, p, next_week);
    });
}

bool follow_up_complete(const DesignConfig& design, const TrialState& state)
{
    return std::all_of(state.patients.begin(), state.patients.end(),
                       [&](const PatientRecord& p) { return p.complete(design.followup_cycles); });
}

std::uint64_t decision_seed(std::uint64_t trial_seed, int decision_index)
{
    return derive_seed(trial_seed, {tag(StreamTag::Fit), static_cast<std::uint64_t>(decision_index)});
}

DecisionTrace trace_of(const Decision& d)
{
    DecisionTrace t;
    t.week = d.week;
    t.startup = d.startup;
    t.next_dose = d.next_dose;
    t.reason = d.stop.reason;
    t.mean_tox.reserve(d.summaries.size());
    for (const auto& s : d.summaries) {
        t.mean_tox.push_back(s.mean_tox);
    }
    t.mtd_cv = d.mtd_cv;
    t.first_excluded = d.first_excluded;
    return t;
}

std::optional<std::size_t> final_recommendation(const DesignConfig& design, const TrialState& state,
                                                 const Decision& final_fit)
{
    const std::size_t admissible = final_fit.first_excluded.value_or(design.grid.size());
    if (admissible == 0) {
        return std::nullopt;
    }
    const auto tallies = state.tallies(design.grid.size());
    std::optional<double> max_dose;
    if (auto h = state.highest_experimented()) {
        max_dose = design.grid[*h];
    }
    std::optional<std::size_t> best;
    double best_distance = std::numeric_limits<double>::infinity();
    const double target = design.target();
    for (std::size_t j = 0; j < admissible; ++j) {
        if (design.rules.restrict_recommendation_to_experimented && tallies[j].patients == 0) {
            continue;
        }
        if (max_dose && j > 0 && !kfold_cap(design.grid[j], *max_dose, design.rules.kfold)) {
            continue;
        }
        const double distance = std::abs(final_fit.summaries[j].mean_tox - target);
        if (distance < best_distance - kTieTolerance) {
            best = j;
            best_distance = distance;
        }
    }
    return best;
}

namespace {

// Hidden truth for simulated patients and cohorts.
struct Truth {
    std::vector<PatientProfile> profiles;
    std::vector<bool> activity;
};

void sample_new_cohorts(const DesignConfig& design, const Scenario& scenario, std::uint64_t seed,
                        const TrialState& state, Truth& truth)
{
    for (std::size_t k = truth.activity.size(); k < state.cohorts.size(); ++k) {
        const auto& c = state.cohorts[k];
        const auto kind_tag = tag(c.kind == CohortKind::Escalation ? StreamTag::Escalation : StreamTag::Backfill);
        auto activity_stream = make_stream(
            seed, {tag(StreamTag::Activity), kind_tag, static_cast<std::uint64_t>(c.ordinal)});
        truth.activity.push_back(activity_stream.uniform() < scenario.activity[c.dose]);
    }
    std::vector<int> position(state.cohorts.size(), 0);
    for (std::size_t i = 0; i < state.patients.size(); ++i) {
        const auto& p = state.patients[i];
        const int m = position[static_cast<std::size_t>(p.cohort)]++;
        if (i < truth.profiles.size()) {
            continue;
        }
        const auto& c = state.cohorts[static_cast<std::size_t>(p.cohort)];
        const auto kind_tag = tag(c.kind == CohortKind::Escalation ? StreamTag::Escalation : StreamTag::Backfill);
        auto stream = make_stream(seed, {kind_tag, static_cast<std::uint64_t>(c.ordinal), static_cast<std::uint64_t>(m)});
        truth.profiles.push_back(sample_profile(scenario, p.dose, design.followup_cycles, stream));
    }
}

void advance_to(const DesignConfig& design, TrialState& state, const Truth& truth, int week)
{
    state.clock_weeks = week;
    for (std::size_t i = 0; i < state.patients.size(); ++i) {
        auto& p = state.patients[i];
        const int u = cycles_elapsed(design, p, week);
        const auto& dlt = truth.profiles[i].dlt_cycle;
        if (dlt && *dlt <= u) {
            p.dlt_cycle = *dlt;
            p.cycles_observed = *dlt;
        } else {
            p.cycles_observed = u;
        }
    }
    for (std::size_t k = 0; k < state.cohorts.size(); ++k) {
        auto& c = state.cohorts[k];
        if (!c.activity && week - c.enroll_week >= design.cycle_weeks) {
            c.activity = truth.activity[k];
        }
    }
}

} // namespace

TrialResult run_trial(const DesignConfig& design, const Scenario& scenario, std::uint64_t seed)
{
    design.validate();
    scenario.validate();
    if (!(scenario.grid == design.grid)) {
        throw ConfigError("scenario '" + scenario.label + "' uses a different dose grid from the design");
    }

    TrialState state = TrialState::initial(design);
    Truth truth;
    sample_new_cohorts(design, scenario, seed, state, truth);

    TrialResult result;
    Decision last;
    // Every decision either enrolls a cohort or stops, and n_max bounds the
    // cohorts, so this loop terminates; the guard only catches logic errors.
    const int max_decisions = design.rules.n_max + 2;
    for (int k = 0; k < max_decisions; ++k) {
        advance_to(design, state, truth, state.clock_weeks + design.cycle_weeks);
        last = decide(design, state, decision_seed(seed, state.decisions));
        result.trace.push_back(trace_of(last));
        apply_decision(design, state, last);
        if (state.stopped) {
            break;
        }
        sample_new_cohorts(design, scenario, seed, state, truth);
    }
    if (!state.stopped) {
        throw std::logic_error("trial did not stop within the decision budget");
    }
    result.stop_reason = last.stop.reason;

    int end_week = state.clock_weeks;
    for (const auto& p : state.patients) {
        end_week = std::max(end_week, p.enroll_week + design.followup_cycles * design.cycle_weeks);
    }
    if (end_week > state.clock_weeks) {
        advance_to(design, state, truth, end_week);
    }

    if (last.stop.recommends_dose) {
        const bool fresh_data = end_week > last.week;
        const Decision final_fit = fresh_data ? decide(design, state, decision_seed(seed, state.decisions)) : last;
        result.recommendation = final_recommendation(design, state, final_fit);
        if (!result.recommendation) {
            // Completed follow-up excluded the lowest dose.
            result.stop_reason = StopReason::HardSafety;
        }
    }

    result.n_enrolled = state.n_enrolled();
    result.n_dlts = state.n_dlts();
    result.duration_weeks = end_week;
    result.tallies = state.tallies(design.grid.size());
    result.cohorts.reserve(state.cohorts.size());
    for (std::size_t k = 0; k < state.cohorts.size(); ++k) {
        const auto& c = state.cohorts[k];
        const int size = static_cast<int>(std::count_if(state.patients.begin(), state.patients.end(),
                                                        [k](const PatientRecord& p) { return p.cohort == static_cast<int>(k); }));
        result.cohorts.push_back(CohortEntry{c.dose, c.enroll_week, c.kind, size});
    }
    return result;
}

WhatIfResult what_if(const DesignConfig& design, const TrialState& state, std::span<const CycleOutcome> hypothetical,
                     std::uint64_t fit_seed)
{
    TrialState copy = state;
    std::vector<CycleOutcome> ordered(hypothetical.begin(), hypothetical.end());
    std::stable_sort(ordered.begin(), ordered.end(), [](const CycleOutcome& a, const CycleOutcome& b) {
        return a.patient != b.patient ? a.patient < b.patient : a.cycle < b.cycle;
    });
    for (const auto& o : ordered) {
        if (o.patient < 0 || o.patient >= copy.n_enrolled()) {
            throw OutcomeError("unknown patient " + std::to_string(o.patient));
        }
        const auto& p = copy.patients[static_cast<std::size_t>(o.patient)];
        const int recorded = p.dlt_cycle.value_or(p.cycles_observed);
        record_outcome(copy, design, o, o.cycle <= recorded);
    }
    return WhatIfResult{decide(design, copy, fit_seed)};
}

} // namespace backfill
