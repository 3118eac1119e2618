#include "backfill/rules.hpp"

#include <stdexcept>

#include <boost/math/special_functions/beta.hpp>

namespace backfill {

std::string_view to_string(StopReason reason)
{
    switch (reason) {
    case StopReason::None: return "none";
    case StopReason::SufficientInformation: return "sufficient-information";
    case StopReason::LowestUnsafe: return "lowest-unsafe";
    case StopReason::HighestVerySafe: return "highest-very-safe";
    case StopReason::Precision: return "precision";
    case StopReason::HardSafety: return "hard-safety";
    case StopReason::MaxPatients: return "max-patients";
    }
    return "none";
}

StopReason stop_reason_from_string(std::string_view name)
{
    for (auto r : {StopReason::None, StopReason::SufficientInformation, StopReason::LowestUnsafe,
                   StopReason::HighestVerySafe, StopReason::Precision, StopReason::HardSafety,
                   StopReason::MaxPatients}) {
        if (to_string(r) == name) {
            return r;
        }
    }
    throw std::invalid_argument("unknown stop reason '" + std::string(name) + "'");
}

void RuleConfig::validate(int cohort_size) const
{
    auto open_unit = [](double p) { return p > 0.0 && p < 1.0; };
    if (!open_unit(tau1) || !open_unit(psi) || !open_unit(unsafe_prob) || !open_unit(safe_prob) ||
        !open_unit(cv_limit)) {
        throw std::invalid_argument("rule thresholds must lie in (0,1)");
    }
    if (!(kfold > 1.0)) {
        throw std::invalid_argument("kfold must exceed 1");
    }
    if (n_max < 1 || cohort_size < 1 || n_max % cohort_size != 0) {
        throw std::invalid_argument("n_max must be a positive multiple of the cohort size");
    }
    if (min_escalation_cohorts_for_precision < 0 || cohorts_for_sufficient_info < 1) {
        throw std::invalid_argument("cohort-count thresholds must be non-negative");
    }
    for (std::size_t i = 0; i < priority.size(); ++i) {
        if (priority[i] == StopReason::None) {
            throw std::invalid_argument("rule priority cannot contain 'none'");
        }
        for (std::size_t k = 0; k < i; ++k) {
            if (priority[k] == priority[i]) {
                throw std::invalid_argument("rule priority lists a rule twice");
            }
        }
    }
}

double beta_upper_tail(double a, double b, double x)
{
    return boost::math::ibetac(a, b, x);
}

bool hard_safety_excluded(int dlts, int n, double tau1, double psi)
{
    if (dlts < 0 || n < dlts) {
        throw std::invalid_argument("hard_safety_excluded: need 0 <= dlts <= n");
    }
    return beta_upper_tail(1.0 + dlts, 1.0 + (n - dlts), tau1) > psi;
}

bool kfold_cap(double candidate, double max_experimented_dose, double kfold)
{
    return candidate <= kfold * max_experimented_dose;
}

std::optional<std::size_t> first_excluded_dose(std::span<const SafetyCount> counts, double tau1, double psi)
{
    for (std::size_t j = 0; j < counts.size(); ++j) {
        if (hard_safety_excluded(counts[j].dlts, counts[j].n, tau1, psi)) {
            return j;
        }
    }
    return std::nullopt;
}

bool RuleStatus::fired(StopReason r) const noexcept
{
    switch (r) {
    case StopReason::HardSafety: return hard_safety;
    case StopReason::LowestUnsafe: return lowest_unsafe;
    case StopReason::MaxPatients: return max_patients;
    case StopReason::HighestVerySafe: return highest_very_safe;
    case StopReason::SufficientInformation: return sufficient_information;
    case StopReason::Precision: return precision;
    case StopReason::None: return false;
    }
    return false;
}

RuleStatus evaluate_rules(const RuleInputs& in, const RuleConfig& config)
{
    RuleStatus s;
    const std::size_t n_dose = in.tallies.size();
    s.hard_safety = in.first_excluded.has_value() && *in.first_excluded == 0;
    s.lowest_unsafe = n_dose > 0 && in.tallies.front().cohorts() >= 1 && in.prob_lowest_above > config.unsafe_prob;
    s.max_patients = in.n_enrolled >= config.n_max;
    s.highest_very_safe =
        n_dose > 0 && in.tallies.back().cohorts() >= 1 && in.prob_highest_at_or_below > config.safe_prob;
    s.sufficient_information =
        in.next_dose < n_dose && in.tallies[in.next_dose].escalation_cohorts >= config.cohorts_for_sufficient_info;
    s.precision_eligible = in.escalation_cohorts_followed >= config.min_escalation_cohorts_for_precision;
    // A negative CV means the MTD median is below zero: not precise.
    s.precision = s.precision_eligible && in.mtd_cv.has_value() && *in.mtd_cv >= 0.0 && *in.mtd_cv < config.cv_limit;
    return s;
}

StopDecision evaluate_stopping(const RuleInputs& in, const RuleConfig& config)
{
    const RuleStatus status = evaluate_rules(in, config);
    for (StopReason r : config.priority) {
        if (status.fired(r)) {
            return StopDecision{true, r, !is_safety_stop(r)};
        }
    }
    return StopDecision{};
}

} // namespace backfill
