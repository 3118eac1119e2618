#include "backfill/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace backfill {

bool all_doses_unsafe(const Scenario& scenario, const ClassificationConfig& config)
{
    return std::all_of(scenario.p1.begin(), scenario.p1.end(), [&](double p) { return p > config.band_upper; });
}

bool all_doses_very_safe(const Scenario& scenario, const ClassificationConfig& config)
{
    return !scenario.mtd_index &&
           std::all_of(scenario.p1.begin(), scenario.p1.end(), [&](double p) { return p < config.band_lower; });
}

SelectionClass classify_selection(const TrialResult& result, const Scenario& scenario,
                                  const ClassificationConfig& config)
{
    SelectionClass c;
    if (result.recommendation) {
        const double p = scenario.p1[*result.recommendation];
        c.acceptable = p >= config.band_lower && p <= config.band_upper;
        c.correct = scenario.mtd_index && *scenario.mtd_index == *result.recommendation;
    }
    if (is_safety_stop(result.stop_reason) && all_doses_unsafe(scenario, config)) {
        c.correct = true;
    }
    if (all_doses_very_safe(scenario, config)) {
        c.correct = config.very_safe_stop_is_correct
                        ? result.stop_reason == StopReason::HighestVerySafe
                        : result.recommendation == scenario.p1.size() - 1;
    }
    return c;
}

int overdosed_patients(const TrialResult& result, const Scenario& scenario, const ClassificationConfig& config)
{
    int n = 0;
    for (std::size_t j = 0; j < result.tallies.size() && j < scenario.p1.size(); ++j) {
        if (scenario.p1[j] > config.band_upper) {
            n += result.tallies[j].patients;
        }
    }
    return n;
}

ScenarioSummary aggregate(std::span<const TrialResult> results, const Scenario& scenario,
                          const ClassificationConfig& config)
{
    ScenarioSummary s;
    s.sims = results.size();
    s.selections.assign(scenario.p1.size(), 0);
    if (results.empty()) {
        return s;
    }
    double correct = 0, acceptable = 0, n = 0, duration = 0, dlts = 0, pct = 0, over = 0;
    for (const auto& r : results) {
        const auto c = classify_selection(r, scenario, config);
        correct += c.correct ? 1 : 0;
        acceptable += c.acceptable ? 1 : 0;
        n += r.n_enrolled;
        duration += r.duration_weeks;
        dlts += r.n_dlts;
        pct += r.n_enrolled > 0 ? 100.0 * r.n_dlts / r.n_enrolled : 0.0;
        over += overdosed_patients(r, scenario, config);
        if (r.recommendation) {
            s.selections[*r.recommendation] += 1;
        } else {
            s.no_selection += 1;
        }
        s.stop_counts[static_cast<std::size_t>(r.stop_reason)] += 1;
    }
    const double total = static_cast<double>(results.size());
    s.pcs = correct / total;
    s.pas = acceptable / total;
    s.mean_n = n / total;
    s.mean_duration = duration / total;
    s.mean_dlts = dlts / total;
    s.pct_dlt = pct / total;
    s.mean_overdosed = over / total;
    return s;
}

BenchmarkSelection benchmark_select(std::span<const double> tolerances, std::span<const double> probs, double target,
                                    const ClassificationConfig& config, bool flag_unsafe)
{
    BenchmarkSelection out;
    out.estimates.assign(probs.size(), 0.0);
    const double n = static_cast<double>(tolerances.size());
    for (std::size_t j = 0; j < probs.size(); ++j) {
        const auto tox = std::count_if(tolerances.begin(), tolerances.end(), [&](double u) { return u <= probs[j]; });
        out.estimates[j] = n > 0 ? static_cast<double>(tox) / n : 0.0;
    }
    if (flag_unsafe && !out.estimates.empty() && out.estimates.front() > config.band_upper) {
        return out;
    }
    std::size_t best = 0;
    for (std::size_t j = 1; j < probs.size(); ++j) {
        if (std::abs(out.estimates[j] - target) < std::abs(out.estimates[best] - target) - kTieTolerance) {
            best = j;
        }
    }
    out.dose = best;
    return out;
}

ScenarioSummary run_benchmark(const Scenario& scenario, int n_max, int cycles, double tau1, int sims,
                              std::uint64_t seed, const ClassificationConfig& config, bool flag_unsafe)
{
    scenario.validate();
    if (n_max < 1 || sims < 1) {
        throw std::invalid_argument("run_benchmark: n_max and sims must be positive");
    }
    if (!std::is_sorted(scenario.p1.begin(), scenario.p1.end())) {
        throw std::invalid_argument("run_benchmark: scenario '" + scenario.label + "' is not monotone");
    }
    const std::vector<double> probs = scenario.cumulative(cycles);
    const double target = target_for_followup(tau1, cycles);
    const bool very_safe = all_doses_very_safe(scenario, config);
    const bool unsafe = all_doses_unsafe(scenario, config);

    ScenarioSummary s;
    s.sims = static_cast<std::size_t>(sims);
    s.selections.assign(probs.size(), 0);
    s.mean_n = n_max;
    std::vector<double> u(static_cast<std::size_t>(n_max));
    double correct = 0, acceptable = 0;
    for (int r = 0; r < sims; ++r) {
        auto stream = make_stream(seed, {tag(StreamTag::Benchmark), static_cast<std::uint64_t>(r)});
        for (auto& x : u) {
            x = stream.uniform();
        }
        const auto pick = benchmark_select(u, probs, target, config, flag_unsafe);
        if (!pick.dose) {
            s.no_selection += 1;
            correct += unsafe ? 1 : 0;
            continue;
        }
        s.selections[*pick.dose] += 1;
        const double p = scenario.p1[*pick.dose];
        acceptable += (p >= config.band_lower && p <= config.band_upper) ? 1 : 0;
        if (scenario.mtd_index) {
            correct += *pick.dose == *scenario.mtd_index ? 1 : 0;
        } else if (very_safe) {
            correct += *pick.dose == probs.size() - 1 ? 1 : 0;
        }
    }
    s.pcs = correct / sims;
    s.pas = acceptable / sims;
    return s;
}

} // namespace backfill
