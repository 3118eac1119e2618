#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "backfill/metrics.hpp"
#include "backfill/trial.hpp"
#include "support/oracles.hpp"

using namespace backfill;

namespace {

Scenario flat_scenario(double p, double activity = 0.5)
{
    Scenario s;
    s.label = "flat";
    s.grid = default_grid();
    s.p1.assign(6, p);
    s.activity.assign(6, activity);
    return s;
}

Scenario random_scenario(std::mt19937_64& g)
{
    Scenario s;
    s.label = "random";
    s.grid = default_grid();
    double p = oracle::uniform(g, 0.0, 0.4);
    for (int j = 0; j < 6; ++j) {
        s.p1.push_back(std::min(p, 0.95));
        s.activity.push_back(oracle::uniform(g, 0.0, 1.0));
        p += oracle::uniform(g, 0.0, 0.15);
    }
    return s;
}

DesignConfig random_design(std::mt19937_64& g)
{
    DesignConfig d;
    d.backfill = static_cast<BackfillPolicy>(oracle::uniform_int(g, 0, 2));
    d.followup_cycles = oracle::uniform(g, 0, 1) < 0.7 ? 1 : 3;
    d.sampler.burn_in = 300;
    d.sampler.draws = 600;
    return d;
}

// Highest dose given to any cohort enrolled strictly before week `week`.
std::optional<std::size_t> highest_before(const TrialResult& r, int week)
{
    std::optional<std::size_t> out;
    for (const auto& c : r.cohorts) {
        if (c.week < week && (!out || c.dose > *out)) {
            out = c.dose;
        }
    }
    return out;
}

void record_cycle_one(TrialState& s, const DesignConfig& d, int first, int count, int dlts)
{
    for (int i = 0; i < count; ++i) {
        record_outcome(s, d, CycleOutcome{first + i, 1, i < dlts});
    }
}

} // namespace

TEST_SUITE("trial")
{
    TEST_CASE("recommend_next_dose selection")
    {
        const DoseGrid grid = default_grid();
        const std::vector<double> means{0.05, 0.12, 0.28, 0.40, 0.55, 0.70};
        CHECK(recommend_next_dose(means, 6, 0.3, grid, 3.5, 2.0) == 2);

        const std::vector<double> tied{0.10, 0.20, 0.40, 0.60, 0.70, 0.80};
        CHECK(recommend_next_dose(tied, 6, 0.3, grid, 3.5, 2.0) == 1);

        const std::vector<double> low{0.01, 0.02, 0.03, 0.05, 0.08, 0.12};
        CHECK(recommend_next_dose(low, 6, 0.3, grid, 1.5, 2.0) == 1);
        CHECK(recommend_next_dose(low, 6, 0.3, grid, 2.5, 2.0) == 3);
        CHECK(recommend_next_dose(low, 6, 0.3, grid, 3.5, 2.0) == 5);
        CHECK(recommend_next_dose(low, 3, 0.3, grid, 3.5, 2.0) == 2);
        CHECK(recommend_next_dose(low, 1, 0.3, grid, 3.5, 2.0) == 0);
    }

    TEST_CASE("property: selection matches a brute-force argmin")
    {
        const DoseGrid grid = default_grid();
        oracle::for_all(5000, 61, [&](std::mt19937_64& g, int) {
            std::vector<double> means(6);
            for (auto& m : means) {
                m = std::round(oracle::uniform(g, 0, 1) * 20) / 20;  // coarse, so ties occur
            }
            const std::size_t admissible = static_cast<std::size_t>(oracle::uniform_int(g, 1, 6));
            const double max_dose = grid[static_cast<std::size_t>(oracle::uniform_int(g, 0, 5))];
            const std::size_t got = recommend_next_dose(means, admissible, 0.3, grid, max_dose, 2.0);
            std::size_t want = 0;
            double best = 1e9;
            for (std::size_t j = 0; j < admissible; ++j) {
                if (j > 0 && grid[j] > 2.0 * max_dose) continue;
                if (std::abs(means[j] - 0.3) < best - 1e-9) {
                    best = std::abs(means[j] - 0.3);
                    want = j;
                }
            }
            REQUIRE(got == want);
        });
    }

    TEST_CASE("record_outcome validation")
    {
        DesignConfig d;
        d.followup_cycles = 3;
        TrialState s = TrialState::initial(d);
        CHECK_THROWS_AS(record_outcome(s, d, {3, 1, false}), OutcomeError);
        CHECK_THROWS_AS(record_outcome(s, d, {-1, 1, false}), OutcomeError);
        CHECK_THROWS_AS(record_outcome(s, d, {0, 0, false}), OutcomeError);
        CHECK_THROWS_AS(record_outcome(s, d, {0, 4, false}), OutcomeError);
        CHECK_THROWS_AS(record_outcome(s, d, {0, 2, false}), OutcomeError);
        record_outcome(s, d, {0, 1, false});
        CHECK_THROWS_AS(record_outcome(s, d, {0, 1, true}), DuplicateOutcome);
        record_outcome(s, d, {0, 2, true});
        CHECK(s.patients[0].dlt_cycle == 2);
        CHECK_THROWS_AS(record_outcome(s, d, {0, 3, false}), OutcomeError);
        CHECK_THROWS_AS(record_outcome(s, d, {0, 2, false}), DuplicateOutcome);
        record_outcome(s, d, {0, 2, false}, true);
        CHECK_FALSE(s.patients[0].dlt_cycle.has_value());
        CHECK(s.patients[0].cycles_observed == 2);
        CHECK_THROWS_AS(record_outcome(s, d, {1, 1, true}, true), OutcomeError);
    }

    TEST_CASE("decisions and the backfill ledger")
    {
        DesignConfig d;
        d.backfill = BackfillPolicy::Full;
        TrialState s = TrialState::initial(d);
        s.clock_weeks = 6;
        record_cycle_one(s, d, 0, 3, 0);
        const Decision first = decide(d, s, decision_seed(1, 0));
        REQUIRE_FALSE(first.stop.stopped);
        REQUIRE(first.next_dose == 1u);  // capped by the two-fold rule
        REQUIRE(first.enrollments.size() == 3);
        CHECK(first.enrollments[0].kind == CohortKind::Escalation);
        CHECK(first.enrollments[1].dose == 0);
        CHECK(first.enrollments[2].dose == 0);
        apply_decision(d, s, first);
        CHECK(s.surpassed == std::vector<bool>{true, false, false, false, false, false});
        CHECK(s.backfilled == std::vector<bool>{true, false, false, false, false, false});
        CHECK(s.n_enrolled() == 12);
        CHECK(s.current_dose == 1);

        s.clock_weeks = 12;
        record_cycle_one(s, d, 3, 9, 0);
        const Decision second = decide(d, s, decision_seed(1, 1));
        REQUIRE_FALSE(second.stop.stopped);
        const std::size_t next = *second.next_dose;
        CHECK(next <= 3);  // 2 x 2.5 MBq
        std::vector<std::size_t> backfill_doses;
        for (const auto& e : second.enrollments) {
            if (e.kind == CohortKind::Backfill) backfill_doses.push_back(e.dose);
        }
        std::vector<std::size_t> expected;
        for (std::size_t j = next; j-- > 1;) {
            expected.push_back(j);
            expected.push_back(j);
        }
        CHECK(backfill_doses == expected);
    }

    TEST_CASE("what-if evaluates hypothetical outcomes without touching the state")
    {
        DesignConfig d;
        TrialState s = TrialState::initial(d);
        s.clock_weeks = 6;
        const TrialState before = s;
        const std::vector<CycleOutcome> toxic{{0, 1, true}, {1, 1, true}, {2, 1, true}};
        const auto bad = what_if(d, s, toxic, 5);
        CHECK(bad.decision.stop.reason == StopReason::HardSafety);
        CHECK_FALSE(bad.decision.stop.recommends_dose);
        CHECK(s.patients.size() == before.patients.size());
        CHECK_FALSE(s.patients[0].dlt_cycle.has_value());

        const std::vector<CycleOutcome> clean{{2, 1, false}, {0, 1, false}, {1, 1, false}};
        const auto good = what_if(d, s, clean, 5);
        CHECK_FALSE(good.decision.stop.stopped);
        CHECK(good.decision.next_dose == 1u);

        const std::vector<CycleOutcome> unknown{{7, 1, false}};
        CHECK_THROWS_AS(what_if(d, s, unknown, 5), OutcomeError);
    }

    TEST_CASE("property: simulated trials respect the design invariants")
    {
        oracle::for_all(1200, 62, [](std::mt19937_64& g, int c) {
            const Scenario sc = random_scenario(g);
            const DesignConfig d = random_design(g);
            const std::uint64_t seed = derive_seed(62, {static_cast<std::uint64_t>(c)});
            const TrialResult r = run_trial(d, sc, seed);

            REQUIRE(r.n_enrolled <= d.rules.n_max);
            REQUIRE(r.stop_reason != StopReason::None);
            REQUIRE(r.recommendation.has_value() == !is_safety_stop(r.stop_reason));
            REQUIRE_FALSE(r.trace.empty());
            const int last_week = r.trace.back().week;
            int total = 0;
            for (std::size_t k = 0; k < r.cohorts.size(); ++k) {
                const auto& e = r.cohorts[k];
                total += e.size;
                REQUIRE(e.week <= last_week);
                if (k > 0) REQUIRE(e.week >= r.cohorts[k - 1].week);
                if (e.kind == CohortKind::Escalation && k > 0) {
                    const auto h = highest_before(r, e.week);
                    REQUIRE(h.has_value());
                    REQUIRE((e.dose == 0 || d.grid[e.dose] <= 2.0 * d.grid[*h]));
                }
                if (e.kind == CohortKind::Backfill) {
                    REQUIRE(d.backfill != BackfillPolicy::None);
                    const auto esc = std::find_if(r.cohorts.begin(), r.cohorts.end(), [&](const CohortEntry& x) {
                        return x.kind == CohortKind::Escalation && x.week == e.week;
                    });
                    REQUIRE(esc != r.cohorts.end());
                    REQUIRE(e.dose < esc->dose);
                }
            }
            REQUIRE(total == r.n_enrolled);
            REQUIRE(r.duration_weeks >= last_week);
            REQUIRE(r == run_trial(d, sc, seed));
        });
    }

    TEST_CASE("property: full backfilling gives every surpassed dose two backfill cohorts")
    {
        oracle::for_all(1000, 63, [](std::mt19937_64& g, int c) {
            const Scenario sc = random_scenario(g);
            DesignConfig d;
            d.backfill = BackfillPolicy::Full;
            d.rules.n_max = 300;
            d.sampler.burn_in = 300;
            d.sampler.draws = 600;
            const TrialResult r = run_trial(d, sc, derive_seed(63, {static_cast<std::uint64_t>(c)}));
            std::size_t top = 0;
            for (const auto& e : r.cohorts) {
                if (e.kind == CohortKind::Escalation) top = std::max(top, e.dose);
            }
            for (std::size_t j = 0; j < 6; ++j) {
                const auto& t = r.tallies[j];
                if (j < top) {
                    REQUIRE(t.backfill_cohorts == 2);
                    REQUIRE(t.patients == d.cohort_size * (t.escalation_cohorts + 2));
                } else {
                    REQUIRE(t.backfill_cohorts == 0);
                    REQUIRE(t.patients == d.cohort_size * t.escalation_cohorts);
                }
            }
        });
    }

    TEST_CASE("property: backfilling does not change escalation outcomes before it first acts")
    {
        oracle::for_all(1000, 64, [](std::mt19937_64& g, int c) {
            const Scenario sc = random_scenario(g);
            DesignConfig none;
            none.sampler.burn_in = 300;
            none.sampler.draws = 600;
            DesignConfig full = none;
            full.backfill = BackfillPolicy::Full;
            const std::uint64_t seed = derive_seed(64, {static_cast<std::uint64_t>(c)});
            const TrialResult a = run_trial(none, sc, seed);
            const TrialResult b = run_trial(full, sc, seed);
            // The decision that first enrolls backfill sees identical data in both designs.
            int first_backfill_week = -1;
            for (const auto& e : b.cohorts) {
                if (e.kind == CohortKind::Backfill) {
                    first_backfill_week = e.week;
                    break;
                }
            }
            const std::size_t shared = first_backfill_week < 0 ? std::min(a.trace.size(), b.trace.size())
                                                               : static_cast<std::size_t>(first_backfill_week / 6);
            REQUIRE(a.trace.size() >= shared);
            REQUIRE(b.trace.size() >= shared);
            for (std::size_t k = 0; k < shared; ++k) {
                REQUIRE(a.trace[k] == b.trace[k]);
            }
        });
    }

    TEST_CASE("a toxicity-free curve never triggers hard safety")
    {
        const Scenario sc = flat_scenario(0.0);
        for (auto policy : {BackfillPolicy::None, BackfillPolicy::Full}) {
            DesignConfig d;
            d.backfill = policy;
            for (int r = 0; r < 100; ++r) {
                const auto res = run_trial(d, sc, derive_seed(65, {static_cast<std::uint64_t>(r)}));
                REQUIRE(res.stop_reason != StopReason::HardSafety);
                REQUIRE(res.n_dlts == 0);
                REQUIRE(res.recommendation.has_value());
            }
        }
    }

    TEST_CASE("an all-toxic scenario usually stops for safety")
    {
        const auto all = builtin_scenarios();
        const Scenario& sc = all[15];
        REQUIRE(all_doses_unsafe(sc, ClassificationConfig{}));
        const DesignConfig d;
        int correct = 0;
        for (int r = 0; r < 1000; ++r) {
            const auto res = run_trial(d, sc, derive_seed(66, {static_cast<std::uint64_t>(r)}));
            correct += classify_selection(res, sc, ClassificationConfig{}).correct ? 1 : 0;
        }
        CHECK(correct > 800);
    }

    TEST_CASE("design validation")
    {
        DesignConfig d;
        CHECK_NOTHROW(d.validate());
        d.cohort_size = 0;
        CHECK_THROWS_AS(d.validate(), ConfigError);
        d = DesignConfig{};
        CHECK_THROWS(DoseGrid(std::vector<double>{1.0}));
        const Scenario other{"x", DoseGrid({1, 2}), {0.1, 0.2}, {0.5, 0.5}, std::nullopt};
        CHECK_THROWS_AS(run_trial(d, other, 1), ConfigError);
        CHECK(backfill_policy_from_string("partial") == BackfillPolicy::Partial);
        CHECK_THROWS_AS(backfill_policy_from_string("some"), ConfigError);
    }
}
