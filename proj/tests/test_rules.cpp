#include <doctest.h>

#include <cmath>

#include "backfill/rules.hpp"
#include "support/oracles.hpp"

using namespace backfill;

namespace {

struct Inputs {
    std::vector<DoseTally> tallies = std::vector<DoseTally>(6);
    RuleInputs in;

    Inputs() { in.tallies = tallies; }
    RuleInputs& get()
    {
        in.tallies = tallies;
        return in;
    }
};

StopReason random_reason_inputs(std::mt19937_64& g, Inputs& x)
{
    for (auto& t : x.tallies) {
        t.escalation_cohorts = oracle::uniform_int(g, 0, 4);
        t.backfill_cohorts = oracle::uniform_int(g, 0, 2);
        t.patients = 3 * t.cohorts();
    }
    auto& in = x.get();
    if (oracle::uniform(g, 0, 1) < 0.2) {
        in.first_excluded = static_cast<std::size_t>(oracle::uniform_int(g, 0, 5));
    }
    in.prob_lowest_above = oracle::uniform(g, 0, 1);
    in.prob_highest_at_or_below = oracle::uniform(g, 0, 1);
    if (oracle::uniform(g, 0, 1) < 0.8) {
        in.mtd_cv = oracle::uniform(g, -0.2, 1.0);
    }
    in.escalation_cohorts_followed = oracle::uniform_int(g, 0, 8);
    in.n_enrolled = oracle::uniform_int(g, 0, 60);
    in.next_dose = static_cast<std::size_t>(oracle::uniform_int(g, 0, 5));
    return StopReason::None;
}

} // namespace

TEST_SUITE("rules")
{
    TEST_CASE("hard-safety boundaries")
    {
        CHECK(hard_safety_excluded(3, 3, 0.3, 0.95));
        CHECK(hard_safety_excluded(4, 6, 0.3, 0.95));
        CHECK(hard_safety_excluded(5, 9, 0.3, 0.95));
        CHECK_FALSE(hard_safety_excluded(2, 3, 0.3, 0.95));
        CHECK_FALSE(hard_safety_excluded(3, 6, 0.3, 0.95));
        CHECK_FALSE(hard_safety_excluded(4, 9, 0.3, 0.95));
        CHECK_FALSE(hard_safety_excluded(0, 0, 0.3, 0.95));
        CHECK_THROWS(hard_safety_excluded(4, 3, 0.3, 0.95));

        CHECK(oracle::beta_upper_tail_int(4, 1, 0.3) == doctest::Approx(0.9919).epsilon(1e-4));
        CHECK(oracle::beta_upper_tail_int(3, 2, 0.3) == doctest::Approx(0.9163).epsilon(1e-4));
    }

    TEST_CASE("property: Beta tail agrees with the binomial identity")
    {
        oracle::for_all(5000, 51, [](std::mt19937_64& g, int) {
            const int n = oracle::uniform_int(g, 0, 60);
            const int d = oracle::uniform_int(g, 0, n);
            const double x = oracle::uniform(g, 0.01, 0.99);
            const double want = oracle::beta_upper_tail_int(1 + d, 1 + n - d, x);
            REQUIRE(std::abs(beta_upper_tail(1 + d, 1 + n - d, x) - want) < 1e-10);
            REQUIRE(hard_safety_excluded(d, n, x, 0.95) == (want > 0.95));
        });
    }

    TEST_CASE("property: exclusion is monotone in DLTs and in sample size")
    {
        oracle::for_all(5000, 52, [](std::mt19937_64& g, int) {
            const int n = oracle::uniform_int(g, 1, 60);
            const int d = oracle::uniform_int(g, 0, n - 1);
            if (hard_safety_excluded(d, n, 0.3, 0.95)) {
                REQUIRE(hard_safety_excluded(d + 1, n, 0.3, 0.95));
                REQUIRE(hard_safety_excluded(d + 1, n + 1, 0.3, 0.95));
            }
            if (!hard_safety_excluded(d, n, 0.3, 0.95)) {
                REQUIRE_FALSE(hard_safety_excluded(d, n + 1, 0.3, 0.95));
            }
        });
    }

    TEST_CASE("first excluded dose cascades upward")
    {
        const std::vector<SafetyCount> counts{{3, 0}, {3, 3}, {3, 0}, {0, 0}, {0, 0}, {0, 0}};
        CHECK(first_excluded_dose(counts, 0.3, 0.95) == std::optional<std::size_t>(1));
        const std::vector<SafetyCount> clean{{3, 0}, {6, 2}, {3, 1}};
        CHECK_FALSE(first_excluded_dose(clean, 0.3, 0.95).has_value());
    }

    TEST_CASE("k-fold cap")
    {
        CHECK_FALSE(kfold_cap(3.5, 1.5, 2.0));
        CHECK(kfold_cap(2.5, 1.5, 2.0));
        CHECK(kfold_cap(7.0, 3.5, 2.0));
    }

    TEST_CASE("stopping decisions")
    {
        const RuleConfig cfg;
        SUBCASE("nothing fires")
        {
            Inputs x;
            x.tallies[0].escalation_cohorts = 1;
            x.get().prob_lowest_above = 0.1;
            x.in.mtd_cv = 0.8;
            CHECK(evaluate_stopping(x.in, cfg) == StopDecision{});
        }
        SUBCASE("hard safety beats everything and recommends nothing")
        {
            Inputs x;
            x.tallies[0].escalation_cohorts = 1;
            auto& in = x.get();
            in.first_excluded = 0;
            in.prob_lowest_above = 0.99;
            in.n_enrolled = 60;
            const auto s = evaluate_stopping(in, cfg);
            CHECK(s.reason == StopReason::HardSafety);
            CHECK_FALSE(s.recommends_dose);
        }
        SUBCASE("lowest unsafe needs a cohort at the lowest dose")
        {
            Inputs x;
            x.get().prob_lowest_above = 0.95;
            CHECK_FALSE(evaluate_stopping(x.in, cfg).stopped);
            x.tallies[0].escalation_cohorts = 1;
            const auto s = evaluate_stopping(x.get(), cfg);
            CHECK(s.reason == StopReason::LowestUnsafe);
            CHECK_FALSE(s.recommends_dose);
        }
        SUBCASE("highest very safe needs a cohort at the highest dose and recommends")
        {
            Inputs x;
            x.get().prob_highest_at_or_below = 0.9;
            CHECK_FALSE(evaluate_stopping(x.in, cfg).stopped);
            x.tallies[5].backfill_cohorts = 1;
            const auto s = evaluate_stopping(x.get(), cfg);
            CHECK(s.reason == StopReason::HighestVerySafe);
            CHECK(s.recommends_dose);
        }
        SUBCASE("sufficient information counts escalation cohorts only")
        {
            Inputs x;
            x.tallies[2].backfill_cohorts = 3;
            x.get().next_dose = 2;
            CHECK_FALSE(evaluate_stopping(x.in, cfg).stopped);
            x.tallies[2].escalation_cohorts = 3;
            CHECK(evaluate_stopping(x.get(), cfg).reason == StopReason::SufficientInformation);
        }
        SUBCASE("precision needs three followed escalation cohorts")
        {
            Inputs x;
            auto& in = x.get();
            in.mtd_cv = 0.2;
            in.escalation_cohorts_followed = 2;
            CHECK_FALSE(evaluate_stopping(in, cfg).stopped);
            in.escalation_cohorts_followed = 3;
            CHECK(evaluate_stopping(in, cfg).reason == StopReason::Precision);
            in.mtd_cv = 0.3;
            CHECK_FALSE(evaluate_stopping(in, cfg).stopped);
            in.mtd_cv = -0.1;
            CHECK_FALSE(evaluate_stopping(in, cfg).stopped);
            in.mtd_cv.reset();
            CHECK_FALSE(evaluate_stopping(in, cfg).stopped);
        }
        SUBCASE("max patients outranks the very-safe rule")
        {
            Inputs x;
            x.tallies[5].escalation_cohorts = 1;
            auto& in = x.get();
            in.prob_highest_at_or_below = 0.9;
            in.n_enrolled = 54;
            CHECK(evaluate_stopping(in, cfg).reason == StopReason::MaxPatients);
        }
    }

    TEST_CASE("property: stopping is pure and follows the priority order")
    {
        const RuleConfig cfg;
        oracle::for_all(5000, 53, [&](std::mt19937_64& g, int) {
            Inputs x;
            random_reason_inputs(g, x);
            const auto& in = x.in;
            const auto a = evaluate_stopping(in, cfg);
            REQUIRE(a == evaluate_stopping(in, cfg));

            const bool hard = in.first_excluded == std::optional<std::size_t>(0);
            const bool low = x.tallies[0].cohorts() >= 1 && in.prob_lowest_above > 0.8;
            const bool maxp = in.n_enrolled >= 54;
            const bool high = x.tallies[5].cohorts() >= 1 && in.prob_highest_at_or_below > 0.8;
            const bool suff = x.tallies[in.next_dose].escalation_cohorts >= 3;
            const bool prec = in.escalation_cohorts_followed >= 3 && in.mtd_cv && *in.mtd_cv >= 0 && *in.mtd_cv < 0.3;
            StopReason want = StopReason::None;
            if (hard) want = StopReason::HardSafety;
            else if (low) want = StopReason::LowestUnsafe;
            else if (maxp) want = StopReason::MaxPatients;
            else if (high) want = StopReason::HighestVerySafe;
            else if (suff) want = StopReason::SufficientInformation;
            else if (prec) want = StopReason::Precision;
            REQUIRE(a.reason == want);
            REQUIRE(a.stopped == (want != StopReason::None));
            REQUIRE(a.recommends_dose == !(hard || low));
        });
    }

    TEST_CASE("stop reason names round-trip")
    {
        for (auto r : {StopReason::None, StopReason::SufficientInformation, StopReason::LowestUnsafe,
                       StopReason::HighestVerySafe, StopReason::Precision, StopReason::HardSafety,
                       StopReason::MaxPatients}) {
            CHECK(stop_reason_from_string(to_string(r)) == r);
        }
        CHECK_THROWS(stop_reason_from_string("bogus"));
    }

    TEST_CASE("rule configuration validation")
    {
        RuleConfig cfg;
        CHECK_NOTHROW(cfg.validate(3));
        cfg.n_max = 2;
        CHECK_THROWS(cfg.validate(3));
        cfg = RuleConfig{};
        cfg.psi = 1.0;
        CHECK_THROWS(cfg.validate(3));
    }
}
