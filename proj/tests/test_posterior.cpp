#include <doctest.h>

#include <cmath>
#include <numbers>

#include "backfill/posterior.hpp"
#include "support/oracles.hpp"

using namespace backfill;

namespace {

double plain_log_posterior(double b0, double b1, const std::vector<oracle::Obs>& data, const PriorHyper& p)
{
    const double eta = std::log(b1);
    double lp = -std::log(2 * std::numbers::pi) - 0.5 * std::log(p.v1 * p.v2) -
                0.5 * ((b0 - p.c1) * (b0 - p.c1) / p.v1 + (eta - p.c2) * (eta - p.c2) / p.v2);
    for (const auto& o : data) {
        const double x = b0 + b1 * o.dose;
        lp -= o.dlt ? std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    }
    return lp;
}

std::vector<Observation> to_obs(const std::vector<oracle::Obs>& data)
{
    std::vector<Observation> out;
    for (const auto& o : data) {
        out.push_back(Observation{o.dose, o.weight, o.dlt});
    }
    return out;
}

oracle::Prior to_oracle(const PriorHyper& p)
{
    return {p.c1, p.c2, p.v1, p.v2};
}

std::vector<oracle::Obs> cohort(double dose, int n, int dlts, double weight = 1.0)
{
    std::vector<oracle::Obs> out;
    for (int i = 0; i < n; ++i) {
        out.push_back({dose, i < dlts ? 1.0 : weight, i < dlts});
    }
    return out;
}

} // namespace

TEST_SUITE("posterior")
{
    TEST_CASE("tox_prob values")
    {
        CHECK(tox_prob(0.0, Beta{0.0, 1.0}) == 0.5);
        CHECK(tox_prob(2.5, Beta{-2.5 * 0.7, 0.7}) == doctest::Approx(0.5).epsilon(1e-14));
        CHECK(tox_prob(1.5, Beta{std::log(0.5), 1.0}) == doctest::Approx(0.69144).epsilon(1e-4));
        CHECK_THROWS_AS(tox_prob(1.0, Beta{0.0, 0.0}), std::domain_error);
        CHECK_THROWS_AS(tox_prob(1.0, Beta{0.0, -1.0}), std::domain_error);
    }

    TEST_CASE("tite_weight law")
    {
        CHECK(tite_weight(1, 3, false) == doctest::Approx(1.0 / 3).epsilon(1e-15));
        CHECK(tite_weight(2, 3, true) == 1.0);
        CHECK(tite_weight(3, 3, false) == 1.0);
        CHECK(tite_weight(0, 3, false) == 0.0);
        CHECK_THROWS_AS(tite_weight(4, 3, false), std::domain_error);
        CHECK_THROWS_AS(tite_weight(-1, 3, false), std::domain_error);
    }

    TEST_CASE("log_posterior hand evaluation")
    {
        const PriorHyper prior;
        const double f = 1.0 / (1.0 + std::exp(-1.5));
        CHECK(f == doctest::Approx(0.8176).epsilon(1e-4));
        const double expected = -std::log(2 * std::numbers::pi) - 0.5 * std::log(4.0) -
                                0.5 * (std::log(0.5) * std::log(0.5) / 4.0) + std::log(f);
        const std::vector<Observation> one{{1.5, 1.0, true}};
        CHECK(log_posterior(Beta{0.0, 1.0}, one, prior) == doctest::Approx(expected).epsilon(1e-13));
        const double prior_only = expected - std::log(f);
        CHECK(log_posterior(Beta{0.0, 1.0}, {}, prior) == doctest::Approx(prior_only).epsilon(1e-13));
        const std::vector<Observation> impossible{{1.5, 0.0, true}};
        CHECK(std::isinf(log_posterior(Beta{0.0, 1.0}, impossible, prior)));
    }

    TEST_CASE("property: unit weights reduce to the plain likelihood")
    {
        oracle::for_all(2000, 21, [](std::mt19937_64& g, int) {
            const PriorHyper prior{oracle::uniform(g, -2, 1), oracle::uniform(g, -2, 1), oracle::uniform(g, 0.5, 4),
                                   oracle::uniform(g, 0.5, 2)};
            std::vector<oracle::Obs> data;
            const int n = oracle::uniform_int(g, 0, 12);
            for (int i = 0; i < n; ++i) {
                data.push_back({default_grid()[static_cast<std::size_t>(oracle::uniform_int(g, 0, 5))], 1.0,
                                oracle::uniform(g, 0, 1) < 0.3});
            }
            const double b0 = oracle::uniform(g, -4, 2);
            const double b1 = std::exp(oracle::uniform(g, -2, 1));
            const double want = plain_log_posterior(b0, b1, data, prior);
            const double got = log_posterior(Beta{b0, b1}, to_obs(data), prior);
            REQUIRE(std::abs(got - want) <= 1e-11 * std::max(1.0, std::abs(want)));
        });
    }

    TEST_CASE("property: tox_prob is increasing in dose and intercept; MTD inversion round-trips")
    {
        oracle::for_all(10000, 22, [](std::mt19937_64& g, int) {
            const Beta b{oracle::uniform(g, -5, 3), std::exp(oracle::uniform(g, -2, 1.5))};
            const double d = oracle::uniform(g, 0.1, 8);
            const double e = d + oracle::uniform(g, 1e-3, 2);
            const double f = tox_prob(d, b);
            REQUIRE(f <= tox_prob(e, b));
            REQUIRE(f <= tox_prob(d, Beta{b.intercept + oracle::uniform(g, 1e-3, 1), b.slope}));
            if (f < 0.999) {
                REQUIRE(f < tox_prob(e, b));
            }
            const double tau = oracle::uniform(g, 0.05, 0.95);
            PosteriorDraws draws;
            draws.draws.push_back(b);
            const double mtd = mtd_draws(draws, tau).front();
            REQUIRE(std::abs(tox_prob(mtd, b) - tau) < 1e-12);
        });
    }

    TEST_CASE("mtd_draws values")
    {
        PosteriorDraws d;
        d.draws = {Beta{logit(0.3), 1.0}, Beta{0.0, 1.0}, Beta{-2.0, 0.5}};
        const auto m3 = mtd_draws(d, 0.3);
        CHECK(std::abs(m3[0]) < 1e-15);
        CHECK(m3[2] == doctest::Approx((std::log(0.3 / 0.7) + 2.0) / 0.5).epsilon(1e-12));
        CHECK(m3[2] == doctest::Approx(2.3054).epsilon(1e-4));
        CHECK(mtd_draws(d, 0.5)[1] == 0.0);
    }

    TEST_CASE("cv_mtd values and scale invariance")
    {
        const std::vector<double> flat{3.5, 3.5, 3.5};
        CHECK(cv_mtd(flat) == 0.0);
        const std::vector<double> v{1, 2, 3};
        CHECK(cv_mtd(v) == doctest::Approx(0.7413).epsilon(1e-12));
        const std::vector<double> zero_median{-1, 0, 1};
        CHECK_THROWS_AS(cv_mtd(zero_median), UndefinedCv);
        CHECK_THROWS_AS(cv_mtd(std::vector<double>{}), UndefinedCv);
        const std::vector<double> negative{-3, -2, -1};
        CHECK(cv_mtd(negative) < 0.0);
        CHECK(median({4, 1, 3, 2}) == 2.5);

        oracle::for_all(2000, 23, [](std::mt19937_64& g, int) {
            std::vector<double> xs(static_cast<std::size_t>(oracle::uniform_int(g, 1, 50)));
            for (auto& x : xs) {
                x = oracle::uniform(g, 0.1, 10);
            }
            const double k = std::exp(oracle::uniform(g, -3, 3));
            std::vector<double> scaled = xs;
            for (auto& x : scaled) {
                x *= k;
            }
            const double a = cv_mtd(xs);
            REQUIRE(std::abs(cv_mtd(scaled) - a) <= 1e-12 * std::max(1.0, a));
        });
    }

    TEST_CASE("dose_summaries and quantiles from explicit draws")
    {
        PosteriorDraws one;
        one.draws = {Beta{0.0, 1.0}};
        const DoseGrid grid(std::vector<double>{1.5, 2.5});
        const double thresholds[] = {0.3};
        const auto s = dose_summaries(one, grid, thresholds);
        CHECK(s[0].mean_tox == doctest::Approx(0.8176).epsilon(1e-4));
        CHECK(s[1].mean_tox == doctest::Approx(0.9241).epsilon(1e-4));
        CHECK(s[0].prob_above[0] == 1.0);
        CHECK(s[0].prob_at_or_below[0] == 0.0);

        PosteriorDraws low;
        low.draws = {Beta{-6.0, 0.5}, Beta{-7.0, 0.4}};
        const auto sl = dose_summaries(low, grid, thresholds);
        CHECK(sl[1].prob_above[0] == 0.0);

        PosteriorDraws mixed;
        mixed.draws = {Beta{-6.0, 0.5}, Beta{0.0, 1.0}};
        const auto sm = dose_summaries(mixed, grid, thresholds);
        CHECK(sm[0].prob_above[0] == 0.5);
        CHECK(sm[0].prob_at_or_below[0] == 0.5);

        const double probs[] = {0.0, 0.5, 1.0};
        const auto q = dose_quantiles(mixed, grid, probs);
        CHECK(q[0][0] == doctest::Approx(tox_prob(1.5, Beta{-6.0, 0.5})));
        CHECK(q[0][2] == doctest::Approx(tox_prob(1.5, Beta{0.0, 1.0})));
        CHECK(q[0][1] == doctest::Approx(0.5 * (q[0][0] + q[0][2])));
    }

    TEST_CASE("fit on no data reproduces the prior")
    {
        SamplerConfig cfg;
        cfg.draws = 20000;
        Xoshiro256 rng(31);
        const auto draws = fit({}, PriorHyper{0.0, 0.0, 1.0, 1.0}, cfg, rng);
        REQUIRE(draws.draws.size() == 20000);
        double m0 = 0, m1 = 0;
        for (const auto& b : draws.draws) {
            REQUIRE(b.slope > 0.0);
            m0 += b.intercept;
            m1 += std::log(b.slope);
        }
        CHECK(std::abs(m0 / 20000) < 0.05);
        CHECK(std::abs(m1 / 20000) < 0.05);
        CHECK(draws.diagnostics.acceptance_rate > 0.1);
        CHECK(draws.diagnostics.effective_draws > 1000);
    }

    TEST_CASE("fit agrees with quadrature on small datasets")
    {
        const auto grid = default_grid();
        const std::vector<double> doses(grid.values().begin(), grid.values().end());
        const PriorHyper prior;
        SamplerConfig cfg;
        cfg.draws = 100000;
        const double thresholds[] = {0.3};

        SUBCASE("0/3 at 1.5 MBq: means within 0.01")
        {
            const auto data = cohort(1.5, 3, 0);
            const auto want = oracle::quadrature_posterior(data, to_oracle(prior), doses, 0.3);
            Xoshiro256 rng(41);
            const auto got = dose_summaries(fit(to_obs(data), prior, cfg, rng), grid, thresholds);
            for (std::size_t j = 0; j < doses.size(); ++j) {
                CHECK(std::abs(got[j].mean_tox - want.mean_tox[j]) < 0.01);
            }
        }
        SUBCASE("2/3 at 7.0 MBq: tail at 0.3 within 0.01")
        {
            const auto data = cohort(7.0, 3, 2);
            const auto want = oracle::quadrature_posterior(data, to_oracle(prior), doses, 0.3);
            Xoshiro256 rng(42);
            const auto got = dose_summaries(fit(to_obs(data), prior, cfg, rng), grid, thresholds);
            CHECK(std::abs(got[5].prob_above[0] - want.prob_above[5]) < 0.01);
        }
        SUBCASE("randomized datasets of up to 12 weighted observations")
        {
            oracle::for_all(12, 43, [&](std::mt19937_64& g, int c) {
                std::vector<oracle::Obs> data;
                const int n = oracle::uniform_int(g, 1, 12);
                for (int i = 0; i < n; ++i) {
                    const bool dlt = oracle::uniform(g, 0, 1) < 0.3;
                    const double w = dlt ? 1.0 : oracle::uniform_int(g, 1, 3) / 3.0;
                    data.push_back({doses[static_cast<std::size_t>(oracle::uniform_int(g, 0, 5))], w, dlt});
                }
                const auto want = oracle::quadrature_posterior(data, to_oracle(prior), doses, 0.3);
                Xoshiro256 rng(derive_seed(44, {static_cast<std::uint64_t>(c)}));
                const auto got = dose_summaries(fit(to_obs(data), prior, cfg, rng), grid, thresholds);
                for (std::size_t j = 0; j < doses.size(); ++j) {
                    REQUIRE(std::abs(got[j].mean_tox - want.mean_tox[j]) < 0.01);
                    REQUIRE(std::abs(got[j].prob_above[0] - want.prob_above[j]) < 0.015);
                }
            });
        }
    }

    TEST_CASE("fit is bit-identical for identical seeds")
    {
        const std::vector<Observation> data{{1.5, 1.0, false}, {2.5, 1.0, true}, {2.5, 1.0 / 3, false}};
        const SamplerConfig cfg;
        Xoshiro256 a(7), b(7);
        const auto x = fit(data, PriorHyper{}, cfg, a);
        const auto y = fit(data, PriorHyper{}, cfg, b);
        REQUIRE(x.draws.size() == y.draws.size());
        for (std::size_t i = 0; i < x.draws.size(); ++i) {
            REQUIRE(x.draws[i].intercept == y.draws[i].intercept);
            REQUIRE(x.draws[i].slope == y.draws[i].slope);
        }
        CHECK(x.diagnostics.acceptance_rate == y.diagnostics.acceptance_rate);
    }

    TEST_CASE("sampler failure is reported when acceptance is out of bounds")
    {
        SamplerConfig cfg;
        cfg.min_acceptance = 0.97;
        Xoshiro256 rng(3);
        CHECK_THROWS_AS(fit({}, PriorHyper{}, cfg, rng), SamplerFailure);
    }

    TEST_CASE("configuration validation")
    {
        CHECK_THROWS(PriorHyper{0, 0, 0, 1}.validate());
        CHECK_THROWS(PriorHyper{0, 0, 1, -1}.validate());
        SamplerConfig cfg;
        cfg.draws = 0;
        CHECK_THROWS(cfg.validate());
        CHECK(builtin_prior("vague") == PriorHyper{});
        CHECK(builtin_prior("calibrated-1cycle-nobackfill") == PriorHyper{std::log(0.5), std::log(0.25), 4, 2});
        CHECK(builtin_prior("calibrated-1cycle-backfill") == PriorHyper{std::log(0.5), std::log(0.25), 2, 1});
        CHECK(builtin_prior("calibrated-3cycle-backfill") == PriorHyper{std::log(1.0 / 16), std::log(1.0 / 16), 1, 1});
        CHECK_FALSE(builtin_prior("nope").has_value());
    }
}
