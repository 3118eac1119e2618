#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "backfill/rng.hpp"
#include "backfill/scenario.hpp"

namespace backfill {

/// Bivariate normal prior on (beta0, log beta1) with diagonal covariance.
struct PriorHyper {
    double c1 = -0.69314718055994531;  // log(0.5)
    double c2 = 0.0;
    double v1 = 4.0;
    double v2 = 1.0;

    void validate() const;
    friend bool operator==(const PriorHyper&, const PriorHyper&) = default;
};

/// Builtin prior ids: "vague" and the four calibrated settings
/// "calibrated-1cycle-nobackfill", "calibrated-1cycle-backfill",
/// "calibrated-3cycle-nobackfill", "calibrated-3cycle-backfill".
std::optional<PriorHyper> builtin_prior(std::string_view id);
std::vector<std::string> builtin_prior_ids();

/// One patient's contribution to the (possibly weighted) likelihood.
struct Observation {
    double dose = 0.0;
    double weight = 1.0;
    bool dlt = false;
};

struct Beta {
    double intercept = 0.0;  ///< beta0
    double slope = 1.0;      ///< beta1, strictly positive
};

/// Logistic dose-toxicity curve. Throws std::domain_error if slope <= 0.
double tox_prob(double dose, Beta beta);

/// u/S for partially observed patients, 1 once a DLT has been seen.
double tite_weight(int cycles_observed, int total_cycles, bool dlt);

/// Log prior density of (beta0, log beta1) plus the weighted Bernoulli
/// log-likelihood with G = w F. Returns -inf for a DLT carrying zero weight.
double log_posterior(Beta beta, std::span<const Observation> data, const PriorHyper& prior);

struct SamplerConfig {
    int burn_in = 1000;
    int draws = 2000;
    int adapt_interval = 50;
    int thin = 1;
    double target_acceptance = 0.30;
    double min_acceptance = 0.02;
    double max_acceptance = 0.98;

    void validate() const;
    friend bool operator==(const SamplerConfig&, const SamplerConfig&) = default;
};

struct SamplerDiagnostics {
    double acceptance_rate = 0.0;
    double effective_draws = 0.0;
};

struct PosteriorDraws {
    std::vector<Beta> draws;
    SamplerDiagnostics diagnostics;
};

class SamplerFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Adaptive random-walk Metropolis on (beta0, log beta1). The proposal
/// covariance and scale adapt during burn-in and are frozen afterwards, so
/// the retained chain is a proper Metropolis chain. Deterministic given the
/// stream state.
PosteriorDraws fit(std::span<const Observation> data, const PriorHyper& prior, const SamplerConfig& config,
                   Xoshiro256& rng);

struct DoseSummary {
    double mean_tox = 0.0;
    std::vector<double> prob_above;        ///< P(p_d > theta_k), one per threshold
    std::vector<double> prob_at_or_below;  ///< P(p_d <= theta_k)
};

std::vector<DoseSummary> dose_summaries(const PosteriorDraws& draws, const DoseGrid& grid,
                                        std::span<const double> thresholds);

/// Per-dose posterior quantiles of F(d), e.g. {0.025, 0.5, 0.975}.
std::vector<std::vector<double>> dose_quantiles(const PosteriorDraws& draws, const DoseGrid& grid,
                                                std::span<const double> probs);

/// Dose solving F(MTD, beta) = tau for every draw; unclamped.
std::vector<double> mtd_draws(const PosteriorDraws& draws, double tau);

class UndefinedCv : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Consistency constant turning the MAD into a normal-scale deviation.
inline constexpr double kMadConsistency = 1.4826;

/// 1.4826 * MAD / median. Throws UndefinedCv for an empty list or zero median.
double cv_mtd(std::span<const double> values);

double median(std::vector<double> values);

double logit(double p);

} // namespace backfill
