#include "backfill/posterior.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace backfill {

void PriorHyper::validate() const
{
    if (!(v1 > 0.0) || !(v2 > 0.0)) {
        throw std::invalid_argument("prior variances must be positive");
    }
    if (!std::isfinite(c1) || !std::isfinite(c2)) {
        throw std::invalid_argument("prior means must be finite");
    }
}

std::optional<PriorHyper> builtin_prior(std::string_view id)
{
    const double half = std::log(0.5);
    const double quarter = std::log(0.25);
    const double sixteenth = std::log(1.0 / 16.0);
    if (id == "vague") {
        return PriorHyper{half, 0.0, 4.0, 1.0};
    }
    if (id == "calibrated-1cycle-nobackfill") {
        return PriorHyper{half, quarter, 4.0, 2.0};
    }
    if (id == "calibrated-1cycle-backfill") {
        return PriorHyper{half, quarter, 2.0, 1.0};
    }
    if (id == "calibrated-3cycle-nobackfill" || id == "calibrated-3cycle-backfill") {
        return PriorHyper{sixteenth, sixteenth, 1.0, 1.0};
    }
    return std::nullopt;
}

std::vector<std::string> builtin_prior_ids()
{
    return {"vague", "calibrated-1cycle-nobackfill", "calibrated-1cycle-backfill", "calibrated-3cycle-nobackfill",
            "calibrated-3cycle-backfill"};
}

double logit(double p)
{
    return std::log(p / (1.0 - p));
}

namespace {

// log(1 + exp(x)) without overflow
inline double softplus(double x)
{
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x)
{
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Observations collapsed to distinct (dose, weight) cells.
struct Cell {
    double dose;
    double weight;
    double dlts;
    double free;
};

class LogPosterior {
public:
    LogPosterior(std::span<const Observation> data, const PriorHyper& prior) : prior_(prior)
    {
        for (const auto& obs : data) {
            if (!(obs.weight >= 0.0 && obs.weight <= 1.0)) {
                throw std::invalid_argument("observation weight outside [0,1]");
            }
            auto it = std::find_if(cells_.begin(), cells_.end(), [&](const Cell& c) {
                return c.dose == obs.dose && c.weight == obs.weight;
            });
            if (it == cells_.end()) {
                cells_.push_back(Cell{obs.dose, obs.weight, 0.0, 0.0});
                it = std::prev(cells_.end());
            }
            (obs.dlt ? it->dlts : it->free) += 1.0;
        }
        log_norm_ = -0.5 * std::log(prior.v1 * prior.v2) - std::log(2.0 * std::numbers::pi);
    }

    // theta = (beta0, log beta1)
    double operator()(double b0, double log_b1) const
    {
        const double d0 = b0 - prior_.c1;
        const double d1 = log_b1 - prior_.c2;
        double lp = log_norm_ - 0.5 * (d0 * d0 / prior_.v1 + d1 * d1 / prior_.v2);
        const double b1 = std::exp(log_b1);
        for (const auto& c : cells_) {
            const double eta = b0 + b1 * c.dose;
            if (c.dlts > 0.0) {
                if (c.weight <= 0.0) {
                    return -std::numeric_limits<double>::infinity();
                }
                lp += c.dlts * (std::log(c.weight) - softplus(-eta));
            }
            if (c.free > 0.0) {
                if (c.weight == 1.0) {
                    lp -= c.free * softplus(eta);
                } else {
                    lp += c.free * std::log1p(-c.weight * sigmoid(eta));
                }
            }
        }
        return lp;
    }

private:
    PriorHyper prior_;
    std::vector<Cell> cells_;
    double log_norm_ = 0.0;
};

using Vec2 = std::array<double, 2>;
using Mat2 = std::array<double, 4>;  // row-major symmetric

bool cholesky(const Mat2& m, Mat2& l)
{
    if (!(m[0] > 0.0)) {
        return false;
    }
    const double l00 = std::sqrt(m[0]);
    const double l10 = m[2] / l00;
    const double rest = m[3] - l10 * l10;
    if (!(rest > 0.0)) {
        return false;
    }
    l = {l00, 0.0, l10, std::sqrt(rest)};
    return true;
}

// Damped Newton ascent with finite-difference derivatives. Returns the mode
// and, when the curvature there is negative definite, the Laplace covariance.
struct ModeResult {
    Vec2 mode;
    std::optional<Mat2> covariance;
};

ModeResult find_mode(const LogPosterior& lp, Vec2 start)
{
    constexpr double h = 1e-4;
    Vec2 x = start;
    double fx = lp(x[0], x[1]);
    Mat2 hess{};
    for (int iter = 0; iter < 50; ++iter) {
        const double fpx = lp(x[0] + h, x[1]);
        const double fmx = lp(x[0] - h, x[1]);
        const double fpy = lp(x[0], x[1] + h);
        const double fmy = lp(x[0], x[1] - h);
        const double fpp = lp(x[0] + h, x[1] + h);
        const double fpm = lp(x[0] + h, x[1] - h);
        const double fmp = lp(x[0] - h, x[1] + h);
        const double fmm = lp(x[0] - h, x[1] - h);
        const Vec2 g{(fpx - fmx) / (2 * h), (fpy - fmy) / (2 * h)};
        const double hxy = (fpp - fpm - fmp + fmm) / (4 * h * h);
        hess = {(fpx - 2 * fx + fmx) / (h * h), hxy, hxy, (fpy - 2 * fx + fmy) / (h * h)};
        if (!std::isfinite(g[0]) || !std::isfinite(g[1])) {
            break;
        }

        // Shift the Hessian until negative definite so the step ascends.
        Mat2 neg{-hess[0], -hess[1], -hess[2], -hess[3]};
        double shift = 0.0;
        Mat2 l{};
        while (!cholesky({neg[0] + shift, neg[1], neg[2], neg[3] + shift}, l)) {
            shift = shift == 0.0 ? 1e-3 : shift * 10.0;
            if (shift > 1e8) {
                break;
            }
        }
        const double a = neg[0] + shift;
        const double b = neg[1];
        const double d = neg[3] + shift;
        const double det = a * d - b * b;
        if (!(det > 0.0)) {
            break;
        }
        Vec2 step{(d * g[0] - b * g[1]) / det, (a * g[1] - b * g[0]) / det};

        double t = 1.0;
        bool improved = false;
        for (int ls = 0; ls < 30; ++ls) {
            const Vec2 trial{x[0] + t * step[0], x[1] + t * step[1]};
            const double ft = lp(trial[0], trial[1]);
            if (ft > fx) {
                x = trial;
                fx = ft;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if (!improved || std::abs(step[0]) + std::abs(step[1]) < 1e-8) {
            break;
        }
    }

    ModeResult result{x, std::nullopt};
    const double a = -hess[0];
    const double b = -hess[1];
    const double d = -hess[3];
    const double det = a * d - b * b;
    if (a > 0.0 && det > 0.0 && std::isfinite(det)) {
        result.covariance = Mat2{d / det, -b / det, -b / det, a / det};
    }
    return result;
}

// Geyer's initial positive sequence estimate of the effective sample size.
double effective_size(const std::vector<double>& x)
{
    const std::size_t n = x.size();
    if (n < 4) {
        return static_cast<double>(n);
    }
    double mean = 0.0;
    for (double v : x) {
        mean += v;
    }
    mean /= static_cast<double>(n);
    auto autocov = [&](std::size_t lag) {
        double s = 0.0;
        for (std::size_t i = 0; i + lag < n; ++i) {
            s += (x[i] - mean) * (x[i + lag] - mean);
        }
        return s / static_cast<double>(n);
    };
    const double c0 = autocov(0);
    if (!(c0 > 0.0)) {
        return static_cast<double>(n);
    }
    double tau = -1.0;
    for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
        const double pair = (autocov(2 * k) + autocov(2 * k + 1)) / c0;
        if (pair <= 0.0) {
            break;
        }
        tau += 2.0 * pair;
    }
    return static_cast<double>(n) / std::max(tau, 1.0 / static_cast<double>(n));
}

} // namespace

double tox_prob(double dose, Beta beta)
{
    if (!(beta.slope > 0.0)) {
        throw std::domain_error("tox_prob: slope must be positive");
    }
    return sigmoid(beta.intercept + beta.slope * dose);
}

double tite_weight(int cycles_observed, int total_cycles, bool dlt)
{
    if (total_cycles < 1 || cycles_observed < 0 || cycles_observed > total_cycles) {
        throw std::domain_error("tite_weight: need 0 <= u <= S and S >= 1");
    }
    if (dlt) {
        return 1.0;
    }
    return static_cast<double>(cycles_observed) / static_cast<double>(total_cycles);
}

double log_posterior(Beta beta, std::span<const Observation> data, const PriorHyper& prior)
{
    if (!(beta.slope > 0.0)) {
        throw std::domain_error("log_posterior: slope must be positive");
    }
    return LogPosterior(data, prior)(beta.intercept, std::log(beta.slope));
}

void SamplerConfig::validate() const
{
    if (burn_in < 0 || draws < 1 || adapt_interval < 1 || thin < 1) {
        throw std::invalid_argument("sampler: burn_in >= 0, draws >= 1, adapt_interval >= 1, thin >= 1");
    }
    if (!(target_acceptance > 0.0 && target_acceptance < 1.0) || !(min_acceptance <= max_acceptance)) {
        throw std::invalid_argument("sampler: bad acceptance settings");
    }
}

PosteriorDraws fit(std::span<const Observation> data, const PriorHyper& prior, const SamplerConfig& config,
                   Xoshiro256& rng)
{
    prior.validate();
    config.validate();
    const LogPosterior lp(data, prior);

    const ModeResult start = find_mode(lp, {prior.c1, prior.c2});
    Mat2 cov = start.covariance.value_or(Mat2{prior.v1, 0.0, 0.0, prior.v2});
    Mat2 chol{};
    if (!cholesky(cov, chol)) {
        cov = {prior.v1, 0.0, 0.0, prior.v2};
        cholesky(cov, chol);
    }
    double log_scale = std::log(2.38 / std::sqrt(2.0));

    Vec2 x = start.mode;
    double fx = lp(x[0], x[1]);
    if (!std::isfinite(fx)) {
        x = {prior.c1, prior.c2};
        fx = lp(x[0], x[1]);
    }

    auto step = [&]() {
        const double z0 = rng.normal();
        const double z1 = rng.normal();
        const double s = std::exp(log_scale);
        const Vec2 y{x[0] + s * chol[0] * z0, x[1] + s * (chol[2] * z0 + chol[3] * z1)};
        const double fy = lp(y[0], y[1]);
        if (std::log(rng.uniform()) < fy - fx) {
            x = y;
            fx = fy;
            return true;
        }
        return false;
    };

    // Burn-in with adaptation: Robbins-Monro on the log scale and an
    // empirical covariance from the second half of the burn-in.
    Vec2 mean{0.0, 0.0};
    Mat2 m2{0.0, 0.0, 0.0, 0.0};
    double count = 0.0;
    int batch_accepted = 0;
    int batch = 0;
    for (int it = 1; it <= config.burn_in; ++it) {
        batch_accepted += step() ? 1 : 0;
        if (2 * it > config.burn_in) {
            count += 1.0;
            const Vec2 delta{x[0] - mean[0], x[1] - mean[1]};
            mean[0] += delta[0] / count;
            mean[1] += delta[1] / count;
            const Vec2 delta2{x[0] - mean[0], x[1] - mean[1]};
            m2[0] += delta[0] * delta2[0];
            m2[1] += delta[0] * delta2[1];
            m2[3] += delta[1] * delta2[1];
        }
        if (it % config.adapt_interval == 0) {
            ++batch;
            const double rate = static_cast<double>(batch_accepted) / config.adapt_interval;
            log_scale += (rate - config.target_acceptance) / std::sqrt(static_cast<double>(batch));
            batch_accepted = 0;
            if (count >= 100.0) {
                const Mat2 emp{m2[0] / (count - 1), m2[1] / (count - 1), m2[1] / (count - 1), m2[3] / (count - 1)};
                Mat2 l{};
                if (cholesky(emp, l)) {
                    chol = l;
                }
            }
        }
    }

    PosteriorDraws out;
    out.draws.reserve(static_cast<std::size_t>(config.draws));
    std::vector<double> trace0;
    std::vector<double> trace1;
    trace0.reserve(out.draws.capacity());
    trace1.reserve(out.draws.capacity());
    long accepted = 0;
    const long iterations = static_cast<long>(config.draws) * config.thin;
    for (long it = 1; it <= iterations; ++it) {
        accepted += step() ? 1 : 0;
        if (it % config.thin == 0) {
            out.draws.push_back(Beta{x[0], std::exp(x[1])});
            trace0.push_back(x[0]);
            trace1.push_back(x[1]);
        }
    }
    out.diagnostics.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(iterations);
    out.diagnostics.effective_draws = std::min(effective_size(trace0), effective_size(trace1));
    if (out.diagnostics.acceptance_rate < config.min_acceptance ||
        out.diagnostics.acceptance_rate > config.max_acceptance) {
        throw SamplerFailure("sampler acceptance rate " + std::to_string(out.diagnostics.acceptance_rate) +
                             " outside configured bounds");
    }
    return out;
}

std::vector<DoseSummary> dose_summaries(const PosteriorDraws& draws, const DoseGrid& grid,
                                        std::span<const double> thresholds)
{
    const std::size_t n_dose = grid.size();
    const std::size_t n_thr = thresholds.size();
    std::vector<double> sums(n_dose, 0.0);
    std::vector<std::size_t> above(n_dose * n_thr, 0);
    for (const auto& b : draws.draws) {
        for (std::size_t j = 0; j < n_dose; ++j) {
            const double p = sigmoid(b.intercept + b.slope * grid[j]);
            sums[j] += p;
            for (std::size_t k = 0; k < n_thr; ++k) {
                above[j * n_thr + k] += p > thresholds[k] ? 1 : 0;
            }
        }
    }
    const double n = static_cast<double>(draws.draws.size());
    std::vector<DoseSummary> out(n_dose);
    for (std::size_t j = 0; j < n_dose; ++j) {
        out[j].mean_tox = n > 0 ? sums[j] / n : 0.0;
        out[j].prob_above.resize(n_thr);
        out[j].prob_at_or_below.resize(n_thr);
        for (std::size_t k = 0; k < n_thr; ++k) {
            const auto a = above[j * n_thr + k];
            out[j].prob_above[k] = n > 0 ? static_cast<double>(a) / n : 0.0;
            out[j].prob_at_or_below[k] = n > 0 ? static_cast<double>(draws.draws.size() - a) / n : 0.0;
        }
    }
    return out;
}

std::vector<std::vector<double>> dose_quantiles(const PosteriorDraws& draws, const DoseGrid& grid,
                                                std::span<const double> probs)
{
    std::vector<std::vector<double>> out(grid.size());
    if (draws.draws.empty()) {
        return out;
    }
    std::vector<double> values(draws.draws.size());
    for (std::size_t j = 0; j < grid.size(); ++j) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            values[i] = sigmoid(draws.draws[i].intercept + draws.draws[i].slope * grid[j]);
        }
        std::sort(values.begin(), values.end());
        for (double q : probs) {
            // type-7 interpolation
            const double h = q * static_cast<double>(values.size() - 1);
            const auto lo = static_cast<std::size_t>(std::floor(h));
            const auto hi = std::min(lo + 1, values.size() - 1);
            out[j].push_back(values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]));
        }
    }
    return out;
}

std::vector<double> mtd_draws(const PosteriorDraws& draws, double tau)
{
    if (!(tau > 0.0 && tau < 1.0)) {
        throw std::domain_error("mtd_draws: tau must lie in (0,1)");
    }
    const double target = logit(tau);
    std::vector<double> out;
    out.reserve(draws.draws.size());
    for (const auto& b : draws.draws) {
        out.push_back((target - b.intercept) / b.slope);
    }
    return out;
}

double median(std::vector<double> values)
{
    if (values.empty()) {
        throw std::domain_error("median of empty list");
    }
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double upper = values[mid];
    if (values.size() % 2 == 1) {
        return upper;
    }
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

double cv_mtd(std::span<const double> values)
{
    if (values.empty()) {
        throw UndefinedCv("cv_mtd: empty list");
    }
    std::vector<double> v(values.begin(), values.end());
    const double med = median(v);
    if (med == 0.0) {
        throw UndefinedCv("cv_mtd: median is zero");
    }
    for (auto& x : v) {
        x = std::abs(x - med);
    }
    return kMadConsistency * median(std::move(v)) / med;
}

} // namespace backfill
