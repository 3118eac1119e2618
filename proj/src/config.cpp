#include "backfill/config.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace backfill {

using nlohmann::json;

namespace {

// Dose indices leave the library 1-based.
json dose_level(const std::optional<std::size_t>& j)
{
    return j ? json(*j + 1) : json(nullptr);
}

std::optional<std::size_t> dose_index(const json& j)
{
    if (j.is_null()) {
        return std::nullopt;
    }
    return j.get<std::size_t>() - 1;
}

json optional_number(const std::optional<double>& v)
{
    return v ? json(*v) : json(nullptr);
}

template <class T>
void read_if(const json& j, const char* key, T& out)
{
    if (j.contains(key)) {
        out = j.at(key).get<T>();
    }
}

} // namespace

json to_json(const PriorHyper& prior)
{
    return json{{"c1", prior.c1}, {"c2", prior.c2}, {"v1", prior.v1}, {"v2", prior.v2}};
}

PriorHyper prior_from_json(const json& j)
{
    if (j.is_string()) {
        if (auto p = builtin_prior(j.get<std::string>())) {
            return *p;
        }
        throw ConfigError("unknown builtin prior '" + j.get<std::string>() + "'");
    }
    PriorHyper p;
    read_if(j, "c1", p.c1);
    read_if(j, "c2", p.c2);
    read_if(j, "v1", p.v1);
    read_if(j, "v2", p.v2);
    p.validate();
    return p;
}

PriorHyper resolve_prior(const std::string& id_or_path)
{
    if (auto p = builtin_prior(id_or_path)) {
        return *p;
    }
    std::ifstream in(id_or_path);
    if (!in) {
        throw ConfigError("'" + id_or_path + "' is neither a builtin prior id nor a readable file");
    }
    return prior_from_json(json::parse(in));
}

json to_json(const RuleConfig& r)
{
    json priority = json::array();
    for (auto reason : r.priority) {
        priority.push_back(std::string(to_string(reason)));
    }
    return json{{"tau1", r.tau1},
                {"psi", r.psi},
                {"kfold", r.kfold},
                {"unsafe_prob", r.unsafe_prob},
                {"safe_prob", r.safe_prob},
                {"cv_limit", r.cv_limit},
                {"min_escalation_cohorts_for_precision", r.min_escalation_cohorts_for_precision},
                {"cohorts_for_sufficient_info", r.cohorts_for_sufficient_info},
                {"n_max", r.n_max},
                {"restrict_recommendation_to_experimented", r.restrict_recommendation_to_experimented},
                {"priority", priority}};
}

RuleConfig rules_from_json(const json& j, RuleConfig r)
{
    read_if(j, "tau1", r.tau1);
    read_if(j, "psi", r.psi);
    read_if(j, "kfold", r.kfold);
    read_if(j, "unsafe_prob", r.unsafe_prob);
    read_if(j, "safe_prob", r.safe_prob);
    read_if(j, "cv_limit", r.cv_limit);
    read_if(j, "min_escalation_cohorts_for_precision", r.min_escalation_cohorts_for_precision);
    read_if(j, "cohorts_for_sufficient_info", r.cohorts_for_sufficient_info);
    read_if(j, "n_max", r.n_max);
    read_if(j, "restrict_recommendation_to_experimented", r.restrict_recommendation_to_experimented);
    if (j.contains("priority")) {
        const auto& p = j.at("priority");
        if (!p.is_array() || p.size() != r.priority.size()) {
            throw ConfigError("rules.priority must list all six stopping rules");
        }
        for (std::size_t i = 0; i < r.priority.size(); ++i) {
            r.priority[i] = stop_reason_from_string(p[i].get<std::string>());
        }
    }
    return r;
}

json to_json(const SamplerConfig& s)
{
    return json{{"burn_in", s.burn_in},
                {"draws", s.draws},
                {"adapt_interval", s.adapt_interval},
                {"thin", s.thin},
                {"target_acceptance", s.target_acceptance},
                {"min_acceptance", s.min_acceptance},
                {"max_acceptance", s.max_acceptance}};
}

SamplerConfig sampler_from_json(const json& j, SamplerConfig s)
{
    read_if(j, "burn_in", s.burn_in);
    read_if(j, "draws", s.draws);
    read_if(j, "adapt_interval", s.adapt_interval);
    read_if(j, "thin", s.thin);
    read_if(j, "target_acceptance", s.target_acceptance);
    read_if(j, "min_acceptance", s.min_acceptance);
    read_if(j, "max_acceptance", s.max_acceptance);
    return s;
}

json to_json(const DesignConfig& d)
{
    return json{{"grid", std::vector<double>(d.grid.values().begin(), d.grid.values().end())},
                {"prior", to_json(d.prior)},
                {"rules", to_json(d.rules)},
                {"cohort_size", d.cohort_size},
                {"followup_cycles", d.followup_cycles},
                {"cycle_weeks", d.cycle_weeks},
                {"backfill_policy", std::string(to_string(d.backfill))},
                {"backfill_cohorts_per_dose", d.backfill_cohorts_per_dose},
                {"sampler", to_json(d.sampler)}};
}

DesignConfig design_from_json(const json& j, DesignConfig d)
{
    try {
        if (!j.is_object()) {
            throw ConfigError("design configuration must be a JSON object");
        }
        if (j.contains("grid")) {
            d.grid = DoseGrid(j.at("grid").get<std::vector<double>>());
        }
        if (j.contains("prior")) {
            d.prior = prior_from_json(j.at("prior"));
        }
        if (j.contains("rules")) {
            d.rules = rules_from_json(j.at("rules"), d.rules);
        }
        if (j.contains("sampler")) {
            d.sampler = sampler_from_json(j.at("sampler"), d.sampler);
        }
        read_if(j, "cohort_size", d.cohort_size);
        read_if(j, "followup_cycles", d.followup_cycles);
        read_if(j, "cycle_weeks", d.cycle_weeks);
        read_if(j, "backfill_cohorts_per_dose", d.backfill_cohorts_per_dose);
        if (j.contains("backfill_policy")) {
            d.backfill = backfill_policy_from_string(j.at("backfill_policy").get<std::string>());
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed design configuration: ") + e.what());
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    d.validate();
    return d;
}

DesignConfig load_design(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open design file " + path.string());
    }
    return design_from_json(json::parse(in));
}

json to_json(const DoseSummary& s)
{
    return json{{"mean_tox", s.mean_tox}, {"prob_above", s.prob_above}, {"prob_at_or_below", s.prob_at_or_below}};
}

json to_json(const Decision& d)
{
    json summaries = json::array();
    for (const auto& s : d.summaries) {
        summaries.push_back(to_json(s));
    }
    json enrollments = json::array();
    for (const auto& e : d.enrollments) {
        enrollments.push_back({{"dose", e.dose + 1}, {"kind", std::string(to_string(e.kind))}, {"size", e.size}});
    }
    const auto& r = d.rules;
    return json{{"index", d.index},
                {"week", d.week},
                {"startup", d.startup},
                {"summaries", summaries},
                {"mtd_cv", optional_number(d.mtd_cv)},
                {"first_excluded", dose_level(d.first_excluded)},
                {"rules",
                 {{"hard_safety", r.hard_safety},
                  {"lowest_unsafe", r.lowest_unsafe},
                  {"max_patients", r.max_patients},
                  {"highest_very_safe", r.highest_very_safe},
                  {"sufficient_information", r.sufficient_information},
                  {"precision", r.precision},
                  {"precision_eligible", r.precision_eligible}}},
                {"stopped", d.stop.stopped},
                {"stop_reason", std::string(to_string(d.stop.reason))},
                {"recommends_dose", d.stop.recommends_dose},
                {"next_dose", dose_level(d.next_dose)},
                {"enrollments", enrollments},
                {"acceptance_rate", d.diagnostics.acceptance_rate},
                {"effective_draws", d.diagnostics.effective_draws}};
}

json to_json(const DecisionTrace& t)
{
    return json{{"week", t.week},
                {"startup", t.startup},
                {"next_dose", dose_level(t.next_dose)},
                {"reason", std::string(to_string(t.reason))},
                {"mean_tox", t.mean_tox},
                {"mtd_cv", optional_number(t.mtd_cv)},
                {"first_excluded", dose_level(t.first_excluded)}};
}

json to_json(const TrialResult& r)
{
    json tallies = json::array();
    for (const auto& t : r.tallies) {
        tallies.push_back({{"patients", t.patients},
                           {"dlts", t.dlts},
                           {"escalation_cohorts", t.escalation_cohorts},
                           {"backfill_cohorts", t.backfill_cohorts}});
    }
    json cohorts = json::array();
    for (const auto& c : r.cohorts) {
        cohorts.push_back(
            {{"dose", c.dose + 1}, {"week", c.week}, {"kind", std::string(to_string(c.kind))}, {"size", c.size}});
    }
    json trace = json::array();
    for (const auto& t : r.trace) {
        trace.push_back(to_json(t));
    }
    return json{{"recommendation", dose_level(r.recommendation)},
                {"stop_reason", std::string(to_string(r.stop_reason))},
                {"n_enrolled", r.n_enrolled},
                {"n_dlts", r.n_dlts},
                {"duration_weeks", r.duration_weeks},
                {"tallies", tallies},
                {"cohorts", cohorts},
                {"trace", trace}};
}

TrialResult trial_result_from_json(const json& j)
{
    TrialResult r;
    r.recommendation = dose_index(j.at("recommendation"));
    r.stop_reason = stop_reason_from_string(j.at("stop_reason").get<std::string>());
    r.n_enrolled = j.at("n_enrolled").get<int>();
    r.n_dlts = j.at("n_dlts").get<int>();
    r.duration_weeks = j.at("duration_weeks").get<int>();
    for (const auto& t : j.at("tallies")) {
        r.tallies.push_back(DoseTally{t.at("patients").get<int>(), t.at("dlts").get<int>(),
                                      t.at("escalation_cohorts").get<int>(), t.at("backfill_cohorts").get<int>()});
    }
    for (const auto& c : j.at("cohorts")) {
        r.cohorts.push_back(CohortEntry{c.at("dose").get<std::size_t>() - 1, c.at("week").get<int>(),
                                        c.at("kind").get<std::string>() == "backfill" ? CohortKind::Backfill
                                                                                      : CohortKind::Escalation,
                                        c.at("size").get<int>()});
    }
    for (const auto& t : j.at("trace")) {
        DecisionTrace d;
        d.week = t.at("week").get<int>();
        d.startup = t.at("startup").get<bool>();
        d.next_dose = dose_index(t.at("next_dose"));
        d.reason = stop_reason_from_string(t.at("reason").get<std::string>());
        d.mean_tox = t.at("mean_tox").get<std::vector<double>>();
        if (!t.at("mtd_cv").is_null()) {
            d.mtd_cv = t.at("mtd_cv").get<double>();
        }
        d.first_excluded = dose_index(t.at("first_excluded"));
        r.trace.push_back(std::move(d));
    }
    return r;
}

json to_json(const ScenarioSummary& s)
{
    json stops = json::object();
    for (std::size_t k = 0; k < s.stop_counts.size(); ++k) {
        stops[std::string(to_string(static_cast<StopReason>(k)))] = s.stop_counts[k];
    }
    return json{{"sims", s.sims},
                {"pcs", s.pcs},
                {"pas", s.pas},
                {"mean_n", s.mean_n},
                {"mean_duration", optional_number(s.mean_duration)},
                {"mean_dlts", optional_number(s.mean_dlts)},
                {"pct_dlt", optional_number(s.pct_dlt)},
                {"mean_overdosed", optional_number(s.mean_overdosed)},
                {"selections", s.selections},
                {"no_selection", s.no_selection},
                {"stop_counts", stops}};
}

std::string draws_to_csv(const PosteriorDraws& draws)
{
    std::ostringstream out;
    out << std::setprecision(17) << "beta0,beta1\n";
    for (const auto& b : draws.draws) {
        out << b.intercept << ',' << b.slope << '\n';
    }
    return out.str();
}

} // namespace backfill
