#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "backfill/metrics.hpp"
#include "backfill/trial.hpp"

namespace backfill {

// Design configuration files are JSON objects with optional sections
// {grid, prior, rules, sampler, cohort_size, followup_cycles, cycle_weeks,
//  backfill_policy, backfill_cohorts_per_dose}. Missing keys keep defaults.

nlohmann::json to_json(const PriorHyper& prior);
PriorHyper prior_from_json(const nlohmann::json& j);

/// Builtin id or path to a JSON prior file.
PriorHyper resolve_prior(const std::string& id_or_path);

nlohmann::json to_json(const RuleConfig& rules);
RuleConfig rules_from_json(const nlohmann::json& j, RuleConfig base = {});

nlohmann::json to_json(const SamplerConfig& sampler);
SamplerConfig sampler_from_json(const nlohmann::json& j, SamplerConfig base = {});

nlohmann::json to_json(const DesignConfig& design);
/// Throws ConfigError on malformed or invalid configurations.
DesignConfig design_from_json(const nlohmann::json& j, DesignConfig base = {});
DesignConfig load_design(const std::filesystem::path& path);

nlohmann::json to_json(const DoseSummary& s);
nlohmann::json to_json(const Decision& d);
nlohmann::json to_json(const DecisionTrace& t);
nlohmann::json to_json(const TrialResult& r);
TrialResult trial_result_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ScenarioSummary& s);

/// Draws as CSV with header "beta0,beta1".
std::string draws_to_csv(const PosteriorDraws& draws);

} // namespace backfill
