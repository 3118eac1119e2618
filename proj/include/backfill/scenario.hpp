#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "backfill/rng.hpp"

namespace backfill {

/// Ordered, strictly increasing set of positive dose values (MBq).
class DoseGrid {
public:
    DoseGrid() = default;
    explicit DoseGrid(std::vector<double> doses);

    std::size_t size() const noexcept { return doses_.size(); }
    double operator[](std::size_t j) const { return doses_[j]; }
    std::span<const double> values() const noexcept { return doses_; }

    friend bool operator==(const DoseGrid&, const DoseGrid&) = default;

private:
    std::vector<double> doses_;
};

/// The six-level grid used throughout the builtin scenarios.
DoseGrid default_grid();

struct Scenario {
    std::string label;
    DoseGrid grid;
    std::vector<double> p1;        ///< true P(DLT in cycle 1) per dose
    std::vector<double> activity;  ///< P(activity signal) per cohort, per dose
    std::optional<std::size_t> mtd_index;  ///< 0-based; absent when no dose is on target

    /// Throws std::invalid_argument on mismatched lengths or out-of-range probabilities.
    void validate() const;

    /// Cumulative DLT probability by end of cycle `cycles` at every dose.
    std::vector<double> cumulative(int cycles) const;
};

struct PatientProfile {
    std::optional<int> dlt_cycle;  ///< 1-based cycle of the DLT, absent = none within follow-up
};

/// Cumulative P(DLT by end of cycle s) when the conditional hazard in cycle k
/// is p1 / 3^(k-1). Throws std::domain_error for p1 outside [0,1] or s < 1.
double extend_cycle_prob(double p1, int s);

/// Target for an S-cycle follow-up window, i.e. extend_cycle_prob(tau1, S).
double target_for_followup(double tau1, int cycles);

/// Draws one uniform from `stream` and maps it to the DLT cycle at `dose`.
PatientProfile sample_profile(const Scenario& scenario, std::size_t dose, int cycles, Xoshiro256& stream);

/// Latent-tolerance form of sample_profile: the DLT occurs in the first cycle
/// s with u < p_s.
PatientProfile profile_from_uniform(double p1, int cycles, double u);

/// The seventeen reference scenarios, labelled "1".."17".
std::vector<Scenario> builtin_scenarios();

// Scenario files: {"scenarios": [{label, doses, p1, activity, mtd_index}]}.
// mtd_index is 1-based in files (null when absent).
nlohmann::json scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json scenarios_to_json(std::span<const Scenario> list);
std::vector<Scenario> scenarios_from_json(const nlohmann::json& j);
std::vector<Scenario> load_scenarios(const std::filesystem::path& path);
void save_scenarios(const std::filesystem::path& path, std::span<const Scenario> list);

/// Parses a selector such as "1-17", "1,3,4,6,9,13" or "all" against the
/// builtin set, or loads a scenario file when the selector names one.
std::vector<Scenario> select_scenarios(const std::string& selector);

} // namespace backfill
