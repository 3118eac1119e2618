#include "backfill/scenario.hpp"

#include <array>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace backfill {

DoseGrid::DoseGrid(std::vector<double> doses) : doses_(std::move(doses))
{
    if (doses_.size() < 2) {
        throw std::invalid_argument("dose grid needs at least two doses");
    }
    for (std::size_t j = 0; j < doses_.size(); ++j) {
        if (!(doses_[j] > 0.0) || !std::isfinite(doses_[j])) {
            throw std::invalid_argument("dose values must be positive and finite");
        }
        if (j > 0 && !(doses_[j] > doses_[j - 1])) {
            throw std::invalid_argument("dose grid must be strictly increasing");
        }
    }
}

DoseGrid default_grid()
{
    return DoseGrid({1.5, 2.5, 3.5, 4.5, 6.0, 7.0});
}

namespace {
bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }
} // namespace

void Scenario::validate() const
{
    if (grid.size() < 2) {
        throw std::invalid_argument("scenario '" + label + "': missing dose grid");
    }
    if (p1.size() != grid.size() || activity.size() != grid.size()) {
        throw std::invalid_argument("scenario '" + label + "': vectors must match the dose grid length");
    }
    if (!std::all_of(p1.begin(), p1.end(), is_probability) ||
        !std::all_of(activity.begin(), activity.end(), is_probability)) {
        throw std::invalid_argument("scenario '" + label + "': probabilities must lie in [0,1]");
    }
    if (mtd_index && *mtd_index >= grid.size()) {
        throw std::invalid_argument("scenario '" + label + "': mtd_index out of range");
    }
}

std::vector<double> Scenario::cumulative(int cycles) const
{
    std::vector<double> out(p1.size());
    std::transform(p1.begin(), p1.end(), out.begin(), [cycles](double p) { return extend_cycle_prob(p, cycles); });
    return out;
}

double extend_cycle_prob(double p1, int s)
{
    if (!is_probability(p1)) {
        throw std::domain_error("extend_cycle_prob: p1 outside [0,1]");
    }
    if (s < 1) {
        throw std::domain_error("extend_cycle_prob: cycle count must be >= 1");
    }
    // Each cycle adds its hazard times the probability of reaching it.
    double cumulative = 0.0;
    double hazard = p1;
    for (int k = 1; k <= s; ++k) {
        cumulative += (1.0 - cumulative) * hazard;
        hazard /= 3.0;
    }
    return cumulative;
}

double target_for_followup(double tau1, int cycles)
{
    if (!(tau1 > 0.0 && tau1 < 1.0)) {
        throw std::domain_error("target_for_followup: tau1 must lie in (0,1)");
    }
    return extend_cycle_prob(tau1, cycles);
}

PatientProfile profile_from_uniform(double p1, int cycles, double u)
{
    double cumulative = 0.0;
    double hazard = p1;
    for (int s = 1; s <= cycles; ++s) {
        cumulative += (1.0 - cumulative) * hazard;
        hazard /= 3.0;
        if (u < cumulative) {
            return PatientProfile{s};
        }
    }
    return PatientProfile{};
}

PatientProfile sample_profile(const Scenario& scenario, std::size_t dose, int cycles, Xoshiro256& stream)
{
    if (dose >= scenario.p1.size()) {
        throw std::out_of_range("sample_profile: dose index out of range");
    }
    if (cycles < 1) {
        throw std::domain_error("sample_profile: cycle count must be >= 1");
    }
    return profile_from_uniform(scenario.p1[dose], cycles, stream.uniform());
}

std::vector<Scenario> builtin_scenarios()
{
    struct Row {
        std::array<double, 6> p1;
        int mtd;  // 1-based, 0 = none
    };
    static constexpr std::array<Row, 17> table{{
        {{0.30, 0.40, 0.50, 0.60, 0.70, 0.80}, 1},
        {{0.20, 0.30, 0.40, 0.50, 0.60, 0.70}, 2},
        {{0.10, 0.20, 0.30, 0.40, 0.50, 0.60}, 3},
        {{0.05, 0.10, 0.20, 0.30, 0.40, 0.50}, 4},
        {{0.05, 0.10, 0.15, 0.20, 0.30, 0.40}, 5},
        {{0.02, 0.05, 0.10, 0.15, 0.20, 0.30}, 6},
        {{0.15, 0.20, 0.25, 0.30, 0.45, 0.60}, 4},
        {{0.05, 0.15, 0.30, 0.35, 0.40, 0.45}, 3},
        {{0.40, 0.45, 0.50, 0.55, 0.60, 0.65}, 0},
        {{0.05, 0.15, 0.25, 0.35, 0.45, 0.55}, 3},
        {{0.15, 0.20, 0.35, 0.40, 0.45, 0.50}, 2},
        {{0.05, 0.10, 0.15, 0.20, 0.25, 0.40}, 5},
        {{0.06, 0.07, 0.08, 0.09, 0.11, 0.12}, 0},
        {{0.10, 0.14, 0.21, 0.30, 0.46, 0.58}, 4},
        {{0.16, 0.30, 0.50, 0.70, 0.89, 0.95}, 2},
        {{0.55, 0.91, 0.99, 1.00, 1.00, 1.00}, 0},
        {{0.05, 0.05, 0.05, 0.80, 0.80, 0.80}, 3},
    }};
    const std::vector<double> activity{0.00, 0.15, 0.30, 0.45, 0.60, 0.75};

    std::vector<Scenario> out;
    out.reserve(table.size());
    for (std::size_t k = 0; k < table.size(); ++k) {
        Scenario s;
        s.label = std::to_string(k + 1);
        s.grid = default_grid();
        s.p1.assign(table[k].p1.begin(), table[k].p1.end());
        s.activity = activity;
        if (table[k].mtd > 0) {
            s.mtd_index = static_cast<std::size_t>(table[k].mtd - 1);
        }
        out.push_back(std::move(s));
    }
    return out;
}

nlohmann::json scenario_to_json(const Scenario& s)
{
    nlohmann::json j;
    j["label"] = s.label;
    j["doses"] = std::vector<double>(s.grid.values().begin(), s.grid.values().end());
    j["p1"] = s.p1;
    j["activity"] = s.activity;
    j["mtd_index"] = s.mtd_index ? nlohmann::json(*s.mtd_index + 1) : nlohmann::json(nullptr);
    return j;
}

Scenario scenario_from_json(const nlohmann::json& j)
{
    Scenario s;
    s.label = j.at("label").get<std::string>();
    s.grid = DoseGrid(j.at("doses").get<std::vector<double>>());
    s.p1 = j.at("p1").get<std::vector<double>>();
    if (j.contains("activity")) {
        s.activity = j.at("activity").get<std::vector<double>>();
    } else {
        s.activity.assign(s.p1.size(), 0.0);
    }
    if (j.contains("mtd_index") && !j.at("mtd_index").is_null()) {
        const int m = j.at("mtd_index").get<int>();
        if (m < 1) {
            throw std::invalid_argument("scenario '" + s.label + "': mtd_index is 1-based");
        }
        s.mtd_index = static_cast<std::size_t>(m - 1);
    }
    s.validate();
    return s;
}

nlohmann::json scenarios_to_json(std::span<const Scenario> list)
{
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : list) {
        arr.push_back(scenario_to_json(s));
    }
    return nlohmann::json{{"scenarios", arr}};
}

std::vector<Scenario> scenarios_from_json(const nlohmann::json& j)
{
    std::vector<Scenario> out;
    if (j.is_object() && j.contains("scenarios")) {
        for (const auto& item : j.at("scenarios")) {
            out.push_back(scenario_from_json(item));
        }
    } else if (j.is_array()) {
        for (const auto& item : j) {
            out.push_back(scenario_from_json(item));
        }
    } else {
        out.push_back(scenario_from_json(j));
    }
    return out;
}

std::vector<Scenario> load_scenarios(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open scenario file " + path.string());
    }
    return scenarios_from_json(nlohmann::json::parse(in));
}

void save_scenarios(const std::filesystem::path& path, std::span<const Scenario> list)
{
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write scenario file " + path.string());
    }
    out << scenarios_to_json(list).dump(2) << '\n';
}

namespace {
int parse_int(std::string_view s)
{
    int value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw std::invalid_argument("bad scenario selector '" + std::string(s) + "'");
    }
    return value;
}
} // namespace

std::vector<Scenario> select_scenarios(const std::string& selector)
{
    if (std::filesystem::exists(selector) && std::filesystem::is_regular_file(selector)) {
        return load_scenarios(selector);
    }
    auto all = builtin_scenarios();
    if (selector.empty() || selector == "all") {
        return all;
    }
    std::vector<Scenario> out;
    std::string_view rest = selector;
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        std::string_view item = rest.substr(0, comma);
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
        int lo = 0;
        int hi = 0;
        if (const auto dash = item.find('-'); dash != std::string_view::npos) {
            lo = parse_int(item.substr(0, dash));
            hi = parse_int(item.substr(dash + 1));
        } else {
            lo = hi = parse_int(item);
        }
        if (lo < 1 || hi > static_cast<int>(all.size()) || lo > hi) {
            throw std::invalid_argument("scenario selector out of range: " + std::string(item));
        }
        for (int k = lo; k <= hi; ++k) {
            out.push_back(all[static_cast<std::size_t>(k - 1)]);
        }
    }
    return out;
}

} // namespace backfill
