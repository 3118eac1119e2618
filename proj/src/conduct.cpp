#include "backfill/conduct.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "backfill/config.hpp"

namespace backfill {

using nlohmann::json;

namespace {

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

json decide_event(const Decision& d)
{
    std::vector<double> mean_tox;
    for (const auto& s : d.summaries) {
        mean_tox.push_back(s.mean_tox);
    }
    return json{{"type", "decide"},
                {"index", d.index},
                {"week", d.week},
                {"startup", d.startup},
                {"next_dose", dose_level(d.next_dose)},
                {"stopped", d.stop.stopped},
                {"stop_reason", std::string(to_string(d.stop.reason))},
                {"recommends_dose", d.stop.recommends_dose},
                {"mean_tox", mean_tox}};
}

json enroll_event(int cohort, const Enrollment& e, int week, int decision)
{
    return json{{"type", "enroll"},
                {"cohort", cohort},
                {"dose", e.dose + 1},
                {"kind", std::string(to_string(e.kind))},
                {"size", e.size},
                {"week", week},
                {"decision", decision}};
}

CohortKind cohort_kind_from_string(const std::string& s)
{
    if (s == "escalation") {
        return CohortKind::Escalation;
    }
    if (s == "backfill") {
        return CohortKind::Backfill;
    }
    throw ConductError(500, "corrupt-log", "unknown cohort kind '" + s + "'");
}

void replay_mismatch(const json& event, const std::string& what)
{
    throw ConductError(500, "replay-mismatch", "replayed " + event.at("type").get<std::string>() + " event differs in " +
                                                   what + ": " + event.dump());
}

template <class T>
T field(const json& obj, const char* key)
{
    if (!obj.contains(key)) {
        throw ConductError(400, "bad-request", std::string("missing field '") + key + "'");
    }
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConductError(400, "bad-request", std::string("field '") + key + "' has the wrong type");
    }
}

template <class T>
T field_or(const json& obj, const char* key, T fallback)
{
    return obj.contains(key) ? field<T>(obj, key) : fallback;
}

std::uint64_t random_u64()
{
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

} // namespace

bool valid_trial_id(const std::string& id)
{
    if (id.empty() || id.size() > 64) {
        return false;
    }
    return std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
    });
}

ConductSession::ConductSession(std::string id, std::uint64_t seed, DesignConfig design)
{
    design.validate();
    append(json{{"type", "create"}, {"id", std::move(id)}, {"seed", seed}, {"design", to_json(design)}});
    Enrollment first{0, CohortKind::Escalation, std::min(design_.cohort_size, design_.rules.n_max)};
    append(enroll_event(0, first, 0, -1));
}

ConductSession ConductSession::replay(const std::vector<json>& events, bool verify)
{
    if (events.empty() || events.front().value("type", "") != "create") {
        throw ConductError(500, "corrupt-log", "log does not start with a create event");
    }
    ConductSession s;
    for (const auto& e : events) {
        s.fold(e, verify);
        s.events_.push_back(e);
    }
    return s;
}

void ConductSession::append(const json& event)
{
    fold(event, false);
    events_.push_back(event);
}

void ConductSession::fold(const json& e, bool verify)
{
    const std::string type = e.at("type").get<std::string>();
    if (e.contains("key")) {
        keys_.insert(e.at("key").get<std::string>());
    }
    if (type == "create") {
        if (!events_.empty()) {
            throw ConductError(500, "corrupt-log", "create event after the start of the log");
        }
        id_ = e.at("id").get<std::string>();
        seed_ = e.at("seed").get<std::uint64_t>();
        design_ = design_from_json(e.at("design"));
        state_ = TrialState{};
        state_.surpassed.assign(design_.grid.size(), false);
        state_.backfilled.assign(design_.grid.size(), false);
    } else if (type == "enroll") {
        const auto kind = cohort_kind_from_string(e.at("kind").get<std::string>());
        const auto dose = e.at("dose").get<std::size_t>() - 1;
        const int index = enroll_cohort(state_, dose, kind, e.at("size").get<int>(), e.at("week").get<int>(),
                                        e.at("decision").get<int>());
        if (index != e.at("cohort").get<int>()) {
            throw ConductError(500, "corrupt-log", "enroll event cohort index out of sequence");
        }
        if (kind == CohortKind::Backfill) {
            state_.backfilled[dose] = true;
        }
    } else if (type == "observe" || type == "amend") {
        record_outcome(state_, design_,
                       CycleOutcome{e.at("patient").get<int>(), e.at("cycle").get<int>(), e.at("dlt").get<bool>()},
                       type == "amend");
    } else if (type == "activity") {
        state_.cohorts.at(e.at("cohort").get<std::size_t>()).activity = e.at("signal").get<bool>();
    } else if (type == "decide") {
        const int week = e.at("week").get<int>();
        if (e.at("index").get<int>() != state_.decisions) {
            throw ConductError(500, "corrupt-log", "decide event index out of sequence");
        }
        const auto next = dose_index(e.at("next_dose"));
        if (verify) {
            const json recomputed = decide_event(decision_at(week));
            for (const char* key : {"next_dose", "stopped", "stop_reason", "recommends_dose", "startup", "mean_tox"}) {
                if (recomputed.at(key) != e.at(key)) {
                    replay_mismatch(e, key);
                }
            }
        }
        state_.clock_weeks = week;
        state_.decisions += 1;
        state_.model_phase_started = state_.model_phase_started || !e.at("startup").get<bool>();
        last_decision_week_ = week;
        last_recommends_dose_ = e.at("recommends_dose").get<bool>();
        last_reason_ = stop_reason_from_string(e.at("stop_reason").get<std::string>());
        if (e.at("stopped").get<bool>() || !next) {
            state_.stopped = true;
        } else {
            for (std::size_t j = 0; j < *next; ++j) {
                state_.surpassed[j] = true;
            }
            state_.current_dose = *next;
        }
    } else if (type == "final") {
        if (verify) {
            const json recomputed = finalize_event();
            for (const char* key : {"week", "recommendation", "stop_reason"}) {
                if (recomputed.at(key) != e.at(key)) {
                    replay_mismatch(e, key);
                }
            }
        }
        FinalOutcome f;
        f.week = e.at("week").get<int>();
        f.recommendation = dose_index(e.at("recommendation"));
        f.reason = stop_reason_from_string(e.at("stop_reason").get<std::string>());
        state_.clock_weeks = f.week;
        final_ = f;
    } else {
        throw ConductError(500, "corrupt-log", "unknown event type '" + type + "'");
    }
}

Decision ConductSession::decision_at(int week) const
{
    TrialState s = state_;
    s.clock_weeks = week;
    return decide(design_, s, decision_seed(seed_, state_.decisions));
}

Decision ConductSession::preview() const
{
    return decision_at(state_.stopped ? state_.clock_weeks : state_.clock_weeks + design_.cycle_weeks);
}

json ConductSession::finalize_event() const
{
    int end_week = state_.clock_weeks;
    for (const auto& p : state_.patients) {
        end_week = std::max(end_week, p.enroll_week + design_.followup_cycles * design_.cycle_weeks);
    }
    std::optional<std::size_t> recommendation;
    StopReason reason = last_reason_;
    if (last_recommends_dose_) {
        TrialState s = state_;
        s.clock_weeks = end_week;
        const bool fresh = end_week > last_decision_week_;
        const int index = fresh ? state_.decisions : state_.decisions - 1;
        const Decision fit = decide(design_, s, decision_seed(seed_, index));
        recommendation = final_recommendation(design_, s, fit);
        if (!recommendation) {
            reason = StopReason::HardSafety;
        }
    }
    return json{{"type", "final"},
                {"week", end_week},
                {"recommendation", dose_level(recommendation)},
                {"stop_reason", std::string(to_string(reason))}};
}

namespace {

bool activity_due(const DesignConfig& design, const CohortRecord& c, int week)
{
    return !c.activity && week - c.enroll_week >= design.cycle_weeks;
}

bool decision_due(const DesignConfig& design, const TrialState& state)
{
    if (state.stopped || !ready_for_decision(design, state)) {
        return false;
    }
    if (design.backfill != BackfillPolicy::Partial) {
        return true;
    }
    const int next_week = state.clock_weeks + design.cycle_weeks;
    return std::none_of(state.cohorts.begin(), state.cohorts.end(),
                        [&](const CohortRecord& c) { return activity_due(design, c, next_week); });
}

} // namespace

std::vector<json> ConductSession::next_automatic_events() const
{
    std::vector<json> out;
    if (final_) {
        return out;
    }
    ConductSession copy = *this;
    const int budget = design_.rules.n_max + 2;
    for (int k = 0; k < budget && decision_due(copy.design_, copy.state_); ++k) {
        const int week = copy.state_.clock_weeks + design_.cycle_weeks;
        const Decision d = copy.decision_at(week);
        out.push_back(decide_event(d));
        copy.append(out.back());
        if (copy.state_.stopped) {
            break;
        }
        for (const auto& e : d.enrollments) {
            out.push_back(enroll_event(static_cast<int>(copy.state_.cohorts.size()), e, week, d.index));
            copy.append(out.back());
        }
    }
    if (copy.state_.stopped && follow_up_complete(copy.design_, copy.state_)) {
        out.push_back(copy.finalize_event());
    }
    return out;
}

std::vector<json> ConductSession::plan_outcomes(const json& body) const
{
    if (!body.is_object()) {
        throw ConductError(400, "bad-request", "body must be a JSON object");
    }
    if (final_) {
        throw ConductError(409, "finished", "trial " + id_ + " has finished");
    }
    const json observations = body.value("observations", json::array());
    const json activity = body.value("activity", json::array());
    if (!observations.is_array() || !activity.is_array()) {
        throw ConductError(400, "bad-request", "observations and activity must be arrays");
    }
    if (observations.empty() && activity.empty()) {
        throw ConductError(400, "bad-request", "no outcomes submitted");
    }
    const std::optional<std::string> key =
        body.contains("idempotency_key") ? std::optional(field<std::string>(body, "idempotency_key")) : std::nullopt;

    // Outcomes may only cover cycles that end by the next decision; once the
    // trial has stopped, any remaining follow-up may be reported.
    const int horizon = state_.stopped ? std::numeric_limits<int>::max() : state_.clock_weeks + design_.cycle_weeks;

    struct Entry {
        CycleOutcome outcome;
        bool amend = false;
    };
    std::vector<Entry> entries;
    for (const auto& o : observations) {
        if (!o.is_object()) {
            throw ConductError(400, "bad-request", "each observation must be an object");
        }
        entries.push_back(Entry{CycleOutcome{field<int>(o, "patient"), field<int>(o, "cycle"), field<bool>(o, "dlt")},
                                field_or<bool>(o, "amend", false)});
    }
    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        return a.outcome.patient != b.outcome.patient ? a.outcome.patient < b.outcome.patient
                                                      : a.outcome.cycle < b.outcome.cycle;
    });

    TrialState scratch = state_;
    std::vector<json> events;
    for (const auto& [o, amend] : entries) {
        if (o.patient < 0 || o.patient >= scratch.n_enrolled()) {
            throw ConductError(400, "unknown-patient", "unknown patient " + std::to_string(o.patient));
        }
        const auto& p = scratch.patients[static_cast<std::size_t>(o.patient)];
        if (o.cycle >= 1 && p.enroll_week + o.cycle * design_.cycle_weeks > horizon) {
            throw ConductError(400, "cycle-not-ended",
                               "cycle " + std::to_string(o.cycle) + " of patient " + std::to_string(o.patient) +
                                   " ends after the next decision (week " + std::to_string(horizon) + ")");
        }
        try {
            record_outcome(scratch, design_, o, amend);
        } catch (const DuplicateOutcome& ex) {
            throw ConductError(409, "duplicate", ex.what());
        } catch (const OutcomeError& ex) {
            throw ConductError(400, "invalid-outcome", ex.what());
        }
        json ev{{"type", amend ? "amend" : "observe"}, {"patient", o.patient}, {"cycle", o.cycle}, {"dlt", o.dlt}};
        if (key) {
            ev["key"] = *key;
        }
        events.push_back(std::move(ev));
    }
    for (const auto& a : activity) {
        if (!a.is_object()) {
            throw ConductError(400, "bad-request", "each activity entry must be an object");
        }
        const int cohort = field<int>(a, "cohort");
        const bool signal = field<bool>(a, "signal");
        if (cohort < 0 || cohort >= static_cast<int>(scratch.cohorts.size())) {
            throw ConductError(400, "unknown-cohort", "unknown cohort " + std::to_string(cohort));
        }
        auto& c = scratch.cohorts[static_cast<std::size_t>(cohort)];
        if (c.enroll_week + design_.cycle_weeks > horizon) {
            throw ConductError(400, "cycle-not-ended",
                               "first cycle of cohort " + std::to_string(cohort) + " ends after the next decision");
        }
        if (c.activity) {
            throw ConductError(409, "duplicate", "activity of cohort " + std::to_string(cohort) + " already recorded");
        }
        c.activity = signal;
        json ev{{"type", "activity"}, {"cohort", cohort}, {"signal", signal}};
        if (key) {
            ev["key"] = *key;
        }
        events.push_back(std::move(ev));
    }
    return events;
}

json ConductSession::pending() const
{
    const int week = state_.stopped ? std::numeric_limits<int>::max() : state_.clock_weeks + design_.cycle_weeks;
    json cycles = json::array();
    for (std::size_t i = 0; i < state_.patients.size(); ++i) {
        const auto& p = state_.patients[i];
        if (p.dlt_cycle) {
            continue;
        }
        const int due = state_.stopped ? design_.followup_cycles : cycles_elapsed(design_, p, week);
        for (int c = p.cycles_observed + 1; c <= due; ++c) {
            cycles.push_back({{"patient", i}, {"cycle", c}});
        }
    }
    json activity = json::array();
    for (std::size_t k = 0; k < state_.cohorts.size(); ++k) {
        if (activity_due(design_, state_.cohorts[k], week)) {
            activity.push_back(k);
        }
    }
    return json{{"cycles", cycles},
                {"activity", activity},
                {"activity_required", design_.backfill == BackfillPolicy::Partial}};
}

json ConductSession::snapshot() const
{
    const Decision d = preview();
    Xoshiro256 rng(decision_seed(seed_, state_.decisions));
    const PosteriorDraws draws = fit(state_.observations(design_), design_.prior, design_.sampler, rng);
    const double probs[] = {0.025, 0.5, 0.975};
    const auto bands = dose_quantiles(draws, design_.grid, probs);
    const auto tallies = state_.tallies(design_.grid.size());

    json doses = json::array();
    for (std::size_t j = 0; j < design_.grid.size(); ++j) {
        const auto& s = d.summaries[j];
        doses.push_back({{"dose", j + 1},
                         {"value", design_.grid[j]},
                         {"mean_tox", s.mean_tox},
                         {"prob_above", s.prob_above.front()},
                         {"prob_at_or_below", s.prob_at_or_below.front()},
                         {"q025", bands[j][0]},
                         {"q50", bands[j][1]},
                         {"q975", bands[j][2]},
                         {"patients", tallies[j].patients},
                         {"dlts", tallies[j].dlts},
                         {"excluded", d.first_excluded && j >= *d.first_excluded}});
    }

    json curve = json::array();
    const std::size_t n_curve = std::min<std::size_t>(100, draws.draws.size());
    for (std::size_t k = 0; k < n_curve; ++k) {
        const auto& b = draws.draws[k * draws.draws.size() / n_curve];
        curve.push_back({b.intercept, b.slope});
    }

    json patients = json::array();
    for (std::size_t i = 0; i < state_.patients.size(); ++i) {
        const auto& p = state_.patients[i];
        patients.push_back({{"patient", i},
                            {"dose", p.dose + 1},
                            {"cohort", p.cohort},
                            {"enroll_week", p.enroll_week},
                            {"cycles_observed", p.cycles_observed},
                            {"dlt_cycle", p.dlt_cycle ? json(*p.dlt_cycle) : json(nullptr)}});
    }
    json cohorts = json::array();
    for (std::size_t k = 0; k < state_.cohorts.size(); ++k) {
        const auto& c = state_.cohorts[k];
        cohorts.push_back({{"cohort", k},
                           {"dose", c.dose + 1},
                           {"kind", std::string(to_string(c.kind))},
                           {"enroll_week", c.enroll_week},
                           {"decision", c.decision},
                           {"activity", c.activity ? json(*c.activity) : json(nullptr)}});
    }
    json ledger = json::array();
    for (std::size_t j = 0; j < design_.grid.size(); ++j) {
        ledger.push_back({{"dose", j + 1},
                          {"surpassed", static_cast<bool>(state_.surpassed[j])},
                          {"backfilled", static_cast<bool>(state_.backfilled[j])},
                          {"backfill_cohorts", tallies[j].backfill_cohorts},
                          {"escalation_cohorts", tallies[j].escalation_cohorts}});
    }
    json decisions = json::array();
    for (const auto& e : events_) {
        if (e.at("type") == "decide") {
            decisions.push_back(e);
        }
    }
    json final_json = nullptr;
    if (final_) {
        final_json = {{"week", final_->week},
                      {"recommendation", dose_level(final_->recommendation)},
                      {"stop_reason", std::string(to_string(final_->reason))}};
    }
    return json{{"id", id_},
                {"seed", seed_},
                {"week", state_.clock_weeks},
                {"next_decision_week", state_.stopped ? json(nullptr) : json(state_.clock_weeks + design_.cycle_weeks)},
                {"stopped", state_.stopped},
                {"final", final_json},
                {"target", design_.target()},
                {"n_enrolled", state_.n_enrolled()},
                {"n_dlts", state_.n_dlts()},
                {"doses", doses},
                {"curve_samples", curve},
                {"preview", to_json(d)},
                {"patients", patients},
                {"cohorts", cohorts},
                {"backfill_ledger", ledger},
                {"pending", pending()},
                {"decisions", decisions},
                {"events", events_}};
}

json ConductSession::what_if(const json& body) const
{
    if (!body.is_object() || !body.contains("observations") || !body.at("observations").is_array()) {
        throw ConductError(400, "bad-request", "body must contain an observations array");
    }
    std::vector<CycleOutcome> outcomes;
    for (const auto& o : body.at("observations")) {
        if (!o.is_object()) {
            throw ConductError(400, "bad-request", "each observation must be an object");
        }
        outcomes.push_back(CycleOutcome{field<int>(o, "patient"), field<int>(o, "cycle"), field<bool>(o, "dlt")});
    }
    TrialState s = state_;
    if (!s.stopped) {
        s.clock_weeks += design_.cycle_weeks;
    }
    try {
        const auto result = backfill::what_if(design_, s, outcomes, decision_seed(seed_, state_.decisions));
        return json{{"hypothetical", true}, {"decision", to_json(result.decision)}};
    } catch (const OutcomeError& ex) {
        throw ConductError(400, "invalid-outcome", ex.what());
    }
}

namespace {

json status_of(const ConductSession& session, json decisions, bool replayed)
{
    const auto& state = session.state();
    json out{{"replayed", replayed},
             {"decisions", std::move(decisions)},
             {"week", state.clock_weeks},
             {"stopped", state.stopped},
             {"stop_reason", std::string(to_string(state.stopped ? session.last_stop_reason() : StopReason::None))},
             {"pending", session.pending()},
             {"final", nullptr}};
    if (const auto& f = session.final_outcome()) {
        out["final"] = {{"week", f->week},
                        {"recommendation", dose_level(f->recommendation)},
                        {"stop_reason", std::string(to_string(f->reason))}};
    }
    if (state.stopped) {
        out["recommendation"] = session.final_outcome() ? dose_level(session.final_outcome()->recommendation) : json(nullptr);
        return out;
    }
    const json preview = to_json(session.preview());
    out["recommendation"] = preview.at("next_dose");
    out["rules"] = preview.at("rules");
    out["mtd_cv"] = preview.at("mtd_cv");
    return out;
}

} // namespace

ConductService::ConductService(std::filesystem::path data_dir) : dir_(std::move(data_dir))
{
    std::filesystem::create_directories(dir_ / "trials");
}

std::filesystem::path ConductService::log_path(const std::string& id) const
{
    return dir_ / "trials" / (id + ".jsonl");
}

void ConductService::write_events(const std::string& id, const std::vector<json>& events) const
{
    std::ofstream f(log_path(id), std::ios::app);
    for (const auto& e : events) {
        f << e.dump() << '\n';
    }
    f.flush();
    if (!f) {
        throw ConductError(500, "io", "failed to append to the log of trial " + id);
    }
}

std::shared_ptr<ConductService::Entry> ConductService::find(const std::string& id)
{
    if (!valid_trial_id(id)) {
        throw ConductError(404, "not-found", "unknown trial '" + id + "'");
    }
    std::lock_guard lock(map_mutex_);
    if (auto it = sessions_.find(id); it != sessions_.end()) {
        return it->second;
    }
    std::ifstream f(log_path(id));
    if (!f) {
        throw ConductError(404, "not-found", "unknown trial '" + id + "'");
    }
    std::vector<json> events;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty()) {
            try {
                events.push_back(json::parse(line));
            } catch (const json::exception& ex) {
                throw ConductError(500, "corrupt-log", "unreadable log line for trial " + id + ": " + ex.what());
            }
        }
    }
    auto entry = std::make_shared<Entry>();
    entry->session = std::make_unique<ConductSession>(ConductSession::replay(events, true));
    sessions_.emplace(id, entry);
    return entry;
}

json ConductService::create_trial(const json& body)
{
    if (!body.is_object()) {
        throw ConductError(400, "bad-request", "body must be a JSON object");
    }
    const std::string id = body.contains("id") ? field<std::string>(body, "id") : [] {
        std::ostringstream s;
        s << std::hex << random_u64();
        return s.str();
    }();
    if (!valid_trial_id(id)) {
        throw ConductError(400, "invalid-id", "trial id must be 1-64 characters from [A-Za-z0-9_-]");
    }
    const std::uint64_t seed = body.contains("seed") ? field<std::uint64_t>(body, "seed") : random_u64();
    DesignConfig design;
    try {
        design = design_from_json(body.value("design", json::object()));
        design.validate();
    } catch (const ConfigError& ex) {
        throw ConductError(400, "invalid-design", ex.what());
    }

    auto entry = std::make_shared<Entry>();
    entry->session = std::make_unique<ConductSession>(id, seed, design);
    {
        std::lock_guard lock(map_mutex_);
        if (sessions_.count(id) || std::filesystem::exists(log_path(id))) {
            throw ConductError(409, "conflict", "trial '" + id + "' already exists");
        }
        write_events(id, entry->session->log());
        sessions_.emplace(id, entry);
    }
    std::shared_lock lock(entry->mutex);
    return json{{"id", id}, {"seed", seed}, {"state", entry->session->snapshot()}};
}

json ConductService::post_outcomes(const std::string& id, const json& body)
{
    auto entry = find(id);
    std::unique_lock lock(entry->mutex);
    auto& session = *entry->session;
    if (body.is_object() && body.contains("idempotency_key") && body.at("idempotency_key").is_string() &&
        session.seen_key(body.at("idempotency_key").get<std::string>())) {
        return status_of(session, json::array(), true);
    }

    std::vector<json> events = session.plan_outcomes(body);
    ConductSession staged = session;
    for (const auto& e : events) {
        staged.append(e);
    }
    const auto automatic = staged.next_automatic_events();
    events.insert(events.end(), automatic.begin(), automatic.end());

    write_events(id, events);
    json decisions = json::array();
    for (const auto& e : events) {
        session.append(e);
        if (e.at("type") == "decide") {
            decisions.push_back(e);
        }
    }

    return status_of(session, decisions, false);
}

json ConductService::get_state(const std::string& id)
{
    auto entry = find(id);
    std::shared_lock lock(entry->mutex);
    return entry->session->snapshot();
}

json ConductService::post_whatif(const std::string& id, const json& body)
{
    auto entry = find(id);
    ConductSession snapshot = [&] {
        std::shared_lock lock(entry->mutex);
        return *entry->session;
    }();
    return snapshot.what_if(body);
}

std::string ConductService::get_log(const std::string& id)
{
    auto entry = find(id);
    std::shared_lock lock(entry->mutex);
    std::string out;
    for (const auto& e : entry->session->log()) {
        out += e.dump();
        out += '\n';
    }
    return out;
}

} // namespace backfill
