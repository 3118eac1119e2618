#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "backfill/trial.hpp"

namespace backfill {

// Live trial conduct. Each trial is an append-only JSON-lines event log:
//   create   {id, seed, design}
//   enroll   {cohort, dose, kind, size, week, decision}
//   observe  {patient, cycle, dlt, key?}
//   amend    {patient, cycle, dlt, key?}
//   activity {cohort, signal, key?}
//   decide   {index, week, startup, next_dose, stop_reason, stopped, recommends_dose, mean_tox}
//   final    {week, recommendation, stop_reason}
// Doses are 1-based; patients, cohorts and decisions are 0-based.

/// Error with an HTTP-style status code.
class ConductError : public std::runtime_error {
public:
    ConductError(int status, std::string code, const std::string& message)
        : std::runtime_error(message), status_(status), code_(std::move(code))
    {
    }
    int status() const noexcept { return status_; }
    const std::string& code() const noexcept { return code_; }

private:
    int status_;
    std::string code_;
};

struct FinalOutcome {
    int week = 0;
    std::optional<std::size_t> recommendation;
    StopReason reason = StopReason::None;
};

class ConductSession {
public:
    /// Fresh session whose log holds the create and first enroll events.
    ConductSession(std::string id, std::uint64_t seed, DesignConfig design);

    /// Rebuilds a session from its log. With `verify`, every decide and final
    /// event is recomputed and must match the logged values.
    static ConductSession replay(const std::vector<nlohmann::json>& events, bool verify = true);

    const std::string& id() const noexcept { return id_; }
    std::uint64_t seed() const noexcept { return seed_; }
    const DesignConfig& design() const noexcept { return design_; }
    const TrialState& state() const noexcept { return state_; }
    const std::vector<nlohmann::json>& log() const noexcept { return events_; }
    const std::optional<FinalOutcome>& final_outcome() const noexcept { return final_; }
    bool seen_key(const std::string& key) const { return keys_.count(key) > 0; }
    /// Reason logged by the latest decide event.
    StopReason last_stop_reason() const noexcept { return last_reason_; }

    /// Validates a batch of outcomes against the current state and returns the
    /// events it would append. Throws ConductError on any invalid entry.
    std::vector<nlohmann::json> plan_outcomes(const nlohmann::json& body) const;

    /// Appends events, folding each into the state.
    void append(const nlohmann::json& event);

    /// Events produced by making every decision that is due, and finalizing a
    /// stopped trial once follow-up is complete. Call after appending outcomes.
    std::vector<nlohmann::json> next_automatic_events() const;

    /// Outcomes still needed before the next decision: (patient, cycle) pairs
    /// and cohort indices awaiting an activity signal.
    nlohmann::json pending() const;

    /// Read-only snapshot: posterior summaries, quantile bands, curve samples,
    /// rule statuses, CV, backfill ledger and event history.
    nlohmann::json snapshot() const;

    /// Decision for hypothetical outcomes; never logged.
    nlohmann::json what_if(const nlohmann::json& body) const;

    /// Decision the next decide event would make on the current data.
    Decision preview() const;

private:
    ConductSession() = default;
    void fold(const nlohmann::json& event, bool verify);
    Decision decision_at(int week) const;
    nlohmann::json finalize_event() const;

    std::string id_;
    std::uint64_t seed_ = 0;
    DesignConfig design_;
    TrialState state_;
    std::vector<nlohmann::json> events_;
    std::set<std::string> keys_;
    std::optional<FinalOutcome> final_;
    int last_decision_week_ = 0;
    bool last_recommends_dose_ = true;
    StopReason last_reason_ = StopReason::None;
};

/// Sessions backed by `<data_dir>/trials/<id>.jsonl`. Writers to one trial
/// are serialized; reads share the lock. Unknown ids are loaded from disk on
/// first use, so a restarted service resumes every trial.
class ConductService {
public:
    explicit ConductService(std::filesystem::path data_dir);

    /// Body: {id?, seed?, design?}. Returns {id, seed, state}.
    nlohmann::json create_trial(const nlohmann::json& body);
    /// Body: {observations: [{patient, cycle, dlt, amend?}], activity: [{cohort, signal}], idempotency_key?}.
    nlohmann::json post_outcomes(const std::string& id, const nlohmann::json& body);
    nlohmann::json get_state(const std::string& id);
    nlohmann::json post_whatif(const std::string& id, const nlohmann::json& body);
    /// Raw JSON-lines log.
    std::string get_log(const std::string& id);

    const std::filesystem::path& data_dir() const noexcept { return dir_; }

private:
    struct Entry {
        std::shared_mutex mutex;
        std::unique_ptr<ConductSession> session;
    };

    std::shared_ptr<Entry> find(const std::string& id);
    std::filesystem::path log_path(const std::string& id) const;
    void write_events(const std::string& id, const std::vector<nlohmann::json>& events) const;

    std::filesystem::path dir_;
    std::mutex map_mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

/// Trial ids: 1-64 characters from [A-Za-z0-9_-].
bool valid_trial_id(const std::string& id);

} // namespace backfill
