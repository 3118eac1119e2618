#pragma once

#include <memory>
#include <optional>
#include <string>

#include "backfill/conduct.hpp"

namespace backfill {

/// HTTP front end for a ConductService:
///   POST /trials, POST /trials/{id}/outcomes, GET /trials/{id}/state,
///   POST /trials/{id}/whatif, GET /trials/{id}/log.
/// With a token set, every request needs "Authorization: Bearer <token>".
class ConductServer {
public:
    ConductServer(ConductService& service, std::optional<std::string> token);
    ~ConductServer();
    ConductServer(const ConductServer&) = delete;
    ConductServer& operator=(const ConductServer&) = delete;

    /// Binds without listening. Port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    bool listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace backfill
