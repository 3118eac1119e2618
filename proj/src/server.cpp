#include "backfill/server.hpp"

#include <httplib.h>

namespace backfill {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body)
{
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message)
{
    send_json(res, status, json{{"error", code}, {"message", message}});
}

json parse_body(const httplib::Request& req)
{
    if (req.body.empty()) {
        return json::object();
    }
    try {
        return json::parse(req.body);
    } catch (const json::parse_error& ex) {
        throw ConductError(400, "bad-json", ex.what());
    }
}

template <class F>
httplib::Server::Handler guarded(F f)
{
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const ConductError& ex) {
            send_error(res, ex.status(), ex.code(), ex.what());
        } catch (const std::exception& ex) {
            send_error(res, 500, "internal", ex.what());
        }
    };
}

} // namespace

struct ConductServer::Impl {
    httplib::Server http;
};

ConductServer::ConductServer(ConductService& service, std::optional<std::string> token)
    : impl_(std::make_unique<Impl>())
{
    auto& http = impl_->http;
    if (token && !token->empty()) {
        const std::string expected = "Bearer " + *token;
        http.set_pre_routing_handler([expected](const httplib::Request& req, httplib::Response& res) {
            if (req.get_header_value("Authorization") != expected) {
                send_error(res, 401, "unauthorized", "missing or invalid bearer token");
                return httplib::Server::HandlerResponse::Handled;
            }
            return httplib::Server::HandlerResponse::Unhandled;
        });
    }

    http.Post("/trials", guarded([&service](const httplib::Request& req, httplib::Response& res) {
        send_json(res, 201, service.create_trial(parse_body(req)));
    }));
    http.Post(R"(/trials/([^/]+)/outcomes)", guarded([&service](const httplib::Request& req, httplib::Response& res) {
        send_json(res, 200, service.post_outcomes(req.matches[1], parse_body(req)));
    }));
    http.Get(R"(/trials/([^/]+)/state)", guarded([&service](const httplib::Request& req, httplib::Response& res) {
        send_json(res, 200, service.get_state(req.matches[1]));
    }));
    http.Post(R"(/trials/([^/]+)/whatif)", guarded([&service](const httplib::Request& req, httplib::Response& res) {
        send_json(res, 200, service.post_whatif(req.matches[1], parse_body(req)));
    }));
    http.Get(R"(/trials/([^/]+)/log)", guarded([&service](const httplib::Request& req, httplib::Response& res) {
        res.status = 200;
        res.set_content(service.get_log(req.matches[1]), "application/x-ndjson");
    }));
}

ConductServer::~ConductServer()
{
    stop();
}

int ConductServer::bind(const std::string& host, int port)
{
    if (port == 0) {
        return impl_->http.bind_to_any_port(host);
    }
    return impl_->http.bind_to_port(host, port) ? port : -1;
}

bool ConductServer::listen()
{
    return impl_->http.listen_after_bind();
}

void ConductServer::stop()
{
    if (impl_ && impl_->http.is_running()) {
        impl_->http.stop();
    }
}

} // namespace backfill
