#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "clarichain/error.hpp"
#include "clarichain/session.hpp"
#include "clarichain/variant.hpp"

namespace clarichain {

inline int http_status_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::empty_query:
        case ErrorKind::empty_answer:
        case ErrorKind::invalid_argument:
        case ErrorKind::parse:
            return 400;
        case ErrorKind::unknown_session:
            return 404;
        case ErrorKind::pending_question:
        case ErrorKind::no_pending_question:
        case ErrorKind::round_limit:
        case ErrorKind::session_closed:
        case ErrorKind::session_busy:
            return 409;
        default:
            return is_backend_failure(kind) ? 502 : 500;
    }
}

inline nlohmann::json error_body(const Error& e) {
    return {{"error", {{"kind", e.kind_name()}, {"message", e.what()}}}};
}

inline nlohmann::json to_json(const RoundOutput& out) {
    return {{"aspect", aspect_name(out.aspect)}, {"question", out.question}, {"options", out.options.options}};
}

// In-memory session table with an idle TTL. Each entry carries its own mutex so
// operations on one session are serialized while sessions proceed independently.
class SessionManager {
public:
    using Clock = std::chrono::steady_clock;

    struct Entry {
        explicit Entry(Session s) : session(std::move(s)) {}
        std::mutex op;
        Session session;
        Clock::time_point last_access;
    };

    explicit SessionManager(std::chrono::seconds ttl, std::function<Clock::time_point()> now = Clock::now)
        : ttl_(ttl), now_(std::move(now)) {}

    std::shared_ptr<Entry> add(Session s) {
        auto e = std::make_shared<Entry>(std::move(s));
        std::lock_guard lock(mutex_);
        sweep_locked();
        e->last_access = now_();
        sessions_.emplace(e->session.id(), e);
        return e;
    }

    std::shared_ptr<Entry> find(const std::string& id) {
        std::lock_guard lock(mutex_);
        sweep_locked();
        auto it = sessions_.find(id);
        if (it == sessions_.end()) throw Error(ErrorKind::unknown_session, "no session " + id);
        it->second->last_access = now_();
        return it->second;
    }

    void erase(const std::string& id) {
        std::lock_guard lock(mutex_);
        sessions_.erase(id);
    }

    std::size_t size() {
        std::lock_guard lock(mutex_);
        sweep_locked();
        return sessions_.size();
    }

private:
    void sweep_locked() {
        const auto now = now_();
        for (auto it = sessions_.begin(); it != sessions_.end();) {
            if (now - it->second->last_access > ttl_) {
                it = sessions_.erase(it);
            } else {
                ++it;
            }
        }
    }

    std::chrono::seconds ttl_;
    std::function<Clock::time_point()> now_;
    std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

struct ServiceConfig {
    SessionConfig session;
    std::chrono::seconds session_ttl{30 * 60};
    std::optional<std::filesystem::path> static_dir;  // chat client assets, mounted at "/"
};

// JSON-over-HTTP adapter around Session:
//   POST   /v1/sessions                 {query, variant?}      -> first round
//   POST   /v1/sessions/{id}/answers    {answer, stop?}        -> extension, APIs, next round
//   GET    /v1/sessions/{id}/transcript                        -> transcript
//   DELETE /v1/sessions/{id}                                   -> final transcript
class Service {
public:
    Service(Chain chain, ServiceConfig cfg)
        : chain_(std::move(chain)), cfg_(std::move(cfg)), sessions_(cfg_.session_ttl) {
        cfg_.session.validate();
        if (cfg_.static_dir) server_.set_mount_point("/", cfg_.static_dir->string());

        server_.Post("/v1/sessions", [this](const httplib::Request& req, httplib::Response& res) {
            respond(res, [&] { return create_session(req.body); });
        });
        server_.Post(R"(/v1/sessions/([^/]+)/answers)",
                     [this](const httplib::Request& req, httplib::Response& res) {
                         respond(res, [&] { return submit_answer(req.matches[1], req.body); });
                     });
        server_.Get(R"(/v1/sessions/([^/]+)/transcript)",
                    [this](const httplib::Request& req, httplib::Response& res) {
                        respond(res, [&] { return transcript(req.matches[1]); });
                    });
        server_.Delete(R"(/v1/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            respond(res, [&] { return end_session(req.matches[1]); });
        });
    }

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    httplib::Server& server() noexcept { return server_; }
    SessionManager& sessions() noexcept { return sessions_; }

    bool listen(const std::string& host, int port) { return server_.listen(host, port); }
    void stop() { server_.stop(); }

    using Reply = std::pair<int, nlohmann::json>;

    Reply create_session(const std::string& body) {
        auto j = parse_body(body);
        if (!j.contains("query") || !j["query"].is_string()) {
            throw Error(ErrorKind::empty_query, "body needs a string field 'query'");
        }
        Variant variant = Variant::full;
        if (j.contains("variant") && !j["variant"].is_null()) {
            variant = parse_variant(j["variant"].get<std::string>());
        }
        auto entry = sessions_.add(Session(chain_, j["query"].get<std::string>(), variant, cfg_.session));
        std::lock_guard lock(entry->op);
        try {
            RoundOutput out = entry->session.next_question();
            nlohmann::json reply = to_json(out);
            reply["session_id"] = entry->session.id();
            reply["round"] = entry->session.round();
            return {200, reply};
        } catch (const Error&) {
            sessions_.erase(entry->session.id());
            throw;
        }
    }

    Reply submit_answer(const std::string& id, const std::string& body) {
        auto j = parse_body(body);
        if (!j.contains("answer") || !j["answer"].is_string()) {
            throw Error(ErrorKind::empty_answer, "body needs a string field 'answer'");
        }
        const bool stop = j.contains("stop") && j["stop"].is_boolean() && j["stop"].get<bool>();
        auto entry = sessions_.find(id);
        std::unique_lock lock(entry->op, std::try_to_lock);
        if (!lock.owns_lock()) throw Error(ErrorKind::session_busy, "another request is in progress");
        Session& s = entry->session;

        AnswerOutcome outcome = s.submit_answer(j["answer"].get<std::string>());
        nlohmann::json reply = {{"round", s.round()},
                                {"extended_query", outcome.extended_query},
                                {"recommendations", outcome.recommendations.apis},
                                {"next", nullptr}};
        if (!stop && s.round() < s.config().max_rounds) {
            try {
                reply["next"] = to_json(s.next_question());
            } catch (const Error& e) {
                reply["next_error"] = error_body(e)["error"];
            }
        }
        return {200, reply};
    }

    Reply transcript(const std::string& id) {
        auto entry = sessions_.find(id);
        std::lock_guard lock(entry->op);
        return {200, to_json(entry->session.transcript())};
    }

    Reply end_session(const std::string& id) {
        auto entry = sessions_.find(id);
        std::lock_guard lock(entry->op);
        auto t = entry->session.end();
        sessions_.erase(id);
        return {200, to_json(t)};
    }

private:
    static nlohmann::json parse_body(const std::string& body) {
        try {
            auto j = nlohmann::json::parse(body);
            if (!j.is_object()) throw Error(ErrorKind::parse, "request body must be a JSON object");
            return j;
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::parse, std::string("request body is not JSON: ") + e.what());
        }
    }

    template <typename F>
    static void respond(httplib::Response& res, F&& handler) {
        Reply reply;
        try {
            reply = handler();
        } catch (const Error& e) {
            reply = {http_status_for(e.kind()), error_body(e)};
        } catch (const std::exception& e) {
            reply = {500, {{"error", {{"kind", "internal"}, {"message", e.what()}}}}};
        }
        res.status = reply.first;
        res.set_content(reply.second.dump(), "application/json; charset=utf-8");
    }

    Chain chain_;
    ServiceConfig cfg_;
    SessionManager sessions_;
    httplib::Server server_;
};

}  // namespace clarichain
