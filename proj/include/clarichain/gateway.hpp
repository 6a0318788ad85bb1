#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "clarichain/aspect.hpp"
#include "clarichain/error.hpp"
#include "clarichain/prompt.hpp"
#include "clarichain/similarity.hpp"
#include "clarichain/text.hpp"

namespace clarichain {

enum class BackendKind { remote, scripted };

struct BackendConfig {
    BackendKind kind = BackendKind::scripted;
    std::string endpoint;  // full URL of the chat-completion endpoint
    std::string model;
    double temperature = 0.0;
    std::chrono::milliseconds timeout{60000};
    int max_retries = 2;
    std::chrono::milliseconds backoff_base{500};  // delay before retry n is base * 2^(n-1)
    std::filesystem::path script_path;
    std::string api_key_env = "LLM_API_KEY";

    void validate() const {
        if (temperature < 0.0) throw Error(ErrorKind::invalid_argument, "temperature must be >= 0");
        if (max_retries < 0) throw Error(ErrorKind::invalid_argument, "max_retries must be >= 0");
        if (kind == BackendKind::remote && (endpoint.empty() || model.empty())) {
            throw Error(ErrorKind::invalid_argument, "remote backend needs an endpoint and a model");
        }
        if (kind == BackendKind::scripted && script_path.empty()) {
            throw Error(ErrorKind::invalid_argument, "scripted backend needs a script path");
        }
    }
};

struct Completion {
    UnitKind unit{};
    std::string raw_text;
    std::chrono::milliseconds latency{0};
};

// A model backend. Implementations must tolerate concurrent calls.
class Backend {
public:
    virtual ~Backend() = default;
    virtual Completion complete(const RenderedPrompt& prompt) = 0;
};

// Replays responses from a JSONL script, one {"unit", "inputs_digest", "response"}
// object per line. A response pinned to the prompt's digest wins; otherwise the
// earliest unused unpinned response for the unit is returned.
class ScriptedBackend final : public Backend {
public:
    struct Entry {
        UnitKind unit{};
        std::optional<std::string> inputs_digest;
        std::string response;
    };

    explicit ScriptedBackend(std::vector<Entry> entries)
        : entries_(std::move(entries)), used_(entries_.size(), false) {}

    static std::vector<Entry> parse_script(std::istream& in) {
        std::vector<Entry> entries;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (text::is_blank(line)) continue;
            try {
                auto j = nlohmann::json::parse(line);
                Entry e;
                e.unit = parse_unit_kind(j.at("unit").get<std::string>());
                if (j.contains("inputs_digest") && !j["inputs_digest"].is_null()) {
                    e.inputs_digest = j["inputs_digest"].get<std::string>();
                }
                e.response = j.at("response").get<std::string>();
                entries.push_back(std::move(e));
            } catch (const std::exception& e) {
                throw Error(ErrorKind::parse, "script line " + std::to_string(line_no) + ": " + e.what());
            }
        }
        return entries;
    }

    static std::unique_ptr<ScriptedBackend> load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw Error(ErrorKind::parse, "cannot open script " + path.string());
        return std::make_unique<ScriptedBackend>(parse_script(in));
    }

    Completion complete(const RenderedPrompt& prompt) override {
        std::lock_guard lock(mutex_);
        std::optional<std::size_t> pick;
        for (std::size_t i = 0; i < entries_.size() && !pick; ++i) {
            if (!used_[i] && entries_[i].unit == prompt.unit &&
                entries_[i].inputs_digest == prompt.inputs_digest) {
                pick = i;
            }
        }
        for (std::size_t i = 0; i < entries_.size() && !pick; ++i) {
            if (!used_[i] && entries_[i].unit == prompt.unit && !entries_[i].inputs_digest) pick = i;
        }
        if (!pick) {
            throw Error(ErrorKind::scripted_miss,
                        "no scripted response left for unit " + std::string(unit_name(prompt.unit)));
        }
        used_[*pick] = true;
        return {prompt.unit, entries_[*pick].response, std::chrono::milliseconds(0)};
    }

    std::size_t remaining() const {
        std::lock_guard lock(mutex_);
        std::size_t n = 0;
        for (bool u : used_) n += u ? 0 : 1;
        return n;
    }

private:
    std::vector<Entry> entries_;
    std::vector<bool> used_;
    mutable std::mutex mutex_;
};

// OpenAI-style chat completion over HTTP(S). The prompt goes out as a single user
// message; the first choice's message content comes back verbatim.
class RemoteBackend final : public Backend {
public:
    explicit RemoteBackend(BackendConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        static const std::regex url_re(R"(^(https?)://([^/:]+)(:(\d+))?(/.*)?$)");
        std::smatch m;
        if (!std::regex_match(cfg_.endpoint, m, url_re)) {
            throw Error(ErrorKind::invalid_argument, "endpoint is not an http(s) URL: " + cfg_.endpoint);
        }
        base_url_ = m[1].str() + "://" + m[2].str() + (m[3].matched ? m[3].str() : "");
        path_ = m[5].matched ? m[5].str() : "/";
    }

    static nlohmann::json request_body(const BackendConfig& cfg, std::string_view prompt_text) {
        return {{"model", cfg.model},
                {"temperature", cfg.temperature},
                {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt_text}}})}};
    }

    Completion complete(const RenderedPrompt& prompt) override {
        const std::string body = request_body(cfg_, prompt.text).dump();
        httplib::Headers headers;
        if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }

        const auto started = std::chrono::steady_clock::now();
        std::optional<Error> last;
        for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
            if (attempt > 0) std::this_thread::sleep_for(cfg_.backoff_base * (1 << (attempt - 1)));
            httplib::Client client(base_url_);
            auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
            auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
            client.set_connection_timeout(secs.count(), usecs.count());
            client.set_read_timeout(secs.count(), usecs.count());
            client.set_write_timeout(secs.count(), usecs.count());

            auto res = client.Post(path_, headers, body, "application/json");
            if (!res) {
                auto err = res.error();
                if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
                    err == httplib::Error::Write) {
                    // httplib reports read/write timeouts as Read/Write errors.
                    last = Error(ErrorKind::timeout, "request to " + cfg_.endpoint + " failed: " +
                                                         httplib::to_string(err));
                } else {
                    last = Error(ErrorKind::transport, "request to " + cfg_.endpoint + " failed: " +
                                                           httplib::to_string(err));
                }
                continue;
            }
            if (res->status >= 500) {
                last = Error(ErrorKind::http_status, "endpoint returned HTTP " + std::to_string(res->status));
                continue;
            }
            if (res->status != 200) {
                throw Error(ErrorKind::http_status, "endpoint returned HTTP " + std::to_string(res->status) +
                                                        ": " + res->body.substr(0, 200));
            }
            Completion c;
            c.unit = prompt.unit;
            c.raw_text = extract_content(res->body);
            c.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - started);
            return c;
        }
        if (cfg_.max_retries == 0) throw *last;
        throw Error(ErrorKind::retries_exhausted, "gave up after " + std::to_string(cfg_.max_retries + 1) +
                                                      " attempts; last error " + last->what());
    }

    static std::string extract_content(const std::string& body) {
        try {
            auto j = nlohmann::json::parse(body);
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::malformed_response, std::string("unexpected response body: ") + e.what());
        }
    }

private:
    BackendConfig cfg_;
    std::string base_url_;
    std::string path_;
};

inline std::unique_ptr<Backend> make_backend(const BackendConfig& cfg) {
    cfg.validate();
    if (cfg.kind == BackendKind::remote) return std::make_unique<RemoteBackend>(cfg);
    return ScriptedBackend::load(cfg.script_path);
}

inline Completion complete(Backend& backend, const RenderedPrompt& prompt) {
    return backend.complete(prompt);
}

// ---------------------------------------------------------------------------
// Output parsers. Each returns a typed value or throws a typed Error.

// First aspect name among the response's tokens, case-insensitive.
inline AspectKind parse_aspect(const Completion& c) {
    for (const auto& token : tokenize(c.raw_text)) {
        if (auto a = try_parse_aspect_kind(token)) return *a;
    }
    throw Error(ErrorKind::unparseable_aspect,
                "no aspect name in response '" + c.raw_text.substr(0, 120) + "'");
}

struct ParsedOptions {
    std::vector<std::string> options;
};

struct ParsedApis {
    std::vector<std::string> apis;
    std::vector<std::string> dropped;  // lines rejected by the name grammar
};

namespace detail {

// "  12. item" or "3) item" -> "item"; nullopt when the line is not numbered.
inline std::optional<std::string> numbered_item(std::string_view line) {
    std::size_t i = 0;
    while (i < line.size() && text::is_space(line[i])) ++i;
    const std::size_t digits = i;
    while (i < line.size() && line[i] >= '0' && line[i] <= '9') ++i;
    if (i == digits || i >= line.size() || (line[i] != '.' && line[i] != ')')) return std::nullopt;
    auto item = text::trim(line.substr(i + 1));
    if (item.empty()) return std::nullopt;
    return item;
}

// Item text of numbered lines; when there are none, every non-empty line.
inline std::vector<std::string> list_items(std::string_view raw) {
    std::vector<std::string> numbered_items;
    std::vector<std::string> plain;
    for (auto line : text::lines(raw)) {
        if (auto item = numbered_item(line)) {
            numbered_items.push_back(std::move(*item));
        } else if (!text::is_blank(line)) {
            plain.push_back(text::trim(line));
        }
    }
    return numbered_items.empty() ? plain : numbered_items;
}

// seg(.seg)+ where seg is a Java identifier (ASCII letters, digits, '_' and '$').
inline bool is_qualified_name(std::string_view s) {
    auto ident_start = [](char c) {
        return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_' || c == '$';
    };
    auto ident_char = [&](char c) { return ident_start(c) || (c >= '0' && c <= '9'); };
    std::size_t segments = 0;
    std::size_t i = 0;
    while (true) {
        if (i >= s.size() || !ident_start(s[i])) return false;
        ++i;
        while (i < s.size() && ident_char(s[i])) ++i;
        ++segments;
        if (i == s.size()) break;
        if (s[i] != '.') return false;
        ++i;
    }
    return segments >= 2;
}

// Strips backticks and a trailing parameter list: "`a.b.c(int)`" -> "a.b.c".
inline std::string clean_api_item(std::string_view item) {
    std::string s;
    for (char c : item) {
        if (c != '`') s.push_back(c);
    }
    s = text::trim(s);
    if (!s.empty() && s.back() == ')') {
        if (auto open = s.rfind('('); open != std::string::npos) s = text::trim(s.substr(0, open));
    }
    return s;
}

}  // namespace detail

inline ParsedOptions parse_options(const Completion& c) {
    ParsedOptions out;
    std::set<std::string> seen;
    for (auto& item : detail::list_items(c.raw_text)) {
        if (seen.insert(text::to_lower(item)).second) out.options.push_back(std::move(item));
    }
    if (out.options.empty()) throw Error(ErrorKind::empty_options, "response contains no options");
    return out;
}

inline ParsedApis parse_apis(const Completion& c) {
    ParsedApis out;
    for (const auto& item : detail::list_items(c.raw_text)) {
        std::string name = detail::clean_api_item(item);
        if (detail::is_qualified_name(name)) {
            out.apis.push_back(std::move(name));
        } else {
            out.dropped.push_back(item);
        }
    }
    if (out.apis.empty()) throw Error(ErrorKind::empty_apis, "response contains no valid API names");
    return out;
}

}  // namespace clarichain
