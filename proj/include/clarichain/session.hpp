#pragma once

#include <atomic>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "clarichain/aspect.hpp"
#include "clarichain/error.hpp"
#include "clarichain/gateway.hpp"
#include "clarichain/path_store.hpp"
#include "clarichain/prompt.hpp"
#include "clarichain/retrieval.hpp"
#include "clarichain/text.hpp"
#include "clarichain/variant.hpp"

namespace clarichain {

// Everything a session reads but never writes, shared across sessions.
struct Chain {
    std::shared_ptr<const std::vector<RetrievalUnit>> units;
    std::shared_ptr<const PromptEngine> prompts;
    std::shared_ptr<Backend> backend;

    static Chain make(const PathStore& store, PromptEngine prompts, std::shared_ptr<Backend> backend) {
        return {std::make_shared<const std::vector<RetrievalUnit>>(flatten(store)),
                std::make_shared<const PromptEngine>(std::move(prompts)), std::move(backend)};
    }
};

struct SessionConfig {
    RetrievalConfig retrieval;
    int n_options = 5;
    int n_apis = 7;
    int max_rounds = 3;

    void validate() const {
        retrieval.validate();
        if (n_options < 1) throw Error(ErrorKind::invalid_argument, "n_options must be >= 1");
        if (n_apis < 1) throw Error(ErrorKind::invalid_argument, "n_apis must be >= 1");
        if (max_rounds < 1) throw Error(ErrorKind::invalid_argument, "max_rounds must be >= 1");
    }
};

struct RoundOutput {
    AspectKind aspect{};
    std::string question;
    ParsedOptions options;
};

struct AnswerOutcome {
    std::string extended_query;
    ParsedApis recommendations;
};

struct PromptTrace {
    UnitKind unit{};
    std::string inputs_digest;
};

// Everything that happened in one clarification round. Answer-side fields stay
// empty while the question is pending.
struct RoundRecord {
    int round = 0;  // 1-based
    std::vector<SourceIndex> example_sources;
    AspectKind aspect{};
    std::string question;
    std::vector<std::string> options;
    std::optional<std::string> answer;
    std::optional<std::string> extended_query;
    std::optional<std::vector<std::string>> recommendations;
    std::vector<PromptTrace> prompts;
};

struct SessionTranscript {
    std::string id;
    std::string query;
    Variant variant = Variant::full;
    int round = 0;
    bool closed = false;
    std::vector<RoundRecord> rounds;
};

inline nlohmann::json to_json(const SessionTranscript& t) {
    nlohmann::json rounds = nlohmann::json::array();
    for (const auto& r : t.rounds) {
        nlohmann::json examples = nlohmann::json::array();
        for (const auto& s : r.example_sources) examples.push_back({{"record", s.record}, {"round", s.round}});
        nlohmann::json prompts = nlohmann::json::array();
        for (const auto& p : r.prompts) {
            prompts.push_back({{"unit", unit_name(p.unit)}, {"inputs_digest", p.inputs_digest}});
        }
        auto opt = [](const auto& v) -> nlohmann::json { return v ? nlohmann::json(*v) : nlohmann::json(); };
        rounds.push_back({{"round", r.round},
                          {"examples", std::move(examples)},
                          {"aspect", aspect_name(r.aspect)},
                          {"question", r.question},
                          {"options", r.options},
                          {"answer", opt(r.answer)},
                          {"extended_query", opt(r.extended_query)},
                          {"recommendations", opt(r.recommendations)},
                          {"prompts", std::move(prompts)}});
    }
    return {{"session_id", t.id},   {"query", t.query},   {"variant", variant_name(t.variant)},
            {"round", t.round},     {"closed", t.closed}, {"rounds", std::move(rounds)}};
}

namespace detail {

inline std::string new_session_id() {
    static std::atomic<std::uint64_t> counter{0};
    thread_local std::mt19937_64 rng{std::random_device{}()};
    const std::uint64_t a = rng();
    const std::uint64_t b = rng() ^ (counter.fetch_add(1) * 0x9e3779b97f4a7c15ULL);
    return text::fnv1a_hex(std::string_view(reinterpret_cast<const char*>(&a), sizeof a)) +
           text::fnv1a_hex(std::string_view(reinterpret_cast<const char*>(&b), sizeof b));
}

}  // namespace detail

// One clarification dialogue. Not thread-safe: callers serialize operations on a
// session (the HTTP layer does so with a per-session mutex). Distinct sessions
// may run concurrently over the same Chain.
class Session {
public:
    Session(Chain chain, std::string query, Variant variant, SessionConfig cfg)
        : chain_(std::move(chain)), id_(detail::new_session_id()), variant_(variant), cfg_(std::move(cfg)) {
        if (text::is_blank(query)) throw Error(ErrorKind::empty_query, "query must not be empty");
        cfg_.validate();
        cfg_.retrieval.variant = variant == Variant::no_kps ? RetrievalVariant::no_kps : RetrievalVariant::full;
        query_ = text::trim(query);
    }

    const std::string& id() const noexcept { return id_; }
    const std::string& query() const noexcept { return query_; }
    Variant variant() const noexcept { return variant_; }
    const SessionConfig& config() const noexcept { return cfg_; }
    int round() const noexcept { return static_cast<int>(history_answers_.size()); }
    bool pending() const noexcept { return history_questions_.size() > history_answers_.size(); }
    bool closed() const noexcept { return closed_; }
    const std::vector<std::string>& history_questions() const noexcept { return history_questions_; }
    const std::vector<std::string>& history_answers() const noexcept { return history_answers_; }
    const std::optional<ParsedOptions>& last_options() const noexcept { return last_options_; }
    const std::optional<std::string>& extended_query() const noexcept { return extended_query_; }
    const std::optional<ParsedApis>& recommendations() const noexcept { return recommendations_; }

    // Aspect, question, then options. The question stays pending until answered.
    RoundOutput next_question() {
        ensure_open();
        if (pending()) throw Error(ErrorKind::pending_question, "the current question has not been answered");
        if (round() >= cfg_.max_rounds) {
            throw Error(ErrorKind::round_limit, "session reached its limit of " +
                                                    std::to_string(cfg_.max_rounds) + " rounds");
        }
        const auto& prompts = *chain_.prompts;
        RoundRecord record;
        record.round = round() + 1;
        auto call = [&](const RenderedPrompt& p) {
            record.prompts.push_back({p.unit, p.inputs_digest});
            return chain_.backend->complete(p);
        };

        const std::string prev_answer =
            history_answers_.empty() ? std::string(kNoPreviousAnswer) : history_answers_.back();
        std::vector<PathExample> examples;
        if (variant_ != Variant::no_k) {
            examples = find_examples(*chain_.units, query_, prev_answer, cfg_.retrieval);
            for (const auto& e : examples) record.example_sources.push_back(e.source_index);
        }

        const auto aspect_prompt = prompts.render_best_aspect(query_, prev_answer, examples, variant_);
        AspectKind aspect;
        try {
            aspect = parse_aspect(call(aspect_prompt));
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::unparseable_aspect) throw;
            aspect = parse_aspect(call(aspect_prompt));  // one retry on noisy output
        }

        std::string question =
            text::trim(call(prompts.render_clarify_question(query_, aspect, history_answers_)).raw_text);
        if (question.empty()) throw Error(ErrorKind::malformed_response, "empty clarification question");
        ParsedOptions options = parse_options(call(prompts.render_options(question, query_, cfg_.n_options)));

        record.aspect = aspect;
        record.question = question;
        record.options = options.options;
        rounds_.push_back(std::move(record));
        history_questions_.push_back(question);
        last_options_ = options;
        return {aspect, std::move(question), std::move(options)};
    }

    // Commits the answer only if both the extension and the recommendation succeed.
    AnswerOutcome submit_answer(std::string_view answer) {
        ensure_open();
        if (!pending()) throw Error(ErrorKind::no_pending_question, "there is no question to answer");
        std::string clean = text::trim(answer);
        if (clean.empty()) throw Error(ErrorKind::empty_answer, "answer must not be empty");

        const auto& prompts = *chain_.prompts;
        RoundRecord& record = rounds_.back();
        std::vector<PromptTrace> traces;
        auto call = [&](const RenderedPrompt& p) {
            traces.push_back({p.unit, p.inputs_digest});
            return chain_.backend->complete(p);
        };

        std::vector<std::pair<std::string, std::string>> qa;
        for (std::size_t i = 0; i < history_answers_.size(); ++i) {
            qa.emplace_back(history_questions_[i], history_answers_[i]);
        }
        qa.emplace_back(history_questions_.back(), clean);

        std::string extended = text::trim(call(prompts.render_query_extension(query_, qa)).raw_text);
        if (extended.empty()) throw Error(ErrorKind::malformed_response, "empty extended query");
        ParsedApis apis = parse_apis(call(prompts.render_api_recommendation(extended, cfg_.n_apis)));

        history_answers_.push_back(clean);
        extended_query_ = extended;
        recommendations_ = apis;
        record.answer = clean;
        record.extended_query = extended;
        record.recommendations = apis.apis;
        record.prompts.insert(record.prompts.end(), traces.begin(), traces.end());
        return {std::move(extended), std::move(apis)};
    }

    SessionTranscript transcript() const {
        return {id_, query_, variant_, round(), closed_, rounds_};
    }

    // Closes the session; any later operation fails with session-closed.
    SessionTranscript end() {
        closed_ = true;
        return transcript();
    }

private:
    void ensure_open() const {
        if (closed_) throw Error(ErrorKind::session_closed, "session " + id_ + " has ended");
    }

    Chain chain_;
    std::string id_;
    std::string query_;
    Variant variant_;
    SessionConfig cfg_;
    std::vector<std::string> history_questions_;
    std::vector<std::string> history_answers_;
    std::optional<ParsedOptions> last_options_;
    std::optional<std::string> extended_query_;
    std::optional<ParsedApis> recommendations_;
    std::vector<RoundRecord> rounds_;
    bool closed_ = false;
};

inline Session start_session(const Chain& chain, std::string_view query, Variant variant,
                             const SessionConfig& cfg = {}) {
    return Session(chain, std::string(query), variant, cfg);
}

}  // namespace clarichain
