#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace clarichain {

// Every failure the engine reports carries one of these kinds. The kebab-case
// names are part of the HTTP and CLI surface, so do not rename them.
enum class ErrorKind {
    parse,                // malformed input file
    validation,           // well-formed input violating a data invariant
    invalid_argument,
    empty_units,
    empty_store,
    template_error,
    timeout,
    transport,
    retries_exhausted,
    http_status,
    malformed_response,
    scripted_miss,
    unparseable_aspect,
    empty_options,
    empty_apis,
    empty_query,
    empty_answer,
    pending_question,
    no_pending_question,
    round_limit,
    session_closed,
    unknown_session,
    session_busy,
    empty_cases,
    empty_truth,
    empty_dataset,
    policy_data_missing,
};

constexpr std::string_view kind_name(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::parse: return "parse";
        case ErrorKind::validation: return "validation";
        case ErrorKind::invalid_argument: return "invalid-argument";
        case ErrorKind::empty_units: return "empty-units";
        case ErrorKind::empty_store: return "empty-store";
        case ErrorKind::template_error: return "template";
        case ErrorKind::timeout: return "timeout";
        case ErrorKind::transport: return "transport";
        case ErrorKind::retries_exhausted: return "retries-exhausted";
        case ErrorKind::http_status: return "http-status";
        case ErrorKind::malformed_response: return "malformed-response";
        case ErrorKind::scripted_miss: return "scripted-miss";
        case ErrorKind::unparseable_aspect: return "unparseable-aspect";
        case ErrorKind::empty_options: return "empty-options";
        case ErrorKind::empty_apis: return "empty-apis";
        case ErrorKind::empty_query: return "empty-query";
        case ErrorKind::empty_answer: return "empty-answer";
        case ErrorKind::pending_question: return "pending-question";
        case ErrorKind::no_pending_question: return "no-pending-question";
        case ErrorKind::round_limit: return "round-limit";
        case ErrorKind::session_closed: return "session-closed";
        case ErrorKind::unknown_session: return "unknown-session";
        case ErrorKind::session_busy: return "session-busy";
        case ErrorKind::empty_cases: return "empty-cases";
        case ErrorKind::empty_truth: return "empty-truth";
        case ErrorKind::empty_dataset: return "empty-dataset";
        case ErrorKind::policy_data_missing: return "policy-data-missing";
    }
    return "unknown";
}

// Failures of the model backend or of parsing its output.
constexpr bool is_backend_failure(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::timeout:
        case ErrorKind::transport:
        case ErrorKind::retries_exhausted:
        case ErrorKind::http_status:
        case ErrorKind::malformed_response:
        case ErrorKind::scripted_miss:
        case ErrorKind::unparseable_aspect:
        case ErrorKind::empty_options:
        case ErrorKind::empty_apis:
            return true;
        default:
            return false;
    }
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(clarichain::kind_name(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    std::string_view kind_name() const noexcept { return clarichain::kind_name(kind_); }

    bool is_backend_failure() const noexcept { return clarichain::is_backend_failure(kind_); }

private:
    ErrorKind kind_;
};

}  // namespace clarichain
