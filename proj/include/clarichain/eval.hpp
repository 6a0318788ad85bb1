#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "clarichain/error.hpp"
#include "clarichain/gateway.hpp"
#include "clarichain/session.hpp"
#include "clarichain/similarity.hpp"
#include "clarichain/text.hpp"
#include "clarichain/variant.hpp"

namespace clarichain {

using RankedList = std::vector<std::string>;
using TruthSet = std::set<std::string>;

inline TruthSet make_truth(const std::vector<std::string>& apis) {
    TruthSet truth;
    for (const auto& a : apis) truth.insert(text::trim(a));
    return truth;
}

namespace detail {
inline bool is_hit(const std::string& item, const TruthSet& truth) {
    return truth.count(text::trim(item)) > 0;
}
}  // namespace detail

// 1/rank of the first relevant item, 0 when none is relevant.
inline double reciprocal_rank(const RankedList& ranked, const TruthSet& truth) {
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (detail::is_hit(ranked[i], truth)) return 1.0 / static_cast<double>(i + 1);
    }
    return 0.0;
}

inline double mrr(const std::vector<std::pair<RankedList, TruthSet>>& cases) {
    if (cases.empty()) throw Error(ErrorKind::empty_cases, "MRR over zero cases");
    double sum = 0.0;
    for (const auto& [ranked, truth] : cases) sum += reciprocal_rank(ranked, truth);
    return sum / static_cast<double>(cases.size());
}

// Sum over hit positions k of (hits so far)/k, divided by |truth|.
inline double average_precision(const RankedList& ranked, const TruthSet& truth) {
    if (truth.empty()) throw Error(ErrorKind::empty_truth, "average precision needs a ground truth");
    double sum = 0.0;
    std::size_t hits = 0;
    std::set<std::string> counted;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        const auto item = text::trim(ranked[i]);
        if (truth.count(item) && counted.insert(item).second) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    return sum / static_cast<double>(truth.size());
}

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
};

inline PrecisionRecall precision_recall(const RankedList& ranked, const TruthSet& truth) {
    if (ranked.empty() || truth.empty()) {
        throw Error(ErrorKind::empty_cases, "precision/recall need a non-empty ranking and truth");
    }
    std::set<std::string> recommended;
    for (const auto& r : ranked) recommended.insert(text::trim(r));
    std::size_t hits = 0;
    for (const auto& r : recommended) hits += truth.count(r);
    return {static_cast<double>(hits) / static_cast<double>(recommended.size()),
            static_cast<double>(hits) / static_cast<double>(truth.size())};
}

struct EvalCase {
    std::string query;
    std::vector<std::string> ground_truth_apis;
    std::optional<std::vector<std::string>> answers;
    std::optional<std::string> truth_description;
};

// One case per line: {"query", "ground_truth_apis", "answers", "truth_description"}.
inline std::vector<EvalCase> load_dataset(std::istream& in) {
    std::vector<EvalCase> cases;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::is_blank(line)) continue;
        auto where = [&] { return "dataset line " + std::to_string(line_no) + ": "; };
        EvalCase c;
        try {
            auto j = nlohmann::json::parse(line);
            c.query = j.at("query").get<std::string>();
            c.ground_truth_apis = j.at("ground_truth_apis").get<std::vector<std::string>>();
            if (j.contains("answers") && !j["answers"].is_null()) {
                c.answers = j["answers"].get<std::vector<std::string>>();
            }
            if (j.contains("truth_description") && !j["truth_description"].is_null()) {
                c.truth_description = j["truth_description"].get<std::string>();
            }
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::parse, where() + e.what());
        }
        if (text::is_blank(c.query)) throw Error(ErrorKind::validation, where() + "query is non-empty");
        if (c.ground_truth_apis.empty()) {
            throw Error(ErrorKind::validation, where() + "ground_truth_apis is non-empty");
        }
        for (const auto& api : c.ground_truth_apis) {
            if (!detail::is_qualified_name(text::trim(api))) {
                throw Error(ErrorKind::validation, where() + "'" + api + "' is not a qualified API name");
            }
        }
        cases.push_back(std::move(c));
    }
    return cases;
}

inline std::vector<EvalCase> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::parse, "cannot open dataset " + path.string());
    return load_dataset(in);
}

enum class AnswerPolicy {
    scripted,  // replay each case's stored answers
    oracle,    // pick the offered option most similar to the truth description
};

inline std::string_view policy_name(AnswerPolicy p) noexcept {
    return p == AnswerPolicy::scripted ? "scripted" : "oracle";
}

inline AnswerPolicy parse_policy(std::string_view s) {
    if (s == "scripted") return AnswerPolicy::scripted;
    if (s == "oracle") return AnswerPolicy::oracle;
    throw Error(ErrorKind::invalid_argument, "unknown answer policy '" + std::string(s) + "'");
}

// Highest similarity to the description; earlier (higher-ranked) options win ties.
inline std::string oracle_answer(const ParsedOptions& options, std::string_view description) {
    std::size_t best = 0;
    double best_score = -1.0;
    for (std::size_t i = 0; i < options.options.size(); ++i) {
        double s = score(options.options[i], description).value();
        if (s > best_score) {
            best_score = s;
            best = i;
        }
    }
    return options.options.at(best);
}

struct RoundMetrics {
    int round = 0;
    double mrr = 0.0;
    double map = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    std::size_t n_cases = 0;
};

struct CaseRound {
    int round = 0;
    RankedList ranked;
    double reciprocal_rank = 0.0;
    double average_precision = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

struct CaseResult {
    std::size_t index = 0;
    std::string query;
    bool failed = false;
    std::string error;
    std::vector<CaseRound> rounds;
};

struct EvalReport {
    std::string dataset_id;
    Variant variant = Variant::full;
    AnswerPolicy policy = AnswerPolicy::scripted;
    std::vector<RoundMetrics> rounds;
    std::vector<CaseResult> cases;
    std::size_t n_failed = 0;
};

// Per-round metrics from collected per-case rankings. Failed cases are skipped.
inline std::vector<RoundMetrics> aggregate(const std::vector<CaseResult>& cases,
                                           const std::vector<TruthSet>& truths, int rounds) {
    std::vector<RoundMetrics> out;
    for (int r = 1; r <= rounds; ++r) {
        RoundMetrics m;
        m.round = r;
        std::vector<std::pair<RankedList, TruthSet>> pairs;
        for (std::size_t i = 0; i < cases.size(); ++i) {
            if (cases[i].failed) continue;
            const auto& cr = cases[i].rounds.at(static_cast<std::size_t>(r - 1));
            pairs.emplace_back(cr.ranked, truths[i]);
            m.map += cr.average_precision;
            m.precision += cr.precision;
            m.recall += cr.recall;
        }
        m.n_cases = pairs.size();
        if (!pairs.empty()) {
            const double n = static_cast<double>(pairs.size());
            m.mrr = mrr(pairs);
            m.map /= n;
            m.precision /= n;
            m.recall /= n;
        }
        out.push_back(m);
    }
    return out;
}

struct EvalOptions {
    Variant variant = Variant::full;
    AnswerPolicy policy = AnswerPolicy::scripted;
    int rounds = 3;
    SessionConfig session;
    std::string dataset_id;
};

// Runs one session per case in dataset order and records the recommendation list
// after each answered round. A case whose session throws is marked failed.
inline EvalReport run_eval(const Chain& chain, const std::vector<EvalCase>& dataset, const EvalOptions& opts) {
    if (dataset.empty()) throw Error(ErrorKind::empty_dataset, "dataset has no cases");
    if (opts.rounds < 1) throw Error(ErrorKind::invalid_argument, "rounds must be >= 1");
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& c = dataset[i];
        if (opts.policy == AnswerPolicy::scripted &&
            (!c.answers || c.answers->size() < static_cast<std::size_t>(opts.rounds))) {
            throw Error(ErrorKind::policy_data_missing,
                        "case " + std::to_string(i) + " lacks " + std::to_string(opts.rounds) + " scripted answers");
        }
        if (opts.policy == AnswerPolicy::oracle && (!c.truth_description || text::is_blank(*c.truth_description))) {
            throw Error(ErrorKind::policy_data_missing, "case " + std::to_string(i) + " lacks a truth description");
        }
    }

    SessionConfig scfg = opts.session;
    scfg.max_rounds = std::max(scfg.max_rounds, opts.rounds);

    EvalReport report;
    report.dataset_id = opts.dataset_id;
    report.variant = opts.variant;
    report.policy = opts.policy;
    std::vector<TruthSet> truths;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& c = dataset[i];
        truths.push_back(make_truth(c.ground_truth_apis));
        CaseResult result;
        result.index = i;
        result.query = c.query;
        try {
            Session session(chain, c.query, opts.variant, scfg);
            for (int r = 1; r <= opts.rounds; ++r) {
                RoundOutput out = session.next_question();
                std::string answer = opts.policy == AnswerPolicy::scripted
                                         ? (*c.answers)[static_cast<std::size_t>(r - 1)]
                                         : oracle_answer(out.options, *c.truth_description);
                AnswerOutcome outcome = session.submit_answer(answer);
                CaseRound cr;
                cr.round = r;
                cr.ranked = outcome.recommendations.apis;
                cr.reciprocal_rank = reciprocal_rank(cr.ranked, truths.back());
                cr.average_precision = average_precision(cr.ranked, truths.back());
                auto pr = precision_recall(cr.ranked, truths.back());
                cr.precision = pr.precision;
                cr.recall = pr.recall;
                result.rounds.push_back(std::move(cr));
            }
        } catch (const Error& e) {
            result.failed = true;
            result.error = e.what();
            ++report.n_failed;
        }
        report.cases.push_back(std::move(result));
    }
    report.rounds = aggregate(report.cases, truths, opts.rounds);
    return report;
}

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json rounds = nlohmann::json::array();
    for (const auto& m : r.rounds) {
        rounds.push_back({{"round", m.round},
                          {"mrr", m.mrr},
                          {"map", m.map},
                          {"precision", m.precision},
                          {"recall", m.recall},
                          {"n_cases", m.n_cases}});
    }
    nlohmann::json cases = nlohmann::json::array();
    for (const auto& c : r.cases) {
        nlohmann::json cr = nlohmann::json::array();
        for (const auto& x : c.rounds) {
            cr.push_back({{"round", x.round},
                          {"ranked", x.ranked},
                          {"reciprocal_rank", x.reciprocal_rank},
                          {"average_precision", x.average_precision},
                          {"precision", x.precision},
                          {"recall", x.recall}});
        }
        nlohmann::json row = {{"index", c.index}, {"query", c.query}, {"failed", c.failed}, {"rounds", cr}};
        if (c.failed) row["error"] = c.error;
        cases.push_back(std::move(row));
    }
    return {{"dataset", r.dataset_id},
            {"variant", variant_name(r.variant)},
            {"policy", policy_name(r.policy)},
            {"rounds", std::move(rounds)},
            {"n_failed", r.n_failed},
            {"cases", std::move(cases)}};
}

// Comparison table with one row per metric: Dataset,Metrics,Approaches,Round 1..N.
// `baseline_rows` are copied verbatim after the report's rows (no header).
inline void write_table_csv(std::ostream& out, const EvalReport& r,
                            const std::vector<std::string>& baseline_rows = {}) {
    out << "Dataset,Metrics,Approaches";
    for (const auto& m : r.rounds) out << ",Round " << m.round;
    out << '\n';
    const std::pair<const char*, double RoundMetrics::*> metrics[] = {
        {"MRR", &RoundMetrics::mrr},
        {"MAP", &RoundMetrics::map},
        {"Precision", &RoundMetrics::precision},
        {"Recall", &RoundMetrics::recall}};
    for (const auto& [name, field] : metrics) {
        out << detail::csv_escape(r.dataset_id) << ',' << name << ',' << variant_name(r.variant);
        for (const auto& m : r.rounds) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.3f", m.*field);
            out << ',' << buf;
        }
        out << '\n';
    }
    for (const auto& row : baseline_rows) out << row << '\n';
}

}  // namespace clarichain
