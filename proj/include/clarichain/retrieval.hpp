#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "clarichain/aspect.hpp"
#include "clarichain/error.hpp"
#include "clarichain/path_store.hpp"
#include "clarichain/similarity.hpp"

namespace clarichain {

enum class RetrievalVariant {
    full,    // query similarity, then previous-answer similarity
    no_kps,  // query similarity only
};

struct RetrievalConfig {
    double top_fraction = 0.10;
    std::size_t max_examples = 5;
    RetrievalVariant variant = RetrievalVariant::full;

    void validate() const {
        if (!(top_fraction > 0.0 && top_fraction <= 1.0)) {
            throw Error(ErrorKind::invalid_argument, "top_fraction must be in (0, 1]");
        }
        if (max_examples < 1) throw Error(ErrorKind::invalid_argument, "max_examples must be >= 1");
    }
};

struct PathExample {
    std::string query;
    std::string prev_answer;
    AspectKind aspect{};
    SimilarityScore stage1_score;
    SimilarityScore stage2_score;  // zero when the second stage is skipped
    SourceIndex source_index;

    bool operator==(const PathExample&) const = default;
};

// Number of units kept by the first stage: ceil(fraction * n), at least 1.
// The small slack keeps products like 0.1 * 30 = 3.0000000000000004 at 3.
inline std::size_t stage1_keep_count(double top_fraction, std::size_t n) {
    const double raw = top_fraction * static_cast<double>(n);
    auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9));
    return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(n, 1));
}

// Two-stage pathfinding over the flattened table:
//   1. rank every unit by similarity of its query to `query` and keep the top fraction;
//   2. re-rank survivors by similarity of their option to `prev_answer` (full variant only);
//   3. walk the ranking, keeping the first unit for each aspect, up to max_examples.
inline std::vector<PathExample> find_examples(const std::vector<RetrievalUnit>& units,
                                              std::string_view query, std::string_view prev_answer,
                                              const RetrievalConfig& cfg) {
    cfg.validate();
    if (units.empty()) throw Error(ErrorKind::empty_units, "no retrieval units to search");

    struct Candidate {
        const RetrievalUnit* unit;
        SimilarityScore s1;
        SimilarityScore s2;
    };
    std::vector<Candidate> ranked;
    ranked.reserve(units.size());
    for (const auto& u : units) ranked.push_back({&u, score(query, u.query), {}});

    std::sort(ranked.begin(), ranked.end(), [](const Candidate& a, const Candidate& b) {
        if (a.s1 != b.s1) return a.s1 > b.s1;
        return a.unit->source_index < b.unit->source_index;
    });
    ranked.resize(stage1_keep_count(cfg.top_fraction, units.size()));

    if (cfg.variant == RetrievalVariant::full) {
        for (auto& c : ranked) c.s2 = score(prev_answer, c.unit->option);
        std::sort(ranked.begin(), ranked.end(), [](const Candidate& a, const Candidate& b) {
            if (a.s2 != b.s2) return a.s2 > b.s2;
            if (a.s1 != b.s1) return a.s1 > b.s1;
            return a.unit->source_index < b.unit->source_index;
        });
    }

    std::vector<PathExample> out;
    std::array<bool, 5> taken{};
    for (const auto& c : ranked) {
        if (out.size() >= cfg.max_examples) break;
        auto& slot = taken[aspect_index(c.unit->aspect)];
        if (slot) continue;
        slot = true;
        out.push_back({c.unit->query, c.unit->prev_answer, c.unit->aspect, c.s1, c.s2,
                       c.unit->source_index});
    }
    return out;
}

struct RankedRecord {
    std::size_t record_index = 0;
    const PathRecord* record = nullptr;
    SimilarityScore score;
};

// Record-level view of the first stage, for diagnostics.
inline std::vector<RankedRecord> rank_records_by_query(const PathStore& store, std::string_view query) {
    if (store.empty()) throw Error(ErrorKind::empty_store, "path table has no records");
    std::vector<RankedRecord> out;
    const auto& records = store.records();
    for (std::size_t i = 0; i < records.size(); ++i) {
        out.push_back({i, &records[i], score(query, records[i].query)});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const RankedRecord& a, const RankedRecord& b) { return a.score > b.score; });
    return out;
}

}  // namespace clarichain
