#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "clarichain/aspect.hpp"
#include "clarichain/error.hpp"
#include "clarichain/text.hpp"

namespace clarichain {

// Previous-answer value used for the first clarification round.
inline constexpr std::string_view kNoPreviousAnswer = "None";

struct PathRound {
    AspectKind aspect{};
    std::string question;
    std::string option;

    bool operator==(const PathRound&) const = default;
};

// One best-questioning path: a query, the rounds that clarify it, and the API it ends at.
struct PathRecord {
    std::string query;
    std::vector<PathRound> rounds;
    std::string api;

    bool operator==(const PathRecord&) const = default;
};

// (record index, round index), both zero-based. Ordering matches flatten order.
struct SourceIndex {
    std::size_t record = 0;
    std::size_t round = 0;

    auto operator<=>(const SourceIndex&) const = default;
};

// One path round flattened together with its context, used for similarity ranking.
struct RetrievalUnit {
    std::string query;
    std::string prev_answer;
    AspectKind aspect{};
    std::string question;
    std::string option;
    std::string api;
    SourceIndex source_index;
};

enum class TableFormat { jsonl, csv };

inline TableFormat table_format_for(const std::filesystem::path& path) {
    return path.extension() == ".csv" ? TableFormat::csv : TableFormat::jsonl;
}

namespace detail {

inline void validate_record(const PathRecord& r, std::size_t index) {
    auto fail = [index](const std::string& what) {
        throw Error(ErrorKind::validation, "record " + std::to_string(index) + ": " + what);
    };
    if (text::is_blank(r.query)) fail("query is non-empty");
    if (text::is_blank(r.api)) fail("api is non-empty");
    if (r.rounds.empty()) fail("rounds is non-empty");
    for (std::size_t k = 0; k < r.rounds.size(); ++k) {
        const auto& round = r.rounds[k];
        if (text::is_blank(round.question)) {
            fail("round " + std::to_string(k + 1) + ": question is non-empty");
        }
        if (text::is_blank(round.option)) {
            fail("round " + std::to_string(k + 1) + ": option is non-empty");
        }
        if (k > 0 && r.rounds[k - 1].aspect == round.aspect) {
            fail("round " + std::to_string(k + 1) + ": consecutive rounds have distinct aspects");
        }
    }
}

// Minimal RFC 4180 reader: quoted fields, doubled quotes, embedded newlines.
// Each row is returned with the 1-based line number it starts on.
inline std::vector<std::pair<std::size_t, std::vector<std::string>>> read_csv(std::istream& in) {
    std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t line = 1;
    std::size_t row_line = 1;
    char c;
    auto end_row = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
        bool blank = row.size() == 1 && row[0].empty();
        if (!blank) rows.emplace_back(row_line, std::move(row));
        row.clear();
    };
    while (in.get(c)) {
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                if (field_started && !field.empty()) {
                    throw Error(ErrorKind::parse,
                                "line " + std::to_string(line) + ": stray quote inside unquoted field");
                }
                in_quotes = true;
                field_started = true;
                break;
            case ',':
                row.push_back(std::move(field));
                field.clear();
                field_started = false;
                break;
            case '\r':
                break;
            case '\n':
                end_row();
                ++line;
                row_line = line;
                break;
            default:
                field.push_back(c);
                field_started = true;
        }
    }
    if (in_quotes) {
        throw Error(ErrorKind::parse, "line " + std::to_string(row_line) + ": unterminated quoted field");
    }
    if (!row.empty() || !field.empty()) end_row();
    return rows;
}

inline std::string csv_escape(std::string_view s) {
    if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

inline PathRecord record_from_json(const nlohmann::json& j) {
    PathRecord r;
    r.query = j.at("query").get<std::string>();
    r.api = j.at("api").get<std::string>();
    for (const auto& jr : j.at("rounds")) {
        PathRound round;
        round.aspect = parse_aspect_kind(jr.at("aspect").get<std::string>());
        round.question = jr.at("question").get<std::string>();
        round.option = jr.at("option").get<std::string>();
        r.rounds.push_back(std::move(round));
    }
    return r;
}

}  // namespace detail

inline nlohmann::json to_json(const PathRecord& r) {
    nlohmann::json rounds = nlohmann::json::array();
    for (const auto& round : r.rounds) {
        rounds.push_back({{"aspect", aspect_name(round.aspect)},
                          {"question", round.question},
                          {"option", round.option}});
    }
    return {{"query", r.query}, {"api", r.api}, {"rounds", std::move(rounds)}};
}

// Immutable, validated table of best-questioning paths in file order.
class PathStore {
public:
    PathStore() = default;

    // Validates every record; throws Error(validation) naming the record index.
    explicit PathStore(std::vector<PathRecord> records) : records_(std::move(records)) {
        for (std::size_t i = 0; i < records_.size(); ++i) detail::validate_record(records_[i], i);
    }

    static PathStore parse_jsonl(std::istream& in) {
        std::vector<PathRecord> records;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (text::is_blank(line)) continue;
            try {
                records.push_back(detail::record_from_json(nlohmann::json::parse(line)));
            } catch (const nlohmann::json::exception& e) {
                throw Error(ErrorKind::parse, "line " + std::to_string(line_no) + ": " + e.what());
            } catch (const Error& e) {
                throw Error(ErrorKind::parse, "line " + std::to_string(line_no) + ": " + e.what());
            }
        }
        return PathStore(std::move(records));
    }

    // Columns query,round,aspect,cq,option,api (header required). Rows sharing
    // (query, api) form one record; records keep first-appearance order.
    static PathStore parse_csv(std::istream& in) {
        auto rows = detail::read_csv(in);
        if (rows.empty()) return PathStore();
        const auto& header = rows.front().second;
        const std::vector<std::string> expected = {"query", "round", "aspect", "cq", "option", "api"};
        std::map<std::string, std::size_t> col;
        for (std::size_t i = 0; i < header.size(); ++i) col[text::to_lower(text::trim(header[i]))] = i;
        for (const auto& name : expected) {
            if (!col.count(name)) {
                throw Error(ErrorKind::parse, "line 1: missing CSV column '" + name + "'");
            }
        }

        struct Pending {
            PathRecord record;
            std::vector<std::pair<long, std::size_t>> round_numbers;  // (round, line)
        };
        std::vector<Pending> pending;
        std::map<std::pair<std::string, std::string>, std::size_t> by_key;

        for (std::size_t r = 1; r < rows.size(); ++r) {
            const auto& [line_no, fields] = rows[r];
            auto cell = [&](const std::string& name) -> std::string {
                std::size_t i = col.at(name);
                if (i >= fields.size()) {
                    throw Error(ErrorKind::parse,
                                "line " + std::to_string(line_no) + ": missing value for '" + name + "'");
                }
                return fields[i];
            };
            long round_no = 0;
            try {
                std::size_t used = 0;
                std::string raw = text::trim(cell("round"));
                round_no = std::stol(raw, &used);
                if (used != raw.size() || round_no < 1) throw std::invalid_argument(raw);
            } catch (const std::logic_error&) {
                throw Error(ErrorKind::parse, "line " + std::to_string(line_no) +
                                                  ": round must be a positive integer");
            }
            PathRound round;
            try {
                round.aspect = parse_aspect_kind(cell("aspect"));
            } catch (const Error& e) {
                throw Error(ErrorKind::parse, "line " + std::to_string(line_no) + ": " + e.what());
            }
            round.question = cell("cq");
            round.option = cell("option");

            auto key = std::make_pair(cell("query"), cell("api"));
            auto [it, inserted] = by_key.try_emplace(key, pending.size());
            if (inserted) {
                Pending p;
                p.record.query = key.first;
                p.record.api = key.second;
                pending.push_back(std::move(p));
            }
            auto& p = pending[it->second];
            p.record.rounds.push_back(std::move(round));
            p.round_numbers.emplace_back(round_no, line_no);
        }

        std::vector<PathRecord> records;
        records.reserve(pending.size());
        for (auto& p : pending) {
            std::vector<std::size_t> order(p.record.rounds.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return p.round_numbers[a].first < p.round_numbers[b].first;
            });
            PathRecord rec;
            rec.query = p.record.query;
            rec.api = p.record.api;
            for (std::size_t k = 0; k < order.size(); ++k) {
                const auto& [number, line_no] = p.round_numbers[order[k]];
                if (number != static_cast<long>(k + 1)) {
                    throw Error(ErrorKind::parse, "line " + std::to_string(line_no) + ": round " +
                                                      std::to_string(number) +
                                                      " breaks the 1..n sequence for its path");
                }
                rec.rounds.push_back(p.record.rounds[order[k]]);
            }
            records.push_back(std::move(rec));
        }
        return PathStore(std::move(records));
    }

    static PathStore load(const std::filesystem::path& path, TableFormat format) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(ErrorKind::parse, "cannot open path table " + path.string());
        return format == TableFormat::csv ? parse_csv(in) : parse_jsonl(in);
    }

    static PathStore load(const std::filesystem::path& path) { return load(path, table_format_for(path)); }

    void write_jsonl(std::ostream& out) const {
        for (const auto& r : records_) out << to_json(r).dump() << '\n';
    }

    void write_csv(std::ostream& out) const {
        out << "query,round,aspect,cq,option,api\n";
        for (const auto& r : records_) {
            for (std::size_t k = 0; k < r.rounds.size(); ++k) {
                const auto& round = r.rounds[k];
                out << detail::csv_escape(r.query) << ',' << (k + 1) << ','
                    << aspect_name(round.aspect) << ',' << detail::csv_escape(round.question) << ','
                    << detail::csv_escape(round.option) << ',' << detail::csv_escape(r.api) << '\n';
            }
        }
    }

    const std::vector<PathRecord>& records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }

private:
    std::vector<PathRecord> records_;
};

// One unit per (record, round), in (record, round) order. The first round of a
// record gets the "None" previous answer; later rounds get the preceding option.
inline std::vector<RetrievalUnit> flatten(const PathStore& store) {
    std::vector<RetrievalUnit> units;
    const auto& records = store.records();
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        for (std::size_t k = 0; k < rec.rounds.size(); ++k) {
            RetrievalUnit u;
            u.query = rec.query;
            u.prev_answer = k == 0 ? std::string(kNoPreviousAnswer) : rec.rounds[k - 1].option;
            u.aspect = rec.rounds[k].aspect;
            u.question = rec.rounds[k].question;
            u.option = rec.rounds[k].option;
            u.api = rec.api;
            u.source_index = {i, k};
            units.push_back(std::move(u));
        }
    }
    return units;
}

}  // namespace clarichain
