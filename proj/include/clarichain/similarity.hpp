#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace clarichain {

// Lowercased ASCII alphanumeric runs; every other byte is a separator.
inline std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : s) {
        if (c < 0x80 && std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

// A similarity value, always within [0, 1].
class SimilarityScore {
public:
    constexpr SimilarityScore() = default;
    constexpr explicit SimilarityScore(double v) : value_(std::clamp(v, 0.0, 1.0)) {}

    constexpr double value() const noexcept { return value_; }
    constexpr auto operator<=>(const SimilarityScore&) const = default;

private:
    double value_ = 0.0;
};

namespace detail {

inline std::map<std::string, long> term_frequencies(std::string_view s) {
    std::map<std::string, long> tf;
    for (auto& t : tokenize(s)) ++tf[std::move(t)];
    return tf;
}

}  // namespace detail

// Cosine similarity of term-frequency vectors. Dot products and norms are exact
// integers, so the result is symmetric bit-for-bit and exactly 1 for equal texts.
inline SimilarityScore score(std::string_view a, std::string_view b) {
    const auto ta = detail::term_frequencies(a);
    const auto tb = detail::term_frequencies(b);
    if (ta.empty() || tb.empty()) return SimilarityScore(0.0);
    long dot = 0;
    auto ia = ta.begin();
    auto ib = tb.begin();
    while (ia != ta.end() && ib != tb.end()) {
        if (ia->first < ib->first) {
            ++ia;
        } else if (ib->first < ia->first) {
            ++ib;
        } else {
            dot += ia->second * ib->second;
            ++ia;
            ++ib;
        }
    }
    long na = 0;
    long nb = 0;
    for (const auto& [_, c] : ta) na += c * c;
    for (const auto& [_, c] : tb) nb += c * c;
    const double denom = std::sqrt(static_cast<double>(na) * static_cast<double>(nb));
    return SimilarityScore(static_cast<double>(dot) / denom);
}

}  // namespace clarichain
