#pragma once

#include <string>
#include <string_view>

#include "clarichain/error.hpp"

namespace clarichain {

// Pipeline variants: the full chain, and two ablations.
enum class Variant {
    full,
    no_k,    // path examples are left out of the best-aspect prompt
    no_kps,  // path examples are retrieved by query similarity only
};

constexpr std::string_view variant_name(Variant v) noexcept {
    switch (v) {
        case Variant::full: return "full";
        case Variant::no_k: return "no_k";
        case Variant::no_kps: return "no_kps";
    }
    return "";
}

// Accepts both "no_kps" and the CLI spelling "no-kps".
inline Variant parse_variant(std::string_view s) {
    std::string key(s);
    for (auto& c : key) {
        if (c == '-') c = '_';
    }
    if (key == "full") return Variant::full;
    if (key == "no_k") return Variant::no_k;
    if (key == "no_kps") return Variant::no_kps;
    throw Error(ErrorKind::invalid_argument, "unknown variant '" + std::string(s) + "'");
}

}  // namespace clarichain
