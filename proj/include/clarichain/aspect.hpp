#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "clarichain/error.hpp"
#include "clarichain/text.hpp"

namespace clarichain {

// The facets along which an under-specified query can be clarified.
enum class AspectKind { event, purpose, type, status, condition };

inline constexpr std::array<AspectKind, 5> kAllAspects = {
    AspectKind::event, AspectKind::purpose, AspectKind::type, AspectKind::status,
    AspectKind::condition};

constexpr std::string_view aspect_name(AspectKind a) noexcept {
    switch (a) {
        case AspectKind::event: return "event";
        case AspectKind::purpose: return "purpose";
        case AspectKind::type: return "type";
        case AspectKind::status: return "status";
        case AspectKind::condition: return "condition";
    }
    return "";
}

// Case-insensitive, surrounding whitespace ignored.
inline std::optional<AspectKind> try_parse_aspect_kind(std::string_view s) {
    const std::string key = text::to_lower(text::trim_view(s));
    for (AspectKind a : kAllAspects) {
        if (key == aspect_name(a)) return a;
    }
    return std::nullopt;
}

inline AspectKind parse_aspect_kind(std::string_view s) {
    if (auto a = try_parse_aspect_kind(s)) return *a;
    throw Error(ErrorKind::validation, "unknown aspect '" + std::string(s) + "'");
}

constexpr std::size_t aspect_index(AspectKind a) noexcept { return static_cast<std::size_t>(a); }

// Human-readable meaning of each aspect, shown to the model in prompts.
// Loaded from a small JSON object {"event": "...", ...} with exactly the five keys.
class AspectRegistry {
public:
    static AspectRegistry from_json(const nlohmann::json& j) {
        if (!j.is_object()) {
            throw Error(ErrorKind::parse, "aspect registry must be a JSON object");
        }
        AspectRegistry reg;
        std::array<bool, 5> seen{};
        for (const auto& [key, value] : j.items()) {
            auto a = try_parse_aspect_kind(key);
            if (!a) throw Error(ErrorKind::validation, "aspect registry: unknown aspect '" + key + "'");
            if (!value.is_string() || text::is_blank(value.get<std::string>())) {
                throw Error(ErrorKind::validation,
                            "aspect registry: meaning of '" + key + "' must be a non-empty string");
            }
            reg.meanings_[aspect_index(*a)] = text::trim(value.get<std::string>());
            seen[aspect_index(*a)] = true;
        }
        for (AspectKind a : kAllAspects) {
            if (!seen[aspect_index(a)]) {
                throw Error(ErrorKind::validation,
                            "aspect registry: missing meaning for '" + std::string(aspect_name(a)) + "'");
            }
        }
        return reg;
    }

    static AspectRegistry load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw Error(ErrorKind::parse, "cannot open aspect registry " + path.string());
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::parse, "aspect registry " + path.string() + ": " + e.what());
        }
        return from_json(j);
    }

    const std::string& meaning(AspectKind a) const { return meanings_[aspect_index(a)]; }

private:
    AspectRegistry() = default;
    std::array<std::string, 5> meanings_;
};

}  // namespace clarichain
