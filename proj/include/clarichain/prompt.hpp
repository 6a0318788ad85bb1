#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "clarichain/aspect.hpp"
#include "clarichain/error.hpp"
#include "clarichain/path_store.hpp"
#include "clarichain/retrieval.hpp"
#include "clarichain/text.hpp"
#include "clarichain/variant.hpp"

namespace clarichain {

// The five model calls of the clarification chain, in pipeline order.
enum class UnitKind { best_aspect, clarify_question, options, query_extension, api_recommendation };

inline constexpr std::array<UnitKind, 5> kAllUnits = {
    UnitKind::best_aspect, UnitKind::clarify_question, UnitKind::options,
    UnitKind::query_extension, UnitKind::api_recommendation};

constexpr std::string_view unit_name(UnitKind u) noexcept {
    switch (u) {
        case UnitKind::best_aspect: return "best_aspect";
        case UnitKind::clarify_question: return "clarify_question";
        case UnitKind::options: return "options";
        case UnitKind::query_extension: return "query_extension";
        case UnitKind::api_recommendation: return "api_recommendation";
    }
    return "";
}

inline UnitKind parse_unit_kind(std::string_view s) {
    for (UnitKind u : kAllUnits) {
        if (s == unit_name(u)) return u;
    }
    throw Error(ErrorKind::invalid_argument, "unknown unit '" + std::string(s) + "'");
}

// Placeholders each unit's template may reference.
inline const std::set<std::string>& allowed_placeholders(UnitKind u) {
    static const std::map<UnitKind, std::set<std::string>> table = {
        {UnitKind::best_aspect, {"query", "prev_answer", "examples", "aspect_meanings"}},
        {UnitKind::clarify_question, {"query", "aspect", "aspect_meaning", "history_answers"}},
        {UnitKind::options, {"question", "query", "n_options"}},
        {UnitKind::query_extension, {"query", "history_qa"}},
        {UnitKind::api_recommendation, {"extended_query", "n_apis"}},
    };
    return table.at(u);
}

// Opening and closing lines of the path-example block in the best-aspect prompt.
inline constexpr std::string_view kExamplesOpen = "<examples>";
inline constexpr std::string_view kExamplesClose = "</examples>";

struct RenderedPrompt {
    UnitKind unit{};
    std::string text;
    std::string inputs_digest;
};

using Bindings = std::map<std::string, std::string>;

// Template text with `{name}` placeholders. Literal braces are not supported.
class PromptTemplate {
public:
    PromptTemplate(UnitKind unit, std::string body) : unit_(unit), body_(std::move(body)) {
        const auto& allowed = allowed_placeholders(unit_);
        std::size_t pos = 0;
        while (pos < body_.size()) {
            std::size_t open = body_.find_first_of("{}", pos);
            if (open == std::string::npos) break;
            if (body_[open] == '}') {
                throw Error(ErrorKind::template_error,
                            std::string(unit_name(unit_)) + ": unmatched '}' at offset " + std::to_string(open));
            }
            std::size_t close = body_.find_first_of("{}", open + 1);
            if (close == std::string::npos || body_[close] != '}') {
                throw Error(ErrorKind::template_error,
                            std::string(unit_name(unit_)) + ": unmatched '{' at offset " + std::to_string(open));
            }
            std::string name = body_.substr(open + 1, close - open - 1);
            if (!allowed.count(name)) {
                throw Error(ErrorKind::template_error, std::string(unit_name(unit_)) +
                                                           ": placeholder {" + name + "} is not allowed");
            }
            placeholders_.insert(name);
            pos = close + 1;
        }
    }

    UnitKind unit() const noexcept { return unit_; }
    const std::string& body() const noexcept { return body_; }
    const std::set<std::string>& placeholders() const noexcept { return placeholders_; }

    // Single pass: substituted values are never rescanned for placeholders.
    std::string render(const Bindings& values) const {
        std::string out;
        out.reserve(body_.size() + 256);
        std::size_t pos = 0;
        while (pos < body_.size()) {
            std::size_t open = body_.find('{', pos);
            if (open == std::string::npos) {
                out.append(body_, pos, std::string::npos);
                break;
            }
            out.append(body_, pos, open - pos);
            std::size_t close = body_.find('}', open);
            std::string name = body_.substr(open + 1, close - open - 1);
            auto it = values.find(name);
            if (it == values.end()) {
                throw Error(ErrorKind::template_error,
                            std::string(unit_name(unit_)) + ": placeholder {" + name + "} is unbound");
            }
            out += it->second;
            pos = close + 1;
        }
        return out;
    }

private:
    UnitKind unit_;
    std::string body_;
    std::set<std::string> placeholders_;
};

// One template per unit, loaded from a registry JSON object mapping unit name to a
// template file path (relative paths resolve against the registry's directory).
class TemplateSet {
public:
    static TemplateSet load(const std::filesystem::path& registry_path) {
        std::ifstream in(registry_path);
        if (!in) throw Error(ErrorKind::parse, "cannot open template registry " + registry_path.string());
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::parse, "template registry: " + std::string(e.what()));
        }
        if (!j.is_object()) throw Error(ErrorKind::parse, "template registry must be a JSON object");
        std::map<UnitKind, std::string> bodies;
        for (const auto& [key, value] : j.items()) {
            UnitKind unit = parse_unit_kind(key);
            std::filesystem::path p = value.get<std::string>();
            if (p.is_relative()) p = registry_path.parent_path() / p;
            std::ifstream tf(p, std::ios::binary);
            if (!tf) throw Error(ErrorKind::parse, "cannot open template " + p.string());
            std::ostringstream ss;
            ss << tf.rdbuf();
            bodies[unit] = ss.str();
        }
        return from_bodies(bodies);
    }

    static TemplateSet from_bodies(const std::map<UnitKind, std::string>& bodies) {
        TemplateSet set;
        for (UnitKind u : kAllUnits) {
            auto it = bodies.find(u);
            if (it == bodies.end()) {
                throw Error(ErrorKind::template_error, "no template for unit " + std::string(unit_name(u)));
            }
            set.templates_.emplace(u, PromptTemplate(u, it->second));
        }
        return set;
    }

    const PromptTemplate& get(UnitKind u) const { return templates_.at(u); }

private:
    TemplateSet() = default;
    std::map<UnitKind, PromptTemplate> templates_;
};

// Pure renderer for the five unit prompts over immutable templates and aspect meanings.
class PromptEngine {
public:
    PromptEngine(TemplateSet templates, AspectRegistry aspects)
        : templates_(std::move(templates)), aspects_(std::move(aspects)) {}

    // Bundled layout: <dir>/aspects.json and <dir>/templates/registry.json.
    static PromptEngine load_dir(const std::filesystem::path& data_dir) {
        return PromptEngine(TemplateSet::load(data_dir / "templates" / "registry.json"),
                            AspectRegistry::load(data_dir / "aspects.json"));
    }

    const AspectRegistry& aspects() const noexcept { return aspects_; }
    const TemplateSet& templates() const noexcept { return templates_; }

    static std::string format_example(const PathExample& e) {
        return "Query: " + e.query + " | Previous answer: " + e.prev_answer +
               " -> Aspect: " + std::string(aspect_name(e.aspect));
    }

    static std::string examples_block(const std::vector<PathExample>& examples) {
        std::string block(kExamplesOpen);
        block += '\n';
        for (const auto& e : examples) block += format_example(e) + '\n';
        block += kExamplesClose;
        block += '\n';
        return block;
    }

    // Under Variant::no_k the whole block, delimiters included, is left out and
    // `examples` is ignored. Variant::no_kps renders like full.
    RenderedPrompt render_best_aspect(std::string_view query, std::string_view prev_answer,
                                      const std::vector<PathExample>& examples, Variant variant) const {
        const bool with_examples = variant != Variant::no_k;
        if (examples.size() > 5) {
            throw Error(ErrorKind::invalid_argument, "at most five path examples are allowed");
        }
        if (with_examples && examples.empty()) {
            throw Error(ErrorKind::invalid_argument, "best-aspect prompt needs at least one path example");
        }
        std::string meanings;
        for (AspectKind a : kAllAspects) {
            meanings += "- " + std::string(aspect_name(a)) + ": " + aspects_.meaning(a) + '\n';
        }
        std::string prev = prev_answer.empty() ? std::string(kNoPreviousAnswer) : std::string(prev_answer);
        return render(UnitKind::best_aspect,
                      {{"query", std::string(query)},
                       {"prev_answer", prev},
                       {"aspect_meanings", meanings},
                       {"examples", with_examples ? examples_block(examples) : std::string()}});
    }

    RenderedPrompt render_clarify_question(std::string_view query, AspectKind aspect,
                                           const std::vector<std::string>& history_answers) const {
        std::string known;
        for (const auto& a : history_answers) known += "- " + a + '\n';
        return render(UnitKind::clarify_question, {{"query", std::string(query)},
                                                   {"aspect", std::string(aspect_name(aspect))},
                                                   {"aspect_meaning", aspects_.meaning(aspect)},
                                                   {"history_answers", known}});
    }

    RenderedPrompt render_options(std::string_view question, std::string_view query, int n_options) const {
        if (n_options < 1) throw Error(ErrorKind::invalid_argument, "n_options must be >= 1");
        return render(UnitKind::options, {{"question", std::string(question)},
                                          {"query", std::string(query)},
                                          {"n_options", std::to_string(n_options)}});
    }

    RenderedPrompt render_query_extension(
        std::string_view query, const std::vector<std::pair<std::string, std::string>>& history_qa) const {
        if (history_qa.empty()) {
            throw Error(ErrorKind::invalid_argument, "query extension needs at least one answered question");
        }
        std::string qa;
        for (std::size_t i = 0; i < history_qa.size(); ++i) {
            const auto n = std::to_string(i + 1);
            qa += "Q" + n + ": " + history_qa[i].first + '\n';
            qa += "A" + n + ": " + history_qa[i].second + '\n';
        }
        return render(UnitKind::query_extension, {{"query", std::string(query)}, {"history_qa", qa}});
    }

    RenderedPrompt render_api_recommendation(std::string_view extended_query, int n_apis) const {
        if (n_apis < 1) throw Error(ErrorKind::invalid_argument, "n_apis must be >= 1");
        return render(UnitKind::api_recommendation,
                      {{"extended_query", std::string(extended_query)}, {"n_apis", std::to_string(n_apis)}});
    }

private:
    RenderedPrompt render(UnitKind unit, const Bindings& values) const {
        RenderedPrompt p;
        p.unit = unit;
        p.text = templates_.get(unit).render(values);
        // Digest over unit name and bindings in key order, separated by unit/record separators.
        std::string material(unit_name(unit));
        for (const auto& [k, v] : values) {
            material += '\x1e';
            material += k;
            material += '\x1f';
            material += v;
        }
        p.inputs_digest = text::fnv1a_hex(material);
        return p;
    }

    TemplateSet templates_;
    AspectRegistry aspects_;
};

}  // namespace clarichain
