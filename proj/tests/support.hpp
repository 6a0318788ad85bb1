#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "clarichain.hpp"

namespace testsupport {

inline const std::filesystem::path kDataDir = CLARICHAIN_DATA_DIR;
inline const std::filesystem::path kTestDir = CLARICHAIN_TEST_DIR;

inline clarichain::PathStore table_i() { return clarichain::PathStore::load(kDataDir / "table_i.jsonl"); }

inline clarichain::PromptEngine bundled_prompts() { return clarichain::PromptEngine::load_dir(kDataDir); }

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Answers each prompt with a caller-supplied function and keeps every prompt it saw.
class FunctionBackend final : public clarichain::Backend {
public:
    using Fn = std::function<std::string(const clarichain::RenderedPrompt&)>;
    explicit FunctionBackend(Fn fn) : fn_(std::move(fn)) {}

    clarichain::Completion complete(const clarichain::RenderedPrompt& p) override {
        std::lock_guard lock(mutex_);
        seen_.push_back(p);
        return {p.unit, fn_(p), std::chrono::milliseconds(0)};
    }

    std::vector<clarichain::RenderedPrompt> seen() const {
        std::lock_guard lock(mutex_);
        return seen_;
    }

private:
    Fn fn_;
    mutable std::mutex mutex_;
    std::vector<clarichain::RenderedPrompt> seen_;
};

// Wraps another backend and records the prompts passed through it.
class RecordingBackend final : public clarichain::Backend {
public:
    explicit RecordingBackend(std::shared_ptr<clarichain::Backend> inner) : inner_(std::move(inner)) {}

    clarichain::Completion complete(const clarichain::RenderedPrompt& p) override {
        {
            std::lock_guard lock(mutex_);
            seen_.push_back(p);
        }
        return inner_->complete(p);
    }

    std::vector<clarichain::RenderedPrompt> seen() const {
        std::lock_guard lock(mutex_);
        return seen_;
    }

private:
    std::shared_ptr<clarichain::Backend> inner_;
    mutable std::mutex mutex_;
    std::vector<clarichain::RenderedPrompt> seen_;
};

// Well-formed output for every unit; never runs dry.
inline std::string canned_response(const clarichain::RenderedPrompt& p) {
    using clarichain::UnitKind;
    switch (p.unit) {
        case UnitKind::best_aspect: return "purpose";
        case UnitKind::clarify_question: return "Which values do you need?";
        case UnitKind::options: return "1. int values\n2. double values\n3. long values\n4. bytes\n5. booleans";
        case UnitKind::query_extension: return "return stream of double values from generator in Java";
        case UnitKind::api_recommendation: return "1. java.util.Random.doubles\n2. java.util.Random.nextDouble";
    }
    return "";
}

inline std::shared_ptr<clarichain::ScriptedBackend> fig4_backend() {
    return clarichain::ScriptedBackend::load(kDataDir / "fig4_script.jsonl");
}

}  // namespace testsupport
