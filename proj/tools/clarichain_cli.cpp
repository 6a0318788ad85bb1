// clarichain: command-line front end.
//
//   clarichain serve         run the HTTP session service
//   clarichain eval          run a dataset through the chain and write a metrics report
//   clarichain retrieve      show the path examples retrieved for a query
//   clarichain import-table  convert a CSV path table to JSONL
//   clarichain demo          replay the bundled two-round running example

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "clarichain.hpp"

#ifndef CLARICHAIN_DATA_DIR
#define CLARICHAIN_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using namespace clarichain;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kData = 3, kBackend = 4 };

int exit_code_for(const Error& e) {
    if (e.is_backend_failure()) return kBackend;
    if (e.kind() == ErrorKind::invalid_argument) return kUsage;
    return kData;
}

struct CommonOptions {
    std::string data_dir = CLARICHAIN_DATA_DIR;
    std::string table;
    double top_fraction = 0.10;
    std::size_t max_examples = 5;
    int n_options = 5;
    int n_apis = 7;
    int max_rounds = 3;

    std::string backend = "scripted";
    std::string script;
    std::string endpoint = "https://api.openai.com/v1/chat/completions";
    std::string model = "gpt-3.5-turbo";
    double temperature = 0.0;
    int timeout_ms = 60000;
    int max_retries = 2;

    fs::path table_path() const {
        return table.empty() ? fs::path(data_dir) / "table_i.jsonl" : fs::path(table);
    }

    SessionConfig session_config() const {
        SessionConfig cfg;
        cfg.retrieval.top_fraction = top_fraction;
        cfg.retrieval.max_examples = max_examples;
        cfg.n_options = n_options;
        cfg.n_apis = n_apis;
        cfg.max_rounds = max_rounds;
        return cfg;
    }

    BackendConfig backend_config() const {
        BackendConfig cfg;
        cfg.kind = backend == "remote" ? BackendKind::remote : BackendKind::scripted;
        cfg.script_path = script.empty() ? fs::path(data_dir) / "fig4_script.jsonl" : fs::path(script);
        cfg.endpoint = endpoint;
        cfg.model = model;
        cfg.temperature = temperature;
        cfg.timeout = std::chrono::milliseconds(timeout_ms);
        cfg.max_retries = max_retries;
        return cfg;
    }

    Chain chain() const {
        auto store = PathStore::load(table_path());
        auto prompts = PromptEngine::load_dir(data_dir);
        std::shared_ptr<Backend> backend = make_backend(backend_config());
        return Chain::make(store, std::move(prompts), std::move(backend));
    }
};

void add_table_options(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--data-dir", o.data_dir, "Directory holding aspects.json and templates/")
        ->capture_default_str();
    cmd->add_option("--table", o.table, "Path table (.jsonl or .csv); defaults to the bundled table");
}

void add_chain_options(CLI::App* cmd, CommonOptions& o) {
    add_table_options(cmd, o);
    cmd->add_option("--top-fraction", o.top_fraction, "Share of the table kept by query similarity")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    cmd->add_option("--max-examples", o.max_examples, "Path examples per best-aspect prompt")
        ->check(CLI::Range(1, 5))
        ->capture_default_str();
    cmd->add_option("--options", o.n_options, "Options requested per question")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--apis", o.n_apis, "APIs requested per recommendation")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--max-rounds", o.max_rounds, "Clarification rounds per session")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--backend", o.backend, "Model backend")
        ->check(CLI::IsMember({"remote", "scripted"}))
        ->capture_default_str();
    cmd->add_option("--script", o.script, "Script file for the scripted backend");
    cmd->add_option("--endpoint", o.endpoint, "Chat-completion URL for the remote backend")
        ->capture_default_str();
    cmd->add_option("--model", o.model, "Model name for the remote backend")->capture_default_str();
    cmd->add_option("--temperature", o.temperature, "Sampling temperature")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    cmd->add_option("--timeout-ms", o.timeout_ms, "Per-request timeout")->capture_default_str();
    cmd->add_option("--max-retries", o.max_retries, "Retries on transport errors and 5xx")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
}

void write_json(const nlohmann::json& j, const std::string& out_path) {
    if (out_path.empty() || out_path == "-") {
        std::cout << j.dump(2) << '\n';
        return;
    }
    std::ofstream out(out_path);
    if (!out) throw Error(ErrorKind::parse, "cannot write " + out_path);
    out << j.dump(2) << '\n';
}

int run_retrieve(const CommonOptions& o, const std::string& query, const std::string& prev_answer,
                 const std::string& variant, bool records) {
    auto store = PathStore::load(o.table_path());
    if (store.empty()) throw Error(ErrorKind::empty_store, "path table " + o.table_path().string() + " is empty");
    if (records) {
        for (const auto& r : rank_records_by_query(store, query)) {
            std::printf("%.4f\trecord %zu\t%s -> %s\n", r.score.value(), r.record_index, r.record->query.c_str(),
                        r.record->api.c_str());
        }
        return kOk;
    }
    RetrievalConfig cfg = o.session_config().retrieval;
    cfg.variant = parse_variant(variant) == Variant::no_kps ? RetrievalVariant::no_kps : RetrievalVariant::full;
    auto examples = find_examples(flatten(store), query, prev_answer, cfg);
    std::printf("rank\tstage1\tstage2\taspect\tsource\tquery | previous answer\n");
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& e = examples[i];
        std::printf("%zu\t%.4f\t%.4f\t%s\t(%zu,%zu)\t%s | %s\n", i + 1, e.stage1_score.value(),
                    e.stage2_score.value(), std::string(aspect_name(e.aspect)).c_str(), e.source_index.record,
                    e.source_index.round, e.query.c_str(), e.prev_answer.c_str());
    }
    return kOk;
}

int run_eval_cmd(const CommonOptions& o, const std::string& dataset_path, const std::string& variant,
                 const std::string& policy, int rounds, const std::string& out_path, const std::string& csv_path,
                 const std::string& baseline_path) {
    auto dataset = load_dataset(fs::path(dataset_path));
    Chain chain = o.chain();
    EvalOptions opts;
    opts.variant = parse_variant(variant);
    opts.policy = parse_policy(policy);
    opts.rounds = rounds;
    opts.session = o.session_config();
    opts.dataset_id = fs::path(dataset_path).stem().string();
    EvalReport report = run_eval(chain, dataset, opts);
    write_json(to_json(report), out_path);

    if (!csv_path.empty()) {
        std::vector<std::string> baseline;
        if (!baseline_path.empty()) {
            std::ifstream in(baseline_path);
            if (!in) throw Error(ErrorKind::parse, "cannot open baseline table " + baseline_path);
            std::string line;
            bool header = true;
            while (std::getline(in, line)) {
                if (header) {
                    header = false;
                    continue;
                }
                if (!text::is_blank(line)) baseline.push_back(line);
            }
        }
        std::ofstream out(csv_path);
        if (!out) throw Error(ErrorKind::parse, "cannot write " + csv_path);
        write_table_csv(out, report, baseline);
    }

    for (const auto& m : report.rounds) {
        std::fprintf(stderr, "round %d: MRR %.3f  MAP %.3f  P %.3f  R %.3f  (%zu cases)\n", m.round, m.mrr, m.map,
                     m.precision, m.recall, m.n_cases);
    }
    if (report.n_failed > 0) {
        std::fprintf(stderr, "%zu of %zu cases failed\n", report.n_failed, report.cases.size());
        if (report.n_failed == report.cases.size()) return kBackend;
    }
    return kOk;
}

int run_demo(const CommonOptions& o, const std::vector<std::string>& answers, const std::string& query,
             const std::string& out_path) {
    Chain chain = o.chain();
    Session session = start_session(chain, query, Variant::full, o.session_config());
    for (const auto& answer : answers) {
        RoundOutput round = session.next_question();
        std::fprintf(stderr, "[round %d] aspect: %s\n  Q: %s\n", session.round() + 1,
                     std::string(aspect_name(round.aspect)).c_str(), round.question.c_str());
        for (std::size_t i = 0; i < round.options.options.size(); ++i) {
            std::fprintf(stderr, "     %zu. %s\n", i + 1, round.options.options[i].c_str());
        }
        AnswerOutcome outcome = session.submit_answer(answer);
        std::fprintf(stderr, "  A: %s\n  extended query: %s\n  APIs:", answer.c_str(),
                     outcome.extended_query.c_str());
        for (std::size_t i = 0; i < outcome.recommendations.apis.size(); ++i) {
            std::fprintf(stderr, "%s %zu. %s", i ? "," : "", i + 1, outcome.recommendations.apis[i].c_str());
        }
        std::fprintf(stderr, "\n");
    }
    write_json(to_json(session.end()), out_path);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Knowledge-guided query clarification for API recommendation"};
    app.require_subcommand(1);
    CommonOptions o;

    auto* serve = app.add_subcommand("serve", "Run the HTTP session service");
    add_chain_options(serve, o);
    std::string host = "127.0.0.1";
    int port = 8080;
    int ttl_minutes = 30;
    std::string ui_dir;
    serve->add_option("--host", host)->capture_default_str();
    serve->add_option("--port", port)->capture_default_str();
    serve->add_option("--ttl-minutes", ttl_minutes, "Idle session lifetime")->capture_default_str();
    serve->add_option("--ui", ui_dir, "Static chat client directory served at /")->check(CLI::ExistingDirectory);

    auto* eval = app.add_subcommand("eval", "Evaluate a dataset round by round");
    add_chain_options(eval, o);
    std::string dataset, variant = "full", policy = "scripted", out_path, csv_path, baseline_path;
    int rounds = 3;
    eval->add_option("--dataset", dataset, "Dataset JSONL")->required();
    eval->add_option("--variant", variant)
        ->check(CLI::IsMember({"full", "no-k", "no-kps", "no_k", "no_kps"}))
        ->capture_default_str();
    eval->add_option("--rounds", rounds)->check(CLI::PositiveNumber)->capture_default_str();
    eval->add_option("--policy", policy)->check(CLI::IsMember({"scripted", "oracle"}))->capture_default_str();
    eval->add_option("--out", out_path, "Report JSON path (stdout when omitted)");
    eval->add_option("--csv", csv_path, "Also write a per-metric comparison table");
    eval->add_option("--baseline", baseline_path, "CSV rows (same layout, with header) appended to --csv");

    auto* retrieve = app.add_subcommand("retrieve", "Show retrieved path examples");
    add_chain_options(retrieve, o);
    std::string query, prev_answer = std::string(kNoPreviousAnswer), retrieve_variant = "full";
    bool records = false;
    retrieve->add_option("--query", query)->required();
    retrieve->add_option("--prev-answer", prev_answer)->capture_default_str();
    retrieve->add_option("--variant", retrieve_variant)
        ->check(CLI::IsMember({"full", "no-kps", "no_kps"}))
        ->capture_default_str();
    retrieve->add_flag("--records", records, "Rank whole records by query similarity instead");

    auto* import = app.add_subcommand("import-table", "Convert a CSV path table to JSONL");
    std::string csv_in, jsonl_out;
    import->add_option("--csv", csv_in)->required();
    import->add_option("--out", jsonl_out, "JSONL output (stdout when omitted)");

    auto* demo = app.add_subcommand("demo", "Replay the scripted two-round running example");
    add_chain_options(demo, o);
    std::vector<std::string> answers = {"java.util.Random", "pseudorandom double values"};
    std::string demo_query = "return stream from generator in Java";
    std::string demo_out;
    demo->add_option("--query", demo_query)->capture_default_str();
    demo->add_option("--answer", answers, "Answer for each round, in order")->capture_default_str();
    demo->add_option("--out", demo_out, "Transcript JSON path (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*serve) {
            ServiceConfig cfg;
            cfg.session = o.session_config();
            cfg.session_ttl = std::chrono::minutes(ttl_minutes);
            if (!ui_dir.empty()) cfg.static_dir = ui_dir;
            Service service(o.chain(), cfg);
            std::fprintf(stderr, "listening on http://%s:%d\n", host.c_str(), port);
            if (!service.listen(host, port)) {
                std::fprintf(stderr, "error: cannot bind %s:%d\n", host.c_str(), port);
                return kUsage;
            }
            return kOk;
        }
        if (*eval) {
            return run_eval_cmd(o, dataset, variant, policy, rounds, out_path, csv_path, baseline_path);
        }
        if (*retrieve) return run_retrieve(o, query, prev_answer, retrieve_variant, records);
        if (*import) {
            auto store = PathStore::load(csv_in, TableFormat::csv);
            if (jsonl_out.empty()) {
                store.write_jsonl(std::cout);
            } else {
                std::ofstream out(jsonl_out);
                if (!out) throw Error(ErrorKind::parse, "cannot write " + jsonl_out);
                store.write_jsonl(out);
            }
            std::fprintf(stderr, "imported %zu records\n", store.size());
            return kOk;
        }
        if (*demo) return run_demo(o, answers, demo_query, demo_out);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kData;
    }
    return kUsage;
}
