#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <random>
#include <sstream>
#include <thread>

#include "support.hpp"

using namespace clarichain;

namespace {

RenderedPrompt prompt(UnitKind u, std::string text = "p", std::string digest = "0000000000000000") {
    return {u, std::move(text), std::move(digest)};
}

Completion raw(std::string s) { return {UnitKind::options, std::move(s), {}}; }

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an Error");
    return ErrorKind::parse;
}

// Loopback chat-completion stub.
class StubServer {
public:
    explicit StubServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server_.Post("/v1/chat/completions", [this, handler](const httplib::Request& req, httplib::Response& res) {
            ++hits;
            handler(req, res);
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer() {
        server_.stop();
        thread_.join();
    }

    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
    std::atomic<int> hits{0};

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

BackendConfig remote_config(std::string endpoint) {
    BackendConfig cfg;
    cfg.kind = BackendKind::remote;
    cfg.endpoint = std::move(endpoint);
    cfg.model = "stub-model";
    cfg.timeout = std::chrono::milliseconds(2000);
    cfg.backoff_base = std::chrono::milliseconds(1);
    return cfg;
}

std::string chat_reply(const std::string& content) {
    return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

}  // namespace

TEST_CASE("scripted backend replays per unit in order", "[gateway]") {
    auto backend = testsupport::fig4_backend();
    CHECK(backend->remaining() == 10);
    CHECK(parse_aspect(backend->complete(prompt(UnitKind::best_aspect))) == AspectKind::type);
    CHECK(backend->complete(prompt(UnitKind::clarify_question)).raw_text == "What type of generator is being used?");
    CHECK(parse_aspect(backend->complete(prompt(UnitKind::best_aspect))) == AspectKind::purpose);
    CHECK(kind_of([&] { backend->complete(prompt(UnitKind::best_aspect)); }) == ErrorKind::scripted_miss);
    CHECK(backend->remaining() == 7);
}

TEST_CASE("empty script misses immediately", "[gateway]") {
    ScriptedBackend empty({});
    for (UnitKind u : kAllUnits) CHECK(kind_of([&] { empty.complete(prompt(u)); }) == ErrorKind::scripted_miss);
}

TEST_CASE("digest-pinned entries take precedence", "[gateway]") {
    std::istringstream in(
        R"({"unit": "best_aspect", "inputs_digest": null, "response": "event"})"
        "\n"
        R"({"unit": "best_aspect", "inputs_digest": "aaaaaaaaaaaaaaaa", "response": "status"})"
        "\n");
    ScriptedBackend b(ScriptedBackend::parse_script(in));
    CHECK(b.complete(prompt(UnitKind::best_aspect, "p", "bbbbbbbbbbbbbbbb")).raw_text == "event");
    CHECK(b.complete(prompt(UnitKind::best_aspect, "p", "aaaaaaaaaaaaaaaa")).raw_text == "status");
    // A pinned entry is never served to another digest.
    ScriptedBackend pinned_only({{UnitKind::options, "aaaaaaaaaaaaaaaa", "x"}});
    CHECK(kind_of([&] { pinned_only.complete(prompt(UnitKind::options, "p", "cccccccccccccccc")); }) ==
          ErrorKind::scripted_miss);
}

TEST_CASE("script parse errors carry the line number", "[gateway]") {
    std::istringstream in("\n{\"unit\": \"nope\", \"response\": \"x\"}\n");
    try {
        ScriptedBackend::parse_script(in);
        FAIL("expected parse error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::parse);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("two replays of one script give identical outputs", "[gateway]") {
    auto a = testsupport::fig4_backend();
    auto b = testsupport::fig4_backend();
    for (UnitKind u : kAllUnits) {
        for (int i = 0; i < 2; ++i) CHECK(a->complete(prompt(u)).raw_text == b->complete(prompt(u)).raw_text);
    }
}

TEST_CASE("parse_aspect takes the first aspect token", "[gateway][parse]") {
    CHECK(parse_aspect(raw("type")) == AspectKind::type);
    CHECK(parse_aspect(raw("  Purpose\n")) == AspectKind::purpose);
    CHECK(parse_aspect(raw("The best aspect is: Condition.")) == AspectKind::condition);
    CHECK(parse_aspect(raw("status, then event")) == AspectKind::status);
    CHECK(kind_of([] { parse_aspect(raw("no idea")); }) == ErrorKind::unparseable_aspect);
    CHECK(kind_of([] { parse_aspect(raw("")); }) == ErrorKind::unparseable_aspect);
    CHECK(kind_of([] { parse_aspect(raw("typed")); }) == ErrorKind::unparseable_aspect);
}

TEST_CASE("parse_options handles numbering, fallbacks and duplicates", "[gateway][parse]") {
    auto o = parse_options(raw("Here you go:\n1. java.util.Random\n2) SecureRandom\n  3.   ThreadLocalRandom  \n"));
    CHECK(o.options == std::vector<std::string>{"java.util.Random", "SecureRandom", "ThreadLocalRandom"});

    auto fallback = parse_options(raw("alpha\n\n beta \r\ngamma"));
    CHECK(fallback.options == std::vector<std::string>{"alpha", "beta", "gamma"});

    auto dedup = parse_options(raw("1. Int values\n2. int values\n3. doubles"));
    CHECK(dedup.options == std::vector<std::string>{"Int values", "doubles"});

    CHECK(kind_of([] { parse_options(raw("  \n\n ")); }) == ErrorKind::empty_options);
}

TEST_CASE("parse_apis keeps qualified names and reports the rest", "[gateway][parse]") {
    auto a = parse_apis(raw("1. `java.util.Random.nextDouble()`\n"
                            "2. java.util.Random.doubles(long)\n"
                            "3. Random\n"
                            "4. not an api\n"
                            "5. java.util.stream.DoubleStream.of"));
    CHECK(a.apis == std::vector<std::string>{"java.util.Random.nextDouble", "java.util.Random.doubles",
                                             "java.util.stream.DoubleStream.of"});
    CHECK(a.dropped == std::vector<std::string>{"Random", "not an api"});
    CHECK(kind_of([] { parse_apis(raw("1. foo\n2. bar baz")); }) == ErrorKind::empty_apis);
    CHECK(detail::is_qualified_name("a.b"));
    CHECK(detail::is_qualified_name("$x._y.Z9"));
    CHECK_FALSE(detail::is_qualified_name("a"));
    CHECK_FALSE(detail::is_qualified_name("a..b"));
    CHECK_FALSE(detail::is_qualified_name("a.9b"));
    CHECK_FALSE(detail::is_qualified_name(".a.b"));
    CHECK_FALSE(detail::is_qualified_name("a.b."));
}

TEST_CASE("parsers never crash and API items always match the grammar", "[gateway][parse][property]") {
    std::mt19937 rng(7);
    const std::string alphabet = "ab.()`1 2.)\n\r\t$_-XYZ:{}type purpose";
    std::uniform_int_distribution<std::size_t> len(0, 80), pick(0, alphabet.size() - 1);
    for (int trial = 0; trial < 5000; ++trial) {
        std::string s;
        for (std::size_t n = len(rng); n > 0; --n) s += alphabet[pick(rng)];
        const auto c = raw(s);
        try {
            parse_aspect(c);
        } catch (const Error& e) {
            REQUIRE(e.kind() == ErrorKind::unparseable_aspect);
        }
        try {
            auto o = parse_options(c);
            for (const auto& x : o.options) REQUIRE_FALSE(text::is_blank(x));
        } catch (const Error& e) {
            REQUIRE(e.kind() == ErrorKind::empty_options);
        }
        try {
            auto a = parse_apis(c);
            for (const auto& x : a.apis) REQUIRE(detail::is_qualified_name(x));
        } catch (const Error& e) {
            REQUIRE(e.kind() == ErrorKind::empty_apis);
        }
    }
}

TEST_CASE("remote backend talks OpenAI-style chat JSON", "[gateway][remote]") {
    nlohmann::json seen;
    std::string auth;
    StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
        seen = nlohmann::json::parse(req.body);
        auth = req.get_header_value("Authorization");
        res.set_content(chat_reply("echo: " + seen["messages"][0]["content"].get<std::string>()), "application/json");
    });
    auto cfg = remote_config(stub.endpoint());
    cfg.api_key_env = "CLARICHAIN_TEST_KEY";
    ::setenv("CLARICHAIN_TEST_KEY", "secret", 1);
    RemoteBackend backend(cfg);
    auto c = backend.complete(prompt(UnitKind::clarify_question, "hello"));
    CHECK(c.raw_text == "echo: hello");
    CHECK(c.unit == UnitKind::clarify_question);
    CHECK(seen["model"] == "stub-model");
    CHECK(seen["temperature"] == 0.0);
    CHECK(seen["messages"][0]["role"] == "user");
    CHECK(auth == "Bearer secret");
    ::unsetenv("CLARICHAIN_TEST_KEY");
}

TEST_CASE("remote backend retries 5xx then gives up", "[gateway][remote]") {
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
        res.status = 503;
        res.set_content("busy", "text/plain");
    });
    auto cfg = remote_config(stub.endpoint());
    cfg.max_retries = 2;
    RemoteBackend backend(cfg);
    CHECK(kind_of([&] { backend.complete(prompt(UnitKind::options)); }) == ErrorKind::retries_exhausted);
    CHECK(stub.hits == 3);
}

TEST_CASE("remote backend recovers after a transient 5xx", "[gateway][remote]") {
    std::atomic<int> calls{0};
    StubServer stub([&](const httplib::Request&, httplib::Response& res) {
        if (calls++ == 0) {
            res.status = 500;
            return;
        }
        res.set_content(chat_reply("ok"), "application/json");
    });
    RemoteBackend backend(remote_config(stub.endpoint()));
    CHECK(backend.complete(prompt(UnitKind::options)).raw_text == "ok");
    CHECK(stub.hits == 2);
}

TEST_CASE("remote backend does not retry 4xx or malformed bodies", "[gateway][remote]") {
    StubServer bad_request([](const httplib::Request&, httplib::Response& res) { res.status = 401; });
    RemoteBackend a(remote_config(bad_request.endpoint()));
    CHECK(kind_of([&] { a.complete(prompt(UnitKind::options)); }) == ErrorKind::http_status);
    CHECK(bad_request.hits == 1);

    StubServer malformed([](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"choices": []})", "application/json");
    });
    RemoteBackend b(remote_config(malformed.endpoint()));
    CHECK(kind_of([&] { b.complete(prompt(UnitKind::options)); }) == ErrorKind::malformed_response);
    CHECK(kind_of([] { RemoteBackend::extract_content("not json"); }) == ErrorKind::malformed_response);
}

TEST_CASE("unreachable endpoint with no retries fails once with transport", "[gateway][remote]") {
    auto cfg = remote_config("http://127.0.0.1:1/v1/chat/completions");
    cfg.max_retries = 0;
    RemoteBackend backend(cfg);
    const auto start = std::chrono::steady_clock::now();
    CHECK(kind_of([&] { backend.complete(prompt(UnitKind::options)); }) == ErrorKind::transport);
    CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(2));
}

TEST_CASE("read timeout maps to timeout", "[gateway][remote]") {
    StubServer slow([](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::milliseconds(600));
        res.set_content(chat_reply("late"), "application/json");
    });
    auto cfg = remote_config(slow.endpoint());
    cfg.timeout = std::chrono::milliseconds(150);
    cfg.max_retries = 0;
    RemoteBackend backend(cfg);
    CHECK(kind_of([&] { backend.complete(prompt(UnitKind::options)); }) == ErrorKind::timeout);
}

TEST_CASE("backend config validation", "[gateway]") {
    BackendConfig cfg;
    CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::invalid_argument);
    cfg.kind = BackendKind::remote;
    CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::invalid_argument);
    cfg.endpoint = "ftp://x";
    cfg.model = "m";
    CHECK_NOTHROW(cfg.validate());
    CHECK(kind_of([&] { RemoteBackend b(cfg); }) == ErrorKind::invalid_argument);
    cfg.max_retries = -1;
    CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::invalid_argument);
}
