#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>

#include "support.hpp"

using namespace clarichain;

namespace {

const std::string kQuery = "return stream from generator in Java";

Chain chain_with(std::shared_ptr<Backend> backend) {
    return Chain::make(testsupport::table_i(), testsupport::bundled_prompts(), std::move(backend));
}

std::shared_ptr<testsupport::FunctionBackend> canned() {
    return std::make_shared<testsupport::FunctionBackend>(testsupport::canned_response);
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an Error");
    return ErrorKind::parse;
}

std::size_t rank_of(const std::vector<std::string>& apis, const std::string& name) {
    for (std::size_t i = 0; i < apis.size(); ++i) {
        if (apis[i] == name) return i + 1;
    }
    return 0;
}

}  // namespace

TEST_CASE("starting a session validates the query and config", "[session]") {
    auto chain = chain_with(canned());
    CHECK(kind_of([&] { start_session(chain, "", Variant::full); }) == ErrorKind::empty_query);
    CHECK(kind_of([&] { start_session(chain, " \t\n", Variant::full); }) == ErrorKind::empty_query);
    SessionConfig bad;
    bad.n_options = 0;
    CHECK(kind_of([&] { start_session(chain, kQuery, Variant::full, bad); }) == ErrorKind::invalid_argument);

    auto s = start_session(chain, "  " + kQuery + " ", Variant::full);
    CHECK(s.query() == kQuery);
    CHECK(s.round() == 0);
    CHECK_FALSE(s.pending());
    CHECK_FALSE(s.closed());

    std::set<std::string> ids;
    for (int i = 0; i < 200; ++i) ids.insert(start_session(chain, kQuery, Variant::full).id());
    CHECK(ids.size() == 200);
    CHECK(s.id().size() == 32);
}

TEST_CASE("two-round dialogue on the bundled example", "[session]") {
    auto backend = std::make_shared<testsupport::RecordingBackend>(testsupport::fig4_backend());
    auto s = start_session(chain_with(backend), kQuery, Variant::full);

    auto r1 = s.next_question();
    CHECK(r1.aspect == AspectKind::type);
    CHECK(r1.question == "What type of generator is being used?");
    CHECK(r1.options.options.size() == 5);
    CHECK(r1.options.options[0] == "java.util.Random");
    CHECK(s.pending());
    CHECK(s.round() == 0);

    auto a1 = s.submit_answer(r1.options.options[0]);
    CHECK(s.round() == 1);
    CHECK(a1.extended_query == "return stream from a java.util.Random generator in Java");
    CHECK(rank_of(a1.recommendations.apis, "java.util.Random.nextDouble") == 5);

    auto r2 = s.next_question();
    CHECK(r2.aspect == AspectKind::purpose);
    auto a2 = s.submit_answer("pseudorandom double values");
    CHECK(s.round() == 2);
    CHECK(a2.extended_query.find("pseudorandom double values") != std::string::npos);
    CHECK(a2.recommendations.apis.size() == 7);
    CHECK(rank_of(a2.recommendations.apis, "java.util.Random.nextDouble") == 1);

    // The second aspect prompt sees the first answer as its previous answer.
    const auto seen = backend->seen();
    REQUIRE(seen.size() == 10);
    CHECK(seen[5].unit == UnitKind::best_aspect);
    CHECK(seen[5].text.find("Previous answer: java.util.Random -> Aspect:") != std::string::npos);
    CHECK(seen[6].text.find("- java.util.Random\n") != std::string::npos);

    auto t = to_json(s.end());
    CHECK(t["closed"] == true);
    CHECK(t["round"] == 2);
    REQUIRE(t["rounds"].size() == 2);
    CHECK(t["rounds"][0]["aspect"] == "type");
    CHECK(t["rounds"][1]["answer"] == "pseudorandom double values");
    CHECK(t["rounds"][0]["prompts"].size() == 5);
    CHECK(t["rounds"][0]["examples"].size() >= 1);
}

TEST_CASE("free-text answers are accepted verbatim after trimming", "[session]") {
    auto backend = canned();
    auto s = start_session(chain_with(backend), kQuery, Variant::full);
    s.next_question();
    s.submit_answer("  something not on the list  ");
    CHECK(s.history_answers().back() == "something not on the list");
    const auto seen = backend->seen();
    CHECK(seen[3].unit == UnitKind::query_extension);
    CHECK(seen[3].text.find("A1: something not on the list\n") != std::string::npos);
}

TEST_CASE("no_k sends no examples block and retrieves nothing", "[session]") {
    auto backend = canned();
    auto s = start_session(chain_with(backend), kQuery, Variant::no_k);
    s.next_question();
    CHECK(backend->seen()[0].text.find(kExamplesOpen) == std::string::npos);
    CHECK(s.transcript().rounds[0].example_sources.empty());

    auto full_backend = canned();
    auto f = start_session(chain_with(full_backend), kQuery, Variant::full);
    f.next_question();
    CHECK(full_backend->seen()[0].text.find(kExamplesOpen) != std::string::npos);
}

TEST_CASE("state errors", "[session]") {
    auto s = start_session(chain_with(canned()), kQuery, Variant::full);
    CHECK(kind_of([&] { s.submit_answer("x"); }) == ErrorKind::no_pending_question);
    s.next_question();
    CHECK(kind_of([&] { s.next_question(); }) == ErrorKind::pending_question);
    CHECK(kind_of([&] { s.submit_answer("   "); }) == ErrorKind::empty_answer);
    CHECK(s.pending());
    s.submit_answer("x");
    s.next_question();
    s.submit_answer("y");
    s.next_question();
    s.submit_answer("z");
    CHECK(s.round() == 3);
    CHECK(kind_of([&] { s.next_question(); }) == ErrorKind::round_limit);
    s.end();
    CHECK(kind_of([&] { s.next_question(); }) == ErrorKind::session_closed);
    CHECK(kind_of([&] { s.submit_answer("x"); }) == ErrorKind::session_closed);
}

TEST_CASE("an unparseable aspect is retried once", "[session]") {
    int aspect_calls = 0;
    auto once = std::make_shared<testsupport::FunctionBackend>([&](const RenderedPrompt& p) {
        if (p.unit == UnitKind::best_aspect && aspect_calls++ == 0) return std::string("hmm, hard to say");
        return testsupport::canned_response(p);
    });
    auto s = start_session(chain_with(once), kQuery, Variant::full);
    CHECK(s.next_question().aspect == AspectKind::purpose);
    CHECK(aspect_calls == 2);

    auto never = std::make_shared<testsupport::FunctionBackend>([](const RenderedPrompt& p) {
        return p.unit == UnitKind::best_aspect ? std::string("?") : testsupport::canned_response(p);
    });
    auto t = start_session(chain_with(never), kQuery, Variant::full);
    CHECK(kind_of([&] { t.next_question(); }) == ErrorKind::unparseable_aspect);
    CHECK(never->seen().size() == 2);
    CHECK_FALSE(t.pending());
}

TEST_CASE("a failed answer leaves the session unchanged", "[session]") {
    bool fail = true;
    auto flaky = std::make_shared<testsupport::FunctionBackend>([&](const RenderedPrompt& p) {
        if (p.unit == UnitKind::api_recommendation && fail) return std::string("nothing useful");
        return testsupport::canned_response(p);
    });
    auto s = start_session(chain_with(flaky), kQuery, Variant::full);
    s.next_question();
    CHECK(kind_of([&] { s.submit_answer("x"); }) == ErrorKind::empty_apis);
    CHECK(s.round() == 0);
    CHECK(s.pending());
    CHECK_FALSE(s.extended_query());
    CHECK_FALSE(s.transcript().rounds[0].answer);
    fail = false;
    s.submit_answer("x");
    CHECK(s.round() == 1);
    CHECK(s.transcript().rounds[0].prompts.size() == 5);
}

TEST_CASE("round k extends the query with exactly k Q/A pairs", "[session][property]") {
    auto backend = canned();
    SessionConfig cfg;
    cfg.max_rounds = 5;
    auto s = start_session(chain_with(backend), kQuery, Variant::full, cfg);
    int last_round = 0;
    for (int k = 1; k <= 5; ++k) {
        s.next_question();
        s.submit_answer("answer " + std::to_string(k));
        CHECK(s.round() == last_round + 1);
        last_round = s.round();
        const auto seen = backend->seen();
        const auto& ext = seen[seen.size() - 2];
        REQUIRE(ext.unit == UnitKind::query_extension);
        for (int i = 1; i <= k; ++i) {
            CHECK(ext.text.find("Q" + std::to_string(i) + ": ") != std::string::npos);
            CHECK(ext.text.find("A" + std::to_string(i) + ": answer " + std::to_string(i) + "\n") != std::string::npos);
        }
        CHECK(ext.text.find("Q" + std::to_string(k + 1) + ": ") == std::string::npos);
    }
}

TEST_CASE("full and no_kps agree when the store has one path", "[session]") {
    auto a = canned();
    auto b = canned();
    auto sa = start_session(chain_with(a), kQuery, Variant::full);
    auto sb = start_session(chain_with(b), kQuery, Variant::no_kps);
    for (const char* answer : {"int values", "double values"}) {
        sa.next_question();
        sb.next_question();
        sa.submit_answer(answer);
        sb.submit_answer(answer);
    }
    const auto pa = a->seen();
    const auto pb = b->seen();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].text == pb[i].text);
}

TEST_CASE("random operation sequences follow the state machine", "[session][property]") {
    auto chain = chain_with(canned());
    std::mt19937 rng(2024);
    for (int trial = 0; trial < 300; ++trial) {
        SessionConfig cfg;
        cfg.max_rounds = 1 + static_cast<int>(rng() % 4);
        auto s = start_session(chain, kQuery, Variant::full, cfg);
        bool closed = false, pending = false;
        int round = 0;
        for (int step = 0; step < 25; ++step) {
            const auto op = rng() % 7;
            std::optional<ErrorKind> expected;
            if (op < 3) {
                if (closed) expected = ErrorKind::session_closed;
                else if (pending) expected = ErrorKind::pending_question;
                else if (round >= cfg.max_rounds) expected = ErrorKind::round_limit;
                try {
                    s.next_question();
                    REQUIRE_FALSE(expected);
                    pending = true;
                } catch (const Error& e) {
                    REQUIRE(expected);
                    REQUIRE(e.kind() == *expected);
                }
            } else if (op < 6) {
                const bool blank = op == 5;
                if (closed) expected = ErrorKind::session_closed;
                else if (!pending) expected = ErrorKind::no_pending_question;
                else if (blank) expected = ErrorKind::empty_answer;
                try {
                    s.submit_answer(blank ? " " : "ok");
                    REQUIRE_FALSE(expected);
                    pending = false;
                    ++round;
                } catch (const Error& e) {
                    REQUIRE(expected);
                    REQUIRE(e.kind() == *expected);
                }
            } else if (rng() % 4 == 0) {
                s.end();
                closed = true;
            }
            REQUIRE(s.round() == round);
            REQUIRE(s.pending() == pending);
            REQUIRE(s.closed() == closed);
            REQUIRE(s.history_questions().size() == static_cast<std::size_t>(round + (pending ? 1 : 0)));
        }
    }
}
