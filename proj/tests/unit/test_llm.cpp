#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "support.hpp"

#include "casework/error.hpp"
#include "casework/llm.hpp"
#include "casework/text.hpp"

#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

using namespace casework;
using namespace casework::llm;

namespace {

// Fails with the given kind `failures` times, then answers "ok".
class FlakyBackend final : public LlmBackend {
public:
    FlakyBackend(int failures, ErrorKind kind) : failures_(failures), kind_(kind) {}
    std::string name() const override { return "flaky"; }
    std::string fingerprint() const override { return "flaky"; }
    BackendReply complete(const ChatRequest&) override {
        ++calls;
        if (calls <= failures_) throw Error(kind_, "induced");
        return BackendReply{"ok", 11, 2, 1.5};
    }
    int calls = 0;

private:
    int failures_;
    ErrorKind kind_;
};

GatewayOptions fast_retry() {
    GatewayOptions o;
    o.retry_base_delay = std::chrono::milliseconds(1);
    return o;
}

} // namespace

TEST_CASE("render_prompt substitutes placeholders") {
    CHECK(render_prompt(PromptTemplate("t", "Hello {x}"), {{"x", "world"}}) == "Hello world");
    CHECK_THROWS_WITH_AS(render_prompt(PromptTemplate("t", "{a}{b}"), {{"a", ""}}),
                         doctest::Contains("MissingVariable: b"), Error);
    CHECK(render_prompt(PromptTemplate("t", "{x}"), {{"x", "1"}, {"unused", "2"}}) == "1");
    CHECK(render_prompt(PromptTemplate("t", "{{literal}} {x}"), {{"x", "{y}"}}) == "{literal} {y}");
    CHECK(placeholders("{a} {b_1} {{c}} {9}") == std::set<std::string>{"a", "b_1"});
    CHECK_THROWS_WITH_AS(PromptTemplate("t", "{a}", {"a", "b"}), doctest::Contains("InvalidTemplate"), Error);
    CHECK_NOTHROW(PromptTemplate("t", "{a}", {"a"}));
}

TEST_CASE("instructions, example, rules and document render in order") {
    const PromptTemplate t("allegations",
                           "## Instructions\n{instructions}\n## Example\n{example}\n## Rules\n{rules}\n## Document\n{doc}");
    const auto out = render_prompt(t, {{"instructions", "I"}, {"example", "E"}, {"rules", "R"}, {"doc", "D"}});
    const auto i = out.find("## Instructions"), e = out.find("## Example"), r = out.find("## Rules"),
               d = out.find("## Document");
    CHECK(i < e);
    CHECK(e < r);
    CHECK(r < d);
    CHECK(out.find('{') == std::string::npos);
}

TEST_CASE("approximate tokenizer and truncation") {
    ApproxTokenizer tok;
    CHECK(tok.count("") == 0);
    CHECK(tok.count("abcd") == 1);
    CHECK(tok.count("abcde") == 2);
    CHECK(tok.count("çççç") == 1);

    const std::string hundred(400, 'x'); // 100 tokens
    CHECK(truncate_to_budget(hundred, 200, tok) == hundred);
    CHECK(truncate_to_budget(hundred, 10, tok) == std::string(40, 'x'));
    CHECK_THROWS_AS(truncate_to_budget(hundred, 0, tok), Error);

    const std::string accented = "ação ação ação ";
    const auto cut = truncate_to_budget(accented, 2, tok);
    CHECK(tok.count(cut) <= 2);
    CHECK(accented.rfind(cut, 0) == 0);
    CHECK(text::decode_utf8(cut).malformed_sequences == 0);
}

TEST_CASE("requests are budget-checked at construction") {
    ApproxTokenizer tok;
    const auto req = ChatRequest::make(std::string(400, 'a'), 50, 0.0, tok, 150);
    CHECK(req.prompt_tokens == 100);
    CHECK(req.request_key == sha256_hex(std::string(400, 'a')));
    CHECK_THROWS_WITH_AS(ChatRequest::make(std::string(400, 'a'), 51, 0.0, tok, 150),
                         doctest::Contains("BudgetExceeded"), Error);
}

TEST_CASE("scripted backend lookup") {
    ScriptedBackend backend;
    const std::string prompt = "exact prompt";
    backend.add_exact(sha256_hex(prompt), "by key");
    backend.add_pattern({"alpha", "beta"}, {"gamma"}, "first");
    backend.add_pattern({"alpha"}, "second");

    ApproxTokenizer tok;
    const auto ask = [&](const std::string& p) { return backend.complete(ChatRequest::make(p, 1, 0, tok, 100)).text; };
    CHECK(ask(prompt) == "by key");
    CHECK(ask("alpha and beta") == "first");
    CHECK(ask("alpha beta gamma") == "second");
    CHECK(ask("alpha") == "second");
    CHECK(ask("alpha") == ask("alpha"));
    CHECK_THROWS_WITH_AS(ask("nothing matches"), doctest::Contains("UnscriptedRequest"), Error);
}

TEST_CASE("scripted transcripts from json") {
    const Json transcript{{"responses",
                           {{{"key", sha256_hex("k")}, {"response", "K"}},
                            {{"contains", {"x"}}, {"excludes", {"y"}}, {"response", "X"}}}}};
    auto a = ScriptedBackend::from_json(transcript);
    auto b = ScriptedBackend::from_json(transcript);
    CHECK(a.fingerprint() == b.fingerprint());
    auto other = ScriptedBackend::from_json(Json::array({{{"contains", {"x"}}, {"response", "Z"}}}));
    CHECK(a.fingerprint() != other.fingerprint());
    CHECK_THROWS_AS(ScriptedBackend::from_json(Json::array({{{"response", "no key"}}})), Error);

    LlmGateway gw(std::make_shared<ScriptedBackend>(a));
    CHECK(gw.complete("k").text == "K");
    CHECK(gw.complete("just x").text == "X");
    CHECK_THROWS_AS(gw.complete("x and y"), Error);
}

TEST_CASE("gateway retries transport errors only") {
    SUBCASE("two transport failures then success") {
        auto backend = std::make_shared<FlakyBackend>(2, ErrorKind::BackendError);
        LlmGateway gw(backend, fast_retry());
        CHECK(gw.complete("hi").text == "ok");
        CHECK(backend->calls == 3);
    }
    SUBCASE("three transport failures exhaust the attempts") {
        auto backend = std::make_shared<FlakyBackend>(3, ErrorKind::BackendError);
        LlmGateway gw(backend, fast_retry());
        CHECK_THROWS_WITH_AS(gw.complete("hi"), doctest::Contains("BackendError"), Error);
        CHECK(backend->calls == 3);
        CHECK(gw.audit_entries().empty());
    }
    SUBCASE("content errors are never retried") {
        auto backend = std::make_shared<FlakyBackend>(1, ErrorKind::ParseError);
        LlmGateway gw(backend, fast_retry());
        CHECK_THROWS_AS(gw.complete("hi"), Error);
        CHECK(backend->calls == 1);
    }
}

TEST_CASE("gateway audit and accounting") {
    auto backend = testsupport::scripted(Json::array({testsupport::pattern({"q"}, "answer text")}));
    LlmGateway gw(backend);
    auto a = gw.with_stage("alpha");
    auto b = gw.with_stage("beta");
    a.complete("q1");
    const auto mark = gw.audit_mark();
    b.complete("q22");
    b.complete("q333");
    CHECK(gw.audit_entries().size() == 3);
    CHECK(gw.audit_entries("beta").size() == 2);
    CHECK(gw.audit_entries_since(mark).size() == 2);
    CHECK(gw.audit_entries_since(99).empty());
    CHECK(a.stage() == "alpha");

    std::size_t in = 0, out = 0;
    for (const auto& e : gw.audit_entries()) {
        in += e.tokens_in;
        out += e.tokens_out;
        CHECK(e.request_key.size() == 64);
    }
    CHECK(in == gw.total_tokens_in());
    CHECK(out == gw.total_tokens_out());
    CHECK(gw.audit_entries()[0].tokens_in == ApproxTokenizer().count("q1"));
    CHECK(gw.audit_entries()[0].tokens_out == ApproxTokenizer().count("answer text"));

    const Json j = gw.audit_entries()[1];
    CHECK(j.get<AuditEntry>().stage == "beta");
}

TEST_CASE("gateway reports the prompt budget and rejects oversized prompts") {
    GatewayOptions o;
    o.context_budget = 2000;
    o.max_output_tokens = 500;
    LlmGateway gw(testsupport::scripted(Json::array({testsupport::pattern({"a"}, "x")})), o);
    CHECK(gw.prompt_budget() == 1500);
    CHECK_NOTHROW(gw.make_request(std::string(6000, 'a')));
    CHECK_THROWS_WITH_AS(gw.make_request(std::string(6001, 'a')), doctest::Contains("BudgetExceeded"), Error);

    GatewayOptions bad;
    bad.context_budget = 100;
    bad.max_output_tokens = 100;
    CHECK_THROWS_AS(LlmGateway(testsupport::scripted(Json::array()), bad), Error);
}

TEST_CASE("concurrent completions against the scripted backend are consistent") {
    auto backend = testsupport::scripted(
        Json::array({testsupport::pattern({"even"}, "E"), testsupport::pattern({"odd"}, "O")}));
    LlmGateway gw(backend);
    std::atomic<int> wrong{0};
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t) {
        threads.emplace_back([&, t] {
            auto local = gw.with_stage("t" + std::to_string(t));
            for (int i = 0; i < 50; ++i) {
                const bool even = (i + t) % 2 == 0;
                if (local.complete(even ? "even" : "odd").text != (even ? "E" : "O")) ++wrong;
            }
        });
    }
    for (auto& th : threads) th.join();
    CHECK(wrong == 0);
    CHECK(gw.audit_entries().size() == 400);
}

TEST_CASE("rate limiter spaces requests") {
    RateLimiter limiter(1200.0); // one slot every 50 ms
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < 4; ++i) limiter.acquire();
    const auto elapsed = std::chrono::steady_clock::now() - start;
    CHECK(elapsed >= std::chrono::milliseconds(145));
    CHECK_THROWS_AS(RateLimiter(0.0), Error);
}

TEST_CASE("http backend speaks chat-completions JSON") {
    httplib::Server server;
    std::string seen_auth;
    Json seen_body;
    std::atomic<int> hits{0};
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        seen_auth = req.get_header_value("Authorization");
        seen_body = Json::parse(req.body);
        if (seen_body["messages"][0]["content"] == "fail") {
            res.status = 503;
            return;
        }
        if (seen_body["messages"][0]["content"] == "bad") {
            res.status = 400;
            res.set_content("nope", "text/plain");
            return;
        }
        res.set_content(Json{{"choices", {{{"message", {{"role", "assistant"}, {"content", "pong"}}}}}},
                             {"usage", {{"prompt_tokens", 7}, {"completion_tokens", 1}}}}
                            .dump(),
                        "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ::setenv("CASEWORK_TEST_TOKEN", "s3cret", 1);
    HttpBackendOptions o;
    o.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    o.model = "test-model";
    o.api_key_env = "CASEWORK_TEST_TOKEN";
    o.timeout = std::chrono::seconds(5);
    auto backend = std::make_shared<HttpBackend>(o);
    GatewayOptions go = fast_retry();
    LlmGateway gw(backend, go);

    const auto r = gw.complete("ping");
    CHECK(r.text == "pong");
    CHECK(r.tokens_in == 7);
    CHECK(r.tokens_out == 1);
    CHECK(seen_auth == "Bearer s3cret");
    CHECK(seen_body["model"] == "test-model");
    CHECK(seen_body["temperature"] == 0.0);

    hits = 0;
    CHECK_THROWS_WITH_AS(gw.complete("fail"), doctest::Contains("BackendError"), Error);
    CHECK(hits == 3); // retried
    hits = 0;
    CHECK_THROWS_WITH_AS(gw.complete("bad"), doctest::Contains("ParseError"), Error);
    CHECK(hits == 1);

    server.stop();
    th.join();

    CHECK(backend->fingerprint().find("test-model") != std::string::npos);
    CHECK_THROWS_AS(HttpBackend(HttpBackendOptions{"not a url", "m", "", std::chrono::seconds(1)}), Error);
}
