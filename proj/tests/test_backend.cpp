#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <memory>
#include <thread>

#include <httplib.h>

#include "lamp/backend.hpp"
#include "lamp/prompts.hpp"

using namespace lamp::llm;
using nlohmann::json;

namespace {

PromptRequest reason_request(int agent, std::vector<double> wealth) {
    PromptRequest r;
    r.kind = TemplateKind::ShortReason;
    r.schema = schema_id(r.kind);
    r.agent = agent;
    r.prompt = "prompt";
    r.context = {{"agent", agent}, {"period", 3}, {"productivity", 1.0}, {"wealth", wealth[static_cast<std::size_t>(agent)]},
                 {"all_wealth", wealth}};
    return r;
}

// Replays canned raw responses in order, then repeats the last one.
struct Canned final : LanguageBackend {
    std::vector<std::string> replies;
    std::vector<std::string> prompts;
    explicit Canned(std::vector<std::string> r) : replies(std::move(r)) {}
    std::string name() const override { return "canned"; }
    std::string raw_complete(const PromptRequest& req) override {
        prompts.push_back(req.prompt);
        const auto i = std::min(prompts.size(), replies.size()) - 1;
        return replies[i];
    }
};

struct Broken final : LanguageBackend {
    std::string name() const override { return "broken"; }
    std::string raw_complete(const PromptRequest&) override { throw TransportError("down"); }
};

// Chat-completions stand-in on a loopback port.
struct MockServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::atomic<int> hits{0};
    std::atomic<int> fail_first{0};
    json last_body;

    explicit MockServer(std::string content) {
        server.Post("/v1/chat/completions", [this, content](const httplib::Request& req, httplib::Response& res) {
            ++hits;
            last_body = json::parse(req.body);
            if (fail_first-- > 0) {
                res.status = 503;
                return;
            }
            res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump(),
                            "application/json");
        });
        server.Post("/v1/bad", [](const httplib::Request&, httplib::Response& res) { res.status = 400; });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~MockServer() {
        server.stop();
        thread.join();
    }
    std::string url(const std::string& path = "/v1/chat/completions") const {
        return "http://127.0.0.1:" + std::to_string(port) + path;
    }
};

RemoteConfig fast_config(const std::string& url) {
    RemoteConfig c;
    c.endpoint = url;
    c.model = "mock";
    c.backoff = {std::chrono::milliseconds(1)};
    c.timeout_seconds = 5;
    return c;
}

}  // namespace

TEST_CASE("kind names and schema ids are distinct and round-trip") {
    std::set<std::string> ids;
    for (auto k : {TemplateKind::LongReason, TemplateKind::ShortReason, TemplateKind::Reflect, TemplateKind::LongNews,
                   TemplateKind::ShortNews, TemplateKind::Candidates}) {
        CHECK(kind_from_string(to_string(k)) == k);
        ids.insert(schema_id(k));
    }
    CHECK(ids.size() == kTemplateKinds);
    CHECK_THROWS(kind_from_string("summary"));
}

TEST_CASE("json extraction tolerates fences and surrounding prose") {
    CHECK(extract_json_object(R"({"a": 1})") == R"({"a": 1})");
    CHECK(extract_json_object("```json\n{\"a\": {\"b\": 2}}\n```") == "{\"a\": {\"b\": 2}}");
    CHECK(extract_json_object(R"(Answer: {"s": "}{"} done)") == R"({"s": "}{"})");
    CHECK(extract_json_object(R"({"s": "quote \" brace }"})") == R"({"s": "quote \" brace }"})");
    CHECK_FALSE(extract_json_object("no object").has_value());
    CHECK_FALSE(extract_json_object("{\"open\": 1").has_value());
}

TEST_CASE("schema validation enforces keys and domains") {
    CHECK(validate_response(json{{"economic_status", 2}, {"reasoning", "x"}}, TemplateKind::ShortReason, 0).ok);
    CHECK_FALSE(validate_response(json{{"economic_status", 2}}, TemplateKind::ShortReason, 0).ok);
    CHECK_FALSE(validate_response(json::array(), TemplateKind::ShortReason, 0).ok);
    const json reflect = {{"wealth_guesses", {0, 1, 2}}, {"trust_levels", {0, 5, 10}}, {"reflection_text", "t"}};
    CHECK(validate_response(reflect, TemplateKind::Reflect, 3).ok);
    CHECK_FALSE(validate_response(reflect, TemplateKind::Reflect, 4).ok);
    const auto v = validate_response(json{{"news", ""}}, TemplateKind::LongNews, 0);
    CHECK_FALSE(v.ok);
    CHECK_FALSE(v.reason.empty());
    CHECK(parse_lenient("```\n{\"news\": \"n\"}\n```", TemplateKind::ShortNews, 0).value.at("news") == "n");
}

TEST_CASE("wealth-rank status uses the 30/50/20 split with index tie-breaks") {
    const std::vector<double> w = {5, 1, 9, 3, 7, 2, 8, 4, 6, 10};
    std::vector<int> status;
    for (std::size_t i = 0; i < w.size(); ++i) status.push_back(status_from_wealth_rank(w, i));
    CHECK(status == std::vector<int>{1, 0, 2, 0, 1, 0, 1, 1, 1, 2});
    const std::vector<double> flat(10, 1.0);
    CHECK(status_from_wealth_rank(flat, 0) == 0);
    CHECK(status_from_wealth_rank(flat, 2) == 0);
    CHECK(status_from_wealth_rank(flat, 3) == 1);
    CHECK(status_from_wealth_rank(flat, 8) == 2);
    CHECK_THROWS(status_from_wealth_rank(flat, 10));
}

TEST_CASE("scripted helpers") {
    CHECK(guess_composition(10) == std::array<std::size_t, 3>{5, 4, 1});
    CHECK(guess_composition(3) == std::array<std::size_t, 3>{1, 1, 1});
    CHECK(guess_composition(1) == std::array<std::size_t, 3>{0, 0, 1});
    for (std::size_t a = 0; a < 10; ++a)
        for (std::size_t b = 0; b < 10; ++b) {
            const int t = scripted_trust(a, b, 5);
            CHECK(t >= 7);
            CHECK(t <= 10);
            CHECK(t == scripted_trust(a, b, 5));
        }
    CHECK(percent_change(2.0, 3.0) == "+50.00%");
    CHECK(percent_change(2.0, 1.0) == "-50.00%");
    for (int s = 0; s < 3; ++s) {
        REQUIRE(phrase_bank(s).size() == 3);
        for (const auto& p : phrase_bank(s)) CHECK(statement_provenance(p) == s);
    }
    CHECK_FALSE(statement_provenance("unrelated").has_value());
}

TEST_CASE("scripted backend is deterministic and always schema-valid") {
    ScriptedBackend a(3), b(3);
    const std::vector<double> wealth = {3, 1, 2, 5, 4};
    for (int agent = 0; agent < 5; ++agent) {
        const auto req = reason_request(agent, wealth);
        const auto ra = a.raw_complete(req);
        CHECK(ra == b.raw_complete(req));
        const auto v = parse_lenient(ra, req.kind, 0);
        REQUIRE(v.ok);
        CHECK(v.value.at("economic_status") == status_from_wealth_rank(wealth, static_cast<std::size_t>(agent)));
    }
    PromptRequest r;
    r.kind = TemplateKind::Reflect;
    r.expected_num = 4;
    r.context = {{"agent", 1},
                 {"own_status", 2},
                 {"statements", {phrase_bank(2)[0], phrase_bank(0)[1], "plain words", phrase_bank(0)[2]}}};
    const auto v = parse_lenient(a.raw_complete(r), r.kind, 4);
    REQUIRE(v.ok);
    CHECK(v.value.at("wealth_guesses") == json{2, 0, 1, 0});
}

TEST_CASE("client retries once with a reminder, then gives up or falls back") {
    const std::string good = R"({"economic_status": 1, "reasoning": "ok"})";
    auto second_time = std::make_shared<Canned>(std::vector<std::string>{"not json", good});
    LanguageClient c1(second_time);
    CHECK(c1.complete(reason_request(0, {1.0})).at("reasoning") == "ok");
    REQUIRE(second_time->prompts.size() == 2);
    CHECK(second_time->prompts[1].size() > second_time->prompts[0].size());
    CHECK(c1.counts().rejects == 1);
    CHECK(c1.counts().by_kind[static_cast<std::size_t>(TemplateKind::ShortReason)] == 1);

    auto never = std::make_shared<Canned>(std::vector<std::string>{R"({"economic_status": 7, "reasoning": "x"})"});
    LanguageClient c2(never);
    CHECK_THROWS_AS(c2.complete(reason_request(0, {1.0})), BackendFormatError);
    CHECK(never->prompts.size() == 2);

    const auto audit_path = std::filesystem::temp_directory_path() / "lamp_test_audit.jsonl";
    auto audit = std::make_shared<AuditLog>(audit_path);
    LanguageClient c3(never, audit, std::make_shared<ScriptedBackend>(0));
    CHECK(c3.complete(reason_request(0, {1.0, 2.0})).at("economic_status") == 0);
    CHECK(c3.counts().fallbacks == 1);
    CHECK(audit->count() == 4);

    LanguageClient c4(std::make_shared<Broken>());
    CHECK_THROWS_AS(c4.complete(reason_request(0, {1.0})), TransportError);
    LanguageClient c5(std::make_shared<Broken>(), nullptr, std::make_shared<ScriptedBackend>(0));
    CHECK(c5.complete(reason_request(0, {1.0})).contains("reasoning"));
    std::filesystem::remove(audit_path);
}

TEST_CASE("remote backend speaks the chat-completions protocol") {
    MockServer mock("```json\n{\"news\": \"remote says hi\"}\n```");
    auto remote = std::make_shared<RemoteBackend>(fast_config(mock.url()));
    LanguageClient client(remote);
    PromptRequest r;
    r.kind = TemplateKind::LongNews;
    r.prompt = "Write news.";
    CHECK(client.complete(r).at("news") == "remote says hi");
    CHECK(mock.last_body.at("model") == "mock");
    CHECK(mock.last_body.at("messages").at(0).at("content") == "Write news.");
    CHECK(mock.last_body.at("temperature") == 0.0);

    mock.fail_first = 2;
    mock.hits = 0;
    CHECK(remote->raw_complete(r).find("remote says hi") != std::string::npos);
    CHECK(mock.hits == 3);

    mock.fail_first = 5;
    CHECK_THROWS_AS(remote->raw_complete(r), TransportError);
    mock.fail_first = 0;

    RemoteBackend bad(fast_config(mock.url("/v1/bad")));
    mock.hits = 0;
    CHECK_THROWS_AS(bad.raw_complete(r), TransportError);
    CHECK(mock.hits == 0);  // different route; the counter only tracks the chat route
    CHECK_THROWS(RemoteBackend(RemoteConfig{}));
}

TEST_CASE("remote transport failures fall back to the scripted backend") {
    auto config = fast_config("http://127.0.0.1:1/v1/chat/completions");
    config.transport_retries = 0;
    config.timeout_seconds = 1;
    LanguageClient client(std::make_shared<RemoteBackend>(config), nullptr, std::make_shared<ScriptedBackend>(0));
    CHECK(client.complete(reason_request(1, {1.0, 2.0})).at("economic_status") == 1);
    CHECK(client.counts().fallbacks == 1);
}

TEST_CASE("template placeholders and rendering") {
    CHECK(placeholders(short_reason_template()) ==
          std::vector<std::string>{"short_term_news", "recent_long_term_result", "private_observation[0]",
                                   "private_observation[1]"});
    CHECK(placeholders(long_reason_template()) ==
          std::vector<std::string>{"long_term_news", "private_observation[0]", "private_observation[1]",
                                   "similar_experience"});
    CHECK(placeholders(reflect_template()) ==
          std::vector<std::string>{"private_observation[0]", "private_observation[1]", "personal_reasoning",
                                   "personal_statement", "other_agents_statements", "expected_num"});
    CHECK(short_reason_template().starts_with(
        "You are a family decision inferent. Your goal is to improve the family’s self-utility under the "
        "Bewley–Aiyagari model (more labor ↓ utility, more consumption ↑ utility)."));
    CHECK(long_reason_template().find("Return exactly this JSON (no extra keys or commentary):\n{\n  \"analysis\": "
                                      "\"...\",\n  \"economic_status\": 0,\n  \"reasoning\": \"...\"\n}") !=
          std::string::npos);
    CHECK(render("a {x} b {y}", {{"x", "1"}, {"y", "{x}"}}) == "a 1 b {x}");
    CHECK_THROWS_AS(render("a {x}", {}), std::invalid_argument);
    CHECK_THROWS_AS(render("a {x}", {{"x", "1"}, {"z", "2"}}), std::invalid_argument);
    CHECK(bullet_list({"one", "two"}) == "- one\n- two");
}
