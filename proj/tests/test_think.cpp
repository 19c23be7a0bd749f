#include <doctest.h>

#include <filesystem>
#include <memory>
#include <random>

#include "lamp/backend.hpp"
#include "lamp/prompts.hpp"
#include "lamp/think.hpp"
#include "oracles.hpp"

using namespace lamp;
using namespace lamp::think;

namespace {

ExperienceEntry entry(std::uint64_t id, double reward, double prod = 1.0, double wealth = 1.0) {
    ExperienceEntry e;
    e.id = id;
    e.reward = reward;
    e.productivity = prod;
    e.wealth = wealth;
    e.reasoning = "r" + std::to_string(id);
    return e;
}

std::vector<std::uint64_t> ids(const std::vector<ExperienceEntry>& v) {
    std::vector<std::uint64_t> out;
    for (const auto& e : v) out.push_back(e.id);
    return out;
}

// Records every request and answers with the scripted policy.
struct Recording final : llm::LanguageBackend {
    std::vector<llm::PromptRequest> seen;
    std::string name() const override { return "recording"; }
    std::string raw_complete(const llm::PromptRequest& r) override {
        seen.push_back(r);
        return llm::scripted_policy(r, 0).dump();
    }
};

}  // namespace

TEST_CASE("news type truth table") {
    SchedulerConfig cfg;
    const std::vector<double> prev = {0.5, -10.0, 2.0};
    CHECK(classify_news_type(prev, prev, 0, cfg) == NewsKind::None);
    CHECK(classify_news_type(prev, prev, 20, cfg) == NewsKind::Long);
    CHECK(classify_news_type(prev, prev, 40, cfg) == NewsKind::Long);
    CHECK(classify_news_type({0.5, -10.0, 2.79}, prev, 3, cfg) == NewsKind::None);
    CHECK(classify_news_type({0.5, -10.0, 2.81}, prev, 3, cfg) == NewsKind::Short);
    CHECK(classify_news_type({0.5, -15.0, 2.0}, prev, 3, cfg) == NewsKind::Short);
    // Long takes precedence over a simultaneous shock, including at the first step.
    CHECK(classify_news_type({5.0, -10.0, 2.0}, prev, 20, cfg) == NewsKind::Long);
    CHECK(classify_news_type({5.0, -10.0, 2.0}, prev, 0, cfg) == NewsKind::Short);
    // A zero level uses the floored denominator.
    CHECK(classify_news_type({1e-9, 0.0, 0.0}, {0.0, 0.0, 0.0}, 1, cfg) == NewsKind::None);
    CHECK(classify_news_type({1e-7, 0.0, 0.0}, {0.0, 0.0, 0.0}, 1, cfg) == NewsKind::Short);
    CHECK(classify_news_type({std::nan(""), 0.0, 0.0}, {0.0, 0.0, 0.0}, 1, cfg) == NewsKind::Short);

    SchedulerConfig abs = cfg;
    abs.absolute = true;
    CHECK(max_indicator_change({0.5, -10.3, 2.0}, prev, abs) == doctest::Approx(0.3));
    CHECK(classify_news_type({0.5, -10.3, 2.0}, prev, 3, abs) == NewsKind::None);
    CHECK(classify_news_type({0.5, -10.5, 2.0}, prev, 3, abs) == NewsKind::Short);
}

TEST_CASE("news type agrees with a direct reading over random walks") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g(0.0, 0.3);
    SchedulerConfig cfg;
    cfg.long_interval = 7;
    std::vector<double> prev = {1.0, 1.0, 1.0};
    for (int t = 0; t < 2000; ++t) {
        auto now = prev;
        for (auto& x : now) x *= std::exp(g(rng));
        const auto want = oracle::news_type(now, prev, t, 7, cfg.sigma);
        const auto got = classify_news_type(now, prev, t, cfg);
        CHECK(static_cast<int>(got) == static_cast<int>(want));
        prev = now;
    }
}

TEST_CASE("news kind names round-trip") {
    for (auto k : {NewsKind::None, NewsKind::Short, NewsKind::Long}) CHECK(news_kind_from_string(to_string(k)) == k);
    CHECK_THROWS(news_kind_from_string("medium"));
}

TEST_CASE("top-k by reward keeps the newer entry on ties") {
    const std::vector<ExperienceEntry> v = {entry(1, -2.0), entry(2, -1.0), entry(3, -2.0), entry(4, -1.0),
                                            entry(5, -3.0)};
    CHECK(ids(top_k_by_reward(v, 3)) == std::vector<std::uint64_t>{4, 2, 3});
    CHECK(ids(top_k_by_reward(v, 10)).size() == 5);
    CHECK(top_k_by_reward({}, 3).empty());
    CHECK(top_k_by_reward(v, 0).empty());
}

TEST_CASE("short harvest replaces the buffer, long harvest appends keyed entries") {
    embed::HashingEncoder enc(1);
    ExperiencePools pool(2, {2, 3, 2});
    harvest_short(pool, 1, {entry(1, -1.0), entry(2, -0.5), entry(3, -4.0)});
    CHECK(ids(pool.short_buffers[1]) == std::vector<std::uint64_t>{2, 1});
    harvest_short(pool, 1, {entry(9, -9.0)});
    CHECK(ids(pool.short_buffers[1]) == std::vector<std::uint64_t>{9});
    CHECK(pool.short_buffers[0].empty());

    CHECK(harvest_long(pool, {entry(1, -1.0), entry(2, -0.5), entry(3, -4.0), entry(4, -0.1)}, enc) == 3);
    CHECK(harvest_long(pool, {entry(5, 0.0)}, enc) == 1);
    CHECK(ids(pool.long_store) == std::vector<std::uint64_t>{4, 2, 1, 5});
    for (const auto& e : pool.long_store) CHECK(e.key.norm() == doctest::Approx(1.0));
    pool.clear_short();
    CHECK(pool.short_buffers[1].empty());
    CHECK(pool.long_store.size() == 4);
}

TEST_CASE("retrieval ranks by similarity, then appends the short buffer without duplicates") {
    embed::HashingEncoder enc(2);
    ExperiencePools pool(1, {3, 5, 2});
    CHECK(retrieve_experience(pool, 0, {1.0, 1.0}, enc).empty());
    std::vector<ExperienceEntry> window;
    for (std::uint64_t i = 0; i < 8; ++i) window.push_back(entry(i, -static_cast<double>(i), 0.5 * i, 2.0 * i));
    pool.config.k2 = 8;
    harvest_long(pool, window, enc);
    pool.short_buffers[0] = {entry(100, 0.0), pool.long_store[0]};
    const PrivateObs obs{1.5, 6.0};  // identical to entry 3
    const auto got = retrieve_experience(pool, 0, obs, enc);
    REQUIRE(got.size() >= 3);
    CHECK(got[0].id == 3);
    std::vector<std::vector<double>> keys;
    std::vector<std::uint64_t> key_ids;
    for (const auto& e : pool.long_store) {
        keys.emplace_back(e.key.data(), e.key.data() + e.key.size());
        key_ids.push_back(e.id);
    }
    const auto q = enc.encode(query_text(obs.productivity, obs.wealth));
    auto want = oracle::cosine_top_k(keys, key_ids, std::vector<double>(q.data(), q.data() + q.size()), 2,
                                     kSimilarityResolution);
    for (std::uint64_t extra : {std::uint64_t{100}, pool.long_store[0].id})
        if (std::find(want.begin(), want.end(), extra) == want.end()) want.push_back(extra);
    CHECK(ids(got) == want);
}

TEST_CASE("nearest keys breaks exact ties by id") {
    ExperiencePools pool(1, {});
    embed::Vector k(2);
    k << 1.0, 0.0;
    for (std::uint64_t id : {7, 3, 5}) {
        auto e = entry(id, 0.0);
        e.key = k;
        pool.long_store.push_back(e);
    }
    const auto idx = nearest_keys(pool.long_store, k, 2);
    CHECK(pool.long_store[idx[0]].id == 3);
    CHECK(pool.long_store[idx[1]].id == 5);
}

TEST_CASE("the long store survives a save and load") {
    embed::HashingEncoder enc(3);
    ExperiencePools pool(2, {});
    harvest_long(pool, {entry(1, -1.0, 0.3, 0.7), entry(2, -0.5, 1.1, 2.2)}, enc);
    const auto path = std::filesystem::temp_directory_path() / "lamp_test_pool.jsonl";
    pool.save(path);
    ExperiencePools back(2, {});
    back.load(path);
    REQUIRE(back.long_store.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(back.long_store[i].id == pool.long_store[i].id);
        CHECK(back.long_store[i].reward == pool.long_store[i].reward);
        CHECK(back.long_store[i].key == pool.long_store[i].key);
        CHECK(back.long_store[i].reasoning == pool.long_store[i].reasoning);
    }
    std::filesystem::remove(path);
}

TEST_CASE("experience rendering") {
    CHECK(render_experiences({}) == llm::kNoExperience);
    auto e = entry(4, -1.25, 0.5, 3.0);
    e.agent = 2;
    const auto s = render_experience(e);
    CHECK(s.find("ID=Household3") != std::string::npos);
    CHECK(s.find("Reward=-1.2500") != std::string::npos);
    CHECK(render_experiences({e}).find("- ID=Household3") != std::string::npos);
}

TEST_CASE("news and reasoning calls fill every template slot") {
    auto rec = std::make_shared<Recording>();
    llm::LanguageClient client(rec);
    econ::GlobalObs a, b;
    a.wage = 1.0;
    b.wage = 1.5;
    const auto long_news = make_long_news(a, b, 20, {0.1, 0.2, 0.3}, client);
    CHECK(long_news.kind == NewsKind::Long);
    CHECK_FALSE(long_news.text.empty());
    const auto short_news = make_short_news(a, b, &long_news, 21, {0.1, 0.2, 0.3}, client);
    CHECK(short_news.kind == NewsKind::Short);

    AgentContext ctx{1, 21, {0.8, 5.0}, {1.0, 5.0, 0.5, 2.0}};
    const auto r = reason_short(short_news, &long_news, ctx, client);
    CHECK(r.agent == 1);
    CHECK(r.trigger == NewsKind::Short);
    CHECK(r.status == llm::status_from_wealth_rank(ctx.all_wealth, 1));
    const auto l = reason_long(long_news, ctx, {entry(1, -1.0)}, client);
    CHECK_FALSE(l.analysis.empty());
    REQUIRE(rec->seen.size() == 4);
    for (const auto& req : rec->seen) {
        CHECK(llm::placeholders(req.prompt).empty());
        CHECK(req.schema == llm::schema_id(req.kind));
    }
    CHECK(rec->seen[2].prompt.find(long_news.text) != std::string::npos);
    CHECK(rec->seen[3].prompt.find("ID=Household1") != std::string::npos);
    CHECK(rec->seen[0].prompt.find("- Wage: 1.5000") != std::string::npos);
}
