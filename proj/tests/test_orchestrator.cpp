#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lamp/event_log.hpp"
#include "lamp/metrics.hpp"
#include "lamp/orchestrator.hpp"

using namespace lamp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / "lamp_unit" / name;
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

RunConfig tiny(const std::string& name) {
    RunConfig c;
    c.episodes = 2;
    c.steps = 25;
    c.long_interval = 10;
    c.batch_size = 16;
    c.warmup = 16;
    c.out_dir = scratch(name);
    return c;
}

}  // namespace

TEST_CASE("enum names round-trip and ablation lists parse") {
    for (auto p : {PolicyKind::Lamp, PolicyKind::Maddpg, PolicyKind::Random, PolicyKind::Rule})
        CHECK(policy_from_string(to_string(p)) == p);
    CHECK(parse_ablations("").empty());
    CHECK(parse_ablations("speak,long_term") == std::set<Ablation>{Ablation::Speak, Ablation::LongTerm});
    CHECK(parse_ablations("experience_pool,short_term,timing_scheduler").size() == 3);
    CHECK_THROWS(parse_ablations("speak,vision"));
}

TEST_CASE("configuration validation") {
    RunConfig c;
    CHECK_NOTHROW(c.validate());
    auto bad = c;
    bad.gamma = 1.0;
    CHECK_THROWS(bad.validate());
    bad = c;
    bad.batch_size = 0;
    CHECK_THROWS(bad.validate());
    bad = c;
    bad.policy = PolicyKind::Maddpg;
    bad.ablations = {Ablation::Speak};
    CHECK_THROWS(bad.validate());
    bad = c;
    bad.backend = "local";
    CHECK_THROWS(bad.validate());
    CHECK(c.maddpg_config(10).lang_dim == 5);
    c.policy = PolicyKind::Maddpg;
    CHECK(c.maddpg_config(10).lang_dim == 0);
    c.mean_reward_critic = true;
    CHECK(c.maddpg_config(10).critic_heads() == 1);
    CHECK(to_json(RunConfig{}).at("seed") == 7);
}

TEST_CASE("training is deterministic and writes every artifact") {
    auto a = tiny("det_a");
    auto b = tiny("det_b");
    const auto sa = run_training(a);
    const auto sb = run_training(b);
    for (const char* f : {"episodes.csv", "steps.csv", "events.log", "config.json"}) {
        REQUIRE(fs::exists(a.out_dir / f));
        CHECK(slurp(a.out_dir / f) == slurp(b.out_dir / f));
    }
    CHECK(sa.train_updates > 0);
    CHECK(sa.train_updates == sb.train_updates);
    CHECK(sa.losses_finite);
    CHECK(sa.metrics.episodes.size() == 2);
    CHECK(sa.calls.total() > 0);

    auto c = tiny("det_c");
    c.seed = 8;
    run_training(c);
    CHECK(slurp(c.out_dir / "episodes.csv") != slurp(a.out_dir / "episodes.csv"));
}

TEST_CASE("every step of the event log follows the pipeline grammar") {
    auto c = tiny("grammar");
    const auto s = run_training(c);
    const auto records = events::read_log(c.out_dir / "events.log");
    CHECK(events::validate_log(records).empty());
    const auto counts = events::count_events(records);
    CHECK(counts == s.events);
    CHECK(counts.at("news") == counts.at("step"));
    CHECK(counts.at("news:long") == 4);  // t = 10, 20 in each of two episodes
    CHECK(counts.at("reflect") == 40);
    CHECK(counts.at("episode_end") == 2);

    // A shuffled log is rejected.
    auto broken = records;
    for (std::size_t i = 0; i + 1 < broken.size(); ++i)
        if (broken[i].at("ev") == "act" && broken[i + 1].at("ev") == "step") {
            std::swap(broken[i], broken[i + 1]);
            break;
        }
    CHECK_FALSE(events::validate_log(broken).empty());
}

TEST_CASE("ablations silence exactly their component") {
    auto base = tiny("abl_base");
    const auto full = run_training(base).events;
    auto count = [](const std::map<std::string, std::size_t>& m, const char* k) {
        const auto it = m.find(k);
        return it == m.end() ? std::size_t{0} : it->second;
    };
    auto speak = tiny("abl_speak");
    speak.ablations = {Ablation::Speak};
    const auto s = run_training(speak).events;
    CHECK(count(s, "reflect") == 0);
    CHECK(count(s, "speak") == 0);
    CHECK(count(s, "retrieve") == count(full, "retrieve"));
    CHECK(count(s, "news:long") == count(full, "news:long"));

    auto pool = tiny("abl_pool");
    pool.ablations = {Ablation::ExperiencePool};
    const auto p = run_training(pool).events;
    CHECK(count(p, "retrieve") == 0);
    CHECK(count(p, "harvest_long") == 0);
    CHECK(count(p, "reflect") == count(full, "reflect"));

    auto shrt = tiny("abl_short");
    shrt.ablations = {Ablation::ShortTerm};
    const auto st = run_training(shrt).events;
    CHECK(count(st, "news:short") == 0);
    CHECK(count(st, "news:long") == count(full, "news:long"));
}

TEST_CASE("the random trigger uses the calibrated short rate") {
    auto c = tiny("sched");
    c.ablations = {Ablation::TimingScheduler};
    const auto s = run_training(c);
    CHECK(s.short_rate == doctest::Approx(calibrate_short_rate(c)));
    CHECK(s.short_rate >= 0.0);
    CHECK(s.short_rate <= 1.0);
    c.random_short_rate = 0.0;
    c.out_dir = scratch("sched_zero");
    const auto z = run_training(c);
    CHECK(z.events.count("news:short") == 0);
}

TEST_CASE("metrics round-trip through CSV") {
    metrics::RunMetrics m;
    m.episodes.push_back({0, 100, -1.0 / 3.0, -250.125, 33.3, 44.4, 0.1234567890123, 1e-300});
    m.steps.push_back({0, 5, 0.1, 0.2, std::nan(""), 0.4, "short", 12});
    const auto dir = scratch("csv");
    fs::create_directories(dir);
    metrics::write_metrics(m, dir);
    const auto back = metrics::read_metrics(dir);
    REQUIRE(back.episodes.size() == 1);
    CHECK(back.episodes[0].avg_reward == m.episodes[0].avg_reward);
    CHECK(back.episodes[0].final_gini == m.episodes[0].final_gini);
    CHECK(back.episodes[0].gdp == m.episodes[0].gdp);
    CHECK(std::isnan(back.steps[0].actor_loss));
    CHECK(back.steps[0].news_kind == "short");
    CHECK(slurp(dir / "episodes.csv").rfind(metrics::kEpisodeHeader, 0) == 0);
}

TEST_CASE("mean and sample standard deviation") {
    const auto a = metrics::mean_sd({2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0});
    CHECK(a.mean == doctest::Approx(5.0));
    CHECK(a.sd == doctest::Approx(std::sqrt(32.0 / 7.0)));
    CHECK(metrics::mean_sd({3.0}).sd == 0.0);
}

TEST_CASE("baselines simulate without learning and eval aggregates seeds") {
    auto c = tiny("baseline");
    c.policy = PolicyKind::Rule;
    const auto s = simulate(c, std::nullopt);
    CHECK(s.train_updates == 0);
    CHECK(s.calls.total() == 0);
    CHECK(s.metrics.episodes.size() == 2);

    c.policy = PolicyKind::Random;
    c.out_dir = scratch("eval");
    const auto report = run_eval(c, std::nullopt, {1, 2, 3});
    REQUIRE(report.rows.size() == 3);
    std::vector<double> rewards;
    for (const auto& r : report.rows) rewards.push_back(r.avg_reward);
    const auto want = metrics::mean_sd(rewards);
    CHECK(report.summary.at("avg_reward").mean == doctest::Approx(want.mean));
    CHECK(report.summary.at("avg_reward").sd == doctest::Approx(want.sd));
    CHECK(fs::exists(c.out_dir / "eval.csv"));
}

TEST_CASE("a trained checkpoint reloads for simulation") {
    auto c = tiny("ckpt");
    c.policy = PolicyKind::Maddpg;
    run_training(c);
    auto sim = c;
    sim.out_dir = scratch("ckpt_sim");
    const auto a = simulate(sim, c.out_dir);
    sim.out_dir = scratch("ckpt_sim2");
    const auto b = simulate(sim, c.out_dir);
    CHECK(a.metrics.episodes[0].avg_reward == b.metrics.episodes[0].avg_reward);
    CHECK_THROWS(simulate(sim, scratch("missing")));
}
