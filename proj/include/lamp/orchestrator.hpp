#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "lamp/backend.hpp"
#include "lamp/maddpg.hpp"
#include "lamp/metrics.hpp"
#include "lamp/think.hpp"

namespace lamp {

enum class PolicyKind { Lamp, Maddpg, Random, Rule };
std::string to_string(PolicyKind p);
PolicyKind policy_from_string(const std::string& s);

enum class Ablation { Speak, ExperiencePool, LongTerm, ShortTerm, TimingScheduler };
std::string to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);
/// Comma-separated list; empty string gives the empty set.
std::set<Ablation> parse_ablations(const std::string& csv);

struct RunConfig {
    std::string scenario = "s1";
    std::uint64_t seed = 7;
    int episodes = 20;
    int steps = 100;
    std::string backend = "scripted";  // scripted | remote
    PolicyKind policy = PolicyKind::Lamp;
    std::set<Ablation> ablations;
    std::filesystem::path out_dir = "runs/default";

    // Trainer.
    double gamma = 0.975;
    double tau = 5e-3;
    double actor_lr = 3e-4;
    double critic_lr = 3e-4;
    double projection_lr = 3e-4;
    std::size_t buffer_capacity = 1'000'000;
    std::size_t batch_size = 256;
    std::size_t warmup = 512;  // transitions stored before the first update
    double exploration_std = 0.1;
    /// Lower bound on per-household rewards fed to the critic; metrics keep raw utilities.
    /// A collapse transition is charged reward_floor / (1 - gamma).
    double reward_floor = -20.0;
    double reward_scale = 1.0;  // multiplies critic rewards; leaves the optimal policy unchanged
    bool mean_reward_critic = false;  // one critic output for the mean household reward

    // Language pipeline.
    int long_interval = 20;
    double sigma = 0.4;
    bool sigma_absolute = false;
    std::size_t k1 = 3, k2 = 5, k3 = 3;
    std::size_t embed_dim = 5;
    std::string embed_sources = "union";
    std::string encoder = "hash";  // hash | remote
    std::size_t encoder_dim = 256;
    std::size_t selector_key_dim = 16;
    double selector_temperature = 1.0;
    bool train_selector = false;
    double selector_lr = 1e-2;
    /// Short-news rate for the random trigger; negative means calibrate from a
    /// rule-scheduler pass with the random policy on the same seed.
    double random_short_rate = -1.0;

    // Backend plumbing.
    bool fallback_to_scripted = false;
    bool audit_prompts = false;
    int max_in_flight = 4;

    // Misc.
    bool random_government = false;
    bool eval_harvest = false;
    std::optional<std::filesystem::path> pool_file;
    int checkpoint_every = 0;  // episodes; 0 writes only the final checkpoint
    bool write_events = true;

    void validate() const;
    bool ablated(Ablation a) const { return ablations.contains(a); }
    bool language() const { return policy == PolicyKind::Lamp; }
    marl::MaddpgConfig maddpg_config(std::size_t n_agents) const;
};

nlohmann::json to_json(const RunConfig& c);

struct RunSummary {
    metrics::RunMetrics metrics;
    llm::CallCounts calls;
    std::map<std::string, std::size_t> events;
    double short_rate = 0.0;  // resolved random-trigger short rate (timing ablation only)
    std::size_t train_updates = 0;
    bool losses_finite = true;
};

/// Trains for config.episodes episodes and writes metrics, events, the config
/// snapshot and checkpoints under config.out_dir.
RunSummary run_training(const RunConfig& config);

/// Runs config.episodes episodes with exploration and learning off.
/// For learned policies, `checkpoint` names the directory of a training run.
RunSummary simulate(const RunConfig& config, const std::optional<std::filesystem::path>& checkpoint);

struct EvalRow {
    std::uint64_t seed = 0;
    double avg_reward = 0.0;
    double social_welfare = 0.0;
    double years = 0.0;
    double final_gini = 0.0;
    double gdp = 0.0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::map<std::string, metrics::MeanSd> summary;  // per column over seeds
};

/// simulate() once per seed; per-seed rows average that seed's episodes.
/// Writes eval.csv under config.out_dir.
EvalReport run_eval(const RunConfig& config, const std::optional<std::filesystem::path>& checkpoint,
                    const std::vector<std::uint64_t>& seeds);

/// Fraction of non-long steps the rule scheduler marks short when households
/// act randomly on this seed.
double calibrate_short_rate(const RunConfig& config);

}  // namespace lamp
