#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "lamp/orchestrator.hpp"

namespace {

struct CliOptions {
    lamp::RunConfig run;
    std::string policy = "lamp";
    std::string ablate;
    std::string out = "runs/default";
    std::string checkpoint;
    std::string pool_file;
    std::vector<std::uint64_t> seeds;
};

void add_common(CLI::App* cmd, CliOptions& o) {
    auto& r = o.run;
    cmd->add_option("--scenario", r.scenario, "s1, s2, s3 or a scenario JSON path")->capture_default_str();
    cmd->add_option("--seed", r.seed, "run seed")->capture_default_str();
    cmd->add_option("--episodes", r.episodes, "episodes")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--steps", r.steps, "steps per episode")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--backend", r.backend, "language backend")->check(CLI::IsMember({"scripted", "remote"}))->capture_default_str();
    cmd->add_option("--policy", o.policy, "household policy")
        ->check(CLI::IsMember({"lamp", "maddpg", "random", "rule"}))
        ->capture_default_str();
    cmd->add_option("--ablate", o.ablate, "comma list of speak,experience_pool,long_term,short_term,timing_scheduler");
    cmd->add_option("--out", o.out, "output directory")->capture_default_str();

    cmd->add_option("--batch-size", r.batch_size)->capture_default_str();
    cmd->add_option("--warmup", r.warmup, "transitions before the first update")->capture_default_str();
    cmd->add_option("--buffer", r.buffer_capacity)->capture_default_str();
    cmd->add_option("--gamma", r.gamma)->capture_default_str();
    cmd->add_option("--tau", r.tau)->capture_default_str();
    cmd->add_option("--actor-lr", r.actor_lr)->capture_default_str();
    cmd->add_option("--critic-lr", r.critic_lr)->capture_default_str();
    cmd->add_option("--exploration-std", r.exploration_std)->capture_default_str();
    cmd->add_option("--reward-scale", r.reward_scale, "scale applied to rewards fed to the critic")->capture_default_str();
    cmd->add_flag("--mean-reward-critic", r.mean_reward_critic, "critic regresses the mean household reward");
    cmd->add_option("--reward-floor", r.reward_floor, "lower clip of rewards fed to the critic")->capture_default_str();

    cmd->add_option("--long-interval", r.long_interval, "periods between long-term checkpoints")->capture_default_str();
    cmd->add_option("--sigma", r.sigma, "shock threshold")->capture_default_str();
    cmd->add_flag("--sigma-absolute", r.sigma_absolute, "compare absolute instead of relative indicator changes");
    cmd->add_option("--k1", r.k1)->capture_default_str();
    cmd->add_option("--k2", r.k2)->capture_default_str();
    cmd->add_option("--k3", r.k3)->capture_default_str();
    cmd->add_option("--embed-dim", r.embed_dim)->capture_default_str();
    cmd->add_option("--embed-sources", r.embed_sources)
        ->check(CLI::IsMember({"union", "think", "algorithm"}))
        ->capture_default_str();
    cmd->add_option("--encoder", r.encoder)->check(CLI::IsMember({"hash", "remote"}))->capture_default_str();
    cmd->add_option("--encoder-dim", r.encoder_dim)->capture_default_str();
    cmd->add_flag("--train-selector", r.train_selector, "REINFORCE the statement selector on episode return");
    cmd->add_option("--random-short-rate", r.random_short_rate,
                    "short-news rate of the random trigger (negative: calibrate)")
        ->capture_default_str();
    cmd->add_flag("--fallback", r.fallback_to_scripted, "fall back to the scripted backend after remote failures");
    cmd->add_flag("--audit-prompts", r.audit_prompts, "include prompts in audit.log");
    cmd->add_option("--max-in-flight", r.max_in_flight)->capture_default_str();
    cmd->add_flag("--random-government", r.random_government, "draw a random government action every step");
    cmd->add_option("--pool-file", o.pool_file, "persist the long-term experience store here");
    cmd->add_option("--checkpoint-every", r.checkpoint_every, "episodes between intermediate checkpoints")
        ->capture_default_str();
}

void finalize(CliOptions& o) {
    o.run.policy = lamp::policy_from_string(o.policy);
    o.run.ablations = lamp::parse_ablations(o.ablate);
    o.run.out_dir = o.out;
    if (!o.pool_file.empty()) o.run.pool_file = o.pool_file;
    o.run.validate();
}

void print_summary(const lamp::RunSummary& s) {
    double mean = 0.0;
    for (const auto& e : s.metrics.episodes) mean += e.avg_reward;
    if (!s.metrics.episodes.empty()) mean /= static_cast<double>(s.metrics.episodes.size());
    fmt::print("episodes: {}  mean avg_reward: {:.6f}  updates: {}  backend calls: {}\n", s.metrics.episodes.size(),
               mean, s.train_updates, s.calls.total());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Language-augmented multi-agent household policy learning"};
    app.require_subcommand(1);

    CliOptions train_o, eval_o, sim_o;
    auto* train = app.add_subcommand("train", "train household policies");
    add_common(train, train_o);

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint (or baseline) over seeds");
    add_common(eval, eval_o);
    eval->add_option("--checkpoint", eval_o.checkpoint, "training run directory holding checkpoint.txt");
    eval->add_option("--seeds", eval_o.seeds, "evaluation seeds (default: --seed)");
    eval->add_flag("--eval-harvest", eval_o.run.eval_harvest, "harvest into the long-term store during eval");

    auto* sim = app.add_subcommand("simulate", "roll out a policy without learning");
    add_common(sim, sim_o);
    sim->add_option("--checkpoint", sim_o.checkpoint, "training run directory holding checkpoint.txt");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            finalize(train_o);
            print_summary(lamp::run_training(train_o.run));
        } else if (*eval) {
            finalize(eval_o);
            if (eval_o.seeds.empty()) eval_o.seeds.push_back(eval_o.run.seed);
            std::optional<std::filesystem::path> ckpt;
            if (!eval_o.checkpoint.empty()) ckpt = eval_o.checkpoint;
            const auto report = lamp::run_eval(eval_o.run, ckpt, eval_o.seeds);
            for (const auto& [name, ms] : report.summary) fmt::print("{}: {:.6f} +- {:.6f}\n", name, ms.mean, ms.sd);
        } else if (*sim) {
            finalize(sim_o);
            std::optional<std::filesystem::path> ckpt;
            if (!sim_o.checkpoint.empty()) ckpt = sim_o.checkpoint;
            print_summary(lamp::simulate(sim_o.run, ckpt));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
