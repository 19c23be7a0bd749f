#include "lamp/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <fmt/format.h>

#include "lamp/econ.hpp"
#include "lamp/embed.hpp"
#include "lamp/event_log.hpp"
#include "lamp/policies.hpp"
#include "lamp/speak.hpp"

namespace lamp {

using nlohmann::json;

std::string to_string(PolicyKind p) {
    switch (p) {
        case PolicyKind::Lamp: return "lamp";
        case PolicyKind::Maddpg: return "maddpg";
        case PolicyKind::Random: return "random";
        case PolicyKind::Rule: return "rule";
    }
    return "lamp";
}

PolicyKind policy_from_string(const std::string& s) {
    if (s == "lamp") return PolicyKind::Lamp;
    if (s == "maddpg") return PolicyKind::Maddpg;
    if (s == "random") return PolicyKind::Random;
    if (s == "rule") return PolicyKind::Rule;
    throw std::invalid_argument("unknown policy: " + s);
}

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::Speak: return "speak";
        case Ablation::ExperiencePool: return "experience_pool";
        case Ablation::LongTerm: return "long_term";
        case Ablation::ShortTerm: return "short_term";
        case Ablation::TimingScheduler: return "timing_scheduler";
    }
    return "speak";
}

Ablation ablation_from_string(const std::string& s) {
    if (s == "speak") return Ablation::Speak;
    if (s == "experience_pool" || s == "pool") return Ablation::ExperiencePool;
    if (s == "long_term" || s == "long") return Ablation::LongTerm;
    if (s == "short_term" || s == "short") return Ablation::ShortTerm;
    if (s == "timing_scheduler" || s == "scheduler") return Ablation::TimingScheduler;
    throw std::invalid_argument("unknown ablation: " + s);
}

std::set<Ablation> parse_ablations(const std::string& csv) {
    std::set<Ablation> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.insert(ablation_from_string(item));
    return out;
}

void RunConfig::validate() const {
    if (episodes < 1 || steps < 1) throw std::invalid_argument("episodes and steps must be positive");
    if (backend != "scripted" && backend != "remote") throw std::invalid_argument("backend must be scripted or remote");
    if (!ablations.empty() && policy != PolicyKind::Lamp) throw std::invalid_argument("ablations require policy lamp");
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in (0, 1)");
    if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must be in (0, 1]");
    if (!(actor_lr > 0.0 && critic_lr > 0.0 && projection_lr > 0.0)) throw std::invalid_argument("learning rates must be positive");
    if (buffer_capacity == 0 || batch_size == 0 || batch_size > buffer_capacity)
        throw std::invalid_argument("batch size must be positive and fit the buffer");
    if (!(reward_scale > 0.0)) throw std::invalid_argument("reward scale must be positive");
    if (!(exploration_std >= 0.0)) throw std::invalid_argument("exploration std must be nonnegative");
    if (long_interval < 1) throw std::invalid_argument("long interval must be positive");
    if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
    if (k1 == 0 || k2 == 0 || k3 == 0) throw std::invalid_argument("k1, k2, k3 must be positive");
    if (embed_dim == 0 || encoder_dim == 0 || selector_key_dim == 0) throw std::invalid_argument("dimensions must be positive");
    if (!(selector_temperature > 0.0)) throw std::invalid_argument("selector temperature must be positive");
    if (random_short_rate > 1.0) throw std::invalid_argument("random short rate must be at most 1");
    if (max_in_flight < 1 || max_in_flight > 64) throw std::invalid_argument("max in flight must be in [1, 64]");
    (void)embed::EmbedSources::from_string(embed_sources);
}

marl::MaddpgConfig RunConfig::maddpg_config(std::size_t n_agents) const {
    marl::MaddpgConfig m;
    m.n_agents = n_agents;
    m.lang_dim = language() ? embed_dim : 0;
    m.encoder_dim = encoder_dim;
    m.gamma = gamma;
    m.tau = tau;
    m.actor_lr = actor_lr;
    m.critic_lr = critic_lr;
    m.projection_lr = projection_lr;
    m.exploration_std = exploration_std;
    m.per_agent_values = !mean_reward_critic;
    return m;
}

json to_json(const RunConfig& c) {
    json abl = json::array();
    for (auto a : c.ablations) abl.push_back(to_string(a));
    return {{"scenario", c.scenario},
            {"seed", c.seed},
            {"episodes", c.episodes},
            {"steps", c.steps},
            {"backend", c.backend},
            {"policy", to_string(c.policy)},
            {"ablations", abl},
            {"gamma", c.gamma},
            {"tau", c.tau},
            {"actor_lr", c.actor_lr},
            {"critic_lr", c.critic_lr},
            {"projection_lr", c.projection_lr},
            {"buffer_capacity", c.buffer_capacity},
            {"batch_size", c.batch_size},
            {"warmup", c.warmup},
            {"exploration_std", c.exploration_std},
            {"reward_floor", c.reward_floor},
            {"mean_reward_critic", c.mean_reward_critic},
            {"reward_scale", c.reward_scale},
            {"long_interval", c.long_interval},
            {"sigma", c.sigma},
            {"sigma_absolute", c.sigma_absolute},
            {"k1", c.k1},
            {"k2", c.k2},
            {"k3", c.k3},
            {"embed_dim", c.embed_dim},
            {"embed_sources", c.embed_sources},
            {"encoder", c.encoder},
            {"encoder_dim", c.encoder_dim},
            {"selector_key_dim", c.selector_key_dim},
            {"selector_temperature", c.selector_temperature},
            {"train_selector", c.train_selector},
            {"random_short_rate", c.random_short_rate},
            {"fallback_to_scripted", c.fallback_to_scripted},
            {"random_government", c.random_government},
            {"eval_harvest", c.eval_harvest}};
}

namespace {

// Training allocates and frees batch-sized matrices every update; keeping them
// on the heap instead of fresh mappings removes most of the system time.
void keep_large_blocks_on_heap() {
#if defined(__GLIBC__)
    static const bool once = [] {
        mallopt(M_MMAP_THRESHOLD, 256 << 20);
        mallopt(M_TRIM_THRESHOLD, 256 << 20);
        return true;
    }();
    (void)once;
#endif
}

// Independent, reproducible streams derived from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

enum Stream : std::uint64_t { kNets = 1, kActions = 2, kTrain = 3, kSelect = 4, kTrigger = 5, kGov = 6, kSelector = 7 };

std::uint64_t episode_seed(std::uint64_t seed, int episode) {
    return derive_seed(seed, 1000 + static_cast<std::uint64_t>(episode));
}

econ::GovAction fixed_government(const econ::ScenarioConfig& s) {
    return {s.gov_tau, s.gov_xi, s.gov_tau_a, s.gov_xi_a, s.gov_spend_ratio};
}

econ::GovAction random_government(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    econ::GovAction g;
    g.tau = 0.5 * u(rng);
    g.xi = 0.5 * u(rng);
    g.tau_a = 0.1 * u(rng);
    g.xi_a = 0.5 * u(rng);
    g.spend_ratio = 0.3 * u(rng);
    return g;
}

marl::Vector local_obs(const econ::EconomyState& s, std::size_t i) {
    const auto g = s.last_global_obs.to_vector();
    marl::Vector o(static_cast<Eigen::Index>(2 + g.size()));
    o(0) = s.assets[i];
    o(1) = s.efficiency[i];
    for (std::size_t k = 0; k < g.size(); ++k) o(static_cast<Eigen::Index>(2 + k)) = g[k];
    return o;
}

marl::Vector to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const marl::Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> indicator_vector(const econ::EconomyState& s) {
    return econ::macro_indicators(s, s.cumulative_welfare).to_vector();
}

// Runs fn(i) for every agent; concurrently when asked. Results keep agent order
// and the first exception propagates after all tasks finish.
template <typename R, typename Fn>
std::vector<R> for_agents(std::size_t n, bool parallel, Fn&& fn) {
    std::vector<R> out;
    out.reserve(n);
    if (!parallel) {
        for (std::size_t i = 0; i < n; ++i) out.push_back(fn(i));
        return out;
    }
    std::vector<std::future<R>> futures;
    for (std::size_t i = 0; i < n; ++i) futures.push_back(std::async(std::launch::async, fn, i));
    std::exception_ptr first;
    for (auto& f : futures) {
        try {
            out.push_back(f.get());
        } catch (...) {
            if (!first) first = std::current_exception();
        }
    }
    if (first) std::rethrow_exception(first);
    return out;
}

struct AgentLanguage {
    std::optional<think::ReasoningRecord> record;
    std::optional<std::string> reflection;
    std::optional<std::string> statement;
};

struct SpeakTrace {
    std::size_t agent;
    marl::Matrix encoded;
    std::size_t selected;
};

template <typename T>
struct Outcome {
    std::optional<T> value;
    std::string error;
};

template <typename T, typename Fn>
Outcome<T> guarded(Fn&& fn) {
    try {
        return {fn(), {}};
    } catch (const llm::BackendFormatError& e) {
        return {std::nullopt, e.what()};
    } catch (const llm::TransportError& e) {
        return {std::nullopt, e.what()};
    }
}

class Runner {
public:
    Runner(const RunConfig& cfg, bool learn, const std::optional<std::filesystem::path>& checkpoint)
        : cfg_(cfg),
          learn_(learn),
          scenario_(econ::resolve_scenario(cfg.scenario)),
          n_(static_cast<std::size_t>(scenario_.n_households)),
          env_(scenario_),
          sched_{cfg.long_interval, cfg.sigma, cfg.sigma_absolute, 1e-8},
          sources_(embed::EmbedSources::from_string(cfg.embed_sources)),
          act_rng_(derive_seed(cfg.seed, kActions)),
          train_rng_(derive_seed(cfg.seed, kTrain)),
          select_rng_(derive_seed(cfg.seed, kSelect)),
          trigger_rng_(derive_seed(cfg.seed, kTrigger)),
          gov_rng_(derive_seed(cfg.seed, kGov)),
          buffer_(learn ? cfg.buffer_capacity : 1),
          pools_(n_, {cfg.k1, cfg.k2, cfg.k3}) {
        cfg_.validate();
        std::filesystem::create_directories(cfg_.out_dir);
        if (cfg_.write_events) log_ = events::EventLog(cfg_.out_dir / "events.log");

        const bool learned = cfg_.policy == PolicyKind::Lamp || cfg_.policy == PolicyKind::Maddpg;
        if (learned) {
            const auto mc = cfg_.maddpg_config(n_);
            if (checkpoint) {
                std::ifstream in(*checkpoint / "checkpoint.txt");
                if (!in) throw std::runtime_error("cannot read checkpoint in " + checkpoint->string());
                nets_ = marl::AgentNets::load(in, mc);
            } else {
                std::mt19937_64 rng(derive_seed(cfg_.seed, kNets));
                nets_ = marl::AgentNets::create(mc, rng);
            }
        }
        if (cfg_.language()) setup_language(checkpoint);
        if (cfg_.ablated(Ablation::TimingScheduler))
            short_rate_ = cfg_.random_short_rate >= 0.0 ? cfg_.random_short_rate : calibrate_short_rate(cfg_);
    }

    RunSummary run() {
        RunSummary summary;
        for (int ep = 0; ep < cfg_.episodes; ++ep) {
            run_episode(ep, summary);
            if (learn_ && nets_ && cfg_.checkpoint_every > 0 && (ep + 1) % cfg_.checkpoint_every == 0)
                save_checkpoint(cfg_.out_dir / fmt::format("checkpoint_ep{}", ep + 1));
        }
        if (learn_ && nets_) save_checkpoint(cfg_.out_dir);
        if (cfg_.pool_file && cfg_.language() && (learn_ || cfg_.eval_harvest)) pools_.save(*cfg_.pool_file);

        metrics::write_metrics(summary.metrics, cfg_.out_dir);
        json snapshot = to_json(cfg_);
        snapshot["scenario_config"] = scenario_;
        snapshot["mode"] = learn_ ? "train" : "simulate";
        if (cfg_.ablated(Ablation::TimingScheduler)) {
            snapshot["resolved_long_rate"] = 1.0 / cfg_.long_interval;
            snapshot["resolved_short_rate"] = short_rate_;
        }
        std::ofstream(cfg_.out_dir / "config.json", std::ios::trunc) << snapshot.dump(2) << '\n';

        if (client_) summary.calls = client_->counts();
        summary.events = log_.counts();
        summary.short_rate = short_rate_;
        summary.train_updates = train_updates_;
        summary.losses_finite = losses_finite_;
        return summary;
    }

private:
    void setup_language(const std::optional<std::filesystem::path>& checkpoint) {
        encoder_ = embed::make_encoder(cfg_.encoder, cfg_.seed, cfg_.encoder_dim);
        if (encoder_->dim() != cfg_.encoder_dim) throw std::runtime_error("encoder dimension mismatch");
        std::shared_ptr<llm::LanguageBackend> primary;
        if (cfg_.backend == "remote") {
            auto rc = llm::RemoteConfig::from_env();
            rc.max_in_flight = cfg_.max_in_flight;
            primary = std::make_shared<llm::RemoteBackend>(rc);
            parallel_ = true;
        } else {
            primary = std::make_shared<llm::ScriptedBackend>(cfg_.seed);
        }
        std::shared_ptr<llm::LanguageBackend> fallback;
        if (cfg_.fallback_to_scripted && cfg_.backend == "remote") fallback = std::make_shared<llm::ScriptedBackend>(cfg_.seed);
        auto audit = std::make_shared<llm::AuditLog>(cfg_.out_dir / "audit.log", cfg_.audit_prompts);
        client_ = std::make_unique<llm::LanguageClient>(primary, audit, fallback);

        std::mt19937_64 rng(derive_seed(cfg_.seed, kSelector));
        selector_ = speak::SelectorParams::random(cfg_.selector_key_dim, cfg_.encoder_dim, rng, cfg_.selector_temperature);
        if (checkpoint && std::filesystem::exists(*checkpoint / "selector.txt")) {
            std::ifstream in(*checkpoint / "selector.txt");
            selector_.key_proj = nn::read_matrix(in, "selector_keys");
            const marl::Matrix q = nn::read_matrix(in, "selector_query");
            selector_.query = q.col(0);
            selector_.validate();
        }
        if (cfg_.pool_file && std::filesystem::exists(*cfg_.pool_file)) {
            pools_.load(*cfg_.pool_file);
            for (const auto& e : pools_.long_store) next_entry_id_ = std::max(next_entry_id_, e.id + 1);
        }
    }

    void save_checkpoint(const std::filesystem::path& dir) {
        std::filesystem::create_directories(dir);
        std::ofstream out(dir / "checkpoint.txt", std::ios::trunc);
        nets_->save(out);
        if (cfg_.language()) {
            std::ofstream sel(dir / "selector.txt", std::ios::trunc);
            nn::write_matrix(sel, "selector_keys", selector_.key_proj);
            nn::write_matrix(sel, "selector_query", selector_.query);
        }
    }

    think::NewsKind decide_kind(int t, const std::vector<double>& now, const std::vector<double>& prev) {
        using think::NewsKind;
        NewsKind kind;
        if (cfg_.ablated(Ablation::TimingScheduler)) {
            std::uniform_real_distribution<double> u(0.0, 1.0);
            const double u_long = u(trigger_rng_);
            const double u_short = u(trigger_rng_);
            kind = u_long < 1.0 / cfg_.long_interval ? NewsKind::Long
                   : u_short < short_rate_           ? NewsKind::Short
                                                     : NewsKind::None;
            if (kind == NewsKind::Long && cfg_.ablated(Ablation::LongTerm)) kind = NewsKind::None;
        } else {
            kind = think::classify_news_type(now, prev, t, sched_);
            if (kind == NewsKind::Long && cfg_.ablated(Ablation::LongTerm))
                kind = think::max_indicator_change(now, prev, sched_) > sched_.sigma ? NewsKind::Short
                                                                                                : NewsKind::None;
        }
        if (kind == NewsKind::Short && cfg_.ablated(Ablation::ShortTerm)) kind = NewsKind::None;
        return kind;
    }

    void think_step(int ep, int t, think::NewsKind kind, const econ::EconomyState& state, const econ::GlobalObs& prev_obs,
                    const std::vector<double>& indicators) {
        using think::NewsKind;
        std::optional<think::NewsEvent> news;
        if (kind != NewsKind::None) {
            auto out = guarded<think::NewsEvent>([&] {
                return kind == NewsKind::Long
                           ? think::make_long_news(prev_obs, state.last_global_obs, t, indicators, *client_)
                           : think::make_short_news(prev_obs, state.last_global_obs, last_long_ ? &*last_long_ : nullptr, t,
                                                    indicators, *client_);
            });
            if (out.value) {
                news = std::move(out.value);
                latest_news_ = news->text;
                if (kind == NewsKind::Long) last_long_ = news;
            }
            json f = {{"kind", think::to_string(kind)}};
            if (!out.error.empty()) f["error"] = out.error;
            log_.emit("news", ep, t, f);
        } else {
            log_.emit("news", ep, t, {{"kind", "none"}});
        }
        if (!news) return;

        auto context = [&](std::size_t i) {
            return think::AgentContext{static_cast<int>(i), t, {state.efficiency[i], state.assets[i]}, state.assets};
        };

        const bool use_pool = !cfg_.ablated(Ablation::ExperiencePool);
        struct Reasoned {
            std::vector<std::uint64_t> retrieved;
            bool retrieval_ran = false;
            Outcome<think::ReasoningRecord> record;
        };
        const think::NewsEvent* recent_long = last_long_ ? &*last_long_ : nullptr;
        auto reasoned = for_agents<Reasoned>(n_, parallel_, [&](std::size_t i) {
            Reasoned r;
            const auto ctx = context(i);
            if (kind == NewsKind::Long) {
                std::vector<think::ExperienceEntry> retrieved;
                if (use_pool) {
                    retrieved = think::retrieve_experience(pools_, i, ctx.obs, *encoder_);
                    r.retrieval_ran = true;
                    for (const auto& e : retrieved) r.retrieved.push_back(e.id);
                }
                r.record = guarded<think::ReasoningRecord>([&] { return think::reason_long(*news, ctx, retrieved, *client_); });
            } else {
                r.record = guarded<think::ReasoningRecord>([&] { return think::reason_short(*news, recent_long, ctx, *client_); });
            }
            return r;
        });
        for (std::size_t i = 0; i < n_; ++i) {
            auto& r = reasoned[i];
            if (r.retrieval_ran) log_.emit("retrieve", ep, t, {{"agent", i}, {"ids", r.retrieved}});
            if (r.record.value) {
                lang_[i].record = *r.record.value;
                step_reasoned_[i] = true;
                log_.emit("reason", ep, t,
                          {{"agent", i}, {"status", r.record.value->status}, {"trigger", think::to_string(kind)}});
            } else {
                log_.emit("reason", ep, t, {{"agent", i}, {"error", r.record.error}});
            }
        }

        if (kind != NewsKind::Long || cfg_.ablated(Ablation::Speak)) return;
        // Agents without any reasoning yet cannot speak this round.
        std::vector<std::size_t> speakers;
        for (std::size_t i = 0; i < n_; ++i)
            if (lang_[i].record) speakers.push_back(i);
        if (speakers.empty()) return;

        auto candidates = for_agents<Outcome<speak::Candidates>>(speakers.size(), parallel_, [&](std::size_t k) {
            const auto i = speakers[k];
            return guarded<speak::Candidates>([&] { return speak::generate_candidates(context(i), *lang_[i].record, *client_); });
        });
        std::vector<speak::StatementSet> sets;
        for (std::size_t k = 0; k < speakers.size(); ++k) {
            const auto i = speakers[k];
            if (!candidates[k].value) {
                log_.emit("speak", ep, t, {{"agent", i}, {"error", candidates[k].error}});
                continue;
            }
            const marl::Matrix encoded = speak::encode_candidates(*candidates[k].value, *encoder_);
            auto set = speak::select_statement(static_cast<int>(i), *candidates[k].value, selector_, *encoder_, select_rng_);
            if (cfg_.train_selector) speak_trace_.push_back({i, encoded, set.selected});
            lang_[i].statement = set.statement();
            log_.emit("speak", ep, t, {{"agent", i}, {"probs", set.probs}, {"selected", set.selected}});
            sets.push_back(std::move(set));
        }
        if (sets.empty()) return;
        const auto statements = speak::broadcast(sets);
        log_.emit("broadcast", ep, t, {{"count", statements.size()}});

        auto reflections = for_agents<Outcome<speak::ReflectionResult>>(sets.size(), parallel_, [&](std::size_t k) {
            const auto i = static_cast<std::size_t>(sets[k].agent);
            return guarded<speak::ReflectionResult>([&] {
                return speak::reflect(context(i), statements, *lang_[i].record, sets[k].statement(), *client_);
            });
        });
        for (std::size_t k = 0; k < sets.size(); ++k) {
            const auto i = static_cast<std::size_t>(sets[k].agent);
            if (!reflections[k].value) {
                log_.emit("reflect", ep, t, {{"agent", i}, {"error", reflections[k].error}});
                continue;
            }
            lang_[i].reflection = reflections[k].value->text;
            log_.emit("reflect", ep, t,
                      {{"agent", i}, {"wealth_guesses", reflections[k].value->wealth_guesses},
                       {"trust", reflections[k].value->trust}});
        }
    }

    marl::Matrix pooled_texts() const {
        marl::Matrix pooled = marl::Matrix::Zero(static_cast<Eigen::Index>(cfg_.encoder_dim), static_cast<Eigen::Index>(n_));
        embed::EmbedSources src = sources_;
        if (cfg_.ablated(Ablation::Speak)) src.reflection = src.statement = false;
        for (std::size_t i = 0; i < n_; ++i) {
            embed::AgentTexts texts;
            if (lang_[i].record) texts.reasoning = lang_[i].record->reasoning;
            texts.reflection = lang_[i].reflection;
            texts.statement = lang_[i].statement;
            texts.news = latest_news_;
            pooled.col(static_cast<Eigen::Index>(i)) = embed::agent_pooled_vector(texts, src, *encoder_);
        }
        return pooled;
    }

    void run_episode(int ep, RunSummary& summary) {
        using think::NewsKind;
        env_.reset(episode_seed(cfg_.seed, ep));
        pools_.clear_short();
        windows_.assign(n_, {});
        lang_.assign(n_, {});
        last_long_.reset();
        latest_news_.reset();
        long_candidates_.clear();
        speak_trace_.clear();
        std::vector<double> returns(n_, 0.0);

        log_.emit("episode_begin", ep, -1, {{"env_seed", episode_seed(cfg_.seed, ep)}});
        econ::GlobalObs prev_obs = env_.state().last_global_obs;
        std::vector<double> cur_ind = indicator_vector(env_.state());
        std::vector<double> prev_ind = cur_ind;

        metrics::EpisodeRow row;
        row.episode = ep;
        double reward_sum = 0.0;
        std::size_t reward_count = 0;
        const bool use_pool = cfg_.language() && !cfg_.ablated(Ablation::ExperiencePool);
        const int horizon = std::min(cfg_.steps, scenario_.max_years);

        for (int t = 0; t < horizon; ++t) {
            const econ::EconomyState state = env_.state();
            const std::size_t calls_before = client_ ? client_->counts().total() : 0;
            const NewsKind kind = cfg_.language() ? decide_kind(t, cur_ind, prev_ind) : NewsKind::None;
            step_reasoned_.assign(n_, false);
            if (cfg_.language()) think_step(ep, t, kind, state, prev_obs, cur_ind);
            else log_.emit("news", ep, t, {{"kind", "none"}});

            marl::Matrix pooled;
            if (cfg_.language()) pooled = pooled_texts();

            marl::Matrix raw(2, static_cast<Eigen::Index>(n_));
            marl::Matrix obs(static_cast<Eigen::Index>(9), static_cast<Eigen::Index>(n_));
            const econ::GovAction gov = cfg_.random_government ? random_government(gov_rng_) : fixed_government(scenario_);
            for (std::size_t i = 0; i < n_; ++i) {
                const auto ii = static_cast<Eigen::Index>(i);
                obs.col(ii) = local_obs(state, i);
                marl::Vector a;
                switch (cfg_.policy) {
                    case PolicyKind::Lamp:
                    case PolicyKind::Maddpg: {
                        marl::Vector m;
                        if (nets_->config.language())
                            m = embed::project_normalize(*nets_->projection, pooled.col(ii));
                        a = marl::act(*nets_, i, obs.col(ii), m, learn_, act_rng_);
                        break;
                    }
                    case PolicyKind::Random: a = policies::random_policy(act_rng_); break;
                    case PolicyKind::Rule:
                        a = policies::rule_policy({state.wage, state.efficiency[i], state.assets[i], scenario_, gov});
                        break;
                }
                raw.col(ii) = a;
            }
            std::vector<double> raw_savings(raw.row(0).begin(), raw.row(0).end());
            std::vector<double> raw_labor(raw.row(1).begin(), raw.row(1).end());
            log_.emit("act", ep, t, {{"raw_savings", raw_savings}, {"raw_labor", raw_labor}});

            std::vector<econ::HouseholdAction> hh;
            for (std::size_t i = 0; i < n_; ++i)
                hh.push_back(econ::HouseholdAction::from_raw(raw(0, static_cast<Eigen::Index>(i)),
                                                             raw(1, static_cast<Eigen::Index>(i)), scenario_.h_max));
            const econ::StepResult res = env_.step(gov, hh);
            double utility_sum = 0.0;
            for (std::size_t i = 0; i < n_; ++i) {
                utility_sum += res.rewards[i];
                returns[i] += res.rewards[i];
                row.total_consumption += res.households[i].consumption;
                row.total_labor += res.households[i].labor;
            }
            reward_sum += utility_sum;
            reward_count += n_;
            log_.emit("step", ep, t,
                      {{"reward", utility_sum / static_cast<double>(n_)}, {"done", res.done},
                       {"reason", econ::to_string(res.reason)}});

            metrics::StepRow srow;
            srow.episode = ep;
            srow.t = t;
            srow.reward = utility_sum / static_cast<double>(n_);
            srow.utility_sum = utility_sum;
            srow.actor_loss = srow.critic_loss = std::nan("");
            srow.news_kind = think::to_string(kind);

            if (learn_ && nets_) {
                marl::Transition tr;
                tr.global_obs = to_eigen(state.last_global_obs.to_vector());
                tr.local_obs = obs;
                tr.pooled = cfg_.language() ? pooled : marl::Matrix(0, static_cast<Eigen::Index>(n_));
                tr.actions = raw;
                tr.rewards.resize(static_cast<Eigen::Index>(n_));
                for (std::size_t i = 0; i < n_; ++i)
                    tr.rewards(static_cast<Eigen::Index>(i)) = cfg_.reward_scale * std::max(res.rewards[i], cfg_.reward_floor);
                tr.reward = tr.rewards.mean();
                // Collapse ends the episode; charge the floor for the rest of the horizon so
                // that an early exit is never preferable to living with negative utility.
                if (res.reason == econ::DoneReason::Collapse) {
                    tr.rewards.setConstant(cfg_.reward_scale * cfg_.reward_floor / (1.0 - cfg_.gamma));
                    tr.reward = tr.rewards.mean();
                }
                tr.next_global_obs = to_eigen(res.next.last_global_obs.to_vector());
                tr.next_local_obs.resize(obs.rows(), obs.cols());
                for (std::size_t i = 0; i < n_; ++i)
                    tr.next_local_obs.col(static_cast<Eigen::Index>(i)) = local_obs(res.next, i);
                tr.next_pooled = tr.pooled;  // texts carry over until the next news event
                tr.done = res.done;
                if (tr.all_finite()) buffer_.push(std::move(tr));

                if (buffer_.size() >= std::max(cfg_.warmup, cfg_.batch_size)) {
                    try {
                        const auto m = marl::train_step(*nets_, buffer_, cfg_.batch_size, train_rng_);
                        ++train_updates_;
                        srow.actor_loss = m.actor_loss;
                        srow.critic_loss = m.critic_loss;
                        log_.emit("train", ep, t, {{"critic_loss", m.critic_loss}, {"actor_loss", m.actor_loss}});
                    } catch (const marl::NonFiniteLoss& e) {
                        losses_finite_ = false;
                        log_.emit("train", ep, t, {{"error", e.what()}});
                    }
                }
            }

            if (use_pool) {
                for (std::size_t i = 0; i < n_; ++i) {
                    if (!lang_[i].record) continue;
                    think::ExperienceEntry e;
                    e.id = next_entry_id_++;
                    e.agent = static_cast<int>(i);
                    e.period = t;
                    e.reward = res.rewards[i];
                    e.productivity = state.efficiency[i];
                    e.wealth = state.assets[i];
                    e.raw_savings = raw(0, static_cast<Eigen::Index>(i));
                    e.raw_labor = raw(1, static_cast<Eigen::Index>(i));
                    e.reasoning = lang_[i].record->reasoning;
                    windows_[i].push_back(e);
                    long_candidates_.push_back(std::move(e));
                    think::harvest_short(pools_, i, windows_[i]);
                }
                log_.emit("harvest", ep, t, {{"scope", "short"}});
                if (kind == NewsKind::Long && (learn_ || cfg_.eval_harvest)) {
                    const auto added = think::harvest_long(pools_, long_candidates_, *encoder_);
                    long_candidates_.clear();
                    log_.emit("harvest", ep, t, {{"scope", "long"}, {"appended", added}, {"store", pools_.long_store.size()}});
                }
            }

            srow.backend_calls = client_ ? client_->counts().total() - calls_before : 0;
            summary.metrics.steps.push_back(srow);

            prev_obs = state.last_global_obs;
            prev_ind = cur_ind;
            cur_ind = res.indicators.to_vector();
            row.years = t + 1;
            if (res.done) break;
        }

        if (use_pool && (learn_ || cfg_.eval_harvest)) {
            const auto added = think::harvest_long(pools_, long_candidates_, *encoder_);
            long_candidates_.clear();
            log_.emit("harvest_long", ep, -1, {{"appended", added}, {"store", pools_.long_store.size()}});
        }
        if (learn_ && cfg_.train_selector) train_selector(returns);

        const econ::EconomyState& fin = env_.state();
        row.avg_reward = reward_count ? reward_sum / static_cast<double>(reward_count) : 0.0;
        row.social_welfare = fin.cumulative_welfare;
        row.final_gini = econ::wealth_gini(fin.assets);
        row.gdp = fin.gdp;
        summary.metrics.episodes.push_back(row);
        log_.emit("episode_end", ep, -1, {{"years", row.years}, {"avg_reward", row.avg_reward}});
    }

    void train_selector(const std::vector<double>& returns) {
        if (selector_baseline_.empty()) selector_baseline_ = returns;
        for (const auto& s : speak_trace_) {
            const double advantage = returns[s.agent] - selector_baseline_[s.agent];
            const double scale = std::max(1.0, std::abs(selector_baseline_[s.agent]));
            speak::reinforce_update(selector_, s.encoded, s.selected, advantage / scale, cfg_.selector_lr);
        }
        for (std::size_t i = 0; i < n_; ++i) selector_baseline_[i] = 0.9 * selector_baseline_[i] + 0.1 * returns[i];
    }

    RunConfig cfg_;
    bool learn_;
    econ::ScenarioConfig scenario_;
    std::size_t n_;
    econ::Economy env_;
    think::SchedulerConfig sched_;
    embed::EmbedSources sources_;
    std::mt19937_64 act_rng_, train_rng_, select_rng_, trigger_rng_, gov_rng_;
    marl::ReplayBuffer buffer_;
    std::optional<marl::AgentNets> nets_;
    think::ExperiencePools pools_;
    std::unique_ptr<embed::TextEncoder> encoder_;
    std::unique_ptr<llm::LanguageClient> client_;
    speak::SelectorParams selector_;
    events::EventLog log_;
    bool parallel_ = false;
    double short_rate_ = 0.0;

    std::vector<AgentLanguage> lang_;
    std::vector<bool> step_reasoned_;
    std::vector<std::vector<think::ExperienceEntry>> windows_;
    std::vector<think::ExperienceEntry> long_candidates_;
    std::optional<think::NewsEvent> last_long_;
    std::optional<std::string> latest_news_;
    std::vector<SpeakTrace> speak_trace_;
    std::vector<double> selector_baseline_;
    std::uint64_t next_entry_id_ = 0;
    std::size_t train_updates_ = 0;
    bool losses_finite_ = true;
};

}  // namespace

double calibrate_short_rate(const RunConfig& config) {
    const auto scenario = econ::resolve_scenario(config.scenario);
    const auto n = static_cast<std::size_t>(scenario.n_households);
    const think::SchedulerConfig sched{config.long_interval, config.sigma, config.sigma_absolute, 1e-8};
    econ::Economy env(scenario);
    std::mt19937_64 rng(derive_seed(config.seed, kActions));
    std::size_t shorts = 0;
    std::size_t eligible = 0;
    const int horizon = std::min(config.steps, scenario.max_years);
    for (int ep = 0; ep < config.episodes; ++ep) {
        env.reset(episode_seed(config.seed, ep));
        std::vector<double> cur = indicator_vector(env.state());
        std::vector<double> prev = cur;
        for (int t = 0; t < horizon; ++t) {
            const auto kind = think::classify_news_type(cur, prev, t, sched);
            if (kind != think::NewsKind::Long) {
                ++eligible;
                if (kind == think::NewsKind::Short) ++shorts;
            }
            std::vector<econ::HouseholdAction> hh;
            for (std::size_t i = 0; i < n; ++i) {
                const auto a = policies::random_policy(rng);
                hh.push_back(econ::HouseholdAction::from_raw(a(0), a(1), scenario.h_max));
            }
            const auto res = env.step(fixed_government(scenario), hh);
            prev = cur;
            cur = res.indicators.to_vector();
            if (res.done) break;
        }
    }
    return eligible ? static_cast<double>(shorts) / static_cast<double>(eligible) : 0.0;
}

RunSummary run_training(const RunConfig& config) {
    keep_large_blocks_on_heap();
    Runner runner(config, true, std::nullopt);
    return runner.run();
}

RunSummary simulate(const RunConfig& config, const std::optional<std::filesystem::path>& checkpoint) {
    const bool learned = config.policy == PolicyKind::Lamp || config.policy == PolicyKind::Maddpg;
    if (learned && !checkpoint) throw std::invalid_argument("a learned policy needs a checkpoint to simulate");
    keep_large_blocks_on_heap();
    Runner runner(config, false, checkpoint);
    return runner.run();
}

EvalReport run_eval(const RunConfig& config, const std::optional<std::filesystem::path>& checkpoint,
                    const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw std::invalid_argument("run_eval: no seeds");
    EvalReport report;
    for (auto seed : seeds) {
        RunConfig c = config;
        c.seed = seed;
        c.out_dir = config.out_dir / fmt::format("seed_{}", seed);
        const auto s = simulate(c, checkpoint);
        EvalRow row;
        row.seed = seed;
        const double k = static_cast<double>(s.metrics.episodes.size());
        for (const auto& e : s.metrics.episodes) {
            row.avg_reward += e.avg_reward / k;
            row.social_welfare += e.social_welfare / k;
            row.years += e.years / k;
            row.final_gini += e.final_gini / k;
            row.gdp += e.gdp / k;
        }
        report.rows.push_back(row);
    }
    auto column = [&](auto field) {
        std::vector<double> xs;
        for (const auto& r : report.rows) xs.push_back(r.*field);
        return metrics::mean_sd(xs);
    };
    report.summary["avg_reward"] = column(&EvalRow::avg_reward);
    report.summary["social_welfare"] = column(&EvalRow::social_welfare);
    report.summary["years"] = column(&EvalRow::years);
    report.summary["final_gini"] = column(&EvalRow::final_gini);
    report.summary["gdp"] = column(&EvalRow::gdp);

    std::filesystem::create_directories(config.out_dir);
    std::ofstream out(config.out_dir / "eval.csv", std::ios::trunc);
    out << "seed,avg_reward,social_welfare,years,final_gini,gdp\n";
    for (const auto& r : report.rows)
        out << r.seed << ',' << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}", r.avg_reward, r.social_welfare,
                                            r.years, r.final_gini, r.gdp)
            << '\n';
    for (const char* stat : {"mean", "sd"}) {
        out << stat;
        for (const char* col : {"avg_reward", "social_welfare", "years", "final_gini", "gdp"}) {
            const auto& ms = report.summary.at(col);
            out << ',' << fmt::format("{:.17g}", std::string_view(stat) == "mean" ? ms.mean : ms.sd);
        }
        out << '\n';
    }
    return report;
}

}  // namespace lamp
