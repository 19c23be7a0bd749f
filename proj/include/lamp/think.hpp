#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lamp/backend.hpp"
#include "lamp/econ.hpp"
#include "lamp/embed.hpp"

namespace lamp::think {

enum class NewsKind { None, Short, Long };
std::string to_string(NewsKind k);
NewsKind news_kind_from_string(const std::string& s);

struct SchedulerConfig {
    int long_interval = 20;
    double sigma = 0.4;
    bool absolute = false;  // compare raw differences instead of relative changes
    double eps_rel = 1e-8;
};

/// Largest per-indicator change between two indicator vectors (relative unless cfg.absolute).
double max_indicator_change(const std::vector<double>& now, const std::vector<double>& prev, const SchedulerConfig& cfg);

/// Long at positive multiples of the interval, else short when some indicator
/// moved by more than sigma, else none.
NewsKind classify_news_type(const std::vector<double>& now, const std::vector<double>& prev, int t,
                            const SchedulerConfig& cfg);

struct NewsEvent {
    NewsKind kind = NewsKind::None;
    int period = 0;
    std::string text;
    std::vector<double> indicators;
};

/// Multi-line "name: value" rendering of a global observation for prompts.
std::string render_global_obs(const econ::GlobalObs& obs);
nlohmann::json global_obs_json(const econ::GlobalObs& obs);

NewsEvent make_long_news(const econ::GlobalObs& prev, const econ::GlobalObs& curr, int period,
                         const std::vector<double>& indicators, llm::LanguageClient& client);
NewsEvent make_short_news(const econ::GlobalObs& prev, const econ::GlobalObs& curr, const NewsEvent* last_long,
                          int period, const std::vector<double>& indicators, llm::LanguageClient& client);

struct PrivateObs {
    double productivity = 0.0;
    double wealth = 0.0;
};

/// What a reasoning call needs to know about the agent; all_wealth feeds the scripted backend.
struct AgentContext {
    int agent = 0;
    int period = 0;
    PrivateObs obs;
    std::vector<double> all_wealth;
};

struct ReasoningRecord {
    int agent = 0;
    int period = 0;
    int status = 1;
    std::string reasoning;
    std::string analysis;  // long-term reasoning only
    NewsKind trigger = NewsKind::None;
};

struct ExperienceEntry {
    std::uint64_t id = 0;
    int agent = 0;
    int period = 0;
    double reward = 0.0;
    double productivity = 0.0;
    double wealth = 0.0;
    double raw_savings = 0.0;
    double raw_labor = 0.0;
    std::string reasoning;
    embed::Vector key;  // unit-norm once harvested into the long store
};

/// Serialization used in the Similar Experiences prompt slot.
std::string render_experience(const ExperienceEntry& e);
std::string render_experiences(const std::vector<ExperienceEntry>& entries);

/// Fixed query sentence for retrieval; entry keys are encoded from the same form.
std::string query_text(double productivity, double wealth);

std::string render_number(double v);

ReasoningRecord reason_short(const NewsEvent& news, const NewsEvent* recent_long, const AgentContext& ctx,
                             llm::LanguageClient& client);
ReasoningRecord reason_long(const NewsEvent& news, const AgentContext& ctx,
                            const std::vector<ExperienceEntry>& retrieved, llm::LanguageClient& client);

struct PoolConfig {
    std::size_t k1 = 3;
    std::size_t k2 = 5;
    std::size_t k3 = 3;
};

/// Highest-reward k entries; equal rewards keep the newer (higher id) entry first.
std::vector<ExperienceEntry> top_k_by_reward(const std::vector<ExperienceEntry>& records, std::size_t k);

struct ExperiencePools {
    PoolConfig config;
    std::vector<std::vector<ExperienceEntry>> short_buffers;  // per agent, at most k1
    std::vector<ExperienceEntry> long_store;                  // append-only

    ExperiencePools() = default;
    ExperiencePools(std::size_t n_agents, PoolConfig cfg);

    void clear_short();

    /// Version-tagged JSON lines of the long store.
    void save(const std::filesystem::path& path) const;
    void load(const std::filesystem::path& path);
};

void harvest_short(ExperiencePools& pool, std::size_t agent, const std::vector<ExperienceEntry>& window);

/// Appends the reward-top-k2 records with freshly encoded keys; returns the number appended.
std::size_t harvest_long(ExperiencePools& pool, const std::vector<ExperienceEntry>& records,
                         const embed::TextEncoder& encoder);

/// Exact cosine top-k3 over the long store (similarity desc, id asc), then the
/// agent's short buffer, with duplicate ids removed.
std::vector<ExperienceEntry> retrieve_experience(const ExperiencePools& pool, std::size_t agent, const PrivateObs& obs,
                                                 const embed::TextEncoder& encoder);

/// Cosine similarities are compared on this grid before the id tie-break.
inline constexpr double kSimilarityResolution = 1e-12;

/// Indices of the k most similar keys to `query` under the same ordering.
std::vector<std::size_t> nearest_keys(const std::vector<ExperienceEntry>& store, const embed::Vector& query,
                                      std::size_t k);

}  // namespace lamp::think
