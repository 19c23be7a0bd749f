#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace lamp::metrics {

struct EpisodeRow {
    int episode = 0;
    int years = 0;
    double avg_reward = 0.0;  // mean over households and steps
    double social_welfare = 0.0;
    double total_consumption = 0.0;
    double total_labor = 0.0;
    double final_gini = 0.0;
    double gdp = 0.0;
};

struct StepRow {
    int episode = 0;
    int t = 0;
    double reward = 0.0;       // mean household reward
    double utility_sum = 0.0;  // sum of household utilities
    double actor_loss = 0.0;   // NaN when no update ran
    double critic_loss = 0.0;
    std::string news_kind = "none";
    std::size_t backend_calls = 0;
};

struct RunMetrics {
    std::vector<EpisodeRow> episodes;
    std::vector<StepRow> steps;
};

inline constexpr const char* kEpisodeHeader =
    "episode,years,avg_reward,social_welfare,total_consumption,total_labor,final_gini,gdp";
inline constexpr const char* kStepHeader = "episode,t,reward,utility_sum,actor_loss,critic_loss,news_kind,backend_calls";

/// Writes episodes.csv and steps.csv into `dir`. Reals use %.17g so reads are exact.
void write_metrics(const RunMetrics& m, const std::filesystem::path& dir);
RunMetrics read_metrics(const std::filesystem::path& dir);

void write_episodes_csv(const std::vector<EpisodeRow>& rows, const std::filesystem::path& path);
std::vector<EpisodeRow> read_episodes_csv(const std::filesystem::path& path);

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;  // sample standard deviation; 0 for a single value
};
MeanSd mean_sd(const std::vector<double>& xs);

}  // namespace lamp::metrics
