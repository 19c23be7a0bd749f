#include "lamp/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace lamp::metrics {

namespace {

std::string real(double v) { return fmt::format("{:.17g}", v); }

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double to_real(const std::string& s) {
    if (s == "nan") return std::nan("");
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::runtime_error("malformed number in CSV: " + s);
    return v;
}

std::ifstream open_with_header(const std::filesystem::path& path, const char* header) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != header) throw std::runtime_error("unexpected header in " + path.string());
    return in;
}

}  // namespace

void write_episodes_csv(const std::vector<EpisodeRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << kEpisodeHeader << '\n';
    for (const auto& r : rows)
        out << r.episode << ',' << r.years << ',' << real(r.avg_reward) << ',' << real(r.social_welfare) << ','
            << real(r.total_consumption) << ',' << real(r.total_labor) << ',' << real(r.final_gini) << ','
            << real(r.gdp) << '\n';
}

std::vector<EpisodeRow> read_episodes_csv(const std::filesystem::path& path) {
    auto in = open_with_header(path, kEpisodeHeader);
    std::vector<EpisodeRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        const auto c = split(line);
        if (c.size() != 8) throw std::runtime_error("malformed row in " + path.string());
        rows.push_back({std::stoi(c[0]), std::stoi(c[1]), to_real(c[2]), to_real(c[3]), to_real(c[4]), to_real(c[5]),
                        to_real(c[6]), to_real(c[7])});
    }
    return rows;
}

void write_metrics(const RunMetrics& m, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_episodes_csv(m.episodes, dir / "episodes.csv");
    std::ofstream out(dir / "steps.csv", std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir / "steps.csv").string());
    out << kStepHeader << '\n';
    for (const auto& r : m.steps)
        out << r.episode << ',' << r.t << ',' << real(r.reward) << ',' << real(r.utility_sum) << ','
            << real(r.actor_loss) << ',' << real(r.critic_loss) << ',' << r.news_kind << ',' << r.backend_calls << '\n';
}

RunMetrics read_metrics(const std::filesystem::path& dir) {
    RunMetrics m;
    m.episodes = read_episodes_csv(dir / "episodes.csv");
    auto in = open_with_header(dir / "steps.csv", kStepHeader);
    std::string line;
    while (std::getline(in, line)) {
        const auto c = split(line);
        if (c.size() != 8) throw std::runtime_error("malformed row in steps.csv");
        m.steps.push_back({std::stoi(c[0]), std::stoi(c[1]), to_real(c[2]), to_real(c[3]), to_real(c[4]), to_real(c[5]),
                           c[6], static_cast<std::size_t>(std::stoull(c[7]))});
    }
    return m;
}

MeanSd mean_sd(const std::vector<double>& xs) {
    if (xs.empty()) return {};
    double sum = 0.0;
    for (double x : xs) sum += x;
    const double mean = sum / static_cast<double>(xs.size());
    if (xs.size() == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

}  // namespace lamp::metrics
