#include "lamp/event_log.hpp"

#include <fmt/format.h>

namespace lamp::events {

using nlohmann::json;

namespace {

const std::map<std::string, int>& stages() {
    static const std::map<std::string, int> s = {
        {"news", 0},  {"retrieve", 1}, {"reason", 1},  {"speak", 2},   {"broadcast", 2},
        {"reflect", 2}, {"act", 3},    {"step", 4},    {"train", 5},   {"harvest", 6},
    };
    return s;
}

bool episode_level(const std::string& ev) { return ev == "episode_begin" || ev == "episode_end" || ev == "harvest_long"; }

void tally(std::map<std::string, std::size_t>& counts, const json& rec) {
    const auto ev = rec.at("ev").get<std::string>();
    ++counts[ev];
    if (ev == "news") ++counts["news:" + rec.at("kind").get<std::string>()];
    if (ev == "harvest" && rec.contains("scope")) ++counts["harvest:" + rec.at("scope").get<std::string>()];
}

}  // namespace

EventLog::EventLog(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot open event log: " + path.string());
}

void EventLog::emit(const std::string& ev, int episode, int t, json fields) {
    json rec = {{"ev", ev}, {"episode", episode}, {"t", t}};
    rec.update(fields);
    tally(counts_, rec);
    if (out_.is_open()) out_ << rec.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
}

std::size_t EventLog::count(const std::string& key) const {
    const auto it = counts_.find(key);
    return it == counts_.end() ? 0 : it->second;
}

int stage_rank(const std::string& ev) {
    const auto it = stages().find(ev);
    return it == stages().end() ? -1 : it->second;
}

std::vector<std::string> validate_log(const std::vector<json>& records) {
    std::vector<std::string> errors;
    int episode = -1;
    int t = -1;
    int rank = -1;
    std::map<std::string, int> once;

    auto close_step = [&]() {
        if (t < 0) return;
        for (const char* ev : {"news", "act", "step"})
            if (once[ev] != 1)
                errors.push_back(fmt::format("episode {} step {}: expected one '{}' event, found {}", episode, t, ev, once[ev]));
    };

    for (std::size_t line = 0; line < records.size(); ++line) {
        const json& r = records[line];
        if (!r.contains("ev") || !r.contains("episode") || !r.contains("t")) {
            errors.push_back(fmt::format("line {}: missing ev/episode/t", line + 1));
            continue;
        }
        const auto ev = r.at("ev").get<std::string>();
        const int ep = r.at("episode").get<int>();
        const int rt = r.at("t").get<int>();
        if (episode_level(ev)) {
            if (ev == "episode_begin") {
                close_step();
                episode = ep;
                t = -1;
                rank = -1;
                once.clear();
            } else if (ep != episode) {
                errors.push_back(fmt::format("line {}: '{}' for episode {} inside episode {}", line + 1, ev, ep, episode));
            }
            continue;
        }
        if (ep != episode) {
            errors.push_back(fmt::format("line {}: event of episode {} outside its episode", line + 1, ep));
            continue;
        }
        const int stage = stage_rank(ev);
        if (stage < 0) {
            errors.push_back(fmt::format("line {}: unknown event '{}'", line + 1, ev));
            continue;
        }
        if (rt != t) {
            close_step();
            if (rt != t + 1) errors.push_back(fmt::format("line {}: step {} follows step {}", line + 1, rt, t));
            t = rt;
            rank = -1;
            once.clear();
        }
        if (stage < rank)
            errors.push_back(fmt::format("line {}: '{}' out of order in episode {} step {}", line + 1, ev, ep, rt));
        rank = std::max(rank, stage);
        ++once[ev];
    }
    close_step();
    return errors;
}

std::vector<json> read_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read event log: " + path.string());
    std::vector<json> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(json::parse(line));
    return out;
}

std::map<std::string, std::size_t> count_events(const std::vector<json>& records) {
    std::map<std::string, std::size_t> counts;
    for (const auto& r : records) tally(counts, r);
    return counts;
}

}  // namespace lamp::events
