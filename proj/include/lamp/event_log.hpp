#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace lamp::events {

/// Append-only line-delimited JSON log. Every record carries "ev", "episode"
/// and "t"; episode-level records use t = -1. No wall-clock fields, so logs of
/// deterministic runs are byte-identical.
class EventLog {
public:
    EventLog() = default;  // counts only, nothing written
    explicit EventLog(const std::filesystem::path& path);

    void emit(const std::string& ev, int episode, int t, nlohmann::json fields = nlohmann::json::object());

    /// Count per "ev"; news records are additionally counted as "news:<kind>".
    const std::map<std::string, std::size_t>& counts() const { return counts_; }
    std::size_t count(const std::string& key) const;

private:
    std::ofstream out_;
    std::map<std::string, std::size_t> counts_;
};

/// Stage rank of a per-step event, or -1 for an unknown name.
int stage_rank(const std::string& ev);

/// Checks the per-step grammar news -> reason -> [speak] -> act -> step -> train -> harvest:
/// stages are nondecreasing, news/act/step occur exactly once per step, and
/// steps are contiguous from 0 within each episode. Returns the violations found.
std::vector<std::string> validate_log(const std::vector<nlohmann::json>& records);

std::vector<nlohmann::json> read_log(const std::filesystem::path& path);

std::map<std::string, std::size_t> count_events(const std::vector<nlohmann::json>& records);

}  // namespace lamp::events
