#include "lamp/think.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "lamp/prompts.hpp"

namespace lamp::think {

using nlohmann::json;

namespace {

constexpr int kPoolFileVersion = 1;

json context_base(const AgentContext& ctx) {
    return {{"agent", ctx.agent},
            {"period", ctx.period},
            {"productivity", ctx.obs.productivity},
            {"wealth", ctx.obs.wealth},
            {"all_wealth", ctx.all_wealth}};
}

ReasoningRecord record_from(const json& v, const AgentContext& ctx, NewsKind trigger) {
    ReasoningRecord r;
    r.agent = ctx.agent;
    r.period = ctx.period;
    r.status = v.at("economic_status").get<int>();
    r.reasoning = v.at("reasoning").get<std::string>();
    if (v.contains("analysis")) r.analysis = v.at("analysis").get<std::string>();
    r.trigger = trigger;
    return r;
}

bool better(const ExperienceEntry& a, const ExperienceEntry& b) {
    if (a.reward != b.reward) return a.reward > b.reward;
    return a.id > b.id;
}

json entry_json(const ExperienceEntry& e) {
    return {{"id", e.id},
            {"agent", e.agent},
            {"period", e.period},
            {"reward", e.reward},
            {"productivity", e.productivity},
            {"wealth", e.wealth},
            {"raw_savings", e.raw_savings},
            {"raw_labor", e.raw_labor},
            {"reasoning", e.reasoning},
            {"key", std::vector<double>(e.key.data(), e.key.data() + e.key.size())}};
}

}  // namespace

std::string to_string(NewsKind k) {
    switch (k) {
        case NewsKind::Long: return "long";
        case NewsKind::Short: return "short";
        case NewsKind::None: break;
    }
    return "none";
}

NewsKind news_kind_from_string(const std::string& s) {
    if (s == "long") return NewsKind::Long;
    if (s == "short") return NewsKind::Short;
    if (s == "none") return NewsKind::None;
    throw std::invalid_argument("unknown news kind: " + s);
}

double max_indicator_change(const std::vector<double>& now, const std::vector<double>& prev,
                            const SchedulerConfig& cfg) {
    if (now.size() != prev.size()) throw std::invalid_argument("indicator vectors differ in length");
    double worst = 0.0;
    for (std::size_t j = 0; j < now.size(); ++j) {
        const double diff = std::abs(now[j] - prev[j]);
        const double change = cfg.absolute ? diff : diff / std::max(std::abs(prev[j]), cfg.eps_rel);
        // A non-finite change always counts as a shock.
        if (!std::isfinite(change)) return std::numeric_limits<double>::infinity();
        worst = std::max(worst, change);
    }
    return worst;
}

NewsKind classify_news_type(const std::vector<double>& now, const std::vector<double>& prev, int t,
                            const SchedulerConfig& cfg) {
    if (cfg.long_interval <= 0) throw std::invalid_argument("long interval must be positive");
    if (t > 0 && t % cfg.long_interval == 0) return NewsKind::Long;
    if (max_indicator_change(now, prev, cfg) > cfg.sigma) return NewsKind::Short;
    return NewsKind::None;
}

std::string render_number(double v) { return fmt::format("{:.4f}", v); }

json global_obs_json(const econ::GlobalObs& o) {
    return {{"wage", o.wage},
            {"rich_assets", o.rich_assets},
            {"poor_assets", o.poor_assets},
            {"rich_income", o.rich_income},
            {"poor_income", o.poor_income},
            {"rich_efficiency", o.rich_efficiency},
            {"poor_efficiency", o.poor_efficiency}};
}

std::string render_global_obs(const econ::GlobalObs& o) {
    return fmt::format(
        "- Wage: {}\n- Top 10% mean wealth: {}\n- Bottom 50% mean wealth: {}\n- Top 10% mean income: {}\n"
        "- Bottom 50% mean income: {}\n- Top 10% mean productivity: {}\n- Bottom 50% mean productivity: {}",
        render_number(o.wage), render_number(o.rich_assets), render_number(o.poor_assets), render_number(o.rich_income),
        render_number(o.poor_income), render_number(o.rich_efficiency), render_number(o.poor_efficiency));
}

NewsEvent make_long_news(const econ::GlobalObs& prev, const econ::GlobalObs& curr, int period,
                         const std::vector<double>& indicators, llm::LanguageClient& client) {
    llm::PromptRequest req;
    req.kind = llm::TemplateKind::LongNews;
    req.schema = llm::schema_id(req.kind);
    req.period = period;
    req.prompt = llm::render(llm::long_news_template(), {{"period", std::to_string(period)},
                                                        {"previous_observation", render_global_obs(prev)},
                                                        {"current_observation", render_global_obs(curr)}});
    req.context = {{"period", period}, {"previous", global_obs_json(prev)}, {"current", global_obs_json(curr)}};
    const json v = client.complete(req);
    return {NewsKind::Long, period, v.at("news").get<std::string>(), indicators};
}

NewsEvent make_short_news(const econ::GlobalObs& prev, const econ::GlobalObs& curr, const NewsEvent* last_long,
                          int period, const std::vector<double>& indicators, llm::LanguageClient& client) {
    llm::PromptRequest req;
    req.kind = llm::TemplateKind::ShortNews;
    req.schema = llm::schema_id(req.kind);
    req.period = period;
    const std::string recent = last_long ? last_long->text : std::string(llm::kNoLongNews);
    req.prompt = llm::render(llm::short_news_template(), {{"period", std::to_string(period)},
                                                         {"previous_observation", render_global_obs(prev)},
                                                         {"current_observation", render_global_obs(curr)},
                                                         {"recent_long_term_result", recent}});
    req.context = {{"period", period},
                   {"previous", global_obs_json(prev)},
                   {"current", global_obs_json(curr)},
                   {"has_long_news", last_long != nullptr}};
    const json v = client.complete(req);
    return {NewsKind::Short, period, v.at("news").get<std::string>(), indicators};
}

std::string render_experience(const ExperienceEntry& e) {
    return fmt::format(
        "ID=Household{}, Reward={}, Personal productivity(e): {}, Personal wealth: {}, savings ratio:{}, "
        "working time ratio:{}, Reasoning: \"{}\"",
        e.agent + 1, render_number(e.reward), render_number(e.productivity), render_number(e.wealth),
        fmt::format("{:.3f}", e.raw_savings), fmt::format("{:.3f}", e.raw_labor), e.reasoning);
}

std::string render_experiences(const std::vector<ExperienceEntry>& entries) {
    if (entries.empty()) return std::string(llm::kNoExperience);
    std::vector<std::string> lines;
    for (const auto& e : entries) lines.push_back(render_experience(e));
    return "\n" + llm::bullet_list(lines);
}

std::string query_text(double productivity, double wealth) {
    return fmt::format("productivity {:.4f} wealth {:.4f}", productivity, wealth);
}

ReasoningRecord reason_short(const NewsEvent& news, const NewsEvent* recent_long, const AgentContext& ctx,
                             llm::LanguageClient& client) {
    llm::PromptRequest req;
    req.kind = llm::TemplateKind::ShortReason;
    req.schema = llm::schema_id(req.kind);
    req.agent = ctx.agent;
    req.period = ctx.period;
    req.prompt = llm::render(llm::short_reason_template(),
                             {{"short_term_news", news.text},
                              {"recent_long_term_result", recent_long ? recent_long->text : std::string(llm::kNoLongNews)},
                              {"private_observation[0]", render_number(ctx.obs.productivity)},
                              {"private_observation[1]", render_number(ctx.obs.wealth)}});
    req.context = context_base(ctx);
    return record_from(client.complete(req), ctx, news.kind);
}

ReasoningRecord reason_long(const NewsEvent& news, const AgentContext& ctx,
                            const std::vector<ExperienceEntry>& retrieved, llm::LanguageClient& client) {
    llm::PromptRequest req;
    req.kind = llm::TemplateKind::LongReason;
    req.schema = llm::schema_id(req.kind);
    req.agent = ctx.agent;
    req.period = ctx.period;
    req.prompt = llm::render(llm::long_reason_template(),
                             {{"long_term_news", news.text},
                              {"private_observation[0]", render_number(ctx.obs.productivity)},
                              {"private_observation[1]", render_number(ctx.obs.wealth)},
                              {"similar_experience", render_experiences(retrieved)}});
    req.context = context_base(ctx);
    req.context["experience_count"] = retrieved.size();
    req.context["news_summary"] = news.text;
    return record_from(client.complete(req), ctx, news.kind);
}

std::vector<ExperienceEntry> top_k_by_reward(const std::vector<ExperienceEntry>& records, std::size_t k) {
    std::vector<std::size_t> idx(records.size());
    std::iota(idx.begin(), idx.end(), 0);
    const std::size_t keep = std::min(k, records.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(),
                      [&](std::size_t a, std::size_t b) { return better(records[a], records[b]); });
    std::vector<ExperienceEntry> out;
    out.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) out.push_back(records[idx[i]]);
    return out;
}

ExperiencePools::ExperiencePools(std::size_t n_agents, PoolConfig cfg) : config(cfg), short_buffers(n_agents) {}

void ExperiencePools::clear_short() {
    for (auto& b : short_buffers) b.clear();
}

void ExperiencePools::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write pool file: " + path.string());
    out << json{{"lamp_pool_version", kPoolFileVersion}, {"entries", long_store.size()}}.dump() << '\n';
    for (const auto& e : long_store) out << entry_json(e).dump() << '\n';
}

void ExperiencePools::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read pool file: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("pool file is empty: " + path.string());
    const json header = json::parse(line);
    if (header.value("lamp_pool_version", 0) != kPoolFileVersion)
        throw std::runtime_error("unsupported pool file version in " + path.string());
    std::vector<ExperienceEntry> loaded;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        ExperienceEntry e;
        e.id = j.at("id").get<std::uint64_t>();
        e.agent = j.at("agent").get<int>();
        e.period = j.at("period").get<int>();
        e.reward = j.at("reward").get<double>();
        e.productivity = j.at("productivity").get<double>();
        e.wealth = j.at("wealth").get<double>();
        e.raw_savings = j.at("raw_savings").get<double>();
        e.raw_labor = j.at("raw_labor").get<double>();
        e.reasoning = j.at("reasoning").get<std::string>();
        const auto key = j.at("key").get<std::vector<double>>();
        e.key = Eigen::Map<const embed::Vector>(key.data(), static_cast<Eigen::Index>(key.size()));
        loaded.push_back(std::move(e));
    }
    if (loaded.size() != header.value("entries", std::size_t{0}))
        throw std::runtime_error("pool file entry count mismatch: " + path.string());
    long_store = std::move(loaded);
}

void harvest_short(ExperiencePools& pool, std::size_t agent, const std::vector<ExperienceEntry>& window) {
    pool.short_buffers.at(agent) = top_k_by_reward(window, pool.config.k1);
}

std::size_t harvest_long(ExperiencePools& pool, const std::vector<ExperienceEntry>& records,
                         const embed::TextEncoder& encoder) {
    auto top = top_k_by_reward(records, pool.config.k2);
    for (auto& e : top) {
        e.key = encoder.encode(query_text(e.productivity, e.wealth));
        pool.long_store.push_back(std::move(e));
    }
    return top.size();
}

std::vector<std::size_t> nearest_keys(const std::vector<ExperienceEntry>& store, const embed::Vector& query,
                                      std::size_t k) {
    // Hashed keys are scaled integer vectors, so distinct entries often tie exactly; quantizing
    // keeps those ties (and the id tie-break) independent of the summation order.
    std::vector<long long> sim(store.size());
    for (std::size_t i = 0; i < store.size(); ++i)
        sim[i] = std::llround(embed::cosine(store[i].key, query) / kSimilarityResolution);
    std::vector<std::size_t> idx(store.size());
    std::iota(idx.begin(), idx.end(), 0);
    const std::size_t keep = std::min(k, store.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (sim[a] != sim[b]) return sim[a] > sim[b];
                          return store[a].id < store[b].id;
                      });
    idx.resize(keep);
    return idx;
}

std::vector<ExperienceEntry> retrieve_experience(const ExperiencePools& pool, std::size_t agent, const PrivateObs& obs,
                                                 const embed::TextEncoder& encoder) {
    std::vector<ExperienceEntry> out;
    std::set<std::uint64_t> seen;
    if (!pool.long_store.empty()) {
        const embed::Vector q = encoder.encode(query_text(obs.productivity, obs.wealth));
        for (std::size_t i : nearest_keys(pool.long_store, q, pool.config.k3))
            if (seen.insert(pool.long_store[i].id).second) out.push_back(pool.long_store[i]);
    }
    for (const auto& e : pool.short_buffers.at(agent))
        if (seen.insert(e.id).second) out.push_back(e);
    return out;
}

}  // namespace lamp::think
