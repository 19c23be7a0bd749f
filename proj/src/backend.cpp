#include "lamp/backend.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace lamp::llm {

using nlohmann::json;

namespace {

constexpr const char* kKindNames[kTemplateKinds] = {"long_reason", "short_reason", "reflect",
                                                    "long_news",   "short_news",   "candidates"};

const char* const kStatusWords[3] = {"Bad", "Neutral", "Good"};

Validation reject(std::string reason) { return {false, std::move(reason), {}}; }

bool nonempty_string(const json& v) { return v.is_string() && !v.get_ref<const std::string&>().empty(); }

// Integers only; JSON booleans and floats are rejected.
bool int_in_range(const json& v, long long lo, long long hi) {
    if (!v.is_number_integer()) return false;
    const auto x = v.get<long long>();
    return x >= lo && x <= hi;
}

Validation check_keys(const json& v, const std::vector<std::string>& required) {
    if (!v.is_object()) return reject("response is not a JSON object");
    for (const auto& k : required)
        if (!v.contains(k)) return reject("missing key: " + k);
    for (const auto& [k, _] : v.items())
        if (std::find(required.begin(), required.end(), k) == required.end()) return reject("extra key: " + k);
    return {true, {}, {}};
}

Validation check_int_array(const json& v, const std::string& key, std::size_t n, long long lo, long long hi) {
    const json& arr = v.at(key);
    if (!arr.is_array()) return reject(key + " must be an array");
    if (arr.size() != n) return reject(fmt::format("{} must have exactly {} elements, got {}", key, n, arr.size()));
    for (const auto& x : arr)
        if (!int_in_range(x, lo, hi)) return reject(fmt::format("{} values must be integers in [{}, {}]", key, lo, hi));
    return {true, {}, {}};
}

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::string position_word(int status) {
    static const char* words[3] = {"vulnerable", "moderate", "favorable"};
    return words[std::clamp(status, 0, 2)];
}

std::string advice(int status) {
    switch (status) {
        case 0: return "The family should protect its savings, keep consumption lean, and avoid taking on extra risk.";
        case 2: return "The family can afford to reduce working hours slightly and enjoy more consumption while conditions last.";
        default: return "The family should balance working hours and consumption and save prudently.";
    }
}

json obs_json_field(const json& obs, const char* key) { return obs.contains(key) ? obs.at(key) : json(0.0); }

std::string news_deltas(const json& prev, const json& curr) {
    auto d = [&](const char* key) {
        return percent_change(obs_json_field(prev, key).get<double>(), obs_json_field(curr, key).get<double>());
    };
    return fmt::format(
        "wage {}; top 10% wealth {}, income {}, productivity {}; bottom 50% wealth {}, income {}, productivity {}.",
        d("wage"), d("rich_assets"), d("rich_income"), d("rich_efficiency"), d("poor_assets"), d("poor_income"),
        d("poor_efficiency"));
}

int reasoning_status(const json& ctx) {
    const auto all = ctx.at("all_wealth").get<std::vector<double>>();
    return status_from_wealth_rank(all, ctx.at("agent").get<std::size_t>());
}

std::string reasoning_text(const json& ctx, int status) {
    const auto all = ctx.at("all_wealth").get<std::vector<double>>();
    const auto agent = ctx.at("agent").get<std::size_t>();
    std::size_t rank = 0;  // number of households strictly poorer (index tie-break)
    for (std::size_t j = 0; j < all.size(); ++j)
        if (all[j] < all[agent] || (all[j] == all[agent] && j < agent)) ++rank;
    return fmt::format(
        "The family's personal productivity ({:.4f}) and wealth ({:.4f}) rank {} of {} households by wealth, placing "
        "them in a {} position. Given the latest news, the economic status is rated as '{}'. {}",
        ctx.at("productivity").get<double>(), ctx.at("wealth").get<double>(), rank + 1, all.size(),
        position_word(status), kStatusWords[status], advice(status));
}

}  // namespace

std::string to_string(TemplateKind k) { return kKindNames[static_cast<int>(k)]; }

TemplateKind kind_from_string(const std::string& s) {
    for (std::size_t i = 0; i < kTemplateKinds; ++i)
        if (s == kKindNames[i]) return static_cast<TemplateKind>(i);
    throw std::invalid_argument("unknown template kind: " + s);
}

std::string schema_id(TemplateKind k) { return to_string(k) + "/v1"; }

Validation validate_response(const json& v, TemplateKind kind, std::size_t expected_num) {
    switch (kind) {
        case TemplateKind::LongReason: {
            auto keys = check_keys(v, {"analysis", "economic_status", "reasoning"});
            if (!keys.ok) return keys;
            if (!nonempty_string(v.at("analysis"))) return reject("analysis must be a nonempty string");
            if (!int_in_range(v.at("economic_status"), 0, 2)) return reject("economic_status must be 0, 1 or 2");
            if (!nonempty_string(v.at("reasoning"))) return reject("reasoning must be a nonempty string");
            break;
        }
        case TemplateKind::ShortReason: {
            auto keys = check_keys(v, {"economic_status", "reasoning"});
            if (!keys.ok) return keys;
            if (!int_in_range(v.at("economic_status"), 0, 2)) return reject("economic_status must be 0, 1 or 2");
            if (!nonempty_string(v.at("reasoning"))) return reject("reasoning must be a nonempty string");
            break;
        }
        case TemplateKind::Reflect: {
            auto keys = check_keys(v, {"wealth_guesses", "trust_levels", "reflection_text"});
            if (!keys.ok) return keys;
            if (auto r = check_int_array(v, "wealth_guesses", expected_num, 0, 2); !r.ok) return r;
            if (auto r = check_int_array(v, "trust_levels", expected_num, 0, 10); !r.ok) return r;
            if (!nonempty_string(v.at("reflection_text"))) return reject("reflection_text must be a nonempty string");
            break;
        }
        case TemplateKind::LongNews:
        case TemplateKind::ShortNews: {
            auto keys = check_keys(v, {"news"});
            if (!keys.ok) return keys;
            if (!nonempty_string(v.at("news"))) return reject("news must be a nonempty string");
            break;
        }
        case TemplateKind::Candidates: {
            auto keys = check_keys(v, {"statements"});
            if (!keys.ok) return keys;
            const json& s = v.at("statements");
            if (!s.is_array()) return reject("statements must be an array");
            if (s.size() != 3) return reject(fmt::format("statements must have exactly 3 elements, got {}", s.size()));
            for (const auto& x : s)
                if (!nonempty_string(x)) return reject("statements must be nonempty strings");
            break;
        }
    }
    return {true, {}, v};
}

std::optional<std::string> extract_json_object(std::string_view raw) {
    std::string_view body = raw;
    if (const auto fence = body.find("```"); fence != std::string_view::npos) {
        auto line_end = body.find('\n', fence);
        if (line_end != std::string_view::npos) {
            const auto close = body.find("```", line_end + 1);
            body = body.substr(line_end + 1, close == std::string_view::npos ? std::string_view::npos : close - line_end - 1);
        }
    }
    const auto start = body.find('{');
    if (start == std::string_view::npos) return std::nullopt;
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < body.size(); ++i) {
        const char c = body[i];
        if (in_string) {
            if (escaped) escaped = false;
            else if (c == '\\') escaped = true;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '{') ++depth;
        else if (c == '}' && --depth == 0) return std::string(body.substr(start, i - start + 1));
    }
    return std::nullopt;
}

Validation parse_lenient(std::string_view raw, TemplateKind kind, std::size_t expected_num) {
    const auto object = extract_json_object(raw);
    if (!object) return reject("no JSON object found");
    json parsed = json::parse(*object, nullptr, false);
    if (parsed.is_discarded()) return reject("JSON object does not parse");
    return validate_response(parsed, kind, expected_num);
}

int status_from_wealth_rank(const std::vector<double>& all_wealth, std::size_t agent) {
    if (agent >= all_wealth.size()) throw std::out_of_range("status_from_wealth_rank: agent index");
    const std::size_t n = all_wealth.size();
    std::size_t rank = 0;
    for (std::size_t j = 0; j < n; ++j)
        if (all_wealth[j] < all_wealth[agent] || (all_wealth[j] == all_wealth[agent] && j < agent)) ++rank;
    if (rank * 10 < 3 * n) return 0;
    if (rank * 5 >= 4 * n) return 2;
    return 1;
}

const std::vector<std::string>& phrase_bank(int status) {
    static const std::vector<std::vector<std::string>> banks = {
        {"Times are hard for our family; we are trimming spending and guarding every bit of savings.",
         "With little wealth to fall back on, we will keep working steadily and avoid any new risks.",
         "Households like ours need relief; we will keep consumption lean until conditions improve."},
        {"We are keeping a balance between working hours and consumption while conditions stay neutral.",
         "Our family will save prudently and avoid overworking so that utility stays stable.",
         "Moderate effort and moderate spending seem right for a steady economy."},
        {"Our position is strong; we can afford to work a little less and enjoy more consumption.",
         "We advocate fair wage growth and equitable wealth distribution to keep the economy stable.",
         "Investing in long-term productivity pays off when conditions are as good as they are now."},
    };
    if (status < 0 || status > 2) throw std::out_of_range("phrase_bank: status must be 0, 1 or 2");
    return banks[static_cast<std::size_t>(status)];
}

std::optional<int> statement_provenance(const std::string& statement) {
    for (int s = 0; s < 3; ++s) {
        const auto& bank = phrase_bank(s);
        if (std::find(bank.begin(), bank.end(), statement) != bank.end()) return s;
    }
    return std::nullopt;
}

std::array<std::size_t, 3> guess_composition(std::size_t n) {
    if (n == 0) return {0, 0, 0};
    const std::size_t high = std::max<std::size_t>(1, n / 10);
    const std::size_t mid = std::min(n - high, (4 * n) / 10);
    return {n - high - mid, mid, high};
}

int scripted_trust(std::size_t observer, std::size_t peer, std::uint64_t seed) {
    const std::uint64_t h = mix64(mix64(mix64(seed) ^ observer) ^ (peer * 0x100000001B3ULL));
    return 7 + static_cast<int>(h % 4);
}

std::string percent_change(double before, double after) {
    const double pct = (after - before) / std::max(std::abs(before), 1e-8) * 100.0;
    return fmt::format("{:+.2f}%", pct);
}

json scripted_policy(const PromptRequest& request, std::uint64_t seed) {
    const json& ctx = request.context;
    switch (request.kind) {
        case TemplateKind::ShortReason: {
            const int status = reasoning_status(ctx);
            return {{"economic_status", status}, {"reasoning", reasoning_text(ctx, status)}};
        }
        case TemplateKind::LongReason: {
            const int status = reasoning_status(ctx);
            const auto experiences = ctx.value("experience_count", 0);
            std::string analysis = fmt::format(
                "Long-term conditions reviewed with {} similar experience{}. {}", experiences, experiences == 1 ? "" : "s",
                ctx.value("news_summary", std::string("No long-term news summary available.")));
            return {{"analysis", analysis}, {"economic_status", status}, {"reasoning", reasoning_text(ctx, status)}};
        }
        case TemplateKind::LongNews: {
            return {{"news", fmt::format("Year {} long-term report: {}", ctx.at("period").get<int>(),
                                         news_deltas(ctx.at("previous"), ctx.at("current")))}};
        }
        case TemplateKind::ShortNews: {
            const bool has_long = ctx.value("has_long_news", false);
            return {{"news", fmt::format("Year {} shock alert: {} Recent long-term news: {}.", ctx.at("period").get<int>(),
                                         news_deltas(ctx.at("previous"), ctx.at("current")),
                                         has_long ? "available" : "none")}};
        }
        case TemplateKind::Candidates: {
            const int status = ctx.at("economic_status").get<int>();
            return {{"statements", phrase_bank(status)}};
        }
        case TemplateKind::Reflect: {
            const auto statements = ctx.at("statements").get<std::vector<std::string>>();
            const auto observer = ctx.at("agent").get<std::size_t>();
            const std::size_t n = statements.size();
            std::vector<int> provenance(n);
            for (std::size_t j = 0; j < n; ++j) provenance[j] = statement_provenance(statements[j]).value_or(1);
            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return provenance[a] < provenance[b]; });
            const auto comp = guess_composition(n);
            std::vector<int> guesses(n);
            for (std::size_t r = 0; r < n; ++r) guesses[order[r]] = r < comp[0] ? 0 : (r < comp[0] + comp[1] ? 1 : 2);
            std::vector<int> trust(n);
            for (std::size_t j = 0; j < n; ++j) trust[j] = scripted_trust(observer, j, seed);
            const auto strained = static_cast<std::size_t>(std::count(provenance.begin(), provenance.end(), 0));
            const auto comfortable = static_cast<std::size_t>(std::count(provenance.begin(), provenance.end(), 2));
            const int own = ctx.value("own_status", 1);
            std::string text = fmt::format(
                "Of {} statements, {} sound strained and {} sound comfortable. Our own position looks '{}'. {}", n, strained,
                comfortable, kStatusWords[std::clamp(own, 0, 2)], advice(own));
            return {{"wealth_guesses", guesses}, {"trust_levels", trust}, {"reflection_text", text}};
        }
    }
    throw std::invalid_argument("scripted_policy: unsupported kind");
}

std::string ScriptedBackend::raw_complete(const PromptRequest& request) { return scripted_policy(request, seed_).dump(); }

AuditLog::AuditLog(const std::filesystem::path& path, bool include_prompts)
    : out_(path, std::ios::out | std::ios::trunc), include_prompts_(include_prompts) {
    if (!out_) throw std::runtime_error("cannot open audit log: " + path.string());
}

void AuditLog::record(const Record& r) {
    ++count_;
    json line = {{"backend", r.backend}, {"kind", to_string(r.kind)}, {"agent", r.agent},
                 {"period", r.period},   {"attempt", r.attempt},      {"accepted", r.accepted},
                 {"reason", r.reason},   {"latency_ms", r.latency_ms}, {"raw", r.raw}};
    if (include_prompts_) line["prompt"] = r.prompt;
    std::lock_guard lock(mu_);
    if (out_.is_open()) out_ << line.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
}

std::size_t CallCounts::total() const { return std::accumulate(by_kind.begin(), by_kind.end(), std::size_t{0}); }

LanguageClient::LanguageClient(std::shared_ptr<LanguageBackend> primary, std::shared_ptr<AuditLog> audit,
                               std::shared_ptr<LanguageBackend> fallback)
    : primary_(std::move(primary)), audit_(std::move(audit)), fallback_(std::move(fallback)) {
    if (!primary_) throw std::invalid_argument("LanguageClient: primary backend required");
}

std::string LanguageClient::format_reminder(const std::string& reason) {
    return "\n\nYour previous reply was rejected (" + reason +
           "). Return exactly the JSON object described above, with no extra keys or commentary.";
}

Validation LanguageClient::attempt(LanguageBackend& backend, const PromptRequest& request, int attempt_no,
                                   std::string& raw) {
    const auto start = std::chrono::steady_clock::now();
    raw = backend.raw_complete(request);
    Validation v = parse_lenient(raw, request.kind, request.expected_num);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (!v.ok) ++rejects_;
    if (audit_)
        audit_->record({backend.name(), request.kind, request.agent, request.period, attempt_no, v.ok, v.reason, ms, raw,
                        request.prompt});
    return v;
}

json LanguageClient::complete(const PromptRequest& request) {
    ++by_kind_[static_cast<std::size_t>(request.kind)];
    std::string raw;
    std::string failure;
    try {
        Validation v = attempt(*primary_, request, 0, raw);
        if (v.ok) return v.value;
        PromptRequest retry = request;
        retry.prompt += format_reminder(v.reason);
        v = attempt(*primary_, retry, 1, raw);
        if (v.ok) return v.value;
        failure = v.reason;
        if (!fallback_) throw BackendFormatError("response failed validation after retry: " + v.reason, raw);
    } catch (const TransportError& e) {
        if (!fallback_) throw;
        failure = e.what();
    }
    ++fallbacks_;
    if (audit_)
        audit_->record({fallback_->name(), request.kind, request.agent, request.period, -1, false,
                        "fallback after: " + failure, 0.0, {}, {}});
    Validation v = attempt(*fallback_, request, 2, raw);
    if (!v.ok) throw BackendFormatError("fallback response failed validation: " + v.reason, raw);
    return v.value;
}

CallCounts LanguageClient::counts() const {
    CallCounts c;
    for (std::size_t k = 0; k < kTemplateKinds; ++k) c.by_kind[k] = by_kind_[k].load();
    c.rejects = rejects_.load();
    c.fallbacks = fallbacks_.load();
    return c;
}

}  // namespace lamp::llm
