#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace lamp::llm {

enum class TemplateKind { LongReason, ShortReason, Reflect, LongNews, ShortNews, Candidates };

inline constexpr std::size_t kTemplateKinds = 6;
std::string to_string(TemplateKind k);
TemplateKind kind_from_string(const std::string& s);
/// Schema identifier carried by each request; one per kind.
std::string schema_id(TemplateKind k);

struct PromptRequest {
    TemplateKind kind = TemplateKind::ShortReason;
    std::string prompt;
    std::string schema;
    int agent = -1;  // -1 for shared (news) requests
    int period = 0;
    std::size_t expected_num = 0;  // reflect arity
    /// Structured inputs the prompt was rendered from. The scripted backend
    /// reads these instead of parsing prose.
    nlohmann::json context = nlohmann::json::object();
};

class BackendFormatError : public std::runtime_error {
public:
    BackendFormatError(const std::string& what, std::string raw) : std::runtime_error(what), raw_(std::move(raw)) {}
    const std::string& raw() const { return raw_; }

private:
    std::string raw_;
};

class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Validation {
    bool ok = false;
    std::string reason;
    nlohmann::json value;
};

/// Strict check of a parsed object against the kind's schema: required keys
/// only, no extras, value domains enforced.
Validation validate_response(const nlohmann::json& value, TemplateKind kind, std::size_t expected_num);

/// Strips code fences and returns the first balanced {...} object, if any.
std::optional<std::string> extract_json_object(std::string_view raw);

/// Lenient extraction followed by strict validation.
Validation parse_lenient(std::string_view raw, TemplateKind kind, std::size_t expected_num);

/// Transport-level language backend. Implementations must tolerate concurrent calls.
class LanguageBackend {
public:
    virtual ~LanguageBackend() = default;
    virtual std::string name() const = 0;
    /// Returns the raw model text for a request; throws TransportError.
    virtual std::string raw_complete(const PromptRequest& request) = 0;
};

/// Status from wealth rank: bottom 30% -> 0, top 20% -> 2, otherwise 1.
/// Ties in wealth are broken by household index.
int status_from_wealth_rank(const std::vector<double>& all_wealth, std::size_t agent);

/// Three public statements per status, in fixed order.
const std::vector<std::string>& phrase_bank(int status);
/// Status whose bank produced `statement`, if any.
std::optional<int> statement_provenance(const std::string& statement);

/// Wealth-guess composition for n households (count of 0s, 1s, 2s):
/// half low, four tenths middle, one tenth (at least one) high.
std::array<std::size_t, 3> guess_composition(std::size_t n);

/// 7 + (hash(observer, peer, seed) mod 4).
int scripted_trust(std::size_t observer, std::size_t peer, std::uint64_t seed);

/// "+12.34%" style relative change, floored denominator 1e-8.
std::string percent_change(double before, double after);

/// Deterministic response for a request; a pure function of (request.context, kind, seed).
nlohmann::json scripted_policy(const PromptRequest& request, std::uint64_t seed);

class ScriptedBackend final : public LanguageBackend {
public:
    explicit ScriptedBackend(std::uint64_t seed = 0) : seed_(seed) {}
    std::string name() const override { return "scripted"; }
    std::string raw_complete(const PromptRequest& request) override;

private:
    std::uint64_t seed_;
};

struct RemoteConfig {
    std::string endpoint;  // full chat-completions URL
    std::string model;
    std::string api_key;
    double temperature = 0.0;
    int transport_retries = 2;
    std::vector<std::chrono::milliseconds> backoff = {std::chrono::milliseconds(500), std::chrono::milliseconds(2000)};
    std::ptrdiff_t max_in_flight = 4;
    int timeout_seconds = 120;

    /// Reads LAMP_LLM_ENDPOINT, LAMP_LLM_MODEL, LAMP_LLM_API_KEY.
    static RemoteConfig from_env();
};

/// Chat-completions client: POST {model, messages:[{role, content}], temperature}.
class RemoteBackend final : public LanguageBackend {
public:
    explicit RemoteBackend(RemoteConfig config);
    std::string name() const override { return "remote"; }
    std::string raw_complete(const PromptRequest& request) override;

    static constexpr std::ptrdiff_t kMaxInFlightCap = 64;

private:
    std::string post_once(const std::string& body, bool& retryable);

    RemoteConfig config_;
    std::counting_semaphore<kMaxInFlightCap> in_flight_;
};

/// Line-delimited JSON audit records of every request/response pair.
class AuditLog {
public:
    AuditLog() = default;
    explicit AuditLog(const std::filesystem::path& path, bool include_prompts = false);

    struct Record {
        std::string backend;
        TemplateKind kind = TemplateKind::ShortReason;
        int agent = -1;
        int period = 0;
        int attempt = 0;
        bool accepted = false;
        std::string reason;
        double latency_ms = 0.0;
        std::string raw;
        std::string prompt;
    };

    void record(const Record& r);
    std::size_t count() const { return count_.load(); }

private:
    std::mutex mu_;
    std::ofstream out_;
    bool include_prompts_ = false;
    std::atomic<std::size_t> count_{0};
};

struct CallCounts {
    std::array<std::size_t, kTemplateKinds> by_kind{};
    std::size_t rejects = 0;
    std::size_t fallbacks = 0;
    std::size_t total() const;
};

/// The complete() operation: transport, lenient parse, strict validation, one
/// format retry, then optional fallback to a second backend. Only validated
/// objects are returned.
class LanguageClient {
public:
    LanguageClient(std::shared_ptr<LanguageBackend> primary, std::shared_ptr<AuditLog> audit = nullptr,
                   std::shared_ptr<LanguageBackend> fallback = nullptr);

    nlohmann::json complete(const PromptRequest& request);

    CallCounts counts() const;
    const LanguageBackend& primary() const { return *primary_; }

    static std::string format_reminder(const std::string& reason);

private:
    Validation attempt(LanguageBackend& backend, const PromptRequest& request, int attempt_no, std::string& raw);

    std::shared_ptr<LanguageBackend> primary_;
    std::shared_ptr<AuditLog> audit_;
    std::shared_ptr<LanguageBackend> fallback_;
    std::array<std::atomic<std::size_t>, kTemplateKinds> by_kind_{};
    std::atomic<std::size_t> rejects_{0};
    std::atomic<std::size_t> fallbacks_{0};
};

}  // namespace lamp::llm
