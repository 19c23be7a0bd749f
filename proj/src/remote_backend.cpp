#include "lamp/backend.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>

namespace lamp::llm {

namespace {

std::string env_or_empty(const char* name) {
    const char* v = std::getenv(name);
    return v ? v : "";
}

struct SplitUrl {
    std::string origin;
    std::string path;
};

SplitUrl split_url(const std::string& url) {
    const auto scheme = url.find("://");
    const auto path_start = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

// Releases the in-flight slot on every exit path.
template <typename Sem>
struct SlotGuard {
    Sem& sem;
    explicit SlotGuard(Sem& s) : sem(s) { sem.acquire(); }
    ~SlotGuard() { sem.release(); }
};

}  // namespace

RemoteConfig RemoteConfig::from_env() {
    RemoteConfig c;
    c.endpoint = env_or_empty("LAMP_LLM_ENDPOINT");
    c.model = env_or_empty("LAMP_LLM_MODEL");
    c.api_key = env_or_empty("LAMP_LLM_API_KEY");
    return c;
}

RemoteBackend::RemoteBackend(RemoteConfig config)
    : config_(std::move(config)), in_flight_(std::clamp<std::ptrdiff_t>(config_.max_in_flight, 1, kMaxInFlightCap)) {
    if (config_.endpoint.empty()) throw std::invalid_argument("remote backend requires LAMP_LLM_ENDPOINT");
    if (config_.max_in_flight < 1 || config_.max_in_flight > kMaxInFlightCap)
        throw std::invalid_argument("remote backend: max_in_flight must be in [1, 64]");
}

std::string RemoteBackend::post_once(const std::string& body, bool& retryable) {
    const SplitUrl u = split_url(config_.endpoint);
    httplib::Client client(u.origin);
    client.set_connection_timeout(config_.timeout_seconds);
    client.set_read_timeout(config_.timeout_seconds);
    client.set_write_timeout(config_.timeout_seconds);
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    auto res = client.Post(u.path, headers, body, "application/json");
    if (!res) {
        retryable = true;
        throw TransportError("request failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        retryable = res->status == 429 || res->status >= 500;
        throw TransportError("endpoint returned HTTP " + std::to_string(res->status));
    }
    const auto parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (parsed.is_discarded()) {
        retryable = false;
        throw TransportError("endpoint returned a non-JSON body");
    }
    try {
        return parsed.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        retryable = false;
        throw TransportError("endpoint response lacks choices[0].message.content");
    }
}

std::string RemoteBackend::raw_complete(const PromptRequest& request) {
    nlohmann::json body = {{"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
                           {"temperature", config_.temperature}};
    if (!config_.model.empty()) body["model"] = config_.model;
    const std::string payload = body.dump();

    SlotGuard guard(in_flight_);
    for (int attempt = 0;; ++attempt) {
        bool retryable = false;
        try {
            return post_once(payload, retryable);
        } catch (const TransportError&) {
            if (!retryable || attempt >= config_.transport_retries) throw;
        }
        const auto idx = std::min<std::size_t>(static_cast<std::size_t>(attempt), config_.backoff.size() - 1);
        if (!config_.backoff.empty()) std::this_thread::sleep_for(config_.backoff[idx]);
    }
}

}  // namespace lamp::llm
