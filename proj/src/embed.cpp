#include "lamp/embed.hpp"

#include <cmath>
#include <stdexcept>

#include <httplib.h>
#include <json.hpp>

namespace lamp::embed {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t fnv1a(std::uint64_t seed, const unsigned char* data, std::size_t n) {
    std::uint64_t h = kFnvOffset ^ (seed * 0x9E3779B97F4A7C15ULL);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= kFnvPrime;
    }
    return h;
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

}  // namespace

HashingEncoder::HashingEncoder(std::uint64_t seed, std::size_t dim) : seed_(seed), dim_(dim) {
    if (dim == 0) throw std::invalid_argument("HashingEncoder: dim must be positive");
}

Vector HashingEncoder::encode(const std::string& text) const {
    Vector v = Vector::Zero(static_cast<Eigen::Index>(dim_));
    const auto* bytes = reinterpret_cast<const unsigned char*>(text.data());
    for (std::size_t n = 2; n <= 3; ++n) {
        if (text.size() < n) continue;
        for (std::size_t i = 0; i + n <= text.size(); ++i) {
            const std::uint64_t h = fnv1a(seed_ + n, bytes + i, n);
            const auto bucket = static_cast<Eigen::Index>(h % dim_);
            v(bucket) += ((h >> 63) & 1U) ? -1.0 : 1.0;
        }
    }
    const double norm = v.norm();
    if (norm > 0.0) v /= norm;
    return v;
}

RemoteEncoder::RemoteEncoder(std::string url, std::size_t expected_dim, std::string api_key, std::string model)
    : url_(std::move(url)), dim_(expected_dim), api_key_(std::move(api_key)), model_(std::move(model)) {}

Vector RemoteEncoder::encode(const std::string& text) const {
    const SplitUrl u = split_url(url_);
    httplib::Client client(u.origin);
    client.set_connection_timeout(10);
    client.set_read_timeout(60);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    nlohmann::json body = {{"input", text}};
    if (!model_.empty()) body["model"] = model_;
    auto res = client.Post(u.path, headers, body.dump(), "application/json");
    if (!res) throw std::runtime_error("embedding request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw std::runtime_error("embedding endpoint returned HTTP " + std::to_string(res->status));
    const auto j = nlohmann::json::parse(res->body);
    const nlohmann::json* arr = nullptr;
    if (j.contains("embedding")) arr = &j.at("embedding");
    else if (j.contains("data") && j.at("data").is_array() && !j.at("data").empty()) arr = &j.at("data")[0].at("embedding");
    if (arr == nullptr || !arr->is_array()) throw std::runtime_error("embedding response has no vector");
    if (arr->size() != dim_)
        throw std::runtime_error("embedding dimension " + std::to_string(arr->size()) + " != configured " + std::to_string(dim_));
    Vector v(static_cast<Eigen::Index>(dim_));
    for (std::size_t i = 0; i < dim_; ++i) v(static_cast<Eigen::Index>(i)) = (*arr)[i].get<double>();
    return v;
}

void RemoteEncoder::verify() const { (void)encode("dimension probe"); }

std::unique_ptr<TextEncoder> make_encoder(const std::string& kind, std::uint64_t seed, std::size_t dim) {
    if (kind == "hash" || kind == "local") return std::make_unique<HashingEncoder>(seed, dim);
    if (kind == "remote") {
        const char* url = std::getenv("LAMP_EMBED_ENDPOINT");
        if (url == nullptr) throw std::runtime_error("remote encoder requires LAMP_EMBED_ENDPOINT");
        const char* key = std::getenv("LAMP_LLM_API_KEY");
        const char* model = std::getenv("LAMP_EMBED_MODEL");
        auto enc = std::make_unique<RemoteEncoder>(url, dim, key ? key : "", model ? model : "");
        enc->verify();
        return enc;
    }
    throw std::invalid_argument("unknown encoder kind: " + kind);
}

Vector pool_texts(const std::vector<std::string>& texts, const TextEncoder& encoder) {
    Vector sum = Vector::Zero(static_cast<Eigen::Index>(encoder.dim()));
    if (texts.empty()) return sum;
    for (const auto& t : texts) sum += encoder.encode(t);
    return sum / static_cast<double>(texts.size());
}

ProjectionParams ProjectionParams::random(std::size_t d, std::size_t encoder_dim, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(encoder_dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    ProjectionParams p;
    p.weight.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(encoder_dim));
    for (Eigen::Index c = 0; c < p.weight.cols(); ++c)
        for (Eigen::Index r = 0; r < p.weight.rows(); ++r) p.weight(r, c) = dist(rng);
    return p;
}

Vector project_normalize(const ProjectionParams& p, const Vector& pooled) {
    if (pooled.size() != p.weight.cols()) throw std::invalid_argument("project_normalize: dimension mismatch");
    if (!pooled.allFinite()) throw std::domain_error("project_normalize: non-finite input");
    Vector u = p.weight * pooled;
    const double norm = u.norm();
    if (norm == 0.0) return Vector::Zero(u.size());
    return u / norm;
}

Matrix project_normalize_backward(const ProjectionParams& p, const Vector& pooled, const Vector& upstream) {
    Vector u = p.weight * pooled;
    const double norm = u.norm();
    if (norm == 0.0) return Matrix::Zero(p.weight.rows(), p.weight.cols());
    const Vector m = u / norm;
    const Vector du = (upstream - m * m.dot(upstream)) / norm;
    return du * pooled.transpose();
}

EmbedSources EmbedSources::from_string(const std::string& mode) {
    if (mode == "union") return {true, true, true, true};
    if (mode == "think") return {true, true, false, false};
    if (mode == "algorithm") return {false, false, true, true};
    throw std::invalid_argument("unknown embed source mode: " + mode);
}

std::vector<std::string> select_texts(const AgentTexts& texts, const EmbedSources& sources) {
    std::vector<std::string> out;
    if (sources.reasoning && texts.reasoning) out.push_back(*texts.reasoning);
    if (sources.reflection && texts.reflection) out.push_back(*texts.reflection);
    if (sources.statement && texts.statement) out.push_back(*texts.statement);
    if (sources.news && texts.news) out.push_back(*texts.news);
    return out;
}

Vector agent_pooled_vector(const AgentTexts& texts, const EmbedSources& sources, const TextEncoder& encoder) {
    return pool_texts(select_texts(texts, sources), encoder);
}

Vector build_agent_embedding(const AgentTexts& texts, const ProjectionParams& p, const TextEncoder& encoder,
                             const EmbedSources& sources) {
    return project_normalize(p, agent_pooled_vector(texts, sources, encoder));
}

double cosine(const Vector& a, const Vector& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return a.dot(b) / (na * nb);
}

}  // namespace lamp::embed
