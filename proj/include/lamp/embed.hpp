#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lamp/nn.hpp"

namespace lamp::embed {

using nn::Matrix;
using nn::Vector;

inline constexpr std::size_t kDefaultEncoderDim = 256;
inline constexpr std::size_t kDefaultEmbedDim = 5;

/// Frozen text encoder. Implementations must be pure and safe to call concurrently.
class TextEncoder {
public:
    virtual ~TextEncoder() = default;
    virtual std::size_t dim() const = 0;
    virtual Vector encode(const std::string& text) const = 0;
};

/// Signed feature hashing of byte 2- and 3-grams, L2-normalized.
/// Uses FNV-1a over the raw UTF-8 bytes so results do not depend on the platform.
class HashingEncoder final : public TextEncoder {
public:
    explicit HashingEncoder(std::uint64_t seed = 0, std::size_t dim = kDefaultEncoderDim);
    std::size_t dim() const override { return dim_; }
    Vector encode(const std::string& text) const override;

private:
    std::uint64_t seed_;
    std::size_t dim_;
};

/// Embeddings over HTTP: POST {"input": text} to `url`; accepts either
/// {"embedding": [...]} or the {"data": [{"embedding": [...]}]} envelope.
class RemoteEncoder final : public TextEncoder {
public:
    RemoteEncoder(std::string url, std::size_t expected_dim, std::string api_key = {}, std::string model = {});
    std::size_t dim() const override { return dim_; }
    Vector encode(const std::string& text) const override;

    /// Encodes a probe string and throws if the response length differs from dim().
    void verify() const;

private:
    std::string url_;
    std::size_t dim_;
    std::string api_key_;
    std::string model_;
};

std::unique_ptr<TextEncoder> make_encoder(const std::string& kind, std::uint64_t seed, std::size_t dim);

/// Mean of the encoded texts; the zero vector for an empty list.
Vector pool_texts(const std::vector<std::string>& texts, const TextEncoder& encoder);

/// Trainable linear map from encoder space to the d-dimensional language slot.
struct ProjectionParams {
    Matrix weight;  // d x D_E

    static ProjectionParams random(std::size_t d, std::size_t encoder_dim, std::mt19937_64& rng);
    std::size_t out_dim() const { return static_cast<std::size_t>(weight.rows()); }
    std::size_t in_dim() const { return static_cast<std::size_t>(weight.cols()); }
};

/// m = P h / ||P h||. A zero projection maps to the zero vector.
Vector project_normalize(const ProjectionParams& p, const Vector& pooled);

/// Given dL/dm at m = project_normalize(P, pooled), returns dL/dP.
Matrix project_normalize_backward(const ProjectionParams& p, const Vector& pooled, const Vector& upstream);

/// Which text sources feed the agent embedding.
struct EmbedSources {
    bool reasoning = true;   // psi
    bool reflection = true;  // alpha
    bool statement = true;   // own broadcast statement v
    bool news = true;        // latest news text

    /// "union" (default), "think" (reasoning + reflection), "algorithm" (statement + news).
    static EmbedSources from_string(const std::string& mode);
    bool any() const { return reasoning || reflection || statement || news; }
};

struct AgentTexts {
    std::optional<std::string> reasoning;
    std::optional<std::string> reflection;
    std::optional<std::string> statement;
    std::optional<std::string> news;
};

/// The texts that survive the source switches, in a fixed order.
std::vector<std::string> select_texts(const AgentTexts& texts, const EmbedSources& sources);

/// Pooled pre-projection vector for the agent (kept for projection gradients).
Vector agent_pooled_vector(const AgentTexts& texts, const EmbedSources& sources, const TextEncoder& encoder);

Vector build_agent_embedding(const AgentTexts& texts, const ProjectionParams& p, const TextEncoder& encoder,
                             const EmbedSources& sources);

/// Cosine similarity; 0 when either side is the zero vector.
double cosine(const Vector& a, const Vector& b);

}  // namespace lamp::embed
