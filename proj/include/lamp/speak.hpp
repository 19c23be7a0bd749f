#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "lamp/backend.hpp"
#include "lamp/embed.hpp"
#include "lamp/think.hpp"

namespace lamp::speak {

using embed::Matrix;
using embed::Vector;

inline constexpr std::size_t kCandidates = 3;

using Candidates = std::array<std::string, kCandidates>;

Candidates generate_candidates(const think::AgentContext& ctx, const think::ReasoningRecord& reasoning,
                               llm::LanguageClient& client);

/// Scaled dot-product scorer: score_j = q . (K e_j) / sqrt(d_k).
struct SelectorParams {
    Matrix key_proj;  // d_k x D_E
    Vector query;     // d_k
    double temperature = 1.0;

    static SelectorParams random(std::size_t key_dim, std::size_t encoder_dim, std::mt19937_64& rng,
                                 double temperature = 1.0);
    void validate() const;
};

struct StatementSet {
    int agent = 0;
    Candidates candidates;
    std::size_t selected = 0;
    std::array<double, kCandidates> probs{};

    const std::string& statement() const { return candidates[selected]; }
};

/// Softmax(score / temperature) over the encoded candidates (columns of `encoded`).
std::array<double, kCandidates> selection_probs(const Matrix& encoded, const SelectorParams& selector);
Matrix encode_candidates(const Candidates& candidates, const embed::TextEncoder& encoder);

StatementSet select_statement(int agent, const Candidates& candidates, const SelectorParams& selector,
                              const embed::TextEncoder& encoder, std::mt19937_64& rng);

/// Selected statements in agent order.
std::vector<std::string> broadcast(const std::vector<StatementSet>& sets);

struct ReflectionResult {
    std::vector<int> wealth_guesses;
    std::vector<int> trust;
    std::string text;
};

ReflectionResult reflect(const think::AgentContext& ctx, const std::vector<std::string>& statements,
                         const think::ReasoningRecord& reasoning, const std::string& own_statement,
                         llm::LanguageClient& client);

/// One REINFORCE ascent step on log p(selected) scaled by `advantage`.
void reinforce_update(SelectorParams& selector, const Matrix& encoded, std::size_t selected, double advantage,
                      double lr);

}  // namespace lamp::speak
