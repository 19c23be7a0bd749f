#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "lamp/embed.hpp"
#include "lamp/nn.hpp"
#include "lamp/replay.hpp"

namespace lamp::marl {

/// Exploration noise is clipped to [-1 + margin, 1 - margin].
inline constexpr double kExplorationMargin = 1e-3;

struct MaddpgConfig {
    std::size_t n_agents = 10;
    std::size_t obs_dim = 9;     // private (a, e) + global observation
    std::size_t global_dim = 7;
    std::size_t action_dim = 2;
    std::size_t lang_dim = 5;    // 0 disables the language slot
    std::size_t encoder_dim = embed::kDefaultEncoderDim;
    std::vector<std::size_t> actor_hidden = {64, 64};
    std::vector<std::size_t> critic_hidden = {128, 128};
    double gamma = 0.975;
    double tau = 5e-3;
    double actor_lr = 3e-4;
    double critic_lr = 3e-4;
    double projection_lr = 3e-4;
    double exploration_std = 0.1;
    bool train_projection = true;
    /// The shared critic has one output per household, each regressing that
    /// household's reward; when false it has a single output for the mean reward.
    bool per_agent_values = true;

    bool language() const { return lang_dim > 0; }
    std::size_t actor_input_dim() const { return obs_dim + lang_dim; }
    std::size_t state_dim() const { return global_dim + n_agents * lang_dim; }
    std::size_t joint_action_dim() const { return n_agents * action_dim; }
    std::size_t critic_heads() const { return per_agent_values ? n_agents : 1; }
    std::size_t critic_input_dim() const { return state_dim() + joint_action_dim(); }
};

/// Raised when a loss or gradient turns non-finite; the update is not applied.
class NonFiniteLoss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Online and target networks plus optimizer state for the shared critic and
/// the per-household actors.
struct AgentNets {
    MaddpgConfig config;
    std::vector<nn::Mlp> actors;
    std::vector<nn::Mlp> target_actors;
    nn::Mlp critic;
    nn::Mlp target_critic;
    std::optional<embed::ProjectionParams> projection;
    std::vector<nn::Adam> actor_opt;
    nn::Adam critic_opt;
    nn::Adam projection_opt;

    static AgentNets create(const MaddpgConfig& config, std::mt19937_64& rng);

    void save(std::ostream& out) const;
    /// Loads parameters into a network set built from `config`.
    static AgentNets load(std::istream& in, const MaddpgConfig& config);
};

/// Column-stacked view of a sampled batch, with language embeddings recomputed
/// from the stored pooled vectors through the current projection.
struct Batch {
    std::size_t size = 0;
    Matrix global_obs, next_global_obs;               // global_dim x B
    std::vector<Matrix> local_obs, next_local_obs;    // per agent: obs_dim x B
    std::vector<Matrix> pooled, next_pooled;          // per agent: D_E x B
    Matrix actions;                                   // (N*action_dim) x B
    Vector reward;                                    // B, mean over agents
    Matrix rewards;                                   // N x B
    Vector not_done;                                  // B, 0 for terminal rows
};

Batch make_batch(const std::vector<const Transition*>& rows, const MaddpgConfig& config);

/// Language embeddings m_j for every agent (d x B each); empty when language is off.
std::vector<Matrix> embed_batch(const AgentNets& nets, const std::vector<Matrix>& pooled);

/// Bellman targets y = r + gamma * (1 - done) * Q'(x', mu'(o', m')), one row per
/// critic head (heads x B); a single head uses the mean reward.
Matrix critic_targets(const AgentNets& nets, const Batch& batch);

/// Critic input [x; joint actions] with samples as columns.
Matrix critic_inputs(const MaddpgConfig& config, const Matrix& global, const std::vector<Matrix>& embeddings,
                     const Matrix& actions);

struct CriticGrad {
    double loss = 0.0;
    nn::GradientSet grads;
};
CriticGrad critic_gradients(const AgentNets& nets, const Batch& batch);

struct ActorGrad {
    double loss = 0.0;
    nn::GradientSet grads;
    Matrix projection_grad;  // empty when language is off
};
ActorGrad actor_gradients(const AgentNets& nets, const Batch& batch, std::size_t agent);

/// Mean squared TD error before the update; applies one Adam step on the critic.
double critic_update(AgentNets& nets, const Batch& batch);
/// Negative mean Q; one Adam step on the actor and (with language) the projection.
double actor_update(AgentNets& nets, const Batch& batch, std::size_t agent);

struct StepMetrics {
    double critic_loss = 0.0;
    double actor_loss = 0.0;  // mean over agents
};

/// critic_update, then every actor's step from one shared embedding pass, one
/// projection step on the summed actor gradient, then Polyak on every target.
StepMetrics train_step(AgentNets& nets, const ReplayBuffer& buffer, std::size_t batch_size, std::mt19937_64& rng);

/// Deterministic actor output, plus clipped Gaussian noise when exploring.
Vector act(const AgentNets& nets, std::size_t agent, const Vector& local_obs, const Vector& embedding, bool explore,
           std::mt19937_64& rng);

}  // namespace lamp::marl
