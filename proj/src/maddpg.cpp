#include "lamp/maddpg.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

namespace lamp::marl {

namespace {

std::vector<std::size_t> layer_sizes(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
    std::vector<std::size_t> sizes{in};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(out);
    return sizes;
}

Matrix stack_rows(const std::vector<const Matrix*>& blocks, Eigen::Index cols) {
    Eigen::Index rows = 0;
    for (const auto* b : blocks) rows += b->rows();
    Matrix out(rows, cols);
    Eigen::Index r = 0;
    for (const auto* b : blocks) {
        out.middleRows(r, b->rows()) = *b;
        r += b->rows();
    }
    return out;
}

Matrix actor_input(const Matrix& obs, const Matrix* embedding) {
    if (embedding == nullptr) return obs;
    return stack_rows({&obs, embedding}, obs.cols());
}

// Batched project_normalize for one agent: columns of `pooled` are samples.
Matrix project_columns(const embed::ProjectionParams& p, const Matrix& pooled) {
    Matrix u = p.weight * pooled;
    for (Eigen::Index c = 0; c < u.cols(); ++c) {
        const double n = u.col(c).norm();
        if (n > 0.0) u.col(c) /= n;
        else u.col(c).setZero();
    }
    return u;
}

Matrix project_columns_backward(const embed::ProjectionParams& p, const Matrix& pooled, const Matrix& upstream) {
    Matrix u = p.weight * pooled;
    Matrix du(u.rows(), u.cols());
    for (Eigen::Index c = 0; c < u.cols(); ++c) {
        const double n = u.col(c).norm();
        if (n == 0.0) {
            du.col(c).setZero();
            continue;
        }
        const Vector m = u.col(c) / n;
        du.col(c) = (upstream.col(c) - m * m.dot(upstream.col(c))) / n;
    }
    return du * pooled.transpose();
}

}  // namespace

Matrix critic_inputs(const MaddpgConfig&, const Matrix& global, const std::vector<Matrix>& embeddings,
                     const Matrix& actions) {
    std::vector<const Matrix*> blocks{&global};
    for (const auto& m : embeddings) blocks.push_back(&m);
    blocks.push_back(&actions);
    return stack_rows(blocks, global.cols());
}

AgentNets AgentNets::create(const MaddpgConfig& config, std::mt19937_64& rng) {
    AgentNets nets;
    nets.config = config;
    for (std::size_t i = 0; i < config.n_agents; ++i) {
        nets.actors.emplace_back(layer_sizes(config.actor_input_dim(), config.actor_hidden, config.action_dim),
                                 nn::Activation::Tanh, nn::Activation::Tanh, rng);
        nets.actor_opt.emplace_back(config.actor_lr);
    }
    nets.target_actors = nets.actors;
    nets.critic = nn::Mlp(layer_sizes(config.critic_input_dim(), config.critic_hidden, config.critic_heads()), nn::Activation::Relu,
                          nn::Activation::Identity, rng);
    nets.target_critic = nets.critic;
    nets.critic_opt = nn::Adam(config.critic_lr);
    if (config.language()) nets.projection = embed::ProjectionParams::random(config.lang_dim, config.encoder_dim, rng);
    nets.projection_opt = nn::Adam(config.projection_lr);
    return nets;
}

void AgentNets::save(std::ostream& out) const {
    out << "lamp-checkpoint 1\n";
    out << "agents " << actors.size() << '\n';
    for (const auto& a : actors) a.save(out);
    for (const auto& a : target_actors) a.save(out);
    critic.save(out);
    target_critic.save(out);
    out << "projection " << (projection ? 1 : 0) << '\n';
    if (projection) nn::write_matrix(out, "P", projection->weight);
}

AgentNets AgentNets::load(std::istream& in, const MaddpgConfig& config) {
    std::mt19937_64 rng(0);
    AgentNets nets = create(config, rng);
    std::string tag;
    int version = 0;
    if (!(in >> tag >> version) || tag != "lamp-checkpoint" || version != 1)
        throw std::runtime_error("checkpoint: unsupported header");
    std::size_t n = 0;
    if (!(in >> tag >> n) || tag != "agents" || n != config.n_agents)
        throw std::runtime_error("checkpoint: agent count does not match configuration");
    auto load_checked = [&](nn::Mlp& slot) {
        nn::Mlp m = nn::Mlp::load(in);
        if (!m.same_shape(slot)) throw std::runtime_error("checkpoint: network shape does not match configuration");
        slot = std::move(m);
    };
    for (auto& a : nets.actors) load_checked(a);
    for (auto& a : nets.target_actors) load_checked(a);
    load_checked(nets.critic);
    load_checked(nets.target_critic);
    int has_projection = 0;
    if (!(in >> tag >> has_projection) || tag != "projection") throw std::runtime_error("checkpoint: missing projection tag");
    if ((has_projection != 0) != config.language()) throw std::runtime_error("checkpoint: language setting mismatch");
    if (has_projection) {
        Matrix p = nn::read_matrix(in, "P");
        if (p.rows() != nets.projection->weight.rows() || p.cols() != nets.projection->weight.cols())
            throw std::runtime_error("checkpoint: projection shape mismatch");
        nets.projection->weight = std::move(p);
    }
    return nets;
}

Batch make_batch(const std::vector<const Transition*>& rows, const MaddpgConfig& config) {
    if (rows.empty()) throw std::invalid_argument("make_batch: empty batch");
    const auto b = static_cast<Eigen::Index>(rows.size());
    const auto n = config.n_agents;
    const auto obs = static_cast<Eigen::Index>(config.obs_dim);
    const auto act = static_cast<Eigen::Index>(config.action_dim);
    const Eigen::Index enc = config.language() ? static_cast<Eigen::Index>(config.encoder_dim) : 0;

    Batch batch;
    batch.size = rows.size();
    batch.global_obs.resize(static_cast<Eigen::Index>(config.global_dim), b);
    batch.next_global_obs.resize(static_cast<Eigen::Index>(config.global_dim), b);
    batch.local_obs.assign(n, Matrix(obs, b));
    batch.next_local_obs.assign(n, Matrix(obs, b));
    batch.pooled.assign(n, Matrix(enc, b));
    batch.next_pooled.assign(n, Matrix(enc, b));
    batch.actions.resize(static_cast<Eigen::Index>(n) * act, b);
    batch.reward.resize(b);
    batch.rewards.resize(static_cast<Eigen::Index>(n), b);
    batch.not_done.resize(b);
    for (Eigen::Index k = 0; k < b; ++k) {
        const Transition& t = *rows[static_cast<std::size_t>(k)];
        if (t.local_obs.cols() != static_cast<Eigen::Index>(n) || t.local_obs.rows() != obs ||
            t.actions.rows() != act || t.pooled.rows() != enc)
            throw std::invalid_argument("make_batch: transition dimensions do not match configuration");
        batch.global_obs.col(k) = t.global_obs;
        batch.next_global_obs.col(k) = t.next_global_obs;
        for (std::size_t i = 0; i < n; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            batch.local_obs[i].col(k) = t.local_obs.col(ii);
            batch.next_local_obs[i].col(k) = t.next_local_obs.col(ii);
            if (enc > 0) {
                batch.pooled[i].col(k) = t.pooled.col(ii);
                batch.next_pooled[i].col(k) = t.next_pooled.col(ii);
            }
            batch.actions.block(ii * act, k, act, 1) = t.actions.col(ii);
        }
        batch.reward(k) = t.reward;
        if (t.rewards.size() != static_cast<Eigen::Index>(n))
            throw std::invalid_argument("make_batch: per-agent reward count does not match configuration");
        batch.rewards.col(k) = t.rewards;
        batch.not_done(k) = t.done ? 0.0 : 1.0;
    }
    return batch;
}

std::vector<Matrix> embed_batch(const AgentNets& nets, const std::vector<Matrix>& pooled) {
    std::vector<Matrix> out;
    if (!nets.config.language()) return out;
    for (const auto& p : pooled) out.push_back(project_columns(*nets.projection, p));
    return out;
}

Matrix critic_targets(const AgentNets& nets, const Batch& batch) {
    const auto& cfg = nets.config;
    const auto b = static_cast<Eigen::Index>(batch.size);
    const auto act = static_cast<Eigen::Index>(cfg.action_dim);
    const std::vector<Matrix> next_m = embed_batch(nets, batch.next_pooled);
    Matrix next_actions(static_cast<Eigen::Index>(cfg.n_agents) * act, b);
    for (std::size_t j = 0; j < cfg.n_agents; ++j) {
        const Matrix in = actor_input(batch.next_local_obs[j], cfg.language() ? &next_m[j] : nullptr);
        next_actions.middleRows(static_cast<Eigen::Index>(j) * act, act) = nets.target_actors[j].forward_batch(in);
    }
    const Matrix q_next =
        nets.target_critic.forward_batch(critic_inputs(cfg, batch.next_global_obs, next_m, next_actions));
    const Matrix r = cfg.per_agent_values ? batch.rewards : Matrix(batch.reward.transpose());
    return r + cfg.gamma * (q_next.array().rowwise() * batch.not_done.transpose().array()).matrix();
}

CriticGrad critic_gradients(const AgentNets& nets, const Batch& batch) {
    const Matrix y = critic_targets(nets, batch);
    const std::vector<Matrix> m = embed_batch(nets, batch.pooled);
    nn::Tape tape;
    const Matrix q = nets.critic.forward_batch(critic_inputs(nets.config, batch.global_obs, m, batch.actions), tape);
    const Matrix td = q - y;
    const auto count = static_cast<double>(y.size());
    CriticGrad out;
    out.loss = td.squaredNorm() / count;
    out.grads = nets.critic.backward(tape, (2.0 / count) * td, nullptr);
    return out;
}

namespace {

// Actor gradient for one agent given the batch embeddings. Fills `dm` with the
// loss gradient with respect to every agent's embedding (empty without language).
ActorGrad actor_gradients_at(const AgentNets& nets, const Batch& batch, std::size_t agent, const std::vector<Matrix>& m,
                             std::vector<Matrix>& dm) {
    const auto& cfg = nets.config;
    if (agent >= cfg.n_agents) throw std::out_of_range("actor_gradients: agent index");
    const auto b = static_cast<Eigen::Index>(batch.size);
    const auto act = static_cast<Eigen::Index>(cfg.action_dim);
    const auto obs = static_cast<Eigen::Index>(cfg.obs_dim);
    const auto d = static_cast<Eigen::Index>(cfg.lang_dim);
    const auto global = static_cast<Eigen::Index>(cfg.global_dim);

    nn::Tape actor_tape;
    const Matrix own_action = nets.actors[agent].forward_batch(
        actor_input(batch.local_obs[agent], cfg.language() ? &m[agent] : nullptr), actor_tape);

    Matrix actions = batch.actions;
    const Eigen::Index action_row = static_cast<Eigen::Index>(agent) * act;
    actions.middleRows(action_row, act) = own_action;

    nn::Tape critic_tape;
    const Matrix q = nets.critic.forward_batch(critic_inputs(cfg, batch.global_obs, m, actions), critic_tape);

    // The agent's own value head; the mean head when values are not per agent.
    const auto head = static_cast<Eigen::Index>(cfg.per_agent_values ? agent : 0);
    ActorGrad out;
    out.loss = -q.row(head).sum() / static_cast<double>(b);
    Matrix upstream = Matrix::Zero(q.rows(), b);
    upstream.row(head).setConstant(-1.0 / static_cast<double>(b));
    const Matrix critic_in_grad = nets.critic.input_gradient(critic_tape, upstream);

    const auto action_offset = static_cast<Eigen::Index>(cfg.state_dim());
    const Matrix action_grad = critic_in_grad.middleRows(action_offset + action_row, act);
    Matrix actor_in_grad;
    out.grads = nets.actors[agent].backward(actor_tape, action_grad, cfg.language() ? &actor_in_grad : nullptr);

    dm.clear();
    if (cfg.language()) {
        for (std::size_t j = 0; j < cfg.n_agents; ++j) {
            dm.push_back(critic_in_grad.middleRows(global + static_cast<Eigen::Index>(j) * d, d));
            if (j == agent) dm.back() += actor_in_grad.middleRows(obs, d);
        }
    }
    return out;
}

Matrix projection_gradient(const AgentNets& nets, const Batch& batch, const std::vector<Matrix>& dm) {
    Matrix g = Matrix::Zero(nets.projection->weight.rows(), nets.projection->weight.cols());
    for (std::size_t j = 0; j < dm.size(); ++j) g += project_columns_backward(*nets.projection, batch.pooled[j], dm[j]);
    return g;
}

void projection_step(AgentNets& nets, const Matrix& grad) {
    std::vector<nn::ParamRef> p{nn::ParamRef(nets.projection->weight.data(), nets.projection->weight.size())};
    std::vector<nn::ConstParamRef> gp{nn::ConstParamRef(grad.data(), grad.size())};
    nets.projection_opt.step(p, gp);
}

}  // namespace

ActorGrad actor_gradients(const AgentNets& nets, const Batch& batch, std::size_t agent) {
    const std::vector<Matrix> m = embed_batch(nets, batch.pooled);
    std::vector<Matrix> dm;
    ActorGrad out = actor_gradients_at(nets, batch, agent, m, dm);
    if (nets.config.language()) out.projection_grad = projection_gradient(nets, batch, dm);
    return out;
}

double critic_update(AgentNets& nets, const Batch& batch) {
    CriticGrad g = critic_gradients(nets, batch);
    if (!std::isfinite(g.loss)) throw NonFiniteLoss("critic loss is not finite");
    for (const auto& v : g.grads.views())
        if (!v.allFinite()) throw NonFiniteLoss("critic gradient is not finite");
    nets.critic_opt.step(nets.critic, g.grads);
    return g.loss;
}

double actor_update(AgentNets& nets, const Batch& batch, std::size_t agent) {
    ActorGrad g = actor_gradients(nets, batch, agent);
    if (!std::isfinite(g.loss)) throw NonFiniteLoss("actor loss is not finite");
    nets.actor_opt[agent].step(nets.actors[agent], g.grads);
    if (nets.config.language() && nets.config.train_projection) projection_step(nets, g.projection_grad);
    return g.loss;
}

StepMetrics train_step(AgentNets& nets, const ReplayBuffer& buffer, std::size_t batch_size, std::mt19937_64& rng) {
    const auto& cfg = nets.config;
    const Batch batch = make_batch(buffer.sample(batch_size, rng), cfg);
    StepMetrics metrics;
    metrics.critic_loss = critic_update(nets, batch);

    // Every actor sees the same embeddings; P takes one step on the gradient
    // summed over the actors' losses.
    const std::vector<Matrix> m = embed_batch(nets, batch.pooled);
    std::vector<Matrix> dm, dm_sum;
    double actor_sum = 0.0;
    for (std::size_t i = 0; i < cfg.n_agents; ++i) {
        ActorGrad g = actor_gradients_at(nets, batch, i, m, dm);
        if (!std::isfinite(g.loss)) throw NonFiniteLoss("actor loss is not finite");
        nets.actor_opt[i].step(nets.actors[i], g.grads);
        if (dm_sum.empty()) dm_sum = dm;
        else
            for (std::size_t j = 0; j < dm.size(); ++j) dm_sum[j] += dm[j];
        actor_sum += g.loss;
    }
    if (cfg.language() && cfg.train_projection) projection_step(nets, projection_gradient(nets, batch, dm_sum));
    metrics.actor_loss = actor_sum / static_cast<double>(cfg.n_agents);
    nn::polyak_update(nets.target_critic, nets.critic, cfg.tau);
    for (std::size_t i = 0; i < cfg.n_agents; ++i) nn::polyak_update(nets.target_actors[i], nets.actors[i], cfg.tau);
    return metrics;
}

Vector act(const AgentNets& nets, std::size_t agent, const Vector& local_obs, const Vector& embedding, bool explore,
           std::mt19937_64& rng) {
    const auto& cfg = nets.config;
    Vector in(static_cast<Eigen::Index>(cfg.actor_input_dim()));
    in.head(static_cast<Eigen::Index>(cfg.obs_dim)) = local_obs;
    if (cfg.language()) in.tail(static_cast<Eigen::Index>(cfg.lang_dim)) = embedding;
    Vector a = nets.actors.at(agent).forward(in);
    if (explore) {
        std::normal_distribution<double> noise(0.0, cfg.exploration_std);
        // Noisy actions stay strictly inside the box: a raw savings action of exactly 1
        // consumes nothing and ends the episode.
        constexpr double kEdge = 1.0 - kExplorationMargin;
        for (Eigen::Index k = 0; k < a.size(); ++k) a(k) = std::clamp(a(k) + noise(rng), -kEdge, kEdge);
    }
    return a;
}

}  // namespace lamp::marl
