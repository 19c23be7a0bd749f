#include "lamp/speak.hpp"

#include <cmath>

#include <fmt/format.h>

#include "lamp/prompts.hpp"

namespace lamp::speak {

using nlohmann::json;

namespace {

Vector scores(const Matrix& encoded, const SelectorParams& s) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(s.query.size()));
    return (s.query.transpose() * (s.key_proj * encoded)).transpose() * scale;
}

}  // namespace

Candidates generate_candidates(const think::AgentContext& ctx, const think::ReasoningRecord& reasoning,
                               llm::LanguageClient& client) {
    llm::PromptRequest req;
    req.kind = llm::TemplateKind::Candidates;
    req.schema = llm::schema_id(req.kind);
    req.agent = ctx.agent;
    req.period = ctx.period;
    req.prompt = llm::render(llm::candidates_template(),
                             {{"private_observation[0]", think::render_number(ctx.obs.productivity)},
                              {"private_observation[1]", think::render_number(ctx.obs.wealth)},
                              {"economic_status", std::to_string(reasoning.status)},
                              {"personal_reasoning", reasoning.reasoning}});
    req.context = {{"agent", ctx.agent}, {"period", ctx.period}, {"economic_status", reasoning.status}};
    const json v = client.complete(req);
    Candidates out;
    for (std::size_t i = 0; i < kCandidates; ++i) out[i] = v.at("statements").at(i).get<std::string>();
    return out;
}

SelectorParams SelectorParams::random(std::size_t key_dim, std::size_t encoder_dim, std::mt19937_64& rng,
                                      double temperature) {
    SelectorParams s;
    const double bound = 1.0 / std::sqrt(static_cast<double>(encoder_dim));
    std::uniform_real_distribution<double> u(-bound, bound);
    s.key_proj.resize(static_cast<Eigen::Index>(key_dim), static_cast<Eigen::Index>(encoder_dim));
    for (Eigen::Index i = 0; i < s.key_proj.size(); ++i) s.key_proj.data()[i] = u(rng);
    std::uniform_real_distribution<double> uq(-1.0, 1.0);
    s.query.resize(static_cast<Eigen::Index>(key_dim));
    for (Eigen::Index i = 0; i < s.query.size(); ++i) s.query(i) = uq(rng);
    s.temperature = temperature;
    return s;
}

void SelectorParams::validate() const {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw std::invalid_argument("selector temperature must be > 0");
    if (!key_proj.allFinite() || !query.allFinite()) throw std::invalid_argument("selector parameters must be finite");
    if (key_proj.rows() != query.size() || query.size() == 0)
        throw std::invalid_argument("selector key projection and query disagree in size");
}

Matrix encode_candidates(const Candidates& candidates, const embed::TextEncoder& encoder) {
    Matrix enc(static_cast<Eigen::Index>(encoder.dim()), static_cast<Eigen::Index>(kCandidates));
    for (std::size_t j = 0; j < kCandidates; ++j) enc.col(static_cast<Eigen::Index>(j)) = encoder.encode(candidates[j]);
    return enc;
}

std::array<double, kCandidates> selection_probs(const Matrix& encoded, const SelectorParams& selector) {
    selector.validate();
    const Vector z = scores(encoded, selector) / selector.temperature;
    const double top = z.maxCoeff();
    std::array<double, kCandidates> p{};
    double total = 0.0;
    for (std::size_t j = 0; j < kCandidates; ++j) total += p[j] = std::exp(z(static_cast<Eigen::Index>(j)) - top);
    for (auto& x : p) x /= total;
    return p;
}

StatementSet select_statement(int agent, const Candidates& candidates, const SelectorParams& selector,
                              const embed::TextEncoder& encoder, std::mt19937_64& rng) {
    StatementSet s;
    s.agent = agent;
    s.candidates = candidates;
    s.probs = selection_probs(encode_candidates(candidates, encoder), selector);
    std::discrete_distribution<std::size_t> pick(s.probs.begin(), s.probs.end());
    s.selected = pick(rng);
    return s;
}

std::vector<std::string> broadcast(const std::vector<StatementSet>& sets) {
    std::vector<std::string> out;
    out.reserve(sets.size());
    for (const auto& s : sets) out.push_back(s.statement());
    return out;
}

ReflectionResult reflect(const think::AgentContext& ctx, const std::vector<std::string>& statements,
                         const think::ReasoningRecord& reasoning, const std::string& own_statement,
                         llm::LanguageClient& client) {
    std::vector<std::string> lines;
    for (std::size_t j = 0; j < statements.size(); ++j) lines.push_back(fmt::format("Household {}: {}", j + 1, statements[j]));
    llm::PromptRequest req;
    req.kind = llm::TemplateKind::Reflect;
    req.schema = llm::schema_id(req.kind);
    req.agent = ctx.agent;
    req.period = ctx.period;
    req.expected_num = statements.size();
    req.prompt = llm::render(llm::reflect_template(),
                             {{"private_observation[0]", think::render_number(ctx.obs.productivity)},
                              {"private_observation[1]", think::render_number(ctx.obs.wealth)},
                              {"personal_reasoning", reasoning.reasoning},
                              {"personal_statement", own_statement},
                              {"other_agents_statements", llm::bullet_list(lines)},
                              {"expected_num", std::to_string(statements.size())}});
    req.context = {{"agent", ctx.agent}, {"period", ctx.period}, {"statements", statements}, {"own_status", reasoning.status}};
    const json v = client.complete(req);
    return {v.at("wealth_guesses").get<std::vector<int>>(), v.at("trust_levels").get<std::vector<int>>(),
            v.at("reflection_text").get<std::string>()};
}

void reinforce_update(SelectorParams& selector, const Matrix& encoded, std::size_t selected, double advantage,
                      double lr) {
    const auto p = selection_probs(encoded, selector);
    const double scale = 1.0 / std::sqrt(static_cast<double>(selector.query.size()));
    const Matrix keys = selector.key_proj * encoded;  // d_k x 3
    Vector dq = Vector::Zero(selector.query.size());
    Matrix dk = Matrix::Zero(selector.key_proj.rows(), selector.key_proj.cols());
    for (std::size_t j = 0; j < kCandidates; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        const double ds = ((j == selected ? 1.0 : 0.0) - p[j]) / selector.temperature * scale;
        dq += ds * keys.col(jj);
        dk += ds * selector.query * encoded.col(jj).transpose();
    }
    selector.query += lr * advantage * dq;
    selector.key_proj += lr * advantage * dk;
}

}  // namespace lamp::speak
