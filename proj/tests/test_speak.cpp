#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

#include "lamp/backend.hpp"
#include "lamp/prompts.hpp"
#include "lamp/speak.hpp"

using namespace lamp;
using namespace lamp::speak;

namespace {

const Candidates kCands = {"We are struggling to make ends meet.", "Things are steady for us.",
                           "Business has never been better."};

double log_prob(const Matrix& enc, const SelectorParams& s, std::size_t j) {
    return std::log(selection_probs(enc, s)[j]);
}

}  // namespace

TEST_CASE("selection probabilities are a softmax of scaled dot products") {
    std::mt19937_64 rng(1);
    embed::HashingEncoder enc(2);
    const auto s = SelectorParams::random(8, enc.dim(), rng);
    const Matrix e = encode_candidates(kCands, enc);
    const auto p = selection_probs(e, s);
    Vector z(3);
    for (int j = 0; j < 3; ++j) z(j) = s.query.dot(s.key_proj * e.col(j)) / std::sqrt(8.0);
    const double total = z.array().exp().sum();
    for (int j = 0; j < 3; ++j) CHECK(p[static_cast<std::size_t>(j)] == doctest::Approx(std::exp(z(j)) / total).epsilon(1e-12));
}

TEST_CASE("temperature moves the selector between uniform and argmax") {
    std::mt19937_64 rng(2);
    embed::HashingEncoder enc(3);
    auto s = SelectorParams::random(8, enc.dim(), rng);
    s.query *= 40.0;
    const Matrix e = encode_candidates(kCands, enc);
    s.temperature = 1e9;
    for (double x : selection_probs(e, s)) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
    s.temperature = 1e-6;
    const auto p = selection_probs(e, s);
    CHECK(*std::max_element(p.begin(), p.end()) == doctest::Approx(1.0));
    s.temperature = 0.0;
    CHECK_THROWS(selection_probs(e, s));
}

TEST_CASE("sampled selections follow the probabilities") {
    std::mt19937_64 rng(3);
    embed::HashingEncoder enc(4);
    auto s = SelectorParams::random(8, enc.dim(), rng);
    s.query *= 20.0;
    std::array<double, 3> counts{};
    const int n = 30000;
    std::array<double, 3> p{};
    for (int k = 0; k < n; ++k) {
        const auto set = select_statement(5, kCands, s, enc, rng);
        counts[set.selected] += 1.0;
        p = set.probs;
        CHECK(set.agent == 5);
    }
    double chi2 = 0.0;
    for (std::size_t j = 0; j < 3; ++j) chi2 += (counts[j] - n * p[j]) * (counts[j] - n * p[j]) / (n * p[j]);
    CHECK(chi2 < 13.8);  // 2 degrees of freedom, 0.999 quantile
}

TEST_CASE("reinforce ascends log-probability along its gradient") {
    std::mt19937_64 rng(4);
    embed::HashingEncoder enc(5);
    auto s = SelectorParams::random(4, enc.dim(), rng);
    const Matrix e = encode_candidates(kCands, enc);
    // The update direction is the gradient of log p(selected): check against finite differences on the query.
    auto moved = s;
    reinforce_update(moved, e, 1, 1.0, 1.0);
    const Vector dq = moved.query - s.query;
    constexpr double h = 1e-6;
    for (Eigen::Index i = 0; i < s.query.size(); ++i) {
        auto a = s, b = s;
        a.query(i) += h;
        b.query(i) -= h;
        CHECK(dq(i) == doctest::Approx((log_prob(e, a, 1) - log_prob(e, b, 1)) / (2 * h)).epsilon(1e-6).scale(1.0));
    }
    const double before = log_prob(e, s, 1);
    for (int k = 0; k < 50; ++k) reinforce_update(s, e, 1, 1.0, 0.5);
    CHECK(log_prob(e, s, 1) > before);
    auto neg = s;
    reinforce_update(neg, e, 1, -1.0, 0.5);
    CHECK(log_prob(e, neg, 1) < log_prob(e, s, 1));
}

TEST_CASE("broadcast keeps agent order") {
    StatementSet a, b;
    a.candidates = kCands;
    a.selected = 2;
    b.candidates = kCands;
    b.selected = 0;
    CHECK(broadcast({a, b}) == std::vector<std::string>{kCands[2], kCands[0]});
}

TEST_CASE("scripted candidates and reflection") {
    llm::LanguageClient client(std::make_shared<llm::ScriptedBackend>(9));
    think::AgentContext ctx{0, 20, {1.0, 2.0}, {2.0, 1.0, 3.0}};
    think::ReasoningRecord r;
    r.status = 2;
    r.reasoning = "hold steady";
    const auto c = generate_candidates(ctx, r, client);
    for (std::size_t j = 0; j < 3; ++j) CHECK(c[j] == llm::phrase_bank(2)[j]);

    std::vector<std::string> statements;
    for (int k = 0; k < 10; ++k) statements.push_back(llm::phrase_bank(k % 3)[0]);
    const auto refl = reflect(ctx, statements, r, statements[0], client);
    REQUIRE(refl.wealth_guesses.size() == 10);
    REQUIRE(refl.trust.size() == 10);
    CHECK(std::count(refl.wealth_guesses.begin(), refl.wealth_guesses.end(), 0) == 5);
    CHECK(std::count(refl.wealth_guesses.begin(), refl.wealth_guesses.end(), 1) == 4);
    CHECK(std::count(refl.wealth_guesses.begin(), refl.wealth_guesses.end(), 2) == 1);
    for (int t : refl.trust) {
        CHECK(t >= 7);
        CHECK(t <= 10);
    }
    CHECK_FALSE(refl.text.empty());
    const auto again = reflect(ctx, statements, r, statements[0], client);
    CHECK(again.trust == refl.trust);
    CHECK(again.text == refl.text);
}
