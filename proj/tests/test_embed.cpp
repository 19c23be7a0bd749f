#include <doctest.h>

#include <cmath>
#include <random>

#include "lamp/embed.hpp"

using namespace lamp::embed;

TEST_CASE("hashing encoder is deterministic, unit-norm and seed dependent") {
    HashingEncoder a(1), b(1), c(2);
    const auto v = a.encode("savings are rising");
    CHECK(v.size() == static_cast<Eigen::Index>(kDefaultEncoderDim));
    CHECK(v.norm() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(v == b.encode("savings are rising"));
    CHECK(v != c.encode("savings are rising"));
    CHECK(a.encode("").isZero(0.0));
    CHECK(a.encode("x").isZero(0.0));  // shorter than a bigram
    CHECK(cosine(a.encode("wages up"), a.encode("wages up")) == doctest::Approx(1.0));
    CHECK(cosine(a.encode("the economy grows"), a.encode("the economy grew")) >
          cosine(a.encode("the economy grows"), a.encode("zzqx vvkw")));
    CHECK(HashingEncoder(0, 32).encode("abc").size() == 32);
}

TEST_CASE("pooling averages encoded texts") {
    HashingEncoder enc(3);
    const auto p = pool_texts({"alpha beta", "gamma delta"}, enc);
    CHECK(p.isApprox(0.5 * (enc.encode("alpha beta") + enc.encode("gamma delta")), 1e-15));
    CHECK(pool_texts({}, enc).isZero(0.0));
    CHECK(pool_texts({}, enc).size() == static_cast<Eigen::Index>(enc.dim()));
}

TEST_CASE("projection and normalization") {
    std::mt19937_64 rng(4);
    const auto p = ProjectionParams::random(5, 16, rng);
    CHECK(p.out_dim() == 5);
    CHECK(p.in_dim() == 16);
    const Vector h = Vector::LinSpaced(16, -1.0, 2.0);
    const Vector m = project_normalize(p, h);
    CHECK(m.norm() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(m.isApprox((p.weight * h).normalized(), 1e-15));
    CHECK(project_normalize(p, Vector::Zero(16)).isZero(0.0));
    CHECK(project_normalize(p, 1e-6 * h).isApprox(m, 1e-12));
}

TEST_CASE("projection backward matches finite differences") {
    std::mt19937_64 rng(5);
    auto p = ProjectionParams::random(4, 6, rng);
    std::normal_distribution<double> g(0.0, 1.0);
    const Vector h = Vector::NullaryExpr(6, [&] { return g(rng); });
    const Vector up = Vector::NullaryExpr(4, [&] { return g(rng); });
    const Matrix grad = project_normalize_backward(p, h, up);
    constexpr double eps = 1e-6;
    for (Eigen::Index i = 0; i < p.weight.size(); ++i) {
        const double keep = p.weight(i);
        p.weight(i) = keep + eps;
        const double lp = up.dot(project_normalize(p, h));
        p.weight(i) = keep - eps;
        const double lm = up.dot(project_normalize(p, h));
        p.weight(i) = keep;
        CHECK(grad(i) == doctest::Approx((lp - lm) / (2 * eps)).epsilon(1e-6).scale(1.0));
    }
}

TEST_CASE("source switches select texts in a fixed order") {
    const AgentTexts t{"psi", "alpha", "v", std::nullopt};
    CHECK(select_texts(t, EmbedSources{}) == std::vector<std::string>{"psi", "alpha", "v"});
    CHECK(select_texts(t, EmbedSources::from_string("think")) == std::vector<std::string>{"psi", "alpha"});
    CHECK(select_texts(t, EmbedSources::from_string("algorithm")) == std::vector<std::string>{"v"});
    CHECK(EmbedSources::from_string("union").any());
    CHECK_THROWS(EmbedSources::from_string("everything"));
}

TEST_CASE("agent embedding honors the switches") {
    std::mt19937_64 rng(6);
    HashingEncoder enc(7);
    const auto p = ProjectionParams::random(kDefaultEmbedDim, enc.dim(), rng);
    const AgentTexts t{"we should save", "others look poor", "times are hard", "wages fell"};
    const auto full = build_agent_embedding(t, p, enc, EmbedSources{});
    CHECK(full.size() == 5);
    CHECK(full.norm() == doctest::Approx(1.0));
    CHECK(full.isApprox(project_normalize(p, agent_pooled_vector(t, EmbedSources{}, enc)), 1e-15));
    const auto none = build_agent_embedding(t, p, enc, EmbedSources{false, false, false, false});
    CHECK(none.size() == 5);
    CHECK(none.isZero(0.0));
    const auto empty = build_agent_embedding(AgentTexts{}, p, enc, EmbedSources{});
    CHECK(empty.isZero(0.0));
}

TEST_CASE("encoder factory") {
    CHECK(make_encoder("hash", 1, 64)->dim() == 64);
    CHECK_THROWS(make_encoder("word2vec", 1, 64));
}
