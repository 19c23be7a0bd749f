#include <doctest.h>

#include <deque>
#include <random>
#include <set>

#include "lamp/replay.hpp"

using namespace lamp::marl;

namespace {

Transition tagged(double tag) {
    Transition t;
    t.reward = tag;
    t.global_obs = Vector::Constant(2, tag);
    t.next_global_obs = t.global_obs;
    t.local_obs = Matrix::Constant(3, 2, tag);
    t.next_local_obs = t.local_obs;
    t.pooled = Matrix(0, 2);
    t.next_pooled = t.pooled;
    t.actions = Matrix::Zero(2, 2);
    t.rewards = Vector::Constant(2, tag);
    return t;
}

}  // namespace

TEST_CASE("ring buffer behaves like a bounded deque") {
    ReplayBuffer buf(7);
    std::deque<double> model;
    std::mt19937_64 rng(1);
    for (int k = 0; k < 40; ++k) {
        buf.push(tagged(k));
        model.push_back(k);
        if (model.size() > 7) model.pop_front();
        REQUIRE(buf.size() == model.size());
        for (std::size_t i = 0; i < model.size(); ++i) CHECK(buf.at(i).reward == model[i]);
    }
    CHECK(buf.capacity() == 7);
    CHECK_THROWS(buf.at(7));
}

TEST_CASE("samples are distinct and stay in range") {
    ReplayBuffer buf(50);
    for (int k = 0; k < 30; ++k) buf.push(tagged(k));
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const auto idx = buf.sample_indices(30, rng);
        std::set<std::size_t> s(idx.begin(), idx.end());
        CHECK(s.size() == 30);
        CHECK(*s.rbegin() < 30);
    }
    CHECK_THROWS(buf.sample_indices(31, rng));
}

TEST_CASE("sampling is uniform over stored transitions (chi-square)") {
    ReplayBuffer buf(20);
    for (int k = 0; k < 45; ++k) buf.push(tagged(k));  // wrapped
    std::mt19937_64 rng(3);
    std::vector<double> counts(20, 0.0);
    const int draws = 20000, batch = 5;
    for (int d = 0; d < draws; ++d)
        for (auto* t : buf.sample(batch, rng)) counts[static_cast<std::size_t>(t->reward) - 25] += 1.0;
    const double expected = draws * batch / 20.0;
    double chi2 = 0.0;
    for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // 19 degrees of freedom: the 0.999 quantile is 43.8.
    CHECK(chi2 < 43.8);
}

TEST_CASE("non-finite transitions are detected") {
    auto t = tagged(1.0);
    CHECK(t.all_finite());
    t.rewards(1) = std::nan("");
    CHECK_FALSE(t.all_finite());
}
