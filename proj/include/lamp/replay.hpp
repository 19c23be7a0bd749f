#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "lamp/nn.hpp"

namespace lamp::marl {

using nn::Matrix;
using nn::Vector;

/// One joint environment step. Columns of the per-agent matrices index agents.
/// `pooled` holds the pre-projection text vectors so the projection can be
/// re-applied (and differentiated) at training time; it has zero rows when
/// language is disabled.
struct Transition {
    Vector global_obs;
    Matrix local_obs;  // obs_dim x N
    Matrix pooled;     // D_E x N
    Matrix actions;    // action_dim x N, raw values in [-1, 1]
    Vector rewards;    // per agent
    double reward = 0.0;  // shared-critic target reward (mean over agents)
    Vector next_global_obs;
    Matrix next_local_obs;
    Matrix next_pooled;
    bool done = false;

    bool all_finite() const;
};

/// FIFO ring buffer of transitions.
class ReplayBuffer {
public:
    static constexpr std::size_t kDefaultCapacity = 1'000'000;

    explicit ReplayBuffer(std::size_t capacity = kDefaultCapacity);

    void push(Transition t);
    std::size_t size() const { return size_; }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return size_ == 0; }

    /// i-th oldest stored transition.
    const Transition& at(std::size_t i) const;

    /// Distinct uniformly drawn indices (age order, 0 = oldest); Floyd's algorithm.
    std::vector<std::size_t> sample_indices(std::size_t batch_size, std::mt19937_64& rng) const;
    std::vector<const Transition*> sample(std::size_t batch_size, std::mt19937_64& rng) const;

private:
    std::size_t capacity_;
    std::vector<Transition> storage_;
    std::size_t cursor_ = 0;  // next write slot once storage is full
    std::size_t size_ = 0;
};

}  // namespace lamp::marl
