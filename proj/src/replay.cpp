#include "lamp/replay.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace lamp::marl {

bool Transition::all_finite() const {
    return global_obs.allFinite() && local_obs.allFinite() && pooled.allFinite() && actions.allFinite() &&
           rewards.allFinite() && std::isfinite(reward) && next_global_obs.allFinite() && next_local_obs.allFinite() &&
           next_pooled.allFinite();
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
    if (storage_.size() < capacity_) {
        storage_.push_back(std::move(t));
        size_ = storage_.size();
        return;
    }
    storage_[cursor_] = std::move(t);
    cursor_ = (cursor_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
    if (i >= size_) throw std::out_of_range("ReplayBuffer::at");
    if (storage_.size() < capacity_) return storage_[i];
    return storage_[(cursor_ + i) % capacity_];
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch_size, std::mt19937_64& rng) const {
    if (batch_size > size_) throw std::invalid_argument("ReplayBuffer::sample: batch larger than buffer");
    std::vector<std::size_t> out;
    out.reserve(batch_size);
    std::unordered_set<std::size_t> chosen;
    for (std::size_t j = size_ - batch_size; j < size_; ++j) {
        std::uniform_int_distribution<std::size_t> dist(0, j);
        const std::size_t t = dist(rng);
        const std::size_t pick = chosen.contains(t) ? j : t;
        chosen.insert(pick);
        out.push_back(pick);
    }
    return out;
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t batch_size, std::mt19937_64& rng) const {
    std::vector<const Transition*> out;
    for (std::size_t i : sample_indices(batch_size, rng)) out.push_back(&at(i));
    return out;
}

}  // namespace lamp::marl
