#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "pis/errors.hpp"
#include "pis/rng.hpp"

namespace pis {

// Policy input: the mean of the previous/current/next sentence embeddings.
struct PolicyState {
    Eigen::VectorXd values;

    std::size_t dim() const noexcept { return static_cast<std::size_t>(values.size()); }
    bool operator==(const PolicyState& other) const { return values == other.values; }
};

struct Transition {
    PolicyState state;
    std::size_t action = 0;
    double reward = 0.0;
    std::optional<PolicyState> next_state;  // empty when done
    bool done = false;
    double priority = 1.0;
};

struct ReplaySample {
    std::vector<std::size_t> slots;  // storage slots, for priority updates
    std::vector<const Transition*> transitions;
    std::vector<double> weights;     // importance weights, max-normalized
};

// Proportional prioritized replay with FIFO eviction.
class ReplayBuffer {
public:
    static constexpr std::size_t kDefaultCapacity = 20000;

    explicit ReplayBuffer(std::size_t capacity = kDefaultCapacity, double priority_exponent = 0.6)
        : capacity_(capacity), alpha_(priority_exponent) {
        if (capacity_ == 0) throw DomainError("replay capacity must be positive");
        storage_.reserve(std::min<std::size_t>(capacity_, 4096));
    }

    std::size_t size() const noexcept { return storage_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }
    bool empty() const noexcept { return storage_.empty(); }
    double priority_exponent() const noexcept { return alpha_; }

    // New transitions get the current maximum priority (1.0 when empty).
    void push(Transition t) {
        t.priority = max_priority();
        if (storage_.size() < capacity_) {
            storage_.push_back(std::move(t));
        } else {
            storage_[head_] = std::move(t);
            head_ = (head_ + 1) % capacity_;
        }
    }

    // Insertion-ordered access: 0 is the oldest stored transition.
    const Transition& at(std::size_t i) const { return storage_[slot_of(i)]; }

    double max_priority() const {
        double m = 0.0;
        for (const auto& t : storage_) m = std::max(m, t.priority);
        return storage_.empty() ? 1.0 : m;
    }

    // P(i) = p_i^a / sum_j p_j^a, indexed by insertion order.
    std::vector<double> probabilities() const {
        std::vector<double> p(storage_.size());
        double total = 0.0;
        for (std::size_t i = 0; i < storage_.size(); ++i) {
            p[i] = std::pow(at(i).priority, alpha_);
            total += p[i];
        }
        for (double& x : p) x /= total;
        return p;
    }

    // Draws `batch` transitions with replacement; w_i = (N P(i))^-b / max_j w_j.
    ReplaySample sample(std::size_t batch, double importance_exponent, Rng& rng) const {
        if (storage_.empty()) throw EmptyBuffer();
        std::vector<double> cumulative(storage_.size());
        double total = 0.0;
        double min_p = 0.0;
        for (std::size_t s = 0; s < storage_.size(); ++s) {
            const double p = std::pow(storage_[s].priority, alpha_);
            total += p;
            cumulative[s] = total;
            min_p = s == 0 ? p : std::min(min_p, p);
        }
        const double n = static_cast<double>(storage_.size());
        const double max_w = std::pow(n * min_p / total, -importance_exponent);

        ReplaySample out;
        for (std::size_t i = 0; i < batch; ++i) {
            const double u = rng.uniform01() * total;
            auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
            const auto slot = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()),
                                                    storage_.size() - 1);
            const double p = std::pow(storage_[slot].priority, alpha_) / total;
            out.slots.push_back(slot);
            out.transitions.push_back(&storage_[slot]);
            out.weights.push_back(std::pow(n * p, -importance_exponent) / max_w);
        }
        return out;
    }

    void update_priorities(std::span<const std::size_t> slots, std::span<const double> priorities) {
        if (slots.size() != priorities.size()) throw DimensionError("priority update size mismatch");
        for (std::size_t i = 0; i < slots.size(); ++i) {
            if (!(priorities[i] > 0.0)) throw DomainError("priorities must be positive");
            storage_.at(slots[i]).priority = priorities[i];
        }
    }

private:
    std::size_t slot_of(std::size_t i) const {
        if (i >= storage_.size()) throw RangeError("replay index out of range");
        return storage_.size() < capacity_ ? i : (head_ + i) % capacity_;
    }

    std::size_t capacity_;
    double alpha_;
    std::vector<Transition> storage_;
    std::size_t head_ = 0;  // oldest slot once full
};

}  // namespace pis
