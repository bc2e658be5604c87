#pragma once

// Prioritized experience replay backed by a sum tree (sampling) and a max
// tree (priority for fresh transitions).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include "dcl/action.hpp"
#include "dcl/random.hpp"
#include "dcl/tensor.hpp"

namespace dcl {

/// One (I, A, R, I') record. Frames are shared between consecutive transitions.
struct Transition {
    std::shared_ptr<const Image> image;
    ActionMatrix actions;
    Map reward;
    std::shared_ptr<const Image> next;
    int shot = -1;
};

inline void validate_transition(const Transition& t) {
    if (!t.image || !t.next) throw std::invalid_argument("Transition: missing frame");
    const int h = t.image->height(), w = t.image->width();
    if (!t.next->same_shape(*t.image) || !t.actions.same_spatial(h, w) || !t.reward.same_spatial(h, w))
        throw ShapeError("Transition: inconsistent shapes");
}

/// Binary tree over a power-of-two leaf array holding both sums and maxima.
class SumTree {
public:
    SumTree() = default;
    explicit SumTree(std::size_t capacity) : leaves_(1) {
        while (leaves_ < capacity) leaves_ <<= 1;
        sum_.assign(2 * leaves_, 0.0);
        max_.assign(2 * leaves_, 0.0);
    }

    /// Sets leaf i to `value` in the sum tree and `key` in the max tree.
    void set(std::size_t i, double value, double key) {
        std::size_t n = i + leaves_;
        sum_[n] = value;
        max_[n] = key;
        for (n >>= 1; n >= 1; n >>= 1) {
            sum_[n] = sum_[2 * n] + sum_[2 * n + 1];
            max_[n] = std::max(max_[2 * n], max_[2 * n + 1]);
        }
    }

    double get(std::size_t i) const { return sum_[i + leaves_]; }
    double total() const { return sum_.empty() ? 0.0 : sum_[1]; }
    double max() const { return max_.empty() ? 0.0 : max_[1]; }

    /// Leaf whose cumulative range contains u, for u in [0, total()).
    std::size_t find(double u) const {
        std::size_t n = 1;
        while (n < leaves_) {
            const std::size_t l = 2 * n;
            if (u < sum_[l] || sum_[l + 1] <= 0.0) {
                n = l;
            } else {
                u -= sum_[l];
                n = l + 1;
            }
        }
        return n - leaves_;
    }

private:
    std::size_t leaves_ = 0;
    std::vector<double> sum_, max_;
};

struct ReplayConfig {
    std::size_t capacity = 4096;
    double alpha = 0.6;
    double beta = 0.4;
    double priority_floor = 1e-6;
};

class PrioritizedBuffer {
public:
    struct Sample {
        std::vector<std::size_t> indices;
        std::vector<double> weights;
        std::vector<const Transition*> items;
    };

    explicit PrioritizedBuffer(ReplayConfig cfg = {})
        : cfg_(cfg), tree_(cfg.capacity), slots_(cfg.capacity), priority_(cfg.capacity, 0.0) {
        if (cfg.capacity == 0) throw std::invalid_argument("PrioritizedBuffer: capacity must be positive");
        if (cfg.alpha < 0 || cfg.beta < 0) throw std::invalid_argument("PrioritizedBuffer: negative exponent");
    }

    std::size_t size() const { return size_; }
    std::size_t capacity() const { return cfg_.capacity; }
    double alpha() const { return cfg_.alpha; }
    double beta() const { return cfg_.beta; }
    void set_beta(double b) { cfg_.beta = b; }

    /// Raw (un-exponentiated) priority of a slot.
    double priority(std::size_t i) const { return priority_.at(i); }
    /// Sum over stored items of priority^alpha, as held by the tree root.
    double total() const { return tree_.total(); }
    const Transition& at(std::size_t i) const {
        if (i >= size_) throw std::out_of_range("PrioritizedBuffer::at: index out of range");
        return slots_[i];
    }

    /// Stores t with the current maximum priority (1 when empty), evicting the oldest at capacity.
    void push(Transition t) {
        validate_transition(t);
        const double p = size_ == 0 ? 1.0 : tree_.max();
        slots_[next_] = std::move(t);
        write_priority(next_, p);
        next_ = (next_ + 1) % cfg_.capacity;
        size_ = std::min(size_ + 1, cfg_.capacity);
    }

    /// Stratified proportional sampling; weights are (N P(i))^-beta over the batch maximum.
    Sample sample(std::size_t batch, Rng& rng) const {
        if (batch == 0) throw std::invalid_argument("PrioritizedBuffer::sample: empty batch");
        if (size_ < batch)
            throw std::runtime_error("PrioritizedBuffer::sample: buffer holds " + std::to_string(size_) +
                                     " transitions, batch needs " + std::to_string(batch));
        Sample s;
        const double total = tree_.total();
        const double seg = total / double(batch);
        double wmax = 0.0;
        for (std::size_t k = 0; k < batch; ++k) {
            double u = (double(k) + uniform01(rng)) * seg;
            u = std::min(u, std::nextafter(total, 0.0));
            std::size_t idx = tree_.find(u);
            if (idx >= size_) idx = size_ - 1;
            const double prob = tree_.get(idx) / total;
            const double w = std::pow(double(size_) * prob, -cfg_.beta);
            wmax = std::max(wmax, w);
            s.indices.push_back(idx);
            s.weights.push_back(w);
            s.items.push_back(&slots_[idx]);
        }
        for (double& w : s.weights) w /= wmax;
        return s;
    }

    /// priority_i <- |delta_i| + floor.
    void update_priorities(const std::vector<std::size_t>& indices, const std::vector<double>& td_errors) {
        if (indices.size() != td_errors.size())
            throw std::invalid_argument("update_priorities: indices/errors length mismatch");
        for (std::size_t k = 0; k < indices.size(); ++k)
            if (indices[k] >= size_) throw std::out_of_range("update_priorities: index out of range");
        for (std::size_t k = 0; k < indices.size(); ++k)
            write_priority(indices[k], std::abs(td_errors[k]) + cfg_.priority_floor);
    }

    void clear() {
        *this = PrioritizedBuffer(cfg_);
    }

private:
    void write_priority(std::size_t i, double p) {
        priority_[i] = p;
        tree_.set(i, std::pow(p, cfg_.alpha), p);
    }

    ReplayConfig cfg_;
    SumTree tree_;
    std::vector<Transition> slots_;
    std::vector<double> priority_;
    std::size_t size_ = 0;
    std::size_t next_ = 0;
};

}  // namespace dcl
