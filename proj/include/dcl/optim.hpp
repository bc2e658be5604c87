#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "dcl/tensor.hpp"

namespace dcl {

namespace detail {
template <typename T>
void require_finite(std::span<const T> g, const char* who) {
    for (const T& v : g)
        if (!std::isfinite(static_cast<double>(v)))
            throw NumericError(std::string(who) + ": non-finite gradient, step refused");
}
}  // namespace detail

struct SgdMomentumConfig {
    double lr = 0.01;
    double momentum = 0.9;
    bool nesterov = false;
};

/// Classical momentum: v <- mu*v + g; theta <- theta - lr*v.
/// With nesterov set, theta <- theta - lr*(g + mu*v) using the updated v.
template <typename T>
class SgdMomentum {
public:
    SgdMomentum() = default;
    SgdMomentum(std::size_t n, SgdMomentumConfig cfg) : cfg_(cfg), velocity_(n, T(0)) {}

    void step(std::span<T> params, std::span<const T> grads) {
        if (params.size() != velocity_.size() || grads.size() != velocity_.size())
            throw ShapeError("SgdMomentum::step: parameter/gradient/state size mismatch");
        detail::require_finite(grads, "SgdMomentum::step");
        const double mu = cfg_.momentum, lr = cfg_.lr;
        for (std::size_t k = 0; k < params.size(); ++k) {
            const double v = mu * double(velocity_[k]) + double(grads[k]);
            velocity_[k] = static_cast<T>(v);
            const double upd = cfg_.nesterov ? double(grads[k]) + mu * v : v;
            params[k] = static_cast<T>(double(params[k]) - lr * upd);
        }
        ++steps_;
    }

    const SgdMomentumConfig& config() const { return cfg_; }
    SgdMomentumConfig& config() { return cfg_; }
    std::span<const T> velocity() const { return velocity_; }
    std::vector<T>& velocity_storage() { return velocity_; }
    std::uint64_t steps() const { return steps_; }
    void set_steps(std::uint64_t s) { steps_ = s; }

private:
    SgdMomentumConfig cfg_;
    std::vector<T> velocity_;
    std::uint64_t steps_ = 0;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction.
template <typename T>
class Adam {
public:
    Adam() = default;
    Adam(std::size_t n, AdamConfig cfg) : cfg_(cfg), m_(n, T(0)), v_(n, T(0)) {}

    void step(std::span<T> params, std::span<const T> grads) {
        if (params.size() != m_.size() || grads.size() != m_.size())
            throw ShapeError("Adam::step: parameter/gradient/state size mismatch");
        detail::require_finite(grads, "Adam::step");
        ++t_;
        const double b1 = cfg_.beta1, b2 = cfg_.beta2;
        const double c1 = 1.0 - std::pow(b1, double(t_));
        const double c2 = 1.0 - std::pow(b2, double(t_));
        for (std::size_t k = 0; k < params.size(); ++k) {
            const double g = grads[k];
            const double m = b1 * double(m_[k]) + (1.0 - b1) * g;
            const double v = b2 * double(v_[k]) + (1.0 - b2) * g * g;
            m_[k] = static_cast<T>(m);
            v_[k] = static_cast<T>(v);
            const double mhat = m / c1, vhat = v / c2;
            params[k] = static_cast<T>(double(params[k]) - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
        }
    }

    const AdamConfig& config() const { return cfg_; }
    AdamConfig& config() { return cfg_; }
    std::uint64_t steps() const { return t_; }
    void set_steps(std::uint64_t t) { t_ = t; }
    std::vector<T>& m_storage() { return m_; }
    std::vector<T>& v_storage() { return v_; }
    const std::vector<T>& m_storage() const { return m_; }
    const std::vector<T>& v_storage() const { return v_; }

private:
    AdamConfig cfg_;
    std::vector<T> m_, v_;
    std::uint64_t t_ = 0;
};

}  // namespace dcl
