#pragma once

// Action-convolution deep Q network: a fully convolutional stack that maps an
// h x w x 3 frame to an h x w x 5 Q-volume, one Q-vector per pixel.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcl/action.hpp"
#include "dcl/kernels.hpp"
#include "dcl/optim.hpp"
#include "dcl/random.hpp"
#include "dcl/tensor.hpp"

namespace dcl {

enum class TargetMode { Paper, Ddqn };

inline const char* to_string(TargetMode m) { return m == TargetMode::Paper ? "paper" : "ddqn"; }

inline TargetMode target_mode_from_string(const std::string& s) {
    if (s == "paper") return TargetMode::Paper;
    if (s == "ddqn") return TargetMode::Ddqn;
    throw std::invalid_argument("unknown target mode '" + s + "' (expected paper|ddqn)");
}

struct AcdqnArch {
    std::vector<int> kernel_sizes;  // one odd size per layer, first to last
    int depth = 30;                 // hidden channel count
    int in_channels = 3;
    int actions = kNumActions;

    /// 10 layers: 9x9 then nine 5x5, hidden depth 30.
    static AcdqnArch full() { return {{9, 5, 5, 5, 5, 5, 5, 5, 5, 5}, 30}; }
    /// 3 layers of depth 8 for tests and desk-scale runs.
    static AcdqnArch reduced() { return {{9, 5, 5}, 8}; }

    static AcdqnArch preset(const std::string& name) {
        if (name == "full") return full();
        if (name == "reduced") return reduced();
        throw std::invalid_argument("unknown network preset '" + name + "' (expected full|reduced)");
    }

    int receptive_field() const {
        int rf = 1;
        for (int k : kernel_sizes) rf += k - 1;
        return rf;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < kernel_sizes.size(); ++l) {
            const std::size_t k = kernel_sizes[l];
            n += k * k * std::size_t(layer_in(l)) * std::size_t(layer_out(l));
        }
        return n;
    }

    int layer_in(std::size_t l) const { return l == 0 ? in_channels : depth; }
    int layer_out(std::size_t l) const { return l + 1 == kernel_sizes.size() ? actions : depth; }
};

struct AcdqnConfig {
    AcdqnArch arch = AcdqnArch::full();
    double init_mean = 1e-4;
    double init_std = 1e-8;
    double norm_eps = 1e-5;
    AdamConfig adam{};
};

/// Per-layer instance-norm statistics of one forward pass (hidden layers only).
template <typename T>
using NormStatsList = std::vector<NormStats<T>>;

template <typename T>
class AcdqnNet {
public:
    /// Activations kept from a forward pass for the backward pass.
    struct Cache {
        std::vector<Tensor3<T>> inputs;      // input of each conv layer
        std::vector<Tensor3<T>> normalized;  // instance-norm output of each hidden layer
        NormStatsList<T> stats;
    };

    AcdqnNet() = default;

    AcdqnNet(std::uint64_t seed, AcdqnConfig cfg) : cfg_(std::move(cfg)) {
        const auto& a = cfg_.arch;
        if (a.kernel_sizes.empty()) throw std::invalid_argument("AcdqnNet: no layers");
        if (!(cfg_.init_std >= 0)) throw std::invalid_argument("AcdqnNet: init_std must be non-negative");
        Rng rng(seed);
        for (std::size_t l = 0; l < a.kernel_sizes.size(); ++l) {
            const int k = a.kernel_sizes[l];
            Kernel4<T> K(k, k, a.layer_in(l), a.layer_out(l));
            for (T& w : K.storage())
                w = cfg_.init_std > 0 ? static_cast<T>(truncated_normal(rng, cfg_.init_mean, cfg_.init_std))
                                      : static_cast<T>(cfg_.init_mean);
            layers_.push_back(std::move(K));
            adam_.emplace_back(layers_.back().size(), cfg_.adam);
        }
    }

    const AcdqnConfig& config() const { return cfg_; }
    std::size_t layer_count() const { return layers_.size(); }
    const std::vector<Kernel4<T>>& layers() const { return layers_; }
    std::vector<Kernel4<T>>& layers() { return layers_; }
    std::vector<Adam<T>>& optimizers() { return adam_; }
    const std::vector<Adam<T>>& optimizers() const { return adam_; }
    std::uint64_t steps() const { return steps_; }
    void set_steps(std::uint64_t s) { steps_ = s; }
    int receptive_field() const { return cfg_.arch.receptive_field(); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& K : layers_) n += K.size();
        return n;
    }

    void set_learning_rate(double lr) {
        cfg_.adam.lr = lr;
        for (auto& a : adam_) a.config().lr = lr;
    }

    /// Q-volume for one frame. When `frozen` is given, hidden layers normalize
    /// with those statistics instead of the frame's own.
    Tensor3<T> forward(const Tensor3<T>& image, Cache* cache = nullptr,
                       const NormStatsList<T>* frozen = nullptr) const {
        check_input(image);
        if (frozen && frozen->size() + 1 != layers_.size())
            throw ShapeError("AcdqnNet::forward: frozen statistics do not match the layer count");
        if (cache) *cache = Cache{};
        Tensor3<T> x = image;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            Tensor3<T> z = conv2d(x, layers_[l]);
            if (cache) cache->inputs.push_back(std::move(x));
            if (l + 1 == layers_.size()) return z;
            NormStats<T> st = frozen ? (*frozen)[l] : instance_norm_stats(z, cfg_.norm_eps);
            Tensor3<T> y = instance_norm_apply(z, st);
            x = relu(y);
            if (cache) {
                cache->normalized.push_back(std::move(y));
                cache->stats.push_back(std::move(st));
            }
        }
        return x;  // unreachable: the loop returns at the last layer
    }

    /// Weight gradients given dL/dQ and the cache of the matching forward pass.
    std::vector<Kernel4<T>> backward(const Cache& cache, const Tensor3<T>& dQ) const {
        if (cache.inputs.size() != layers_.size()) throw std::logic_error("AcdqnNet::backward: stale cache");
        std::vector<Kernel4<T>> grads(layers_.size());
        Tensor3<T> g = dQ;
        for (std::size_t l = layers_.size(); l-- > 0;) {
            if (l + 1 < layers_.size()) {
                g = relu_backward(cache.normalized[l], g);
                g = instance_norm_backward(cache.normalized[l], cache.stats[l], g);
            }
            ConvGrads<T> cg = conv2d_backward(cache.inputs[l], layers_[l], g, l > 0);
            grads[l] = std::move(cg.kernel);
            g = std::move(cg.input);
        }
        return grads;
    }

    void apply_gradients(const std::vector<Kernel4<T>>& grads) {
        if (grads.size() != layers_.size()) throw ShapeError("AcdqnNet::apply_gradients: layer count mismatch");
        for (const auto& g : grads)
            detail::require_finite(g.weights(), "AcdqnNet::apply_gradients");
        for (std::size_t l = 0; l < layers_.size(); ++l) adam_[l].step(layers_[l].weights(), grads[l].weights());
        ++steps_;
    }

    /// Copies weights only; optimizer state and counters are left alone.
    void copy_weights_from(const AcdqnNet& other) {
        if (other.layers_.size() != layers_.size()) throw ShapeError("copy_weights_from: layer count mismatch");
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            if (!layers_[l].same_shape(other.layers_[l])) throw ShapeError("copy_weights_from: layer shape mismatch");
            layers_[l] = other.layers_[l];
        }
    }

private:
    void check_input(const Tensor3<T>& image) const {
        if (image.channels() != cfg_.arch.in_channels)
            throw ShapeError("AcdqnNet: expected " + std::to_string(cfg_.arch.in_channels) + " input channels, got " +
                             std::to_string(image.channels()));
        const int rf = receptive_field();
        if (image.height() < rf || image.width() < rf)
            throw ShapeError("AcdqnNet: frame " + shape_str(image) + " is smaller than the " + std::to_string(rf) +
                             "x" + std::to_string(rf) + " receptive field");
    }

    AcdqnConfig cfg_;
    std::vector<Kernel4<T>> layers_;
    std::vector<Adam<T>> adam_;
    std::uint64_t steps_ = 0;
};

/// Frozen copy of the online network used for bootstrapped targets.
template <typename T>
struct TargetNet {
    AcdqnNet<T> net;
    std::uint64_t syncs = 0;

    TargetNet() = default;
    explicit TargetNet(const AcdqnNet<T>& online) : net(online) {}
};

/// target <- bit copy of the online weights.
template <typename T>
void sync_target(const AcdqnNet<T>& online, TargetNet<T>& target) {
    target.net.copy_weights_from(online);
    ++target.syncs;
}

/// V[i,j] = max_a Q[i,j,a].
template <typename T>
Grid<T> value_image(const Tensor3<T>& q) {
    Grid<T> v(q.height(), q.width());
    const int A = q.channels();
    for (int i = 0; i < q.height(); ++i)
        for (int j = 0; j < q.width(); ++j) {
            const T* p = q.pixel(i, j);
            v(i, j) = *std::max_element(p, p + A);
        }
    return v;
}

/// Per-pixel argmax; ties go to the lowest action index.
template <typename T>
ActionMatrix greedy_actions(const Tensor3<T>& q) {
    ActionMatrix a(q.height(), q.width());
    const int A = q.channels();
    for (int i = 0; i < q.height(); ++i)
        for (int j = 0; j < q.width(); ++j) {
            const T* p = q.pixel(i, j);
            a(i, j) = static_cast<std::uint8_t>(std::max_element(p, p + A) - p);
        }
    return a;
}

/// Each pixel independently explores uniformly with probability epsilon.
template <typename T>
ActionMatrix epsilon_greedy(const Tensor3<T>& q, double epsilon, Rng& rng) {
    if (epsilon < 0 || epsilon > 1) throw std::invalid_argument("epsilon_greedy: epsilon outside [0,1]");
    ActionMatrix a = greedy_actions(q);
    if (epsilon == 0) return a;
    for (auto& v : a.storage())
        if (uniform01(rng) < epsilon) v = static_cast<std::uint8_t>(uniform_index(rng, kNumActions));
    return a;
}

struct TdOptions {
    double gamma = 0.9;
    TargetMode mode = TargetMode::Paper;
    /// Read the bootstrapped next state at the pixel the taken action moves to.
    bool shifted = false;
    int step = 1;  // action step size k, used only when shifted
};

/// Bootstrapped per-pixel target map. Paper mode: R + gamma * max_a Q_target(I').
/// DDQN mode: R + gamma * Q_target(I')[argmax_a Q_online(I')]. When `opt.shifted`
/// is set, both R and the next-state term are read at (i,j) + displacement(A[i,j]),
/// clamped to the frame, which requires `actions`.
template <typename T>
Grid<T> td_target(const Grid<T>& reward, const Tensor3<T>& next, const AcdqnNet<T>& online,
                  const TargetNet<T>& target, const TdOptions& opt, const ActionMatrix* actions = nullptr) {
    using A = accum_t<T>;
    if (!(opt.gamma >= 0 && opt.gamma < 1)) throw std::invalid_argument("td_target: gamma must lie in [0,1)");
    const int H = next.height(), W = next.width();
    if (!reward.same_spatial(H, W)) throw ShapeError("td_target: reward and next frame differ in shape");
    if (opt.shifted && (!actions || !actions->same_spatial(H, W)))
        throw ShapeError("td_target: shifted targets need an action matrix of the frame's shape");

    Grid<T> out(H, W);
    if (opt.gamma == 0 && !opt.shifted) {
        out = reward;
        return out;
    }
    const Tensor3<T> qt = target.net.forward(next);
    std::optional<Tensor3<T>> qo;
    if (opt.mode == TargetMode::Ddqn) qo = online.forward(next);
    const int nA = qt.channels();
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
            int si = i, sj = j;
            if (opt.shifted) {
                const Displacement d = displacement((*actions)(i, j), opt.step);
                si = std::clamp(i + d.di, 0, H - 1);
                sj = std::clamp(j + d.dj, 0, W - 1);
            }
            const T* pt = qt.pixel(si, sj);
            A boot;
            if (opt.mode == TargetMode::Paper) {
                boot = *std::max_element(pt, pt + nA);
            } else {
                const T* po = qo->pixel(si, sj);
                boot = pt[std::max_element(po, po + nA) - po];
            }
            out(i, j) = static_cast<T>(A(reward(si, sj)) + A(opt.gamma) * boot);
        }
    return out;
}

/// delta[i,j] = |Q[i,j,A[i,j]] - T[i,j]|.
template <typename T>
Grid<T> td_error(const Tensor3<T>& q, const ActionMatrix& actions, const Grid<T>& target) {
    if (!actions.same_spatial(q.height(), q.width()) || !target.same_spatial(q.height(), q.width()))
        throw ShapeError("td_error: shape mismatch");
    Grid<T> d(q.height(), q.width());
    for (int i = 0; i < q.height(); ++i)
        for (int j = 0; j < q.width(); ++j)
            d(i, j) = static_cast<T>(std::abs(accum_t<T>(q(i, j, actions(i, j))) - accum_t<T>(target(i, j))));
    return d;
}

/// Squared TD loss on the gathered Q-values of one frame, with its weight gradients.
template <typename T>
struct TdLossGrad {
    accum_t<T> loss = 0;        // mean over pixels of delta^2
    accum_t<T> mean_abs = 0;    // mean over pixels of |delta|
    std::vector<Kernel4<T>> grads;
};

/// `scale` multiplies the gradient (batch averaging and importance weights).
template <typename T>
TdLossGrad<T> td_loss_gradient(const AcdqnNet<T>& net, const Tensor3<T>& image, const ActionMatrix& actions,
                               const Grid<T>& target, double scale = 1.0) {
    using A = accum_t<T>;
    typename AcdqnNet<T>::Cache cache;
    const Tensor3<T> q = net.forward(image, &cache);
    if (!actions.same_spatial(q.height(), q.width()) || !target.same_spatial(q.height(), q.width()))
        throw ShapeError("td_loss_gradient: shape mismatch");
    const A npix = A(q.height()) * A(q.width());
    Tensor3<T> dq(q.height(), q.width(), q.channels());
    TdLossGrad<T> out;
    for (int i = 0; i < q.height(); ++i)
        for (int j = 0; j < q.width(); ++j) {
            const int a = actions(i, j);
            const A diff = A(q(i, j, a)) - A(target(i, j));
            out.loss += diff * diff;
            out.mean_abs += std::abs(diff);
            dq(i, j, a) = static_cast<T>(A(scale) * A(2) * diff / npix);
        }
    out.loss /= npix;
    out.mean_abs /= npix;
    out.grads = net.backward(cache, dq);
    return out;
}

/// One element of a training batch. Pointers must outlive the call.
template <typename T>
struct TrainItem {
    const Tensor3<T>* image = nullptr;
    const ActionMatrix* actions = nullptr;
    const Grid<T>* reward = nullptr;
    const Tensor3<T>* next = nullptr;
    double weight = 1.0;  // importance-sampling weight
};

struct TrainResult {
    double mean_loss = 0;            // mean over items and pixels of delta^2
    std::vector<double> item_delta;  // per-item mean |delta|, for replay priorities
};

/// Builds targets, accumulates the batch-averaged gradient of the squared TD
/// error through Q[i,j,A[i,j]] and takes one Adam step. Nothing is updated if
/// the loss or any gradient is non-finite.
template <typename T>
TrainResult acdqn_train_step(AcdqnNet<T>& net, const TargetNet<T>& target, std::span<const TrainItem<T>> batch,
                             const TdOptions& opt) {
    if (batch.empty()) throw std::invalid_argument("acdqn_train_step: empty batch");
    TrainResult res;
    std::vector<Kernel4<T>> total;
    const double inv_b = 1.0 / double(batch.size());
    for (const auto& item : batch) {
        const Grid<T> tmap = td_target(*item.reward, *item.next, net, target, opt, item.actions);
        TdLossGrad<T> lg = td_loss_gradient(net, *item.image, *item.actions, tmap, item.weight * inv_b);
        res.mean_loss += double(lg.loss) * inv_b;
        res.item_delta.push_back(double(lg.mean_abs));
        if (total.empty()) {
            total = std::move(lg.grads);
        } else {
            for (std::size_t l = 0; l < total.size(); ++l) {
                auto dst = total[l].weights();
                auto src = lg.grads[l].weights();
                for (std::size_t n = 0; n < dst.size(); ++n) dst[n] += src[n];
            }
        }
    }
    if (!std::isfinite(res.mean_loss)) throw NumericError("acdqn_train_step: non-finite loss");
    net.apply_gradients(total);
    return res;
}

}  // namespace dcl
