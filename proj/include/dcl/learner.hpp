#pragma once

// Forward model: predicts the next frame from the current frame and the
// per-pixel action matrix with a single bias-free 7x7 convolution + ReLU.

#include <cstdint>

#include "dcl/action.hpp"
#include "dcl/kernels.hpp"
#include "dcl/optim.hpp"
#include "dcl/random.hpp"
#include "dcl/tensor.hpp"

namespace dcl {

struct LearnerConfig {
    double init_mean = 1e-4;
    double init_std = 1e-8;
    SgdMomentumConfig sgd{};  // lr 0.01, momentum 0.9, classical
};

inline constexpr int kLearnerKernel = 7;
inline constexpr int kImageChannels = 3;
inline constexpr int kLearnerInputChannels = kImageChannels + kNumActions;

/// Squared error averaged over every pixel and channel.
template <typename T>
accum_t<T> learner_loss(const Tensor3<T>& pred, const Tensor3<T>& next) {
    using A = accum_t<T>;
    if (!pred.same_shape(next))
        throw ShapeError("learner_loss: " + shape_str(pred) + " vs " + shape_str(next));
    if (pred.size() == 0) return A(0);
    A s = 0;
    auto p = pred.data();
    auto n = next.data();
    for (std::size_t k = 0; k < p.size(); ++k) {
        const A d = A(p[k]) - A(n[k]);
        s += d * d;
    }
    return s / A(p.size());
}

/// Stacks the image (3 channels) and one-hot actions (5 channels) into 8 channels.
template <typename T>
Tensor3<T> learner_input(const Tensor3<T>& image, const Tensor3<T>& onehot) {
    if (image.channels() != kImageChannels) throw ShapeError("learner: image must have 3 channels");
    if (onehot.channels() != kNumActions) throw ShapeError("learner: action tensor must have 5 channels");
    if (!onehot.same_spatial(image.height(), image.width()))
        throw ShapeError("learner: image " + shape_str(image) + " and actions " + shape_str(onehot) +
                         " differ spatially");
    Tensor3<T> x(image.height(), image.width(), kLearnerInputChannels);
    for (int i = 0; i < image.height(); ++i)
        for (int j = 0; j < image.width(); ++j) {
            T* dst = x.pixel(i, j);
            const T* a = image.pixel(i, j);
            const T* b = onehot.pixel(i, j);
            for (int c = 0; c < kImageChannels; ++c) dst[c] = a[c];
            for (int c = 0; c < kNumActions; ++c) dst[kImageChannels + c] = b[c];
        }
    return x;
}

template <typename T>
class Learner {
public:
    struct Step {
        accum_t<T> loss;  // before the update
        Tensor3<T> pred;  // before the update
    };

    struct Gradient {
        accum_t<T> loss;
        Tensor3<T> pred;
        Kernel4<T> dkernel;
    };

    Learner() : Learner(0, LearnerConfig{}) {}

    Learner(std::uint64_t seed, LearnerConfig cfg)
        : cfg_(cfg), kernel_(kLearnerKernel, kLearnerKernel, kLearnerInputChannels, kImageChannels) {
        if (!(cfg.init_std > 0)) throw std::invalid_argument("Learner: init_std must be positive");
        Rng rng(seed);
        for (T& w : kernel_.storage()) w = static_cast<T>(truncated_normal(rng, cfg.init_mean, cfg.init_std));
        opt_ = SgdMomentum<T>(kernel_.size(), cfg.sgd);
    }

    std::size_t parameter_count() const { return kernel_.size(); }
    const Kernel4<T>& kernel() const { return kernel_; }
    Kernel4<T>& kernel() { return kernel_; }
    SgdMomentum<T>& optimizer() { return opt_; }
    const SgdMomentum<T>& optimizer() const { return opt_; }
    const LearnerConfig& config() const { return cfg_; }
    std::uint64_t steps() const { return steps_; }
    void set_steps(std::uint64_t s) { steps_ = s; }

    void set_learning_rate(double lr, double momentum) {
        opt_.config().lr = lr;
        opt_.config().momentum = momentum;
    }

    Tensor3<T> predict(const Tensor3<T>& image, const Tensor3<T>& onehot) const {
        return relu(conv2d(learner_input(image, onehot), kernel_));
    }

    Tensor3<T> predict(const Tensor3<T>& image, const ActionMatrix& actions) const {
        return predict(image, one_hot<T>(actions));
    }

    /// Prediction MSE against the next frame and its gradient w.r.t. the kernel.
    Gradient gradient(const Tensor3<T>& image, const Tensor3<T>& onehot, const Tensor3<T>& next) const {
        using A = accum_t<T>;
        const Tensor3<T> x = learner_input(image, onehot);
        const Tensor3<T> z = conv2d(x, kernel_);
        Tensor3<T> pred = relu(z);
        const A loss = learner_loss(pred, next);
        Tensor3<T> dpred(pred.height(), pred.width(), pred.channels());
        const A scale = A(2) / A(pred.size());
        auto p = pred.data();
        auto n = next.data();
        auto d = dpred.data();
        for (std::size_t k = 0; k < d.size(); ++k) d[k] = static_cast<T>(scale * (A(p[k]) - A(n[k])));
        const Tensor3<T> dz = relu_backward(z, dpred);
        Kernel4<T> dk = conv2d_backward(x, kernel_, dz, /*want_input_grad=*/false).kernel;
        return {loss, std::move(pred), std::move(dk)};
    }

    /// One forward pass and one SGD-momentum update. Returns the pre-update
    /// loss and prediction; a non-finite loss leaves the weights untouched.
    Step train_step(const Tensor3<T>& image, const Tensor3<T>& onehot, const Tensor3<T>& next) {
        if (!next.same_spatial(image.height(), image.width()) || next.channels() != kImageChannels)
            throw ShapeError("Learner::train_step: next frame " + shape_str(next) + " vs " + shape_str(image));
        Gradient g = gradient(image, onehot, next);
        if (!std::isfinite(static_cast<double>(g.loss)))
            throw NumericError("Learner::train_step: non-finite loss");
        opt_.step(kernel_.weights(), g.dkernel.weights());
        ++steps_;
        return {g.loss, std::move(g.pred)};
    }

    Step train_step(const Tensor3<T>& image, const ActionMatrix& actions, const Tensor3<T>& next) {
        return train_step(image, one_hot<T>(actions), next);
    }

private:
    LearnerConfig cfg_;
    Kernel4<T> kernel_;
    SgdMomentum<T> opt_;
    std::uint64_t steps_ = 0;
};

}  // namespace dcl
