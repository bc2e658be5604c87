#pragma once

#include <algorithm>

#include "dcl/kernels.hpp"
#include "dcl/tensor.hpp"

namespace dcl {

inline constexpr int kDefaultRewardWindow = 45;

/// out[i,j] = max over channels of x[i,j,:].
template <typename T>
Grid<T> max_channel(const Tensor3<T>& x) {
    if (x.channels() < 1) throw ShapeError("max_channel: tensor has no channels");
    Grid<T> out(x.height(), x.width());
    const int C = x.channels();
    for (int i = 0; i < x.height(); ++i)
        for (int j = 0; j < x.width(); ++j) {
            const T* p = x.pixel(i, j);
            out(i, j) = *std::max_element(p, p + C);
        }
    return out;
}

/// Per-pixel squared difference of the channel maxima of two frames.
template <typename T>
Grid<T> max_channel_sq_diff(const Tensor3<T>& a, const Tensor3<T>& b) {
    using A = accum_t<T>;
    if (!a.same_shape(b)) throw ShapeError("max_channel_sq_diff: " + shape_str(a) + " vs " + shape_str(b));
    const Grid<T> ma = max_channel(a), mb = max_channel(b);
    Grid<T> d(a.height(), a.width());
    for (std::size_t k = 0; k < d.size(); ++k) {
        const A e = A(ma.storage()[k]) - A(mb.storage()[k]);
        d.storage()[k] = static_cast<T>(e * e);
    }
    return d;
}

/// Intrinsic reward image: squared max-channel prediction error, averaged over
/// a window x window neighbourhood (zero padded, divisor window^2).
template <typename T>
Grid<T> reward_image(const Tensor3<T>& pred, const Tensor3<T>& next, int window = kDefaultRewardWindow) {
    return box_mean_filter(max_channel_sq_diff(pred, next), window);
}

/// Scalar summary of a reward image (its mean), for logging.
template <typename T>
double mean_reward(const Grid<T>& r) {
    if (r.size() == 0) return 0.0;
    double s = 0;
    for (const T& v : r.storage()) s += double(v);
    return s / double(r.size());
}

}  // namespace dcl
