#pragma once

// Same-size 2-D convolution (stride 1, zero padding, no bias) with its exact
// backward pass, ReLU, affine-free instance normalization and the box mean
// filter used to spread the intrinsic reward.

#include <algorithm>
#include <cmath>
#include <type_traits>
#include <vector>

#include "dcl/tensor.hpp"

namespace dcl {

namespace detail {

template <typename T>
void check_conv_shapes(const Tensor3<T>& in, const Kernel4<T>& k) {
    if (in.channels() != k.cin())
        throw ShapeError("conv2d: input has " + std::to_string(in.channels()) +
                         " channels, kernel expects " + std::to_string(k.cin()));
    if (k.kh() % 2 == 0 || k.kw() % 2 == 0)
        throw ShapeError("conv2d: kernel dimensions must be odd");
}

template <typename A, typename T>
std::vector<A> widen(std::span<const T> src) {
    return std::vector<A>(src.begin(), src.end());
}

/// Output channels are padded to a multiple of 4 so inner loops vectorize evenly.
inline int padded_channels(int n) { return (n + 3) & ~3; }

/// Kernel widened to the accumulator type with the output axis padded to `op`.
template <typename A, typename T>
std::vector<A> widen_kernel(const Kernel4<T>& k, int op) {
    const int O = k.cout();
    const std::size_t taps = static_cast<std::size_t>(k.kh()) * k.kw() * k.cin();
    std::vector<A> out(taps * op, A(0));
    auto w = k.weights();
    for (std::size_t t = 0; t < taps; ++t)
        for (int o = 0; o < O; ++o) out[t * op + o] = A(w[t * O + o]);
    return out;
}

/// Tensor widened to the accumulator type with the channel axis padded to `cp`.
template <typename A, typename T>
std::vector<A> widen_tensor(const Tensor3<T>& x, int cp) {
    const int C = x.channels();
    const std::size_t n = static_cast<std::size_t>(x.height()) * x.width();
    std::vector<A> out(n * cp, A(0));
    auto xs = x.data();
    for (std::size_t p = 0; p < n; ++p)
        for (int c = 0; c < C; ++c) out[p * cp + c] = A(xs[p * C + c]);
    return out;
}

/// Calls f(std::integral_constant<int, N>) for the common padded widths so the
/// innermost loops get a compile-time trip count; N = 0 means "use the runtime width".
template <typename F>
decltype(auto) dispatch_width(int op, F&& f) {
    switch (op) {
        case 4: return f(std::integral_constant<int, 4>{});
        case 8: return f(std::integral_constant<int, 8>{});
        case 12: return f(std::integral_constant<int, 12>{});
        case 16: return f(std::integral_constant<int, 16>{});
        case 32: return f(std::integral_constant<int, 32>{});
        default: return f(std::integral_constant<int, 0>{});
    }
}

}  // namespace detail

/// Direct six-loop convolution. Slow; kept as the numerical reference for conv2d.
template <typename T>
Tensor3<T> conv2d_direct(const Tensor3<T>& in, const Kernel4<T>& k) {
    using A = accum_t<T>;
    detail::check_conv_shapes(in, k);
    const int H = in.height(), W = in.width();
    const int ph = k.kh() / 2, pw = k.kw() / 2;
    Tensor3<T> out(H, W, k.cout());
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j)
            for (int o = 0; o < k.cout(); ++o) {
                A s = 0;
                for (int di = 0; di < k.kh(); ++di) {
                    const int ii = i + di - ph;
                    if (ii < 0 || ii >= H) continue;
                    for (int dj = 0; dj < k.kw(); ++dj) {
                        const int jj = j + dj - pw;
                        if (jj < 0 || jj >= W) continue;
                        for (int c = 0; c < k.cin(); ++c)
                            s += A(in(ii, jj, c)) * A(k(di, dj, c, o));
                    }
                }
                out(i, j, o) = static_cast<T>(s);
            }
    return out;
}

/// Same-size convolution: out[i,j,o] = sum in[i+di-kh/2, j+dj-kw/2, c] * w[di,dj,c,o].
/// Loop-reordered so the innermost loop runs over contiguous output channels.
/// Each output row is reduced in a fixed order, so results are deterministic.
template <typename T>
Tensor3<T> conv2d(const Tensor3<T>& in, const Kernel4<T>& k) {
    using A = accum_t<T>;
    detail::check_conv_shapes(in, k);
    const int H = in.height(), W = in.width(), C = in.channels(), O = k.cout();
    const int KH = k.kh(), KW = k.kw(), ph = KH / 2, pw = KW / 2;
    const int OP = detail::padded_channels(O);
    const std::vector<A> wk = detail::widen_kernel<A>(k, OP);
    std::vector<A> acc(static_cast<std::size_t>(W) * OP);
    Tensor3<T> out(H, W, O);

    detail::dispatch_width(OP, [&](auto width) {
        constexpr int N = decltype(width)::value;
        const int op = N ? N : OP;
        for (int i = 0; i < H; ++i) {
            std::fill(acc.begin(), acc.end(), A(0));
            for (int di = 0; di < KH; ++di) {
                const int ii = i + di - ph;
                if (ii < 0 || ii >= H) continue;
                const T* row = in.pixel(ii, 0);
                for (int dj = 0; dj < KW; ++dj) {
                    const int off = dj - pw;
                    const int jlo = std::max(0, -off), jhi = std::min(W, W - off);
                    const A* wt = wk.data() + static_cast<std::size_t>(di * KW + dj) * C * OP;
                    for (int j = jlo; j < jhi; ++j) {
                        const T* x = row + static_cast<std::size_t>(j + off) * C;
                        A* a = acc.data() + static_cast<std::size_t>(j) * OP;
                        for (int c = 0; c < C; ++c) {
                            const A xv = x[c];
                            const A* wc = wt + static_cast<std::size_t>(c) * OP;
                            for (int o = 0; o < op; ++o) a[o] += xv * wc[o];
                        }
                    }
                }
            }
            T* dst = out.pixel(i, 0);
            for (int j = 0; j < W; ++j)
                for (int o = 0; o < O; ++o) dst[j * O + o] = static_cast<T>(acc[static_cast<std::size_t>(j) * OP + o]);
        }
    });
    return out;
}

template <typename T>
struct ConvGrads {
    Tensor3<T> input;   // empty when not requested
    Kernel4<T> kernel;
};

/// Gradients of sum(dOut * conv2d(in, k)) with respect to the input and the weights.
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor3<T>& in, const Kernel4<T>& k, const Tensor3<T>& dOut,
                             bool want_input_grad = true) {
    using A = accum_t<T>;
    detail::check_conv_shapes(in, k);
    if (!dOut.same_spatial(in.height(), in.width()) || dOut.channels() != k.cout())
        throw ShapeError("conv2d_backward: dOut is " + shape_str(dOut) + ", expected " +
                         shape_str(in.height(), in.width(), k.cout()));
    const int H = in.height(), W = in.width(), C = in.channels(), O = k.cout();
    const int KH = k.kh(), KW = k.kw(), ph = KH / 2, pw = KW / 2;
    const int OP = detail::padded_channels(O);
    const std::vector<A> g = detail::widen_tensor<A>(dOut, OP);

    ConvGrads<T> grads;
    grads.kernel = Kernel4<T>(KH, KW, C, O);

    // Weight gradient: one (di, dj) tap at a time.
    std::vector<A> accw(static_cast<std::size_t>(C) * OP);
    detail::dispatch_width(OP, [&](auto width) {
        constexpr int N = decltype(width)::value;
        const int op = N ? N : OP;
        for (int di = 0; di < KH; ++di) {
            for (int dj = 0; dj < KW; ++dj) {
                std::fill(accw.begin(), accw.end(), A(0));
                const int offi = di - ph, offj = dj - pw;
                const int ilo = std::max(0, -offi), ihi = std::min(H, H - offi);
                const int jlo = std::max(0, -offj), jhi = std::min(W, W - offj);
                for (int i = ilo; i < ihi; ++i) {
                    const T* xrow = in.pixel(i + offi, 0);
                    const A* grow = g.data() + static_cast<std::size_t>(i) * W * OP;
                    for (int j = jlo; j < jhi; ++j) {
                        const T* x = xrow + static_cast<std::size_t>(j + offj) * C;
                        const A* gp = grow + static_cast<std::size_t>(j) * OP;
                        for (int c = 0; c < C; ++c) {
                            const A xv = x[c];
                            A* a = accw.data() + static_cast<std::size_t>(c) * OP;
                            for (int o = 0; o < op; ++o) a[o] += xv * gp[o];
                        }
                    }
                }
                T* dst = &grads.kernel(di, dj, 0, 0);
                for (int c = 0; c < C; ++c)
                    for (int o = 0; o < O; ++o) dst[c * O + o] = static_cast<T>(accw[static_cast<std::size_t>(c) * OP + o]);
            }
        }
    });

    if (!want_input_grad) return grads;

    // Input gradient: transposed convolution, one input row at a time.
    const std::vector<A> wk = detail::widen_kernel<A>(k, OP);
    grads.input = Tensor3<T>(H, W, C);
    std::vector<A> acc(static_cast<std::size_t>(W) * C);
    detail::dispatch_width(OP, [&](auto width) {
        constexpr int N = decltype(width)::value;
        const int op = N ? N : OP;
        for (int ii = 0; ii < H; ++ii) {
            std::fill(acc.begin(), acc.end(), A(0));
            for (int di = 0; di < KH; ++di) {
                const int i = ii - di + ph;
                if (i < 0 || i >= H) continue;
                const A* grow = g.data() + static_cast<std::size_t>(i) * W * OP;
                for (int dj = 0; dj < KW; ++dj) {
                    const int off = dj - pw;
                    const int jlo = std::max(0, -off), jhi = std::min(W, W - off);
                    const A* wt = wk.data() + static_cast<std::size_t>(di * KW + dj) * C * OP;
                    for (int j = jlo; j < jhi; ++j) {
                        const A* gp = grow + static_cast<std::size_t>(j) * OP;
                        A* a = acc.data() + static_cast<std::size_t>(j + off) * C;
                        for (int c = 0; c < C; ++c) {
                            const A* wc = wt + static_cast<std::size_t>(c) * OP;
                            A s = 0;
                            for (int o = 0; o < op; ++o) s += gp[o] * wc[o];
                            a[c] += s;
                        }
                    }
                }
            }
            T* dst = grads.input.pixel(ii, 0);
            for (std::size_t n = 0; n < acc.size(); ++n) dst[n] = static_cast<T>(acc[n]);
        }
    });
    return grads;
}

template <typename T>
Tensor3<T> relu(const Tensor3<T>& x) {
    Tensor3<T> out = x;
    for (T& v : out.storage()) v = v > T(0) ? v : T(0);
    return out;
}

/// dX = dOut where the forward input was positive, else 0.
template <typename T>
Tensor3<T> relu_backward(const Tensor3<T>& x, const Tensor3<T>& dOut) {
    if (!x.same_shape(dOut)) throw ShapeError("relu_backward: shape mismatch");
    Tensor3<T> dx = dOut;
    auto xs = x.data();
    auto ds = dx.data();
    for (std::size_t n = 0; n < ds.size(); ++n)
        if (!(xs[n] > T(0))) ds[n] = T(0);
    return dx;
}

/// Per-channel spatial statistics of an instance-norm layer.
template <typename T>
struct NormStats {
    std::vector<accum_t<T>> mean;
    std::vector<accum_t<T>> inv_std;  // 1 / sqrt(var + eps)
};

template <typename T>
NormStats<T> instance_norm_stats(const Tensor3<T>& x, double eps) {
    using A = accum_t<T>;
    if (!(eps > 0)) throw std::invalid_argument("instance_norm: eps must be positive");
    const int C = x.channels();
    const std::size_t n = static_cast<std::size_t>(x.height()) * x.width();
    NormStats<T> st;
    st.mean.assign(C, A(0));
    st.inv_std.assign(C, A(0));
    if (n == 0) return st;
    auto xs = x.data();
    for (std::size_t p = 0; p < n; ++p)
        for (int c = 0; c < C; ++c) st.mean[c] += A(xs[p * C + c]);
    for (int c = 0; c < C; ++c) st.mean[c] /= A(n);
    std::vector<A> var(C, A(0));
    for (std::size_t p = 0; p < n; ++p)
        for (int c = 0; c < C; ++c) {
            const A d = A(xs[p * C + c]) - st.mean[c];
            var[c] += d * d;
        }
    for (int c = 0; c < C; ++c) st.inv_std[c] = A(1) / std::sqrt(var[c] / A(n) + A(eps));
    return st;
}

/// Normalizes each channel with the given statistics (no learned scale or shift).
template <typename T>
Tensor3<T> instance_norm_apply(const Tensor3<T>& x, const NormStats<T>& st) {
    using A = accum_t<T>;
    const int C = x.channels();
    if (static_cast<int>(st.mean.size()) != C) throw ShapeError("instance_norm: stats/channel mismatch");
    Tensor3<T> out(x.height(), x.width(), C);
    auto xs = x.data();
    auto os = out.data();
    for (std::size_t n = 0; n < xs.size(); ++n) {
        const int c = static_cast<int>(n % C);
        os[n] = static_cast<T>((A(xs[n]) - st.mean[c]) * st.inv_std[c]);
    }
    return out;
}

template <typename T>
Tensor3<T> instance_norm(const Tensor3<T>& x, double eps) {
    return instance_norm_apply(x, instance_norm_stats(x, eps));
}

/// Backward of instance_norm given the normalized output y and its statistics:
/// dx = inv_std * (dy - mean(dy) - y * mean(dy * y)), per channel.
template <typename T>
Tensor3<T> instance_norm_backward(const Tensor3<T>& y, const NormStats<T>& st, const Tensor3<T>& dy) {
    using A = accum_t<T>;
    if (!y.same_shape(dy)) throw ShapeError("instance_norm_backward: shape mismatch");
    const int C = y.channels();
    const std::size_t n = static_cast<std::size_t>(y.height()) * y.width();
    std::vector<A> mdy(C, A(0)), mdyy(C, A(0));
    auto ys = y.data();
    auto ds = dy.data();
    for (std::size_t p = 0; p < n; ++p)
        for (int c = 0; c < C; ++c) {
            const A d = ds[p * C + c];
            mdy[c] += d;
            mdyy[c] += d * A(ys[p * C + c]);
        }
    for (int c = 0; c < C; ++c) {
        mdy[c] /= A(n);
        mdyy[c] /= A(n);
    }
    Tensor3<T> dx(y.height(), y.width(), C);
    auto xs = dx.data();
    for (std::size_t p = 0; p < n; ++p)
        for (int c = 0; c < C; ++c) {
            const std::size_t q = p * C + c;
            xs[q] = static_cast<T>(st.inv_std[c] * (A(ds[q]) - mdy[c] - A(ys[q]) * mdyy[c]));
        }
    return dx;
}

/// Window x window mean with zero padding. The divisor is window^2 everywhere,
/// including at the borders.
template <typename T>
Grid<T> box_mean_filter(const Grid<T>& x, int window) {
    using A = accum_t<T>;
    if (window <= 0 || window % 2 == 0) throw std::invalid_argument("box_mean_filter: window must be odd and positive");
    const int H = x.height(), W = x.width(), r = window / 2;
    // Horizontal window sums, then vertical, each from running prefix sums.
    std::vector<A> rows(static_cast<std::size_t>(H) * W);
    std::vector<A> prefix(static_cast<std::size_t>(std::max(H, W)) + 1);
    for (int i = 0; i < H; ++i) {
        prefix[0] = 0;
        for (int j = 0; j < W; ++j) prefix[j + 1] = prefix[j] + A(x(i, j));
        for (int j = 0; j < W; ++j) {
            const int lo = std::max(0, j - r), hi = std::min(W, j + r + 1);
            rows[static_cast<std::size_t>(i) * W + j] = prefix[hi] - prefix[lo];
        }
    }
    Grid<T> out(H, W);
    const A norm = A(1) / (A(window) * A(window));
    for (int j = 0; j < W; ++j) {
        prefix[0] = 0;
        for (int i = 0; i < H; ++i) prefix[i + 1] = prefix[i] + rows[static_cast<std::size_t>(i) * W + j];
        for (int i = 0; i < H; ++i) {
            const int lo = std::max(0, i - r), hi = std::min(H, i + r + 1);
            out(i, j) = static_cast<T>((prefix[hi] - prefix[lo]) * norm);
        }
    }
    return out;
}

}  // namespace dcl
