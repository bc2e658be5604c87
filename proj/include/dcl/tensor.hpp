#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcl {

/// Raised when two operands disagree on shape, or a shape is invalid for an op.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a loss or gradient stops being finite.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Accumulator type used inside reductions. Float storage accumulates in double.
template <typename T> struct accum { using type = double; };
template <> struct accum<long double> { using type = long double; };
template <typename T> using accum_t = typename accum<T>::type;

/// Dense height x width x channels tensor, row-major with channels innermost.
template <typename T>
class Tensor3 {
public:
    using value_type = T;

    Tensor3() = default;
    Tensor3(int height, int width, int channels, T fill = T(0))
        : h_(height), w_(width), c_(channels) {
        if (height < 0 || width < 0 || channels < 0)
            throw ShapeError("Tensor3: negative dimension");
        data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
    }

    int height() const { return h_; }
    int width() const { return w_; }
    int channels() const { return c_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& operator()(int i, int j, int c) { return data_[index(i, j, c)]; }
    const T& operator()(int i, int j, int c) const { return data_[index(i, j, c)]; }

    std::size_t index(int i, int j, int c) const {
        return (static_cast<std::size_t>(i) * w_ + j) * c_ + c;
    }

    T* pixel(int i, int j) { return data_.data() + index(i, j, 0); }
    const T* pixel(int i, int j) const { return data_.data() + index(i, j, 0); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    bool same_shape(const Tensor3& o) const { return h_ == o.h_ && w_ == o.w_ && c_ == o.c_; }
    bool same_spatial(int height, int width) const { return h_ == height && w_ == width; }

    bool all_finite() const {
        for (const T& v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    Tensor3<U> cast() const {
        Tensor3<U> out(h_, w_, c_);
        for (std::size_t k = 0; k < data_.size(); ++k) out.storage()[k] = static_cast<U>(data_[k]);
        return out;
    }

    bool operator==(const Tensor3&) const = default;

private:
    int h_ = 0, w_ = 0, c_ = 0;
    std::vector<T> data_;
};

/// Single-plane h x w grid. Used for reward/value maps, masks and action indices.
template <typename T>
class Grid {
public:
    using value_type = T;

    Grid() = default;
    Grid(int height, int width, T fill = T{}) : h_(height), w_(width) {
        if (height < 0 || width < 0) throw ShapeError("Grid: negative dimension");
        data_.assign(static_cast<std::size_t>(height) * width, fill);
    }

    int height() const { return h_; }
    int width() const { return w_; }
    std::size_t size() const { return data_.size(); }

    T& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * w_ + j]; }
    const T& operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * w_ + j]; }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    template <typename U>
    bool same_shape(const Grid<U>& o) const { return h_ == o.height() && w_ == o.width(); }
    bool same_spatial(int height, int width) const { return h_ == height && w_ == width; }

    bool operator==(const Grid&) const = default;

private:
    int h_ = 0, w_ = 0;
    std::vector<T> data_;
};

using Image = Tensor3<float>;
using Map = Grid<float>;
using Mask = Grid<std::uint8_t>;

/// Convolution weights, laid out [kh][kw][cin][cout].
template <typename T>
class Kernel4 {
public:
    Kernel4() = default;
    Kernel4(int kh, int kw, int cin, int cout, T fill = T(0))
        : kh_(kh), kw_(kw), cin_(cin), cout_(cout) {
        if (kh <= 0 || kw <= 0 || cin <= 0 || cout <= 0)
            throw ShapeError("Kernel4: dimensions must be positive");
        if (kh % 2 == 0 || kw % 2 == 0)
            throw ShapeError("Kernel4: kernel height and width must be odd");
        w_.assign(static_cast<std::size_t>(kh) * kw * cin * cout, fill);
    }

    int kh() const { return kh_; }
    int kw() const { return kw_; }
    int cin() const { return cin_; }
    int cout() const { return cout_; }
    std::size_t size() const { return w_.size(); }

    std::size_t index(int di, int dj, int c, int o) const {
        return ((static_cast<std::size_t>(di) * kw_ + dj) * cin_ + c) * cout_ + o;
    }
    T& operator()(int di, int dj, int c, int o) { return w_[index(di, dj, c, o)]; }
    const T& operator()(int di, int dj, int c, int o) const { return w_[index(di, dj, c, o)]; }

    std::span<T> weights() { return w_; }
    std::span<const T> weights() const { return w_; }
    std::vector<T>& storage() { return w_; }
    const std::vector<T>& storage() const { return w_; }

    bool same_shape(const Kernel4& o) const {
        return kh_ == o.kh_ && kw_ == o.kw_ && cin_ == o.cin_ && cout_ == o.cout_;
    }

    template <typename U>
    Kernel4<U> cast() const {
        Kernel4<U> out(kh_, kw_, cin_, cout_);
        for (std::size_t k = 0; k < w_.size(); ++k) out.storage()[k] = static_cast<U>(w_[k]);
        return out;
    }

    bool operator==(const Kernel4&) const = default;

private:
    int kh_ = 0, kw_ = 0, cin_ = 0, cout_ = 0;
    std::vector<T> w_;
};

inline std::string shape_str(int h, int w, int c) {
    return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
}

template <typename T>
std::string shape_str(const Tensor3<T>& t) {
    return shape_str(t.height(), t.width(), t.channels());
}

}  // namespace dcl
