#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "dcl/tensor.hpp"

namespace dcl {

/// Per-pixel actions, in the fixed channel order of one-hot encodings and Q-volumes.
enum class Action : std::uint8_t { Stay = 0, Up = 1, Down = 2, Left = 3, Right = 4 };

inline constexpr int kNumActions = 5;

/// h x w grid of action indices (values 0..4).
using ActionMatrix = Grid<std::uint8_t>;

struct Displacement {
    int di = 0;
    int dj = 0;
    bool operator==(const Displacement&) const = default;
};

/// Row index grows downward, so Up is a negative row displacement.
inline constexpr Displacement displacement(Action a, int k) {
    switch (a) {
        case Action::Up: return {-k, 0};
        case Action::Down: return {k, 0};
        case Action::Left: return {0, -k};
        case Action::Right: return {0, k};
        default: return {0, 0};
    }
}

inline constexpr Displacement displacement(std::uint8_t a, int k) {
    return displacement(static_cast<Action>(a), k);
}

inline const char* action_name(Action a) {
    static constexpr std::array<const char*, kNumActions> names = {"stay", "up", "down", "left", "right"};
    return names[static_cast<int>(a)];
}

/// Expands an action matrix into an h x w x 5 one-hot tensor.
template <typename T>
Tensor3<T> one_hot(const ActionMatrix& a) {
    Tensor3<T> out(a.height(), a.width(), kNumActions);
    for (int i = 0; i < a.height(); ++i)
        for (int j = 0; j < a.width(); ++j) {
            const int idx = a(i, j);
            if (idx >= kNumActions) throw std::invalid_argument("one_hot: action index out of range");
            out(i, j, idx) = T(1);
        }
    return out;
}

/// Inverse of one_hot; throws unless every fiber has exactly one entry equal to 1
/// and zeros elsewhere.
template <typename T>
ActionMatrix from_one_hot(const Tensor3<T>& oh) {
    if (oh.channels() != kNumActions) throw ShapeError("from_one_hot: expected 5 channels");
    ActionMatrix a(oh.height(), oh.width());
    for (int i = 0; i < oh.height(); ++i)
        for (int j = 0; j < oh.width(); ++j) {
            int hot = -1;
            for (int c = 0; c < kNumActions; ++c) {
                const T v = oh(i, j, c);
                if (v == T(1)) {
                    if (hot >= 0) throw std::invalid_argument("from_one_hot: fiber with two hot entries");
                    hot = c;
                } else if (v != T(0)) {
                    throw std::invalid_argument("from_one_hot: entry not in {0,1}");
                }
            }
            if (hot < 0) throw std::invalid_argument("from_one_hot: fiber with no hot entry");
            a(i, j) = static_cast<std::uint8_t>(hot);
        }
    return a;
}

}  // namespace dcl
