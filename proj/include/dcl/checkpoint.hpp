#pragma once

// Binary checkpoints shared by the learner and the AC-DQN.
//
//   "DCLCKPT1"                       magic
//   u32 len, bytes                   kind ("learner", "acdqn", ...)
//   u64                              step counter
//   u32                              layer count
//   per layer: i32 kh, kw, cin, cout, then kh*kw*cin*cout f32 weights
//   u8                               1 if optimizer state follows
//   u32 slots, u64 optimizer steps,  then per layer `slots` arrays of f32
//
// All integers and floats are little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dcl/acdqn.hpp"
#include "dcl/image_io.hpp"
#include "dcl/learner.hpp"
#include "dcl/tensor.hpp"

namespace dcl {

inline constexpr char kCheckpointMagic[8] = {'D', 'C', 'L', 'C', 'K', 'P', 'T', '1'};

struct CheckpointData {
    std::string kind;
    std::uint64_t steps = 0;
    std::vector<Kernel4<float>> layers;
    bool has_optimizer = false;
    std::uint32_t slots = 0;  // arrays of optimizer state per layer (1 for SGD velocity, 2 for Adam m, v)
    std::uint64_t optimizer_steps = 0;
    std::vector<std::vector<float>> state;  // layers.size() * slots arrays, layer-major
};

namespace detail {

class BinWriter {
public:
    explicit BinWriter(std::ostream& out) : out_(out) {}
    void u8(std::uint8_t v) { out_.put(char(v)); }
    void u32(std::uint32_t v) {
        for (int b = 0; b < 4; ++b) out_.put(char((v >> (8 * b)) & 0xFF));
    }
    void u64(std::uint64_t v) {
        for (int b = 0; b < 8; ++b) out_.put(char((v >> (8 * b)) & 0xFF));
    }
    void i32(std::int32_t v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f32s(const std::vector<float>& xs) {
        for (float x : xs) u32(std::bit_cast<std::uint32_t>(x));
    }
    void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), std::streamsize(n)); }

private:
    std::ostream& out_;
};

class BinReader {
public:
    BinReader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}
    std::uint8_t u8() {
        unsigned char c[1];
        read(c, 1);
        return c[0];
    }
    std::uint32_t u32() {
        unsigned char c[4];
        read(c, 4);
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b) v |= std::uint32_t(c[b]) << (8 * b);
        return v;
    }
    std::uint64_t u64() {
        unsigned char c[8];
        read(c, 8);
        std::uint64_t v = 0;
        for (int b = 0; b < 8; ++b) v |= std::uint64_t(c[b]) << (8 * b);
        return v;
    }
    std::int32_t i32() { return std::bit_cast<std::int32_t>(u32()); }
    void f32s(std::vector<float>& xs) {
        for (float& x : xs) x = std::bit_cast<float>(u32());
    }
    void read(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), std::streamsize(n));
        if (in_.gcount() != std::streamsize(n)) throw IoError(name_ + ": truncated checkpoint");
    }

private:
    std::istream& in_;
    std::string name_;
};

}  // namespace detail

inline void write_checkpoint(const std::filesystem::path& path, const CheckpointData& c) {
    if (c.has_optimizer && c.state.size() != c.layers.size() * c.slots)
        throw std::invalid_argument("write_checkpoint: optimizer state does not match layers x slots");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    // Write to a temporary and rename so a crash never leaves a half-written checkpoint.
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError(tmp.string() + ": cannot open for writing");
        detail::BinWriter w(out);
        w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
        w.u32(std::uint32_t(c.kind.size()));
        w.bytes(c.kind.data(), c.kind.size());
        w.u64(c.steps);
        w.u32(std::uint32_t(c.layers.size()));
        for (const auto& K : c.layers) {
            w.i32(K.kh());
            w.i32(K.kw());
            w.i32(K.cin());
            w.i32(K.cout());
            w.f32s(K.storage());
        }
        w.u8(c.has_optimizer ? 1 : 0);
        if (c.has_optimizer) {
            w.u32(c.slots);
            w.u64(c.optimizer_steps);
            for (std::size_t s = 0; s < c.state.size(); ++s) {
                if (c.state[s].size() != c.layers[s / c.slots].size())
                    throw std::invalid_argument("write_checkpoint: optimizer array size mismatch");
                w.f32s(c.state[s]);
            }
        }
        if (!out) throw IoError(tmp.string() + ": write failed");
    }
    std::filesystem::rename(tmp, path);
}

inline CheckpointData read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string() + ": cannot open checkpoint");
    detail::BinReader r(in, path.string());
    char magic[8];
    r.read(magic, 8);
    if (std::memcmp(magic, kCheckpointMagic, 8) != 0) throw IoError(path.string() + ": not a checkpoint file");
    CheckpointData c;
    const std::uint32_t klen = r.u32();
    if (klen > 256) throw IoError(path.string() + ": corrupt checkpoint kind");
    c.kind.resize(klen);
    r.read(c.kind.data(), klen);
    c.steps = r.u64();
    const std::uint32_t n = r.u32();
    if (n > 1024) throw IoError(path.string() + ": corrupt layer count");
    for (std::uint32_t l = 0; l < n; ++l) {
        const int kh = r.i32(), kw = r.i32(), cin = r.i32(), cout = r.i32();
        if (kh <= 0 || kw <= 0 || cin <= 0 || cout <= 0 || kh % 2 == 0 || kw % 2 == 0 || kh > 99 || kw > 99 ||
            cin > 4096 || cout > 4096)
            throw IoError(path.string() + ": corrupt layer shape");
        Kernel4<float> K(kh, kw, cin, cout);
        r.f32s(K.storage());
        c.layers.push_back(std::move(K));
    }
    c.has_optimizer = r.u8() != 0;
    if (c.has_optimizer) {
        c.slots = r.u32();
        if (c.slots > 8) throw IoError(path.string() + ": corrupt optimizer slot count");
        c.optimizer_steps = r.u64();
        for (std::size_t s = 0; s < c.layers.size() * c.slots; ++s) {
            std::vector<float> a(c.layers[s / c.slots].size());
            r.f32s(a);
            c.state.push_back(std::move(a));
        }
    }
    if (in.peek() != std::char_traits<char>::eof()) throw IoError(path.string() + ": trailing data after checkpoint");
    return c;
}

namespace detail {

template <typename Range>
std::vector<float> to_f32(const Range& v) {
    return std::vector<float>(v.begin(), v.end());
}

template <typename T>
void from_f32(const std::vector<float>& src, std::vector<T>& dst) {
    if (src.size() != dst.size()) throw ShapeError("checkpoint: array size mismatch");
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] = static_cast<T>(src[k]);
}

inline void expect_kind(const CheckpointData& c, const std::string& kind) {
    if (c.kind != kind) throw IoError("checkpoint holds '" + c.kind + "', expected '" + kind + "'");
}

}  // namespace detail

template <typename T>
CheckpointData learner_checkpoint(const Learner<T>& L, bool with_optimizer = true) {
    CheckpointData c;
    c.kind = "learner";
    c.steps = L.steps();
    c.layers.push_back(L.kernel().template cast<float>());
    if (with_optimizer) {
        c.has_optimizer = true;
        c.slots = 1;
        c.optimizer_steps = L.optimizer().steps();
        c.state.push_back(detail::to_f32(L.optimizer().velocity()));
    }
    return c;
}

template <typename T>
void restore_learner(const CheckpointData& c, Learner<T>& L) {
    detail::expect_kind(c, "learner");
    if (c.layers.size() != 1 || !c.layers[0].same_shape(L.kernel().template cast<float>()))
        throw ShapeError("restore_learner: checkpoint layer shape does not match the learner");
    detail::from_f32(c.layers[0].storage(), L.kernel().storage());
    L.set_steps(c.steps);
    if (c.has_optimizer) {
        if (c.slots != 1) throw IoError("restore_learner: expected one optimizer slot");
        detail::from_f32(c.state[0], L.optimizer().velocity_storage());
        L.optimizer().set_steps(c.optimizer_steps);
    }
}

template <typename T>
CheckpointData acdqn_checkpoint(const AcdqnNet<T>& net, bool with_optimizer = true, std::string kind = "acdqn") {
    CheckpointData c;
    c.kind = std::move(kind);
    c.steps = net.steps();
    for (const auto& K : net.layers()) c.layers.push_back(K.template cast<float>());
    if (with_optimizer) {
        c.has_optimizer = true;
        c.slots = 2;
        c.optimizer_steps = net.optimizers().empty() ? 0 : net.optimizers().front().steps();
        for (const auto& a : net.optimizers()) {
            c.state.push_back(detail::to_f32(a.m_storage()));
            c.state.push_back(detail::to_f32(a.v_storage()));
        }
    }
    return c;
}

/// Architecture implied by a checkpoint's layer shapes.
inline AcdqnArch arch_from_checkpoint(const CheckpointData& c) {
    if (c.layers.empty()) throw IoError("checkpoint has no layers");
    AcdqnArch a;
    a.kernel_sizes.clear();
    for (const auto& K : c.layers) {
        if (K.kh() != K.kw()) throw IoError("checkpoint: non-square AC-DQN kernel");
        a.kernel_sizes.push_back(K.kh());
    }
    a.in_channels = c.layers.front().cin();
    a.actions = c.layers.back().cout();
    a.depth = c.layers.size() > 1 ? c.layers.front().cout() : a.actions;
    for (std::size_t l = 0; l < c.layers.size(); ++l)
        if (c.layers[l].cin() != a.layer_in(l) || c.layers[l].cout() != a.layer_out(l))
            throw IoError("checkpoint: inconsistent AC-DQN layer chain");
    return a;
}

template <typename T>
void restore_acdqn(const CheckpointData& c, AcdqnNet<T>& net, const std::string& kind = "acdqn") {
    detail::expect_kind(c, kind);
    if (c.layers.size() != net.layer_count()) throw ShapeError("restore_acdqn: layer count mismatch");
    for (std::size_t l = 0; l < c.layers.size(); ++l) {
        const auto& K = net.layers()[l];
        if (c.layers[l].kh() != K.kh() || c.layers[l].kw() != K.kw() || c.layers[l].cin() != K.cin() ||
            c.layers[l].cout() != K.cout())
            throw ShapeError("restore_acdqn: layer " + std::to_string(l) + " shape mismatch");
        detail::from_f32(c.layers[l].storage(), net.layers()[l].storage());
    }
    net.set_steps(c.steps);
    if (c.has_optimizer) {
        if (c.slots != 2) throw IoError("restore_acdqn: expected two optimizer slots");
        for (std::size_t l = 0; l < net.layer_count(); ++l) {
            detail::from_f32(c.state[2 * l], net.optimizers()[l].m_storage());
            detail::from_f32(c.state[2 * l + 1], net.optimizers()[l].v_storage());
            net.optimizers()[l].set_steps(c.optimizer_steps);
        }
    }
}

/// Builds a network whose architecture comes from the checkpoint itself.
template <typename T>
AcdqnNet<T> load_acdqn(const std::filesystem::path& path, AcdqnConfig cfg = {}, const std::string& kind = "acdqn") {
    const CheckpointData c = read_checkpoint(path);
    cfg.arch = arch_from_checkpoint(c);
    cfg.init_std = 0;
    AcdqnNet<T> net(0, cfg);
    restore_acdqn(c, net, kind);
    return net;
}

}  // namespace dcl
