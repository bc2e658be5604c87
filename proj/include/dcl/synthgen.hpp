#pragma once

// Synthetic stand-in for the sitcom corpus: a frozen low-contrast value-noise
// background with bright discs and rectangles bouncing around, plus exact
// motion masks from the noiseless renders.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "dcl/image_io.hpp"
#include "dcl/ingest.hpp"
#include "dcl/random.hpp"
#include "dcl/tensor.hpp"

namespace dcl {

enum class BlobShape { Disc, Rect };

struct Blob {
    BlobShape shape = BlobShape::Disc;
    double height = 21;  // diameter for discs
    double width = 21;
    std::array<float, 3> color{0.9f, 0.2f, 0.2f};
    double y0 = 0, x0 = 0;  // center at t = 0
    double vy = 0, vx = 0;  // pixels per frame
    bool reflect = true;    // bounce off the frame edges; otherwise wrap around
};

struct SceneConfig {
    int height = 180;
    int width = 320;
    int frames = 64;
    std::vector<Blob> blobs;
    std::uint64_t background_seed = 1;
    double noise_sigma = 0.005;
    int texture_cell = 24;  // value-noise lattice spacing in pixels
    double background_lo = 0.2;
    double background_hi = 0.45;

    void validate() const {
        if (height < 1 || width < 1) throw std::invalid_argument("scene: frame size must be positive");
        if (frames < 20) throw std::invalid_argument("scene: at least 20 frames are required");
        if (noise_sigma < 0) throw std::invalid_argument("scene: noise sigma must be non-negative");
        if (texture_cell < 1) throw std::invalid_argument("scene: texture cell must be positive");
        if (!(background_lo >= 0 && background_lo <= background_hi && background_hi <= 1))
            throw std::invalid_argument("scene: background range must lie in [0,1]");
        for (const Blob& b : blobs)
            if (!(b.height > 0 && b.width > 0)) throw std::invalid_argument("scene: blob size must be positive");
    }
};

struct Scene {
    std::vector<Image> frames;
    std::vector<Mask> motion;   // motion[t]: noiseless renders differ between t and t+1
    std::vector<Mask> regions;  // regions[t]: union of blob supports at t and t+1
};

namespace detail {

inline double reflect_coord(double p, double lo, double hi) {
    const double len = hi - lo;
    if (len <= 0) return 0.5 * (lo + hi);
    double m = std::fmod(p - lo, 2 * len);
    if (m < 0) m += 2 * len;
    if (m > len) m = 2 * len - m;
    return lo + m;
}

inline double wrap_coord(double p, double extent) {
    double m = std::fmod(p, extent);
    return m < 0 ? m + extent : m;
}

}  // namespace detail

/// Blob center at frame t (may be fractional).
inline std::array<double, 2> blob_center(const Blob& b, int t, int H, int W) {
    const double y = b.y0 + b.vy * t, x = b.x0 + b.vx * t;
    if (!b.reflect) return {detail::wrap_coord(y, H), detail::wrap_coord(x, W)};
    return {detail::reflect_coord(y, b.height / 2, H - 1 - b.height / 2),
            detail::reflect_coord(x, b.width / 2, W - 1 - b.width / 2)};
}

/// Pixel-center coverage test for a blob centred at (cy, cx).
inline bool blob_covers(const Blob& b, double cy, double cx, int i, int j) {
    const double dy = i - cy, dx = j - cx;
    if (b.shape == BlobShape::Disc) {
        const double r = b.height / 2;
        return dy * dy + dx * dx <= r * r;
    }
    return std::abs(dy) <= b.height / 2 && std::abs(dx) <= b.width / 2;
}

/// Support mask of one blob at frame t.
inline Mask blob_support(const Blob& b, int t, int H, int W) {
    Mask m(H, W);
    const auto [cy, cx] = blob_center(b, t, H, W);
    const int i0 = std::max(0, int(std::floor(cy - b.height / 2)) - 1);
    const int i1 = std::min(H - 1, int(std::ceil(cy + b.height / 2)) + 1);
    const int j0 = std::max(0, int(std::floor(cx - b.width / 2)) - 1);
    const int j1 = std::min(W - 1, int(std::ceil(cx + b.width / 2)) + 1);
    for (int i = i0; i <= i1; ++i)
        for (int j = j0; j <= j1; ++j)
            if (blob_covers(b, cy, cx, i, j)) m(i, j) = 1;
    return m;
}

/// Smooth value noise: a random lattice per channel, interpolated with smoothstep weights.
inline Image value_noise_background(const SceneConfig& cfg) {
    const int H = cfg.height, W = cfg.width, s = cfg.texture_cell;
    const int gh = H / s + 2, gw = W / s + 2;
    Rng rng(derive_seed(cfg.background_seed, "background"));
    std::vector<double> lattice(static_cast<std::size_t>(gh) * gw * 3);
    for (double& v : lattice) v = cfg.background_lo + (cfg.background_hi - cfg.background_lo) * uniform01(rng);
    auto at = [&](int a, int b, int c) { return lattice[(static_cast<std::size_t>(a) * gw + b) * 3 + c]; };
    auto smooth = [](double f) { return f * f * (3 - 2 * f); };
    Image img(H, W, 3);
    for (int i = 0; i < H; ++i) {
        const int a = i / s;
        const double fy = smooth(double(i % s) / s);
        for (int j = 0; j < W; ++j) {
            const int b = j / s;
            const double fx = smooth(double(j % s) / s);
            for (int c = 0; c < 3; ++c) {
                const double top = (1 - fx) * at(a, b, c) + fx * at(a, b + 1, c);
                const double bot = (1 - fx) * at(a + 1, b, c) + fx * at(a + 1, b + 1, c);
                img(i, j, c) = float((1 - fy) * top + fy * bot);
            }
        }
    }
    return img;
}

/// Noiseless render of frame t; later blobs paint over earlier ones.
inline Image render_clean(const SceneConfig& cfg, const Image& background, int t) {
    Image img = background;
    for (const Blob& b : cfg.blobs) {
        const Mask m = blob_support(b, t, cfg.height, cfg.width);
        for (int i = 0; i < cfg.height; ++i)
            for (int j = 0; j < cfg.width; ++j)
                if (m(i, j))
                    for (int c = 0; c < 3; ++c) img(i, j, c) = b.color[c];
    }
    return img;
}

inline Mask render_difference(const Image& a, const Image& b) {
    Mask m(a.height(), a.width());
    for (int i = 0; i < a.height(); ++i)
        for (int j = 0; j < a.width(); ++j)
            for (int c = 0; c < 3; ++c)
                if (a(i, j, c) != b(i, j, c)) {
                    m(i, j) = 1;
                    break;
                }
    return m;
}

/// Renders the scene. `seed` drives only the per-frame pixel noise; the
/// background is fixed by cfg.background_seed.
inline Scene gen_scene(const SceneConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const Image background = value_noise_background(cfg);
    Rng rng(derive_seed(seed, "scene-noise"));
    std::normal_distribution<double> noise(0.0, 1.0);

    Scene s;
    Image clean = render_clean(cfg, background, 0);
    for (int t = 0; t < cfg.frames; ++t) {
        // t+1 is rendered even for the last frame so every frame gets a mask.
        Image next = render_clean(cfg, background, t + 1);
        Image noisy = clean;
        if (cfg.noise_sigma > 0)
            for (float& v : noisy.storage()) v = float(std::clamp(double(v) + cfg.noise_sigma * noise(rng), 0.0, 1.0));
        s.frames.push_back(std::move(noisy));
        s.motion.push_back(render_difference(clean, next));

        Mask region(cfg.height, cfg.width);
        for (const Blob& b : cfg.blobs) {
            const Mask m0 = blob_support(b, t, cfg.height, cfg.width), m1 = blob_support(b, t + 1, cfg.height, cfg.width);
            for (std::size_t k = 0; k < region.size(); ++k)
                region.storage()[k] |= m0.storage()[k] | m1.storage()[k];
        }
        s.regions.push_back(std::move(region));
        clean = std::move(next);
    }
    return s;
}

/// Parameters for randomly drawn scenes.
struct SynthConfig {
    int height = 180;
    int width = 320;
    int frames = 64;
    int scenes = 1;
    int blobs = 2;
    double diameter = 21;
    double speed_min = 1.0;
    double speed_max = 3.0;
    double rect_fraction = 0.5;  // probability a blob is a rectangle ("hand") rather than a disc ("face")
    double noise_sigma = 0.005;

    void validate() const {
        if (scenes < 1) throw std::invalid_argument("synth: at least one scene is required");
        if (blobs < 0) throw std::invalid_argument("synth: blob count must be non-negative");
        if (!(diameter > 0) || diameter >= std::min(height, width))
            throw std::invalid_argument("synth: blob diameter must be positive and fit inside the frame");
        if (speed_min < 0 || speed_max < speed_min) throw std::invalid_argument("synth: invalid speed range");
        if (rect_fraction < 0 || rect_fraction > 1) throw std::invalid_argument("synth: rect fraction must lie in [0,1]");
    }
};

/// Bright, mutually distinct colours: max channel >= 0.7, background tops out at 0.45.
inline std::array<float, 3> random_blob_color(Rng& rng, const std::vector<std::array<float, 3>>& taken) {
    for (;;) {
        std::array<float, 3> c{};
        for (float& v : c) v = float(0.05 + 0.5 * uniform01(rng));
        c[uniform_index(rng, 3)] = float(0.75 + 0.25 * uniform01(rng));
        bool distinct = true;
        for (const auto& o : taken) {
            double d = 0;
            for (int k = 0; k < 3; ++k) d = std::max(d, std::abs(double(c[k]) - double(o[k])));
            if (d < 0.1) distinct = false;
        }
        if (distinct) return c;
    }
}

inline SceneConfig random_scene_config(const SynthConfig& sc, std::uint64_t seed, std::uint64_t scene_index = 0) {
    sc.validate();
    Rng rng(derive_seed(seed, "scene-config", scene_index));
    SceneConfig cfg;
    cfg.height = sc.height;
    cfg.width = sc.width;
    cfg.frames = sc.frames;
    cfg.noise_sigma = sc.noise_sigma;
    cfg.background_seed = derive_seed(seed, "scene-background", scene_index);
    std::vector<std::array<float, 3>> colors;
    for (int n = 0; n < sc.blobs; ++n) {
        Blob b;
        const bool rect = uniform01(rng) < sc.rect_fraction;
        b.shape = rect ? BlobShape::Rect : BlobShape::Disc;
        b.height = sc.diameter;
        b.width = rect ? std::max(3.0, std::round(sc.diameter * (0.5 + 0.5 * uniform01(rng)))) : sc.diameter;
        b.color = random_blob_color(rng, colors);
        colors.push_back(b.color);
        b.y0 = b.height / 2 + uniform01(rng) * std::max(0.0, sc.height - 1 - b.height);
        b.x0 = b.width / 2 + uniform01(rng) * std::max(0.0, sc.width - 1 - b.width);
        const double speed = sc.speed_min + (sc.speed_max - sc.speed_min) * uniform01(rng);
        const double angle = 2 * M_PI * uniform01(rng);
        b.vy = speed * std::sin(angle);
        b.vx = speed * std::cos(angle);
        cfg.blobs.push_back(b);
    }
    return cfg;
}

/// Writes one scene as an ingest-style frame directory with motion masks.
inline void write_scene_dir(const std::filesystem::path& dir, const Scene& s) {
    std::filesystem::create_directories(dir);
    for (std::size_t t = 0; t < s.frames.size(); ++t) {
        save_frame(dir / frame_file_name(t), s.frames[t]);
        save_mask(dir / mask_file_name(t), s.motion[t]);
    }
}

/// Generates `sc.scenes` random scenes under `out`, segments each into shots and
/// writes `out/manifest.json`. Shots carry their motion-mask paths.
inline Manifest write_synth_corpus(const std::filesystem::path& out, const SynthConfig& sc, std::uint64_t seed,
                                   IngestConfig ingest = {}) {
    ingest.frame_height = sc.height;
    ingest.frame_width = sc.width;
    ingest.src_fps = ingest.dst_fps;
    Manifest m;
    m.config = ingest;
    m.base_dir = out;
    int shot_id = 0;
    for (int n = 0; n < sc.scenes; ++n) {
        const SceneConfig cfg = random_scene_config(sc, seed, std::uint64_t(n));
        const Scene s = gen_scene(cfg, derive_seed(seed, "scene", std::uint64_t(n)));
        char name[32];
        std::snprintf(name, sizeof name, "scene_%04d", n);
        write_scene_dir(out / name, s);
        m.sources.push_back({name, name, s.frames.size()});
        for (const ShotRange& r : segment_shots(s.frames, ingest)) {
            ManifestShot shot;
            shot.id = shot_id++;
            shot.source = name;
            for (std::size_t t = r.begin; t < r.end; ++t) {
                shot.frames.push_back(std::string(name) + "/" + frame_file_name(t));
                shot.masks.push_back(std::string(name) + "/" + mask_file_name(t));
            }
            m.shots.push_back(std::move(shot));
        }
    }
    write_manifest(out / "manifest.json", m);
    return m;
}

}  // namespace dcl
