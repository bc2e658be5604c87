#pragma once

// Corpus construction: frame loading and resizing, frame-rate reduction,
// camera-stable shot segmentation by border pixel turnover, and the JSON
// manifest that lists shots in chronological order.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcl/image_io.hpp"
#include "dcl/reward.hpp"
#include "dcl/tensor.hpp"

namespace dcl {

struct IngestConfig {
    int frame_height = 180;
    int frame_width = 320;
    double src_fps = 5.0;
    double dst_fps = 5.0;
    int border_width = 10;
    double turnover_threshold = 0.25;
    double pixel_threshold = 0.1;  // per-pixel max-channel change that counts as turnover
    int min_shot = 20;
    int max_shot = 32;

    void validate() const {
        if (frame_height < 1 || frame_width < 1) throw std::invalid_argument("ingest: frame size must be positive");
        if (turnover_threshold < 0 || turnover_threshold > 1 || pixel_threshold < 0 || pixel_threshold > 1)
            throw std::invalid_argument("ingest: thresholds must lie in [0,1]");
        if (border_width < 1 || 2 * border_width >= std::min(frame_height, frame_width))
            throw std::invalid_argument("ingest: border width must be below half the smaller frame side");
        if (min_shot < 2 || max_shot < min_shot) throw std::invalid_argument("ingest: invalid shot length bounds");
        if (!(dst_fps > 0) || !(src_fps > 0)) throw std::invalid_argument("ingest: frame rates must be positive");
    }
};

inline void to_json(nlohmann::json& j, const IngestConfig& c) {
    j = {{"frame_height", c.frame_height},   {"frame_width", c.frame_width},
         {"src_fps", c.src_fps},             {"dst_fps", c.dst_fps},
         {"border_width", c.border_width},   {"turnover_threshold", c.turnover_threshold},
         {"pixel_threshold", c.pixel_threshold}, {"min_shot", c.min_shot},
         {"max_shot", c.max_shot}};
}

inline void from_json(const nlohmann::json& j, IngestConfig& c) {
    IngestConfig d;
    c.frame_height = j.value("frame_height", d.frame_height);
    c.frame_width = j.value("frame_width", d.frame_width);
    c.src_fps = j.value("src_fps", d.src_fps);
    c.dst_fps = j.value("dst_fps", d.dst_fps);
    c.border_width = j.value("border_width", d.border_width);
    c.turnover_threshold = j.value("turnover_threshold", d.turnover_threshold);
    c.pixel_threshold = j.value("pixel_threshold", d.pixel_threshold);
    c.min_shot = j.value("min_shot", d.min_shot);
    c.max_shot = j.value("max_shot", d.max_shot);
}

/// Bilinear resize with corner-aligned sampling and edge clamping.
template <typename T>
Tensor3<T> resize_bilinear(const Tensor3<T>& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_bilinear: output size must be positive");
    const int H = img.height(), W = img.width(), C = img.channels();
    if (H == out_h && W == out_w) return img;
    Tensor3<T> out(out_h, out_w, C);
    const double sy = out_h > 1 ? double(H - 1) / double(out_h - 1) : 0.0;
    const double sx = out_w > 1 ? double(W - 1) / double(out_w - 1) : 0.0;
    for (int i = 0; i < out_h; ++i) {
        const double y = i * sy;
        const int y0 = std::min(int(std::floor(y)), H - 1), y1 = std::min(y0 + 1, H - 1);
        const double fy = y - y0;
        for (int j = 0; j < out_w; ++j) {
            const double x = j * sx;
            const int x0 = std::min(int(std::floor(x)), W - 1), x1 = std::min(x0 + 1, W - 1);
            const double fx = x - x0;
            for (int c = 0; c < C; ++c) {
                const double top = (1 - fx) * double(img(y0, x0, c)) + fx * double(img(y0, x1, c));
                const double bot = (1 - fx) * double(img(y1, x0, c)) + fx * double(img(y1, x1, c));
                out(i, j, c) = static_cast<T>((1 - fy) * top + fy * bot);
            }
        }
    }
    return out;
}

/// Indices kept when reducing `count` frames from src_fps to dst_fps: floor(n * src / dst).
inline std::vector<std::size_t> downsample_indices(std::size_t count, double src_fps, double dst_fps) {
    if (!(dst_fps > 0)) throw std::invalid_argument("downsample_fps: destination rate must be positive");
    if (dst_fps > src_fps) throw std::invalid_argument("downsample_fps: destination rate exceeds source rate");
    std::vector<std::size_t> idx;
    const double ratio = src_fps / dst_fps;
    for (std::size_t n = 0;; ++n) {
        // The small bias keeps exact integer ratios (e.g. 25/5) from rounding down.
        const auto k = static_cast<std::size_t>(std::floor(double(n) * ratio + 1e-9));
        if (k >= count) break;
        idx.push_back(k);
    }
    return idx;
}

template <typename Frame>
std::vector<Frame> downsample_fps(const std::vector<Frame>& frames, double src_fps, double dst_fps) {
    std::vector<Frame> out;
    for (std::size_t k : downsample_indices(frames.size(), src_fps, dst_fps)) out.push_back(frames[k]);
    return out;
}

/// Fraction of border pixels (within `width` of any edge) whose max-channel value
/// changes by more than `pixel_threshold` between the two frames.
template <typename T>
double border_turnover(const Tensor3<T>& a, const Tensor3<T>& b, int width, double pixel_threshold) {
    if (!a.same_shape(b)) throw ShapeError("border_turnover: " + shape_str(a) + " vs " + shape_str(b));
    const int H = a.height(), W = a.width();
    const Grid<T> ma = max_channel(a), mb = max_channel(b);
    std::size_t border = 0, turned = 0;
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
            const bool on_border = i < width || j < width || i >= H - width || j >= W - width;
            if (!on_border) continue;
            ++border;
            if (std::abs(double(ma(i, j)) - double(mb(i, j))) > pixel_threshold) ++turned;
        }
    return border ? double(turned) / double(border) : 0.0;
}

/// Half-open frame range [begin, end) within one source.
struct ShotRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
    bool operator==(const ShotRange&) const = default;
};

/// Splits `count` frames into shots. cut_after[t] marks a cut between frames t
/// and t+1; excluded frames are dropped and also split runs. Runs longer than
/// max_shot are chunked; runs or remainders shorter than min_shot are discarded.
inline std::vector<ShotRange> segment_runs(std::size_t count, const std::vector<bool>& cut_after,
                                           const IngestConfig& cfg, const std::vector<bool>& excluded = {}) {
    std::vector<ShotRange> shots;
    auto flush = [&](std::size_t b, std::size_t e) {
        for (std::size_t s = b; s < e && e - s >= std::size_t(cfg.min_shot); s += cfg.max_shot)
            shots.push_back({s, std::min(e, s + std::size_t(cfg.max_shot))});
    };
    auto is_excluded = [&](std::size_t t) { return t < excluded.size() && excluded[t]; };
    std::size_t start = 0;
    bool open = false;
    for (std::size_t t = 0; t < count; ++t) {
        if (is_excluded(t)) {
            if (open) flush(start, t);
            open = false;
            continue;
        }
        if (!open) {
            start = t;
            open = true;
        }
        const bool cut = t + 1 < count && t < cut_after.size() && cut_after[t];
        if (cut) {
            flush(start, t + 1);
            open = false;
        }
    }
    if (open) flush(start, count);
    return shots;
}

/// Cuts wherever border turnover between consecutive frames exceeds the threshold.
template <typename T>
std::vector<ShotRange> segment_shots(const std::vector<Tensor3<T>>& frames, const IngestConfig& cfg,
                                     const std::vector<bool>& excluded = {}) {
    std::vector<bool> cuts(frames.size() > 0 ? frames.size() - 1 : 0, false);
    for (std::size_t t = 0; t + 1 < frames.size(); ++t)
        cuts[t] = border_turnover(frames[t], frames[t + 1], cfg.border_width, cfg.pixel_threshold) >
                  cfg.turnover_threshold;
    return segment_runs(frames.size(), cuts, cfg, excluded);
}

/// Sorted `frame_%06d.ppm` files of a directory.
inline std::vector<std::filesystem::path> list_frame_files(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError(dir.string() + ": not a directory");
    static const std::regex pattern(R"(frame_\d{6}\.ppm)");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && std::regex_match(e.path().filename().string(), pattern)) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    return files;
}

inline std::string frame_file_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%06zu.ppm", index);
    return buf;
}

inline std::string mask_file_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "mask_%06zu.pgm", index);
    return buf;
}

struct ManifestShot {
    int id = 0;
    std::string source;
    std::vector<std::string> frames;  // relative to the manifest directory unless absolute
    std::vector<std::string> masks;   // optional motion masks, one per frame
};

struct ManifestSource {
    std::string id;
    std::string path;
    std::size_t frames = 0;
};

struct Manifest {
    IngestConfig config;
    std::vector<ManifestSource> sources;
    std::vector<ManifestShot> shots;
    std::filesystem::path base_dir;  // directory the manifest was read from / written to

    std::filesystem::path resolve(const std::string& p) const {
        std::filesystem::path q(p);
        return q.is_absolute() ? q : base_dir / q;
    }

    std::size_t frame_count() const {
        std::size_t n = 0;
        for (const auto& s : shots) n += s.frames.size();
        return n;
    }
};

inline nlohmann::json manifest_to_json(const Manifest& m) {
    nlohmann::json j;
    j["format"] = "dcl-manifest";
    j["version"] = 1;
    j["ingest"] = m.config;
    j["sources"] = nlohmann::json::array();
    for (const auto& s : m.sources) j["sources"].push_back({{"id", s.id}, {"path", s.path}, {"frames", s.frames}});
    j["shots"] = nlohmann::json::array();
    for (const auto& s : m.shots) {
        nlohmann::json js = {{"id", s.id}, {"source", s.source}, {"frames", s.frames}};
        if (!s.masks.empty()) js["masks"] = s.masks;
        j["shots"].push_back(js);
    }
    return j;
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "dcl-manifest") throw IoError("manifest: missing or wrong 'format' field");
    Manifest m;
    m.config = j.at("ingest").get<IngestConfig>();
    for (const auto& s : j.at("sources"))
        m.sources.push_back({s.at("id").get<std::string>(), s.at("path").get<std::string>(),
                             s.at("frames").get<std::size_t>()});
    for (const auto& s : j.at("shots")) {
        ManifestShot shot;
        shot.id = s.at("id").get<int>();
        shot.source = s.at("source").get<std::string>();
        shot.frames = s.at("frames").get<std::vector<std::string>>();
        if (s.contains("masks")) shot.masks = s.at("masks").get<std::vector<std::string>>();
        m.shots.push_back(std::move(shot));
    }
    return m;
}

inline void write_manifest(const std::filesystem::path& path, Manifest& m) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << manifest_to_json(m).dump(2) << '\n';
    m.base_dir = path.parent_path();
}

inline Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string() + ": cannot open manifest");
    Manifest m;
    try {
        m = manifest_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path.string() + ": invalid manifest: " + e.what());
    }
    m.base_dir = path.parent_path();
    return m;
}

/// Path of `p` relative to `base` when `p` lies under it, else absolute.
inline std::string manifest_relative(const std::filesystem::path& p, const std::filesystem::path& base) {
    namespace fs = std::filesystem;
    const fs::path ap = fs::absolute(p).lexically_normal();
    const fs::path ab = fs::absolute(base.empty() ? fs::path(".") : base).lexically_normal();
    const fs::path rel = ap.lexically_relative(ab);
    if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
    return ap.generic_string();
}

/// Loads a shot's frames at the manifest's model resolution.
inline std::vector<Image> load_shot_frames(const Manifest& m, const ManifestShot& shot) {
    std::vector<Image> frames;
    frames.reserve(shot.frames.size());
    for (const auto& f : shot.frames)
        frames.push_back(resize_bilinear(load_frame(m.resolve(f)), m.config.frame_height, m.config.frame_width));
    return frames;
}

}  // namespace dcl
