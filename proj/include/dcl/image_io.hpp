#pragma once

// Binary portable pixmap/graymap (P6/P5, 8-bit) I/O, plus min/max-scaled
// graymaps for real-valued maps with a JSON sidecar recording the scale.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcl/tensor.hpp"

namespace dcl {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline int read_header_int(std::istream& in, const std::string& path) {
    // Skip whitespace and '#' comments between header tokens.
    for (;;) {
        int ch = in.peek();
        if (ch == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(ch)) {
            in.get();
        } else {
            break;
        }
    }
    int v = -1;
    if (!(in >> v) || v < 0) throw IoError(path + ": malformed header");
    return v;
}

struct RawRaster {
    int width = 0, height = 0, channels = 0;
    std::vector<std::uint8_t> bytes;
};

inline RawRaster read_raster(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string() + ": cannot open");
    char magic[2] = {0, 0};
    in.read(magic, 2);
    RawRaster r;
    if (magic[0] == 'P' && magic[1] == '6') {
        r.channels = 3;
    } else if (magic[0] == 'P' && magic[1] == '5') {
        r.channels = 1;
    } else {
        throw IoError(path.string() + ": not a binary PPM/PGM file");
    }
    r.width = read_header_int(in, path.string());
    r.height = read_header_int(in, path.string());
    const int maxval = read_header_int(in, path.string());
    if (maxval != 255) throw IoError(path.string() + ": only 8-bit rasters (maxval 255) are supported");
    if (r.width == 0 || r.height == 0) throw IoError(path.string() + ": empty raster");
    in.get();  // single whitespace after maxval
    r.bytes.resize(static_cast<std::size_t>(r.width) * r.height * r.channels);
    in.read(reinterpret_cast<char*>(r.bytes.data()), static_cast<std::streamsize>(r.bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(r.bytes.size()))
        throw IoError(path.string() + ": truncated pixel data");
    return r;
}

inline void write_raster(const std::filesystem::path& path, int width, int height, int channels,
                         const std::vector<std::uint8_t>& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << (channels == 3 ? "P6" : "P5") << '\n' << width << ' ' << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(path.string() + ": write failed");
}

inline std::uint8_t quantize(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace detail

/// Reads an 8-bit P6 file as an h x w x 3 image with values v/255.
inline Image load_frame(const std::filesystem::path& path) {
    detail::RawRaster r = detail::read_raster(path);
    if (r.channels != 3) throw IoError(path.string() + ": expected a P6 (RGB) frame");
    Image img(r.height, r.width, 3);
    for (std::size_t n = 0; n < r.bytes.size(); ++n) img.storage()[n] = float(r.bytes[n]) / 255.0f;
    return img;
}

/// Writes an image (values clamped to [0,1]) as 8-bit P6.
template <typename T>
void save_frame(const std::filesystem::path& path, const Tensor3<T>& img) {
    if (img.channels() != 3) throw ShapeError("save_frame: image must have 3 channels");
    std::vector<std::uint8_t> bytes(img.size());
    for (std::size_t n = 0; n < bytes.size(); ++n) bytes[n] = detail::quantize(double(img.storage()[n]));
    detail::write_raster(path, img.width(), img.height(), 3, bytes);
}

/// Binary mask from a P5 file: nonzero = positive.
inline Mask load_mask(const std::filesystem::path& path) {
    detail::RawRaster r = detail::read_raster(path);
    if (r.channels != 1) throw IoError(path.string() + ": expected a P5 (graymap) mask");
    Mask m(r.height, r.width);
    for (std::size_t n = 0; n < r.bytes.size(); ++n) m.storage()[n] = r.bytes[n] ? 1 : 0;
    return m;
}

inline void save_mask(const std::filesystem::path& path, const Mask& m) {
    std::vector<std::uint8_t> bytes(m.size());
    for (std::size_t n = 0; n < bytes.size(); ++n) bytes[n] = m.storage()[n] ? 255 : 0;
    detail::write_raster(path, m.width(), m.height(), 1, bytes);
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& pgm) {
    std::filesystem::path p = pgm;
    p += ".json";
    return p;
}

/// Writes a real-valued map as an 8-bit graymap scaled from [min, max] to [0, 255],
/// and the scale to `<path>.json`.
template <typename T>
void save_scaled_map(const std::filesystem::path& path, const Grid<T>& map) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const T& v : map.storage()) {
        lo = std::min(lo, double(v));
        hi = std::max(hi, double(v));
    }
    if (map.size() == 0) lo = hi = 0;
    const double span = hi > lo ? hi - lo : 1.0;
    std::vector<std::uint8_t> bytes(map.size());
    for (std::size_t n = 0; n < bytes.size(); ++n) bytes[n] = detail::quantize((double(map.storage()[n]) - lo) / span);
    detail::write_raster(path, map.width(), map.height(), 1, bytes);
    nlohmann::json meta = {{"min", lo}, {"max", hi}, {"height", map.height()}, {"width", map.width()}};
    std::ofstream out(sidecar_path(path));
    if (!out) throw IoError(sidecar_path(path).string() + ": cannot open for writing");
    out << meta.dump(2) << '\n';
}

/// Inverse of save_scaled_map, exact up to the 8-bit quantization step (max-min)/255.
inline Map load_scaled_map(const std::filesystem::path& path) {
    detail::RawRaster r = detail::read_raster(path);
    if (r.channels != 1) throw IoError(path.string() + ": expected a P5 graymap");
    std::ifstream in(sidecar_path(path));
    if (!in) throw IoError(sidecar_path(path).string() + ": missing scale sidecar");
    const nlohmann::json meta = nlohmann::json::parse(in);
    const double lo = meta.at("min").get<double>(), hi = meta.at("max").get<double>();
    Map m(r.height, r.width);
    for (std::size_t n = 0; n < r.bytes.size(); ++n)
        m.storage()[n] = static_cast<float>(lo + (hi - lo) * double(r.bytes[n]) / 255.0);
    return m;
}

}  // namespace dcl
