#pragma once

// Evaluation: value-map thresholding, IOU, pixel-level ROC/AUC, Youden
// threshold selection, peak boxes, the action flow field, and the
// inside-vs-outside change statistics with a signed-rank test.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dcl/action.hpp"
#include "dcl/image_io.hpp"
#include "dcl/reward.hpp"
#include "dcl/tensor.hpp"

namespace dcl {

template <typename T>
Mask threshold_mask(const Grid<T>& v, double t) {
    Mask m(v.height(), v.width());
    for (std::size_t k = 0; k < v.size(); ++k) m.storage()[k] = double(v.storage()[k]) >= t ? 1 : 0;
    return m;
}

/// |a and b| / |a or b|; 1 when both masks are empty.
inline double iou(const Mask& a, const Mask& b) {
    if (!a.same_shape(b)) throw ShapeError("iou: mask shapes differ");
    std::size_t inter = 0, uni = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const bool x = a.storage()[k] != 0, y = b.storage()[k] != 0;
        inter += x && y;
        uni += x || y;
    }
    return uni == 0 ? 1.0 : double(inter) / double(uni);
}

struct RocPoint {
    double threshold = 0;
    double tpr = 0;
    double fpr = 0;
    bool operator==(const RocPoint&) const = default;
};

struct RocResult {
    std::vector<RocPoint> points;  // ascending threshold
    double auc = 0;
};

/// n evenly spaced thresholds over [lo, hi].
inline std::vector<double> linspace(double lo, double hi, int n) {
    if (n < 1) throw std::invalid_argument("linspace: need at least one point");
    std::vector<double> v(n);
    for (int k = 0; k < n; ++k) v[k] = n == 1 ? lo : lo + (hi - lo) * double(k) / double(n - 1);
    return v;
}

/// Trapezoid area under (fpr, tpr) points, closed with (0,0) and (1,1).
inline double trapezoid_auc(std::vector<RocPoint> pts) {
    pts.push_back({std::numeric_limits<double>::infinity(), 0, 0});
    pts.push_back({-std::numeric_limits<double>::infinity(), 1, 1});
    std::sort(pts.begin(), pts.end(), [](const RocPoint& a, const RocPoint& b) {
        return a.fpr != b.fpr ? a.fpr < b.fpr : a.tpr < b.tpr;
    });
    double auc = 0;
    for (std::size_t k = 1; k < pts.size(); ++k)
        auc += (pts[k].fpr - pts[k - 1].fpr) * 0.5 * (pts[k].tpr + pts[k - 1].tpr);
    return auc;
}

/// Pixel-level ROC pooled over all frames: a pixel is predicted positive at
/// threshold t when V >= t.
template <typename T>
RocResult roc_curve(const std::vector<Grid<T>>& values, const std::vector<Mask>& truth,
                    const std::vector<double>& thresholds) {
    if (values.size() != truth.size()) throw ShapeError("roc_curve: value and truth lists differ in length");
    std::vector<double> pos, neg;
    for (std::size_t f = 0; f < values.size(); ++f) {
        if (!values[f].same_shape(truth[f])) throw ShapeError("roc_curve: value/truth shape mismatch");
        for (std::size_t k = 0; k < values[f].size(); ++k)
            (truth[f].storage()[k] ? pos : neg).push_back(double(values[f].storage()[k]));
    }
    if (pos.empty()) throw std::invalid_argument("roc_curve: ground truth has no positive pixels");
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());
    auto at_least = [](const std::vector<double>& s, double t) {
        return double(s.end() - std::lower_bound(s.begin(), s.end(), t));
    };
    RocResult r;
    std::vector<double> ts = thresholds;
    std::sort(ts.begin(), ts.end());
    for (double t : ts)
        r.points.push_back({t, at_least(pos, t) / double(pos.size()), neg.empty() ? 0.0 : at_least(neg, t) / double(neg.size())});
    r.auc = trapezoid_auc(r.points);
    return r;
}

/// `n` thresholds spanning the observed value range, for curves that do not
/// depend on a fixed grid.
template <typename T>
std::vector<double> value_range_thresholds(const std::vector<Grid<T>>& values, int n) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& g : values)
        for (const T& v : g.storage()) {
            lo = std::min(lo, double(v));
            hi = std::max(hi, double(v));
        }
    if (!(lo <= hi)) return {0.0};
    return linspace(lo, hi, n);
}

inline double youden(double tpr, double fpr, double w_tpr = 1.0, double w_fpr = 1.0) {
    return w_tpr * tpr - w_fpr * fpr;
}

/// Point maximizing the weighted Youden index; ties go to the lower threshold.
inline RocPoint pick_threshold(const std::vector<RocPoint>& pts, double w_tpr = 1.0, double w_fpr = 1.0) {
    if (pts.empty()) throw std::invalid_argument("pick_threshold: no ROC points");
    const RocPoint* best = &pts.front();
    for (const RocPoint& p : pts) {
        const double jp = youden(p.tpr, p.fpr, w_tpr, w_fpr), jb = youden(best->tpr, best->fpr, w_tpr, w_fpr);
        if (jp > jb || (jp == jb && p.threshold < best->threshold)) best = &p;
    }
    return *best;
}

struct Peak {
    int i = 0, j = 0;
    double value = 0;
    bool operator==(const Peak&) const = default;
};

/// Local maxima over 8-neighbourhoods. A plateau of equal values that has no
/// strictly greater neighbour contributes only its lexicographically first pixel.
template <typename T>
std::vector<Peak> local_maxima(const Grid<T>& v) {
    const int H = v.height(), W = v.width();
    std::vector<int> label(v.size(), -1);
    std::vector<Peak> peaks;
    std::vector<std::pair<int, int>> stack;
    int next_id = 0;
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
            if (label[std::size_t(i) * W + j] >= 0) continue;
            // Flood the 8-connected equal-valued plateau through (i, j); scan
            // order guarantees (i, j) is its lexicographically first pixel.
            const T val = v(i, j);
            const int id = next_id++;
            bool is_max = true;
            stack.assign(1, {i, j});
            label[std::size_t(i) * W + j] = id;
            while (!stack.empty()) {
                const auto [a, b] = stack.back();
                stack.pop_back();
                for (int da = -1; da <= 1; ++da)
                    for (int db = -1; db <= 1; ++db) {
                        const int y = a + da, x = b + db;
                        if ((da == 0 && db == 0) || y < 0 || x < 0 || y >= H || x >= W) continue;
                        const T nv = v(y, x);
                        if (nv > val) is_max = false;
                        if (nv == val && label[std::size_t(y) * W + x] < 0) {
                            label[std::size_t(y) * W + x] = id;
                            stack.push_back({y, x});
                        }
                    }
            }
            if (is_max) peaks.push_back({i, j, double(val)});
        }
    return peaks;
}

/// Greedy suppression in descending value (ties by scan order): a peak is kept
/// when its Chebyshev distance to every kept peak exceeds min_dist.
inline std::vector<Peak> suppress_peaks(std::vector<Peak> peaks, int min_dist) {
    std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.value > b.value; });
    std::vector<Peak> kept;
    for (const Peak& p : peaks) {
        bool ok = true;
        for (const Peak& q : kept)
            if (std::max(std::abs(p.i - q.i), std::abs(p.j - q.j)) <= min_dist) {
                ok = false;
                break;
            }
        if (ok) kept.push_back(p);
    }
    return kept;
}

/// Axis-aligned box in pixel coordinates: rows cy +- (h-1)/2, cols cx +- (w-1)/2.
struct BoundingBox {
    double cy = 0, cx = 0, h = 0, w = 0;
    bool operator==(const BoundingBox&) const = default;
};

/// Box of size `box` around a model-resolution peak, rescaled to the original
/// resolution (center scaled and rounded) and clipped to the frame.
inline BoundingBox scaled_box(const Peak& p, int box, int model_h, int model_w, int orig_h, int orig_w) {
    const double sy = double(orig_h) / model_h, sx = double(orig_w) / model_w;
    const double cy = std::round(p.i * sy), cx = std::round(p.j * sx);
    const double hh = std::round(box * sy), ww = std::round(box * sx);
    const double r0 = std::max(0.0, cy - (hh - 1) / 2), r1 = std::min(double(orig_h - 1), cy + (hh - 1) / 2);
    const double c0 = std::max(0.0, cx - (ww - 1) / 2), c1 = std::min(double(orig_w - 1), cx + (ww - 1) / 2);
    return {(r0 + r1) / 2, (c0 + c1) / 2, r1 - r0 + 1, c1 - c0 + 1};
}

struct BoxResult {
    std::vector<Peak> peaks;  // model coordinates, acceptance order
    std::vector<BoundingBox> boxes;
};

template <typename T>
BoxResult local_maxima_boxes(const Grid<T>& v, int min_dist = 22, int box = 45, int orig_h = 0, int orig_w = 0) {
    if (orig_h <= 0) orig_h = v.height();
    if (orig_w <= 0) orig_w = v.width();
    BoxResult r;
    r.peaks = suppress_peaks(local_maxima(v), min_dist);
    for (const Peak& p : r.peaks) r.boxes.push_back(scaled_box(p, box, v.height(), v.width(), orig_h, orig_w));
    return r;
}

using FlowField = Grid<Displacement>;

/// Displacement of the greedy action at every pixel.
template <typename T>
FlowField flow_field(const Tensor3<T>& q, int k) {
    if (q.channels() != kNumActions) throw ShapeError("flow_field: Q must have " + std::to_string(kNumActions) + " channels");
    FlowField f(q.height(), q.width());
    for (int i = 0; i < q.height(); ++i)
        for (int j = 0; j < q.width(); ++j) {
            const T* p = q.pixel(i, j);
            const int a = int(std::max_element(p, p + kNumActions) - p);
            f(i, j) = displacement(static_cast<Action>(a), k);
        }
    return f;
}

struct ChangeStats {
    double mean_in = 0;
    double mean_out = 0;
};

/// Mean squared max-channel difference of a frame pair inside vs outside a region.
template <typename T>
ChangeStats change_concentration(const Tensor3<T>& a, const Tensor3<T>& b, const Mask& region) {
    const Grid<T> d = max_channel_sq_diff(a, b);
    if (!d.same_shape(region)) throw ShapeError("change_concentration: region mask shape mismatch");
    double si = 0, so = 0;
    std::size_t ni = 0, no = 0;
    for (std::size_t k = 0; k < d.size(); ++k) {
        if (region.storage()[k]) {
            si += double(d.storage()[k]);
            ++ni;
        } else {
            so += double(d.storage()[k]);
            ++no;
        }
    }
    return {ni ? si / double(ni) : 0.0, no ? so / double(no) : 0.0};
}

/// Consecutive pairs (t, t+1) of a frame sequence against regions[t].
template <typename T>
std::vector<ChangeStats> change_concentration(const std::vector<Tensor3<T>>& frames, const std::vector<Mask>& regions) {
    if (frames.size() < 2) return {};
    if (regions.size() + 1 < frames.size()) throw ShapeError("change_concentration: one region mask per frame pair is required");
    std::vector<ChangeStats> out;
    for (std::size_t t = 0; t + 1 < frames.size(); ++t)
        out.push_back(change_concentration(frames[t], frames[t + 1], regions[t]));
    return out;
}

struct WilcoxonResult {
    double w_plus = 0;
    double z = 0;
    double p = 1;  // one-sided, H1: differences tend to be positive
    std::size_t n = 0;  // nonzero differences used
};

/// Signed-rank test on differences d (= x - y). Zeros are dropped, tied |d|
/// get midranks, and the normal approximation gives the one-sided p-value.
inline WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& d) {
    if (d.size() < 6) throw std::invalid_argument("wilcoxon_signed_rank: at least 6 pairs are required");
    std::vector<double> nz;
    for (double v : d)
        if (v != 0) nz.push_back(v);
    if (nz.empty()) throw std::invalid_argument("wilcoxon_signed_rank: all differences are zero");
    std::vector<std::size_t> order(nz.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::abs(nz[a]) < std::abs(nz[b]); });
    WilcoxonResult r;
    r.n = nz.size();
    for (std::size_t s = 0; s < order.size();) {
        std::size_t e = s;
        while (e + 1 < order.size() && std::abs(nz[order[e + 1]]) == std::abs(nz[order[s]])) ++e;
        const double rank = 0.5 * double(s + e) + 1.0;
        for (std::size_t k = s; k <= e; ++k)
            if (nz[order[k]] > 0) r.w_plus += rank;
        s = e + 1;
    }
    const double n = double(r.n);
    r.z = (r.w_plus - n * (n + 1) / 4) / std::sqrt(n * (n + 1) * (2 * n + 1) / 24);
    r.p = 0.5 * std::erfc(r.z / std::sqrt(2.0));
    return r;
}

inline WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("wilcoxon_signed_rank: samples differ in length");
    std::vector<double> d(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) d[k] = x[k] - y[k];
    return wilcoxon_signed_rank(d);
}

// Comma-separated exports. Reals are written with 17 significant digits so
// they parse back exactly.

namespace detail {

inline std::ofstream open_csv(const std::filesystem::path& path, const char* header) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out.precision(17);
    out << header << '\n';
    return out;
}

inline std::vector<std::vector<double>> read_csv(const std::filesystem::path& path, const std::string& header,
                                                 std::size_t columns) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string() + ": cannot open");
    std::string line;
    if (!std::getline(in, line) || line != header) throw IoError(path.string() + ": expected header '" + header + "'");
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            std::size_t used = 0;
            double v = 0;
            try {
                v = std::stod(cell, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != cell.size() || cell.empty()) throw IoError(path.string() + ": bad number '" + cell + "'");
            row.push_back(v);
        }
        if (row.size() != columns) throw IoError(path.string() + ": wrong column count in '" + line + "'");
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace detail

inline void write_roc_csv(const std::filesystem::path& path, const std::vector<RocPoint>& pts) {
    auto out = detail::open_csv(path, "threshold,tpr,fpr");
    for (const RocPoint& p : pts) out << p.threshold << ',' << p.tpr << ',' << p.fpr << '\n';
}

inline std::vector<RocPoint> read_roc_csv(const std::filesystem::path& path) {
    std::vector<RocPoint> pts;
    for (const auto& r : detail::read_csv(path, "threshold,tpr,fpr", 3)) pts.push_back({r[0], r[1], r[2]});
    return pts;
}

inline void write_boxes_csv(const std::filesystem::path& path, const std::vector<BoundingBox>& boxes) {
    auto out = detail::open_csv(path, "cx,cy,h,w");
    for (const BoundingBox& b : boxes) out << b.cx << ',' << b.cy << ',' << b.h << ',' << b.w << '\n';
}

inline std::vector<BoundingBox> read_boxes_csv(const std::filesystem::path& path) {
    std::vector<BoundingBox> boxes;
    for (const auto& r : detail::read_csv(path, "cx,cy,h,w", 4)) boxes.push_back({r[1], r[0], r[2], r[3]});
    return boxes;
}

inline void write_flow_csv(const std::filesystem::path& path, const FlowField& f) {
    auto out = detail::open_csv(path, "i,j,di,dj");
    for (int i = 0; i < f.height(); ++i)
        for (int j = 0; j < f.width(); ++j) out << i << ',' << j << ',' << f(i, j).di << ',' << f(i, j).dj << '\n';
}

inline FlowField read_flow_csv(const std::filesystem::path& path) {
    const auto rows = detail::read_csv(path, "i,j,di,dj", 4);
    int H = 0, W = 0;
    for (const auto& r : rows) {
        H = std::max(H, int(r[0]) + 1);
        W = std::max(W, int(r[1]) + 1);
    }
    FlowField f(H, W);
    for (const auto& r : rows) {
        if (r[0] < 0 || r[1] < 0) throw IoError(path.string() + ": negative pixel index");
        f(int(r[0]), int(r[1])) = {int(r[2]), int(r[3])};
    }
    return f;
}

}  // namespace dcl
