#pragma once

// The four pipeline commands behind the CLI. Each takes a fully resolved
// RunConfig and writes its artifacts under an output directory.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcl/acdqn.hpp"
#include "dcl/checkpoint.hpp"
#include "dcl/config.hpp"
#include "dcl/eval.hpp"
#include "dcl/image_io.hpp"
#include "dcl/ingest.hpp"
#include "dcl/loop.hpp"
#include "dcl/synthgen.hpp"

namespace dcl {

namespace fs = std::filesystem;

inline void write_effective_config(const fs::path& path, const RunConfig& rc) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    for (const auto& [k, v] : rc.values()) out << k << " = " << v << '\n';
}

/// Synthetic corpus: frames, motion masks and manifest under `out`.
inline Manifest cmd_synth(const RunConfig& rc, const fs::path& out) {
    return write_synth_corpus(out, synth_config(rc), root_seed(rc), ingest_config(rc));
}

/// Shot segmentation over frame directories, in the given (chronological) order.
inline Manifest cmd_ingest(const std::vector<fs::path>& sources, const RunConfig& rc, const fs::path& out) {
    if (sources.empty()) throw std::invalid_argument("ingest: no source directories given");
    const IngestConfig cfg = ingest_config(rc);
    const auto exclusions = ingest_exclusions(rc);
    const bool write_frames = rc.boolean("ingest.write_frames");
    for (const auto& e : exclusions)
        if (e.source >= sources.size())
            throw ConfigError("ingest.exclude: source " + std::to_string(e.source) + " does not exist");

    Manifest m;
    m.config = cfg;
    m.base_dir = out;
    fs::create_directories(out);
    int shot_id = 0;
    for (std::size_t s = 0; s < sources.size(); ++s) {
        const auto files = list_frame_files(sources[s]);
        if (files.empty()) throw IoError(sources[s].string() + ": no frame_%06d.ppm files");
        const auto keep = downsample_indices(files.size(), cfg.src_fps, cfg.dst_fps);

        std::vector<Image> frames;
        std::vector<bool> excluded;
        for (std::size_t k : keep) {
            frames.push_back(resize_bilinear(load_frame(files[k]), cfg.frame_height, cfg.frame_width));
            bool ex = false;
            for (const auto& e : exclusions) ex |= e.source == s && k >= e.first && k <= e.last;
            excluded.push_back(ex);
        }
        const std::string sid = "src_" + std::to_string(s);
        m.sources.push_back({sid, manifest_relative(sources[s], out), files.size()});

        // Masks next to the frames (mask_%06d.pgm with the frame's number) are carried along.
        auto mask_for = [&](std::size_t k) {
            fs::path p = files[k];
            std::string name = p.filename().string();
            return p.parent_path() / ("mask_" + name.substr(6, 6) + ".pgm");
        };
        for (const ShotRange& r : segment_shots(frames, cfg, excluded)) {
            ManifestShot shot;
            shot.id = shot_id++;
            shot.source = sid;
            bool masks = true;
            for (std::size_t t = r.begin; t < r.end; ++t) masks &= fs::exists(mask_for(keep[t]));
            for (std::size_t t = r.begin; t < r.end; ++t) {
                if (write_frames) {
                    const fs::path f = out / "frames" / sid / frame_file_name(keep[t]);
                    save_frame(f, frames[t]);
                    shot.frames.push_back(manifest_relative(f, out));
                } else {
                    shot.frames.push_back(manifest_relative(files[keep[t]], out));
                }
                if (masks) shot.masks.push_back(manifest_relative(mask_for(keep[t]), out));
            }
            m.shots.push_back(std::move(shot));
        }
    }
    if (m.shots.empty()) throw std::runtime_error("ingest: no shot satisfies the length bounds");
    write_manifest(out / "manifest.json", m);
    return m;
}

/// Runs the curiosity loop over a manifest; checkpoints, metrics and the
/// effective configuration land in `out`.
inline LoopResult cmd_train(const fs::path& manifest_path, const RunConfig& rc, const fs::path& out,
                            const std::optional<fs::path>& resume = std::nullopt) {
    const Manifest m = read_manifest(manifest_path);
    const LoopConfig cfg = loop_config(rc);
    LoopOutputs io;
    io.out_dir = out;
    io.checkpoint_every = rc.unsigned_integer("train.checkpoint_every");
    io.keep_records = false;
    write_effective_config(out / "config.txt", rc);
    CuriosityLoop loop(cfg, io);
    if (resume) loop.resume_from(*resume);
    return loop.run(ShotList::from_manifest(m));
}

struct EvalSummary {
    std::size_t frames = 0;
    std::optional<double> auc;
    double mask_threshold = 0;
    std::optional<RocPoint> best;
    std::size_t boxes = 0;
};

namespace detail {

inline fs::path resolve_checkpoint(const fs::path& p) {
    if (fs::is_directory(p)) return p / "acdqn.ckpt";
    return p;
}

struct EvalInput {
    std::vector<fs::path> frames;
    std::vector<fs::path> masks;  // empty or one per frame
    int height = 0, width = 0;    // model resolution (0: keep frame size)
};

inline EvalInput eval_input(const fs::path& frames, const std::optional<fs::path>& masks, const RunConfig& rc) {
    EvalInput in;
    if (fs::is_regular_file(frames)) {
        const Manifest m = read_manifest(frames);
        in.height = m.config.frame_height;
        in.width = m.config.frame_width;
        bool all_masks = true;
        for (const auto& s : m.shots) {
            for (const auto& f : s.frames) in.frames.push_back(m.resolve(f));
            all_masks &= s.masks.size() == s.frames.size();
            if (!masks && all_masks)
                for (const auto& k : s.masks) in.masks.push_back(m.resolve(k));
        }
        if (!all_masks) in.masks.clear();
    } else {
        in.frames = list_frame_files(frames);
        in.height = int(rc.integer("ingest.frame_height"));
        in.width = int(rc.integer("ingest.frame_width"));
    }
    if (in.frames.empty()) throw IoError(frames.string() + ": no frames to evaluate");
    if (masks) {
        in.masks.clear();
        for (const auto& f : in.frames) {
            const std::string name = f.filename().string();
            const fs::path mp = *masks / ("mask_" + name.substr(name.size() - 10, 6) + ".pgm");
            if (!fs::exists(mp)) throw IoError(mp.string() + ": missing mask for " + name);
            in.masks.push_back(mp);
        }
    }
    return in;
}

inline std::string numbered(const char* stem, std::size_t n, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%06zu.%s", stem, n, ext);
    return buf;
}

}  // namespace detail

/// Value maps, thresholded masks, boxes and flow for every frame; ROC and AUC
/// when ground-truth masks are available.
inline EvalSummary cmd_eval(const fs::path& checkpoint, const fs::path& frames, const std::optional<fs::path>& masks,
                            const RunConfig& rc, const fs::path& out) {
    const EvalConfig ec = eval_config(rc);
    AcdqnConfig acfg;
    acfg.norm_eps = rc.real("train.norm_eps");
    const AcdqnNet<float> net = load_acdqn<float>(detail::resolve_checkpoint(checkpoint), acfg);
    const detail::EvalInput in = detail::eval_input(frames, masks, rc);

    std::vector<Map> values;
    std::vector<Mask> truth;
    EvalSummary sum;
    sum.frames = in.frames.size();
    fs::create_directories(out);
    for (std::size_t n = 0; n < in.frames.size(); ++n) {
        Image img = load_frame(in.frames[n]);
        const int oh = ec.orig_height > 0 ? ec.orig_height : img.height();
        const int ow = ec.orig_width > 0 ? ec.orig_width : img.width();
        if (in.height > 0) img = resize_bilinear(img, in.height, in.width);
        const Tensor3<float> q = net.forward(img);
        Map v = value_image(q);
        save_scaled_map(out / "values" / detail::numbered("value", n, "pgm"), v);
        const BoxResult br = local_maxima_boxes(v, ec.min_dist, ec.box, oh, ow);
        write_boxes_csv(out / "boxes" / detail::numbered("boxes", n, "csv"), br.boxes);
        sum.boxes += br.boxes.size();
        write_flow_csv(out / "flow" / detail::numbered("flow", n, "csv"), flow_field(q, ec.flow_step));
        if (!in.masks.empty()) {
            Mask m = load_mask(in.masks[n]);
            if (!m.same_shape(v))
                throw ShapeError("eval: mask " + in.masks[n].string() + " does not match the model resolution");
            truth.push_back(std::move(m));
        }
        values.push_back(std::move(v));
    }

    const std::vector<double> thresholds =
        ec.range_grid ? value_range_thresholds(values, ec.threshold_count) : ec.thresholds;
    if (!truth.empty()) {
        const RocResult roc = roc_curve(values, truth, thresholds);
        write_roc_csv(out / "roc.csv", roc.points);
        sum.auc = roc.auc;
        sum.best = pick_threshold(roc.points, ec.w_tpr, ec.w_fpr);
    }
    if (ec.mask_threshold) {
        sum.mask_threshold = *ec.mask_threshold;
    } else if (sum.best) {
        sum.mask_threshold = sum.best->threshold;
    } else {
        sum.mask_threshold = 0.5 * (thresholds.front() + thresholds.back());
    }
    for (std::size_t n = 0; n < values.size(); ++n)
        save_mask(out / "masks" / detail::numbered("mask", n, "pgm"), threshold_mask(values[n], sum.mask_threshold));

    nlohmann::json js = {{"frames", sum.frames}, {"mask_threshold", sum.mask_threshold}, {"boxes", sum.boxes},
                         {"auc", nullptr}, {"best", nullptr}};
    if (sum.auc) js["auc"] = *sum.auc;
    if (sum.best)
        js["best"] = {{"threshold", sum.best->threshold}, {"tpr", sum.best->tpr}, {"fpr", sum.best->fpr},
                      {"youden", youden(sum.best->tpr, sum.best->fpr, ec.w_tpr, ec.w_fpr)}};
    std::ofstream sf(out / "summary.json");
    if (!sf) throw IoError((out / "summary.json").string() + ": cannot open for writing");
    sf << js.dump(2) << '\n';
    return sum;
}

}  // namespace dcl
