#pragma once

// Flat `key = value` run configuration. Every key is registered with a default
// and a one-line description; unknown keys are errors.

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcl/acdqn.hpp"
#include "dcl/eval.hpp"
#include "dcl/ingest.hpp"
#include "dcl/loop.hpp"
#include "dcl/synthgen.hpp"

namespace dcl {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ConfigKey {
    std::string name;
    std::string default_value;
    std::string doc;
};

inline const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = {
        {"seed", "0", "root seed; every component derives its own stream from it"},

        {"ingest.frame_height", "180", "model frame height after resizing"},
        {"ingest.frame_width", "320", "model frame width after resizing"},
        {"ingest.src_fps", "5", "frame rate of the extracted frame files"},
        {"ingest.dst_fps", "5", "frame rate fed to the agent"},
        {"ingest.border_width", "10", "width of the border band used for cut detection"},
        {"ingest.turnover_threshold", "0.25", "border turnover fraction above which a cut is declared"},
        {"ingest.pixel_threshold", "0.1", "max-channel change for a border pixel to count as turned over"},
        {"ingest.min_shot", "20", "shortest shot kept, in frames"},
        {"ingest.max_shot", "32", "longest shot; longer stable runs are chunked"},
        {"ingest.exclude", "", "frames to drop, as comma-separated source:first-last ranges (source = position on the command line)"},
        {"ingest.write_frames", "false", "re-emit resized frames next to the manifest"},

        {"synth.height", "180", "synthetic frame height"},
        {"synth.width", "320", "synthetic frame width"},
        {"synth.frames", "64", "frames per synthetic scene"},
        {"synth.scenes", "1", "number of synthetic scenes (sources)"},
        {"synth.blobs", "2", "moving blobs per scene"},
        {"synth.diameter", "21", "blob diameter (rectangle height) in pixels"},
        {"synth.speed_min", "1", "slowest blob speed, pixels per frame"},
        {"synth.speed_max", "3", "fastest blob speed, pixels per frame"},
        {"synth.rect_fraction", "0.5", "probability that a blob is a rectangle instead of a disc"},
        {"synth.noise_sigma", "0.005", "per-pixel gaussian noise"},

        {"train.gamma", "0.9", "discount factor"},
        {"train.epsilon_start", "1.0", "initial exploration rate"},
        {"train.epsilon_end", "0.1", "final exploration rate"},
        {"train.epsilon_anneal", "0.5", "fraction of all steps over which epsilon decays linearly"},
        {"train.learner_lr", "0.01", "learner SGD learning rate"},
        {"train.learner_momentum", "0.9", "learner SGD momentum"},
        {"train.learner_nesterov", "false", "use Nesterov momentum for the learner"},
        {"train.learner_init_mean", "0.0001", "learner truncated-normal init mean"},
        {"train.learner_init_std", "1e-8", "learner truncated-normal init standard deviation"},
        {"train.acdqn_preset", "full", "AC-DQN architecture: full (10 layers, depth 30) or reduced (3 layers, depth 8)"},
        {"train.acdqn_kernels", "", "comma-separated kernel sizes overriding the preset"},
        {"train.acdqn_depth", "0", "hidden channel count overriding the preset (0 keeps it)"},
        {"train.acdqn_lr", "0.001", "AC-DQN Adam learning rate"},
        {"train.acdqn_init_mean", "0.0001", "AC-DQN truncated-normal init mean"},
        {"train.acdqn_init_std", "1e-8", "AC-DQN truncated-normal init standard deviation"},
        {"train.norm_eps", "1e-5", "instance-norm epsilon"},
        {"train.replay_capacity", "4096", "prioritized replay capacity, in transitions"},
        {"train.replay_alpha", "0.6", "priority exponent"},
        {"train.replay_beta", "0.4", "initial importance-sampling exponent"},
        {"train.replay_beta_end", "1.0", "importance-sampling exponent at the end of the run"},
        {"train.batch", "16", "AC-DQN batch size"},
        {"train.sync_period", "200", "AC-DQN train steps between target syncs"},
        {"train.reward_window", "45", "side of the reward averaging window (odd)"},
        {"train.action_step", "1", "pixels moved by a non-stay action (k)"},
        {"train.target_mode", "paper", "bootstrap target: paper (max through the target net) or ddqn"},
        {"train.shifted_target", "false", "read reward and bootstrap at the pixel the action moves to"},
        {"train.batch_source", "replay", "replay (buffer spans shots) or shot (buffer emptied at every shot)"},
        {"train.update_schedule", "frame", "frame (train after every frame pair) or shot (train after every shot)"},
        {"train.train_ratio", "1", "AC-DQN gradient steps per frame pair"},
        {"train.checkpoint_every", "0", "write checkpoints at the first shot boundary after this many steps (0: only at exit)"},

        {"eval.threshold_lo", "-0.1", "lowest ROC threshold"},
        {"eval.threshold_hi", "0.5", "highest ROC threshold"},
        {"eval.threshold_count", "61", "number of evenly spaced ROC thresholds"},
        {"eval.threshold_grid", "fixed", "fixed (threshold_lo..threshold_hi) or range (span the observed values)"},
        {"eval.mask_threshold", "auto", "threshold for the emitted masks: auto (best Youden point, or grid midpoint without ground truth) or a number"},
        {"eval.w_tpr", "1", "Youden weight of the true positive rate"},
        {"eval.w_fpr", "1", "Youden weight of the false positive rate"},
        {"eval.min_dist", "22", "peaks closer than this (Chebyshev) are suppressed"},
        {"eval.box", "45", "box side around each peak, model pixels"},
        {"eval.orig_height", "0", "original frame height for box rescaling (0: model height)"},
        {"eval.orig_width", "0", "original frame width for box rescaling (0: model width)"},
        {"eval.flow_step", "0", "displacement length in the flow export (0: train.action_step)"},
    };
    return keys;
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

class RunConfig {
public:
    RunConfig() {
        for (const auto& k : config_keys()) values_[k.name] = k.default_value;
    }

    static bool known(const std::string& key) {
        const auto& ks = config_keys();
        return std::any_of(ks.begin(), ks.end(), [&](const ConfigKey& k) { return k.name == key; });
    }

    void set(const std::string& key, const std::string& value) {
        if (!known(key)) throw ConfigError("unknown configuration key '" + key + "'");
        values_[key] = value;
    }

    /// Parses `key=value` (as given to --set).
    void set_assignment(const std::string& kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + kv + "'");
        set(detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
    }

    /// Reads a UTF-8 file of `key = value` lines; '#' starts a comment.
    void load_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError(path.string() + ": cannot open configuration file");
        std::string line;
        for (int n = 1; std::getline(in, line); ++n) {
            if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
            line = detail::trim(line);
            if (line.empty()) continue;
            try {
                set_assignment(line);
            } catch (const ConfigError& e) {
                throw ConfigError(path.string() + ":" + std::to_string(n) + ": " + e.what());
            }
        }
    }

    const std::string& str(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
        return it->second;
    }

    double real(const std::string& key) const {
        const std::string& s = str(key);
        double v = 0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError(key + ": '" + s + "' is not a number");
        return v;
    }

    long long integer(const std::string& key) const {
        const std::string& s = str(key);
        long long v = 0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError(key + ": '" + s + "' is not an integer");
        return v;
    }

    std::uint64_t unsigned_integer(const std::string& key) const {
        const long long v = integer(key);
        if (v < 0) throw ConfigError(key + ": must be non-negative");
        return std::uint64_t(v);
    }

    bool boolean(const std::string& key) const {
        const std::string& s = str(key);
        if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
        if (s == "false" || s == "0" || s == "no" || s == "off") return false;
        throw ConfigError(key + ": '" + s + "' is not a boolean");
    }

    std::vector<int> int_list(const std::string& key) const {
        std::vector<int> out;
        std::stringstream ss(str(key));
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = detail::trim(item);
            if (item.empty()) continue;
            int v = 0;
            const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
            if (ec != std::errc() || p != item.data() + item.size()) throw ConfigError(key + ": bad list item '" + item + "'");
            out.push_back(v);
        }
        return out;
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

/// Documented defaults as a config file.
inline std::string config_reference() {
    std::ostringstream out;
    for (const auto& k : config_keys()) out << "# " << k.doc << '\n' << k.name << " = " << k.default_value << "\n\n";
    return out.str();
}

inline std::uint64_t root_seed(const RunConfig& rc) { return rc.unsigned_integer("seed"); }

inline IngestConfig ingest_config(const RunConfig& rc) {
    IngestConfig c;
    c.frame_height = int(rc.integer("ingest.frame_height"));
    c.frame_width = int(rc.integer("ingest.frame_width"));
    c.src_fps = rc.real("ingest.src_fps");
    c.dst_fps = rc.real("ingest.dst_fps");
    c.border_width = int(rc.integer("ingest.border_width"));
    c.turnover_threshold = rc.real("ingest.turnover_threshold");
    c.pixel_threshold = rc.real("ingest.pixel_threshold");
    c.min_shot = int(rc.integer("ingest.min_shot"));
    c.max_shot = int(rc.integer("ingest.max_shot"));
    c.validate();
    return c;
}

/// Inclusive frame range to drop from one source.
struct Exclusion {
    std::size_t source = 0;
    std::size_t first = 0;
    std::size_t last = 0;
};

inline std::vector<Exclusion> ingest_exclusions(const RunConfig& rc) {
    std::vector<Exclusion> out;
    std::stringstream ss(rc.str("ingest.exclude"));
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = detail::trim(item);
        if (item.empty()) continue;
        Exclusion e;
        char colon = 0, dash = 0;
        std::istringstream is(item);
        if (!(is >> e.source >> colon >> e.first >> dash >> e.last) || colon != ':' || dash != '-' || e.last < e.first ||
            !(is >> std::ws).eof())
            throw ConfigError("ingest.exclude: bad range '" + item + "' (expected source:first-last)");
        out.push_back(e);
    }
    return out;
}

inline SynthConfig synth_config(const RunConfig& rc) {
    SynthConfig c;
    c.height = int(rc.integer("synth.height"));
    c.width = int(rc.integer("synth.width"));
    c.frames = int(rc.integer("synth.frames"));
    c.scenes = int(rc.integer("synth.scenes"));
    c.blobs = int(rc.integer("synth.blobs"));
    c.diameter = rc.real("synth.diameter");
    c.speed_min = rc.real("synth.speed_min");
    c.speed_max = rc.real("synth.speed_max");
    c.rect_fraction = rc.real("synth.rect_fraction");
    c.noise_sigma = rc.real("synth.noise_sigma");
    if (c.frames < 20) throw ConfigError("synth.frames: at least 20 frames are required");
    c.validate();
    return c;
}

inline AcdqnArch acdqn_arch(const RunConfig& rc) {
    AcdqnArch a = AcdqnArch::preset(rc.str("train.acdqn_preset"));
    const auto ks = rc.int_list("train.acdqn_kernels");
    if (!ks.empty()) {
        for (int k : ks)
            if (k < 1 || k % 2 == 0) throw ConfigError("train.acdqn_kernels: sizes must be odd and positive");
        a.kernel_sizes = ks;
    }
    if (const long long d = rc.integer("train.acdqn_depth"); d != 0) {
        if (d < 1) throw ConfigError("train.acdqn_depth: must be positive");
        a.depth = int(d);
    }
    return a;
}

inline LoopConfig loop_config(const RunConfig& rc) {
    LoopConfig c;
    c.seed = root_seed(rc);
    c.gamma = rc.real("train.gamma");
    c.epsilon_start = rc.real("train.epsilon_start");
    c.epsilon_end = rc.real("train.epsilon_end");
    c.epsilon_anneal = rc.real("train.epsilon_anneal");
    c.learner.sgd.lr = rc.real("train.learner_lr");
    c.learner.sgd.momentum = rc.real("train.learner_momentum");
    c.learner.sgd.nesterov = rc.boolean("train.learner_nesterov");
    c.learner.init_mean = rc.real("train.learner_init_mean");
    c.learner.init_std = rc.real("train.learner_init_std");
    c.acdqn.arch = acdqn_arch(rc);
    c.acdqn.adam.lr = rc.real("train.acdqn_lr");
    c.acdqn.init_mean = rc.real("train.acdqn_init_mean");
    c.acdqn.init_std = rc.real("train.acdqn_init_std");
    c.acdqn.norm_eps = rc.real("train.norm_eps");
    c.replay.capacity = std::size_t(rc.unsigned_integer("train.replay_capacity"));
    c.replay.alpha = rc.real("train.replay_alpha");
    c.replay.beta = rc.real("train.replay_beta");
    c.beta_end = rc.real("train.replay_beta_end");
    c.batch = std::size_t(rc.unsigned_integer("train.batch"));
    c.sync_period = rc.unsigned_integer("train.sync_period");
    c.window = int(rc.integer("train.reward_window"));
    c.step = int(rc.integer("train.action_step"));
    c.target_mode = target_mode_from_string(rc.str("train.target_mode"));
    c.shifted = rc.boolean("train.shifted_target");
    c.batch_source = batch_source_from_string(rc.str("train.batch_source"));
    c.schedule = update_schedule_from_string(rc.str("train.update_schedule"));
    c.train_ratio = int(rc.integer("train.train_ratio"));
    c.validate();
    return c;
}

struct EvalConfig {
    std::vector<double> thresholds;
    bool range_grid = false;
    int threshold_count = 61;
    std::optional<double> mask_threshold;  // empty: auto
    double w_tpr = 1, w_fpr = 1;
    int min_dist = 22;
    int box = 45;
    int orig_height = 0, orig_width = 0;
    int flow_step = 1;
};

inline EvalConfig eval_config(const RunConfig& rc) {
    EvalConfig e;
    const int n = int(rc.integer("eval.threshold_count"));
    if (n < 1) throw ConfigError("eval.threshold_count: must be positive");
    e.threshold_count = n;
    e.thresholds = linspace(rc.real("eval.threshold_lo"), rc.real("eval.threshold_hi"), n);
    const std::string grid = rc.str("eval.threshold_grid");
    if (grid != "fixed" && grid != "range") throw ConfigError("eval.threshold_grid: expected fixed or range");
    e.range_grid = grid == "range";
    if (rc.str("eval.mask_threshold") != "auto") e.mask_threshold = rc.real("eval.mask_threshold");
    e.w_tpr = rc.real("eval.w_tpr");
    e.w_fpr = rc.real("eval.w_fpr");
    e.min_dist = int(rc.integer("eval.min_dist"));
    e.box = int(rc.integer("eval.box"));
    e.orig_height = int(rc.integer("eval.orig_height"));
    e.orig_width = int(rc.integer("eval.orig_width"));
    const int fs = int(rc.integer("eval.flow_step"));
    e.flow_step = fs > 0 ? fs : int(rc.integer("train.action_step"));
    if (e.min_dist < 0 || e.box < 1 || e.orig_height < 0 || e.orig_width < 0)
        throw ConfigError("eval: distances and sizes must be non-negative");
    return e;
}

}  // namespace dcl
