#pragma once

// The curiosity loop: shots are replayed strictly in order; every consecutive
// frame pair drives one learner update, yields a reward image from the
// pre-update prediction, lands in prioritized replay, and (once the buffer
// holds a batch) trains the AC-DQN.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcl/acdqn.hpp"
#include "dcl/checkpoint.hpp"
#include "dcl/ingest.hpp"
#include "dcl/learner.hpp"
#include "dcl/random.hpp"
#include "dcl/replay.hpp"
#include "dcl/reward.hpp"

namespace dcl {

enum class BatchSource { Replay, Shot };
enum class UpdateSchedule { Frame, Shot };

inline const char* to_string(BatchSource b) { return b == BatchSource::Replay ? "replay" : "shot"; }
inline const char* to_string(UpdateSchedule u) { return u == UpdateSchedule::Frame ? "frame" : "shot"; }

inline BatchSource batch_source_from_string(const std::string& s) {
    if (s == "replay") return BatchSource::Replay;
    if (s == "shot") return BatchSource::Shot;
    throw std::invalid_argument("unknown batch source '" + s + "' (expected replay or shot)");
}

inline UpdateSchedule update_schedule_from_string(const std::string& s) {
    if (s == "frame") return UpdateSchedule::Frame;
    if (s == "shot") return UpdateSchedule::Shot;
    throw std::invalid_argument("unknown update schedule '" + s + "' (expected frame or shot)");
}

struct LoopConfig {
    double gamma = 0.9;
    double epsilon_start = 1.0;
    double epsilon_end = 0.1;
    double epsilon_anneal = 0.5;  // fraction of all steps over which epsilon decays linearly
    LearnerConfig learner{};
    AcdqnConfig acdqn{};
    ReplayConfig replay{};
    double beta_end = 1.0;  // importance exponent annealed from replay.beta over the run
    std::size_t batch = 16;
    std::uint64_t sync_period = 200;  // AC-DQN train steps between target syncs
    int window = kDefaultRewardWindow;
    int step = 1;  // action step size k
    TargetMode target_mode = TargetMode::Paper;
    bool shifted = false;
    std::uint64_t seed = 0;
    BatchSource batch_source = BatchSource::Replay;
    UpdateSchedule schedule = UpdateSchedule::Frame;
    int train_ratio = 1;  // AC-DQN gradient steps per environment step

    void validate() const {
        if (!(gamma >= 0 && gamma < 1)) throw std::invalid_argument("loop: gamma must lie in [0,1)");
        for (double e : {epsilon_start, epsilon_end})
            if (!(e >= 0 && e <= 1)) throw std::invalid_argument("loop: epsilon must lie in [0,1]");
        if (!(epsilon_anneal >= 0 && epsilon_anneal <= 1)) throw std::invalid_argument("loop: epsilon anneal fraction must lie in [0,1]");
        if (learner.sgd.lr < 0 || learner.sgd.momentum < 0 || acdqn.adam.lr < 0)
            throw std::invalid_argument("loop: learning rates and momentum must be non-negative");
        if (replay.alpha < 0 || replay.beta < 0 || beta_end < 0) throw std::invalid_argument("loop: replay exponents must be non-negative");
        if (replay.capacity < batch) throw std::invalid_argument("loop: replay capacity is smaller than the batch");
        if (batch < 1) throw std::invalid_argument("loop: batch must be at least 1");
        if (sync_period < 1) throw std::invalid_argument("loop: sync period must be at least 1");
        if (window < 1 || window % 2 == 0) throw std::invalid_argument("loop: reward window must be odd and positive");
        if (step < 1) throw std::invalid_argument("loop: action step must be at least 1");
        if (train_ratio < 0) throw std::invalid_argument("loop: train ratio must be non-negative");
    }

    TdOptions td() const { return {gamma, target_mode, shifted, step}; }
};

/// Linear decay from `start` to `end` over the first `fraction` of `total` steps.
inline double linear_schedule(double start, double end, double fraction, std::uint64_t step, std::uint64_t total) {
    const double horizon = fraction * double(total);
    if (horizon <= 0 || double(step) >= horizon) return end;
    return start + (end - start) * std::min(1.0, double(step) / horizon);
}

struct MetricsRecord {
    std::uint64_t step = 0;  // 1-based transition counter
    int shot = 0;
    std::size_t frame = 0;  // index of I within its shot
    double learner_loss = 0;
    double mean_reward = 0;
    std::optional<double> mean_abs_td;  // absent until the AC-DQN trains
    std::optional<double> acdqn_loss;
    double epsilon = 0;
    double wall_time = 0;  // seconds since the run (or resume) started
};

inline nlohmann::json to_json(const MetricsRecord& r) {
    nlohmann::json j = {{"step", r.step},       {"shot", r.shot},       {"frame", r.frame},
                        {"learner_loss", r.learner_loss}, {"mean_reward", r.mean_reward},
                        {"mean_abs_td", nullptr}, {"acdqn_loss", nullptr}, {"epsilon", r.epsilon},
                        {"wall_time", r.wall_time}};
    if (r.mean_abs_td) j["mean_abs_td"] = *r.mean_abs_td;
    if (r.acdqn_loss) j["acdqn_loss"] = *r.acdqn_loss;
    return j;
}

inline MetricsRecord metrics_from_json(const nlohmann::json& j) {
    MetricsRecord r;
    r.step = j.at("step").get<std::uint64_t>();
    r.shot = j.at("shot").get<int>();
    r.frame = j.at("frame").get<std::size_t>();
    r.learner_loss = j.at("learner_loss").get<double>();
    r.mean_reward = j.at("mean_reward").get<double>();
    if (!j.at("mean_abs_td").is_null()) r.mean_abs_td = j.at("mean_abs_td").get<double>();
    if (!j.at("acdqn_loss").is_null()) r.acdqn_loss = j.at("acdqn_loss").get<double>();
    r.epsilon = j.at("epsilon").get<double>();
    r.wall_time = j.at("wall_time").get<double>();
    return r;
}

inline std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string() + ": cannot open metrics");
    std::vector<MetricsRecord> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(metrics_from_json(nlohmann::json::parse(line)));
    return out;
}

/// Ordered shots with lazy frame loading.
struct ShotList {
    std::vector<int> ids;
    std::vector<std::size_t> lengths;
    std::function<std::vector<Image>(std::size_t)> load;

    std::size_t size() const { return ids.size(); }

    /// Frame pairs over all shots with at least two frames.
    std::uint64_t transitions() const {
        std::uint64_t n = 0;
        for (std::size_t len : lengths) n += len >= 2 ? len - 1 : 0;
        return n;
    }

    static ShotList in_memory(std::vector<std::vector<Image>> shots) {
        auto data = std::make_shared<std::vector<std::vector<Image>>>(std::move(shots));
        ShotList s;
        for (std::size_t k = 0; k < data->size(); ++k) {
            s.ids.push_back(int(k));
            s.lengths.push_back((*data)[k].size());
        }
        s.load = [data](std::size_t k) { return (*data)[k]; };
        return s;
    }

    static ShotList from_manifest(const Manifest& m) {
        auto man = std::make_shared<Manifest>(m);
        ShotList s;
        for (const auto& shot : m.shots) {
            s.ids.push_back(shot.id);
            s.lengths.push_back(shot.frames.size());
        }
        s.load = [man](std::size_t k) { return load_shot_frames(*man, man->shots[k]); };
        return s;
    }
};

struct LoopOutputs {
    std::filesystem::path out_dir;      // empty: no files are written
    std::uint64_t checkpoint_every = 0;  // steps; checkpoints land on the next shot boundary
    bool keep_records = true;
    std::optional<std::size_t> stop_after_shot;  // stop once this many shots (counted from 0) are done
    std::function<void(const std::string&)> warn = [](const std::string& m) { std::cerr << "warning: " << m << '\n'; };
};

struct LoopResult {
    std::vector<MetricsRecord> records;
    std::uint64_t steps = 0;
    std::uint64_t acdqn_updates = 0;
    std::uint64_t syncs = 0;
    std::size_t next_shot = 0;
    std::size_t skipped_shots = 0;
};

/// Networks plus loop position; the unit that checkpoints save and restore.
struct LoopModels {
    Learner<float> learner;
    AcdqnNet<float> online;
    TargetNet<float> target;
    std::uint64_t step = 0;
    std::size_t next_shot = 0;

    explicit LoopModels(const LoopConfig& cfg)
        : learner(derive_seed(cfg.seed, "learner"), cfg.learner),
          online(derive_seed(cfg.seed, "acdqn"), cfg.acdqn),
          target(online) {}
};

inline void save_loop_checkpoint(const std::filesystem::path& dir, const LoopModels& m, const std::string& status) {
    write_checkpoint(dir / "learner.ckpt", learner_checkpoint(m.learner));
    write_checkpoint(dir / "acdqn.ckpt", acdqn_checkpoint(m.online));
    write_checkpoint(dir / "target.ckpt", acdqn_checkpoint(m.target.net, false, "acdqn-target"));
    nlohmann::json st = {{"step", m.step}, {"next_shot", m.next_shot}, {"target_syncs", m.target.syncs},
                         {"status", status}};
    std::ofstream out(dir / "state.json");
    if (!out) throw IoError((dir / "state.json").string() + ": cannot open for writing");
    out << st.dump(2) << '\n';
}

inline void load_loop_checkpoint(const std::filesystem::path& dir, LoopModels& m) {
    restore_learner(read_checkpoint(dir / "learner.ckpt"), m.learner);
    restore_acdqn(read_checkpoint(dir / "acdqn.ckpt"), m.online);
    restore_acdqn(read_checkpoint(dir / "target.ckpt"), m.target.net, "acdqn-target");
    std::ifstream in(dir / "state.json");
    if (!in) throw IoError((dir / "state.json").string() + ": missing loop state");
    const auto st = nlohmann::json::parse(in);
    m.step = st.at("step").get<std::uint64_t>();
    m.next_shot = st.at("next_shot").get<std::size_t>();
    m.target.syncs = st.at("target_syncs").get<std::uint64_t>();
}

class CuriosityLoop {
public:
    CuriosityLoop(LoopConfig cfg, LoopOutputs io)
        : cfg_(std::move(cfg)), io_(std::move(io)), models_(cfg_), buffer_(cfg_.replay) {
        cfg_.validate();
    }

    LoopModels& models() { return models_; }
    const LoopConfig& config() const { return cfg_; }

    /// Restores networks and loop position from a checkpoint directory.
    void resume_from(const std::filesystem::path& dir) {
        load_loop_checkpoint(dir, models_);
        resumed_ = true;
        if (cfg_.batch_source == BatchSource::Replay)
            io_.warn("resuming with an empty replay buffer; the run will not match an uninterrupted one");
    }

    LoopResult run(const ShotList& shots) {
        LoopResult res;
        start_ = std::chrono::steady_clock::now();
        total_steps_ = shots.transitions();
        std::ofstream metrics;
        if (!io_.out_dir.empty()) {
            std::filesystem::create_directories(io_.out_dir);
            metrics.open(io_.out_dir / "metrics.jsonl", resumed_ ? std::ios::app : std::ios::trunc);
            if (!metrics) throw IoError((io_.out_dir / "metrics.jsonl").string() + ": cannot open for writing");
        }
        auto emit = [&](const MetricsRecord& r) {
            if (metrics.is_open()) metrics << to_json(r).dump() << '\n';
            if (io_.keep_records) res.records.push_back(r);
        };

        std::uint64_t last_ckpt = models_.step;
        for (std::size_t s = models_.next_shot; s < shots.size(); ++s) {
            if (io_.stop_after_shot && s >= *io_.stop_after_shot) break;
            if (shots.lengths[s] < 2) {
                io_.warn("shot " + std::to_string(shots.ids[s]) + " has fewer than 2 frames; skipped");
                ++res.skipped_shots;
                models_.next_shot = s + 1;
                continue;
            }
            try {
                run_shot(shots, s, emit);
            } catch (...) {
                if (!io_.out_dir.empty()) save_loop_checkpoint(io_.out_dir, models_, "aborted");
                throw;
            }
            models_.next_shot = s + 1;
            if (!io_.out_dir.empty() && io_.checkpoint_every > 0 && models_.step - last_ckpt >= io_.checkpoint_every) {
                save_loop_checkpoint(io_.out_dir, models_, "running");
                last_ckpt = models_.step;
            }
        }
        if (metrics.is_open()) metrics.flush();
        if (!io_.out_dir.empty()) save_loop_checkpoint(io_.out_dir, models_, "finished");
        res.steps = models_.step;
        res.acdqn_updates = models_.online.steps();
        res.syncs = models_.target.syncs;
        res.next_shot = models_.next_shot;
        return res;
    }

private:
    struct Trained {
        double mean_abs_td = 0;
        double loss = 0;
    };

    /// One AC-DQN update on a prioritized batch; syncs the target first when due.
    Trained train_once(Rng& rng) {
        if (models_.online.steps() % cfg_.sync_period == 0) sync_target(models_.online, models_.target);
        buffer_.set_beta(linear_schedule(cfg_.replay.beta, cfg_.beta_end, 1.0, models_.step, total_steps_));
        const auto sample = buffer_.sample(cfg_.batch, rng);
        std::vector<TrainItem<float>> items;
        for (std::size_t b = 0; b < sample.items.size(); ++b) {
            const Transition& t = *sample.items[b];
            items.push_back({t.image.get(), &t.actions, &t.reward, t.next.get(), sample.weights[b]});
        }
        const TrainResult tr = acdqn_train_step(models_.online, models_.target, std::span<const TrainItem<float>>(items), cfg_.td());
        buffer_.update_priorities(sample.indices, tr.item_delta);
        Trained out;
        out.loss = tr.mean_loss;
        for (double d : tr.item_delta) out.mean_abs_td += d / double(tr.item_delta.size());
        return out;
    }

    std::optional<Trained> train_many(Rng& rng, std::uint64_t count) {
        if (cfg_.train_ratio == 0 || buffer_.size() < cfg_.batch) return std::nullopt;
        Trained acc;
        for (std::uint64_t r = 0; r < count; ++r) {
            const Trained t = train_once(rng);
            acc.mean_abs_td += t.mean_abs_td / double(count);
            acc.loss += t.loss / double(count);
        }
        return acc;
    }

    template <typename Emit>
    void run_shot(const ShotList& shots, std::size_t s, Emit&& emit) {
        const std::vector<Image> raw = shots.load(s);
        std::vector<std::shared_ptr<const Image>> frames;
        for (const Image& f : raw) frames.push_back(std::make_shared<const Image>(f));
        Rng rng(derive_seed(cfg_.seed, "loop-shot", std::uint64_t(s)));
        if (cfg_.batch_source == BatchSource::Shot) buffer_ = PrioritizedBuffer(cfg_.replay);

        std::optional<MetricsRecord> pending;  // shot schedule: last record waits for the post-shot training
        for (std::size_t t = 0; t + 1 < frames.size(); ++t) {
            const Image& I = *frames[t];
            const Image& In = *frames[t + 1];
            const double eps =
                linear_schedule(cfg_.epsilon_start, cfg_.epsilon_end, cfg_.epsilon_anneal, models_.step, total_steps_);
            // With epsilon = 1 every pixel explores, so the greedy pass can be skipped;
            // the random stream is consumed identically either way.
            const Tensor3<float> q = eps >= 1.0 ? Tensor3<float>(I.height(), I.width(), kNumActions)
                                                : models_.online.forward(I);
            ActionMatrix A = epsilon_greedy(q, eps, rng);

            const auto ls = models_.learner.train_step(I, A, In);
            Map R = reward_image(ls.pred, In, cfg_.window);

            MetricsRecord rec;
            rec.step = ++models_.step;
            rec.shot = shots.ids[s];
            rec.frame = t;
            rec.learner_loss = double(ls.loss);
            rec.mean_reward = mean_reward(R);
            rec.epsilon = eps;
            if (!std::isfinite(rec.learner_loss) || !std::isfinite(rec.mean_reward))
                throw NumericError("curiosity loop: non-finite metric at step " + std::to_string(rec.step));

            Transition tr;
            tr.image = frames[t];
            tr.actions = std::move(A);
            tr.reward = std::move(R);
            tr.next = frames[t + 1];
            tr.shot = shots.ids[s];
            buffer_.push(std::move(tr));

            if (cfg_.schedule == UpdateSchedule::Frame) {
                if (auto tr2 = train_many(rng, std::uint64_t(cfg_.train_ratio))) {
                    rec.mean_abs_td = tr2->mean_abs_td;
                    rec.acdqn_loss = tr2->loss;
                    if (!std::isfinite(tr2->mean_abs_td)) throw NumericError("curiosity loop: non-finite TD error");
                }
            }
            rec.wall_time = elapsed();
            if (cfg_.schedule == UpdateSchedule::Shot && t + 2 == frames.size()) {
                pending = rec;
            } else {
                emit(rec);
            }
        }
        if (pending) {
            const std::uint64_t n = std::uint64_t(frames.size() - 1) * std::uint64_t(cfg_.train_ratio);
            if (auto tr2 = train_many(rng, n)) {
                pending->mean_abs_td = tr2->mean_abs_td;
                pending->acdqn_loss = tr2->loss;
                if (!std::isfinite(tr2->mean_abs_td)) throw NumericError("curiosity loop: non-finite TD error");
            }
            pending->wall_time = elapsed();
            emit(*pending);
        }
    }

    double elapsed() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

    LoopConfig cfg_;
    LoopOutputs io_;
    LoopModels models_;
    PrioritizedBuffer buffer_;
    bool resumed_ = false;
    std::uint64_t total_steps_ = 0;
    std::chrono::steady_clock::time_point start_;
};

inline LoopResult run_curiosity_loop(const ShotList& shots, const LoopConfig& cfg, LoopOutputs io = {}) {
    CuriosityLoop loop(cfg, std::move(io));
    return loop.run(shots);
}

}  // namespace dcl
