// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "dcl/checkpoint.hpp"
#include "dcl/commands.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace dcl;
using dcl::testing::TempDir;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- 1

Outcome parameter_counts() {
    const Learner<float> L(0, {});
    const AcdqnNet<float> net(0, {});
    const std::size_t direct = 9 * 9 * 3 * 30 + 8 * (5 * 5 * 30 * 30) + 5 * 5 * 30 * 5;
    const bool ok = L.parameter_count() == 7 * 7 * 8 * 3 && L.parameter_count() == 1176 &&
                    net.parameter_count() == 191040 && direct == 191040 && AcdqnArch::full().parameter_count() == 191040;
    return {ok, fmt("learner %zu, AC-DQN %zu", L.parameter_count(), net.parameter_count())};
}

// ---------------------------------------------------------------- 2

// Instance-norm statistics are whole-frame quantities, so a probe moves them
// everywhere; freezing them at the unperturbed frame isolates the spatial
// footprint of the convolution stack.
Outcome receptive_field() {
    AcdqnConfig cfg;
    cfg.init_std = 0.1;
    const AcdqnNet<double> net(11, cfg);
    std::mt19937_64 rng(21);
    const int N = 64, r = 22;
    const auto img = oracle::random_tensor<double>(N, N, 3, rng, 0, 1);
    AcdqnNet<double>::Cache cache;
    const auto base = net.forward(img, &cache);
    int outside = 0, reach = 0;
    for (int probe = 0; probe < 50; ++probe) {
        const int pi = int(rng() % N), pj = int(rng() % N);
        auto moved = img;
        moved(pi, pj, int(rng() % 3)) += 0.5;
        const auto q = net.forward(moved, nullptr, &cache.stats);
        int far = 0;
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < N; ++j) {
                const int d = std::max(std::abs(i - pi), std::abs(j - pj));
                for (int a = 0; a < kNumActions; ++a) {
                    if (q(i, j, a) == base(i, j, a)) continue;
                    if (d > r) ++outside;
                    far = std::max(far, d);
                }
            }
        reach = std::max(reach, far);
    }
    return {outside == 0 && reach == r && net.receptive_field() == 45,
            fmt("50 probes on 64x64: %d changed outputs beyond the 45x45 window, widest change at radius %d", outside,
                reach)};
}

// ---------------------------------------------------------------- 3

Outcome youden_table() {
    const struct {
        double fpr, tpr, index;
    } rows[] = {{0.595343, 0.993316, 0.397973},
                {0.310977, 0.951039, 0.640061},
                {0.179516, 0.861723, 0.682208},
                {0.113833, 0.753707, 0.639873}};
    double worst = 0;
    for (const auto& r : rows) worst = std::max(worst, std::abs(youden(r.tpr, r.fpr) - r.index));
    return {worst <= 1e-5, fmt("4 rows, max |error| %.2e", worst)};
}

// ---------------------------------------------------------------- 4

struct AucSetup {
    int height = 48, width = 64;
    int scenes = 40;       // one 32-frame shot each
    double diameter = 11;
    int window = 9;
    // Bootstrapping from 0.9 smears value along blob trajectories, which the
    // per-frame masks count as false positives.
    double gamma = 0.5;
    int batch = 4;
    int train_ratio = 2;
};

RunConfig auc_config(const AucSetup& s, std::uint64_t seed) {
    RunConfig rc;
    rc.set("seed", std::to_string(seed));
    rc.set("synth.height", std::to_string(s.height));
    rc.set("synth.width", std::to_string(s.width));
    rc.set("synth.frames", "32");
    rc.set("synth.scenes", std::to_string(s.scenes));
    rc.set("synth.diameter", fmt("%g", s.diameter));
    rc.set("ingest.frame_height", std::to_string(s.height));
    rc.set("ingest.frame_width", std::to_string(s.width));
    rc.set("train.acdqn_preset", "reduced");
    rc.set("train.reward_window", std::to_string(s.window));
    rc.set("train.gamma", fmt("%g", s.gamma));
    rc.set("train.batch", std::to_string(s.batch));
    rc.set("train.train_ratio", std::to_string(s.train_ratio));
    rc.set("train.sync_period", "50");
    rc.set("train.replay_capacity", "512");
    rc.set("eval.threshold_grid", "range");
    rc.set("eval.threshold_count", "201");
    return rc;
}

Outcome synthetic_auc() {
    const auto t0 = std::chrono::steady_clock::now();
    const AucSetup setup;
    int above = 0;
    std::string aucs;
    for (std::uint64_t seed : {1, 2, 3}) {
        TempDir dir("accept-auc");
        const RunConfig rc = auc_config(setup, seed);
        const Manifest m = cmd_synth(rc, dir / "corpus");
        if (m.shots.size() < 40) return {false, fmt("corpus has only %zu shots", m.shots.size())};
        cmd_train(dir / "corpus" / "manifest.json", rc, dir / "run");
        const EvalSummary s = cmd_eval(dir / "run", dir / "corpus" / "manifest.json", std::nullopt, rc, dir / "eval");
        const double auc = s.auc.value_or(0);
        above += auc > 0.9;
        aucs += fmt("%s%.4f", aucs.empty() ? "" : ", ", auc);
    }
    const double secs = seconds_since(t0);
    return {above >= 2 && secs <= 1800,
            fmt("seeds 1-3, %d shots of %dx%d each: AUC %s; %d of 3 above 0.9; %.0f s", setup.scenes, setup.height,
                setup.width, aucs.c_str(), above, secs)};
}

// ---------------------------------------------------------------- 5

Outcome informativeness() {
    SynthConfig sc;
    sc.frames = 32;
    std::vector<double> diff;
    int inside_wins = 0;
    for (std::uint64_t n = 0; n < 3; ++n) {
        const Scene s = gen_scene(random_scene_config(sc, 5, n), 5);
        for (const ChangeStats& c : change_concentration(s.frames, s.regions)) {
            diff.push_back(c.mean_in - c.mean_out);
            inside_wins += c.mean_in > c.mean_out;
        }
    }
    const WilcoxonResult w = wilcoxon_signed_rank(diff);
    const bool ok = diff.size() >= 50 && inside_wins == int(diff.size()) && w.p < 1e-3;
    return {ok, fmt("%zu pairs at 180x320, inside > outside in %d, Wilcoxon z %.2f, one-sided p %.2e", diff.size(),
                    inside_wins, w.z, w.p)};
}

// ---------------------------------------------------------------- 6

Outcome learner_zeroth_order() {
    const auto t0 = std::chrono::steady_clock::now();
    SynthConfig sc;
    sc.height = 64;
    sc.width = 96;
    sc.frames = 32;
    sc.diameter = 15;
    std::vector<Scene> train;
    for (std::uint64_t n = 0; n < 6; ++n) train.push_back(gen_scene(random_scene_config(sc, 7, n), 7));
    Learner<float> L(7, {});
    std::mt19937_64 rng(7);
    for (int epoch = 0; epoch < 20; ++epoch)
        for (const Scene& s : train)
            for (std::size_t t = 0; t + 1 < s.frames.size(); ++t)
                L.train_step(s.frames[t], oracle::random_actions(sc.height, sc.width, rng), s.frames[t + 1]);

    // Held-out scenes: per-pixel squared error split by the motion mask.
    double se_static = 0, se_moving = 0;
    std::size_t n_static = 0, n_moving = 0;
    for (std::uint64_t n = 0; n < 3; ++n) {
        const Scene s = gen_scene(random_scene_config(sc, 8, n), 8);
        for (std::size_t t = 0; t + 1 < s.frames.size(); ++t) {
            const Image pred = L.predict(s.frames[t], oracle::random_actions(sc.height, sc.width, rng));
            for (int i = 0; i < sc.height; ++i)
                for (int j = 0; j < sc.width; ++j) {
                    double e = 0;
                    for (int c = 0; c < 3; ++c) {
                        const double d = double(pred(i, j, c)) - double(s.frames[t + 1](i, j, c));
                        e += d * d / 3;
                    }
                    if (s.motion[t](i, j)) {
                        se_moving += e;
                        ++n_moving;
                    } else {
                        se_static += e;
                        ++n_static;
                    }
                }
        }
    }
    const double ms = se_static / double(n_static), mm = se_moving / double(n_moving);
    const double secs = seconds_since(t0);
    return {ms < 0.1 * mm && secs <= 600,
            fmt("held-out MSE static %.3e, moving %.3e, ratio %.4f; %.0f s", ms, mm, ms / mm, secs)};
}

// ---------------------------------------------------------------- 7

double weighted_sum(const Tensor3<double>& y, const Tensor3<double>& d) {
    double s = 0;
    for (std::size_t n = 0; n < y.size(); ++n) s += y.storage()[n] * d.storage()[n];
    return s;
}

Outcome gradient_integrity() {
    std::mt19937_64 rng(31);
    double worst = 0;
    int checked = 0;
    auto check = [&](double analytic, double numeric) {
        worst = std::max(worst, oracle::rel_err(analytic, numeric, 1e-9));
        ++checked;
    };

    for (int inst = 0; inst < 20; ++inst) {
        auto x = oracle::random_tensor<double>(6, 7, 2, rng);
        auto k = oracle::random_kernel<double>(inst % 2 ? 3 : 5, 3, 2, 3, rng);
        const auto d = oracle::random_tensor<double>(6, 7, 3, rng);
        const auto g = conv2d_backward(x, k, d);
        auto f = [&] { return weighted_sum(conv2d(x, k), d); };
        for (std::size_t n = 0; n < x.size(); ++n) check(g.input.storage()[n], oracle::central_diff(&x.storage()[n], 1e-4, f));
        for (std::size_t n = 0; n < k.size(); ++n) check(g.kernel.storage()[n], oracle::central_diff(&k.storage()[n], 1e-4, f));
    }
    const int conv_checked = checked;

    for (int inst = 0; inst < 20; ++inst) {
        auto x = oracle::random_tensor<double>(4 + inst % 3, 5, 3, rng);
        const auto d = oracle::random_tensor<double>(x.height(), x.width(), 3, rng);
        const auto st = instance_norm_stats(x, 1e-5);
        const auto g = instance_norm_backward(instance_norm_apply(x, st), st, d);
        auto f = [&] { return weighted_sum(instance_norm(x, 1e-5), d); };
        for (std::size_t n = 0; n < x.size(); ++n) check(g.storage()[n], oracle::central_diff(&x.storage()[n], 1e-4, f));
    }

    // ReLU kinks: a probe whose +-h perturbation flips any pre-activation sign is skipped.
    int skipped = 0;
    for (int inst = 0; inst < 20; ++inst) {
        LearnerConfig cfg;
        cfg.init_std = 0.2;
        Learner<double> L(200 + inst, cfg);
        const auto img = oracle::random_tensor<double>(10, 10, 3, rng, 0, 1);
        const auto next = oracle::random_tensor<double>(10, 10, 3, rng, 0, 1);
        const auto oh = one_hot<double>(oracle::random_actions(10, 10, rng));
        const auto g = L.gradient(img, oh, next);
        const auto x = learner_input(img, oh);
        auto signs = [&] {
            std::vector<bool> s;
            for (double z : conv2d(x, L.kernel()).storage()) s.push_back(z > 0);
            return s;
        };
        for (int probe = 0; probe < 20; ++probe) {
            const std::size_t n = rng() % L.kernel().size();
            double* w = &L.kernel().storage()[n];
            const double h = 1e-6, saved = *w;
            *w = saved + h;
            const auto up = signs();
            *w = saved - h;
            const auto dn = signs();
            *w = saved;
            if (up != dn) {
                ++skipped;
                continue;
            }
            check(g.dkernel.storage()[n],
                  oracle::central_diff(w, h, [&] { return double(learner_loss(L.predict(img, oh), next)); }));
        }
    }

    for (int inst = 0; inst < 20; ++inst) {
        AcdqnConfig cfg;
        cfg.arch = AcdqnArch::reduced();
        cfg.init_std = 0.2;
        AcdqnNet<double> net(300 + inst, cfg);
        const int N = 18;
        const auto img = oracle::random_tensor<double>(N, N, 3, rng, 0, 1);
        const auto A = oracle::random_actions(N, N, rng);
        const auto T = oracle::random_grid<double>(N, N, rng, -1, 1);
        const auto lg = td_loss_gradient(net, img, A, T);
        auto loss = [&] {
            const auto q = net.forward(img);
            double s = 0;
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < N; ++j) s += (q(i, j, A(i, j)) - T(i, j)) * (q(i, j, A(i, j)) - T(i, j));
            return s / double(N * N);
        };
        auto signs = [&] {
            AcdqnNet<double>::Cache c;
            net.forward(img, &c);
            std::vector<bool> s;
            for (const auto& y : c.normalized)
                for (double v : y.storage()) s.push_back(v > 0);
            return s;
        };
        for (int probe = 0; probe < 12; ++probe) {
            const std::size_t l = std::size_t(probe % 3);
            const std::size_t n = rng() % net.layers()[l].size();
            double* w = &net.layers()[l].storage()[n];
            const double h = 1e-6, saved = *w;
            *w = saved + h;
            const auto up = signs();
            *w = saved - h;
            const auto dn = signs();
            *w = saved;
            if (up != dn) {
                ++skipped;
                continue;
            }
            check(lg.grads[l].storage()[n], oracle::central_diff(w, h, loss));
        }
    }
    return {worst < 1e-4 && conv_checked > 0,
            fmt("%d partials over 80 float64 instances (conv, instance norm, learner, reduced AC-DQN), "
                "%d kink-straddling probes skipped, max relative error %.2e",
                checked, skipped, worst)};
}

// ---------------------------------------------------------------- 8

double conv_mismatch(std::mt19937_64& rng) {
    double worst = 0;
    for (int inst = 0; inst < 10; ++inst) {
        const int kh = 1 + 2 * int(rng() % 5), kw = 1 + 2 * int(rng() % 4);
        const int H = 5 + int(rng() % 20), W = 5 + int(rng() % 20), C = 1 + int(rng() % 8), O = 1 + int(rng() % 6);
        const auto xd = oracle::random_tensor<double>(H, W, C, rng);
        const auto kd = oracle::random_kernel<double>(kh, kw, C, O, rng);
        const auto yd = conv2d(xd, kd);
        const auto want = oracle::naive_conv(xd, kd);
        for (std::size_t n = 0; n < want.size(); ++n) worst = std::max(worst, std::abs(yd.storage()[n] - want[n]));
        // float storage with double accumulation: compare relative to the value scale
        const Tensor3<float> xf = xd.cast<float>();
        const Kernel4<float> kf = kd.cast<float>();
        const auto yf = conv2d(xf, kf);
        const auto wf = oracle::naive_conv(xf, kf);
        for (std::size_t n = 0; n < wf.size(); ++n)
            worst = std::max(worst, std::abs(double(yf.storage()[n]) - wf[n]) / std::max(1.0, std::abs(wf[n])));
    }
    return worst;
}

double box_mismatch(std::mt19937_64& rng) {
    double worst = 0;
    for (int inst = 0; inst < 10; ++inst) {
        const int H = 3 + int(rng() % 60), W = 3 + int(rng() % 60), win = 1 + 2 * int(rng() % 23);
        const auto g = oracle::random_grid<double>(H, W, rng);
        const auto got = box_mean_filter(g, win);
        const auto want = oracle::naive_box_mean(g, win);
        for (std::size_t n = 0; n < want.size(); ++n) worst = std::max(worst, std::abs(got.storage()[n] - want[n]));
    }
    return worst;
}

bool nms_exact(std::mt19937_64& rng) {
    for (int inst = 0; inst < 10; ++inst) {
        const auto v = oracle::random_grid<double>(30 + int(rng() % 60), 30 + int(rng() % 100), rng);
        const int min_dist = 2 + int(rng() % 25);
        if (local_maxima_boxes(v, min_dist, 45).peaks != oracle::brute_nms(v, min_dist)) return false;
    }
    return true;
}

double roc_mismatch(std::mt19937_64& rng) {
    double worst = 0;
    for (int inst = 0; inst < 100; ++inst) {
        std::vector<Grid<double>> v;
        std::vector<Mask> m;
        int pixels = 0;
        bool pos = false, neg = false;
        while (true) {
            const int h = 1 + int(rng() % 5), w = 1 + int(rng() % 5);
            if (pixels + h * w > 100) break;
            Grid<double> g(h, w);
            Mask t(h, w);
            for (std::size_t k = 0; k < g.size(); ++k) {
                g.storage()[k] = double(rng() % 9) / 8.0;
                t.storage()[k] = rng() % 3 == 0;
                (t.storage()[k] ? pos : neg) = true;
            }
            v.push_back(g);
            m.push_back(t);
            pixels += h * w;
        }
        if (!pos || !neg) continue;
        const auto ts = linspace(-0.1, 1.1, 2 + int(rng() % 30));
        const RocResult r = roc_curve(v, m, ts);
        std::vector<RocPoint> want;
        for (double t : ts) want.push_back(oracle::count_point(v, m, t));
        for (std::size_t k = 0; k < ts.size(); ++k)
            worst = std::max({worst, std::abs(r.points[k].tpr - want[k].tpr), std::abs(r.points[k].fpr - want[k].fpr)});
        worst = std::max(worst, std::abs(r.auc - oracle::brute_auc(want)));
    }
    return worst;
}

double sumtree_mismatch(std::mt19937_64& rng) {
    const std::size_t cap = 257;
    SumTree t(cap);
    std::vector<double> v(cap, 0.0);
    std::uniform_real_distribution<double> u(0, 5);
    for (int op = 0; op < 10000; ++op) {
        const std::size_t i = rng() % cap;
        v[i] = op % 13 == 0 ? 0.0 : u(rng);
        t.set(i, v[i], v[i]);
    }
    double s = 0;
    for (double x : v) s += x;
    return std::abs(t.total() - s);
}

Outcome oracle_equivalences() {
    std::mt19937_64 rng(41);
    const double conv = conv_mismatch(rng), box = box_mismatch(rng);
    const bool nms = nms_exact(rng);
    const double roc = roc_mismatch(rng), tree = sumtree_mismatch(rng);
    const bool ok = conv <= 1e-6 && box <= 1e-6 && nms && roc <= 1e-9 && tree <= 1e-6;
    return {ok, fmt("conv %.1e, box %.1e, NMS %s, ROC/AUC %.1e, sum-tree root %.1e", conv, box,
                    nms ? "exact" : "MISMATCH", roc, tree)};
}

// ---------------------------------------------------------------- 9

// 40x40 frames with a 10-pixel border band: 1200 band pixels, so flipping k of
// them gives a turnover of exactly k/1200.
Image flipped(int k) {
    Image img(40, 40, 3, 0.2f);
    int done = 0;
    for (int i = 0; i < 40 && done < k; ++i)
        for (int j = 0; j < 40 && done < k; ++j)
            if (i < 10 || j < 10 || i >= 30 || j >= 30) {
                for (int c = 0; c < 3; ++c) img(i, j, c) = 0.9f;
                ++done;
            }
    return img;
}

std::vector<MetricsRecord> determinism_run() {
    SynthConfig sc;
    sc.height = 32;
    sc.width = 48;
    sc.frames = 24;
    sc.diameter = 9;
    std::vector<std::vector<Image>> shots;
    for (std::uint64_t n = 0; n < 2; ++n) shots.push_back(gen_scene(random_scene_config(sc, 9, n), 9).frames);
    LoopConfig c;
    c.seed = 9;
    c.acdqn.arch = AcdqnArch::reduced();
    c.acdqn.init_std = 0.1;
    c.window = 9;
    c.batch = 4;
    c.sync_period = 10;
    c.replay.capacity = 64;
    LoopOutputs io;
    io.warn = [](const std::string&) {};
    return run_curiosity_loop(ShotList::in_memory(std::move(shots)), c, io).records;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

Outcome pipeline_contracts() {
    IngestConfig cfg;
    cfg.frame_height = cfg.frame_width = 40;
    std::vector<std::string> bad;
    auto expect = [&](const char* name, const std::vector<ShotRange>& got, const std::vector<ShotRange>& want) {
        if (got != want) bad.push_back(name);
    };

    // 25 frames of A then 25 of B: a cut iff turnover strictly exceeds 25%.
    auto cut_case = [&](int k) {
        std::vector<Image> f(25, flipped(0));
        f.insert(f.end(), 25, flipped(k));
        return segment_shots(f, cfg);
    };
    const double at = border_turnover(flipped(0), flipped(300), 10, 0.1);
    if (at != 0.25) bad.push_back("turnover construction");
    expect("turnover 0.25 keeps one shot", cut_case(300), {{0, 32}});
    expect("turnover 301/1200 cuts", cut_case(301), {{0, 25}, {25, 50}});

    auto stable = [](std::size_t n) { return std::vector<Image>(n, flipped(0)); };
    expect("19 frames", segment_shots(stable(19), cfg), {});
    expect("20 frames", segment_shots(stable(20), cfg), {{0, 20}});
    expect("32 frames", segment_shots(stable(32), cfg), {{0, 32}});
    expect("33 frames", segment_shots(stable(33), cfg), {{0, 32}});
    expect("70 frames", segment_shots(stable(70), cfg), {{0, 32}, {32, 64}});
    expect("84 frames", segment_shots(stable(84), cfg), {{0, 32}, {32, 64}, {64, 84}});

    const auto a = determinism_run(), b = determinism_run();
    bool same = a.size() == b.size() && !a.empty();
    for (std::size_t k = 0; same && k < a.size(); ++k)
        same = a[k].step == b[k].step && same_bits(a[k].learner_loss, b[k].learner_loss) &&
               same_bits(a[k].mean_reward, b[k].mean_reward) && same_bits(a[k].epsilon, b[k].epsilon) &&
               a[k].mean_abs_td.has_value() == b[k].mean_abs_td.has_value() &&
               (!a[k].mean_abs_td || same_bits(*a[k].mean_abs_td, *b[k].mean_abs_td)) &&
               a[k].acdqn_loss.has_value() == b[k].acdqn_loss.has_value() &&
               (!a[k].acdqn_loss || same_bits(*a[k].acdqn_loss, *b[k].acdqn_loss));
    if (!same) bad.push_back("metrics differ between runs");

    std::string detail = "segmentation: cut above 25%, 20/32 bounds, 70 -> 32+32, 84 -> 32+32+20";
    detail += fmt("; %zu metric records bit-identical across two seeded runs", a.size());
    if (!bad.empty()) {
        detail = "failed:";
        for (const auto& s : bad) detail += " [" + s + "]";
    }
    return {bad.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"parameter counts", parameter_counts},
        {"receptive field", receptive_field},
        {"Youden table", youden_table},
        {"synthetic AUC", synthetic_auc},
        {"informativeness", informativeness},
        {"learner zeroth order", learner_zeroth_order},
        {"gradient integrity", gradient_integrity},
        {"oracle equivalences", oracle_equivalences},
        {"pipeline contracts", pipeline_contracts},
    };
    std::set<int> only;
    for (int k = 1; k < argc; ++k) only.insert(std::atoi(argv[k]));

    int failed = 0;
    for (std::size_t n = 0; n < criteria.size(); ++n) {
        const int id = int(n) + 1;
        if (!only.empty() && !only.count(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[n].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[n].first, o.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    }
    return failed ? 1 : 0;
}
