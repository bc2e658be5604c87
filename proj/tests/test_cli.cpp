#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dcl/commands.hpp"
#include "support/tempdir.hpp"

using namespace dcl;
using dcl::testing::TempDir;

namespace {

void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream(p) << s;
}

std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Small enough to train in a couple of seconds.
RunConfig tiny() {
    RunConfig rc;
    for (const char* kv : {"seed=3", "synth.height=48", "synth.width=64", "synth.frames=24", "synth.diameter=9",
                           "ingest.frame_height=48", "ingest.frame_width=64", "train.acdqn_preset=reduced",
                           "train.acdqn_init_std=0.1", "train.reward_window=9", "train.batch=4",
                           "train.sync_period=5", "train.replay_capacity=32", "eval.min_dist=8", "eval.box=9"})
        rc.set_assignment(kv);
    return rc;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(DCL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Config, DefaultsCoverEveryKey) {
    const RunConfig rc;
    EXPECT_EQ(rc.values().size(), config_keys().size());
    const std::string ref = config_reference();
    for (const auto& k : config_keys()) EXPECT_NE(ref.find("\n" + k.name + " = "), std::string::npos) << k.name;
    EXPECT_EQ(rc.integer("ingest.frame_height"), 180);
    EXPECT_EQ(rc.real("train.gamma"), 0.9);
    EXPECT_FALSE(rc.boolean("train.shifted_target"));
}

TEST(Config, ReferenceParsesBackToDefaults) {
    TempDir dir("cfg");
    write_text(dir / "ref.cfg", config_reference());
    RunConfig rc;
    rc.load_file(dir / "ref.cfg");
    EXPECT_EQ(rc.values(), RunConfig().values());
}

TEST(Config, AssignmentsAndFiles) {
    TempDir dir("cfg");
    write_text(dir / "a.cfg", "# comment\n\n  train.gamma = 0.5  # trailing\nseed=12\n");
    RunConfig rc;
    rc.load_file(dir / "a.cfg");
    EXPECT_EQ(rc.real("train.gamma"), 0.5);
    EXPECT_EQ(root_seed(rc), 12u);

    EXPECT_THROW(rc.set("train.gama", "1"), ConfigError);
    EXPECT_THROW(rc.set_assignment("train.gamma"), ConfigError);
    write_text(dir / "b.cfg", "seed = 1\nnot.a.key = 2\n");
    try {
        rc.load_file(dir / "b.cfg");
        FAIL() << "unknown key accepted";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("b.cfg:2:"), std::string::npos) << e.what();
    }
    EXPECT_THROW(rc.load_file(dir / "missing.cfg"), ConfigError);
}

TEST(Config, TypedAccessorsRejectGarbage) {
    RunConfig rc;
    rc.set("train.gamma", "0.9x");
    EXPECT_THROW(rc.real("train.gamma"), ConfigError);
    rc.set("train.batch", "-3");
    EXPECT_THROW(rc.unsigned_integer("train.batch"), ConfigError);
    rc.set("train.batch", "2.5");
    EXPECT_THROW(rc.integer("train.batch"), ConfigError);
    rc.set("train.shifted_target", "maybe");
    EXPECT_THROW(rc.boolean("train.shifted_target"), ConfigError);
    rc.set("train.acdqn_kernels", "9, 5,x");
    EXPECT_THROW(rc.int_list("train.acdqn_kernels"), ConfigError);
    rc.set("train.acdqn_kernels", " 9, 5 ,3,");
    EXPECT_EQ(rc.int_list("train.acdqn_kernels"), (std::vector<int>{9, 5, 3}));
}

TEST(Config, Builders) {
    RunConfig rc;
    EXPECT_EQ(acdqn_arch(rc).parameter_count(), 191040u);
    rc.set("train.acdqn_preset", "reduced");
    EXPECT_EQ(acdqn_arch(rc).receptive_field(), 17);
    rc.set("train.acdqn_kernels", "7,3");
    rc.set("train.acdqn_depth", "4");
    const AcdqnArch a = acdqn_arch(rc);
    EXPECT_EQ(a.kernel_sizes, (std::vector<int>{7, 3}));
    EXPECT_EQ(a.depth, 4);
    rc.set("train.acdqn_kernels", "4");
    EXPECT_THROW(acdqn_arch(rc), ConfigError);
    rc.set("train.acdqn_kernels", "");
    rc.set("train.acdqn_preset", "huge");
    EXPECT_THROW(acdqn_arch(rc), std::invalid_argument);

    RunConfig lc;
    lc.set("train.target_mode", "ddqn");
    lc.set("train.batch_source", "shot");
    lc.set("train.update_schedule", "shot");
    const LoopConfig c = loop_config(lc);
    EXPECT_EQ(c.target_mode, TargetMode::Ddqn);
    EXPECT_EQ(c.batch_source, BatchSource::Shot);
    EXPECT_EQ(c.schedule, UpdateSchedule::Shot);
    EXPECT_EQ(c.window, 45);
    lc.set("train.target_mode", "sarsa");
    EXPECT_THROW(loop_config(lc), std::invalid_argument);
    lc = RunConfig();
    lc.set("train.reward_window", "44");
    EXPECT_THROW(loop_config(lc), std::invalid_argument);

    RunConfig ec;
    EvalConfig e = eval_config(ec);
    ASSERT_EQ(e.thresholds.size(), 61u);
    EXPECT_DOUBLE_EQ(e.thresholds.front(), -0.1);
    EXPECT_DOUBLE_EQ(e.thresholds.back(), 0.5);
    EXPECT_FALSE(e.mask_threshold.has_value());
    EXPECT_EQ(e.flow_step, 1);
    ec.set("eval.mask_threshold", "0.2");
    ec.set("train.action_step", "3");
    e = eval_config(ec);
    EXPECT_EQ(*e.mask_threshold, 0.2);
    EXPECT_EQ(e.flow_step, 3);
    ec.set("eval.threshold_grid", "log");
    EXPECT_THROW(eval_config(ec), ConfigError);
}

TEST(Config, ExclusionSyntax) {
    RunConfig rc;
    EXPECT_TRUE(ingest_exclusions(rc).empty());
    rc.set("ingest.exclude", "0:5-9, 2:0-0");
    const auto ex = ingest_exclusions(rc);
    ASSERT_EQ(ex.size(), 2u);
    EXPECT_EQ(ex[0].source, 0u);
    EXPECT_EQ(ex[0].first, 5u);
    EXPECT_EQ(ex[0].last, 9u);
    EXPECT_EQ(ex[1].source, 2u);
    for (const char* bad : {"0:9-5", "0-5", "a:1-2", "0:1-2x", "0:1"}) {
        rc.set("ingest.exclude", bad);
        EXPECT_THROW(ingest_exclusions(rc), ConfigError) << bad;
    }
}

TEST(Commands, SynthIsDeterministic) {
    TempDir a("cli"), b("cli");
    const Manifest ma = cmd_synth(tiny(), a.path());
    const Manifest mb = cmd_synth(tiny(), b.path());
    ASSERT_EQ(ma.shots.size(), mb.shots.size());
    ASSERT_FALSE(ma.shots.empty());
    for (const auto& s : ma.shots)
        for (std::size_t t = 0; t < s.frames.size(); ++t) {
            EXPECT_EQ(read_text(a / s.frames[t]), read_text(b / s.frames[t]));
            EXPECT_EQ(read_text(a / s.masks[t]), read_text(b / s.masks[t]));
        }
    RunConfig bad = tiny();
    bad.set("synth.frames", "10");
    EXPECT_THROW(cmd_synth(bad, a / "x"), ConfigError);
}

TEST(Commands, IngestSegmentsSynthFrames) {
    TempDir dir("cli");
    RunConfig rc = tiny();
    rc.set("synth.frames", "40");
    const Manifest syn = cmd_synth(rc, dir / "syn");
    const auto src = dir / "syn" / syn.sources.at(0).path;

    RunConfig ic = tiny();
    ic.set("ingest.frame_height", "24");
    ic.set("ingest.frame_width", "32");
    ic.set("ingest.write_frames", "true");
    const Manifest m = cmd_ingest({src}, ic, dir / "ing");
    // 40 stable frames: one 32-frame chunk, the 8 left over are too short.
    ASSERT_EQ(m.shots.size(), 1u);
    EXPECT_EQ(m.shots[0].frames.size(), 32u);
    EXPECT_EQ(m.shots[0].masks.size(), 32u);  // masks next to the frames are carried
    const Image f = load_frame(m.resolve(m.shots[0].frames[0]));
    EXPECT_EQ(f.height(), 24);
    EXPECT_EQ(f.width(), 32);
    EXPECT_EQ(manifest_to_json(read_manifest(dir / "ing" / "manifest.json")), manifest_to_json(m));

    // Dropping frames 10-12 splits the run into 10 + 27 usable frames.
    ic.set("ingest.exclude", "0:10-12");
    const Manifest mx = cmd_ingest({src}, ic, dir / "ing2");
    ASSERT_EQ(mx.shots.size(), 1u);
    EXPECT_EQ(mx.shots[0].frames.size(), 27u);

    ic.set("ingest.exclude", "1:0-3");
    EXPECT_THROW(cmd_ingest({src}, ic, dir / "ing3"), ConfigError);
    ic.set("ingest.exclude", "");
    EXPECT_THROW(cmd_ingest({}, ic, dir / "ing3"), std::invalid_argument);
    std::filesystem::create_directories(dir / "empty");
    EXPECT_THROW(cmd_ingest({dir / "empty"}, ic, dir / "ing3"), IoError);
    ic.set("ingest.min_shot", "32");
    ic.set("ingest.exclude", "0:10-12");
    EXPECT_THROW(cmd_ingest({src}, ic, dir / "ing3"), std::runtime_error);
}

TEST(Commands, TrainThenEval) {
    TempDir dir("cli");
    const RunConfig rc = tiny();
    const Manifest m = cmd_synth(rc, dir / "syn");
    const LoopResult r = cmd_train(dir / "syn" / "manifest.json", rc, dir / "run");
    EXPECT_EQ(r.steps, m.frame_count() - m.shots.size());
    EXPECT_GT(r.acdqn_updates, 0u);
    for (const char* f : {"config.txt", "metrics.jsonl", "acdqn.ckpt", "learner.ckpt", "target.ckpt", "state.json"})
        EXPECT_TRUE(std::filesystem::exists(dir / "run" / f)) << f;
    EXPECT_EQ(read_metrics(dir / "run" / "metrics.jsonl").size(), r.steps);
    EXPECT_NE(read_text(dir / "run" / "config.txt").find("train.acdqn_preset = reduced"), std::string::npos);

    const EvalSummary s = cmd_eval(dir / "run", dir / "syn" / "manifest.json", std::nullopt, rc, dir / "ev");
    EXPECT_EQ(s.frames, m.frame_count());
    ASSERT_TRUE(s.auc.has_value());
    EXPECT_GE(*s.auc, 0.0);
    EXPECT_LE(*s.auc, 1.0);
    ASSERT_TRUE(s.best.has_value());
    EXPECT_EQ(s.mask_threshold, s.best->threshold);
    EXPECT_GT(s.boxes, 0u);
    for (const char* f : {"summary.json", "roc.csv", "values/value_000000.pgm", "masks/mask_000000.pgm",
                          "boxes/boxes_000000.csv", "flow/flow_000000.csv"})
        EXPECT_TRUE(std::filesystem::exists(dir / "ev" / f)) << f;
    const auto js = nlohmann::json::parse(read_text(dir / "ev" / "summary.json"));
    EXPECT_DOUBLE_EQ(js.at("auc").get<double>(), *s.auc);

    // Without ground truth there is no ROC and the mask threshold falls back to the grid midpoint.
    const auto frames_dir = dir / "syn" / m.sources.at(0).path;
    const EvalSummary n = cmd_eval(dir / "run" / "acdqn.ckpt", frames_dir, std::nullopt, rc, dir / "ev2");
    EXPECT_FALSE(n.auc.has_value());
    EXPECT_DOUBLE_EQ(n.mask_threshold, 0.2);
    EXPECT_FALSE(std::filesystem::exists(dir / "ev2" / "roc.csv"));

    // Masks given explicitly for a plain frame directory.
    const EvalSummary g = cmd_eval(dir / "run", frames_dir, frames_dir, rc, dir / "ev3");
    EXPECT_TRUE(g.auc.has_value());

    EXPECT_THROW(cmd_train(dir / "nope.json", rc, dir / "run2"), IoError);
    EXPECT_THROW(cmd_eval(dir / "nope", frames_dir, std::nullopt, rc, dir / "ev4"), IoError);
}

TEST(Cli, BinaryEndToEnd) {
    TempDir dir("cli");
    std::string sets;
    const RunConfig rc = tiny(), defaults;
    for (const auto& [k, v] : rc.values())
        if (v != defaults.str(k)) sets += " --set " + k + "=" + v;
    const std::string d = dir.path().string();
    ASSERT_EQ(run_cli("synth --out " + d + "/syn" + sets), 0);
    ASSERT_EQ(run_cli("train --manifest " + d + "/syn/manifest.json --out " + d + "/run" + sets), 0);
    ASSERT_EQ(run_cli("eval --checkpoint " + d + "/run --frames " + d + "/syn/manifest.json --out " + d + "/ev" + sets),
              0);
    EXPECT_TRUE(std::filesystem::exists(dir / "ev" / "summary.json"));

    EXPECT_EQ(run_cli("--print-config"), 0);
    EXPECT_NE(run_cli("train --manifest " + d + "/missing.json --out " + d + "/x"), 0);
    EXPECT_NE(run_cli("synth --out " + d + "/y --set no.such=1"), 0);
    EXPECT_NE(run_cli("bogus"), 0);
}
