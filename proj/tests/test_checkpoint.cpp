#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "dcl/checkpoint.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace dcl;
using dcl::testing::TempDir;

namespace {

AcdqnConfig reduced() {
    AcdqnConfig c;
    c.arch = AcdqnArch::reduced();
    c.init_std = 0.1;
    return c;
}

// A few real updates so that optimizer moments and step counters are non-trivial.
void train_a_little(Learner<float>& L, int steps) {
    std::mt19937_64 rng(3);
    for (int s = 0; s < steps; ++s) {
        const auto img = oracle::random_tensor<float>(12, 16, 3, rng, 0, 1);
        const auto nxt = oracle::random_tensor<float>(12, 16, 3, rng, 0, 1);
        L.train_step(img, oracle::random_actions(12, 16, rng), nxt);
    }
}

void train_a_little(AcdqnNet<float>& net, int steps) {
    std::mt19937_64 rng(4);
    TargetNet<float> tg(net);
    for (int s = 0; s < steps; ++s) {
        const auto img = oracle::random_tensor<float>(20, 20, 3, rng, 0, 1);
        const auto nxt = oracle::random_tensor<float>(20, 20, 3, rng, 0, 1);
        const auto A = oracle::random_actions(20, 20, rng);
        const auto R = oracle::random_grid<float>(20, 20, rng);
        TrainItem<float> it{&img, &A, &R, &nxt, 1.0};
        acdqn_train_step<float>(net, tg, std::span(&it, 1), {});
    }
}

std::vector<char> bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void put_bytes(const std::filesystem::path& p, const std::vector<char>& b) {
    std::ofstream out(p, std::ios::binary);
    out.write(b.data(), std::streamsize(b.size()));
}

}  // namespace

TEST(Checkpoint, LearnerRoundTripIsBitExact) {
    TempDir dir("ckpt");
    Learner<float> a(1, {});
    train_a_little(a, 3);
    write_checkpoint(dir / "l.ckpt", learner_checkpoint(a));

    Learner<float> b(2, {});
    restore_learner(read_checkpoint(dir / "l.ckpt"), b);
    EXPECT_EQ(b.kernel(), a.kernel());
    EXPECT_EQ(b.steps(), 3u);
    EXPECT_EQ(b.optimizer().steps(), a.optimizer().steps());
    EXPECT_TRUE(std::ranges::equal(b.optimizer().velocity(), a.optimizer().velocity()));

    // Restored state continues exactly like the original.
    train_a_little(a, 2);
    train_a_little(b, 2);
    EXPECT_EQ(b.kernel(), a.kernel());
}

TEST(Checkpoint, WeightsOnlyLeavesOptimizerAlone) {
    TempDir dir("ckpt");
    Learner<float> a(1, {});
    train_a_little(a, 2);
    const CheckpointData c = learner_checkpoint(a, false);
    EXPECT_FALSE(c.has_optimizer);
    write_checkpoint(dir / "l.ckpt", c);
    Learner<float> b(5, {});
    restore_learner(read_checkpoint(dir / "l.ckpt"), b);
    EXPECT_EQ(b.kernel(), a.kernel());
    EXPECT_EQ(b.optimizer().steps(), 0u);
    for (float v : b.optimizer().velocity()) EXPECT_EQ(v, 0.0f);
}

TEST(Checkpoint, AcdqnRoundTripIsBitExact) {
    TempDir dir("ckpt");
    AcdqnNet<float> a(1, reduced());
    train_a_little(a, 3);
    write_checkpoint(dir / "q.ckpt", acdqn_checkpoint(a));

    AcdqnNet<float> b(9, reduced());
    restore_acdqn(read_checkpoint(dir / "q.ckpt"), b);
    EXPECT_EQ(b.layers(), a.layers());
    EXPECT_EQ(b.steps(), a.steps());
    for (std::size_t l = 0; l < a.layer_count(); ++l) {
        EXPECT_EQ(b.optimizers()[l].m_storage(), a.optimizers()[l].m_storage());
        EXPECT_EQ(b.optimizers()[l].v_storage(), a.optimizers()[l].v_storage());
        EXPECT_EQ(b.optimizers()[l].steps(), 3u);
    }
    train_a_little(a, 1);
    train_a_little(b, 1);
    EXPECT_EQ(b.layers(), a.layers());
}

TEST(Checkpoint, ArchitectureIsRecoveredFromShapes) {
    TempDir dir("ckpt");
    AcdqnConfig cfg;
    cfg.arch.kernel_sizes = {7, 3};
    cfg.arch.depth = 6;
    cfg.init_std = 0.1;
    AcdqnNet<float> a(1, cfg);
    write_checkpoint(dir / "q.ckpt", acdqn_checkpoint(a, false));

    const AcdqnArch arch = arch_from_checkpoint(read_checkpoint(dir / "q.ckpt"));
    EXPECT_EQ(arch.kernel_sizes, (std::vector<int>{7, 3}));
    EXPECT_EQ(arch.depth, 6);
    EXPECT_EQ(arch.actions, 5);
    const AcdqnNet<float> b = load_acdqn<float>(dir / "q.ckpt");
    EXPECT_EQ(b.layers(), a.layers());
    EXPECT_EQ(b.receptive_field(), 9);

    const AcdqnArch full = arch_from_checkpoint(acdqn_checkpoint(AcdqnNet<float>(0, {}), false));
    EXPECT_EQ(full.parameter_count(), 191040u);
    EXPECT_EQ(full.depth, 30);
}

TEST(Checkpoint, KindAndShapeMismatchesAreRejected) {
    TempDir dir("ckpt");
    Learner<float> L(1, {});
    write_checkpoint(dir / "l.ckpt", learner_checkpoint(L));
    AcdqnNet<float> net(1, reduced());
    EXPECT_THROW(restore_acdqn(read_checkpoint(dir / "l.ckpt"), net), IoError);
    EXPECT_THROW(load_acdqn<float>(dir / "l.ckpt"), IoError);

    write_checkpoint(dir / "q.ckpt", acdqn_checkpoint(net));
    EXPECT_THROW(restore_learner(read_checkpoint(dir / "q.ckpt"), L), IoError);
    AcdqnNet<float> other(1, {});
    EXPECT_THROW(restore_acdqn(read_checkpoint(dir / "q.ckpt"), other), ShapeError);
    EXPECT_THROW(restore_acdqn(read_checkpoint(dir / "q.ckpt"), net, "target"), IoError);
}

TEST(Checkpoint, CorruptFilesAreRejected) {
    TempDir dir("ckpt");
    EXPECT_THROW(read_checkpoint(dir / "missing.ckpt"), IoError);

    AcdqnNet<float> net(1, reduced());
    write_checkpoint(dir / "q.ckpt", acdqn_checkpoint(net));
    const auto good = bytes(dir / "q.ckpt");
    ASSERT_GT(good.size(), 64u);
    EXPECT_EQ(std::string(good.begin(), good.begin() + 8), "DCLCKPT1");

    auto bad = good;
    bad[0] = 'X';
    put_bytes(dir / "magic.ckpt", bad);
    EXPECT_THROW(read_checkpoint(dir / "magic.ckpt"), IoError);

    for (std::size_t cut : {std::size_t(4), std::size_t(20), good.size() / 2, good.size() - 1}) {
        put_bytes(dir / "short.ckpt", std::vector<char>(good.begin(), good.begin() + std::ptrdiff_t(cut)));
        EXPECT_THROW(read_checkpoint(dir / "short.ckpt"), IoError) << "cut at " << cut;
    }

    auto longer = good;
    longer.push_back('\0');
    put_bytes(dir / "long.ckpt", longer);
    EXPECT_THROW(read_checkpoint(dir / "long.ckpt"), IoError);
}
