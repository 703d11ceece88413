#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "evkd/checkpoint.hpp"
#include "evkd/optim.hpp"
#include "evkd/rng.hpp"

using namespace evkd;

namespace {

std::string temp_path(const std::string& name) {
    return ::testing::TempDir() + name;
}

ParamStore<double> small_store(std::uint64_t seed) {
    ParamStore<double> ps;
    Rng rng(seed);
    ps.add("w", trunc_normal_init<double>({3, 4}, 0.5, rng));
    ps.add("b", trunc_normal_init<double>({1, 4}, 0.5, rng));
    ps.add("scale", trunc_normal_init<double>({2, 2}, 0.5, rng));
    return ps;
}

void set_grads(ParamStore<double>& ps, Rng& rng) {
    for (auto& [name, p] : ps.items) {
        p->grad = Tensor<double>(p->value.shape);
        for (auto& g : p->grad.v) g = rng.uniform() - 0.5;
    }
}

} // namespace

TEST(AdamW, ZeroGradientAndZeroDecayLeaveParametersFixed) {
    auto ps = small_store(1);
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW<double> opt(ps, cfg);
    const auto before = ps.get("w")->value.v;
    for (auto& [name, p] : ps.items) p->grad = Tensor<double>::zeros(p->value.shape);
    for (int i = 0; i < 5; ++i) opt.step(ps);
    EXPECT_EQ(ps.get("w")->value.v, before);
}

TEST(AdamW, PureDecayShrinksWeightsGeometrically) {
    auto ps = small_store(2);
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.01;
    AdamW<double> opt(ps, cfg);
    const auto before = ps.get("w")->value.v;
    for (auto& [name, p] : ps.items) p->grad = Tensor<double>::zeros(p->value.shape);
    const int k = 7;
    for (int i = 0; i < k; ++i) opt.step(ps);
    const double factor = std::pow(1.0 - cfg.lr * cfg.weight_decay, k);
    for (std::size_t i = 0; i < before.size(); ++i)
        EXPECT_NEAR(ps.get("w")->value.v[i], before[i] * factor, 1e-12);
}

TEST(AdamW, ScalarTrajectoryMatchesIndependentReference) {
    ParamStore<double> ps;
    ps.add("p", Tensor<double>::scalar(0.7));
    AdamWConfig cfg;
    cfg.lr = 1e-2;
    cfg.weight_decay = 1e-3;
    AdamW<double> opt(ps, cfg);

    double w = 0.7, m = 0.0, v = 0.0;
    Rng rng(42);
    for (int t = 1; t <= 20; ++t) {
        const double g = rng.uniform() * 2.0 - 1.0;
        ps.get("p")->grad = Tensor<double>::scalar(g);
        opt.step(ps);

        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        const double mhat = m / (1.0 - std::pow(cfg.beta1, t));
        const double vhat = v / (1.0 - std::pow(cfg.beta2, t));
        w -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * w);
        ASSERT_NEAR(ps.get("p")->value.v[0], w, 1e-14) << "step " << t;
    }
}

TEST(AdamW, FirstStepMovesAgainstGradientSign) {
    ParamStore<double> ps;
    ps.add("p", Tensor<double>::from_values({1, 2}, {1.0, -1.0}));
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW<double> opt(ps, cfg);
    ps.get("p")->grad = Tensor<double>::from_values({1, 2}, {0.3, -0.3});
    opt.step(ps);
    EXPECT_LT(ps.get("p")->value.v[0], 1.0);
    EXPECT_GT(ps.get("p")->value.v[1], -1.0);
}

TEST(AdamW, FrozenParametersAreSkipped) {
    auto ps = small_store(3);
    ps.freeze("b");
    const auto frozen_before = ps.get("b")->value.v;
    AdamW<double> opt(ps, AdamWConfig{});
    Rng rng(4);
    set_grads(ps, rng);
    opt.step(ps);
    EXPECT_EQ(ps.get("b")->value.v, frozen_before);
    EXPECT_NE(ps.get("w")->grad.v, std::vector<double>{});
    bool moved = false;
    auto fresh = small_store(3);
    for (std::size_t i = 0; i < ps.get("w")->value.v.size(); ++i)
        if (ps.get("w")->value.v[i] != fresh.get("w")->value.v[i]) moved = true;
    EXPECT_TRUE(moved);
}

TEST(GradClip, ScalesDownToTheRequestedNorm) {
    ParamStore<double> ps;
    ps.add("p", Tensor<double>::from_values({1, 2}, {0.0, 0.0}));
    ps.get("p")->grad = Tensor<double>::from_values({1, 2}, {3.0, 4.0});
    const double norm = clip_grad_norm(ps, 1.0);
    EXPECT_DOUBLE_EQ(norm, 5.0);
    EXPECT_NEAR(ps.get("p")->grad.v[0], 0.6, 1e-12);
    EXPECT_NEAR(ps.get("p")->grad.v[1], 0.8, 1e-12);
}

TEST(GradClip, LeavesSmallGradientsAlone) {
    ParamStore<double> ps;
    ps.add("p", Tensor<double>::from_values({1, 2}, {0.0, 0.0}));
    ps.get("p")->grad = Tensor<double>::from_values({1, 2}, {0.3, 0.4});
    const double norm = clip_grad_norm(ps, 1.0);
    EXPECT_DOUBLE_EQ(norm, 0.5);
    EXPECT_DOUBLE_EQ(ps.get("p")->grad.v[0], 0.3);
}

// --- Checkpoint container ------------------------------------------------------

TEST(Checkpoint, WeightsRoundTripBitExactly) {
    const std::string path = temp_path("ckpt_roundtrip.bin");
    auto ps = small_store(11);
    nlohmann::json meta = {{"stage", "teacher"}, {"epoch", 3}};
    ckpt::save(path, ps, meta);

    auto loaded = ckpt::load<double>(path);
    EXPECT_EQ(loaded.meta["stage"], "teacher");
    EXPECT_EQ(loaded.meta["epoch"], 3);

    auto fresh = small_store(99); // same names, different values
    ckpt::apply(loaded, fresh);
    for (const auto& [name, p] : ps.items)
        EXPECT_EQ(fresh.get(name)->value.v, p->value.v) << name;
    std::remove(path.c_str());
}

TEST(Checkpoint, SavedFileIsByteStableAcrossRewrites) {
    const std::string pa = temp_path("ckpt_a.bin");
    const std::string pb = temp_path("ckpt_b.bin");
    auto ps = small_store(12);
    nlohmann::json meta = {{"stage", "student"}};
    ckpt::save(pa, ps, meta);
    ckpt::save(pb, ps, meta);
    std::ifstream fa(pa, std::ios::binary), fb(pb, std::ios::binary);
    std::string da((std::istreambuf_iterator<char>(fa)), {});
    std::string db((std::istreambuf_iterator<char>(fb)), {});
    EXPECT_EQ(da, db);
    EXPECT_FALSE(da.empty());
    EXPECT_EQ(da.substr(0, 4), "HKDT");
    std::remove(pa.c_str());
    std::remove(pb.c_str());
}

TEST(Checkpoint, OptimizerStateResumesTheExactTrajectory) {
    const std::string path = temp_path("ckpt_opt.bin");
    auto ps = small_store(13);
    AdamWConfig cfg;
    AdamW<double> opt(ps, cfg);
    Rng rng(14);
    for (int i = 0; i < 4; ++i) {
        set_grads(ps, rng);
        opt.step(ps);
    }
    nlohmann::json meta = {{"optimizer_step", opt.t}};
    ckpt::save(path, ps, meta, &opt);

    // Restore into fresh objects and advance both copies identically.
    auto ps2 = small_store(0);
    AdamW<double> opt2(ps2, cfg);
    auto loaded = ckpt::load<double>(path);
    ckpt::apply(loaded, ps2);
    ckpt::apply_optimizer(loaded, ps2, opt2);
    EXPECT_EQ(opt2.t, opt.t);

    Rng follow_a(15), follow_b(15);
    for (int i = 0; i < 3; ++i) {
        set_grads(ps, follow_a);
        opt.step(ps);
        set_grads(ps2, follow_b);
        opt2.step(ps2);
    }
    for (const auto& [name, p] : ps.items)
        EXPECT_EQ(ps2.get(name)->value.v, p->value.v) << name;
    std::remove(path.c_str());
}

TEST(Checkpoint, MissingParameterIsRejected) {
    const std::string path = temp_path("ckpt_missing.bin");
    auto ps = small_store(16);
    ckpt::save(path, ps, nlohmann::json::object());
    ParamStore<double> other;
    other.add("w", Tensor<double>::zeros({3, 4}));
    other.add("extra", Tensor<double>::zeros({1, 1}));
    auto loaded = ckpt::load<double>(path);
    EXPECT_THROW(ckpt::apply(loaded, other), ConfigMismatch);
    std::remove(path.c_str());
}

TEST(Checkpoint, ShapeMismatchIsRejected) {
    const std::string path = temp_path("ckpt_shape.bin");
    auto ps = small_store(17);
    ckpt::save(path, ps, nlohmann::json::object());
    ParamStore<double> other;
    other.add("w", Tensor<double>::zeros({4, 3}));
    other.add("b", Tensor<double>::zeros({1, 4}));
    other.add("scale", Tensor<double>::zeros({2, 2}));
    auto loaded = ckpt::load<double>(path);
    EXPECT_THROW(ckpt::apply(loaded, other), ConfigMismatch);
    std::remove(path.c_str());
}

TEST(Checkpoint, BadMagicAndTruncationAreRejected) {
    const std::string path = temp_path("ckpt_bad.bin");
    {
        std::ofstream os(path, std::ios::binary);
        os << "NOPE rest of file";
    }
    EXPECT_THROW(ckpt::load<double>(path), IoFailure);

    auto ps = small_store(18);
    ckpt::save(path, ps, nlohmann::json::object());
    std::ifstream is(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(is)), {});
    is.close();
    {
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    EXPECT_THROW(ckpt::load<double>(path), IoFailure);
    std::remove(path.c_str());
}

TEST(Checkpoint, MissingOptimizerBlobsAreRejected) {
    const std::string path = temp_path("ckpt_noopt.bin");
    auto ps = small_store(19);
    ckpt::save(path, ps, nlohmann::json::object()); // no optimizer passed
    auto loaded = ckpt::load<double>(path);
    AdamW<double> opt(ps, AdamWConfig{});
    EXPECT_THROW(ckpt::apply_optimizer(loaded, ps, opt), ConfigMismatch);
    std::remove(path.c_str());
}

TEST(Checkpoint, FloatTensorsSurviveTheSameContainer) {
    const std::string path = temp_path("ckpt_float.bin");
    ParamStore<float> ps;
    Rng rng(20);
    ps.add("w", trunc_normal_init<float>({2, 3}, 0.5, rng));
    ckpt::save(path, ps, nlohmann::json::object());
    auto loaded = ckpt::load<float>(path);
    ASSERT_NE(loaded.find("w"), nullptr);
    EXPECT_EQ(loaded.find("w")->v, ps.get("w")->value.v);
    std::remove(path.c_str());
}
