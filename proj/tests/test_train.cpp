#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "evkd/synth.hpp"
#include "evkd/train.hpp"

using namespace evkd;

namespace {

BackboneConfig tiny_backbone() {
    BackboneConfig b;
    b.patch_size = 16;
    b.embed_dim = 16;
    b.num_layers = 1;
    b.num_heads = 2;
    b.template_size = 64;
    b.search_size = 128;
    return b;
}

TrainConfig tiny_config(Stage stage) {
    TrainConfig c;
    c.stage = stage;
    c.backbone = tiny_backbone();
    c.lr = 1e-3;
    c.batch_size = 4;
    c.epochs = 2;
    c.seed = 9;
    c.pairs_per_sequence = 2;
    if (stage == Stage::Student) c.teacher_checkpoint = "in-memory";
    return c;
}

std::vector<SequenceData> make_data(int n) {
    std::vector<SequenceData> data;
    for (int i = 0; i < n; ++i) {
        SceneSpec spec;
        spec.width = 128;
        spec.height = 128;
        spec.frames = 24;
        spec.frame_duration_us = 1000;
        spec.speed_px_per_frame = 1.8;
        spec.size_px = 28.0;
        spec.noise_rate = 0.0;
        const GeneratedSequence g = generate(spec, 100 + static_cast<unsigned>(i));
        SequenceData d;
        d.name = "t" + std::to_string(i);
        d.events = g.events;
        d.boxes = g.boxes;
        d.duration_us =
            static_cast<std::uint64_t>(spec.frames) * spec.frame_duration_us;
        data.push_back(std::move(d));
    }
    return data;
}

template <typename T>
::testing::AssertionResult params_identical(const ParamStore<T>& a,
                                            const ParamStore<T>& b) {
    if (a.items.size() != b.items.size())
        return ::testing::AssertionFailure() << "parameter counts differ";
    for (std::size_t i = 0; i < a.items.size(); ++i) {
        const auto& [an, av] = a.items[i];
        const auto& [bn, bv] = b.items[i];
        if (an != bn) return ::testing::AssertionFailure() << an << " vs " << bn;
        if (av->value.shape != bv->value.shape)
            return ::testing::AssertionFailure() << an << ": shapes differ";
        for (std::size_t k = 0; k < av->value.v.size(); ++k)
            if (av->value.v[k] != bv->value.v[k])
                return ::testing::AssertionFailure()
                       << an << "[" << k << "]: " << av->value.v[k]
                       << " != " << bv->value.v[k];
    }
    return ::testing::AssertionSuccess();
}

TrainResult<float> quick_teacher(const std::vector<SequenceData>& data, int epochs) {
    TrainConfig cfg = tiny_config(Stage::Teacher);
    cfg.epochs = epochs;
    return train_teacher(data, cfg);
}

} // namespace

TEST(Training, ZeroEpochsReturnsTheInitialization) {
    const auto data = make_data(1);
    TrainConfig cfg = tiny_config(Stage::Teacher);
    cfg.epochs = 0;
    const TrainResult<float> r = train_teacher(data, cfg);
    const TrackerNet<float> fresh = TrackerNet<float>::make(cfg.backbone, true, cfg.seed);
    EXPECT_TRUE(params_identical(r.net.params, fresh.params));
    EXPECT_TRUE(r.epochs.empty());
    EXPECT_EQ(r.optimizer_steps, 0u);
}

TEST(Training, RepeatRunsAreBitIdentical) {
    const auto data = make_data(2);
    const TrainConfig cfg = tiny_config(Stage::Teacher);
    const TrainResult<float> a = train_teacher(data, cfg);
    const TrainResult<float> b = train_teacher(data, cfg);
    EXPECT_TRUE(params_identical(a.net.params, b.net.params));
    ASSERT_EQ(a.epochs.size(), b.epochs.size());
    for (std::size_t e = 0; e < a.epochs.size(); ++e)
        EXPECT_EQ(a.epochs[e].mean.total, b.epochs[e].mean.total);
    EXPECT_EQ(a.rng_state, b.rng_state);
}

TEST(Training, TeacherLossDecreasesOverEpochs) {
    const auto data = make_data(2);
    TrainConfig cfg = tiny_config(Stage::Teacher);
    cfg.epochs = 6;
    const TrainResult<float> r = train_teacher(data, cfg);
    ASSERT_EQ(r.epochs.size(), 6u);
    for (const EpochStats& e : r.epochs) {
        EXPECT_GT(e.steps, 0);
        EXPECT_TRUE(std::isfinite(e.mean.total));
    }
    EXPECT_LT(r.epochs.back().mean.total, r.epochs.front().mean.total);
}

TEST(Training, ZeroKdWeightsIgnoreTheTeacherEntirely) {
    const auto data = make_data(1);
    TrainResult<float> teacher_a = quick_teacher(data, 1);
    TrackerNet<float> teacher_b =
        TrackerNet<float>::make(tiny_backbone(), true, 777); // never trained

    TrainConfig cfg = tiny_config(Stage::Student);
    cfg.weights.eta_sim = cfg.weights.eta_feat = cfg.weights.eta_res = 0;
    std::ostringstream log;
    const TrainResult<float> sa = distill_student(data, teacher_a.net, cfg, &log);
    const TrainResult<float> sb = distill_student(data, teacher_b, cfg);
    EXPECT_TRUE(params_identical(sa.net.params, sb.net.params));

    // the KD columns of the step log must be exactly zero
    std::istringstream rows(log.str());
    std::string line;
    int parsed = 0;
    while (std::getline(rows, line)) {
        std::istringstream cells(line);
        std::uint64_t step;
        double focal, l1, giou, sim, feat, res, total;
        cells >> step >> focal >> l1 >> giou >> sim >> feat >> res >> total;
        EXPECT_EQ(sim, 0.0);
        EXPECT_EQ(feat, 0.0);
        EXPECT_EQ(res, 0.0);
        ++parsed;
    }
    EXPECT_GT(parsed, 0);
}

TEST(Training, KdTermsAreActiveDuringDistillation) {
    const auto data = make_data(1);
    TrainResult<float> teacher = quick_teacher(data, 1);
    TrainConfig cfg = tiny_config(Stage::Student);
    cfg.weights.eta_sim = 0.7;
    cfg.weights.eta_feat = 1.0;
    cfg.weights.eta_res = 0.7;
    const TrainResult<float> s = distill_student(data, teacher.net, cfg);
    ASSERT_FALSE(s.epochs.empty());
    for (const EpochStats& e : s.epochs) {
        EXPECT_GT(e.mean.sim, 0.0);
        EXPECT_GT(e.mean.feat, 0.0);
        EXPECT_GT(e.mean.res, 0.0);
        EXPECT_TRUE(std::isfinite(e.mean.total));
    }
}

TEST(Training, DistillationLeavesTheTeacherBitIdentical) {
    const auto data = make_data(1);
    TrainResult<float> teacher = quick_teacher(data, 1);
    std::vector<std::vector<float>> before;
    for (const auto& [name, p] : teacher.net.params.items) before.push_back(p->value.v);

    TrainConfig cfg = tiny_config(Stage::Student);
    distill_student(data, teacher.net, cfg);

    for (std::size_t i = 0; i < before.size(); ++i)
        EXPECT_EQ(teacher.net.params.items[i].second->value.v, before[i])
            << teacher.net.params.items[i].first;
}

TEST(Training, LoggedTotalIsTheWeightedSumOfTerms) {
    const auto data = make_data(1);
    TrainResult<float> teacher = quick_teacher(data, 1);
    TrainConfig cfg = tiny_config(Stage::Student);
    cfg.epochs = 1;
    // deliberately asymmetric weights so swapped columns cannot cancel out
    cfg.weights = {2.0, 3.0, 0.5, 0.25, 1.5, 0.75};
    std::ostringstream log;
    distill_student(data, teacher.net, cfg, &log);

    std::istringstream rows(log.str());
    std::string line;
    int parsed = 0;
    while (std::getline(rows, line)) {
        std::istringstream cells(line);
        std::uint64_t step;
        double focal, l1, giou, sim, feat, res, total;
        cells >> step >> focal >> l1 >> giou >> sim >> feat >> res >> total;
        const double expected = 2.0 * focal + 3.0 * l1 + 0.5 * giou + 0.25 * sim +
                                1.5 * feat + 0.75 * res;
        EXPECT_NEAR(total, expected, 1e-4 * std::max(1.0, std::abs(expected)));
        ++parsed;
    }
    EXPECT_GT(parsed, 0);
}

TEST(Training, SingleViewTeacherIsRejected) {
    const auto data = make_data(1);
    TrackerNet<float> one_view = TrackerNet<float>::make(tiny_backbone(), false, 3);
    const TrainConfig cfg = tiny_config(Stage::Student);
    EXPECT_THROW(distill_student(data, one_view, cfg), MissingView);
}

TEST(Training, TeacherStudentGeometryMismatchIsRejected) {
    const auto data = make_data(1);
    BackboneConfig wide = tiny_backbone();
    wide.embed_dim = 32;
    TrackerNet<float> teacher = TrackerNet<float>::make(wide, true, 3);
    const TrainConfig cfg = tiny_config(Stage::Student);
    EXPECT_THROW(distill_student(data, teacher, cfg), ConfigMismatch);
}

TEST(Training, CheckpointRoundTripRestoresTheNetwork) {
    const auto data = make_data(1);
    TrainConfig cfg = tiny_config(Stage::Teacher);
    cfg.epochs = 1;
    const TrainResult<float> r = train_teacher(data, cfg);

    const std::string path = ::testing::TempDir() + "train_rt.ckpt";
    save_tracker(path, r.net, cfg, 1, static_cast<const AdamW<float>*>(nullptr),
                 r.rng_state);
    LoadedTracker<float> back = load_tracker<float>(path);

    EXPECT_TRUE(params_identical(back.net.params, r.net.params));
    EXPECT_TRUE(back.net.two_view);
    EXPECT_EQ(back.meta.at("stage").get<std::string>(), "teacher");
    EXPECT_EQ(back.meta.at("epoch").get<int>(), 1);
    EXPECT_EQ(back.meta.at("rng_state").get<std::string>(), r.rng_state);
}

TEST(Training, EpochCallbackCanStopEarly) {
    const auto data = make_data(1);
    TrainConfig cfg = tiny_config(Stage::Teacher);
    cfg.epochs = 6;
    std::vector<int> seen;
    const TrainResult<float> r = train_teacher<float>(
        data, cfg, nullptr, [&](int epoch, TrackerNet<float>& net, const EpochStats&) {
            EXPECT_FALSE(net.params.items.empty());
            seen.push_back(epoch);
            return epoch < 1; // run epochs 0 and 1, then stop
        });
    EXPECT_EQ(seen, (std::vector<int>{0, 1}));
    EXPECT_EQ(r.epochs.size(), 2u);
}
