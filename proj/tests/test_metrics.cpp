#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "evkd/metrics.hpp"
#include "evkd/rng.hpp"

using namespace evkd;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
    return ::testing::TempDir() + name;
}

// Direct-formula scorer, written from the metric definitions without touching
// the library's geometry helpers. Exhaustive enumeration over all thresholds.
struct NaiveScore {
    int counted = 0;
    double sr = 0, pr = 0, npr = 0;
};

NaiveScore naive_score(const std::vector<BBox>& pred, const std::vector<BBox>& gt) {
    NaiveScore n;
    std::array<double, 21> succ{};
    std::array<double, 51> prec{};
    std::array<double, 51> nprec{};
    for (std::size_t i = 1; i < gt.size(); ++i) {
        const BBox& g = gt[i];
        if (g.w <= 0 || g.h <= 0) continue;
        ++n.counted;
        const BBox& p = pred[i];

        const double ix = std::max(
            0.0, std::min(p.x + p.w, g.x + g.w) - std::max(p.x, g.x));
        const double iy = std::max(
            0.0, std::min(p.y + p.h, g.y + g.h) - std::max(p.y, g.y));
        const double inter = ix * iy;
        const double uni = p.w * p.h + g.w * g.h - inter;
        const double v = uni > 0 ? inter / uni : 0.0;

        const double dx = (p.x + 0.5 * p.w) - (g.x + 0.5 * g.w);
        const double dy = (p.y + 0.5 * p.h) - (g.y + 0.5 * g.h);
        const double cle = std::sqrt(dx * dx + dy * dy);
        const double ncle =
            std::sqrt((dx / g.w) * (dx / g.w) + (dy / g.h) * (dy / g.h));

        for (int k = 0; k < 21; ++k)
            if (v >= 0.05 * k) succ[static_cast<std::size_t>(k)] += 1;
        for (int k = 0; k < 51; ++k)
            if (cle <= k) prec[static_cast<std::size_t>(k)] += 1;
        for (int k = 0; k < 51; ++k)
            if (ncle <= 0.01 * k) nprec[static_cast<std::size_t>(k)] += 1;
    }
    if (n.counted == 0) return n;
    for (double v : succ) n.sr += v / n.counted;
    n.sr /= 21;
    n.pr = prec[20] / n.counted;
    for (double v : nprec) n.npr += v / n.counted;
    n.npr /= 51;
    return n;
}

std::vector<BBox> constant_boxes(std::size_t n, const BBox& b) {
    return std::vector<BBox>(n, b);
}

std::size_t line_count(const std::string& path) {
    std::ifstream f(path);
    std::string line;
    std::size_t n = 0;
    while (std::getline(f, line)) ++n;
    return n;
}

} // namespace

TEST(ScoreSequence, OracleTrackerIsPerfect) {
    Rng rng(5);
    std::vector<BBox> gt;
    for (int i = 0; i < 60; ++i)
        gt.push_back({rng.uniform(0.0, 200.0), rng.uniform(0.0, 200.0),
                      rng.uniform(10.0, 40.0), rng.uniform(10.0, 40.0)});
    const SequenceScore s = score_sequence("oracle", gt, gt);
    EXPECT_EQ(s.counted, 59);
    EXPECT_EQ(s.sr, 1.0);
    EXPECT_EQ(s.pr, 1.0);
    EXPECT_EQ(s.npr, 1.0);
}

TEST(ScoreSequence, AllMissTrackerSitsAtTheSuccessFloor) {
    const std::vector<BBox> gt = constant_boxes(50, {10, 10, 20, 20});
    const std::vector<BBox> pred = constant_boxes(50, {200, 200, 20, 20});
    const SequenceScore s = score_sequence("miss", pred, gt);
    // IoU = 0 still clears the 0.00 threshold, nothing else.
    EXPECT_EQ(s.sr, 1.0 / 21);
    EXPECT_EQ(s.pr, 0.0);
    EXPECT_EQ(s.npr, 0.0);
}

TEST(ScoreSequence, PrecisionCountsCentersWithinTwentyPixels) {
    const BBox g{100, 100, 20, 20};
    std::vector<BBox> gt = constant_boxes(5, g);
    std::vector<BBox> pred = {g};
    for (double d : {5.0, 15.0, 25.0, 35.0})
        pred.push_back({g.x + d, g.y, g.w, g.h}); // CLE exactly d
    const SequenceScore s = score_sequence("pr", pred, gt);
    EXPECT_EQ(s.counted, 4);
    EXPECT_EQ(s.pr, 0.5);
}

TEST(ScoreSequence, NormalizedPrecisionUsesGtExtents) {
    const BBox g{50, 50, 20, 10};
    std::vector<BBox> gt = constant_boxes(2, g);
    // offset (2, 1) px -> normalized error hypot(0.1, 0.1) ~ 0.1414,
    // first cleared at threshold 0.15 -> 36 of 51 thresholds count.
    std::vector<BBox> pred = {g, {g.x + 2, g.y + 1, g.w, g.h}};
    const SequenceScore s = score_sequence("npr", pred, gt);
    EXPECT_NEAR(s.npr, 36.0 / 51, 1e-12);
}

TEST(ScoreSequence, FrameZeroAndAbsentGtAreExcluded) {
    const BBox g{30, 30, 24, 24};
    std::vector<BBox> gt = constant_boxes(40, g);
    gt[7] = BBox{};
    gt[8] = BBox{};
    std::vector<BBox> pred = gt;
    pred[0] = {200, 200, 5, 5}; // initialization frame never scores
    pred[7] = {0, 0, 1, 1};    // absent GT frames never score
    pred[8] = {0, 0, 1, 1};
    const SequenceScore s = score_sequence("excl", pred, gt);
    EXPECT_EQ(s.counted, 37);
    EXPECT_EQ(s.sr, 1.0);
    EXPECT_EQ(s.pr, 1.0);
}

TEST(ScoreSequence, MatchesExhaustiveEnumerationOnRandomSequences) {
    Rng rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<BBox> gt, pred;
        const int frames = 97;
        for (int i = 0; i < frames; ++i) {
            if (i > 0 && i % 13 == 0) {
                gt.push_back({});
            } else {
                gt.push_back({rng.uniform(20.0, 200.0), rng.uniform(20.0, 200.0),
                              rng.uniform(8.0, 40.0), rng.uniform(8.0, 40.0)});
            }
            const BBox base = gt.back().absent() ? BBox{50, 50, 20, 20} : gt.back();
            pred.push_back({base.x + rng.uniform(-30.0, 30.0),
                            base.y + rng.uniform(-30.0, 30.0),
                            base.w * rng.uniform(0.6, 1.5),
                            base.h * rng.uniform(0.6, 1.5)});
        }
        const SequenceScore s = score_sequence("rand", pred, gt);
        const NaiveScore n = naive_score(pred, gt);
        EXPECT_EQ(s.counted, n.counted);
        EXPECT_NEAR(s.sr, n.sr, 1e-12);
        EXPECT_NEAR(s.pr, n.pr, 1e-12);
        EXPECT_NEAR(s.npr, n.npr, 1e-12);
    }
}

TEST(ScoreSequence, CurvesAreMonotoneInTheThreshold) {
    Rng rng(13);
    std::vector<BBox> gt, pred;
    for (int i = 0; i < 80; ++i) {
        gt.push_back({rng.uniform(0.0, 200.0), rng.uniform(0.0, 200.0),
                      rng.uniform(8.0, 40.0), rng.uniform(8.0, 40.0)});
        pred.push_back({gt.back().x + rng.uniform(-25.0, 25.0),
                        gt.back().y + rng.uniform(-25.0, 25.0), gt.back().w,
                        gt.back().h});
    }
    const SequenceScore s = score_sequence("mono", pred, gt);
    for (int k = 1; k < kSuccessSteps; ++k)
        EXPECT_LE(s.success[static_cast<std::size_t>(k)],
                  s.success[static_cast<std::size_t>(k - 1)]);
    for (int k = 1; k < kPrecisionSteps; ++k)
        EXPECT_GE(s.precision[static_cast<std::size_t>(k)],
                  s.precision[static_cast<std::size_t>(k - 1)]);
    for (int k = 1; k < kNprSteps; ++k)
        EXPECT_GE(s.norm_precision[static_cast<std::size_t>(k)],
                  s.norm_precision[static_cast<std::size_t>(k - 1)]);
}

TEST(ScoreSequence, LengthMismatchThrows) {
    const std::vector<BBox> gt = constant_boxes(10, {1, 1, 5, 5});
    const std::vector<BBox> pred = constant_boxes(9, {1, 1, 5, 5});
    EXPECT_THROW(score_sequence("bad", pred, gt), MissingAnnotation);
}

TEST(Aggregate, SequenceAveragedAndShuffleInvariant) {
    Rng rng(17);
    std::vector<SequenceScore> scores;
    for (int q = 0; q < 6; ++q) {
        std::vector<BBox> gt, pred;
        const int frames = 20 + 11 * q; // deliberately unequal lengths
        for (int i = 0; i < frames; ++i) {
            gt.push_back({rng.uniform(0.0, 180.0), rng.uniform(0.0, 180.0),
                          rng.uniform(10.0, 30.0), rng.uniform(10.0, 30.0)});
            pred.push_back({gt.back().x + rng.uniform(-15.0, 15.0),
                            gt.back().y + rng.uniform(-15.0, 15.0), gt.back().w,
                            gt.back().h});
        }
        scores.push_back(score_sequence("seq" + std::to_string(q), pred, gt));
    }
    const MetricReport a = aggregate_scores(scores);
    double mean_sr = 0;
    for (const SequenceScore& s : scores) mean_sr += s.sr / scores.size();
    EXPECT_NEAR(a.sr, mean_sr, 1e-12);

    std::vector<SequenceScore> shuffled = scores;
    std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937{99});
    const MetricReport b = aggregate_scores(shuffled);
    EXPECT_NEAR(a.sr, b.sr, 1e-12);
    EXPECT_NEAR(a.pr, b.pr, 1e-12);
    EXPECT_NEAR(a.npr, b.npr, 1e-12);
}

TEST(Aggregate, ZeroCountedSequencesAreSkippedWithANote) {
    std::vector<BBox> gt = constant_boxes(5, {10, 10, 20, 20});
    SequenceScore good = score_sequence("good", gt, gt);

    std::vector<BBox> empty_gt = constant_boxes(5, {10, 10, 20, 20});
    for (std::size_t i = 1; i < empty_gt.size(); ++i) empty_gt[i] = BBox{};
    SequenceScore hollow = score_sequence("hollow", empty_gt, empty_gt);
    EXPECT_EQ(hollow.counted, 0);

    const MetricReport r = aggregate_scores({good, hollow});
    EXPECT_EQ(r.sr, 1.0); // the hollow sequence does not drag the mean down
    ASSERT_EQ(r.notes.size(), 1u);
    EXPECT_NE(r.notes[0].find("hollow"), std::string::npos);
}

TEST(AttributeBreakdown, RowsMatchSubsetAggregation) {
    Rng rng(23);
    std::vector<SequenceScore> scores;
    std::map<std::string, std::vector<std::string>> tags;
    for (int q = 0; q < 4; ++q) {
        std::vector<BBox> gt, pred;
        for (int i = 0; i < 30; ++i) {
            gt.push_back({rng.uniform(0.0, 150.0), rng.uniform(0.0, 150.0), 20, 20});
            pred.push_back({gt.back().x + rng.uniform(-10.0 * (q + 1), 10.0 * (q + 1)),
                            gt.back().y, 20, 20});
        }
        const std::string id = "s" + std::to_string(q);
        scores.push_back(score_sequence(id, pred, gt));
        tags[id] = q % 2 == 0 ? std::vector<std::string>{"FM"}
                              : std::vector<std::string>{"FM", "BC"};
    }
    std::vector<std::string> notes;
    const auto rows = attribute_breakdown(scores, tags, &notes);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].tag, "BC");
    EXPECT_EQ(rows[0].sequences, 2);
    EXPECT_EQ(rows[1].tag, "FM");
    EXPECT_EQ(rows[1].sequences, 4);

    const MetricReport bc =
        aggregate_scores({scores[1], scores[3]}); // the two BC-tagged sequences
    EXPECT_NEAR(rows[0].sr, bc.sr, 1e-12);
    EXPECT_NEAR(rows[0].pr, bc.pr, 1e-12);
    EXPECT_NEAR(rows[0].npr, bc.npr, 1e-12);

    // 12 vocabulary attributes have no sequences -> one omission note each
    EXPECT_EQ(notes.size(), 12u);
}

TEST(AttributeBreakdown, UnknownVocabularyIsRejected) {
    std::vector<BBox> gt = constant_boxes(5, {10, 10, 20, 20});
    const SequenceScore s = score_sequence("s0", gt, gt);
    std::map<std::string, std::vector<std::string>> tags{{"s0", {"BLUR"}}};
    EXPECT_THROW(attribute_breakdown({s}, tags), UnknownTag);
}

TEST(AttributeBreakdown, BreakdownOrderFollowsTheVocabulary) {
    std::vector<BBox> gt = constant_boxes(5, {10, 10, 20, 20});
    const SequenceScore s = score_sequence("s0", gt, gt);
    std::map<std::string, std::vector<std::string>> tags{
        {"s0", {"ST", "CM", "NMO"}}};
    const auto rows = attribute_breakdown({s}, tags);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].tag, "CM");
    EXPECT_EQ(rows[1].tag, "NMO");
    EXPECT_EQ(rows[2].tag, "ST");
}

TEST(Report, JsonRoundTripPreservesHeadlinesAndNotes) {
    std::vector<BBox> gt = constant_boxes(12, {10, 10, 20, 20});
    std::vector<BBox> pred = gt;
    pred[3].x += 4;
    MetricReport r = aggregate_scores({score_sequence("a", pred, gt)});
    r.fps = 123.5;
    r.notes.push_back("hand note");
    r.per_attribute.push_back({"FM", 1, r.sr, r.pr, r.npr});

    const MetricReport back = report_from_json(to_json(r));
    EXPECT_NEAR(back.sr, r.sr, 1e-12);
    EXPECT_NEAR(back.pr, r.pr, 1e-12);
    EXPECT_NEAR(back.npr, r.npr, 1e-12);
    EXPECT_EQ(back.fps, 123.5);
    ASSERT_EQ(back.per_sequence.size(), 1u);
    EXPECT_EQ(back.per_sequence[0].id, "a");
    ASSERT_EQ(back.per_attribute.size(), 1u);
    EXPECT_EQ(back.per_attribute[0].tag, "FM");
    ASSERT_EQ(back.notes.size(), 1u);
}

TEST(Report, EmittedFilesHaveTheDeclaredRowCounts) {
    std::vector<BBox> gt = constant_boxes(8, {10, 10, 20, 20});
    const MetricReport r = aggregate_scores({score_sequence("rows", gt, gt)});
    const fs::path dir = temp_path("report_rows");
    fs::remove_all(dir);
    emit_report(r, dir);

    EXPECT_EQ(line_count((dir / "success_curve.csv").string()), 21u);
    EXPECT_EQ(line_count((dir / "precision_curve.csv").string()), 51u);
    EXPECT_EQ(line_count((dir / "npr_curve.csv").string()), 51u);
    EXPECT_EQ(line_count((dir / "per_sequence.csv").string()), 2u); // header + 1

    const auto j = nlohmann::json::parse(read_file((dir / "report.json").string()));
    const MetricReport back = report_from_json(j);
    EXPECT_NEAR(back.sr, r.sr, 1e-12);
}
