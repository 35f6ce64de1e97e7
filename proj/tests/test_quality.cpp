#include <gtest/gtest.h>

#include "irsis/quality.hpp"
#include "test_support.hpp"

using namespace irsis;
using namespace irsis::testing;

namespace {

BinaryMask upscale(const BinaryMask& m, int s) {
    BinaryMask out(m.width() * s, m.height() * s);
    for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) {
            if (m.get(x / s, y / s)) out.set(x, y);
        }
    }
    return out;
}

BoundingBox upscale(const BoundingBox& b, int s) { return {b.x0 * s, b.y0 * s, b.x1 * s, b.y1 * s}; }

}  // namespace

TEST(Quality, ThresholdsMustBeInsideOpenUnitInterval) {
    EXPECT_NO_THROW((QualityThresholds{0.85, 0.5}.validate()));
    EXPECT_THROW((QualityThresholds{0.0, 0.5}.validate()), InvalidArgument);
    EXPECT_THROW((QualityThresholds{0.5, 1.0}.validate()), InvalidArgument);
}

TEST(Quality, CoverageExamples) {
    BinaryMask m(16, 16);
    std::vector<BoundingBox> boxes{{0, 0, 4, 4}, {2, 2, 6, 6}};
    EXPECT_EQ(coverage(m, boxes), 0.0);
    m.fill_box({0, 0, 6, 6}, true);
    EXPECT_EQ(coverage(m, boxes), 1.0);
    // Overlapping boxes count their shared pixels once: union area is 28.
    BinaryMask half(16, 16);
    half.fill_box({0, 0, 4, 4}, true);
    EXPECT_DOUBLE_EQ(coverage(half, boxes), 16.0 / 28.0);
    EXPECT_THROW(coverage(m, std::vector<BoundingBox>{}), InvalidArgument);
}

TEST(Quality, BoxOverlapExamples) {
    BinaryMask m(16, 16);
    const BoundingBox b{2, 2, 10, 10};
    EXPECT_EQ(box_overlap(m, b), 0.0);
    m.fill_box({0, 0, 12, 12}, true);
    EXPECT_EQ(box_overlap(m, b), 1.0);
    Rng rng(5);
    const auto r = random_mask(rng, 16, 16);
    std::int64_t hits = 0;
    for (int y = 2; y < 10; ++y) {
        for (int x = 2; x < 10; ++x) hits += r.get(x, y);
    }
    EXPECT_EQ(box_overlap(r, b), static_cast<double>(hits) / 64.0);
}

TEST(Quality, GateIsStrict) {
    // Coverage exactly 0.5 with tau_c = 0.5 must fail.
    BinaryMask m(10, 10);
    m.fill_box({0, 0, 10, 5}, true);
    const std::vector<BoundingBox> boxes{{0, 0, 10, 10}};
    const auto at = evaluate(m, boxes, {0.5, 0.25});
    EXPECT_EQ(at.coverage, 0.5);
    EXPECT_FALSE(at.gate);
    EXPECT_TRUE(evaluate(m, boxes, {0.49, 0.25}).gate);
    // Overlap exactly tau_o marks the box low.
    const auto low = evaluate(m, boxes, {0.25, 0.5});
    EXPECT_FALSE(low.gate);
    EXPECT_EQ(low.low_boxes, std::vector<std::size_t>{0});
}

TEST(Quality, PerfectMaskPassesAnyThresholds) {
    const auto m = BinaryMask::filled(12, 12);
    const std::vector<BoundingBox> boxes{{0, 0, 3, 3}, {5, 5, 12, 12}};
    const auto r = evaluate(m, boxes, {0.99, 0.99});
    EXPECT_TRUE(r.gate);
    EXPECT_TRUE(r.low_boxes.empty());
    EXPECT_EQ(r.min_overlap(), 1.0);
}

TEST(Quality, CoveredAndUntouchedBox) {
    BinaryMask m(20, 10);
    m.fill_box({0, 0, 5, 5}, true);
    const std::vector<BoundingBox> boxes{{0, 0, 5, 5}, {10, 0, 15, 5}};
    const auto r = evaluate(m, boxes, {0.85, 0.5});
    EXPECT_FALSE(r.gate);
    EXPECT_EQ(r.low_boxes, std::vector<std::size_t>{1});
    EXPECT_EQ(r.per_box_overlap[0].overlap, brute_overlap(m, boxes[0]));
    EXPECT_EQ(r.per_box_overlap[1].overlap, 0.0);
    EXPECT_EQ(r.coverage, brute_coverage(m, boxes));
    EXPECT_EQ(r.box_union_area, 50);
}

TEST(QualityProperty, MatchesBruteForce) {
    Rng rng(101);
    for (int i = 0; i < 300; ++i) {
        const auto m = random_mask(rng, 32, 32);
        std::vector<BoundingBox> boxes;
        const int n = static_cast<int>(rng.uniform_int(1, 5));
        for (int k = 0; k < n; ++k) boxes.push_back(random_box(rng, 32, 32));
        const QualityThresholds th{rng.uniform(0.01, 0.99), rng.uniform(0.01, 0.99)};
        const auto r = evaluate(m, boxes, th);
        const double c = brute_coverage(m, boxes);
        ASSERT_EQ(r.coverage, c);
        bool all = true;
        std::vector<std::size_t> low;
        for (int k = 0; k < n; ++k) {
            const double o = brute_overlap(m, boxes[k]);
            ASSERT_EQ(r.per_box_overlap[k].overlap, o);
            if (!(o > th.overlap)) {
                all = false;
                low.push_back(k);
            }
        }
        ASSERT_EQ(r.gate, c > th.coverage && all);
        ASSERT_EQ(r.low_boxes, low);
    }
}

TEST(QualityProperty, ScaleInvariance) {
    Rng rng(102);
    for (int i = 0; i < 40; ++i) {
        const auto m = random_mask(rng, 16, 16);
        std::vector<BoundingBox> boxes{random_box(rng, 16, 16), random_box(rng, 16, 16)};
        const int s = static_cast<int>(rng.uniform_int(2, 4));
        const auto big = upscale(m, s);
        std::vector<BoundingBox> big_boxes{upscale(boxes[0], s), upscale(boxes[1], s)};
        ASSERT_EQ(coverage(m, boxes), coverage(big, big_boxes));
        for (int k = 0; k < 2; ++k) ASSERT_EQ(box_overlap(m, boxes[k]), box_overlap(big, big_boxes[k]));
    }
}

TEST(QualityProperty, MonotoneInMask) {
    Rng rng(103);
    const QualityThresholds th{0.6, 0.4};
    for (int i = 0; i < 200; ++i) {
        const auto m = random_mask(rng, 24, 24);
        const auto bigger = unite(m, random_mask(rng, 24, 24, 0.2));
        std::vector<BoundingBox> boxes{random_box(rng, 24, 24), random_box(rng, 24, 24)};
        const auto a = evaluate(m, boxes, th), b = evaluate(bigger, boxes, th);
        ASSERT_GE(b.coverage, a.coverage);
        for (int k = 0; k < 2; ++k) ASSERT_GE(b.per_box_overlap[k].overlap, a.per_box_overlap[k].overlap);
        if (a.gate) ASSERT_TRUE(b.gate);
    }
}

TEST(Quality, TargetSelectionByLabel) {
    std::vector<BoundingBox> boxes{{0, 0, 2, 2, "bipolar forceps"},
                                   {2, 2, 4, 4, "monopolar curved scissors"},
                                   {4, 4, 6, 6, "Prograsp Forceps"}};
    EXPECT_EQ(select_target_boxes(boxes, "forceps"), (std::vector<std::size_t>{0, 2}));
    EXPECT_EQ(select_target_boxes(boxes, "curved scissors"), (std::vector<std::size_t>{1}));
    EXPECT_EQ(select_target_boxes(boxes, "surgical instrument"), (std::vector<std::size_t>{0, 1, 2}));
    EXPECT_EQ(select_target_boxes(boxes, "retractor"), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Quality, QueryTokensDropGenericWords) {
    EXPECT_TRUE(query_tokens("Surgical Instrument").empty());
    EXPECT_EQ(query_tokens("Bipolar-Forceps, the ok"), (std::vector<std::string>{"bipolar", "forceps"}));
}
