#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "irsis/rng.hpp"
#include "irsis/train_math.hpp"

using namespace irsis;

namespace {

std::vector<double> random_probs(Rng& rng, std::size_t n) {
    std::vector<double> p(n);
    for (auto& v : p) v = rng.uniform(0.02, 0.98);
    return p;
}

std::vector<double> random_targets(Rng& rng, std::size_t n) {
    std::vector<double> y(n);
    for (auto& v : y) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    return y;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

template <typename F>
void check_gradient(F loss, std::vector<double> p, const std::vector<double>& grad) {
    const double h = 1e-5;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double keep = p[i];
        p[i] = keep + h;
        const double up = loss(p);
        p[i] = keep - h;
        const double down = loss(p);
        p[i] = keep;
        ASSERT_LT(rel_err((up - down) / (2 * h), grad[i]), 1e-4) << "index " << i;
    }
}

double brute_min_cost(const CostMatrix& c) {
    const std::size_t n = c.rows(), m = c.cols();
    const std::size_t k = std::min(n, m);
    if (k == 0) return 0.0;
    double best = INFINITY;
    if (n <= m) {
        std::vector<std::size_t> cols(m);
        std::iota(cols.begin(), cols.end(), 0);
        do {
            double s = 0;
            for (std::size_t r = 0; r < n; ++r) s += c(r, cols[r]);
            best = std::min(best, s);
        } while (std::next_permutation(cols.begin(), cols.end()));
    } else {
        std::vector<std::size_t> rows(n);
        std::iota(rows.begin(), rows.end(), 0);
        do {
            double s = 0;
            for (std::size_t col = 0; col < m; ++col) s += c(rows[col], col);
            best = std::min(best, s);
        } while (std::next_permutation(rows.begin(), rows.end()));
    }
    return best;
}

}  // namespace

TEST(Focal, PerfectPredictionIsNearZero) {
    const std::vector<double> y{1, 0, 1, 0};
    EXPECT_LE(focal_loss(y, y, {}).value, 1e-5);
}

TEST(Focal, GammaZeroIsHalfBce) {
    Rng rng(1);
    for (int t = 0; t < 50; ++t) {
        const auto p = random_probs(rng, 16);
        const auto y = random_targets(rng, 16);
        double bce = 0;
        for (std::size_t i = 0; i < p.size(); ++i) bce += -(y[i] * std::log(p[i]) + (1 - y[i]) * std::log(1 - p[i]));
        bce /= static_cast<double>(p.size());
        EXPECT_NEAR(focal_loss(p, y, {0.5, 0.0}).value, 0.5 * bce, 1e-12);
    }
}

TEST(Focal, GradientMatchesFiniteDifferences) {
    Rng rng(2);
    for (int t = 0; t < 10; ++t) {
        const auto p = random_probs(rng, 10);
        const auto y = random_targets(rng, 10);
        const FocalParams fp;
        check_gradient([&](const std::vector<double>& q) { return focal_loss(q, y, fp).value; }, p,
                       focal_loss(p, y, fp).grad);
    }
}

TEST(Focal, ClampedPointsHaveZeroGradient) {
    const std::vector<double> p{0.0, 1.0}, y{1.0, 0.0};
    const auto r = focal_loss(p, y, {});
    EXPECT_TRUE(std::isfinite(r.value));
    EXPECT_EQ(r.grad[0], 0.0);
    EXPECT_EQ(r.grad[1], 0.0);
}

TEST(Focal, ShapeMismatchAndBadParams) {
    const std::vector<double> a{0.5}, b{1, 0};
    EXPECT_THROW(focal_loss(a, b, {}), DimensionMismatch);
    EXPECT_THROW(focal_loss(a, a, {1.5, 2}), InvalidArgument);
}

TEST(Dice, Examples) {
    const std::vector<double> y{1, 0, 1, 1};
    EXPECT_DOUBLE_EQ(dice_loss(y, y).value, 0.0);
    const std::vector<double> z{0, 0, 0};
    EXPECT_DOUBLE_EQ(dice_loss(z, z).value, 0.0);
    const std::vector<double> p{0.5, 0.5}, t{1, 0};
    EXPECT_DOUBLE_EQ(dice_loss(p, t).value, 1.0 - 2.0 / 3.0);
    EXPECT_THROW(dice_loss(p, y), DimensionMismatch);
}

TEST(Dice, GradientMatchesFiniteDifferences) {
    Rng rng(3);
    for (int t = 0; t < 10; ++t) {
        const auto p = random_probs(rng, 10);
        const auto y = random_targets(rng, 10);
        check_gradient([&](const std::vector<double>& q) { return dice_loss(q, y).value; }, p, dice_loss(p, y).grad);
    }
}

TEST(Presence, Examples) {
    EXPECT_DOUBLE_EQ(presence_loss(0, true).value, std::log(2.0));
    EXPECT_DOUBLE_EQ(presence_loss(0, false).value, std::log(2.0));
    EXPECT_LT(presence_loss(20, true).value, 1e-8);
    EXPECT_TRUE(std::isfinite(presence_loss(-800, true).value));
    EXPECT_NEAR(presence_loss(-800, true).value, 800.0, 1e-9);
}

TEST(Presence, GradientIsSigmoidMinusLabel) {
    Rng rng(4);
    for (int t = 0; t < 100; ++t) {
        const double x = rng.uniform(-8, 8);
        const bool e = rng.bernoulli(0.5);
        const auto r = presence_loss(x, e);
        EXPECT_NEAR(r.grad, 1.0 / (1.0 + std::exp(-x)) - (e ? 1.0 : 0.0), 1e-12);
        const double h = 1e-5;
        const double fd = (presence_loss(x + h, e).value - presence_loss(x - h, e).value) / (2 * h);
        EXPECT_LT(rel_err(fd, r.grad), 1e-4);
    }
}

TEST(Composite, WeightedSum) {
    const LossComponents c{0.3, 0.2, 0.1, 0.4};
    EXPECT_DOUBLE_EQ(composite_loss(c, LossWeights::standard()), 27.0);
    EXPECT_EQ(composite_loss({}, LossWeights::standard()), 0.0);
    EXPECT_EQ(composite_loss(c, LossWeights::standard()), 10.0 * composite_loss(c, LossWeights::normalized()));
    LossWeights bad;
    bad.dice = -1;
    EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(Composite, LinearInWeights) {
    Rng rng(5);
    for (int t = 0; t < 100; ++t) {
        const LossComponents c{rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
        const LossWeights w{rng.uniform(0, 60), rng.uniform(0, 60), rng.uniform(0, 60), rng.uniform(0, 60)};
        const LossWeights w2{2 * w.mask, 2 * w.dice, 2 * w.ce, 2 * w.presence};
        EXPECT_EQ(composite_loss(c, w2), 2 * composite_loss(c, w));
    }
}

TEST(Hungarian, Examples) {
    CostMatrix id(3, 3, 1.0);
    for (int i = 0; i < 3; ++i) id(i, i) = 0;
    const auto a = hungarian_match(id);
    EXPECT_EQ(a.cost, 0.0);
    EXPECT_EQ(a.pairs, (std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}, {1, 1}, {2, 2}}));
    const auto one = hungarian_match(CostMatrix(1, 1, 3.5));
    EXPECT_EQ(one.pairs.size(), 1u);
    EXPECT_EQ(one.cost, 3.5);
    EXPECT_TRUE(hungarian_match(CostMatrix()).pairs.empty());
    EXPECT_THROW(hungarian_match(CostMatrix(2, 2, std::vector<double>{0, NAN, 1, 1})), InvalidArgument);
}

TEST(Hungarian, TiesPreferLowestIndices) {
    const auto a = hungarian_match(CostMatrix(3, 3, 1.0));
    EXPECT_EQ(a.pairs, (std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}, {1, 1}, {2, 2}}));
    const auto wide = hungarian_match(CostMatrix(2, 4, 0.0));
    EXPECT_EQ(wide.pairs, (std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}, {1, 1}}));
    const auto tall = hungarian_match(CostMatrix(4, 2, 0.0));
    EXPECT_EQ(tall.pairs, (std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}, {1, 1}}));
}

TEST(Hungarian, MatchesBruteForce) {
    Rng rng(6);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = static_cast<std::size_t>(rng.uniform_int(1, 7));
        const std::size_t m = static_cast<std::size_t>(rng.uniform_int(1, 7));
        CostMatrix c(n, m);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t k = 0; k < m; ++k) c(r, k) = t % 4 == 0 ? double(rng.uniform_int(0, 3)) : rng.uniform(-5, 5);
        }
        const auto a = hungarian_match(c);
        ASSERT_EQ(a.pairs.size(), std::min(n, m));
        double s = 0;
        std::vector<bool> used_r(n), used_c(m);
        for (auto [r, k] : a.pairs) {
            ASSERT_FALSE(used_r[r]);
            ASSERT_FALSE(used_c[k]);
            used_r[r] = used_c[k] = true;
            s += c(r, k);
        }
        ASSERT_NEAR(a.cost, s, 1e-9);
        ASSERT_NEAR(a.cost, brute_min_cost(c), 1e-9);
    }
}

TEST(Hungarian, BeatsRandomPermutations) {
    Rng rng(7);
    const std::size_t n = 12;
    CostMatrix c(n, n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t k = 0; k < n; ++k) c(r, k) = rng.uniform();
    }
    const double best = hungarian_match(c).cost;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int t = 0; t < 1000; ++t) {
        for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_int(0, std::int64_t(i) - 1)]);
        double s = 0;
        for (std::size_t r = 0; r < n; ++r) s += c(r, perm[r]);
        ASSERT_LE(best, s + 1e-12);
    }
}

TEST(OneToMany, Examples) {
    Rng rng(8);
    CostMatrix c(5, 3);
    for (std::size_t r = 0; r < 5; ++r) {
        for (std::size_t k = 0; k < 3; ++k) c(r, k) = rng.uniform();
    }
    const auto base = hungarian_match(c);
    const auto none = one_to_many_augment(c, base, 0, 2.0);
    ASSERT_EQ(none.size(), base.pairs.size());
    for (std::size_t i = 0; i < none.size(); ++i) {
        EXPECT_EQ(none[i].pred, base.pairs[i].first);
        EXPECT_EQ(none[i].weight, 1.0);
    }
    const auto aug = one_to_many_augment(c, base, 4, 2.0);
    for (const auto& p : base.pairs) {
        EXPECT_NE(std::find(aug.begin(), aug.end(), WeightedPair{p.first, p.second, 1.0}), aug.end());
    }
    EXPECT_EQ(aug.size(), base.pairs.size() + 3 * 4);

    const CostMatrix two(2, 1, std::vector<double>{0.3, 0.1});
    const auto b2 = hungarian_match(two);
    const auto a2 = one_to_many_augment(two, b2, 4, 2.0);
    ASSERT_EQ(a2.size(), 2u);
    EXPECT_EQ(a2[0], (WeightedPair{1, 0, 1.0}));
    EXPECT_EQ(a2[1], (WeightedPair{0, 0, 2.0}));
}

TEST(Schedule, KeyValues) {
    const LrSchedule s;
    const auto groups = default_param_groups(4);
    const auto& dec = groups[0];
    EXPECT_EQ(dec.kind, GroupKind::Decoder);
    EXPECT_DOUBLE_EQ(s.lr(dec, 30), 8e-5);
    EXPECT_DOUBLE_EQ(s.lr(dec, 1), 8e-5 / 30);
    EXPECT_NEAR(s.lr(dec, 60), 8e-6, 1e-18);
    EXPECT_NEAR(s.lr(dec, 90), 8e-6, 1e-18);
    const ParamGroup bb2{"backbone.2", GroupKind::Backbone, 2};
    EXPECT_NEAR(s.lr(bb2, 30), 2.401e-5, 1e-15);
    const ParamGroup text{"text_encoder", GroupKind::TextEncoder, 0};
    for (int e = 1; e <= 90; ++e) EXPECT_EQ(s.lr(text, e), 0.0);
    EXPECT_THROW(s.lr(dec, 0), OutOfBounds);
    EXPECT_THROW(s.lr(dec, 91), OutOfBounds);
}

TEST(Schedule, ContinuousAtBoundaries) {
    const LrSchedule s;
    for (const auto& g : default_param_groups(4)) {
        const double peak = s.peak(g);
        EXPECT_EQ(s.lr(g, 30), peak);
        // The decay formula at its own start gives the peak as well.
        EXPECT_NEAR(s.lr(g, 31), peak * (0.1 + 0.9 * 0.5 * (1 + std::cos(M_PI * 1.0 / 30))), 1e-18);
        EXPECT_EQ(s.lr(g, 60), s.lr(g, 61));
        for (int e = 31; e < 60; ++e) EXPECT_LE(s.lr(g, e + 1), s.lr(g, e));
    }
}

TEST(Schedule, TableAndCsv) {
    const LrSchedule s;
    const auto groups = default_param_groups(4);
    EXPECT_EQ(groups.size(), 6u);
    const auto table = emit_schedule(s, groups);
    EXPECT_EQ(table.size(), 90u * groups.size());
    const auto csv = schedule_csv(table);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,group,lr");
    EXPECT_NE(csv.find("\n30,decoder,8e-05\n"), std::string::npos);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), static_cast<long>(table.size() + 1));
}
