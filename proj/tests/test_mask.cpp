#include <gtest/gtest.h>

#include <queue>

#include "irsis/mask.hpp"
#include "test_support.hpp"

using namespace irsis;
using namespace irsis::testing;

namespace {

// Window rules: dilation looks at in-image neighbours only; erosion requires
// every in-image neighbour to be set.
BinaryMask brute_dilate(const BinaryMask& m, int r) {
    BinaryMask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            bool any = false;
            for (int dy = -r; dy <= r && !any; ++dy) {
                for (int dx = -r; dx <= r && !any; ++dx) {
                    const int u = x + dx, v = y + dy;
                    any = u >= 0 && v >= 0 && u < m.width() && v < m.height() && m.get(u, v);
                }
            }
            if (any) out.set(x, y);
        }
    }
    return out;
}

BinaryMask brute_erode(const BinaryMask& m, int r) {
    BinaryMask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            bool all = true;
            for (int dy = -r; dy <= r && all; ++dy) {
                for (int dx = -r; dx <= r && all; ++dx) {
                    const int u = x + dx, v = y + dy;
                    if (u >= 0 && v >= 0 && u < m.width() && v < m.height()) all = m.get(u, v);
                }
            }
            if (all) out.set(x, y);
        }
    }
    return out;
}

int flood_fill_count(const BinaryMask& m) {
    std::vector<char> seen(static_cast<std::size_t>(m.width()) * m.height(), 0);
    int n = 0;
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            if (!m.get(x, y) || seen[y * m.width() + x]) continue;
            ++n;
            std::queue<std::pair<int, int>> q;
            q.push({x, y});
            seen[y * m.width() + x] = 1;
            while (!q.empty()) {
                auto [cx, cy] = q.front();
                q.pop();
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int u = cx + dx, v = cy + dy;
                        if (u < 0 || v < 0 || u >= m.width() || v >= m.height()) continue;
                        if (!m.get(u, v) || seen[v * m.width() + u]) continue;
                        seen[v * m.width() + u] = 1;
                        q.push({u, v});
                    }
                }
            }
        }
    }
    return n;
}

}  // namespace

TEST(Mask, GetSetAndArea) {
    BinaryMask m(70, 3);
    EXPECT_TRUE(m.none());
    m.set(0, 0);
    m.set(63, 1);
    m.set(64, 1);
    m.set(69, 2);
    EXPECT_EQ(m.area(), 4);
    EXPECT_TRUE(m.get(64, 1));
    m.set(64, 1, false);
    EXPECT_EQ(m.area(), 3);
    EXPECT_THROW(m.get(70, 0), OutOfBounds);
    EXPECT_THROW(m.set(0, -1), OutOfBounds);
}

TEST(Mask, RejectsBadDimensions) {
    EXPECT_THROW(BinaryMask(0, 4), InvalidArgument);
    EXPECT_THROW(BinaryMask(4, -1), InvalidArgument);
}

TEST(Mask, FilledHasNoPaddingBits) {
    const auto m = BinaryMask::filled(65, 2);
    EXPECT_EQ(m.area(), 130);
    EXPECT_EQ(complement(m).area(), 0);
    EXPECT_EQ(m, complement(BinaryMask(65, 2)));
}

TEST(Mask, BoxHelpers) {
    const BoundingBox b{2, 1, 5, 4};
    EXPECT_EQ(b.area(), 9);
    EXPECT_TRUE(b.contains(2, 1));
    EXPECT_FALSE(b.contains(5, 1));
    EXPECT_FALSE(b.contains(2, 4));
    const auto m = BinaryMask::from_box(8, 8, b);
    EXPECT_EQ(m.area(), 9);
    EXPECT_EQ(m.tight_box()->x1, 5);
    EXPECT_THROW(require_fits({0, 0, 9, 1}, 8, 8), OutOfBounds);
    EXPECT_THROW(require_fits({3, 0, 3, 1}, 8, 8), OutOfBounds);
    EXPECT_FALSE(BinaryMask(4, 4).tight_box().has_value());
}

TEST(Mask, SizeMismatchThrows) {
    EXPECT_THROW(unite(BinaryMask(4, 4), BinaryMask(4, 5)), DimensionMismatch);
    EXPECT_THROW(intersect(BinaryMask(4, 4), BinaryMask(5, 4)), DimensionMismatch);
}

TEST(Mask, StructuringElementMustBeOdd) {
    EXPECT_THROW(StructuringElement::square(4), InvalidArgument);
    EXPECT_THROW(StructuringElement::square(0), InvalidArgument);
    EXPECT_EQ(StructuringElement::square(5).radius(), 2);
}

TEST(MaskProperty, InclusionExclusion) {
    Rng rng(11);
    for (int i = 0; i < 200; ++i) {
        const int w = static_cast<int>(rng.uniform_int(1, 130)), h = static_cast<int>(rng.uniform_int(1, 40));
        const auto a = random_mask(rng, w, h), b = random_mask(rng, w, h);
        EXPECT_EQ(unite(a, b).area() + intersect(a, b).area(), a.area() + b.area());
        EXPECT_EQ(a.area(), count_pixels(a));
        EXPECT_EQ(intersection_area(a, b), intersect(a, b).area());
        EXPECT_EQ(subtract(a, b), intersect(a, complement(b)));
    }
}

TEST(MaskProperty, BoxSplitIsAPartition) {
    Rng rng(12);
    for (int i = 0; i < 200; ++i) {
        const int w = static_cast<int>(rng.uniform_int(1, 100)), h = static_cast<int>(rng.uniform_int(1, 40));
        const auto m = random_mask(rng, w, h);
        const auto b = random_box(rng, w, h);
        const auto out = subtract_box(m, b), in = intersect_mask_box(m, b);
        EXPECT_EQ(unite(out, in), m);
        EXPECT_EQ(intersection_area(out, in), 0);
        EXPECT_EQ(area_in_box(m, b), in.area());
        EXPECT_EQ(in, intersect(m, BinaryMask::from_box(w, h, b)));
    }
}

TEST(MaskProperty, BoxUnionMatchesPixelLoop) {
    Rng rng(13);
    for (int i = 0; i < 100; ++i) {
        std::vector<BoundingBox> boxes;
        const int n = static_cast<int>(rng.uniform_int(1, 5));
        for (int k = 0; k < n; ++k) boxes.push_back(random_box(rng, 40, 30));
        const auto u = box_union(boxes, 40, 30);
        for (int y = 0; y < 30; ++y) {
            for (int x = 0; x < 40; ++x) {
                bool inside = false;
                for (const auto& b : boxes) inside = inside || b.contains(x, y);
                ASSERT_EQ(u.get(x, y), inside);
            }
        }
    }
}

TEST(Morphology, MatchesWindowOracle) {
    Rng rng(21);
    for (int i = 0; i < 60; ++i) {
        const int w = static_cast<int>(rng.uniform_int(1, 90)), h = static_cast<int>(rng.uniform_int(1, 30));
        const auto m = random_mask(rng, w, h);
        for (int side : {1, 3, 5, 7}) {
            const auto k = StructuringElement::square(side);
            ASSERT_EQ(dilate(m, k), brute_dilate(m, k.radius()));
            ASSERT_EQ(erode(m, k), brute_erode(m, k.radius()));
        }
    }
}

TEST(Morphology, KernelOneIsIdentity) {
    Rng rng(22);
    const auto m = random_mask(rng, 33, 17);
    const auto k = StructuringElement::square(1);
    EXPECT_EQ(dilate(m, k), m);
    EXPECT_EQ(erode(m, k), m);
    EXPECT_EQ(morph_clean(m, k), m);
}

TEST(Morphology, OpeningRemovesSpecksClosingFillsHoles) {
    BinaryMask m(20, 20);
    m.fill_box({4, 4, 16, 16}, true);
    m.set(10, 10, false);
    m.set(1, 1);
    const auto k = StructuringElement::square(3);
    EXPECT_FALSE(morph_open(m, k).get(1, 1));
    EXPECT_TRUE(morph_close(m, k).get(10, 10));
    const auto clean = morph_clean(m, k);
    EXPECT_FALSE(clean.get(1, 1));
    EXPECT_TRUE(clean.get(10, 10));
}

TEST(MorphologyProperty, IdempotenceAndOrdering) {
    Rng rng(23);
    for (int i = 0; i < 200; ++i) {
        const int w = static_cast<int>(rng.uniform_int(1, 80)), h = static_cast<int>(rng.uniform_int(1, 50));
        const auto m = i % 2 ? random_mask(rng, w, h) : random_blobs(rng, w, h);
        const auto k = StructuringElement::square(static_cast<int>(rng.uniform_int(0, 3)) * 2 + 1);
        const auto o = morph_open(m, k), c = morph_close(m, k);
        ASSERT_EQ(morph_open(o, k), o);
        ASSERT_EQ(morph_close(c, k), c);
        ASSERT_TRUE(is_subset(o, m));
        ASSERT_TRUE(is_subset(m, c));
    }
}

TEST(Components, Examples) {
    EXPECT_TRUE(connected_components(BinaryMask(8, 8)).empty());
    BinaryMask m(10, 10);
    m.fill_box({0, 0, 2, 2}, true);
    m.fill_box({5, 5, 7, 7}, true);
    const auto cc = connected_components(m);
    ASSERT_EQ(cc.size(), 2u);
    EXPECT_EQ(cc[0].area, 4);
    EXPECT_EQ(cc[1].area, 4);
    EXPECT_TRUE(cc[0].mask.get(0, 0));
}

TEST(Components, DiagonalNeighboursJoin) {
    BinaryMask m(4, 4);
    m.set(0, 0);
    m.set(1, 1);
    m.set(2, 2);
    EXPECT_EQ(connected_components(m).size(), 1u);
}

TEST(ComponentsProperty, PartitionAndFloodFillCount) {
    Rng rng(31);
    for (int i = 0; i < 100; ++i) {
        const auto m = random_mask(rng, 32, 32, rng.uniform(0.05, 0.6));
        const auto cc = connected_components(m);
        ASSERT_EQ(static_cast<int>(cc.size()), flood_fill_count(m));
        BinaryMask all(32, 32);
        std::int64_t prev = INT64_MAX, total = 0;
        for (const auto& c : cc) {
            ASSERT_EQ(intersection_area(all, c.mask), 0);
            ASSERT_LE(c.area, prev);
            ASSERT_EQ(c.area, c.mask.area());
            prev = c.area;
            total += c.area;
            all |= c.mask;
        }
        ASSERT_EQ(all, m);
        ASSERT_EQ(total, m.area());
    }
}

TEST(Irle, Examples) {
    EXPECT_EQ(rle_encode(BinaryMask(2, 2)), "IRLE1 2 2\n4\n");
    EXPECT_EQ(rle_encode(BinaryMask::filled(2, 2)), "IRLE1 2 2\n0,4\n");
    BinaryMask m(3, 2);
    m.set(1, 0);
    m.set(2, 0);
    m.set(0, 1);
    EXPECT_EQ(rle_encode(m), "IRLE1 3 2\n1,3,2\n");
    EXPECT_EQ(rle_decode("IRLE1 3 2\n1,3,2\n"), m);
}

TEST(Irle, RejectsMalformedInput) {
    EXPECT_THROW(rle_decode(""), FormatError);
    EXPECT_THROW(rle_decode("IRLE2 2 2\n4\n"), FormatError);
    EXPECT_THROW(rle_decode("IRLE1 2 2\n3\n"), FormatError);
    EXPECT_THROW(rle_decode("IRLE1 2 2\n5\n"), FormatError);
    EXPECT_THROW(rle_decode("IRLE1 2 2\n2,x\n"), FormatError);
    EXPECT_THROW(rle_decode("IRLE1 0 2\n0\n"), FormatError);
    EXPECT_THROW(rle_decode("IRLE1 2 2\n4"), FormatError);
}

TEST(IrleProperty, RoundTripAndRunSum) {
    Rng rng(41);
    for (int i = 0; i < 300; ++i) {
        const int w = static_cast<int>(rng.uniform_int(1, 150)), h = static_cast<int>(rng.uniform_int(1, 60));
        const auto m = i % 3 ? random_mask(rng, w, h) : random_blobs(rng, w, h);
        const std::string enc = rle_encode(m);
        ASSERT_EQ(rle_decode(enc), m);
        const auto body = enc.substr(enc.find('\n') + 1);
        std::int64_t sum = 0;
        std::size_t pos = 0;
        while (pos < body.size() && body[pos] != '\n') {
            const auto next = body.find_first_of(",\n", pos);
            sum += std::stoll(body.substr(pos, next - pos));
            pos = next + (body[next] == ',' ? 1 : 0);
        }
        ASSERT_EQ(sum, std::int64_t(w) * h);
    }
}

TEST(Mask, HashDistinguishesContentAndShape) {
    BinaryMask a(4, 4), b(4, 4), c(2, 8);
    b.set(1, 1);
    EXPECT_EQ(a.hash(), BinaryMask(4, 4).hash());
    EXPECT_NE(a.hash(), b.hash());
    EXPECT_NE(a.hash(), c.hash());
}
