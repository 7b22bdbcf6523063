#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

#include "oracles.hpp"
#include "sos/mask.hpp"
#include "support.hpp"

using namespace sos;
using testing_support::Gen;
using testing_support::mask_of;
using testing_support::rect;

namespace {

std::vector<std::uint32_t> runs(const BinaryMask& m) { return {m.counts().begin(), m.counts().end()}; }

}  // namespace

TEST(Encode, AllFalse) {
    EXPECT_EQ(runs(encode(BoolGrid(2, 2, 0))), (std::vector<std::uint32_t>{4}));
}

TEST(Encode, AllTrue) {
    EXPECT_EQ(runs(encode(BoolGrid(2, 2, 1))), (std::vector<std::uint32_t>{0, 4}));
}

TEST(Encode, SinglePixelColumnMajor) {
    BoolGrid g(2, 2, 0);
    g(1, 0) = 1;
    EXPECT_EQ(runs(encode(g)), (std::vector<std::uint32_t>{2, 1, 1}));
}

TEST(Encode, ZeroSizedGridIsDimensionError) {
    EXPECT_THROW(encode(BoolGrid(0, 3)), DimensionError);
}

TEST(BinaryMask, RejectsBadRuns) {
    EXPECT_THROW(BinaryMask(2, 2, {1, 2}), ParseError);
    EXPECT_THROW(BinaryMask(2, 2, {1, 0, 3}), ParseError);
    EXPECT_THROW(BinaryMask(2, 2, {}), ParseError);
    EXPECT_NO_THROW(BinaryMask(2, 2, {0, 4}));
}

TEST(Encode, RoundTripProperty) {
    Gen gen(11);
    for (int i = 0; i < 500; ++i) {
        const int h = gen.uniform_int(1, 9);
        const int w = gen.uniform_int(1, 9);
        const auto g = gen.grid(h, w, gen.uniform());
        const auto m = encode(g);
        EXPECT_TRUE(decode(m).values().size() == g.values().size());
        EXPECT_TRUE(std::equal(g.values().begin(), g.values().end(), decode(m).values().begin()));
        EXPECT_EQ(m.area(), oracle::dense_area(m));
    }
}

TEST(MaskIou, Identity) {
    const auto m = mask_of(3, 3, {{0, 0}, {1, 2}});
    EXPECT_DOUBLE_EQ(mask_iou(m, m), 1.0);
}

TEST(MaskIou, Disjoint) {
    EXPECT_DOUBLE_EQ(mask_iou(mask_of(3, 3, {{0, 0}}), mask_of(3, 3, {{2, 2}})), 0.0);
}

TEST(MaskIou, HandEnumerated) {
    const auto a = mask_of(2, 2, {{0, 0}, {0, 1}});
    const auto b = mask_of(2, 2, {{0, 1}, {1, 1}});
    EXPECT_DOUBLE_EQ(mask_iou(a, b), 1.0 / 3.0);
}

TEST(MaskIou, BothEmptyIsZero) {
    EXPECT_DOUBLE_EQ(mask_iou(BinaryMask::empty(2, 3), BinaryMask::empty(2, 3)), 0.0);
}

TEST(MaskIou, DimensionMismatch) {
    EXPECT_THROW(mask_iou(BinaryMask::empty(2, 3), BinaryMask::empty(3, 2)), DimensionError);
}

TEST(MaskIou, SymmetricAndMatchesDenseCount) {
    Gen gen(12);
    for (int i = 0; i < 500; ++i) {
        const int h = gen.uniform_int(1, 8);
        const int w = gen.uniform_int(1, 8);
        const auto a = gen.mask(h, w, gen.uniform());
        const auto b = gen.mask(h, w, gen.uniform());
        EXPECT_DOUBLE_EQ(mask_iou(a, b), mask_iou(b, a));
        EXPECT_DOUBLE_EQ(mask_iou(a, b), oracle::dense_iou(a, b));
        if (a.area() > 0) {
            EXPECT_DOUBLE_EQ(mask_iou(a, a), 1.0);
        }
    }
}

TEST(MaskStats, SinglePixel) {
    const auto s = mask_stats(mask_of(10, 10, {{3, 7}}));
    EXPECT_EQ(s.area, 1u);
    ASSERT_TRUE(s.centroid);
    EXPECT_DOUBLE_EQ(s.centroid->x, 3.0);
    EXPECT_DOUBLE_EQ(s.centroid->y, 7.0);
    EXPECT_EQ(*s.bbox, (BBox{3, 7, 3, 7}));
}

TEST(MaskStats, EmptyHasNoCentroid) {
    const auto s = mask_stats(BinaryMask::empty(4, 4));
    EXPECT_EQ(s.area, 0u);
    EXPECT_FALSE(s.centroid);
    EXPECT_FALSE(s.bbox);
    EXPECT_FALSE(s.prompt());
}

TEST(MaskStats, Full4x2) {
    // 4 columns, 2 rows.
    const auto s = mask_stats(encode(BoolGrid(2, 4, 1)));
    EXPECT_EQ(s.area, 8u);
    EXPECT_DOUBLE_EQ(s.centroid->x, 1.5);
    EXPECT_DOUBLE_EQ(s.centroid->y, 0.5);
    EXPECT_EQ(*s.bbox, (BBox{0, 0, 3, 1}));
}

TEST(MaskStats, BboxTightProperty) {
    Gen gen(13);
    for (int i = 0; i < 300; ++i) {
        const int h = gen.uniform_int(1, 9);
        const int w = gen.uniform_int(1, 9);
        const auto g = gen.grid(h, w, 0.3);
        const auto s = mask_stats(encode(g));
        int x0 = w, y0 = h, x1 = -1, y1 = -1;
        double sx = 0, sy = 0;
        std::size_t n = 0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (g(x, y)) {
                    x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
                    sx += x, sy += y, ++n;
                }
        ASSERT_EQ(s.area, n);
        if (n == 0) continue;
        EXPECT_EQ(*s.bbox, (BBox{x0, y0, x1, y1}));
        EXPECT_NEAR(s.centroid->x, sx / n, 1e-12);
        EXPECT_NEAR(s.centroid->y, sy / n, 1e-12);
    }
}

TEST(MaskNms, IdenticalKeepsHigherScore) {
    const auto m = rect(4, 4, 0, 0, 2, 2);
    const std::vector<ScoredSegment> segs{{m, 0.8, 0}, {m, 0.9, 1}};
    const auto kept = mask_nms(segs, 0.95);
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_DOUBLE_EQ(kept[0].score, 0.9);
}

TEST(MaskNms, DisjointBothKept) {
    const std::vector<ScoredSegment> segs{{rect(4, 4, 0, 0, 2, 2), 0.3, 0}, {rect(4, 4, 2, 2, 4, 4), 0.7, 1}};
    const auto kept = mask_nms_indices(segs, 0.95);
    EXPECT_EQ(kept, (std::vector<std::size_t>{1, 0}));
}

TEST(MaskNms, TieBreakByAreaThenIndex) {
    const auto big = rect(4, 4, 0, 0, 3, 3);
    const auto small = rect(4, 4, 0, 0, 2, 2);
    const std::vector<ScoredSegment> segs{{small, 0.9, 0}, {big, 0.9, 1}, {small, 0.9, 2}};
    EXPECT_EQ(mask_nms_indices(segs, 0.4), (std::vector<std::size_t>{1}));
    EXPECT_EQ(mask_nms_indices(segs, 0.5), (std::vector<std::size_t>{1, 0}));
}

TEST(MaskNms, EmptyInputAndBadTau) {
    EXPECT_TRUE(mask_nms({}, 0.5).empty());
    EXPECT_THROW(mask_nms({}, 1.5), PreconditionError);
}

TEST(MaskNms, DimensionMismatch) {
    const std::vector<ScoredSegment> segs{{BinaryMask::empty(2, 2), 0.5, 0}, {BinaryMask::empty(3, 3), 0.5, 1}};
    EXPECT_THROW(mask_nms(segs, 0.5), DimensionError);
}

TEST(MaskNms, MatchesOracleOnRandomSets) {
    Gen gen(14);
    for (int i = 0; i < 300; ++i) {
        std::vector<ScoredSegment> segs;
        const int n = gen.uniform_int(1, 5);
        for (int k = 0; k < n; ++k)
            segs.push_back({gen.coin(0.3) && k > 0 ? segs[static_cast<std::size_t>(gen.uniform_int(0, k - 1))].mask
                                                   : gen.rect_mask(5, 5),
                            gen.uniform_int(0, 3) / 3.0, static_cast<std::size_t>(k)});
        const double tau = gen.uniform_int(0, 10) / 10.0;
        EXPECT_EQ(mask_nms_indices(segs, tau), oracle::nms(segs, tau));
    }
}

TEST(MaskNms, MonotoneInTau) {
    Gen gen(15);
    for (int i = 0; i < 200; ++i) {
        std::vector<ScoredSegment> segs;
        for (int k = 0; k < 6; ++k) segs.push_back({gen.mask(6, 6, 0.5), gen.uniform(), static_cast<std::size_t>(k)});
        std::size_t prev = 0;
        for (int t = 0; t <= 10; ++t) {
            const auto kept = mask_nms_indices(segs, t / 10.0);
            EXPECT_GE(kept.size(), prev);
            prev = kept.size();
        }
    }
}

TEST(MaskNms, OutputIsSubsetAndPairwiseBelowTau) {
    Gen gen(16);
    for (int i = 0; i < 200; ++i) {
        std::vector<ScoredSegment> segs;
        for (int k = 0; k < 8; ++k) segs.push_back({gen.rect_mask(6, 6), gen.uniform(), static_cast<std::size_t>(k)});
        const double tau = gen.uniform();
        const auto kept = mask_nms(segs, tau);
        for (std::size_t a = 0; a < kept.size(); ++a) {
            EXPECT_NE(std::find(segs.begin(), segs.end(), kept[a]), segs.end());
            for (std::size_t b = a + 1; b < kept.size(); ++b) EXPECT_LT(mask_iou(kept[a].mask, kept[b].mask), tau);
        }
    }
}

TEST(IouAtLeast, AgreesWithDirectComparison) {
    Gen gen(17);
    for (int i = 0; i < 500; ++i) {
        const auto a = gen.rect_mask(7, 7);
        const auto b = gen.rect_mask(7, 7);
        const double tau = gen.uniform_int(0, 20) / 20.0;
        EXPECT_EQ(iou_at_least(a, b, tau), mask_iou(a, b) >= tau);
    }
}
