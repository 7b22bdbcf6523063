#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "sos/eval.hpp"
#include "support.hpp"

using namespace sos;
using testing_support::Gen;
using testing_support::record;
using testing_support::rect;

namespace {

double round1(double v) { return std::round(v * 10.0) / 10.0; }

AnnotationSet gt_set(int images, int h, int w) {
    AnnotationSet s;
    for (int i = 1; i <= images; ++i) s.images[i] = {"img" + std::to_string(i) + ".png", h, w};
    return s;
}

struct Instance {
    AnnotationSet gt;
    std::vector<Detection> dets;
};

Instance random_instance(Gen& gen, int max_images, int max_masks) {
    Instance in;
    const int n_img = gen.uniform_int(1, max_images);
    in.gt = gt_set(n_img, 6, 6);
    std::int64_t id = 1;
    for (int i = 1; i <= n_img; ++i) {
        for (int k = gen.uniform_int(0, max_masks); k > 0; --k) in.gt.annotations.push_back(record(id++, i, gen.rect_mask(6, 6)));
        for (int k = gen.uniform_int(0, max_masks); k > 0; --k) {
            // Mix near-copies of ground truth with random boxes.
            const auto& anns = in.gt.annotations;
            BinaryMask m = gen.rect_mask(6, 6);
            if (!anns.empty() && anns.back().image_id == i && gen.coin(0.5)) m = anns.back().mask;
            in.dets.push_back({i, m, gen.uniform_int(0, 8) / 8.0});
        }
    }
    if (in.gt.annotations.empty()) in.gt.annotations.push_back(record(id, 1, gen.rect_mask(6, 6)));
    return in;
}

}  // namespace

TEST(F1, TableRows) {
    EXPECT_DOUBLE_EQ(round1(f1(8.9, 38.1)), 14.4);
    EXPECT_DOUBLE_EQ(round1(f1(3.8, 36.5)), 6.9);
    EXPECT_DOUBLE_EQ(f1(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(f1(12.5, 12.5), 12.5);
    EXPECT_THROW(f1(-1, 2), PreconditionError);
}

TEST(CocoGrids, MatchNumpyLinspace) {
    const auto t = coco_iou_thresholds();
    EXPECT_EQ(t[0], 0.5);
    EXPECT_EQ(t[8], 0.8999999999999999);
    EXPECT_EQ(t[9], 0.95);
    const auto r = coco_recall_points();
    EXPECT_EQ(r[35], 0.35000000000000003);
    EXPECT_EQ(r[100], 1.0);
}

TEST(GreedyMatch, TieGoesToLaterGroundTruth) {
    EXPECT_EQ(greedy_match({{0.6, 0.6}}, 2, 0.5), (std::vector<int>{1}));
    EXPECT_EQ(greedy_match({{0.9, 0.6}, {0.9, 0.6}}, 2, 0.5), (std::vector<int>{0, 1}));
    EXPECT_EQ(greedy_match({{0.4}}, 1, 0.5), (std::vector<int>{-1}));
}

TEST(GreedyMatch, MatchesOracle) {
    Gen gen(71);
    for (int i = 0; i < 500; ++i) {
        const std::size_t nd = static_cast<std::size_t>(gen.uniform_int(0, 4));
        const std::size_t ng = static_cast<std::size_t>(gen.uniform_int(0, 4));
        std::vector<std::vector<double>> iou(nd, std::vector<double>(ng));
        for (auto& row : iou)
            for (auto& v : row) v = gen.uniform_int(0, 5) / 5.0;
        const double thr = gen.uniform_int(0, 5) / 5.0;
        EXPECT_EQ(greedy_match(iou, ng, thr), oracle::greedy_match(iou, ng, thr));
    }
}

TEST(EvaluateDetections, PerfectDetection) {
    auto gt = gt_set(1, 8, 8);
    gt.annotations.push_back(record(1, 1, rect(8, 8, 1, 1, 5, 5)));
    const std::vector<Detection> dets{{1, rect(8, 8, 1, 1, 5, 5), 0.7}};
    const auto r = evaluate_detections(dets, gt);
    EXPECT_DOUBLE_EQ(r.ap, 100.0);
    EXPECT_DOUBLE_EQ(r.ar100, 100.0);
    EXPECT_DOUBLE_EQ(r.f1, 100.0);
    EXPECT_EQ(r.per_threshold.size(), 10u);
}

TEST(EvaluateDetections, DisjointDetection) {
    auto gt = gt_set(1, 8, 8);
    gt.annotations.push_back(record(1, 1, rect(8, 8, 0, 0, 2, 2)));
    const std::vector<Detection> dets{{1, rect(8, 8, 4, 4, 8, 8), 0.9}};
    const auto r = evaluate_detections(dets, gt);
    EXPECT_DOUBLE_EQ(r.ap, 0.0);
    EXPECT_DOUBLE_EQ(r.ar100, 0.0);
    EXPECT_DOUBLE_EQ(r.f1, 0.0);
}

TEST(EvaluateDetections, NoGroundTruthIsError) {
    const std::vector<Detection> dets{{1, rect(8, 8, 4, 4, 8, 8), 0.9}};
    EXPECT_THROW(evaluate_detections(dets, gt_set(1, 8, 8)), PreconditionError);
}

TEST(EvaluateDetections, ScoreOutOfRange) {
    auto gt = gt_set(1, 8, 8);
    gt.annotations.push_back(record(1, 1, rect(8, 8, 0, 0, 2, 2)));
    const std::vector<Detection> dets{{1, rect(8, 8, 4, 4, 8, 8), 1.5}};
    EXPECT_THROW(evaluate_detections(dets, gt), PreconditionError);
}

TEST(EvaluateDetections, TopHundredPerImage) {
    auto gt = gt_set(1, 8, 8);
    gt.annotations.push_back(record(1, 1, rect(8, 8, 0, 0, 2, 2)));
    std::vector<Detection> dets(100, Detection{1, rect(8, 8, 4, 4, 8, 8), 0.9});
    dets.push_back({1, rect(8, 8, 0, 0, 2, 2), 0.1});
    EXPECT_DOUBLE_EQ(evaluate_detections(dets, gt).ar100, 0.0);
    EXPECT_DOUBLE_EQ(evaluate_detections(dets, gt, 101).ar100, 100.0);
}

TEST(EvaluateDetections, MatchesReferenceOnRandomSets) {
    Gen gen(72);
    for (int i = 0; i < 300; ++i) {
        const auto in = random_instance(gen, 5, 6);
        const auto got = evaluate_detections(in.dets, in.gt);
        const auto want = oracle::evaluate(in.dets, in.gt);
        EXPECT_NEAR(got.ap, want.ap, 1e-6);
        EXPECT_NEAR(got.ar100, want.ar, 1e-6);
        EXPECT_NEAR(got.f1, f1(got.ap, got.ar100), 1e-12);
        EXPECT_GE(got.ap, 0.0);
        EXPECT_LE(got.ap, 100.0);
    }
}

TEST(EvaluateDetections, ScoreScalingInvariance) {
    Gen gen(73);
    for (int i = 0; i < 100; ++i) {
        auto in = random_instance(gen, 3, 5);
        const auto base = evaluate_detections(in.dets, in.gt);
        for (auto& d : in.dets) d.score *= 0.5;
        const auto scaled = evaluate_detections(in.dets, in.gt);
        EXPECT_DOUBLE_EQ(base.ap, scaled.ap);
        EXPECT_DOUBLE_EQ(base.ar100, scaled.ar100);
    }
}

TEST(EvaluateDetections, DuplicateOfSingleCandidateNeverIncreasesRecall) {
    Gen gen(74);
    int checked = 0;
    for (int i = 0; i < 300; ++i) {
        auto in = random_instance(gen, 3, 5);
        if (in.dets.empty()) continue;
        const auto pick = in.dets[static_cast<std::size_t>(gen.uniform_int(0, static_cast<int>(in.dets.size()) - 1))];
        int candidates = 0;
        for (const auto& g : in.gt.annotations)
            if (g.image_id == pick.image_id && mask_iou(pick.mask, g.mask) >= 0.5) ++candidates;
        if (candidates > 1) continue;
        ++checked;
        const auto base = evaluate_detections(in.dets, in.gt);
        in.dets.push_back(pick);
        EXPECT_LE(evaluate_detections(in.dets, in.gt).ar100, base.ar100 + 1e-12);
    }
    EXPECT_GT(checked, 100);
}

TEST(EvaluateDetections, DuplicateCanReachSecondCandidate) {
    // One detection overlapping two ground truths: the copy takes the one the original left.
    auto gt = gt_set(1, 4, 4);
    gt.annotations.push_back(record(1, 1, rect(4, 4, 0, 0, 4, 2)));
    gt.annotations.push_back(record(2, 1, rect(4, 4, 0, 0, 4, 3)));
    std::vector<Detection> dets{{1, rect(4, 4, 0, 0, 4, 2), 0.9}};
    const double one = evaluate_detections(dets, gt).per_threshold[0].recall;
    dets.push_back(dets[0]);
    EXPECT_DOUBLE_EQ(one, 50.0);
    EXPECT_DOUBLE_EQ(evaluate_detections(dets, gt).per_threshold[0].recall, 100.0);
}

TEST(PseudoQuality, OneOfTwo) {
    // Pseudo overlaps the first GT with IoU 0.6: 3 shared pixels of 5 in the union.
    const std::vector<AnnotationRecord> gts{record(1, 1, rect(8, 8, 0, 0, 4, 1)), record(2, 1, rect(8, 8, 0, 5, 4, 6))};
    const std::vector<AnnotationRecord> pseudo{record(3, 1, rect(8, 8, 1, 0, 5, 1), AnnotationSource::pseudo, 0.9)};
    ASSERT_DOUBLE_EQ(mask_iou(pseudo[0].mask, gts[0].mask), 0.6);
    const auto q = pseudo_quality(pseudo, gts);
    EXPECT_DOUBLE_EQ(q.precision, 100.0);
    EXPECT_DOUBLE_EQ(q.recall, 50.0);
    EXPECT_DOUBLE_EQ(round1(q.f1), 66.7);
}

TEST(PseudoQuality, IdenticalSets) {
    const std::vector<AnnotationRecord> gts{record(1, 1, rect(8, 8, 0, 0, 4, 1)), record(2, 2, rect(8, 8, 0, 5, 4, 6))};
    const auto q = pseudo_quality(gts, gts);
    EXPECT_DOUBLE_EQ(q.precision, 100.0);
    EXPECT_DOUBLE_EQ(q.recall, 100.0);
    EXPECT_DOUBLE_EQ(q.f1, 100.0);
}

TEST(PseudoQuality, EmptyGroundTruth) {
    EXPECT_THROW(pseudo_quality({}, {}), PreconditionError);
    const std::vector<AnnotationRecord> gts{record(1, 1, rect(8, 8, 0, 0, 4, 1))};
    EXPECT_DOUBLE_EQ(pseudo_quality({}, gts).precision, 0.0);
}

TEST(PseudoQuality, MatchesReferenceMatcher) {
    Gen gen(75);
    for (int i = 0; i < 300; ++i) {
        std::vector<AnnotationRecord> gts, pseudo;
        for (int k = gen.uniform_int(1, 6); k > 0; --k) gts.push_back(record(k, 1, gen.rect_mask(6, 6)));
        for (int k = gen.uniform_int(0, 6); k > 0; --k)
            pseudo.push_back(record(100 + k, 1, gen.rect_mask(6, 6), AnnotationSource::pseudo, gen.uniform_int(0, 4) / 4.0));
        std::vector<std::size_t> order(pseudo.size());
        for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return pseudo[a].score > pseudo[b].score; });
        std::vector<std::vector<double>> iou;
        for (const auto k : order) {
            iou.emplace_back();
            for (const auto& g : gts) iou.back().push_back(oracle::dense_iou(pseudo[k].mask, g.mask));
        }
        std::size_t matched = 0;
        for (const int m : oracle::greedy_match(iou, gts.size(), 0.5)) matched += m >= 0;
        const auto q = pseudo_quality(pseudo, gts);
        EXPECT_EQ(q.matched, matched);
        EXPECT_DOUBLE_EQ(q.recall, 100.0 * static_cast<double>(matched) / static_cast<double>(gts.size()));
    }
}

TEST(PseudoQuality, AddingIdenticalNeverLowersRecall) {
    Gen gen(76);
    for (int i = 0; i < 100; ++i) {
        std::vector<AnnotationRecord> gts, pseudo;
        for (int k = gen.uniform_int(1, 5); k > 0; --k) gts.push_back(record(k, 1, gen.rect_mask(6, 6)));
        for (int k = gen.uniform_int(0, 5); k > 0; --k)
            pseudo.push_back(record(100 + k, 1, gen.rect_mask(6, 6), AnnotationSource::pseudo, gen.uniform()));
        const double before = pseudo_quality(pseudo, gts).recall;
        pseudo.push_back(gts[static_cast<std::size_t>(gen.uniform_int(0, static_cast<int>(gts.size()) - 1))]);
        pseudo.back().score = gen.uniform();
        EXPECT_GE(pseudo_quality(pseudo, gts).recall, before);
    }
}

TEST(EvalReport, JsonCarriesProtocolNote) {
    auto gt = gt_set(1, 8, 8);
    gt.annotations.push_back(record(1, 1, rect(8, 8, 1, 1, 5, 5)));
    const std::vector<Detection> dets{{1, rect(8, 8, 1, 1, 5, 5), 0.7}};
    const auto j = evaluate_detections(dets, gt).to_json();
    EXPECT_EQ(j["per_threshold"].size(), 10u);
    EXPECT_NE(j["protocol"].get<std::string>().find("0.50:0.05:0.95"), std::string::npos);
}
