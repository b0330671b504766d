#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "sxt/detail/rng.hpp"
#include "sxt/evaluation.hpp"

using namespace sxt;

namespace {

FeatureMask random_mask(int n, detail::Rng& rng, double p = 0.3) {
    FeatureMask m = FeatureMask::zeros(n, n);
    for (auto& b : m.bits) b = rng.uniform() < p ? 1 : 0;
    return m;
}

Feature3D point_feature(const Vec3& p) {
    Feature3D f;
    f.kind = Feature3D::Kind::point;
    f.positions = {p};
    return f;
}

}  // namespace

TEST_CASE("confusion counts") {
    detail::Rng rng(1);
    const FeatureMask truth = random_mask(64, rng);

    SECTION("perfect prediction has no errors") {
        const ConfusionCounts c = confusion(truth, truth);
        REQUIRE(c.fp == 0);
        REQUIRE(c.fn == 0);
        REQUIRE(c.tp + c.tn == 64ull * 64ull);
        REQUIRE(c.tpr().value() == 1.0);
        REQUIRE(c.fpr().value() == 0.0);
    }
    SECTION("inverted prediction has no correct pixels") {
        FeatureMask inv = truth;
        for (auto& b : inv.bits) b = b ? 0 : 1;
        const ConfusionCounts c = confusion(inv, truth);
        REQUIRE(c.tp == 0);
        REQUIRE(c.tn == 0);
    }
    SECTION("random pairs agree with the per-pixel loop oracle") {
        for (int trial = 0; trial < 50; ++trial) {
            const FeatureMask pred = random_mask(64, rng);
            const FeatureMask tr = random_mask(64, rng);
            const ConfusionCounts c = confusion(pred, tr);
            const auto want = oracle::brute_confusion(pred.bits, tr.bits);
            REQUIRE(c.tp == want.tp);
            REQUIRE(c.fp == want.fp);
            REQUIRE(c.fn == want.fn);
            REQUIRE(c.tn == want.tn);
            REQUIRE(c.total() == 64ull * 64ull);
        }
    }
    SECTION("roi restricts the counted pixels") {
        const FeatureMask pred = random_mask(64, rng);
        const RoiBox roi{8, 12, 40, 50};
        const ConfusionCounts c = confusion(pred, truth, roi);
        REQUIRE(c.total() == static_cast<std::uint64_t>((40 - 8) * (50 - 12)));
        oracle::BruteCounts want;
        for (int v = roi.v0; v < roi.v1; ++v)
            for (int u = roi.u0; u < roi.u1; ++u) {
                const bool p = pred.bit(u, v), t = truth.bit(u, v);
                if (p && t) ++want.tp;
                else if (p) ++want.fp;
                else if (t) ++want.fn;
                else ++want.tn;
            }
        REQUIRE(c.tp == want.tp);
        REQUIRE(c.tn == want.tn);
    }
    SECTION("shape and roi validation") {
        REQUIRE_THROWS_AS(confusion(random_mask(32, rng), truth), ShapeMismatch);
        REQUIRE_THROWS_AS(confusion(truth, truth, RoiBox{0, 0, 65, 10}), InvalidArgument);
    }
    SECTION("undefined rates are absent, not zero") {
        FeatureMask empty = FeatureMask::zeros(8, 8);
        const ConfusionCounts c = confusion(empty, empty);
        REQUIRE_FALSE(c.tpr().has_value());
        REQUIRE_FALSE(c.ppv().has_value());
        REQUIRE(c.fpr().value() == 0.0);
    }
}

TEST_CASE("roc curve and auc") {
    SECTION("perfectly separating scores give auc 1") {
        std::vector<float> score{0.9f, 0.8f, 0.7f, 0.2f, 0.1f};
        std::vector<std::uint8_t> truth{1, 1, 1, 0, 0};
        const RocCurve c = roc(std::span<const float>(score),
                               std::span<const std::uint8_t>(truth));
        REQUIRE(c.auc == Catch::Approx(1.0));
    }
    SECTION("constant scores give auc 0.5 as a single diagonal segment") {
        std::vector<float> score(20, 0.4f);
        std::vector<std::uint8_t> truth(20, 0);
        for (int i = 0; i < 7; ++i) truth[static_cast<std::size_t>(i)] = 1;
        const RocCurve c = roc(std::span<const float>(score),
                               std::span<const std::uint8_t>(truth));
        REQUIRE(c.auc == Catch::Approx(0.5));
        REQUIRE(c.points.size() == 2);  // (0,0) and the single tie group at (1,1)
        REQUIRE(c.points.back().fpr == 1.0);
        REQUIRE(c.points.back().tpr == 1.0);
    }
    SECTION("random grids match the rank-statistic oracle") {
        detail::Rng rng(7);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<float> score(64 * 64);
            std::vector<std::uint8_t> truth(64 * 64);
            for (auto& s : score)
                s = static_cast<float>(rng.uniform_int(64)) / 64.0f;  // force ties
            bool any_pos = false, any_neg = false;
            for (auto& t : truth) {
                t = rng.uniform() < 0.2 ? 1 : 0;
                (t ? any_pos : any_neg) = true;
            }
            if (!any_pos || !any_neg) continue;
            const RocCurve c = roc(std::span<const float>(score),
                                   std::span<const std::uint8_t>(truth));
            REQUIRE(c.auc == Catch::Approx(oracle::rank_auc(score, truth)).margin(1e-12));
        }
    }
    SECTION("auc is invariant under strictly monotone transforms") {
        detail::Rng rng(5);
        std::vector<float> score(500);
        std::vector<std::uint8_t> truth(500);
        for (auto& s : score) s = static_cast<float>(rng.uniform());
        for (auto& t : truth) t = rng.uniform() < 0.3 ? 1 : 0;
        std::vector<float> warped(score.size());
        for (std::size_t i = 0; i < score.size(); ++i)
            warped[i] = std::exp(3.0f * score[i]) - 1.0f;
        const double a1 = roc(std::span<const float>(score),
                              std::span<const std::uint8_t>(truth)).auc;
        const double a2 = roc(std::span<const float>(warped),
                              std::span<const std::uint8_t>(truth)).auc;
        REQUIRE(a1 == Catch::Approx(a2).margin(1e-12));
    }
    SECTION("single-class truth is rejected") {
        std::vector<float> score{0.1f, 0.2f};
        std::vector<std::uint8_t> truth{1, 1};
        REQUIRE_THROWS_AS(roc(std::span<const float>(score),
                              std::span<const std::uint8_t>(truth)),
                          AllSameTruthClass);
    }
}

TEST_CASE("localization error") {
    FeatureSetTruth truth;
    truth.points.push_back({{5.0, 5.0, 5.0}, 1.0, 1.0});
    truth.points.push_back({{-8.0, 2.0, 0.0}, 1.0, 1.0});
    truth.lines.push_back({{-5.0, -5.0, -5.0}, {6.0, 7.0, 3.0}, 1.0, 1.0});

    SECTION("exact predictions have zero error") {
        std::vector<Feature3D> pred;
        pred.push_back(point_feature({5.0, 5.0, 5.0}));
        pred.push_back(point_feature({-8.0, 2.0, 0.0}));
        Feature3D line;
        line.kind = Feature3D::Kind::polyline;
        line.positions = {{-5.0, -5.0, -5.0}, {0.0, 0.0, -1.0}, {6.0, 7.0, 3.0}};
        pred.push_back(line);
        const auto report = localization_error(pred, truth, 1.0);
        REQUIRE(report.matched.size() == 4);
        REQUIRE(report.mean_error_voxels.value() == Catch::Approx(0.0).margin(1e-12));
        REQUIRE(report.missed_truth.empty());
        REQUIRE(report.spurious_pred.empty());
    }
    SECTION("a unit diagonal offset gives sqrt(3) error in voxels") {
        std::vector<Feature3D> pred{point_feature({6.0, 6.0, 6.0})};
        FeatureSetTruth single;
        single.points.push_back({{5.0, 5.0, 5.0}, 1.0, 1.0});
        const auto report = localization_error(pred, single, 1.0);
        REQUIRE(report.matched.size() == 1);
        REQUIRE(report.mean_error_voxels.value() == Catch::Approx(std::sqrt(3.0)));
        // voxel scaling
        const auto scaled = localization_error(pred, single, 2.0);
        REQUIRE(scaled.mean_error_voxels.value() == Catch::Approx(std::sqrt(3.0) / 2.0));
    }
    SECTION("misses and spurious predictions are reported") {
        std::vector<Feature3D> pred{point_feature({5.1, 5.0, 5.0})};
        const auto report = localization_error(pred, truth, 1.0);
        REQUIRE(report.matched.size() == 1);
        REQUIRE(report.missed_truth.size() == 3);

        std::vector<Feature3D> extra{point_feature({5.0, 5.0, 5.0}),
                                     point_feature({-8.0, 2.0, 0.0}),
                                     point_feature({-5.0, -5.0, -5.0}),
                                     point_feature({6.0, 7.0, 3.0}),
                                     point_feature({20.0, 20.0, 20.0})};
        const auto r2 = localization_error(extra, truth, 1.0);
        REQUIRE(r2.matched.size() == 4);
        REQUIRE(r2.spurious_pred.size() == 1);
        REQUIRE(r2.spurious_pred[0] == 4);
    }
    SECTION("assignment is optimal and symmetric under relabeling") {
        detail::Rng rng(11);
        for (int trial = 0; trial < 20; ++trial) {
            FeatureSetTruth t;
            for (int i = 0; i < 4; ++i)
                t.points.push_back(
                    {{rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)},
                     1.0, 1.0});
            std::vector<Feature3D> pred;
            for (int i = 0; i < 4; ++i)
                pred.push_back(point_feature(
                    {rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)}));

            const auto report = localization_error(pred, t, 1.0);
            double total = 0;
            for (const auto& m : report.matched) total += m.error_voxels;

            std::vector<std::vector<double>> cost(4, std::vector<double>(4));
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j)
                    cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                        distance(pred[static_cast<std::size_t>(i)].position(),
                                 t.points[static_cast<std::size_t>(j)].center);
            REQUIRE(total == Catch::Approx(oracle::best_assignment_cost(cost)).margin(1e-9));

            std::vector<Feature3D> shuffled{pred[2], pred[0], pred[3], pred[1]};
            const auto r2 = localization_error(shuffled, t, 1.0);
            REQUIRE(r2.mean_error_voxels.value() ==
                    Catch::Approx(report.mean_error_voxels.value()).margin(1e-9));
        }
    }
    SECTION("empty truth is rejected") {
        REQUIRE_THROWS_AS(localization_error({}, FeatureSetTruth{}, 1.0), InvalidArgument);
    }
}
