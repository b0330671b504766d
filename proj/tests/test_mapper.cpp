#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "sxt/detail/rng.hpp"
#include "sxt/mapper.hpp"
#include "sxt/phantom.hpp"

using namespace sxt;

namespace {

StereoRig small_rig(int n_views = 2) {
    return default_rig(GridSpec::centered(64, 1.0), n_views, 128, 128);
}

Match exact_match(const StereoRig& rig, const Vec3& p) {
    Match m;
    for (std::size_t v = 0; v < rig.views.size(); ++v) {
        FeatureCandidate c{static_cast<int>(v), FeatureCandidate::Kind::point,
                           project_point(rig.views[v], p), 0, std::nullopt};
        m.entries.push_back({c, false});
    }
    return m;
}

}  // namespace

TEST_CASE("triangulation recovers exact candidates") {
    detail::Rng rng(3);
    for (int n_views : {2, 3}) {
        const StereoRig rig = small_rig(n_views);
        for (int trial = 0; trial < 50; ++trial) {
            const Vec3 p{rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-20, 20)};
            const Feature3D f = triangulate(exact_match(rig, p), rig);
            REQUIRE(distance(f.position(), p) < 1e-6);
            REQUIRE(f.residual_gap < 1e-9);
            REQUIRE(f.kind == Feature3D::Kind::point);
            REQUIRE_FALSE(f.occlusion_flag);
        }
    }
}

TEST_CASE("perturbed candidates stay within the backprojection scale bound") {
    detail::Rng rng(17);
    const StereoRig rig = small_rig();
    // voxel/pixel scale at the iso-center: pitch / magnification
    const double px_at_iso = rig.views[0].pitch_u / 2.0;
    for (int trial = 0; trial < 100; ++trial) {
        const Vec3 p{rng.uniform(-15, 15), rng.uniform(-15, 15), rng.uniform(-15, 15)};
        Match m = exact_match(rig, p);
        for (auto& e : m.entries) {
            e.candidate.position.u += rng.uniform(-0.5, 0.5);
            e.candidate.position.v += rng.uniform(-0.5, 0.5);
        }
        const Feature3D f = triangulate(m, rig);

        // oracle: closest approach of the same two perturbed rays solved by
        // the explicit normal equations
        const Ray ra = pixel_ray(rig.views[0], m.entries[0].candidate.position.u,
                                 m.entries[0].candidate.position.v);
        const Ray rb = pixel_ray(rig.views[1], m.entries[1].candidate.position.u,
                                 m.entries[1].candidate.position.v);
        const auto want = oracle::closest_by_normal_equations(ra, rb);
        REQUIRE(distance(f.position(), want.midpoint) < 1e-9);
        REQUIRE(f.residual_gap == Catch::Approx(want.gap).margin(1e-9));

        // perturbation x backprojection scale bound (sqrt(2)/2 px in each
        // view, plus depth amplification ~2 for this 90-degree rig)
        REQUIRE(distance(f.position(), p) < 2.0 * 1.5 * px_at_iso);
    }
}

TEST_CASE("parallel rays propagate ParallelRays") {
    StereoRig rig = small_rig();
    // translated-copy view: the same pixel's ray is parallel in both views
    rig.views[1] = rig.views[0];
    rig.views[1].source = rig.views[0].source + Vec3{0, 50, 0};
    rig.views[1].det_center = rig.views[0].det_center + Vec3{0, 50, 0};
    Match m;
    for (int v = 0; v < 2; ++v) {
        FeatureCandidate c{v, FeatureCandidate::Kind::point, {40.0, 70.0}, 0, std::nullopt};
        m.entries.push_back({c, false});
    }
    REQUIRE_THROWS_AS(triangulate(m, rig), ParallelRays);
}

TEST_CASE("occluded entries are used only as a fallback and set the flag") {
    const StereoRig rig = small_rig(3);
    const Vec3 p{5.0, -3.0, 7.0};
    Match m = exact_match(rig, p);
    m.entries[2].occluded = true;
    const Feature3D f = triangulate(m, rig);
    REQUIRE(f.occlusion_flag);
    REQUIRE(distance(f.position(), p) < 1e-6);  // two clean rays suffice

    // binocular with one occluded entry: the stand-in ray still constrains
    const StereoRig rig2 = small_rig(2);
    Match m2 = exact_match(rig2, p);
    m2.entries[1].occluded = true;
    const Feature3D f2 = triangulate(m2, rig2);
    REQUIRE(f2.occlusion_flag);
    REQUIRE(distance(f2.position(), p) < 1e-6);
}

TEST_CASE("reconstruct_line") {
    const StereoRig rig = small_rig();
    const Vec3 la{-10.0, -4.0, -6.0}, lb{8.0, 9.0, 5.0};

    const auto make_line_match = [&](int n_samples, bool degenerate_interior) {
        LineMatch lm;
        lm.component_ids = {0, 0};
        const auto cand = [&](int view, const Vec3& p, FeatureCandidate::Kind kind) {
            return FeatureCandidate{view, kind,
                                    project_point(rig.views[static_cast<std::size_t>(view)], p),
                                    0, std::nullopt};
        };
        lm.endpoint_a.entries = {{cand(0, la, FeatureCandidate::Kind::line_endpoint), false},
                                 {cand(1, la, FeatureCandidate::Kind::line_endpoint), false}};
        lm.endpoint_b.entries = {{cand(0, lb, FeatureCandidate::Kind::line_endpoint), false},
                                 {cand(1, lb, FeatureCandidate::Kind::line_endpoint), false}};
        for (int s = 1; s < n_samples; ++s) {
            const double t = static_cast<double>(s) / n_samples;
            const Vec3 p = la + (lb - la) * t;
            LineSampleMatch sm;
            sm.s_param = t * 100.0;
            sm.degenerate = degenerate_interior;
            sm.match.entries = {{cand(0, p, FeatureCandidate::Kind::line_sample), false},
                                {cand(1, p, FeatureCandidate::Kind::line_sample), false}};
            lm.samples.push_back(sm);
        }
        return lm;
    };

    SECTION("exact candidates reproduce the segment") {
        const Feature3D f = reconstruct_line(make_line_match(8, false), rig);
        REQUIRE(f.kind == Feature3D::Kind::polyline);
        REQUIRE(f.positions.size() == 9);
        for (const auto& v : f.positions)
            REQUIRE(point_segment_distance3(v, la, lb) < 1e-6);
        REQUIRE(distance(f.positions.front(), la) < 1e-6);
        REQUIRE(distance(f.positions.back(), lb) < 1e-6);
    }
    SECTION("degenerate interior falls back to the endpoint segment") {
        const Feature3D f = reconstruct_line(make_line_match(6, true), rig);
        REQUIRE(f.positions.size() >= 2);
        for (const auto& v : f.positions)
            REQUIRE(point_segment_distance3(v, la, lb) < 1e-6);
    }
}

TEST_CASE("a line with no triangulable vertex raises AllSamplesDegenerate") {
    // translated-copy rig: every matched pixel pair yields parallel rays
    StereoRig rig = small_rig();
    rig.views[1] = rig.views[0];
    rig.views[1].source = rig.views[0].source + Vec3{0, 40, 0};
    rig.views[1].det_center = rig.views[0].det_center + Vec3{0, 40, 0};

    LineMatch lm;
    lm.component_ids = {0, 0};
    const auto cand = [&](int view, const Vec2& q) {
        return FeatureCandidate{view, FeatureCandidate::Kind::line_endpoint, q, 0, std::nullopt};
    };
    lm.endpoint_a.entries = {{cand(0, {30, 40}), false}, {cand(1, {30, 40}), false}};
    lm.endpoint_b.entries = {{cand(0, {80, 90}), false}, {cand(1, {80, 90}), false}};
    REQUIRE_THROWS_AS(reconstruct_line(lm, rig), AllSamplesDegenerate);
}

TEST_CASE("volumetric map") {
    const GridSpec grid = GridSpec::centered(48, 1.0);
    const StereoRig rig = default_rig(grid, 2, 96, 96);

    SECTION("empty masks give an empty feature list") {
        const std::vector<FeatureMask> masks{FeatureMask::zeros(96, 96),
                                             FeatureMask::zeros(96, 96)};
        const auto [vol, features] = volumetric_map(masks, rig, grid);
        REQUIRE(features.empty());
    }

    SECTION("masks from one true point give one component within a voxel") {
        const Vec3 p = grid.voxel_center(30, 20, 25);
        std::vector<FeatureMask> masks;
        for (const auto& view : rig.views) {
            FeatureMask m = FeatureMask::zeros(96, 96);
            const Vec2 q = project_point(view, p);
            for (int dv = -1; dv <= 1; ++dv)
                for (int du = -1; du <= 1; ++du)
                    m.bits[m.index(static_cast<int>(q.u) + du, static_cast<int>(q.v) + dv)] = 1;
            masks.push_back(std::move(m));
        }
        const auto [vol, features] = volumetric_map(masks, rig, grid);
        REQUIRE(features.size() == 1);
        REQUIRE(features[0].kind == Feature3D::Kind::point);
        REQUIRE(features[0].source == Feature3D::Source::volumetric);
        REQUIRE(distance(features[0].position(), p) < grid.voxel_size);
    }

    SECTION("reported component voxels backproject inside every mask") {
        const Vec3 pa = grid.voxel_center(30, 20, 25);
        const Vec3 pb = grid.voxel_center(14, 28, 20);
        std::vector<FeatureMask> masks;
        for (const auto& view : rig.views) {
            FeatureMask m = FeatureMask::zeros(96, 96);
            for (const Vec3& p : {pa, pb}) {
                const Vec2 q = project_point(view, p);
                for (int dv = -1; dv <= 1; ++dv)
                    for (int du = -1; du <= 1; ++du)
                        m.bits[m.index(static_cast<int>(q.u) + du, static_cast<int>(q.v) + dv)] =
                            1;
            }
            masks.push_back(std::move(m));
        }
        const auto [vol, features] = volumetric_map(masks, rig, grid);
        REQUIRE(features.size() >= 2);
        for (const auto& f : features)
            for (const auto& pos : f.positions)
                for (std::size_t v = 0; v < rig.views.size(); ++v) {
                    const Vec2 q = project_point(rig.views[v], pos);
                    const double val = masks[v].as_image().bilinear(q.u, q.v);
                    REQUIRE(val > 0.0);
                }
    }

    SECTION("mask count must match the rig") {
        const std::vector<FeatureMask> masks{FeatureMask::zeros(96, 96)};
        REQUIRE_THROWS_AS(volumetric_map(masks, rig, grid), GeometryMismatch);
    }
}

TEST_CASE("triangulated and volumetric positions agree on noiseless data") {
    const GridSpec grid = GridSpec::centered(48, 1.0);
    const StereoRig rig = default_rig(grid, 2, 96, 96);
    const Vec3 p = grid.voxel_center(18, 27, 22);

    std::vector<FeatureMask> masks;
    Match m;
    for (std::size_t v = 0; v < rig.views.size(); ++v) {
        const Vec2 q = project_point(rig.views[v], p);
        FeatureMask mask = FeatureMask::zeros(96, 96);
        for (int dv = -1; dv <= 1; ++dv)
            for (int du = -1; du <= 1; ++du)
                mask.bits[mask.index(static_cast<int>(q.u) + du, static_cast<int>(q.v) + dv)] =
                    1;
        masks.push_back(std::move(mask));
        FeatureCandidate c{static_cast<int>(v), FeatureCandidate::Kind::point, q, 0,
                           std::nullopt};
        m.entries.push_back({c, false});
    }
    const Feature3D tri = triangulate(m, rig);
    const auto [vol, features] = volumetric_map(masks, rig, grid);
    REQUIRE(features.size() == 1);
    REQUIRE(distance(tri.position(), features[0].position()) < grid.voxel_size);
}
