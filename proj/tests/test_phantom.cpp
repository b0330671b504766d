#include <catch2/catch_amalgamated.hpp>

#include <numeric>

#include "oracles.hpp"
#include "sxt/detail/rng.hpp"
#include "sxt/phantom.hpp"

using namespace sxt;

namespace {

PhantomRecipe small_recipe(std::uint64_t seed = 11) {
    PhantomRecipe r;
    r.seed = seed;
    r.grid = GridSpec::centered(48, 1.0);
    return r;
}

double volume_sum(const Volume3D& v) {
    return std::accumulate(v.data.begin(), v.data.end(), 0.0);
}

// independent membership predicate for a sphere, used as rasterizer oracle
bool in_sphere(const Vec3& p, const Vec3& c, double r) {
    const double dx = p.x - c.x, dy = p.y - c.y, dz = p.z - c.z;
    return dx * dx + dy * dy + dz * dz <= r * r;
}

ShapeSpec sphere(const Vec3& c, double r, double attenuation) {
    ShapeSpec s;
    s.kind = ShapeSpec::Kind::ellipsoid;
    s.center = c;
    s.semi_axes = {r, r, r};
    s.attenuation = attenuation;
    return s;
}

}  // namespace

TEST_CASE("empty recipe gives an all-zero volume and empty truth") {
    PhantomRecipe r = small_recipe();
    r.n_shapes = 0;
    r.n_points = 0;
    r.n_lines = 0;
    const auto [vol, truth] = generate_phantom(r);
    REQUIRE(volume_sum(vol) == 0.0);
    REQUIRE(truth.points.empty());
    REQUIRE(truth.lines.empty());
}

TEST_CASE("identical recipes give bit-identical output") {
    const PhantomRecipe r = small_recipe(404);
    const auto [v1, t1] = generate_phantom(r);
    const auto [v2, t2] = generate_phantom(r);
    REQUIRE(v1.data == v2.data);
    REQUIRE(t1.points.size() == t2.points.size());
    for (std::size_t i = 0; i < t1.points.size(); ++i) {
        REQUIRE(t1.points[i].center.x == t2.points[i].center.x);
        REQUIRE(t1.points[i].intensity == t2.points[i].intensity);
    }
}

TEST_CASE("two overlapping spheres add their attenuation") {
    const GridSpec grid = GridSpec::centered(32, 1.0);
    const std::vector<ShapeSpec> shapes = {sphere({-2, 0, 0}, 6.0, 0.3),
                                           sphere({2, 0, 0}, 6.0, 0.4)};
    const Volume3D vol = rasterize_shapes(shapes, grid);
    const InscribedCylinder cyl(grid);

    int overlap_voxels = 0;
    for (int k = 0; k < grid.nz; ++k)
        for (int j = 0; j < grid.ny; ++j)
            for (int i = 0; i < grid.nx; ++i) {
                const Vec3 p = grid.voxel_center(i, j, k);
                const bool a = in_sphere(p, {-2, 0, 0}, 6.0);
                const bool b = in_sphere(p, {2, 0, 0}, 6.0);
                double want = (a ? 0.3 : 0.0) + (b ? 0.4 : 0.0);
                if (!cyl.contains(p)) want = 0.0;
                REQUIRE(vol.at(i, j, k) == Catch::Approx(want).margin(1e-6));
                if (a && b && cyl.contains(p)) ++overlap_voxels;
            }
    REQUIRE(overlap_voxels > 0);
}

TEST_CASE("shape voxels outside the inscribed cylinder are clipped to zero") {
    // a sphere deliberately poking out of the cylinder
    const GridSpec grid = GridSpec::centered(32, 1.0);
    const std::vector<ShapeSpec> shapes = {sphere({14, 0, 0}, 6.0, 0.8)};
    const Volume3D vol = rasterize_shapes(shapes, grid);
    const InscribedCylinder cyl(grid);
    bool clipped_any = false;
    for (int k = 0; k < grid.nz; ++k)
        for (int j = 0; j < grid.ny; ++j)
            for (int i = 0; i < grid.nx; ++i) {
                const Vec3 p = grid.voxel_center(i, j, k);
                if (!cyl.contains(p)) {
                    REQUIRE(vol.at(i, j, k) == 0.0f);
                    if (in_sphere(p, {14, 0, 0}, 6.0)) clipped_any = true;
                }
            }
    REQUIRE(clipped_any);
}

TEST_CASE("generated phantoms satisfy additivity and clipping on random voxels") {
    const PhantomRecipe r = small_recipe(7);
    const Scene scene = sample_scene(r);
    const Volume3D vol = rasterize_shapes(scene.shapes, r.grid);
    const InscribedCylinder cyl(r.grid);
    detail::Rng rng(555);
    for (int n = 0; n < 1500; ++n) {
        const int i = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(r.grid.nx)));
        const int j = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(r.grid.ny)));
        const int k = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(r.grid.nz)));
        const Vec3 p = r.grid.voxel_center(i, j, k);
        double want = 0.0;
        if (cyl.contains(p))
            for (const auto& s : scene.shapes)
                if (s.contains(p)) want += s.attenuation;
        REQUIRE(vol.at(i, j, k) == Catch::Approx(want).margin(1e-6));
    }
}

TEST_CASE("shape attenuations are uniform on [0,1] (Kolmogorov-Smirnov)") {
    std::vector<double> draws;
    for (std::uint64_t seed = 0; draws.size() < 600; ++seed) {
        PhantomRecipe r = small_recipe(seed);
        r.n_points = 0;
        r.n_lines = 0;
        const Scene scene = sample_scene(r);
        for (const auto& s : scene.shapes) draws.push_back(s.attenuation);
    }
    const double d = oracle::ks_statistic_uniform(draws);
    const double crit = 1.6276 / std::sqrt(static_cast<double>(draws.size()));  // alpha = 0.01
    REQUIRE(d < crit);
}

TEST_CASE("stamp_features without blur writes a single-voxel impulse") {
    const GridSpec grid = GridSpec::centered(32, 1.0);
    const Volume3D zero = Volume3D::zeros(grid);
    FeatureSetTruth truth;
    truth.points.push_back({grid.voxel_center(16, 16, 16), 1.0, 0.5});
    const Volume3D out = stamp_features(zero, truth, 0.0, 2.0);
    REQUIRE(out.at(16, 16, 16) == Catch::Approx(0.5 * 2.0));
    REQUIRE(volume_sum(out) == Catch::Approx(1.0));
}

TEST_CASE("blurred point peaks at the feature center voxel") {
    const GridSpec grid = GridSpec::centered(32, 1.0);
    const Volume3D zero = Volume3D::zeros(grid);
    FeatureSetTruth truth;
    truth.points.push_back({grid.voxel_center(12, 17, 9), 1.5, 0.8});
    const Volume3D out = stamp_features(zero, truth, 1.5, 1.0);
    std::size_t argmax = 0;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        if (out.data[i] > out.data[argmax]) argmax = i;
    REQUIRE(argmax == out.index(12, 17, 9));
}

TEST_CASE("unblurred line matches the per-voxel distance oracle") {
    const GridSpec grid = GridSpec::centered(32, 1.0);
    const Volume3D zero = Volume3D::zeros(grid);
    FeatureSetTruth truth;
    const Vec3 a{-8.2, -3.4, -6.0};
    const Vec3 b{7.9, 5.1, 4.5};
    truth.lines.push_back({a, b, 2.5, 0.6});
    const Volume3D out = stamp_features(zero, truth, 0.0, 1.0);

    for (int k = 0; k < grid.nz; ++k)
        for (int j = 0; j < grid.ny; ++j)
            for (int i = 0; i < grid.nx; ++i) {
                const Vec3 p = grid.voxel_center(i, j, k);
                // oracle: direct point-to-segment distance
                const Vec3 ab = b - a;
                double t = (p - a).dot(ab) / ab.dot(ab);
                t = std::clamp(t, 0.0, 1.0);
                const double dist = (p - (a + ab * t)).norm();
                const float want = dist < 1.25 ? 0.6f : 0.0f;
                REQUIRE(out.at(i, j, k) == want);
            }
}

TEST_CASE("gaussian blur preserves feature mass away from boundaries") {
    const GridSpec grid = GridSpec::centered(48, 1.0);
    const Volume3D zero = Volume3D::zeros(grid);
    FeatureSetTruth truth;
    truth.points.push_back({grid.voxel_center(24, 24, 24), 1.8, 0.7});
    const Volume3D crisp = stamp_features(zero, truth, 0.0, 1.3);
    const Volume3D soft = stamp_features(zero, truth, 1.0, 1.3);
    REQUIRE(volume_sum(soft) ==
            Catch::Approx(volume_sum(crisp)).epsilon(0.01));
}

TEST_CASE("features outside the grid are rejected") {
    const GridSpec grid = GridSpec::centered(32, 1.0);
    const Volume3D zero = Volume3D::zeros(grid);
    FeatureSetTruth truth;
    truth.points.push_back({{100, 0, 0}, 1.0, 0.5});
    REQUIRE_THROWS_AS(stamp_features(zero, truth, 0.0, 1.0), FeatureOutsideGrid);
}

TEST_CASE("impossible feature placement raises DegenerateRecipe") {
    PhantomRecipe r;
    r.seed = 3;
    r.grid = GridSpec::centered(16, 1.0);
    r.n_shapes = 0;
    r.n_points = 12;  // cannot fit 12 points 10 voxels apart in this margin
    r.n_lines = 0;
    REQUIRE_THROWS_AS(generate_phantom(r), DegenerateRecipe);
}

TEST_CASE("truth geometry stays inside the inscribed cylinder") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
        const PhantomRecipe r = small_recipe(seed);
        const Scene scene = sample_scene(r);
        const InscribedCylinder cyl(r.grid);
        for (const auto& p : scene.truth.points) REQUIRE(cyl.contains(p.center));
        for (const auto& l : scene.truth.lines) {
            REQUIRE(cyl.contains(l.a));
            REQUIRE(cyl.contains(l.b));
        }
    }
}

TEST_CASE("dataset enumerates volumes x levels deterministically") {
    PhantomRecipe base = small_recipe(90);
    base.grid = GridSpec::centered(32, 1.0);
    const Dataset ds = dataset(base, 4, {0.5, 1.0, 1.5});
    REQUIRE(ds.size() == 12);

    SECTION("single item equals generate_phantom of its recipe") {
        const Dataset one = dataset(base, 1, {1.0});
        const auto item = one.get(0);
        const auto [vol, truth] = generate_phantom(item.recipe);
        REQUIRE(item.volume.data == vol.data);
    }

    SECTION("levels of one volume share geometry, differ only at feature voxels") {
        const auto i0 = ds.get(0);  // volume 0, level 0.5
        const auto i1 = ds.get(1);  // volume 0, level 1.0
        REQUIRE(i0.truth.points.size() == i1.truth.points.size());
        REQUIRE(i0.truth.points[0].center.x == i1.truth.points[0].center.x);

        // voxel-diff oracle restricted to the truth support: every differing
        // voxel must be near a feature
        const GridSpec& g = i0.volume.grid;
        // separable blur reaches 4*sigma per axis, i.e. 4*sigma*sqrt(3) across corners
        const double reach = 4.0 * std::sqrt(3.0) * base.blur_sigma * g.voxel_size +
                             3.5 * g.voxel_size;
        for (int k = 0; k < g.nz; ++k)
            for (int j = 0; j < g.ny; ++j)
                for (int i = 0; i < g.nx; ++i) {
                    if (i0.volume.at(i, j, k) == i1.volume.at(i, j, k)) continue;
                    const Vec3 p = g.voxel_center(i, j, k);
                    double dist = std::numeric_limits<double>::infinity();
                    for (const auto& pt : i0.truth.points)
                        dist = std::min(dist, distance(p, pt.center) - pt.radius);
                    for (const auto& ln : i0.truth.lines)
                        dist = std::min(dist, point_segment_distance3(p, ln.a, ln.b));
                    REQUIRE(dist < reach);
                }
    }

    SECTION("distinct volumes have distinct geometry") {
        const auto a = ds.get(0);
        const auto b = ds.get(3);  // volume 1
        REQUIRE(a.truth.points[0].center.x != b.truth.points[0].center.x);
    }

    SECTION("for_each matches get") {
        std::vector<Dataset::Item> streamed;
        ds.for_each([&](int, int, Dataset::Item item) { streamed.push_back(std::move(item)); });
        REQUIRE(streamed.size() == ds.size());
        for (std::size_t f = 0; f < ds.size(); ++f)
            REQUIRE(streamed[f].volume.data == ds.get(f).volume.data);
    }
}
