#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "detail/rng.hpp"
#include "error.hpp"
#include "geometry.hpp"
#include "image.hpp"
#include "vec.hpp"
#include "volume.hpp"

namespace sxt {

inline double point_segment_distance3(const Vec3& p, const Vec3& a, const Vec3& b) {
    const Vec3 ab = b - a;
    const double len2 = ab.dot(ab);
    if (len2 <= 0.0) return distance(p, a);
    double t = (p - a).dot(ab) / len2;
    t = std::min(1.0, std::max(0.0, t));
    return distance(p, a + ab * t);
}

// Cylinder inscribed in the grid, axis along the vertical (z) grid axis.
struct InscribedCylinder {
    Vec3 axis_point;  // on the axis
    double radius = 0.0;

    explicit InscribedCylinder(const GridSpec& g)
        : axis_point(g.center()), radius(0.5 * std::min(g.extent().x, g.extent().y)) {}

    bool contains(const Vec3& p, double margin_frac = 0.0) const {
        const double dx = p.x - axis_point.x;
        const double dy = p.y - axis_point.y;
        const double r = radius * (1.0 - margin_frac);
        return dx * dx + dy * dy <= r * r;
    }
};

struct HalfSpace {
    Vec3 normal;  // unit, outward
    double offset = 0.0;  // inside iff normal . p <= offset
};

struct ShapeSpec {
    enum class Kind { polyhedron, ellipsoid };

    Kind kind = Kind::ellipsoid;
    Mat3 rotation;    // local -> world
    Vec3 center;      // mm
    Vec3 semi_axes;   // mm
    double attenuation = 0.0;        // in [0,1]
    std::vector<HalfSpace> faces;    // polyhedron only, world frame

    bool contains(const Vec3& p) const {
        if (kind == Kind::ellipsoid) {
            const Vec3 q = rotation.transposed() * (p - center);
            const double sx = q.x / semi_axes.x;
            const double sy = q.y / semi_axes.y;
            const double sz = q.z / semi_axes.z;
            return sx * sx + sy * sy + sz * sz <= 1.0;
        }
        for (const HalfSpace& f : faces)
            if (f.normal.dot(p) > f.offset) return false;
        return true;
    }
};

struct PointFeature {
    Vec3 center;       // mm
    double radius;     // mm
    double intensity;  // unscaled attenuation
};

struct LineFeature {
    Vec3 a, b;          // endpoints, mm
    double thickness;   // mm (tube diameter)
    double intensity;
};

struct FeatureSetTruth {
    std::vector<PointFeature> points;
    std::vector<LineFeature> lines;
};

struct PhantomRecipe {
    std::uint64_t seed = 0;
    int n_shapes = 10;
    int n_points = 3;
    int n_lines = 1;
    double intensity_scale = 1.0;
    double blur_sigma = 1.0;  // voxels
    GridSpec grid;

    void validate() const {
        grid.validate();
        if (n_shapes < 0 || n_points < 0 || n_lines < 0)
            throw InvalidArgument("feature counts must be non-negative");
        if (intensity_scale <= 0.0) throw InvalidArgument("intensity scale must be positive");
        if (blur_sigma < 0.0) throw InvalidArgument("blur sigma must be non-negative");
    }
};

struct Scene {
    std::vector<ShapeSpec> shapes;
    FeatureSetTruth truth;
};

namespace detail_phantom {

inline Vec3 draw_in_cylinder(detail::Rng& rng, const GridSpec& grid, double radial_margin,
                             double z_lo_frac, double z_hi_frac) {
    const InscribedCylinder cyl(grid);
    const double r = cyl.radius * radial_margin * std::sqrt(rng.uniform());
    const double phi = 2.0 * 3.14159265358979323846 * rng.uniform();
    const double z = grid.origin.z + grid.extent().z * rng.uniform(z_lo_frac, z_hi_frac);
    return {cyl.axis_point.x + r * std::cos(phi), cyl.axis_point.y + r * std::sin(phi), z};
}

// Convex polyhedron from half-spaces tangent to the shape's ellipsoid.
// The first six faces perturb the +-axis directions, which keeps the
// intersection bounded; extras use fully random directions.
inline void build_polyhedron_faces(detail::Rng& rng, ShapeSpec& s) {
    const int n_faces = 6 + static_cast<int>(rng.uniform_int(7));  // 6..12
    s.faces.clear();
    s.faces.reserve(static_cast<std::size_t>(n_faces));
    for (int f = 0; f < n_faces; ++f) {
        Vec3 dir;
        if (f < 6) {
            Vec3 axis{0, 0, 0};
            if (f / 2 == 0) axis.x = (f % 2) ? -1.0 : 1.0;
            else if (f / 2 == 1) axis.y = (f % 2) ? -1.0 : 1.0;
            else axis.z = (f % 2) ? -1.0 : 1.0;
            dir = (axis + rng.unit_vector() * 0.35).normalized();
        } else {
            dir = rng.unit_vector();
        }
        // tangent point on the local ellipsoid surface along dir
        const Vec3 surf_local{dir.x * s.semi_axes.x, dir.y * s.semi_axes.y,
                              dir.z * s.semi_axes.z};
        const Vec3 n_local{dir.x / s.semi_axes.x, dir.y / s.semi_axes.y, dir.z / s.semi_axes.z};
        const Vec3 surf_world = s.center + s.rotation * surf_local;
        const Vec3 n_world = (s.rotation * n_local).normalized();
        s.faces.push_back({n_world, n_world.dot(surf_world)});
    }
}

}  // namespace detail_phantom

// Draws the shape and feature geometry for a recipe. Consumes a single
// deterministic RNG stream seeded by recipe.seed; intensity_scale and
// blur_sigma play no part, so all intensity levels of one seed share
// identical geometry.
inline Scene sample_scene(const PhantomRecipe& recipe) {
    recipe.validate();
    detail::Rng rng(recipe.seed);
    const GridSpec& grid = recipe.grid;
    const double e = std::max(grid.extent().x, std::max(grid.extent().y, grid.extent().z));
    const double vox = grid.voxel_size;

    Scene scene;
    scene.shapes.reserve(static_cast<std::size_t>(recipe.n_shapes));
    for (int i = 0; i < recipe.n_shapes; ++i) {
        ShapeSpec s;
        s.kind = rng.coin() ? ShapeSpec::Kind::polyhedron : ShapeSpec::Kind::ellipsoid;
        s.center = detail_phantom::draw_in_cylinder(rng, grid, 0.9, 0.05, 0.95);
        s.semi_axes = {rng.uniform(0.06, 0.18) * e, rng.uniform(0.06, 0.18) * e,
                       rng.uniform(0.06, 0.18) * e};
        s.rotation = rng.rotation();
        s.attenuation = rng.uniform();
        if (s.kind == ShapeSpec::Kind::polyhedron) detail_phantom::build_polyhedron_faces(rng, s);
        scene.shapes.push_back(std::move(s));
    }

    const double min_sep = 10.0 * vox;  // keeps random features resolvable
    constexpr int max_retries = 1000;

    for (int i = 0; i < recipe.n_points; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < max_retries && !placed; ++attempt) {
            PointFeature p;
            p.center = detail_phantom::draw_in_cylinder(rng, grid, 0.75, 0.15, 0.85);
            p.radius = rng.uniform(1.4, 2.0) * vox;
            // fiducials are high-contrast markers (copper against fibre):
            // a few times the per-voxel attenuation of the shapes
            p.intensity = rng.uniform(8.0, 12.0);
            placed = true;
            for (const auto& q : scene.truth.points)
                if (distance(p.center, q.center) < min_sep) placed = false;
            if (placed) scene.truth.points.push_back(p);
        }
        if (!placed) throw DegenerateRecipe("could not place point feature");
    }

    const InscribedCylinder cyl(grid);
    for (int i = 0; i < recipe.n_lines; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < max_retries && !placed; ++attempt) {
            LineFeature l;
            const double len = rng.uniform(0.10, 0.40) * e;
            const Vec3 dir = rng.unit_vector();
            const Vec3 c = detail_phantom::draw_in_cylinder(rng, grid, 0.6, 0.25, 0.75);
            l.a = c - dir * (0.5 * len);
            l.b = c + dir * (0.5 * len);
            l.thickness = 2.0 * vox;
            l.intensity = rng.uniform(8.0, 12.0);
            const double zlo = grid.origin.z + 0.1 * grid.extent().z;
            const double zhi = grid.origin.z + 0.9 * grid.extent().z;
            placed = cyl.contains(l.a, 0.25) && cyl.contains(l.b, 0.25) && l.a.z > zlo &&
                     l.a.z < zhi && l.b.z > zlo && l.b.z < zhi;
            for (const auto& q : scene.truth.points)
                if (point_segment_distance3(q.center, l.a, l.b) < min_sep) placed = false;
            for (const auto& m : scene.truth.lines)
                if (point_segment_distance3(m.a, l.a, l.b) < min_sep &&
                    point_segment_distance3(m.b, l.a, l.b) < min_sep)
                    placed = false;
            if (placed) scene.truth.lines.push_back(l);
        }
        if (!placed) throw DegenerateRecipe("could not place line feature");
    }
    return scene;
}

// Additive shape attenuation, clipped to the inscribed cylinder: voxels
// outside the cylinder are zero even when a shape covers them.
inline Volume3D rasterize_shapes(const std::vector<ShapeSpec>& shapes, const GridSpec& grid) {
    Volume3D vol = Volume3D::zeros(grid);
    const InscribedCylinder cyl(grid);
    std::size_t idx = 0;
    for (int k = 0; k < grid.nz; ++k)
        for (int j = 0; j < grid.ny; ++j)
            for (int i = 0; i < grid.nx; ++i, ++idx) {
                const Vec3 p = grid.voxel_center(i, j, k);
                if (!cyl.contains(p)) continue;
                double a = 0.0;
                for (const ShapeSpec& s : shapes)
                    if (s.contains(p)) a += s.attenuation;
                vol.data[idx] = static_cast<float>(a);
            }
    return vol;
}

namespace detail_phantom {

// separable Gaussian along one axis, zero padding at the boundary
inline void blur_axis(std::vector<double>& f, int nx, int ny, int nz, int axis, double sigma) {
    const int radius = static_cast<int>(std::ceil(4.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int k = -radius; k <= radius; ++k) {
        const double w = std::exp(-0.5 * (k / sigma) * (k / sigma));
        kernel[static_cast<std::size_t>(k + radius)] = w;
        sum += w;
    }
    for (double& w : kernel) w /= sum;

    const int n[3] = {nx, ny, nz};
    const std::int64_t stride[3] = {1, nx, static_cast<std::int64_t>(nx) * ny};
    const int len = n[axis];
    const std::int64_t st = stride[axis];
    const int oa = (axis + 1) % 3, ob = (axis + 2) % 3;
    std::vector<double> line(static_cast<std::size_t>(len));
    for (int b = 0; b < n[ob]; ++b)
        for (int a = 0; a < n[oa]; ++a) {
            const std::int64_t base = a * stride[oa] + b * stride[ob];
            for (int i = 0; i < len; ++i) line[static_cast<std::size_t>(i)] = f[static_cast<std::size_t>(base + i * st)];
            for (int i = 0; i < len; ++i) {
                double acc = 0.0;
                const int klo = std::max(-radius, -i);
                const int khi = std::min(radius, len - 1 - i);
                for (int k = klo; k <= khi; ++k)
                    acc += kernel[static_cast<std::size_t>(k + radius)] *
                           line[static_cast<std::size_t>(i + k)];
                f[static_cast<std::size_t>(base + i * st)] = acc;
            }
        }
}

}  // namespace detail_phantom

// Adds point and line features on top of an existing volume as
// Gaussian-blurred impulses/tubes. Blur happens on the feature field
// alone, with a unit-sum kernel, so the added mass matches the unblurred
// stamp away from grid boundaries.
inline Volume3D stamp_features(const Volume3D& volume, const FeatureSetTruth& truth,
                               double blur_sigma, double intensity_scale) {
    if (blur_sigma < 0.0) throw InvalidArgument("blur sigma must be non-negative");
    const GridSpec& grid = volume.grid;
    for (const auto& p : truth.points)
        if (!grid.contains(p.center)) throw FeatureOutsideGrid("point feature outside grid");
    for (const auto& l : truth.lines)
        if (!grid.contains(l.a) || !grid.contains(l.b))
            throw FeatureOutsideGrid("line feature outside grid");

    std::vector<double> field(static_cast<std::size_t>(grid.voxel_count()), 0.0);
    const double vox = grid.voxel_size;
    const auto clamp_idx = [&](double w, int n) {
        return std::min(n - 1, std::max(0, static_cast<int>(std::floor(w))));
    };

    for (const auto& p : truth.points) {
        const Vec3 lo = (p.center - Vec3{p.radius, p.radius, p.radius} - grid.origin) / vox;
        const Vec3 hi = (p.center + Vec3{p.radius, p.radius, p.radius} - grid.origin) / vox;
        for (int k = clamp_idx(lo.z, grid.nz); k <= clamp_idx(hi.z, grid.nz); ++k)
            for (int j = clamp_idx(lo.y, grid.ny); j <= clamp_idx(hi.y, grid.ny); ++j)
                for (int i = clamp_idx(lo.x, grid.nx); i <= clamp_idx(hi.x, grid.nx); ++i)
                    if (distance(grid.voxel_center(i, j, k), p.center) < p.radius)
                        field[volume.index(i, j, k)] += p.intensity;
    }
    for (const auto& l : truth.lines) {
        const double r = 0.5 * l.thickness;
        const Vec3 blo{std::min(l.a.x, l.b.x) - r, std::min(l.a.y, l.b.y) - r,
                       std::min(l.a.z, l.b.z) - r};
        const Vec3 bhi{std::max(l.a.x, l.b.x) + r, std::max(l.a.y, l.b.y) + r,
                       std::max(l.a.z, l.b.z) + r};
        const Vec3 lo = (blo - grid.origin) / vox;
        const Vec3 hi = (bhi - grid.origin) / vox;
        for (int k = clamp_idx(lo.z, grid.nz); k <= clamp_idx(hi.z, grid.nz); ++k)
            for (int j = clamp_idx(lo.y, grid.ny); j <= clamp_idx(hi.y, grid.ny); ++j)
                for (int i = clamp_idx(lo.x, grid.nx); i <= clamp_idx(hi.x, grid.nx); ++i)
                    if (point_segment_distance3(grid.voxel_center(i, j, k), l.a, l.b) < r)
                        field[volume.index(i, j, k)] += l.intensity;
    }

    if (blur_sigma > 0.0) {
        for (int axis = 0; axis < 3; ++axis)
            detail_phantom::blur_axis(field, grid.nx, grid.ny, grid.nz, axis, blur_sigma);
    }

    Volume3D out = volume;
    for (std::size_t i = 0; i < field.size(); ++i)
        out.data[i] += static_cast<float>(intensity_scale * field[i]);
    return out;
}

// Full synthetic phantom: random shapes plus stamped features. Identical
// recipes give bit-identical volumes; the returned truth records feature
// geometry before blurring.
inline std::pair<Volume3D, FeatureSetTruth> generate_phantom(const PhantomRecipe& recipe) {
    recipe.validate();
    if (recipe.grid.nx < 16 || recipe.grid.ny < 16 || recipe.grid.nz < 16)
        throw InvalidArgument("grid dims must be at least 16 per axis");
    Scene scene = sample_scene(recipe);
    Volume3D vol = rasterize_shapes(scene.shapes, recipe.grid);
    vol = stamp_features(vol, scene.truth, recipe.blur_sigma, recipe.intensity_scale);
    return {std::move(vol), std::move(scene.truth)};
}

// Deterministic enumeration of n_volumes geometries, each stamped at every
// intensity level: item (i, j) reuses the shape/feature geometry of
// volume i and differs only in feature intensity.
class Dataset {
  public:
    struct Item {
        Volume3D volume;
        FeatureSetTruth truth;
        PhantomRecipe recipe;
    };

    Dataset(PhantomRecipe base, int n_volumes, std::vector<double> levels)
        : base_(std::move(base)), n_volumes_(n_volumes), levels_(std::move(levels)) {
        base_.validate();
        if (n_volumes_ < 1) throw InvalidArgument("need at least one volume");
        if (levels_.empty()) throw InvalidArgument("need at least one intensity level");
        for (double l : levels_)
            if (l <= 0.0) throw InvalidArgument("intensity levels must be positive");
    }

    std::size_t size() const { return static_cast<std::size_t>(n_volumes_) * levels_.size(); }
    int n_volumes() const { return n_volumes_; }
    const std::vector<double>& levels() const { return levels_; }

    PhantomRecipe recipe_for(int volume_idx, int level_idx) const {
        PhantomRecipe r = base_;
        r.seed = detail::splitmix64(base_.seed + static_cast<std::uint64_t>(volume_idx));
        r.intensity_scale = levels_[static_cast<std::size_t>(level_idx)];
        return r;
    }

    Item get(std::size_t flat_index) const {
        const int i = static_cast<int>(flat_index / levels_.size());
        const int j = static_cast<int>(flat_index % levels_.size());
        const PhantomRecipe r = recipe_for(i, j);
        auto [vol, truth] = generate_phantom(r);
        return {std::move(vol), std::move(truth), r};
    }

    // Generates each geometry once and stamps all its levels; visits items
    // in the same order and with the same content as get().
    template <class Fn>
    void for_each(Fn&& fn) const {
        for (int i = 0; i < n_volumes_; ++i) {
            const Scene scene = sample_scene(recipe_for(i, 0));
            const Volume3D base_vol = rasterize_shapes(scene.shapes, base_.grid);
            for (int j = 0; j < static_cast<int>(levels_.size()); ++j) {
                const PhantomRecipe r = recipe_for(i, j);
                Item item{stamp_features(base_vol, scene.truth, r.blur_sigma, r.intensity_scale),
                          scene.truth, r};
                fn(i, j, std::move(item));
            }
        }
    }

  private:
    PhantomRecipe base_;
    int n_volumes_;
    std::vector<double> levels_;
};

inline Dataset dataset(const PhantomRecipe& base, int n_volumes, std::vector<double> levels) {
    return Dataset(base, n_volumes, std::move(levels));
}

namespace detail_phantom {

// distance between the infinite line through a ray and a segment
inline double ray_segment_distance(const Ray& ray, const Vec3& a, const Vec3& b) {
    const Vec3 e = b - a;
    const Vec3 w0 = ray.origin - a;
    const double bb = ray.dir.dot(e);
    const double cc = e.dot(e);
    const double dd = ray.dir.dot(w0);
    const double ee = e.dot(w0);
    const double denom = cc - bb * bb;
    double s;
    if (std::abs(denom) < 1e-12 * std::max(cc, 1.0)) {
        s = cc > 0.0 ? std::clamp(ee / cc, 0.0, 1.0) : 0.0;
    } else {
        s = std::clamp((ee - dd * bb) / denom, 0.0, 1.0);
    }
    const double t = s * bb - dd;
    return distance(ray.origin + ray.dir * t, a + e * s);
}

}  // namespace detail_phantom

// Geometric ground-truth mask for a projection: pixel (u,v) is set when its
// ray passes within (radius + widen_mm) of a point feature or within
// (thickness/2 + widen_mm) of a line feature. Computed from ray-feature
// distances alone; the projector plays no part. min_chord_mm > 0 drops
// grazing rays whose chord through the feature is shorter than that, the
// same pixels a voxelized rendering of the feature would leave unset.
inline FeatureMask render_truth_mask(const ViewGeometry& view, const FeatureSetTruth& truth,
                                     double widen_mm = 0.0, double min_chord_mm = 0.0) {
    FeatureMask mask = FeatureMask::zeros(view.n_u, view.n_v);
    Vec3 n = view.normal();
    double plane_dist = (view.det_center - view.source).dot(n);
    if (plane_dist < 0.0) {
        n = -n;
        plane_dist = -plane_dist;
    }

    const auto mark_box = [&](const Vec2& lo, const Vec2& hi, auto&& hit) {
        const int u0 = std::max(0, static_cast<int>(std::floor(lo.u)));
        const int v0 = std::max(0, static_cast<int>(std::floor(lo.v)));
        const int u1 = std::min(view.n_u - 1, static_cast<int>(std::ceil(hi.u)));
        const int v1 = std::min(view.n_v - 1, static_cast<int>(std::ceil(hi.v)));
        for (int v = v0; v <= v1; ++v)
            for (int u = u0; u <= u1; ++u)
                if (!mask.bit(u, v) && hit(pixel_ray(view, u + 0.5, v + 0.5)))
                    mask.bits[mask.index(u, v)] = 1;
    };

    // largest ray-axis distance still giving a chord >= min_chord through a
    // cylinder/sphere of radius r
    const auto max_dist = [&](double r) {
        if (min_chord_mm <= 0.0) return r;
        const double half = 0.5 * min_chord_mm;
        return half >= r ? 0.0 : std::sqrt(r * r - half * half);
    };

    for (const auto& p : truth.points) {
        const auto q = try_project_point(view, p.center);
        if (!q) continue;
        const double mag = plane_dist / (p.center - view.source).dot(n);
        const double reach =
            (p.radius + widen_mm) * mag / std::min(view.pitch_u, view.pitch_v) + 2.0;
        const double dmax = max_dist(p.radius + widen_mm);
        mark_box({q->u - reach, q->v - reach}, {q->u + reach, q->v + reach},
                 [&](const Ray& ray) {
                     return point_to_ray_distance(p.center, ray) <= dmax;
                 });
    }
    for (const auto& l : truth.lines) {
        const auto qa = try_project_point(view, l.a);
        const auto qb = try_project_point(view, l.b);
        if (!qa || !qb) continue;
        const double mag =
            plane_dist / std::min((l.a - view.source).dot(n), (l.b - view.source).dot(n));
        const double reach =
            (0.5 * l.thickness + widen_mm) * mag / std::min(view.pitch_u, view.pitch_v) + 2.0;
        const double dmax = max_dist(0.5 * l.thickness + widen_mm);
        const Vec2 lo{std::min(qa->u, qb->u) - reach, std::min(qa->v, qb->v) - reach};
        const Vec2 hi{std::max(qa->u, qb->u) + reach, std::max(qa->v, qb->v) + reach};
        mark_box(lo, hi, [&](const Ray& ray) {
            return detail_phantom::ray_segment_distance(ray, l.a, l.b) <= dmax;
        });
    }
    return mask;
}

}  // namespace sxt
