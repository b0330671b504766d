#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "error.hpp"
#include "vec.hpp"
#include "volume.hpp"

namespace sxt {

// One X-ray source / flat-panel detector pair. Pixel (0,0) is the detector
// corner; pixel centers sit at half-integer offsets, so the continuous
// coordinate (u,v) maps to corner + u*pitch_u*u_axis + v*pitch_v*v_axis.
struct ViewGeometry {
    Vec3 source;           // mm
    Vec3 det_center;       // mm
    Vec3 u_axis;           // unit, column direction
    Vec3 v_axis;           // unit, row direction
    double pitch_u = 1.0;  // mm/pixel
    double pitch_v = 1.0;  // mm/pixel
    int n_u = 0, n_v = 0;  // pixel counts

    Vec3 normal() const { return u_axis.cross(v_axis); }

    Vec3 corner() const {
        return det_center - u_axis * (0.5 * n_u * pitch_u) - v_axis * (0.5 * n_v * pitch_v);
    }

    Vec3 detector_point(double u, double v) const {
        return corner() + u_axis * (u * pitch_u) + v_axis * (v * pitch_v);
    }

    // perpendicular source-to-detector-plane distance, signed along normal()
    double source_plane_distance() const { return (det_center - source).dot(normal()); }

    void validate() const {
        if (std::abs(u_axis.norm() - 1.0) > 1e-9 || std::abs(v_axis.norm() - 1.0) > 1e-9)
            throw InvalidArgument("detector axes must be unit vectors");
        if (std::abs(u_axis.dot(v_axis)) >= 1e-9)
            throw InvalidArgument("detector axes must be orthogonal");
        if (pitch_u <= 0.0 || pitch_v <= 0.0) throw InvalidArgument("pixel pitch must be positive");
        if (n_u <= 0 || n_v <= 0) throw InvalidArgument("pixel counts must be positive");
        if (std::abs(source_plane_distance()) <= 0.0)
            throw InvalidArgument("source must not lie in the detector plane");
    }
};

struct StereoRig {
    std::vector<ViewGeometry> views;  // 2 or 3
    GridSpec world_grid;

    void validate() const {
        if (views.size() < 2 || views.size() > 3)
            throw InvalidArgument("rig needs 2 or 3 views");
        for (const auto& v : views) v.validate();
        for (std::size_t i = 0; i < views.size(); ++i)
            for (std::size_t j = i + 1; j < views.size(); ++j)
                if (distance(views[i].source, views[j].source) < 1e-9)
                    throw InvalidArgument("views must not share a source position");
        world_grid.validate();
    }
};

struct Ray {
    Vec3 origin;
    Vec3 dir;  // unit
};

struct DepthRange {
    double near = 0.0;
    double far = 0.0;
};

// ---------------------------------------------------------------------------
// projection

// Perspective projection of a world point onto the detector, in continuous
// pixel units. Returns nullopt when the source->p direction is parallel to
// the detector plane or the intersection lies at or behind the source.
inline std::optional<Vec2> try_project_point(const ViewGeometry& view, const Vec3& p) noexcept {
    const Vec3 n = view.normal();
    const Vec3 d = p - view.source;
    const double dn = d.dot(n);
    const double dlen = d.norm();
    if (std::abs(dn) < 1e-12 * dlen || dlen == 0.0) return std::nullopt;
    const double t = (view.det_center - view.source).dot(n) / dn;
    if (t <= 0.0) return std::nullopt;
    const Vec3 q = view.source + d * t;
    const Vec3 local = q - view.corner();
    return Vec2{local.dot(view.u_axis) / view.pitch_u, local.dot(view.v_axis) / view.pitch_v};
}

inline Vec2 project_point(const ViewGeometry& view, const Vec3& p) {
    const Vec3 n = view.normal();
    const Vec3 d = p - view.source;
    const double dlen = d.norm();
    if (dlen == 0.0) throw InvalidArgument("point coincides with source");
    const double dn = d.dot(n);
    if (std::abs(dn) < 1e-12 * dlen)
        throw RayParallelToDetector("source->point direction parallel to detector plane");
    const double t = (view.det_center - view.source).dot(n) / dn;
    if (t <= 0.0) throw BehindSource("detector-plane intersection at or behind source");
    const Vec3 q = view.source + d * t;
    const Vec3 local = q - view.corner();
    return {local.dot(view.u_axis) / view.pitch_u, local.dot(view.v_axis) / view.pitch_v};
}

// Ray from the source through the physical location of pixel (u,v).
inline Ray pixel_ray(const ViewGeometry& view, double u, double v) {
    const Vec3 p = view.detector_point(u, v);
    return {view.source, (p - view.source).normalized()};
}

// ---------------------------------------------------------------------------
// ray intersections

struct ClosestApproach {
    Vec3 midpoint;
    double gap = 0.0;  // mm between the two nearest points
};

inline ClosestApproach closest_approach(const Ray& ray_a, const Ray& ray_b) {
    const Vec3& da = ray_a.dir;
    const Vec3& db = ray_b.dir;
    if (da.cross(db).norm() < 1e-12)
        throw ParallelRays("rays are parallel; no unique closest approach");
    const Vec3 r = ray_a.origin - ray_b.origin;
    const double b = da.dot(db);
    const double dra = r.dot(da);
    const double drb = r.dot(db);
    const double denom = 1.0 - b * b;
    const double ta = (b * drb - dra) / denom;
    const double tb = (drb - b * dra) / denom;
    const Vec3 pa = ray_a.origin + da * ta;
    const Vec3 pb = ray_b.origin + db * tb;
    return {(pa + pb) * 0.5, distance(pa, pb)};
}

// Point minimizing the sum of squared distances to all rays (3x3 normal
// equations); used for trinocular triangulation.
inline Vec3 least_squares_point(std::span<const Ray> rays) {
    Mat3 a;
    for (auto& c : a.m) c = 0.0;
    Vec3 rhs{0, 0, 0};
    for (const Ray& r : rays) {
        const Vec3 d = r.dir;
        const Mat3 proj = [&] {
            Mat3 m;
            m(0, 0) = 1 - d.x * d.x; m(0, 1) = -d.x * d.y;    m(0, 2) = -d.x * d.z;
            m(1, 0) = -d.y * d.x;    m(1, 1) = 1 - d.y * d.y; m(1, 2) = -d.y * d.z;
            m(2, 0) = -d.z * d.x;    m(2, 1) = -d.z * d.y;    m(2, 2) = 1 - d.z * d.z;
            return m;
        }();
        for (int i = 0; i < 9; ++i) a.m[static_cast<std::size_t>(i)] += proj.m[static_cast<std::size_t>(i)];
        rhs += proj * r.origin;
    }
    if (std::abs(a.det()) < 1e-12) throw ParallelRays("ray bundle is degenerate");
    return solve3x3(a, rhs);
}

inline double point_to_ray_distance(const Vec3& p, const Ray& r) {
    return (p - r.origin).cross(r.dir).norm();
}

// ---------------------------------------------------------------------------
// epipolar machinery

inline double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double len2 = ab.dot(ab);
    if (len2 <= 0.0) return (p - a).norm();
    double t = (p - a).dot(ab) / len2;
    t = std::min(1.0, std::max(0.0, t));
    return (p - (a + ab * t)).norm();
}

inline double polyline_distance(std::span<const Vec2> poly, const Vec2& p) {
    if (poly.empty()) return std::numeric_limits<double>::infinity();
    if (poly.size() == 1) return (p - poly[0]).norm();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < poly.size(); ++i)
        best = std::min(best, point_segment_distance(p, poly[i], poly[i + 1]));
    return best;
}

namespace detail {
// Liang-Barsky style test: does segment a-b intersect the axis box?
inline bool segment_hits_rect(const Vec2& a, const Vec2& b, double u0, double v0, double u1,
                              double v1) {
    double t0 = 0.0, t1 = 1.0;
    const double du = b.u - a.u, dv = b.v - a.v;
    const double p[4] = {-du, du, -dv, dv};
    const double q[4] = {a.u - u0, u1 - a.u, a.v - v0, v1 - a.v};
    for (int i = 0; i < 4; ++i) {
        if (p[i] == 0.0) {
            if (q[i] < 0.0) return false;
        } else {
            const double r = q[i] / p[i];
            if (p[i] < 0.0) {
                if (r > t1) return false;
                if (r > t0) t0 = r;
            } else {
                if (r < t0) return false;
                if (r < t1) t1 = r;
            }
        }
    }
    return true;
}
}  // namespace detail

// Projection into view_b of the ray through pixel (u,v) of view_a,
// restricted to depths [near, far] from view_a's source. The image of a
// straight ray under central projection is straight, so the returned
// polyline is geometrically exact between samples.
inline std::vector<Vec2> epipolar_curve(const ViewGeometry& view_a, const ViewGeometry& view_b,
                                        double u, double v, DepthRange depth_range,
                                        int n_samples = 33) {
    if (!(depth_range.near > 0.0) || !(depth_range.far > depth_range.near) ||
        !std::isfinite(depth_range.far))
        throw InvalidArgument("depth range must be positive and finite");
    if (n_samples < 2) throw InvalidArgument("need at least two curve samples");
    const Ray ray = pixel_ray(view_a, u, v);
    std::vector<Vec2> pts;
    pts.reserve(static_cast<std::size_t>(n_samples));
    for (int s = 0; s < n_samples; ++s) {
        const double t =
            depth_range.near + (depth_range.far - depth_range.near) * s / (n_samples - 1);
        if (auto q = try_project_point(view_b, ray.origin + ray.dir * t)) pts.push_back(*q);
    }
    if (pts.size() < 2) throw EmptyCurve("restricted ray does not project into view");
    bool visible = false;
    for (std::size_t i = 0; i + 1 < pts.size() && !visible; ++i)
        visible = detail::segment_hits_rect(pts[i], pts[i + 1], 0.0, 0.0, view_b.n_u, view_b.n_v);
    if (!visible) throw EmptyCurve("restricted ray projects entirely outside the detector");
    return pts;
}

// Parametric interval of a ray inside the (optionally inflated) grid box;
// nullopt when the ray misses the box.
inline std::optional<DepthRange> ray_grid_range(const Ray& ray, const GridSpec& grid,
                                                double inflate_frac = 0.0) {
    const Vec3 pad = grid.extent() * inflate_frac;
    const Vec3 lo = grid.origin - pad;
    const Vec3 hi = grid.max_corner() + pad;
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    const double o[3] = {ray.origin.x, ray.origin.y, ray.origin.z};
    const double d[3] = {ray.dir.x, ray.dir.y, ray.dir.z};
    const double lo3[3] = {lo.x, lo.y, lo.z};
    const double hi3[3] = {hi.x, hi.y, hi.z};
    for (int ax = 0; ax < 3; ++ax) {
        if (std::abs(d[ax]) < 1e-15) {
            if (o[ax] < lo3[ax] || o[ax] > hi3[ax]) return std::nullopt;
            continue;
        }
        double a = (lo3[ax] - o[ax]) / d[ax];
        double b = (hi3[ax] - o[ax]) / d[ax];
        if (a > b) std::swap(a, b);
        t0 = std::max(t0, a);
        t1 = std::min(t1, b);
    }
    if (t0 > t1) return std::nullopt;
    return DepthRange{t0, t1};
}

// ---------------------------------------------------------------------------
// rig construction

// Source orbiting the iso-center at the given azimuth/elevation (radians),
// flat detector on the opposite side, u axis horizontal.
inline ViewGeometry make_orbit_view(const Vec3& iso, double sod, double sdd, double azimuth,
                                    double elevation, int n_u, int n_v, double pitch_u,
                                    double pitch_v) {
    const double ca = std::cos(azimuth), sa = std::sin(azimuth);
    const double ce = std::cos(elevation), se = std::sin(elevation);
    const Vec3 dir{ca * ce, sa * ce, se};  // iso -> source
    ViewGeometry view;
    view.source = iso + dir * sod;
    view.det_center = iso - dir * (sdd - sod);
    view.u_axis = Vec3{-sa, ca, 0.0};
    view.v_axis = dir.cross(view.u_axis);
    view.pitch_u = pitch_u;
    view.pitch_v = pitch_v;
    view.n_u = n_u;
    view.n_v = n_v;
    view.validate();
    return view;
}

// Default synthetic rig. Views at azimuth 0 and 90 degrees about the
// vertical axis; the trinocular variant adds azimuth 45 elevated 30 so no
// two epipolar plane families are parallel. The cone (half-fan tangent 1/2)
// covers the cylinder inscribed in the grid: SOD = 2 * extent,
// SDD = 2 * SOD (magnification 2), detector width 4 * extent.
inline StereoRig default_rig(const GridSpec& grid, int n_views, int n_u, int n_v) {
    if (n_views != 2 && n_views != 3) throw InvalidArgument("rig needs 2 or 3 views");
    const Vec3 ext = grid.extent();
    const double e = std::max(ext.x, std::max(ext.y, ext.z));
    const double sod = 2.0 * e;
    const double sdd = 2.0 * sod;
    const double width = 4.0 * e;
    const double pi = 3.14159265358979323846;
    StereoRig rig;
    rig.world_grid = grid;
    const Vec3 iso = grid.center();
    rig.views.push_back(
        make_orbit_view(iso, sod, sdd, 0.0, 0.0, n_u, n_v, width / n_u, width / n_v));
    rig.views.push_back(
        make_orbit_view(iso, sod, sdd, pi / 2, 0.0, n_u, n_v, width / n_u, width / n_v));
    if (n_views == 3)
        rig.views.push_back(
            make_orbit_view(iso, sod, sdd, pi / 4, pi / 6, n_u, n_v, width / n_u, width / n_v));
    rig.validate();
    return rig;
}

}  // namespace sxt
