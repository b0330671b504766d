#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>
#include <utility>
#include <vector>

#include "detail/labels.hpp"
#include "detail/parallel.hpp"
#include "error.hpp"
#include "geometry.hpp"
#include "matcher.hpp"
#include "projector.hpp"
#include "volume.hpp"

namespace sxt {

struct Feature3D {
    enum class Kind { point, polyline };
    enum class Source { triangulated, volumetric };

    Kind kind = Kind::point;
    std::vector<Vec3> positions;  // 1 for a point, >= 2 for a polyline
    double residual_gap = 0.0;    // mm
    Source source = Source::triangulated;
    bool occlusion_flag = false;

    const Vec3& position() const { return positions.front(); }
};

namespace detail_map {

inline Ray entry_ray(const StereoRig& rig, const MatchEntry& e) {
    const auto v = static_cast<std::size_t>(e.candidate.view_id);
    if (v >= rig.views.size()) throw GeometryMismatch("candidate view_id outside rig");
    return pixel_ray(rig.views[v], e.candidate.position.u, e.candidate.position.v);
}

}  // namespace detail_map

// Triangulation by ray closest approach (2 rays) or the 3x3 least-squares
// point (3 rays). Occluded entries are line stand-ins; they still constrain
// the point (it lies on the line's image), so they are used only when fewer
// than two clean entries exist, and always set the occlusion flag.
inline Feature3D triangulate(const Match& match, const StereoRig& rig) {
    if (match.entries.size() < 2 || match.entries.size() > rig.views.size())
        throw GeometryMismatch("match entry count does not match rig views");
    std::vector<Ray> rays;
    bool occluded = false;
    for (const MatchEntry& e : match.entries) {
        if (e.occluded) {
            occluded = true;
            continue;
        }
        rays.push_back(detail_map::entry_ray(rig, e));
    }
    if (rays.size() < 2) {
        for (const MatchEntry& e : match.entries)
            if (e.occluded) rays.push_back(detail_map::entry_ray(rig, e));
    }
    if (rays.size() < 2) throw GeometryMismatch("need at least two usable rays");

    Feature3D out;
    out.kind = Feature3D::Kind::point;
    out.source = Feature3D::Source::triangulated;
    out.occlusion_flag = occluded;
    if (rays.size() == 2) {
        const auto ca = closest_approach(rays[0], rays[1]);
        out.positions = {ca.midpoint};
        out.residual_gap = ca.gap;
    } else {
        const Vec3 p = least_squares_point(rays);
        double ss = 0.0;
        for (const Ray& r : rays) {
            const double d = point_to_ray_distance(p, r);
            ss += d * d;
        }
        out.positions = {p};
        out.residual_gap = 2.0 * std::sqrt(ss / static_cast<double>(rays.size()));
    }
    return out;
}

// Polyline from a line match: triangulated endpoints plus triangulated
// interior samples ordered along the line; degenerate samples are linearly
// interpolated between their triangulated neighbors.
inline Feature3D reconstruct_line(const LineMatch& line_match, const StereoRig& rig) {
    Feature3D out;
    out.kind = Feature3D::Kind::polyline;
    out.source = Feature3D::Source::triangulated;

    struct Vertex {
        double s;
        Vec3 p;
        bool ok;
    };
    std::vector<Vertex> verts;
    double gap = 0.0;
    int n_ok = 0;

    const auto tri = [&](const Match& m, double s) {
        Vertex v{s, {}, false};
        try {
            const Feature3D f = triangulate(m, rig);
            v.p = f.position();
            v.ok = true;
            gap += f.residual_gap;
            ++n_ok;
            out.occlusion_flag = out.occlusion_flag || f.occlusion_flag;
        } catch (const Error&) {
        }
        return v;
    };

    double s_last = 0.0;
    for (const auto& sm : line_match.samples)
        s_last = std::max(s_last, sm.s_param);
    verts.push_back(tri(line_match.endpoint_a, -1.0));
    for (const auto& sm : line_match.samples) {
        if (sm.degenerate) {
            verts.push_back({sm.s_param, {}, false});
        } else {
            verts.push_back(tri(sm.match, sm.s_param));
        }
    }
    verts.push_back(tri(line_match.endpoint_b, s_last + 1.0));

    if (n_ok < 2) throw AllSamplesDegenerate("no two line vertices could be triangulated");

    // interpolate failed vertices between their triangulated neighbors
    for (std::size_t i = 0; i < verts.size(); ++i) {
        if (verts[i].ok) continue;
        std::size_t lo = i, hi = i;
        while (lo > 0 && !verts[lo].ok) --lo;
        while (hi + 1 < verts.size() && !verts[hi].ok) ++hi;
        if (!verts[lo].ok || !verts[hi].ok) continue;  // dangling end, dropped below
        const double t = (verts[i].s - verts[lo].s) / (verts[hi].s - verts[lo].s);
        verts[i].p = verts[lo].p + (verts[hi].p - verts[lo].p) * t;
        verts[i].ok = true;
    }
    for (const auto& v : verts)
        if (v.ok) out.positions.push_back(v.p);
    out.residual_gap = gap / n_ok;
    if (out.positions.size() < 2) throw AllSamplesDegenerate("polyline collapsed");
    return out;
}

struct VolumetricParams {
    double extract_threshold = 0.5;  // fraction of the filtered sum's maximum
    FilterWindow window = FilterWindow::hann;
    double support_eps = 1e-6;       // bilinear mask support cutoff
    int min_component_voxels = 2;
    double line_aspect = 3.0;        // extent/width for polyline classification
    double min_line_extent_voxels = 5.0;
};

// Volumetric 3D mapping: the filtered backprojection sum of the masks,
// with features extracted as connected components of voxels that (a) fall
// inside every view's backprojected mask support and (b) clear the
// threshold on the filtered sum. This makes the intersection logic of the
// stereo pair explicit; a feature hidden behind a line in one view is still
// recovered because the line's backprojection supplies the missing support.
inline std::pair<Volume3D, std::vector<Feature3D>> volumetric_map(
    const std::vector<FeatureMask>& masks, const StereoRig& rig, const GridSpec& grid,
    const VolumetricParams& params = {}) {
    if (masks.size() != rig.views.size()) throw GeometryMismatch("mask/view count mismatch");
    rig.validate();

    Volume3D vol = fbp_sum(masks, rig.views, grid, params.window);

    // AND of per-view (unfiltered) backprojected supports
    std::vector<std::uint8_t> support(vol.data.size(), 1);
    for (std::size_t m = 0; m < masks.size(); ++m) {
        const ProjectionImage proj{rig.views[m], masks[m].as_image()};
        const Volume3D bp = backproject(proj, grid, BackprojectionWeight::none);
        for (std::size_t i = 0; i < support.size(); ++i)
            if (bp.data[i] <= params.support_eps) support[i] = 0;
    }

    float vmax = 0.0f;
    for (float x : vol.data) vmax = std::max(vmax, x);
    const float cut = static_cast<float>(params.extract_threshold) * vmax;

    std::vector<std::uint8_t> keep(vol.data.size(), 0);
    for (std::size_t i = 0; i < keep.size(); ++i)
        keep[i] = (support[i] && vol.data[i] >= cut && vol.data[i] > 0.0f) ? 1 : 0;

    std::vector<Feature3D> features;
    const auto comps = detail::components_3d(keep, grid.nx, grid.ny, grid.nz);
    for (const auto& comp : comps) {
        if (static_cast<int>(comp.voxels.size()) < params.min_component_voxels) continue;
        // weighted centroid and principal axis
        double sw = 0;
        Vec3 c{0, 0, 0};
        for (std::int64_t idx : comp.voxels) {
            const int i = static_cast<int>(idx % grid.nx);
            const int j = static_cast<int>((idx / grid.nx) % grid.ny);
            const int k = static_cast<int>(idx / (static_cast<std::int64_t>(grid.nx) * grid.ny));
            const double w = std::max(0.0f, vol.data[static_cast<std::size_t>(idx)]);
            c += grid.voxel_center(i, j, k) * w;
            sw += w;
        }
        if (sw <= 0) continue;
        c = c / sw;

        Mat3 cov;
        for (auto& x : cov.m) x = 0.0;
        for (std::int64_t idx : comp.voxels) {
            const int i = static_cast<int>(idx % grid.nx);
            const int j = static_cast<int>((idx / grid.nx) % grid.ny);
            const int k = static_cast<int>(idx / (static_cast<std::int64_t>(grid.nx) * grid.ny));
            const double w = std::max(0.0f, vol.data[static_cast<std::size_t>(idx)]);
            const Vec3 d = grid.voxel_center(i, j, k) - c;
            cov(0, 0) += w * d.x * d.x;
            cov(0, 1) += w * d.x * d.y;
            cov(0, 2) += w * d.x * d.z;
            cov(1, 1) += w * d.y * d.y;
            cov(1, 2) += w * d.y * d.z;
            cov(2, 2) += w * d.z * d.z;
        }
        cov(1, 0) = cov(0, 1);
        cov(2, 0) = cov(0, 2);
        cov(2, 1) = cov(1, 2);
        for (auto& x : cov.m) x /= sw;

        // dominant eigenvector by power iteration
        Vec3 axis{1.0, 0.7, 0.4};
        for (int it = 0; it < 32; ++it) {
            const Vec3 next = cov * axis;
            const double n = next.norm();
            if (n < 1e-20) break;
            axis = next / n;
        }
        double smin = std::numeric_limits<double>::infinity();
        double smax = -std::numeric_limits<double>::infinity();
        double perp2 = 0;
        for (std::int64_t idx : comp.voxels) {
            const int i = static_cast<int>(idx % grid.nx);
            const int j = static_cast<int>((idx / grid.nx) % grid.ny);
            const int k = static_cast<int>(idx / (static_cast<std::int64_t>(grid.nx) * grid.ny));
            const Vec3 d = grid.voxel_center(i, j, k) - c;
            const double s = d.dot(axis);
            smin = std::min(smin, s);
            smax = std::max(smax, s);
            perp2 = std::max(perp2, (d - axis * s).norm2());
        }
        const double extent = (smax - smin) / grid.voxel_size + 1.0;
        const double width = 2.0 * std::sqrt(perp2) / grid.voxel_size + 1.0;

        Feature3D f;
        f.source = Feature3D::Source::volumetric;
        if (extent >= params.min_line_extent_voxels && extent / width >= params.line_aspect) {
            f.kind = Feature3D::Kind::polyline;
            // endpoints from end slabs, kept at the extreme axial coordinate
            const auto slab = [&](double lo, double hi, double s_at) {
                double w_sum = 0;
                Vec3 acc{0, 0, 0};
                for (std::int64_t idx : comp.voxels) {
                    const int i = static_cast<int>(idx % grid.nx);
                    const int j = static_cast<int>((idx / grid.nx) % grid.ny);
                    const int k =
                        static_cast<int>(idx / (static_cast<std::int64_t>(grid.nx) * grid.ny));
                    const Vec3 p = grid.voxel_center(i, j, k);
                    const double s = (p - c).dot(axis);
                    if (s < lo || s > hi) continue;
                    const double w = std::max(0.0f, vol.data[static_cast<std::size_t>(idx)]);
                    acc += p * w;
                    w_sum += w;
                }
                if (w_sum <= 0) return c + axis * s_at;
                const Vec3 sc = acc / w_sum;
                return sc + axis * (s_at - (sc - c).dot(axis));
            };
            const double slab_w = 1.5 * grid.voxel_size;
            f.positions = {slab(smin, smin + slab_w, smin), slab(smax - slab_w, smax, smax)};
        } else {
            f.kind = Feature3D::Kind::point;
            f.positions = {c};
        }
        features.push_back(std::move(f));
    }

    // deterministic order: by first position
    std::sort(features.begin(), features.end(), [](const Feature3D& a, const Feature3D& b) {
        const Vec3& pa = a.positions.front();
        const Vec3& pb = b.positions.front();
        return std::tie(pa.x, pa.y, pa.z) < std::tie(pb.x, pb.y, pb.z);
    });
    return {std::move(vol), std::move(features)};
}

}  // namespace sxt
