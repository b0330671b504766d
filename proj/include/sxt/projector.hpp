#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "detail/fft.hpp"
#include "detail/parallel.hpp"
#include "error.hpp"
#include "geometry.hpp"
#include "image.hpp"
#include "volume.hpp"

namespace sxt {

namespace detail_proj {

// Walks the voxels pierced by segment p0->p1 in traversal order and calls
// visit(i, j, k, length_mm) for each. Exact radiological path: interval
// endpoints are the parametric plane crossings, voxel indices come from
// the interval midpoint.
template <class Visit>
void siddon_traverse(const GridSpec& g, const Vec3& p0, const Vec3& p1, Visit&& visit) {
    const Vec3 d = p1 - p0;
    const double dlen = d.norm();
    if (dlen == 0.0) return;

    const double o[3] = {p0.x, p0.y, p0.z};
    const double dd[3] = {d.x, d.y, d.z};
    const double glo[3] = {g.origin.x, g.origin.y, g.origin.z};
    const int n[3] = {g.nx, g.ny, g.nz};
    const double vs = g.voxel_size;

    double t0 = 0.0, t1 = 1.0;
    for (int ax = 0; ax < 3; ++ax) {
        const double hi = glo[ax] + n[ax] * vs;
        if (std::abs(dd[ax]) < 1e-14 * dlen) {
            if (o[ax] <= glo[ax] || o[ax] >= hi) return;
            continue;
        }
        double a = (glo[ax] - o[ax]) / dd[ax];
        double b = (hi - o[ax]) / dd[ax];
        if (a > b) std::swap(a, b);
        t0 = std::max(t0, a);
        t1 = std::min(t1, b);
    }
    if (t0 >= t1) return;

    // next plane crossing and crossing step per axis
    double t_next[3], dt[3];
    for (int ax = 0; ax < 3; ++ax) {
        if (std::abs(dd[ax]) < 1e-14 * dlen) {
            t_next[ax] = std::numeric_limits<double>::infinity();
            dt[ax] = std::numeric_limits<double>::infinity();
            continue;
        }
        dt[ax] = vs / std::abs(dd[ax]);
        const double pos = o[ax] + t0 * dd[ax];
        const double fk = (pos - glo[ax]) / vs;
        double k_next;
        if (dd[ax] > 0.0) {
            k_next = std::floor(fk) + 1.0;
        } else {
            k_next = std::ceil(fk) - 1.0;
        }
        t_next[ax] = (glo[ax] + k_next * vs - o[ax]) / dd[ax];
        if (t_next[ax] <= t0) t_next[ax] += dt[ax];
    }

    double t = t0;
    const double t_eps = 1e-13;
    while (t < t1 - t_eps) {
        double tn = std::min(std::min(t_next[0], t_next[1]), std::min(t_next[2], t1));
        if (tn > t1) tn = t1;
        const double tm = 0.5 * (t + tn);
        const int i = static_cast<int>(std::floor((o[0] + tm * dd[0] - glo[0]) / vs));
        const int j = static_cast<int>(std::floor((o[1] + tm * dd[1] - glo[1]) / vs));
        const int k = static_cast<int>(std::floor((o[2] + tm * dd[2] - glo[2]) / vs));
        if (i >= 0 && i < n[0] && j >= 0 && j < n[1] && k >= 0 && k < n[2] && tn > t)
            visit(i, j, k, (tn - t) * dlen);
        for (int ax = 0; ax < 3; ++ax)
            if (t_next[ax] <= tn + t_eps) t_next[ax] += dt[ax];
        t = tn;
    }
}

inline bool source_in_box(const ViewGeometry& view, const GridSpec& g) {
    const Vec3 hi = g.max_corner();
    const Vec3& s = view.source;
    return s.x > g.origin.x && s.x < hi.x && s.y > g.origin.y && s.y < hi.y &&
           s.z > g.origin.z && s.z < hi.z;
}

}  // namespace detail_proj

// Line integral of the volume along each source->pixel-center ray.
inline ProjectionImage forward_project(const Volume3D& volume, const ViewGeometry& view) {
    view.validate();
    volume.grid.validate();
    if (detail_proj::source_in_box(view, volume.grid))
        throw SourceInsideVolume("source lies inside the volume bounding box");

    ProjectionImage proj;
    proj.view = view;
    proj.img = ImageF::zeros(view.n_u, view.n_v);
    parallel::parallel_for(0, view.n_v, [&](std::int64_t v) {
        for (int u = 0; u < view.n_u; ++u) {
            const Vec3 px = view.detector_point(u + 0.5, static_cast<double>(v) + 0.5);
            double acc = 0.0;
            detail_proj::siddon_traverse(volume.grid, view.source, px,
                                         [&](int i, int j, int k, double len) {
                                             acc += len * volume.at(i, j, k);
                                         });
            proj.img.at(u, static_cast<int>(v)) = static_cast<float>(acc);
        }
    });
    return proj;
}

enum class FilterWindow { ramlak, hann };

// Feldkamp-style row filtering: cosine weighting by source-pixel geometry,
// then row-wise convolution with the discrete ramp kernel
// (h[0] = 1/(4 tau^2), h[k] = -1/(pi^2 k^2 tau^2) for odd k, 0 even),
// evaluated in the frequency domain with zero padding to the next power of
// two >= 2 n_u so circular wraparound never reaches the data.
inline ProjectionImage ramp_filter(const ProjectionImage& projection,
                                   FilterWindow window = FilterWindow::ramlak) {
    projection.validate();
    const ViewGeometry& view = projection.view;
    if (view.n_u < 4) throw InvalidArgument("ramp filter needs at least 4 columns");

    const int nu = view.n_u, nv = view.n_v;
    const double tau = view.pitch_u;

    // principal point: orthogonal projection of the source onto the
    // detector plane, in detector-local mm
    Vec3 n = view.normal();
    double dist = (view.det_center - view.source).dot(n);
    if (dist < 0.0) {
        n = -n;
        dist = -dist;
    }
    const Vec3 foot = view.source + n * dist;
    const Vec3 foot_local = foot - view.corner();
    const double fu = foot_local.dot(view.u_axis);
    const double fv = foot_local.dot(view.v_axis);

    ProjectionImage weighted = projection;
    for (int v = 0; v < nv; ++v)
        for (int u = 0; u < nu; ++u) {
            const double du = (u + 0.5) * view.pitch_u - fu;
            const double dv = (v + 0.5) * view.pitch_v - fv;
            weighted.img.at(u, v) = static_cast<float>(
                weighted.img.at(u, v) * dist / std::sqrt(dist * dist + du * du + dv * dv));
        }

    const std::size_t p = detail::next_pow2(static_cast<std::size_t>(2 * nu));
    std::vector<std::complex<double>> kernel(p, 0.0);
    kernel[0] = 1.0 / (4.0 * tau * tau);
    const double pi = 3.14159265358979323846;
    for (int k = 1; k < nu; ++k) {
        const double h = (k % 2 == 1) ? -1.0 / (pi * pi * k * k * tau * tau) : 0.0;
        kernel[static_cast<std::size_t>(k)] = h;
        kernel[p - static_cast<std::size_t>(k)] = h;
    }
    detail::fft_inplace(kernel, false);
    if (window == FilterWindow::hann) {
        for (std::size_t f = 0; f < p; ++f) {
            const std::size_t fold = std::min(f, p - f);
            kernel[f] *= 0.5 * (1.0 + std::cos(pi * static_cast<double>(fold) /
                                               static_cast<double>(p / 2)));
        }
    }

    ProjectionImage out = projection;
    parallel::parallel_for(0, nv, [&](std::int64_t v) {
        std::vector<std::complex<double>> row(p, 0.0);
        for (int u = 0; u < nu; ++u) row[static_cast<std::size_t>(u)] = weighted.img.at(u, static_cast<int>(v));
        detail::fft_inplace(row, false);
        for (std::size_t f = 0; f < p; ++f) row[f] *= kernel[f];
        detail::fft_inplace(row, true);
        for (int u = 0; u < nu; ++u)
            out.img.at(u, static_cast<int>(v)) =
                static_cast<float>(row[static_cast<std::size_t>(u)].real() * tau);
    });
    return out;
}

enum class BackprojectionWeight { none, fdk };

// Voxel-driven backprojection: bilinear sample of the projection at each
// voxel center's detector coordinate, with the FDK inverse-square distance
// weight unless disabled. Voxels projecting outside the detector get 0.
inline Volume3D backproject(const ProjectionImage& projection, const GridSpec& grid,
                            BackprojectionWeight weighting = BackprojectionWeight::fdk) {
    projection.validate();
    grid.validate();
    const ViewGeometry& view = projection.view;

    Vec3 n = view.normal();
    double dist = (view.det_center - view.source).dot(n);
    if (dist < 0.0) {
        n = -n;
        dist = -dist;
    }

    Volume3D vol = Volume3D::zeros(grid);
    parallel::parallel_for(0, grid.nz, [&](std::int64_t k) {
        for (int j = 0; j < grid.ny; ++j)
            for (int i = 0; i < grid.nx; ++i) {
                const Vec3 p = grid.voxel_center(i, j, static_cast<int>(k));
                const auto q = try_project_point(view, p);
                if (!q) continue;
                const double val = projection.img.bilinear(q->u, q->v);
                if (val == 0.0) continue;
                double w = 1.0;
                if (weighting == BackprojectionWeight::fdk) {
                    const double dn = (p - view.source).dot(n);
                    w = (dist / dn) * (dist / dn);
                }
                vol.at(i, j, static_cast<int>(k)) = static_cast<float>(
                    vol.at(i, j, static_cast<int>(k)) + w * val);
            }
    });
    return vol;
}

// Exact transpose of forward_project (ray-driven splat): satisfies
// <forward_project(V), P> == <V, backproject_adjoint(P)> to rounding.
// Sequential; intended for adjoint checks and small grids.
inline Volume3D backproject_adjoint(const ProjectionImage& projection, const GridSpec& grid) {
    projection.validate();
    grid.validate();
    const ViewGeometry& view = projection.view;
    Volume3D vol = Volume3D::zeros(grid);
    for (int v = 0; v < view.n_v; ++v)
        for (int u = 0; u < view.n_u; ++u) {
            const float val = projection.img.at(u, v);
            if (val == 0.0f) continue;
            const Vec3 px = view.detector_point(u + 0.5, v + 0.5);
            detail_proj::siddon_traverse(grid, view.source, px,
                                         [&](int i, int j, int k, double len) {
                                             vol.at(i, j, k) +=
                                                 static_cast<float>(len * val);
                                         });
        }
    return vol;
}

// Sum over views of backproject(ramp_filter(mask)); linear in each input.
// The backprojection is unweighted: with only two views, the FDK
// inverse-square distance weight inflates single-ray ridge values near the
// source enough to beat genuine two-ray crossings, which is exactly what
// feature extraction must not reward. Quantitative FDK weighting stays
// available through backproject() directly.
inline Volume3D fbp_sum(const std::vector<FeatureMask>& masks,
                        const std::vector<ViewGeometry>& views, const GridSpec& grid,
                        FilterWindow window = FilterWindow::ramlak) {
    if (masks.size() != views.size()) throw GeometryMismatch("mask/view count mismatch");
    if (masks.size() < 2 || masks.size() > 3)
        throw GeometryMismatch("fbp_sum needs 2 or 3 views");
    Volume3D acc = Volume3D::zeros(grid);
    for (std::size_t i = 0; i < masks.size(); ++i) {
        if (masks[i].n_u != views[i].n_u || masks[i].n_v != views[i].n_v)
            throw GeometryMismatch("mask dims do not match view");
        ProjectionImage proj{views[i], masks[i].as_image()};
        const Volume3D bp =
            backproject(ramp_filter(proj, window), grid, BackprojectionWeight::none);
        for (std::size_t t = 0; t < acc.data.size(); ++t) acc.data[t] += bp.data[t];
    }
    return acc;
}

}  // namespace sxt
