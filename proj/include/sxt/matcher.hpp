#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <tuple>
#include <vector>

#include "detail/labels.hpp"
#include "error.hpp"
#include "geometry.hpp"
#include "image.hpp"

namespace sxt {

struct MatcherParams {
    double min_line_length_px = 8.0;  // component extent below this is a point
    double line_axis_ratio = 3.0;      // extent / width needed for a line
    double sample_spacing_px = 2.0;    // interior line sample spacing
    double min_peak_score = 0.5;       // drop components weaker than this (when scored)
    double merge_gap_px = 8.0;         // collinear line fragments closer than this merge
    double endpoint_slack = 2.0;      // endpoint admission factor on tol_px
    int curve_samples = 33;
    double grid_inflate = 0.1;         // epipolar depth range margin
    double degenerate_sin = 0.15;      // curve-vs-line angle below this is degenerate

    void validate() const {
        if (min_line_length_px <= 0 || line_axis_ratio <= 0 || sample_spacing_px <= 0)
            throw InvalidArgument("matcher params must be positive");
        if (min_peak_score < 0.0 || min_peak_score >= 1.0)
            throw InvalidArgument("min_peak_score must lie in [0,1)");
        if (merge_gap_px < 0.0 || endpoint_slack < 1.0)
            throw InvalidArgument("bad merge gap or endpoint slack");
    }
};

struct FeatureCandidate {
    enum class Kind { point, line_endpoint, line_sample };

    int view_id = 0;
    Kind kind = Kind::point;
    Vec2 position;            // sub-pixel, pixel units
    int component_id = -1;
    std::optional<double> line_axis;  // component orientation, radians
};

struct MatchEntry {
    FeatureCandidate candidate;
    bool occluded = false;  // stand-in entry borrowed from a line component
};

struct Match {
    std::vector<MatchEntry> entries;  // one per view
    double epipolar_residual = 0.0;   // px
    bool ambiguity_flag = false;
};

// ---------------------------------------------------------------------------
// candidate extraction

namespace detail_match {

struct CompStats {
    int id = -1;
    std::vector<std::int64_t> pixels;
    std::vector<double> weights;
    Vec2 centroid;
    Vec2 axis;
    double theta = 0.0;
    double smin = 0.0, smax = 0.0;  // axial extent about the centroid
    double width = 1.0;
    bool is_line = false;
};

inline CompStats analyze_component(const FeatureMask& mask, std::vector<std::int64_t> pixels,
                                   int id, const MatcherParams& params) {
    CompStats st;
    st.id = id;
    st.pixels = std::move(pixels);
    st.weights.resize(st.pixels.size());
    double sw = 0, su = 0, sv = 0;
    for (std::size_t i = 0; i < st.pixels.size(); ++i) {
        const double u = static_cast<double>(st.pixels[i] % mask.n_u) + 0.5;
        const double v = static_cast<double>(st.pixels[i] / mask.n_u) + 0.5;
        const double w =
            mask.has_score() ? mask.score[static_cast<std::size_t>(st.pixels[i])] : 1.0;
        st.weights[i] = w;
        sw += w;
        su += w * u;
        sv += w * v;
    }
    if (sw <= 0) sw = 1.0;
    st.centroid = {su / sw, sv / sw};

    double muu = 0, mvv = 0, muv = 0;
    for (std::size_t i = 0; i < st.pixels.size(); ++i) {
        const double du = static_cast<double>(st.pixels[i] % mask.n_u) + 0.5 - st.centroid.u;
        const double dv = static_cast<double>(st.pixels[i] / mask.n_u) + 0.5 - st.centroid.v;
        muu += st.weights[i] * du * du;
        mvv += st.weights[i] * dv * dv;
        muv += st.weights[i] * du * dv;
    }
    muu /= sw;
    mvv /= sw;
    muv /= sw;
    st.theta = 0.5 * std::atan2(2.0 * muv, muu - mvv);
    st.axis = {std::cos(st.theta), std::sin(st.theta)};

    st.smin = std::numeric_limits<double>::infinity();
    st.smax = -std::numeric_limits<double>::infinity();
    for (std::int64_t p : st.pixels) {
        const Vec2 pos{static_cast<double>(p % mask.n_u) + 0.5,
                       static_cast<double>(p / mask.n_u) + 0.5};
        const double s = (pos - st.centroid).dot(st.axis);
        st.smin = std::min(st.smin, s);
        st.smax = std::max(st.smax, s);
    }
    const double extent = st.smax - st.smin + 1.0;
    const double half = 0.5 * (muu + mvv);
    const double diff = std::sqrt(0.25 * (muu - mvv) * (muu - mvv) + muv * muv);
    const double lam_minor = std::max(half - diff, 0.0);
    st.width = std::sqrt(12.0 * lam_minor) + 1.0;
    st.is_line =
        extent >= params.min_line_length_px && extent / st.width >= params.line_axis_ratio;
    return st;
}

inline Vec2 comp_end(const CompStats& st, bool far_end) {
    const double s = far_end ? st.smax : st.smin;
    return st.centroid + st.axis * s;
}

// A thin feature broken by the detector shows up as near-collinear line
// fragments with a small gap; fuse them back into one component.
inline bool should_merge(const CompStats& a, const CompStats& b, const MatcherParams& params) {
    if (!a.is_line || !b.is_line) return false;
    if (std::abs(a.axis.dot(b.axis)) < 0.98) return false;
    double best_gap = std::numeric_limits<double>::infinity();
    for (bool ea : {false, true})
        for (bool eb : {false, true})
            best_gap = std::min(best_gap, (comp_end(a, ea) - comp_end(b, eb)).norm());
    if (best_gap > params.merge_gap_px) return false;
    // lateral agreement: b's centroid close to a's axis line and vice versa
    const auto lateral = [](const CompStats& x, const CompStats& y) {
        const Vec2 d = y.centroid - x.centroid;
        return std::abs(d.u * x.axis.v - d.v * x.axis.u);
    };
    const double lat = std::min(lateral(a, b), lateral(b, a));
    return lat < std::max(a.width, b.width) + 2.0;
}

}  // namespace detail_match

// Connected components classified by shape: compact blobs become point
// candidates at their (score-weighted) centroid; elongated ones become a
// pair of endpoints at the extrema along the principal axis plus equally
// spaced interior samples. Near-collinear line fragments separated by a
// small gap are merged before classification.
inline std::vector<FeatureCandidate> extract_candidates(const FeatureMask& mask,
                                                        const MatcherParams& params = {},
                                                        int view_id = 0) {
    params.validate();
    const auto raw = detail::components_2d(mask.bits, mask.n_u, mask.n_v);

    std::vector<detail_match::CompStats> comps;
    for (std::size_t c = 0; c < raw.size(); ++c) {
        if (mask.has_score()) {
            float peak = 0.0f;
            for (std::int64_t p : raw[c].pixels)
                peak = std::max(peak, mask.score[static_cast<std::size_t>(p)]);
            if (peak < params.min_peak_score) continue;
        }
        comps.push_back(detail_match::analyze_component(mask, raw[c].pixels,
                                                        static_cast<int>(c), params));
    }

    // merge collinear line fragments until stable
    bool merged = true;
    while (merged) {
        merged = false;
        for (std::size_t i = 0; i < comps.size() && !merged; ++i)
            for (std::size_t j = i + 1; j < comps.size() && !merged; ++j) {
                if (!detail_match::should_merge(comps[i], comps[j], params)) continue;
                std::vector<std::int64_t> px = comps[i].pixels;
                px.insert(px.end(), comps[j].pixels.begin(), comps[j].pixels.end());
                const int id = std::min(comps[i].id, comps[j].id);
                comps.erase(comps.begin() + static_cast<std::ptrdiff_t>(j));
                comps[i] = detail_match::analyze_component(mask, std::move(px), id, params);
                merged = true;
            }
    }

    std::vector<FeatureCandidate> out;
    for (const auto& st : comps) {
        if (!st.is_line) {
            out.push_back(
                {view_id, FeatureCandidate::Kind::point, st.centroid, st.id, std::nullopt});
            continue;
        }
        // slab centroid near an axial coordinate; endpoint keeps the slab's
        // cross-axis position but sits at the extreme axial coordinate
        const auto slab_position = [&](double s_lo, double s_hi, double s_at) {
            double w_sum = 0, u_sum = 0, v_sum = 0;
            for (std::size_t i = 0; i < st.pixels.size(); ++i) {
                const Vec2 pos{static_cast<double>(st.pixels[i] % mask.n_u) + 0.5,
                               static_cast<double>(st.pixels[i] / mask.n_u) + 0.5};
                const double s = (pos - st.centroid).dot(st.axis);
                if (s < s_lo || s > s_hi) continue;
                w_sum += st.weights[i];
                u_sum += st.weights[i] * pos.u;
                v_sum += st.weights[i] * pos.v;
            }
            if (w_sum <= 0) return st.centroid + st.axis * s_at;
            const Vec2 sc{u_sum / w_sum, v_sum / w_sum};
            const double s_sc = (sc - st.centroid).dot(st.axis);
            return sc + st.axis * (s_at - s_sc);
        };

        const Vec2 end_a = slab_position(st.smin, st.smin + 1.5, st.smin);
        const Vec2 end_b = slab_position(st.smax - 1.5, st.smax, st.smax);
        out.push_back(
            {view_id, FeatureCandidate::Kind::line_endpoint, end_a, st.id, st.theta});
        out.push_back(
            {view_id, FeatureCandidate::Kind::line_endpoint, end_b, st.id, st.theta});
        const int n_samples = static_cast<int>((st.smax - st.smin) / params.sample_spacing_px);
        for (int k = 1; k < n_samples; ++k) {
            const double s_k = st.smin + k * params.sample_spacing_px;
            if (s_k >= st.smax) break;
            const Vec2 pos = slab_position(s_k - 0.5 * params.sample_spacing_px,
                                           s_k + 0.5 * params.sample_spacing_px, s_k);
            out.push_back({view_id, FeatureCandidate::Kind::line_sample, pos, st.id, st.theta});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// epipolar residuals

namespace detail_match {

constexpr double kInadmissible = std::numeric_limits<double>::infinity();

// one-directional distance: candidate b against the epipolar curve of a
inline double curve_distance(const ViewGeometry& va, const ViewGeometry& vb, const Vec2& a,
                             const Vec2& b, const GridSpec& grid, const MatcherParams& params) {
    const Ray ray = pixel_ray(va, a.u, a.v);
    const auto range = ray_grid_range(ray, grid, params.grid_inflate);
    if (!range || !(range->near > 0.0)) return kInadmissible;
    try {
        const auto curve =
            epipolar_curve(va, vb, a.u, a.v, *range, params.curve_samples);
        return polyline_distance(curve, b);
    } catch (const EmptyCurve&) {
        return kInadmissible;
    }
}

inline double symmetric_residual(const ViewGeometry& va, const ViewGeometry& vb, const Vec2& a,
                                 const Vec2& b, const GridSpec& grid,
                                 const MatcherParams& params) {
    const double d1 = curve_distance(va, vb, a, b, grid, params);
    const double d2 = curve_distance(vb, va, b, a, grid, params);
    if (d1 == kInadmissible || d2 == kInadmissible) return kInadmissible;
    return 0.5 * (d1 + d2);
}

inline std::vector<const FeatureCandidate*> of_kind(const std::vector<FeatureCandidate>& cands,
                                                    FeatureCandidate::Kind kind) {
    std::vector<const FeatureCandidate*> out;
    for (const auto& c : cands)
        if (c.kind == kind) out.push_back(&c);
    return out;
}

inline std::vector<const FeatureCandidate*> line_like(
    const std::vector<FeatureCandidate>& cands) {
    std::vector<const FeatureCandidate*> out;
    for (const auto& c : cands)
        if (c.kind != FeatureCandidate::Kind::point) out.push_back(&c);
    return out;
}

}  // namespace detail_match

// ---------------------------------------------------------------------------
// point matching

// Epipolar correspondence of point candidates across 2 or 3 views.
// Binocular: admissible pairs (symmetrized epipolar residual <= tol_px)
// resolved greedily by residual to a one-to-one assignment; candidates with
// several admissible partners set the ambiguity flag. Trinocular: only
// triples admissible in all three pairings survive, which removes binocular
// epipolar-plane ambiguities. A point candidate with no admissible point
// partner in some view may borrow the nearest admissible line sample there
// as an OCCLUDED stand-in entry.
inline std::vector<Match> match_points(const std::vector<std::vector<FeatureCandidate>>& cands_by_view,
                                       const StereoRig& rig, double tol_px,
                                       const MatcherParams& params = {}) {
    if (cands_by_view.size() < 2) throw NoViews("need candidate lists for at least two views");
    if (!(tol_px > 0.0)) throw ToleranceNonPositive("tolerance must be positive");
    if (cands_by_view.size() != rig.views.size())
        throw GeometryMismatch("candidate lists do not match rig views");
    rig.validate();
    params.validate();
    using detail_match::kInadmissible;

    const std::size_t n_views = rig.views.size();
    std::vector<std::vector<const FeatureCandidate*>> points(n_views);
    for (std::size_t v = 0; v < n_views; ++v)
        points[v] = detail_match::of_kind(cands_by_view[v], FeatureCandidate::Kind::point);

    const auto residual = [&](std::size_t va, std::size_t vb, const Vec2& a, const Vec2& b) {
        return detail_match::symmetric_residual(rig.views[va], rig.views[vb], a, b,
                                                rig.world_grid, params);
    };

    std::vector<Match> matches;

    if (n_views == 2) {
        const auto& pa = points[0];
        const auto& pb = points[1];
        std::vector<std::vector<double>> r(pa.size(), std::vector<double>(pb.size()));
        std::vector<int> adm_a(pa.size(), 0), adm_b(pb.size(), 0);
        for (std::size_t i = 0; i < pa.size(); ++i)
            for (std::size_t j = 0; j < pb.size(); ++j) {
                r[i][j] = residual(0, 1, pa[i]->position, pb[j]->position);
                if (r[i][j] <= tol_px) {
                    ++adm_a[i];
                    ++adm_b[j];
                }
            }
        struct Pair {
            double res;
            std::size_t i, j;
        };
        std::vector<Pair> pairs;
        for (std::size_t i = 0; i < pa.size(); ++i)
            for (std::size_t j = 0; j < pb.size(); ++j)
                if (r[i][j] <= tol_px) pairs.push_back({r[i][j], i, j});
        std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
            return std::tie(x.res, x.i, x.j) < std::tie(y.res, y.i, y.j);
        });
        std::vector<bool> used_a(pa.size(), false), used_b(pb.size(), false);
        for (const Pair& p : pairs) {
            if (used_a[p.i] || used_b[p.j]) continue;
            used_a[p.i] = used_b[p.j] = true;
            Match m;
            m.entries = {{*pa[p.i], false}, {*pb[p.j], false}};
            m.epipolar_residual = p.res;
            m.ambiguity_flag = adm_a[p.i] > 1 || adm_b[p.j] > 1;
            matches.push_back(std::move(m));
        }
        // occlusion: a point with no admissible point partner may be hidden
        // behind a line or another point in the other view; borrow the
        // covering candidate as an OCCLUDED stand-in when the resulting
        // 3D intersection is geometrically sane (inside the world grid)
        const auto occluded_ok = [&](std::size_t view_pt, const Vec2& pt, const Vec2& other) {
            const Ray ra = pixel_ray(rig.views[view_pt], pt.u, pt.v);
            const Ray rb = pixel_ray(rig.views[1 - view_pt], other.u, other.v);
            try {
                const auto ca = closest_approach(ra, rb);
                const Vec3 pad = rig.world_grid.extent() * 0.1;
                const Vec3 lo = rig.world_grid.origin - pad;
                const Vec3 hi = rig.world_grid.max_corner() + pad;
                return ca.midpoint.x >= lo.x && ca.midpoint.x <= hi.x &&
                       ca.midpoint.y >= lo.y && ca.midpoint.y <= hi.y &&
                       ca.midpoint.z >= lo.z && ca.midpoint.z <= hi.z;
            } catch (const ParallelRays&) {
                return false;
            }
        };
        const auto occlusion_pass = [&](std::size_t view_pt, std::size_t view_other) {
            const auto& pts = points[view_pt];
            const auto lines = detail_match::line_like(cands_by_view[view_other]);
            const auto& adm = view_pt == 0 ? adm_a : adm_b;
            for (std::size_t i = 0; i < pts.size(); ++i) {
                if (adm[i] > 0) continue;
                double best = kInadmissible;
                const FeatureCandidate* best_cand = nullptr;
                const auto consider = [&](const FeatureCandidate* cand) {
                    const double res =
                        view_pt == 0 ? residual(0, 1, pts[i]->position, cand->position)
                                     : residual(0, 1, cand->position, pts[i]->position);
                    if (res <= tol_px && res < best &&
                        occluded_ok(view_pt, pts[i]->position, cand->position)) {
                        best = res;
                        best_cand = cand;
                    }
                };
                for (const auto* lc : lines) consider(lc);
                if (!best_cand)  // merged point blobs: reuse a point candidate
                    for (const auto* pc : points[view_other]) consider(pc);
                if (!best_cand) continue;
                Match m;
                MatchEntry pe{*pts[i], false};
                MatchEntry le{*best_cand, true};
                m.entries = view_pt == 0 ? std::vector<MatchEntry>{pe, le}
                                         : std::vector<MatchEntry>{le, pe};
                m.epipolar_residual = best;
                matches.push_back(std::move(m));
            }
        };
        occlusion_pass(0, 1);
        occlusion_pass(1, 0);
    } else {
        // trinocular: admissible triples only
        struct Triple {
            double res;
            std::size_t i, j, k;
        };
        std::vector<Triple> triples;
        std::vector<int> in_triples_0(points[0].size(), 0), in_triples_1(points[1].size(), 0),
            in_triples_2(points[2].size(), 0);
        for (std::size_t i = 0; i < points[0].size(); ++i)
            for (std::size_t j = 0; j < points[1].size(); ++j) {
                const double r01 = residual(0, 1, points[0][i]->position, points[1][j]->position);
                if (r01 > tol_px) continue;
                for (std::size_t k = 0; k < points[2].size(); ++k) {
                    const double r02 =
                        residual(0, 2, points[0][i]->position, points[2][k]->position);
                    if (r02 > tol_px) continue;
                    const double r12 =
                        residual(1, 2, points[1][j]->position, points[2][k]->position);
                    if (r12 > tol_px) continue;
                    triples.push_back({(r01 + r02 + r12) / 3.0, i, j, k});
                    ++in_triples_0[i];
                    ++in_triples_1[j];
                    ++in_triples_2[k];
                }
            }
        std::sort(triples.begin(), triples.end(), [](const Triple& x, const Triple& y) {
            return std::tie(x.res, x.i, x.j, x.k) < std::tie(y.res, y.i, y.j, y.k);
        });
        std::vector<bool> used0(points[0].size(), false), used1(points[1].size(), false),
            used2(points[2].size(), false);
        for (const Triple& t : triples) {
            if (used0[t.i] || used1[t.j] || used2[t.k]) continue;
            used0[t.i] = used1[t.j] = used2[t.k] = true;
            Match m;
            m.entries = {{*points[0][t.i], false},
                         {*points[1][t.j], false},
                         {*points[2][t.k], false}};
            m.epipolar_residual = t.res;
            m.ambiguity_flag =
                in_triples_0[t.i] > 1 || in_triples_1[t.j] > 1 || in_triples_2[t.k] > 1;
            matches.push_back(std::move(m));
        }
        // occlusion fallback: an unused pair agreeing in two views may borrow
        // a line sample in the third
        const std::size_t va = 0, vb = 1, vc = 2;
        for (std::size_t i = 0; i < points[va].size(); ++i) {
            if (used0[i]) continue;
            for (std::size_t j = 0; j < points[vb].size(); ++j) {
                if (used1[j]) continue;
                const double rab =
                    residual(va, vb, points[va][i]->position, points[vb][j]->position);
                if (rab > tol_px) continue;
                const auto lines = detail_match::line_like(cands_by_view[vc]);
                double best = kInadmissible;
                const FeatureCandidate* best_cand = nullptr;
                for (const auto* lc : lines) {
                    const double rac =
                        residual(va, vc, points[va][i]->position, lc->position);
                    const double rbc =
                        residual(vb, vc, points[vb][j]->position, lc->position);
                    if (rac <= tol_px && rbc <= tol_px && rac + rbc < best) {
                        best = rac + rbc;
                        best_cand = lc;
                    }
                }
                if (!best_cand) continue;
                used0[i] = used1[j] = true;
                Match m;
                m.entries = {{*points[va][i], false},
                             {*points[vb][j], false},
                             {*best_cand, true}};
                m.epipolar_residual = (rab + 0.5 * best) / 2.0;
                matches.push_back(std::move(m));
                break;
            }
        }
    }

    std::sort(matches.begin(), matches.end(), [](const Match& a, const Match& b) {
        if (a.epipolar_residual != b.epipolar_residual)
            return a.epipolar_residual < b.epipolar_residual;
        return a.entries[0].candidate.position.u < b.entries[0].candidate.position.u;
    });
    return matches;
}

// ---------------------------------------------------------------------------
// line matching

struct LineSampleMatch {
    Match match;
    double s_param = 0.0;    // axial position in the first view's component
    bool degenerate = false; // epipolar curve ran along the line
};

struct LineMatch {
    Match endpoint_a;
    Match endpoint_b;
    std::vector<LineSampleMatch> samples;
    std::vector<int> component_ids;  // per view, -1 where unmatched
};

struct LineMatchResult {
    std::vector<LineMatch> matches;
    // signals occlusion or a broken component; the result is partial
    bool endpoint_count_mismatch = false;
};

namespace detail_match {

struct LineComp {
    int component_id = -1;
    int view_id = 0;
    std::array<FeatureCandidate, 2> endpoints;
    std::vector<FeatureCandidate> samples;  // ordered along the axis
    std::vector<Vec2> skeleton;             // endpoint a, samples..., endpoint b
};

inline std::vector<LineComp> group_lines(const std::vector<FeatureCandidate>& cands) {
    std::vector<LineComp> comps;
    const auto find = [&](int id) -> LineComp* {
        for (auto& c : comps)
            if (c.component_id == id) return &c;
        return nullptr;
    };
    std::vector<std::vector<const FeatureCandidate*>> grouped;
    for (const auto& c : cands) {
        if (c.kind == FeatureCandidate::Kind::point) continue;
        LineComp* lc = find(c.component_id);
        if (!lc) {
            comps.push_back({});
            comps.back().component_id = c.component_id;
            comps.back().view_id = c.view_id;
            lc = &comps.back();
        }
        if (c.kind == FeatureCandidate::Kind::line_endpoint) {
            if (lc->skeleton.empty() && lc->endpoints[0].component_id == -1)
                lc->endpoints[0] = c;
            else
                lc->endpoints[1] = c;
        } else {
            lc->samples.push_back(c);
        }
    }
    // drop broken groups, build ordered skeletons
    std::vector<LineComp> out;
    for (auto& c : comps) {
        if (c.endpoints[0].component_id == -1 || c.endpoints[1].component_id == -1) continue;
        const Vec2 axis = (c.endpoints[1].position - c.endpoints[0].position);
        const double len = axis.norm();
        if (len <= 0) continue;
        const Vec2 dir = axis * (1.0 / len);
        std::sort(c.samples.begin(), c.samples.end(),
                  [&](const FeatureCandidate& x, const FeatureCandidate& y) {
                      return (x.position - c.endpoints[0].position).dot(dir) <
                             (y.position - c.endpoints[0].position).dot(dir);
                  });
        c.skeleton.push_back(c.endpoints[0].position);
        for (const auto& s : c.samples) c.skeleton.push_back(s.position);
        c.skeleton.push_back(c.endpoints[1].position);
        out.push_back(std::move(c));
    }
    return out;
}

inline std::optional<Vec2> segment_intersection(const Vec2& a0, const Vec2& a1, const Vec2& b0,
                                                const Vec2& b1) {
    const double dax = a1.u - a0.u, day = a1.v - a0.v;
    const double dbx = b1.u - b0.u, dby = b1.v - b0.v;
    const double den = dax * dby - day * dbx;
    if (std::abs(den) < 1e-12) return std::nullopt;
    const double s = ((b0.u - a0.u) * dby - (b0.v - a0.v) * dbx) / den;
    const double t = ((b0.u - a0.u) * day - (b0.v - a0.v) * dax) / den;
    if (s < -1e-9 || s > 1.0 + 1e-9 || t < -1e-9 || t > 1.0 + 1e-9) return std::nullopt;
    return Vec2{a0.u + s * dax, a0.v + s * day};
}

}  // namespace detail_match

// Line correspondence: endpoints of one component must map to endpoints of
// a single component in the other view (the lower-residual of the two
// endpoint orientations wins); interior samples follow by intersecting
// each sample's epipolar curve with the matched component's skeleton.
// Samples whose curve runs along the line are flagged degenerate.
inline LineMatchResult match_lines(const std::vector<std::vector<FeatureCandidate>>& cands_by_view,
                                   const StereoRig& rig, double tol_px,
                                   const MatcherParams& params = {}) {
    if (cands_by_view.size() < 2) throw NoViews("need candidate lists for at least two views");
    if (!(tol_px > 0.0)) throw ToleranceNonPositive("tolerance must be positive");
    if (cands_by_view.size() != rig.views.size())
        throw GeometryMismatch("candidate lists do not match rig views");
    params.validate();
    using detail_match::kInadmissible;
    using detail_match::LineComp;

    std::vector<std::vector<LineComp>> lines;
    lines.reserve(cands_by_view.size());
    for (const auto& cands : cands_by_view)
        lines.push_back(detail_match::group_lines(cands));

    LineMatchResult result;
    for (std::size_t v = 1; v < lines.size(); ++v)
        if (lines[v].size() != lines[0].size()) result.endpoint_count_mismatch = true;

    const auto residual = [&](std::size_t va, std::size_t vb, const Vec2& a, const Vec2& b) {
        return detail_match::symmetric_residual(rig.views[va], rig.views[vb], a, b,
                                                rig.world_grid, params);
    };

    // admissible component pairs between views 0 and 1; endpoints carry
    // extra along-line extraction noise, so they are admitted at a slack
    // multiple of the point tolerance
    const double ep_tol = tol_px * params.endpoint_slack;
    struct CompPair {
        double total;
        std::size_t i, j;
        bool swapped;  // endpoint orientation
        double res_a, res_b;
    };
    std::vector<CompPair> comp_pairs;
    for (std::size_t i = 0; i < lines[0].size(); ++i)
        for (std::size_t j = 0; j < lines[1].size(); ++j) {
            const auto& A = lines[0][i];
            const auto& B = lines[1][j];
            const double r00 = residual(0, 1, A.endpoints[0].position, B.endpoints[0].position);
            const double r11 = residual(0, 1, A.endpoints[1].position, B.endpoints[1].position);
            const double r01 = residual(0, 1, A.endpoints[0].position, B.endpoints[1].position);
            const double r10 = residual(0, 1, A.endpoints[1].position, B.endpoints[0].position);
            const double straight = std::max(r00, r11);
            const double swapped = std::max(r01, r10);
            if (std::min(straight, swapped) > ep_tol) continue;
            if (straight <= swapped)
                comp_pairs.push_back({r00 + r11, i, j, false, r00, r11});
            else
                comp_pairs.push_back({r01 + r10, i, j, true, r01, r10});
        }
    std::sort(comp_pairs.begin(), comp_pairs.end(), [](const CompPair& x, const CompPair& y) {
        return std::tie(x.total, x.i, x.j) < std::tie(y.total, y.i, y.j);
    });

    std::vector<bool> used0(lines[0].size(), false), used1(lines[1].size(), false);
    for (const CompPair& cp : comp_pairs) {
        if (used0[cp.i] || used1[cp.j]) continue;
        used0[cp.i] = used1[cp.j] = true;
        const LineComp& A = lines[0][cp.i];
        const LineComp& B = lines[1][cp.j];
        const FeatureCandidate& b_for_a0 = cp.swapped ? B.endpoints[1] : B.endpoints[0];
        const FeatureCandidate& b_for_a1 = cp.swapped ? B.endpoints[0] : B.endpoints[1];

        LineMatch lm;
        lm.component_ids.assign(rig.views.size(), -1);
        lm.component_ids[0] = A.component_id;
        lm.component_ids[1] = B.component_id;
        lm.endpoint_a.entries = {{A.endpoints[0], false}, {b_for_a0, false}};
        lm.endpoint_a.epipolar_residual = cp.res_a;
        lm.endpoint_b.entries = {{A.endpoints[1], false}, {b_for_a1, false}};
        lm.endpoint_b.epipolar_residual = cp.res_b;

        // interior samples: epipolar curve of each A sample vs B's skeleton
        const Vec2 a_dir = (A.endpoints[1].position - A.endpoints[0].position).norm() > 0
                               ? (A.endpoints[1].position - A.endpoints[0].position) *
                                     (1.0 / (A.endpoints[1].position - A.endpoints[0].position).norm())
                               : Vec2{1, 0};
        for (const FeatureCandidate& s : A.samples) {
            LineSampleMatch sm;
            sm.s_param = (s.position - A.endpoints[0].position).dot(a_dir);
            const Ray ray = pixel_ray(rig.views[0], s.position.u, s.position.v);
            const auto range = ray_grid_range(ray, rig.world_grid, params.grid_inflate);
            std::optional<Vec2> hit;
            double hit_angle_sin = 1.0;
            if (range && range->near > 0.0) {
                try {
                    const auto curve = epipolar_curve(rig.views[0], rig.views[1], s.position.u,
                                                      s.position.v, *range, params.curve_samples);
                    for (std::size_t ci = 0; ci + 1 < curve.size() && !hit; ++ci)
                        for (std::size_t ki = 0; ki + 1 < B.skeleton.size(); ++ki) {
                            const auto x = detail_match::segment_intersection(
                                curve[ci], curve[ci + 1], B.skeleton[ki], B.skeleton[ki + 1]);
                            if (!x) continue;
                            const Vec2 cd = curve[ci + 1] - curve[ci];
                            const Vec2 ld = B.skeleton[ki + 1] - B.skeleton[ki];
                            const double cn = cd.norm(), ln = ld.norm();
                            if (cn > 0 && ln > 0)
                                hit_angle_sin = std::abs(cd.u * ld.v - cd.v * ld.u) / (cn * ln);
                            hit = x;
                            break;
                        }
                } catch (const EmptyCurve&) {
                }
            }
            if (!hit) {
                sm.degenerate = true;
                sm.match.entries = {{s, false}, {s, true}};  // placeholder partner
                sm.match.epipolar_residual = kInadmissible;
            } else {
                sm.degenerate = hit_angle_sin < params.degenerate_sin;
                FeatureCandidate partner;
                partner.view_id = B.view_id;
                partner.kind = FeatureCandidate::Kind::line_sample;
                partner.position = *hit;
                partner.component_id = B.component_id;
                partner.line_axis = B.endpoints[0].line_axis;
                sm.match.entries = {{s, false}, {partner, false}};
                sm.match.epipolar_residual =
                    residual(0, 1, s.position, partner.position);
            }
            lm.samples.push_back(std::move(sm));
        }

        // trinocular: attach a consistent third-view component to the endpoints
        if (rig.views.size() == 3 && !lines[2].empty()) {
            double best = kInadmissible;
            std::size_t best_k = 0;
            bool best_swap = false;
            for (std::size_t k = 0; k < lines[2].size(); ++k) {
                const auto& C = lines[2][k];
                for (bool swap : {false, true}) {
                    const Vec2& c0 = swap ? C.endpoints[1].position : C.endpoints[0].position;
                    const Vec2& c1 = swap ? C.endpoints[0].position : C.endpoints[1].position;
                    const double ra = residual(0, 2, A.endpoints[0].position, c0);
                    const double rb = residual(0, 2, A.endpoints[1].position, c1);
                    if (ra <= ep_tol && rb <= ep_tol && ra + rb < best) {
                        best = ra + rb;
                        best_k = k;
                        best_swap = swap;
                    }
                }
            }
            if (best < kInadmissible) {
                const auto& C = lines[2][best_k];
                lm.component_ids[2] = C.component_id;
                lm.endpoint_a.entries.push_back(
                    {best_swap ? C.endpoints[1] : C.endpoints[0], false});
                lm.endpoint_b.entries.push_back(
                    {best_swap ? C.endpoints[0] : C.endpoints[1], false});
            } else {
                result.endpoint_count_mismatch = true;
            }
        }
        result.matches.push_back(std::move(lm));
    }

    for (std::size_t i = 0; i < used0.size(); ++i)
        if (!used0[i]) result.endpoint_count_mismatch = true;
    for (std::size_t j = 0; j < used1.size(); ++j)
        if (!used1[j]) result.endpoint_count_mismatch = true;
    return result;
}

}  // namespace sxt
