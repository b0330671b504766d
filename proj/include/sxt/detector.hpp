#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "detail/labels.hpp"
#include "detail/parallel.hpp"
#include "error.hpp"
#include "image.hpp"

namespace sxt {

// Decision variables of the deterministic feature detector: multi-scale
// blob and oriented ridge filters with morphological suppression of
// silhouette-edge responses, a robust score normalization, and
// threshold + component-area binarization.
//
// Line integrals of smooth convex bodies vary by several units per pixel,
// so any scheme comparing values against a local background estimate loses
// small features to the slope. Second-derivative filters ignore slopes
// entirely; what they cannot ignore are object silhouettes (steps), whose
// filter lobes are suppressed here by the local gradient excess: gradient
// magnitude minus its erosion over background_window. The excess vanishes
// at blob and ridge centers (gradient zero-crossings) and is large on
// step-edge lobes.
struct DetectorParams {
    int background_window = 9;                   // px, gradient-excess erosion disc
    std::vector<double> dot_sigmas{1.0, 1.4, 2.0};
    std::vector<double> line_widths{2.0, 3.0, 4.0};  // px, ridge scale = width/2
    int n_orientations = 16;
    double edge_suppression = 0.7;   // weight of the directional-gradient penalty
    double scale_rejection = 0.6;    // weight against responses that grow with scale
    double threshold = 0.35;
    int min_component_area = 3;      // px^2
    int max_component_area = 300;    // px^2
    double score_scale = 0.0;        // 0 = auto: 99.9th percentile of the response

    void validate() const {
        if (background_window < 3 || background_window % 2 == 0)
            throw InvalidArgument("background window must be odd and >= 3");
        if (dot_sigmas.empty() && line_widths.empty())
            throw InvalidArgument("need at least one filter scale");
        for (double s : dot_sigmas)
            if (s <= 0.0) throw InvalidArgument("dot sigmas must be positive");
        for (double w : line_widths)
            if (w <= 0.0) throw InvalidArgument("line widths must be positive");
        if (n_orientations < 1) throw InvalidArgument("need at least one orientation");
        if (edge_suppression < 0.0) throw InvalidArgument("edge suppression must be >= 0");
        if (scale_rejection < 0.0) throw InvalidArgument("scale rejection must be >= 0");
        if (!(threshold > 0.0 && threshold < 1.0))
            throw InvalidArgument("threshold must lie in (0,1)");
        if (min_component_area < 1 || max_component_area < min_component_area)
            throw InvalidArgument("bad component area bounds");
        if (score_scale < 0.0) throw InvalidArgument("score scale must be non-negative");
    }
};

namespace detail_det {

// Erosion with a disc structuring element. A disc keeps the minimum
// survivable band width orientation-independent; with a square, diagonal
// bands need sqrt(2) more width than axis-aligned ones.
inline ImageF erode_disc(const ImageF& im, int radius) {
    std::vector<std::pair<int, int>> offsets;
    for (int dv = -radius; dv <= radius; ++dv)
        for (int du = -radius; du <= radius; ++du)
            if (du * du + dv * dv <= radius * radius) offsets.emplace_back(du, dv);
    ImageF out = ImageF::zeros(im.n_u, im.n_v);
    for (int v = 0; v < im.n_v; ++v)
        for (int u = 0; u < im.n_u; ++u) {
            float m = im.at(u, v);
            for (const auto& [du, dv] : offsets) {
                const int uu = u + du, vv = v + dv;
                if (uu < 0 || uu >= im.n_u || vv < 0 || vv >= im.n_v) continue;
                m = std::min(m, im.at(uu, vv));
            }
            out.at(u, v) = m;
        }
    return out;
}

// separable Gaussian, reflected borders
inline ImageF gauss(const ImageF& im, double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.5 * sigma)));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int k = -radius; k <= radius; ++k) {
        const double w = std::exp(-0.5 * (k / sigma) * (k / sigma));
        kernel[static_cast<std::size_t>(k + radius)] = w;
        sum += w;
    }
    for (double& w : kernel) w /= sum;

    const auto reflect = [](int i, int n) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -i - 1;
            if (i >= n) i = 2 * n - 1 - i;
        }
        return i;
    };

    ImageF tmp = ImageF::zeros(im.n_u, im.n_v);
    for (int v = 0; v < im.n_v; ++v)
        for (int u = 0; u < im.n_u; ++u) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k)
                acc += kernel[static_cast<std::size_t>(k + radius)] *
                       im.at(reflect(u + k, im.n_u), v);
            tmp.at(u, v) = static_cast<float>(acc);
        }
    ImageF out = ImageF::zeros(im.n_u, im.n_v);
    for (int v = 0; v < im.n_v; ++v)
        for (int u = 0; u < im.n_u; ++u) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k)
                acc += kernel[static_cast<std::size_t>(k + radius)] *
                       tmp.at(u, reflect(v + k, im.n_v));
            out.at(u, v) = static_cast<float>(acc);
        }
    return out;
}

struct Hessian {
    ImageF xx, xy, yy;
};

inline Hessian hessian(const ImageF& s) {
    const auto clamp = [](int i, int n) { return std::min(n - 1, std::max(0, i)); };
    Hessian h{ImageF::zeros(s.n_u, s.n_v), ImageF::zeros(s.n_u, s.n_v),
              ImageF::zeros(s.n_u, s.n_v)};
    for (int v = 0; v < s.n_v; ++v)
        for (int u = 0; u < s.n_u; ++u) {
            const int um = clamp(u - 1, s.n_u), up = clamp(u + 1, s.n_u);
            const int vm = clamp(v - 1, s.n_v), vp = clamp(v + 1, s.n_v);
            h.xx.at(u, v) = s.at(up, v) - 2 * s.at(u, v) + s.at(um, v);
            h.yy.at(u, v) = s.at(u, vp) - 2 * s.at(u, v) + s.at(u, vm);
            h.xy.at(u, v) =
                0.25f * (s.at(up, vp) - s.at(up, vm) - s.at(um, vp) + s.at(um, vm));
        }
    return h;
}

inline double percentile(std::vector<float> values, double q) {
    if (values.empty()) return 0.0;
    const auto idx = static_cast<std::size_t>(q * static_cast<double>(values.size() - 1));
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(idx),
                     values.end());
    return values[idx];
}

}  // namespace detail_det

namespace detail_det {

struct GradPair {
    ImageF gx, gy;
};

inline GradPair gradients(const ImageF& s) {
    const auto clamp = [](int i, int n) { return std::min(n - 1, std::max(0, i)); };
    GradPair g{ImageF::zeros(s.n_u, s.n_v), ImageF::zeros(s.n_u, s.n_v)};
    for (int v = 0; v < s.n_v; ++v)
        for (int u = 0; u < s.n_u; ++u) {
            g.gx.at(u, v) =
                0.5f * (s.at(clamp(u + 1, s.n_u), v) - s.at(clamp(u - 1, s.n_u), v));
            g.gy.at(u, v) =
                0.5f * (s.at(u, clamp(v + 1, s.n_v)) - s.at(u, clamp(v - 1, s.n_v)));
        }
    return g;
}

// Single-scale response with edge suppression. Blob responses pay for the
// local gradient excess (zero at any true intensity maximum), oriented
// ridge responses for the gradient component across the ridge (zero on a
// crest line); a silhouette-edge filter lobe has neither and is removed.
inline ImageF scale_response(const ImageF& image, double sigma, bool dots, bool lines,
                             const DetectorParams& params) {
    const ImageF smooth = gauss(image, sigma);
    const Hessian h = hessian(smooth);
    const GradPair g = gradients(smooth);
    const double s2 = sigma * sigma;
    const double beta = params.edge_suppression;
    const double pi = 3.14159265358979323846;

    ImageF r = ImageF::zeros(image.n_u, image.n_v);
    if (dots) {
        ImageF gm = ImageF::zeros(image.n_u, image.n_v);
        for (std::size_t i = 0; i < gm.data.size(); ++i)
            gm.data[i] = std::sqrt(g.gx.data[i] * g.gx.data[i] + g.gy.data[i] * g.gy.data[i]);
        const ImageF gmin = erode_disc(gm, params.background_window / 2);
        for (std::size_t i = 0; i < r.data.size(); ++i) {
            const double blob = -s2 * (h.xx.data[i] + h.yy.data[i]);
            const double excess = std::max(0.0f, gm.data[i] - gmin.data[i]);
            r.data[i] = static_cast<float>(std::max(0.0, blob - beta * sigma * excess));
        }
    }
    if (lines) {
        for (int o = 0; o < params.n_orientations; ++o) {
            const double theta = pi * o / params.n_orientations;
            const double c = std::cos(theta), s = std::sin(theta);
            const double cc = c * c, ss = s * s, cs2 = 2.0 * c * s;
            for (std::size_t i = 0; i < r.data.size(); ++i) {
                const double ridge =
                    -s2 * (cc * h.xx.data[i] + cs2 * h.xy.data[i] + ss * h.yy.data[i]);
                const double across = std::abs(c * g.gx.data[i] + s * g.gy.data[i]);
                const double net = ridge - beta * sigma * across;
                if (net > r.data[i]) r.data[i] = static_cast<float>(net);
            }
        }
    }
    return r;
}

}  // namespace detail_det

// Raw (un-normalized) detector response: the max over negated
// scale-normalized Laplacian-of-Gaussian responses (dots) and oriented
// second-derivative ridge responses (lines), each with silhouette-edge
// suppression, minus a penalty on responses that keep growing at twice the
// largest feature scale (wide background undulations and object creases
// grow with scale; blurred features decay past their matched scale).
inline ImageF detect_response(const ImageF& image, const DetectorParams& params) {
    params.validate();

    struct Scale {
        double sigma;
        bool dot = false, line = false;
    };
    std::vector<Scale> scales;
    const auto add_scale = [&](double sigma, bool dot) {
        for (auto& s : scales)
            if (std::abs(s.sigma - sigma) < 1e-12) {
                (dot ? s.dot : s.line) = true;
                return;
            }
        Scale s{sigma};
        (dot ? s.dot : s.line) = true;
        scales.push_back(s);
    };
    for (double sigma : params.dot_sigmas) add_scale(sigma, true);
    for (double width : params.line_widths) add_scale(std::max(0.8, 0.5 * width), false);

    double sigma_max = 0.0;
    ImageF resp = ImageF::zeros(image.n_u, image.n_v);
    for (const Scale& sc : scales) {
        sigma_max = std::max(sigma_max, sc.sigma);
        const ImageF r = detail_det::scale_response(image, sc.sigma, sc.dot, sc.line, params);
        for (std::size_t i = 0; i < resp.data.size(); ++i)
            resp.data[i] = std::max(resp.data[i], r.data[i]);
    }
    if (params.scale_rejection > 0.0) {
        const bool dots = !params.dot_sigmas.empty();
        const bool lines = !params.line_widths.empty();
        const ImageF big =
            detail_det::scale_response(image, 2.0 * sigma_max, dots, lines, params);
        for (std::size_t i = 0; i < resp.data.size(); ++i) {
            const float growth = std::max(0.0f, big.data[i] - resp.data[i]);
            resp.data[i] = std::max(
                0.0f, resp.data[i] - static_cast<float>(params.scale_rejection) * growth);
        }
    }
    return resp;
}

// Normalization + binarization stage: scales the response into [0,1] by the
// 99.9th percentile (or a fixed scale), thresholds, and zeroes the score of
// connected components outside the area bounds so that the returned mask
// satisfies bits == (score >= threshold) exactly.
inline FeatureMask finalize_response(const ImageF& response, const DetectorParams& params) {
    params.validate();
    FeatureMask mask = FeatureMask::zeros(response.n_u, response.n_v);
    mask.threshold = params.threshold;
    mask.score.assign(response.data.size(), 0.0f);

    const double scale = params.score_scale > 0.0
                             ? params.score_scale
                             : detail_det::percentile(response.data, 0.999);
    if (scale <= 1e-12) return mask;  // flat response, empty mask

    for (std::size_t i = 0; i < response.data.size(); ++i)
        mask.score[i] = static_cast<float>(
            std::clamp(response.data[i] / scale, 0.0, 1.0));

    std::vector<std::uint8_t> above(mask.score.size(), 0);
    for (std::size_t i = 0; i < mask.score.size(); ++i)
        above[i] = mask.score[i] >= params.threshold ? 1 : 0;

    const auto comps = detail::components_2d(above, mask.n_u, mask.n_v);
    for (const auto& comp : comps) {
        const auto area = static_cast<int>(comp.pixels.size());
        if (area < params.min_component_area || area > params.max_component_area)
            for (std::int64_t px : comp.pixels) mask.score[static_cast<std::size_t>(px)] = 0.0f;
    }
    for (std::size_t i = 0; i < mask.score.size(); ++i)
        mask.bits[i] = mask.score[i] >= params.threshold ? 1 : 0;
    return mask;
}

inline FeatureMask detect(const ImageF& image, const DetectorParams& params) {
    return finalize_response(detect_response(image, params), params);
}

inline FeatureMask detect(const ProjectionImage& image, const DetectorParams& params) {
    return detect(image.img, params);
}

// ---------------------------------------------------------------------------
// block tiling

struct TileRect {
    int u0 = 0, v0 = 0, size = 0;
};

// Square blocks covering every pixel: stride-spaced positions plus a final
// clamped position per axis. The default stride of 70 tiles a 1024-wide
// axis into 12 positions, i.e. 144 overlapping blocks for a 1024^2 image.
inline constexpr int kDefaultTileStride = 70;

inline std::vector<TileRect> tile_rects(int n_u, int n_v, int block, int stride = 0) {
    if (block > n_u || block > n_v)
        throw BlockLargerThanImage("tile block exceeds image dims");
    if (block < 1) throw InvalidArgument("tile block must be positive");
    if (stride <= 0) stride = kDefaultTileStride;
    const auto positions = [&](int n) {
        std::vector<int> pos;
        for (int p = 0; p + block < n; p += stride) pos.push_back(p);
        pos.push_back(n - block);
        return pos;
    };
    std::vector<TileRect> rects;
    for (int v0 : positions(n_v))
        for (int u0 : positions(n_u)) rects.push_back({u0, v0, block});
    return rects;
}

inline ImageF crop(const ImageF& im, const TileRect& r) {
    ImageF out = ImageF::zeros(r.size, r.size);
    for (int v = 0; v < r.size; ++v)
        for (int u = 0; u < r.size; ++u) out.at(u, v) = im.at(r.u0 + u, r.v0 + v);
    return out;
}

inline std::vector<ImageF> tile(const ImageF& image, int block, int stride = 0) {
    std::vector<ImageF> blocks;
    for (const TileRect& r : tile_rects(image.n_u, image.n_v, block, stride))
        blocks.push_back(crop(image, r));
    return blocks;
}

// Per-pixel maximum of overlapping score blocks over the full image frame.
inline ImageF stitch_scores(int n_u, int n_v, const std::vector<TileRect>& rects,
                            const std::vector<ImageF>& blocks) {
    if (rects.size() != blocks.size()) throw InvalidArgument("rect/block count mismatch");
    ImageF out = ImageF::zeros(n_u, n_v);
    for (std::size_t b = 0; b < rects.size(); ++b) {
        const TileRect& r = rects[b];
        for (int v = 0; v < r.size; ++v)
            for (int u = 0; u < r.size; ++u)
                out.at(r.u0 + u, r.v0 + v) =
                    std::max(out.at(r.u0 + u, r.v0 + v), blocks[b].at(u, v));
    }
    return out;
}

inline FeatureMask stitch(int n_u, int n_v, const std::vector<TileRect>& rects,
                          const std::vector<ImageF>& score_blocks,
                          const DetectorParams& params) {
    return finalize_response(stitch_scores(n_u, n_v, rects, score_blocks), params);
}

// Blockwise detection: per-block raw responses stitched by max, then one
// global normalize/threshold pass. Matches whole-image detect away from
// block borders, where the filters see identical neighborhoods.
inline FeatureMask detect_tiled(const ImageF& image, const DetectorParams& params, int block,
                                int stride = 0) {
    const auto rects = tile_rects(image.n_u, image.n_v, block, stride);
    std::vector<ImageF> responses(rects.size());
    parallel::parallel_for(0, static_cast<std::int64_t>(rects.size()), [&](std::int64_t b) {
        responses[static_cast<std::size_t>(b)] =
            detect_response(crop(image, rects[static_cast<std::size_t>(b)]), params);
    });
    return stitch(image.n_u, image.n_v, rects, responses, params);
}

// ---------------------------------------------------------------------------
// calibration

struct TrainingPair {
    ImageF image;
    FeatureMask truth;
};

// Deterministic stand-in for detector training: exhaustive search over a
// fixed parameter grid, maximizing micro-averaged pixelwise F1. Ties prefer
// the higher threshold, then the earlier grid entry, so degenerate inputs
// (e.g. empty truth) resolve to the most conservative detector.
inline DetectorParams calibrate(const std::vector<TrainingPair>& training_pairs) {
    if (training_pairs.empty()) throw EmptyTrainingSet("no training pairs");
    for (const auto& p : training_pairs)
        if (p.image.n_u != p.truth.n_u || p.image.n_v != p.truth.n_v)
            throw ShapeMismatch("training image/truth dims differ");

    const std::vector<int> windows{7, 9, 13};
    const std::vector<std::vector<double>> sigma_sets{
        {1.0}, {1.5}, {2.0}, {2.5}, {3.0}, {1.0, 1.5, 2.0, 2.5, 3.0}};
    const std::vector<double> thresholds{0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1};

    DetectorParams base;
    DetectorParams best = base;
    best.background_window = windows.front();
    best.dot_sigmas = sigma_sets.front();
    best.threshold = thresholds.front();
    double best_f1 = -1.0;

    // responses depend on (window, sigma set) only; cache them per pair
    struct ComboResponse {
        int window;
        std::size_t sigma_idx;
        std::vector<ImageF> responses;
    };
    std::vector<ComboResponse> cache;
    for (int window : windows)
        for (std::size_t si = 0; si < sigma_sets.size(); ++si) {
            DetectorParams p = base;
            p.background_window = window;
            p.dot_sigmas = sigma_sets[si];
            ComboResponse cr{window, si, {}};
            cr.responses.reserve(training_pairs.size());
            for (const auto& pair : training_pairs)
                cr.responses.push_back(detect_response(pair.image, p));
            cache.push_back(std::move(cr));
        }

    // strict improvement only: the enumeration order (threshold descending,
    // then window, then sigma set) is the lexicographic tie-break
    for (double threshold : thresholds)
        for (const ComboResponse& cr : cache) {
            DetectorParams p = base;
            p.background_window = cr.window;
            p.dot_sigmas = sigma_sets[cr.sigma_idx];
            p.threshold = threshold;
            std::uint64_t tp = 0, fp = 0, fn = 0;
            for (std::size_t i = 0; i < training_pairs.size(); ++i) {
                const FeatureMask pred = finalize_response(cr.responses[i], p);
                const auto& truth = training_pairs[i].truth.bits;
                for (std::size_t px = 0; px < pred.bits.size(); ++px) {
                    if (pred.bits[px] && truth[px]) ++tp;
                    else if (pred.bits[px] && !truth[px]) ++fp;
                    else if (!pred.bits[px] && truth[px]) ++fn;
                }
            }
            const double denom = 2.0 * tp + fp + fn;
            const double f1 = denom > 0.0 ? 2.0 * tp / denom : 0.0;
            if (f1 > best_f1) {
                best_f1 = f1;
                best = p;
            }
        }
    return best;
}

}  // namespace sxt
