#pragma once

#include <algorithm>
#include <cmath>
#include <bit>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "error.hpp"
#include "image.hpp"
#include "mapper.hpp"
#include "phantom.hpp"

namespace sxt {

struct ConfusionCounts {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

    std::uint64_t total() const { return tp + fp + fn + tn; }
    // rates with undefined denominators reported as absent, not zero
    std::optional<double> tpr() const { return rate(tp, tp + fn); }
    std::optional<double> fpr() const { return rate(fp, fp + tn); }
    std::optional<double> ppv() const { return rate(tp, tp + fp); }
    std::optional<double> for_() const { return rate(fn, fn + tn); }

  private:
    static std::optional<double> rate(std::uint64_t num, std::uint64_t den) {
        if (den == 0) return std::nullopt;
        return static_cast<double>(num) / static_cast<double>(den);
    }
};

// half-open pixel box [u0,u1) x [v0,v1)
struct RoiBox {
    int u0 = 0, v0 = 0, u1 = 0, v1 = 0;
};

inline ConfusionCounts confusion(std::span<const std::uint8_t> pred,
                                 std::span<const std::uint8_t> truth) {
    if (pred.size() != truth.size()) throw ShapeMismatch("prediction/truth size mismatch");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] && truth[i]) ++c.tp;
        else if (pred[i]) ++c.fp;
        else if (truth[i]) ++c.fn;
        else ++c.tn;
    }
    return c;
}

inline ConfusionCounts confusion(const FeatureMask& pred, const FeatureMask& truth,
                                 std::optional<RoiBox> roi = std::nullopt) {
    if (pred.n_u != truth.n_u || pred.n_v != truth.n_v)
        throw ShapeMismatch("prediction/truth dims mismatch");
    if (!roi) return confusion(std::span(pred.bits), std::span(truth.bits));
    if (roi->u0 < 0 || roi->v0 < 0 || roi->u1 > pred.n_u || roi->v1 > pred.n_v ||
        roi->u0 >= roi->u1 || roi->v0 >= roi->v1)
        throw InvalidArgument("roi outside mask bounds");
    ConfusionCounts c;
    for (int v = roi->v0; v < roi->v1; ++v)
        for (int u = roi->u0; u < roi->u1; ++u) {
            const bool p = pred.bit(u, v), t = truth.bit(u, v);
            if (p && t) ++c.tp;
            else if (p) ++c.fp;
            else if (t) ++c.fn;
            else ++c.tn;
        }
    return c;
}

// ---------------------------------------------------------------------------
// ROC

struct RocPoint {
    double threshold = 0.0;
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points;  // from (0,0) to (1,1), thresholds descending
    double auc = 0.0;
};

// ROC over all distinct score thresholds, ties grouped; AUC by trapezoid.
inline RocCurve roc(std::span<const float> score, std::span<const std::uint8_t> truth) {
    if (score.size() != truth.size()) throw ShapeMismatch("score/truth size mismatch");
    for (float s : score)
        if (!std::isfinite(s)) throw InvalidArgument("scores must be finite");
    std::uint64_t n_pos = 0, n_neg = 0;
    for (std::uint8_t t : truth) t ? ++n_pos : ++n_neg;
    if (n_pos == 0 || n_neg == 0)
        throw AllSameTruthClass("ROC undefined when truth has a single class");

    std::vector<std::size_t> order(score.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });

    RocCurve curve;
    curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    std::uint64_t tp = 0, fp = 0;
    double auc = 0.0, prev_fpr = 0.0, prev_tpr = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && score[order[j + 1]] == score[order[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) truth[order[k]] ? ++tp : ++fp;
        const double fpr = static_cast<double>(fp) / static_cast<double>(n_neg);
        const double tpr = static_cast<double>(tp) / static_cast<double>(n_pos);
        curve.points.push_back({score[order[i]], fpr, tpr});
        auc += 0.5 * (tpr + prev_tpr) * (fpr - prev_fpr);
        prev_fpr = fpr;
        prev_tpr = tpr;
        i = j + 1;
    }
    curve.auc = auc;
    return curve;
}

inline RocCurve roc(const ImageF& score, const FeatureMask& truth,
                    std::optional<RoiBox> roi = std::nullopt) {
    if (score.n_u != truth.n_u || score.n_v != truth.n_v)
        throw ShapeMismatch("score/truth dims mismatch");
    if (!roi) return roc(std::span(score.data), std::span(truth.bits));
    std::vector<float> s;
    std::vector<std::uint8_t> t;
    for (int v = roi->v0; v < roi->v1; ++v)
        for (int u = roi->u0; u < roi->u1; ++u) {
            s.push_back(score.at(u, v));
            t.push_back(truth.bit(u, v) ? 1 : 0);
        }
    return roc(std::span<const float>(s), std::span<const std::uint8_t>(t));
}

// ---------------------------------------------------------------------------
// 3D localization error

struct LocalizationReport {
    struct Pair {
        int pred_index;   // into the flattened prediction target list
        int truth_index;  // into the flattened truth target list
        double error_voxels;
    };
    std::vector<Pair> matched;
    std::vector<int> missed_truth;    // truth targets with no prediction
    std::vector<int> spurious_pred;   // predictions with no truth target
    std::optional<double> mean_error_voxels;
    std::optional<double> max_error_voxels;
};

namespace detail_eval {

// point targets of a prediction set: point positions plus polyline endpoints
inline std::vector<Vec3> prediction_targets(const std::vector<Feature3D>& preds) {
    std::vector<Vec3> out;
    for (const auto& f : preds) {
        if (f.kind == Feature3D::Kind::point) {
            out.push_back(f.positions.front());
        } else {
            out.push_back(f.positions.front());
            out.push_back(f.positions.back());
        }
    }
    return out;
}

inline std::vector<Vec3> truth_targets(const FeatureSetTruth& truth) {
    std::vector<Vec3> out;
    for (const auto& p : truth.points) out.push_back(p.center);
    for (const auto& l : truth.lines) {
        out.push_back(l.a);
        out.push_back(l.b);
    }
    return out;
}

}  // namespace detail_eval

// Optimal one-to-one assignment between predicted and true point targets
// (point centers and line endpoints), exact via bitmask DP over the truth
// set; unmatched entries are reported as misses/spurious. Errors in voxels.
inline LocalizationReport localization_error(const std::vector<Feature3D>& pred,
                                             const FeatureSetTruth& truth, double voxel_size) {
    const std::vector<Vec3> p = detail_eval::prediction_targets(pred);
    const std::vector<Vec3> t = detail_eval::truth_targets(truth);
    if (t.empty()) throw InvalidArgument("truth must contain at least one feature");
    if (t.size() > 20) throw InvalidArgument("exact assignment supports at most 20 targets");
    if (voxel_size <= 0) throw InvalidArgument("voxel size must be positive");

    LocalizationReport report;
    const std::size_t np = p.size(), nt = t.size();
    if (np == 0) {
        for (std::size_t j = 0; j < nt; ++j) report.missed_truth.push_back(static_cast<int>(j));
        return report;
    }

    std::vector<std::vector<double>> cost(np, std::vector<double>(nt));
    for (std::size_t i = 0; i < np; ++i)
        for (std::size_t j = 0; j < nt; ++j) cost[i][j] = distance(p[i], t[j]) / voxel_size;

    // dp over subsets of truth targets, predictions taken in order; skipping
    // a prediction is only allowed once enough remain to cover the smaller set
    const std::size_t k = std::min(np, nt);
    const std::uint32_t full = (1u << nt) - 1u;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> dp(np + 1, std::vector<double>(full + 1, inf));
    std::vector<std::vector<std::int8_t>> choice(np + 1,
                                                 std::vector<std::int8_t>(full + 1, -2));
    dp[0][0] = 0.0;
    for (std::size_t i = 0; i < np; ++i)
        for (std::uint32_t mask = 0; mask <= full; ++mask) {
            if (dp[i][mask] == inf) continue;
            const auto used = static_cast<std::size_t>(std::popcount(mask));
            // skip prediction i
            if (np - i - 1 + used >= k && dp[i][mask] < dp[i + 1][mask]) {
                dp[i + 1][mask] = dp[i][mask];
                choice[i + 1][mask] = -1;
            }
            if (used == k) continue;
            for (std::size_t j = 0; j < nt; ++j) {
                if (mask & (1u << j)) continue;
                const std::uint32_t next = mask | (1u << j);
                const double val = dp[i][mask] + cost[i][j];
                if (val < dp[i + 1][next]) {
                    dp[i + 1][next] = val;
                    choice[i + 1][next] = static_cast<std::int8_t>(j);
                }
            }
        }

    // best final mask with exactly k assignments
    std::uint32_t best_mask = 0;
    double best = inf;
    for (std::uint32_t mask = 0; mask <= full; ++mask) {
        if (static_cast<std::size_t>(std::popcount(mask)) != k) continue;
        if (dp[np][mask] < best) {
            best = dp[np][mask];
            best_mask = mask;
        }
    }

    // trace back
    std::vector<int> assignment(np, -1);
    std::uint32_t mask = best_mask;
    for (std::size_t i = np; i-- > 0;) {
        const std::int8_t ch = choice[i + 1][mask];
        if (ch >= 0) {
            assignment[i] = ch;
            mask &= ~(1u << static_cast<std::uint32_t>(ch));
        }
    }

    double sum = 0.0, maxe = 0.0;
    std::vector<bool> truth_used(nt, false);
    for (std::size_t i = 0; i < np; ++i) {
        if (assignment[i] < 0) {
            report.spurious_pred.push_back(static_cast<int>(i));
            continue;
        }
        const double e = cost[i][static_cast<std::size_t>(assignment[i])];
        report.matched.push_back({static_cast<int>(i), assignment[i], e});
        truth_used[static_cast<std::size_t>(assignment[i])] = true;
        sum += e;
        maxe = std::max(maxe, e);
    }
    for (std::size_t j = 0; j < nt; ++j)
        if (!truth_used[j]) report.missed_truth.push_back(static_cast<int>(j));
    if (!report.matched.empty()) {
        report.mean_error_voxels = sum / static_cast<double>(report.matched.size());
        report.max_error_voxels = maxe;
    }
    return report;
}

}  // namespace sxt
