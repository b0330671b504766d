#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "error.hpp"
#include "geometry.hpp"

namespace sxt {

// Dense 2D scalar image, row-major with u fastest: data[v * n_u + u].
struct ImageF {
    int n_u = 0, n_v = 0;
    std::vector<float> data;

    static ImageF zeros(int nu, int nv) {
        ImageF im;
        im.n_u = nu;
        im.n_v = nv;
        im.data.assign(static_cast<std::size_t>(nu) * nv, 0.0f);
        return im;
    }

    std::size_t index(int u, int v) const {
        return static_cast<std::size_t>(v) * n_u + static_cast<std::size_t>(u);
    }
    float& at(int u, int v) { return data[index(u, v)]; }
    float at(int u, int v) const { return data[index(u, v)]; }
    std::size_t size() const { return data.size(); }

    // Bilinear sample at continuous pixel coordinate (pixel centers at
    // half-integer offsets); zero outside the data.
    double bilinear(double u, double v) const {
        const double x = u - 0.5, y = v - 0.5;
        const int x0 = static_cast<int>(std::floor(x));
        const int y0 = static_cast<int>(std::floor(y));
        const double fx = x - x0, fy = y - y0;
        double out = 0.0;
        for (int dy = 0; dy <= 1; ++dy)
            for (int dx = 0; dx <= 1; ++dx) {
                const int xi = x0 + dx, yi = y0 + dy;
                if (xi < 0 || xi >= n_u || yi < 0 || yi >= n_v) continue;
                const double w = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy);
                out += w * at(xi, yi);
            }
        return out;
    }
};

// Line-integral attenuation image tied to the view that produced it.
struct ProjectionImage {
    ViewGeometry view;
    ImageF img;

    int n_u() const { return img.n_u; }
    int n_v() const { return img.n_v; }

    void validate() const {
        if (img.n_u != view.n_u || img.n_v != view.n_v)
            throw GeometryMismatch("projection dims do not match view");
    }
};

// Binary per-pixel feature mask with an optional score map in [0,1].
// Invariant: when the score is present, bits == (score >= threshold).
struct FeatureMask {
    int n_u = 0, n_v = 0;
    std::vector<std::uint8_t> bits;
    std::vector<float> score;  // empty when absent
    double threshold = 0.5;

    static FeatureMask zeros(int nu, int nv) {
        FeatureMask m;
        m.n_u = nu;
        m.n_v = nv;
        m.bits.assign(static_cast<std::size_t>(nu) * nv, 0);
        return m;
    }

    bool has_score() const { return !score.empty(); }
    std::size_t index(int u, int v) const {
        return static_cast<std::size_t>(v) * n_u + static_cast<std::size_t>(u);
    }
    bool bit(int u, int v) const { return bits[index(u, v)] != 0; }
    std::size_t count() const {
        return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
    }

    // 0/1 float image view of the bits, e.g. for backprojection
    ImageF as_image() const {
        ImageF im = ImageF::zeros(n_u, n_v);
        for (std::size_t i = 0; i < bits.size(); ++i) im.data[i] = bits[i] ? 1.0f : 0.0f;
        return im;
    }
};

}  // namespace sxt
