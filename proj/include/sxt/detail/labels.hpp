#pragma once

#include <cstdint>
#include <vector>

namespace sxt::detail {

struct Component2D {
    std::vector<std::int64_t> pixels;  // linear indices, v * n_u + u
};

// 8-connected components of a binary image. Returns one pixel list per
// component; label_map (optional) receives the component index per pixel,
// -1 for background.
inline std::vector<Component2D> components_2d(const std::vector<std::uint8_t>& bits, int n_u,
                                              int n_v,
                                              std::vector<std::int32_t>* label_map = nullptr) {
    std::vector<std::int32_t> labels(bits.size(), -1);
    std::vector<Component2D> comps;
    std::vector<std::int64_t> stack;
    for (std::int64_t start = 0; start < static_cast<std::int64_t>(bits.size()); ++start) {
        if (!bits[static_cast<std::size_t>(start)] || labels[static_cast<std::size_t>(start)] >= 0)
            continue;
        const auto id = static_cast<std::int32_t>(comps.size());
        comps.emplace_back();
        stack.assign(1, start);
        labels[static_cast<std::size_t>(start)] = id;
        while (!stack.empty()) {
            const std::int64_t cur = stack.back();
            stack.pop_back();
            comps.back().pixels.push_back(cur);
            const int u = static_cast<int>(cur % n_u);
            const int v = static_cast<int>(cur / n_u);
            for (int dv = -1; dv <= 1; ++dv)
                for (int du = -1; du <= 1; ++du) {
                    if (du == 0 && dv == 0) continue;
                    const int uu = u + du, vv = v + dv;
                    if (uu < 0 || uu >= n_u || vv < 0 || vv >= n_v) continue;
                    const std::int64_t nb = static_cast<std::int64_t>(vv) * n_u + uu;
                    if (!bits[static_cast<std::size_t>(nb)] ||
                        labels[static_cast<std::size_t>(nb)] >= 0)
                        continue;
                    labels[static_cast<std::size_t>(nb)] = id;
                    stack.push_back(nb);
                }
        }
    }
    if (label_map) *label_map = std::move(labels);
    return comps;
}

struct Component3D {
    std::vector<std::int64_t> voxels;  // linear indices, x fastest
};

// 26-connected components of a binary volume.
inline std::vector<Component3D> components_3d(const std::vector<std::uint8_t>& bits, int nx,
                                              int ny, int nz) {
    std::vector<std::int32_t> labels(bits.size(), -1);
    std::vector<Component3D> comps;
    std::vector<std::int64_t> stack;
    const std::int64_t sy = nx, sz = static_cast<std::int64_t>(nx) * ny;
    for (std::int64_t start = 0; start < static_cast<std::int64_t>(bits.size()); ++start) {
        if (!bits[static_cast<std::size_t>(start)] || labels[static_cast<std::size_t>(start)] >= 0)
            continue;
        const auto id = static_cast<std::int32_t>(comps.size());
        comps.emplace_back();
        stack.assign(1, start);
        labels[static_cast<std::size_t>(start)] = id;
        while (!stack.empty()) {
            const std::int64_t cur = stack.back();
            stack.pop_back();
            comps.back().voxels.push_back(cur);
            const int x = static_cast<int>(cur % nx);
            const int y = static_cast<int>((cur / sy) % ny);
            const int z = static_cast<int>(cur / sz);
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dx == 0 && dy == 0 && dz == 0) continue;
                        const int xx = x + dx, yy = y + dy, zz = z + dz;
                        if (xx < 0 || xx >= nx || yy < 0 || yy >= ny || zz < 0 || zz >= nz)
                            continue;
                        const std::int64_t nb = xx + sy * yy + sz * zz;
                        if (!bits[static_cast<std::size_t>(nb)] ||
                            labels[static_cast<std::size_t>(nb)] >= 0)
                            continue;
                        labels[static_cast<std::size_t>(nb)] = id;
                        stack.push_back(nb);
                    }
        }
    }
    return comps;
}

}  // namespace sxt::detail
