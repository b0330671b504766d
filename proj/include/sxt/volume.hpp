#pragma once

#include <cstdint>
#include <vector>

#include "error.hpp"
#include "vec.hpp"

namespace sxt {

// Extent descriptor of a regular voxel grid. `origin` is the minimum
// corner of the grid box; voxel (i,j,k) is centered at
// origin + (i+0.5, j+0.5, k+0.5) * voxel_size.
struct GridSpec {
    Vec3 origin;
    double voxel_size = 1.0;  // mm, isotropic
    int nx = 0, ny = 0, nz = 0;

    std::int64_t voxel_count() const {
        return static_cast<std::int64_t>(nx) * ny * nz;
    }
    Vec3 extent() const { return {nx * voxel_size, ny * voxel_size, nz * voxel_size}; }
    Vec3 center() const { return origin + extent() * 0.5; }
    Vec3 max_corner() const { return origin + extent(); }

    Vec3 voxel_center(int i, int j, int k) const {
        return {origin.x + (i + 0.5) * voxel_size,
                origin.y + (j + 0.5) * voxel_size,
                origin.z + (k + 0.5) * voxel_size};
    }

    bool contains(const Vec3& p) const {
        const Vec3 hi = max_corner();
        return p.x >= origin.x && p.x <= hi.x && p.y >= origin.y && p.y <= hi.y &&
               p.z >= origin.z && p.z <= hi.z;
    }

    // Grid centered on the world origin, cubic voxels.
    static GridSpec centered(int n, double voxel_size) {
        GridSpec g;
        g.nx = g.ny = g.nz = n;
        g.voxel_size = voxel_size;
        const double half = 0.5 * n * voxel_size;
        g.origin = {-half, -half, -half};
        return g;
    }

    void validate() const {
        if (nx <= 0 || ny <= 0 || nz <= 0) throw InvalidArgument("grid dims must be positive");
        if (voxel_size <= 0.0) throw InvalidArgument("voxel size must be positive");
    }
};

// Dense scalar attenuation grid, x-fastest storage.
struct Volume3D {
    GridSpec grid;
    std::vector<float> data;

    static Volume3D zeros(const GridSpec& g) {
        g.validate();
        Volume3D v;
        v.grid = g;
        v.data.assign(static_cast<std::size_t>(g.voxel_count()), 0.0f);
        return v;
    }

    std::size_t index(int i, int j, int k) const {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(grid.nx) *
                   (static_cast<std::size_t>(j) + static_cast<std::size_t>(grid.ny) * k);
    }

    float& at(int i, int j, int k) { return data[index(i, j, k)]; }
    float at(int i, int j, int k) const { return data[index(i, j, k)]; }
};

}  // namespace sxt
