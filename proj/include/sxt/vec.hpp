#pragma once

#include <array>
#include <cmath>

namespace sxt {

struct Vec2 {
    double u = 0.0;
    double v = 0.0;

    Vec2 operator+(const Vec2& o) const { return {u + o.u, v + o.v}; }
    Vec2 operator-(const Vec2& o) const { return {u - o.u, v - o.v}; }
    Vec2 operator*(double s) const { return {u * s, v * s}; }
    double dot(const Vec2& o) const { return u * o.u + v * o.v; }
    double norm() const { return std::sqrt(u * u + v * v); }
};

inline Vec2 operator*(double s, const Vec2& a) { return a * s; }

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm2() const { return dot(*this); }
    double norm() const { return std::sqrt(norm2()); }
    Vec3 normalized() const { return *this / norm(); }
};

inline Vec3 operator*(double s, const Vec3& a) { return a * s; }

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

// Row-major 3x3 matrix; enough linear algebra for rotations and the
// small normal-equation solves used in triangulation.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    double& operator()(int r, int c) { return m[static_cast<std::size_t>(3 * r + c)]; }
    double operator()(int r, int c) const { return m[static_cast<std::size_t>(3 * r + c)]; }

    Vec3 operator*(const Vec3& p) const {
        return {m[0] * p.x + m[1] * p.y + m[2] * p.z,
                m[3] * p.x + m[4] * p.y + m[5] * p.z,
                m[6] * p.x + m[7] * p.y + m[8] * p.z};
    }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0;
                for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
                r(i, j) = s;
            }
        return r;
    }

    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
        return r;
    }

    double det() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) -
               m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }

    static Mat3 identity() { return Mat3{}; }

    // Rotation from a unit quaternion (w, x, y, z).
    static Mat3 from_quaternion(double w, double x, double y, double z) {
        Mat3 r;
        r(0, 0) = 1 - 2 * (y * y + z * z);
        r(0, 1) = 2 * (x * y - w * z);
        r(0, 2) = 2 * (x * z + w * y);
        r(1, 0) = 2 * (x * y + w * z);
        r(1, 1) = 1 - 2 * (x * x + z * z);
        r(1, 2) = 2 * (y * z - w * x);
        r(2, 0) = 2 * (x * z - w * y);
        r(2, 1) = 2 * (y * z + w * x);
        r(2, 2) = 1 - 2 * (x * x + y * y);
        return r;
    }
};

// Solves A x = b by Cramer's rule. Caller guarantees non-singular A.
inline Vec3 solve3x3(const Mat3& a, const Vec3& b) {
    double d = a.det();
    Mat3 ax = a, ay = a, az = a;
    ax(0, 0) = b.x; ax(1, 0) = b.y; ax(2, 0) = b.z;
    ay(0, 1) = b.x; ay(1, 1) = b.y; ay(2, 1) = b.z;
    az(0, 2) = b.x; az(1, 2) = b.y; az(2, 2) = b.z;
    return {ax.det() / d, ay.det() / d, az.det() / d};
}

}  // namespace sxt
