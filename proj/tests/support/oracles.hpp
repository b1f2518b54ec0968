#pragma once

// Brute-force reference integrals, independent of the elliptic-integral
// kernels under test.

#include <array>
#include <cmath>
#include <numbers>

#include "kmor/model.hpp"

namespace kmor::testing {

inline constexpr double kMu0Oracle = 4.0e-7 * std::numbers::pi;

using Vec3 = std::array<double, 3>;

/// Point on a loop whose axis is parallel to z and displaced by `offset` along x.
inline Vec3 loop_point(const FilamentLoop& lp, double th) {
    return {lp.offset + lp.radius * std::cos(th), lp.radius * std::sin(th), lp.z};
}

inline Vec3 loop_tangent(const FilamentLoop& lp, double th) {
    return {-lp.radius * std::sin(th), lp.radius * std::cos(th), 0.0};
}

/// Neumann double line integral mu0/(4 pi) oint oint dl1 . dl2 / |r1 - r2|
/// with the periodic trapezoid rule on n x n nodes.
inline double neumann_mutual(const FilamentLoop& a, const FilamentLoop& b, int n = 512) {
    const double h = 2.0 * std::numbers::pi / n;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double t1 = h * i;
        const Vec3 p1 = loop_point(a, t1);
        const Vec3 d1 = loop_tangent(a, t1);
        for (int j = 0; j < n; ++j) {
            const double t2 = h * (j + 0.5);
            const Vec3 p2 = loop_point(b, t2);
            const Vec3 d2 = loop_tangent(b, t2);
            const double dx = p1[0] - p2[0];
            const double dy = p1[1] - p2[1];
            const double dz = p1[2] - p2[2];
            sum += (d1[0] * d2[0] + d1[1] * d2[1]) / std::sqrt(dx * dx + dy * dy + dz * dz);
        }
    }
    return kMu0Oracle / (4.0 * std::numbers::pi) * sum * h * h;
}

/// Biot-Savart field of a unit current in a coaxial loop at (r, 0, z);
/// returns {B_r, B_z}.
inline std::array<double, 2> biot_savart_field(const FilamentLoop& lp, double r, double z, int n = 4096) {
    const double h = 2.0 * std::numbers::pi / n;
    double bx = 0.0;
    double bz = 0.0;
    for (int i = 0; i < n; ++i) {
        const double th = h * i;
        const Vec3 p = loop_point(lp, th);
        const Vec3 dl = loop_tangent(lp, th);
        const double rx = r - p[0];
        const double ry = -p[1];
        const double rz = z - p[2];
        const double d3 = std::pow(rx * rx + ry * ry + rz * rz, 1.5);
        // dl x rvec
        bx += (dl[1] * rz - dl[2] * ry) / d3;
        bz += (dl[0] * ry - dl[1] * rx) / d3;
    }
    const double c = kMu0Oracle / (4.0 * std::numbers::pi) * h;
    return {c * bx, c * bz};
}

}  // namespace kmor::testing
