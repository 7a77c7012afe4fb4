// Copyright Contributors to the lidargs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lidargs/common.hpp"

#include <array>
#include <numbers>

namespace lidargs {

/// Eigen-decomposition of a symmetric 3x3 matrix. `values` ascend; column i
/// of `vectors` is the unit eigenvector for values[i].
struct SymEigen3 {
    Vec3 values = Vec3::Zero();
    Mat3 vectors = Mat3::Identity();
};

namespace detail {

inline double sym_scale(const Mat3& a) { return a.cwiseAbs().maxCoeff(); }

inline void sort_ascending(SymEigen3& e) {
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int l, int r) { return e.values[l] < e.values[r]; });
    SymEigen3 out;
    for (int i = 0; i < 3; ++i) {
        out.values[i] = e.values[order[i]];
        out.vectors.col(i) = e.vectors.col(order[i]);
    }
    e = out;
}

}  // namespace detail

/// Cyclic Jacobi sweeps. Slow but unconditionally stable, including for
/// repeated eigenvalues.
inline SymEigen3 jacobi_eigen(const Mat3& input) {
    Mat3 a = input;
    Mat3 v = Mat3::Identity();
    const double scale = detail::sym_scale(input);
    for (int sweep = 0; sweep < 64; ++sweep) {
        const double off = std::abs(a(0, 1)) + std::abs(a(0, 2)) + std::abs(a(1, 2));
        if (off <= scale * 1e-18) break;
        for (int p = 0; p < 2; ++p) {
            for (int q = p + 1; q < 3; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < 3; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < 3; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < 3; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    SymEigen3 e;
    e.values = a.diagonal();
    e.vectors = v;
    detail::sort_ascending(e);
    return e;
}

/// Ascending eigenvalues via the trigonometric solution of the characteristic
/// cubic. Falls back to Jacobi when two roots nearly coincide, where acos is
/// ill-conditioned.
inline Vec3 sym_eigenvalues(const Mat3& a) {
    const double p1 = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
    if (p1 == 0.0) {
        Vec3 d = a.diagonal();
        std::sort(d.data(), d.data() + 3);
        return d;
    }
    const double q = a.trace() / 3.0;
    const double d0 = a(0, 0) - q;
    const double d1 = a(1, 1) - q;
    const double d2 = a(2, 2) - q;
    const double p2 = d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * p1;
    const double p = std::sqrt(p2 / 6.0);
    if (!(p > 0.0)) return Vec3::Constant(q);
    Mat3 b = (a - q * Mat3::Identity()) / p;
    const double r = b.determinant() / 2.0;
    if (std::abs(r) > 1.0 - 1e-9) return jacobi_eigen(a).values;
    const double phi = std::acos(r) / 3.0;
    const double hi = q + 2.0 * p * std::cos(phi);
    const double lo = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
    const double mid = 3.0 * q - hi - lo;
    Vec3 out(lo, mid, hi);
    std::sort(out.data(), out.data() + 3);
    return out;
}

/// Unit eigenvector for the smallest eigenvalue. Uses the cross product of
/// two rows of (A - lambda_min I); when the smallest eigenvalue is repeated
/// those rows are rank-deficient and the Jacobi result is used instead.
inline Vec3 smallest_eigenvector(const Mat3& a, const Vec3& values) {
    const Mat3 m = a - values[0] * Mat3::Identity();
    const Vec3 r0 = m.row(0).transpose();
    const Vec3 r1 = m.row(1).transpose();
    const Vec3 r2 = m.row(2).transpose();
    const std::array<Vec3, 3> cands{r0.cross(r1), r0.cross(r2), r1.cross(r2)};
    int best = 0;
    double best_norm = cands[0].squaredNorm();
    for (int i = 1; i < 3; ++i) {
        const double n = cands[i].squaredNorm();
        if (n > best_norm) {
            best = i;
            best_norm = n;
        }
    }
    const double scale = detail::sym_scale(a);
    const double gap = values[1] - values[0];
    if (best_norm > 0.0 && gap > 1e-7 * scale && best_norm > 1e-20 * scale * scale * scale * scale) {
        return cands[best] / std::sqrt(best_norm);
    }
    return jacobi_eigen(a).vectors.col(0);
}

}  // namespace lidargs
