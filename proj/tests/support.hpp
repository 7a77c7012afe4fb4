// Copyright Contributors to the lidargs Project
// SPDX-License-Identifier: Apache-2.0

// Independent reference implementations for the tests. Each one is the
// straightforward exhaustive version of what the library does faster.

#pragma once

#include "lidargs/lidargs.hpp"

#include <Eigen/Eigenvalues>

#include <filesystem>
#include <random>

namespace lidargs::oracle {

/// All other points sorted by (distance^2, id), first k.
inline std::vector<Index> brute_knn(std::span<const Vec3> pts, const Vec3& q, Index k, std::optional<Index> skip) {
    std::vector<std::pair<double, Index>> d;
    for (Index j = 0; j < pts.size(); ++j) {
        if (skip && *skip == j) continue;
        d.emplace_back(squared_distance(q, pts[j]), j);
    }
    std::sort(d.begin(), d.end());
    std::vector<Index> out;
    for (Index i = 0; i < std::min<Index>(k, d.size()); ++i) out.push_back(d[i].second);
    return out;
}

/// Covariance written as the textbook double sum over coordinate pairs.
inline Mat3 naive_covariance(std::span<const Vec3> pts, std::span<const Index> ids) {
    const double k = static_cast<double>(ids.size());
    double mean[3] = {0, 0, 0};
    for (Index id : ids)
        for (int a = 0; a < 3; ++a) mean[a] += pts[id][a];
    for (double& m : mean) m /= k;
    Mat3 c;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
            double s = 0.0;
            for (Index id : ids) s += (pts[id][a] - mean[a]) * (pts[id][b] - mean[b]);
            c(a, b) = s / (k - 1.0);
        }
    return c;
}

/// Per-channel population variance averaged over channels.
inline double naive_texture(std::span<const Vec3> colors) {
    double total = 0.0;
    const double k = static_cast<double>(colors.size());
    for (int ch = 0; ch < 3; ++ch) {
        double m = 0.0;
        for (const auto& c : colors) m += c[ch];
        m /= k;
        double v = 0.0;
        for (const auto& c : colors) v += (c[ch] - m) * (c[ch] - m);
        total += v / k;
    }
    return total / 3.0;
}

/// Curvature from Eigen's symmetric solver.
inline double eigen_curvature(const Mat3& c, double eps = 1e-12) {
    Eigen::SelfAdjointEigenSolver<Mat3> es(c, Eigen::EigenvaluesOnly);
    Vec3 ev = es.eigenvalues().cwiseMax(0.0);
    return ev[0] / (ev.sum() + eps);
}

/// Intersection depth (camera z) of the pixel ray with the plane n.x = d
/// (camera frame), or nullopt for a grazing ray.
inline std::optional<double> ray_plane_z(const CameraView& v, double u, double w, const Vec3& n, double d) {
    const Vec3 ray((u - v.cx) / v.fx, (w - v.cy) / v.fy, 1.0);
    const double denom = n.dot(ray);
    if (std::abs(denom) < 1e-12) return std::nullopt;
    return d / denom;
}

inline PointCloud random_cloud(Index n, std::uint64_t seed, bool colors = true, double extent = 1.0) {
    std::mt19937_64 rng(seed);
    PointCloud c;
    if (colors) c.colors.emplace();
    for (Index i = 0; i < n; ++i) {
        c.positions.emplace_back(extent * (2.0 * uniform_open0(rng) - 1.0), extent * (2.0 * uniform_open0(rng) - 1.0),
                                 extent * (2.0 * uniform_open0(rng) - 1.0));
        if (colors) c.colors->emplace_back(uniform_open0(rng), uniform_open0(rng), uniform_open0(rng));
    }
    return c;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("lidargs_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline std::string file_bytes(const std::filesystem::path& p) { return ply::read_file_bytes(p); }

/// Deterministic smooth RGB test pattern, also used to generate the frozen
/// SSIM references.
inline RgbImage pattern_a(int w, int h) {
    RgbImage img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) img.at(x, y)[c] = 0.5 + 0.4 * std::sin(0.3 * x + 0.2 * y + c);
    return img;
}

inline RgbImage pattern_b(int w, int h) {
    RgbImage img = pattern_a(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(x, y)[c] = std::clamp(img.at(x, y)[c] + 0.15 * std::cos(0.7 * x - 0.4 * y + 2 * c), 0.0, 1.0);
    return img;
}

}  // namespace lidargs::oracle
