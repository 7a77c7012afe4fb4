// Copyright Contributors to the lidargs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lidargs/camera.hpp"
#include "lidargs/common.hpp"
#include "lidargs/depth_render.hpp"
#include "lidargs/pointcloud.hpp"
#include "lidargs/splat_model.hpp"

#include <random>

// Synthetic scenes with known geometry, used as fixtures by the tests and the
// `synth` command.
namespace lidargs::synth {

enum class Texture { kNone, kNoise, kChecker };

/// Regular grid of n x n points on the square [-half, half]^2 of the plane
/// through `center` with unit normal `normal`.
inline PointCloud plane(Index n, double half, const Vec3& center = Vec3::Zero(), const Vec3& normal = Vec3::UnitZ(),
                        std::optional<Vec3> color = std::nullopt) {
    require(n >= 2, ErrorCode::kInvalidArgument, "plane needs at least 2 points per side");
    require(half > 0.0, ErrorCode::kInvalidArgument, "plane half-size must be positive");
    const Vec3 nz = normal.normalized();
    const Quat q = Quat::FromTwoVectors(Vec3::UnitZ(), nz);
    const Vec3 u = q * Vec3::UnitX();
    const Vec3 v = q * Vec3::UnitY();
    PointCloud c;
    c.normals.emplace();
    if (color) c.colors.emplace();
    for (Index j = 0; j < n; ++j) {
        for (Index i = 0; i < n; ++i) {
            const double a = -half + 2.0 * half * static_cast<double>(i) / static_cast<double>(n - 1);
            const double b = -half + 2.0 * half * static_cast<double>(j) / static_cast<double>(n - 1);
            c.positions.push_back(center + a * u + b * v);
            c.normals->push_back(nz);
            if (color) c.colors->push_back(*color);
        }
    }
    return c;
}

/// Random points on the surface of the axis-aligned cube [-half, half]^3, an
/// equal share per face, with outward normals. Face 0 is +x.
inline PointCloud cube(Index n, double half, std::uint64_t seed, Texture texture = Texture::kNone,
                       bool with_colors = true) {
    require(n >= 6, ErrorCode::kInvalidArgument, "cube needs at least 6 points");
    require(half > 0.0, ErrorCode::kInvalidArgument, "cube half-size must be positive");
    std::mt19937_64 rng(seed);
    PointCloud c;
    c.normals.emplace();
    if (with_colors) c.colors.emplace();
    for (Index i = 0; i < n; ++i) {
        const int face = static_cast<int>(i * 6 / n);
        const int axis = face / 2;
        const double side = face % 2 == 0 ? 1.0 : -1.0;
        const double a = (2.0 * uniform_open0(rng) - 1.0) * half;
        const double b = (2.0 * uniform_open0(rng) - 1.0) * half;
        Vec3 p;
        p[axis] = side * half;
        p[(axis + 1) % 3] = a;
        p[(axis + 2) % 3] = b;
        Vec3 nrm = Vec3::Zero();
        nrm[axis] = side;
        c.positions.push_back(p);
        c.normals->push_back(nrm);
        if (!with_colors) continue;
        Vec3 col = Vec3::Constant(0.5);
        if (face == 0) {
            if (texture == Texture::kNoise) {
                col = Vec3(uniform_open0(rng), uniform_open0(rng), uniform_open0(rng));
            } else if (texture == Texture::kChecker) {
                const int cell = static_cast<int>(std::floor((a + half) / half * 4.0)) +
                                 static_cast<int>(std::floor((b + half) / half * 4.0));
                col = Vec3::Constant(cell % 2 == 0 ? 0.1 : 0.9);
            }
        }
        c.colors->push_back(col);
    }
    return c;
}

/// Distance from a cube-surface point to the nearest cube edge.
inline double cube_edge_distance(const Vec3& p, double half) {
    std::array<double, 3> a{std::abs(p.x()), std::abs(p.y()), std::abs(p.z())};
    std::sort(a.begin(), a.end(), std::greater<>());
    return half - a[1];
}

/// Index of the cube face a surface point lies on (0:+x 1:-x 2:+y 3:-y 4:+z 5:-z).
inline int cube_face(const Vec3& p) {
    Index axis = 0;
    p.cwiseAbs().maxCoeff(&axis);
    return static_cast<int>(axis) * 2 + (p[static_cast<int>(axis)] >= 0.0 ? 0 : 1);
}

/// Fibonacci lattice on a sphere with outward normals.
inline PointCloud sphere(Index n, double radius, const Vec3& center = Vec3::Zero()) {
    require(n >= 4, ErrorCode::kInvalidArgument, "sphere needs at least 4 points");
    require(radius > 0.0, ErrorCode::kInvalidArgument, "sphere radius must be positive");
    constexpr double kGolden = 2.399963229728653;  // pi (3 - sqrt 5)
    PointCloud c;
    c.normals.emplace();
    c.colors.emplace();
    for (Index i = 0; i < n; ++i) {
        const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = kGolden * static_cast<double>(i);
        const Vec3 d(r * std::cos(phi), r * std::sin(phi), z);
        c.positions.push_back(center + radius * d);
        c.normals->push_back(d);
        c.colors->push_back(Vec3::Constant(0.5) + 0.4 * d);
    }
    return c;
}

/// `count` views on a ring around `target` at the given elevation (radians),
/// all looking at the target.
inline std::vector<CameraView> orbit_cameras(Index count, double radius, const Vec3& target, double elevation,
                                             double focal, int width, int height) {
    require(count >= 1, ErrorCode::kInvalidArgument, "need at least one camera");
    std::vector<CameraView> out;
    for (Index i = 0; i < count; ++i) {
        const double az = 0.6 + 2.0 * 3.141592653589793 * static_cast<double>(i) / static_cast<double>(count);
        const Vec3 eye = target + radius * Vec3(std::cos(elevation) * std::cos(az), std::cos(elevation) * std::sin(az),
                                                std::sin(elevation));
        out.push_back(look_at(eye, target, Vec3::UnitZ(), focal, width, height, "view_" + std::to_string(i)));
    }
    return out;
}

/// Reference images: the cloud turned into dense, nearly opaque splats.
inline std::vector<RgbImage> reference_images(const PointCloud& cloud, std::span<const CameraView> views) {
    InitOptions opts;
    opts.opacity = 0.95;
    opts.scale_factor = 1.2;
    const GaussianSet dense = init_gaussians(cloud, opts);
    std::vector<RgbImage> out;
    for (const auto& v : views) out.push_back(render_color(dense, v));
    return out;
}

}  // namespace lidargs::synth
