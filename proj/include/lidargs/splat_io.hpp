// Copyright Contributors to the lidargs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lidargs/ply.hpp"
#include "lidargs/splat_model.hpp"

#include <filesystem>

namespace lidargs {

// Zeroth-order spherical-harmonic constant used by the usual splat PLY layout.
inline constexpr double kShC0 = 0.28209479177387814;

inline double logit(double p) { return std::log(p / (1.0 - p)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Writes the conventional splat PLY: x y z, nx ny nz (LiDAR normal, zero when
/// absent), f_dc_0..2, opacity (logit), scale_0..2 (log), rot_0..3 (w x y z).
inline void save_splat_ply(const std::filesystem::path& path, const GaussianSet& set) {
    const Index n = set.size();
    const char* names[] = {"x",       "y",       "z",       "nx",      "ny",    "nz",    "f_dc_0", "f_dc_1", "f_dc_2",
                           "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2",  "rot_3"};
    std::vector<ply::Column> cols;
    for (const char* name : names) cols.push_back({name, ply::Type::kFloat32, std::vector<double>(n)});
    for (Index i = 0; i < n; ++i) {
        const Gaussian& g = set.gaussians[i];
        const Vec3 nrm = set.lidar_normals ? (*set.lidar_normals)[i] : Vec3::Zero();
        const double row[] = {g.mean.x(),
                              g.mean.y(),
                              g.mean.z(),
                              nrm.x(),
                              nrm.y(),
                              nrm.z(),
                              (g.color.x() - 0.5) / kShC0,
                              (g.color.y() - 0.5) / kShC0,
                              (g.color.z() - 0.5) / kShC0,
                              logit(g.opacity),
                              std::log(g.scale.x()),
                              std::log(g.scale.y()),
                              std::log(g.scale.z()),
                              g.rotation.w(),
                              g.rotation.x(),
                              g.rotation.y(),
                              g.rotation.z()};
        for (std::size_t c = 0; c < cols.size(); ++c) cols[c].values[i] = row[c];
    }
    ply::write_vertices(path, n, cols);
}

inline GaussianSet load_splat_ply(const std::filesystem::path& path) {
    const ply::VertexTable t = ply::read_vertices(path);
    auto col = [&](const char* name) -> const std::vector<double>& {
        const auto* c = t.find(name);
        if (!c) throw Error(ErrorCode::kParse, path.string() + ": splat PLY lacks property '" + name + "'");
        return *c;
    };
    const auto &x = col("x"), &y = col("y"), &z = col("z");
    const auto &f0 = col("f_dc_0"), &f1 = col("f_dc_1"), &f2 = col("f_dc_2");
    const auto& op = col("opacity");
    const auto &s0 = col("scale_0"), &s1 = col("scale_1"), &s2 = col("scale_2");
    const auto &r0 = col("rot_0"), &r1 = col("rot_1"), &r2 = col("rot_2"), &r3 = col("rot_3");
    const auto* nx = t.find("nx");
    const auto* ny = t.find("ny");
    const auto* nz = t.find("nz");

    GaussianSet set;
    set.gaussians.resize(t.count);
    bool any_normal = false;
    std::vector<Vec3> normals(t.count, Vec3::Zero());
    for (Index i = 0; i < t.count; ++i) {
        Gaussian& g = set.gaussians[i];
        g.mean = Vec3(x[i], y[i], z[i]);
        g.color = Vec3(f0[i], f1[i], f2[i]) * kShC0 + Vec3::Constant(0.5);
        g.opacity = sigmoid(op[i]);
        g.scale = Vec3(std::exp(s0[i]), std::exp(s1[i]), std::exp(s2[i]));
        g.rotation = Quat(r0[i], r1[i], r2[i], r3[i]);
        require(g.rotation.norm() > 0.0, ErrorCode::kParse,
                path.string() + ": zero quaternion at vertex " + std::to_string(i));
        g.rotation.normalize();
        require(g.mean.allFinite(), ErrorCode::kParse,
                path.string() + ": non-finite coordinate at vertex " + std::to_string(i));
        if (nx && ny && nz) {
            normals[i] = Vec3((*nx)[i], (*ny)[i], (*nz)[i]);
            if (normals[i].norm() > 0.0) {
                any_normal = true;
                normals[i].normalize();
            }
        }
    }
    if (any_normal) set.lidar_normals = std::move(normals);
    return set;
}

}  // namespace lidargs
