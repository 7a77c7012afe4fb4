// Copyright Contributors to the lidargs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lidargs/common.hpp"
#include "lidargs/complexity.hpp"
#include "lidargs/pointcloud.hpp"
#include "lidargs/sym_eigen3.hpp"

#include <Eigen/Geometry>

#include <array>
#include <optional>
#include <random>
#include <span>

namespace lidargs {

/// Anisotropic Gaussian primitive. `scale` holds per-axis standard deviations
/// in the local frame given by `rotation`.
struct Gaussian {
    Vec3 mean = Vec3::Zero();
    Quat rotation = Quat::Identity();
    Vec3 scale = Vec3::Ones();
    double opacity = 0.5;
    Vec3 color = Vec3::Constant(0.5);

    Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }

    void validate() const {
        require(mean.allFinite(), ErrorCode::kContract, "gaussian mean is not finite");
        require(std::abs(rotation.norm() - 1.0) <= 1e-6, ErrorCode::kContract, "gaussian rotation is not unit");
        require(scale.allFinite() && (scale.array() > 0.0).all(), ErrorCode::kContract,
                "gaussian scales must be positive and finite");
        require(opacity > 0.0 && opacity < 1.0, ErrorCode::kContract, "gaussian opacity must lie in (0, 1)");
    }
};

struct GaussianSet {
    std::vector<Gaussian> gaussians;
    std::optional<std::vector<Vec3>> lidar_normals;

    Index size() const { return gaussians.size(); }
    bool empty() const { return gaussians.empty(); }

    std::vector<Vec3> means() const {
        std::vector<Vec3> out;
        out.reserve(gaussians.size());
        for (const auto& g : gaussians) out.push_back(g.mean);
        return out;
    }

    void validate() const {
        for (const auto& g : gaussians) g.validate();
        if (lidar_normals)
            require(lidar_normals->size() == gaussians.size(), ErrorCode::kContract,
                    "lidar normal count does not match gaussian count");
    }
};

struct SplitSchedule {
    double theta_start = 0.1;
    double theta_end = 0.3;
    std::int64_t total_iters = 30000;
};

/// How the curvature test combines with the caller's gradient flag.
enum class GateMode { kAnd, kOr, kOff };

inline std::string_view to_string(GateMode m) {
    switch (m) {
        case GateMode::kAnd: return "AND";
        case GateMode::kOr: return "OR";
        case GateMode::kOff: return "OFF";
    }
    return "AND";
}

inline GateMode parse_gate_mode(std::string_view s) {
    if (s == "AND" || s == "and") return GateMode::kAnd;
    if (s == "OR" || s == "or") return GateMode::kOr;
    if (s == "OFF" || s == "off") return GateMode::kOff;
    throw Error(ErrorCode::kInvalidArgument, "unknown curvature gate mode '" + std::string(s) + "'");
}

/// Sigma = R diag(s^2) R^T.
inline Mat3 covariance_of(const Gaussian& g) {
    const Mat3 r = g.rotation_matrix();
    return r * g.scale.cwiseProduct(g.scale).asDiagonal() * r.transpose();
}

struct NormalDiagnostics {
    Index ties = 0;
};

/// Flips `n` so its largest-magnitude component is positive.
inline Vec3 canonical_sign(const Vec3& n) {
    Index axis = 0;
    n.cwiseAbs().maxCoeff(&axis);
    return n[static_cast<int>(axis)] < 0.0 ? Vec3(-n) : n;
}

/// Gaussian-implied surface normal: the eigenvector of Sigma for the smallest
/// eigenvalue, i.e. the rotation column of the smallest scale. Ties pick the
/// lower axis and are counted in `diag`.
inline Vec3 gaussian_normal(const Gaussian& g, NormalDiagnostics* diag = nullptr) {
    int axis = 0;
    for (int a = 1; a < 3; ++a)
        if (g.scale[a] < g.scale[axis]) axis = a;
    const double tol = 1e-9 * g.scale.maxCoeff();
    for (int a = 0; a < 3; ++a) {
        if (a != axis && std::abs(g.scale[a] - g.scale[axis]) <= tol) {
            if (diag) ++diag->ties;
            break;
        }
    }
    return canonical_sign(g.rotation_matrix().col(axis).normalized());
}

/// Curvature of every position over its k nearest neighbours (self excluded).
inline std::vector<double> point_curvatures(const NeighborIndex& index, Index k, double epsilon) {
    const auto& pts = index.points();
    std::vector<double> out(pts.size(), 0.0);
    parallel_for(
        pts.size(),
        [&](Index b, Index e) {
            for (Index i = b; i < e; ++i)
                out[i] = curvature(local_covariance(std::span<const Vec3>(pts), index.knn(i, k)), epsilon);
        },
        64);
    return out;
}

/// Curvature on the current Gaussian centres, with a fresh index over the means.
inline std::vector<double> online_curvature(const GaussianSet& set, Index k, double epsilon = 1e-12) {
    require(k >= 2, ErrorCode::kInvalidArgument, "online curvature needs k >= 2");
    require(set.size() >= k + 1, ErrorCode::kDegenerate,
            "online curvature needs at least k+1 = " + std::to_string(k + 1) + " gaussians, got " +
                std::to_string(set.size()));
    const NeighborIndex index(set.means(), k);
    return point_curvatures(index, k, epsilon);
}

/// Linear coarse-to-fine threshold. Out-of-range t is clamped and logged.
inline double split_threshold(std::int64_t t, const SplitSchedule& sched) {
    require(sched.total_iters > 0, ErrorCode::kInvalidArgument, "schedule needs T > 0");
    if (t < 0 || t > sched.total_iters) {
        logger()->warn("split_threshold: iteration {} outside [0, {}], clamping", t, sched.total_iters);
        t = std::clamp<std::int64_t>(t, 0, sched.total_iters);
    }
    const double f = static_cast<double>(t) / static_cast<double>(sched.total_iters);
    return std::lerp(sched.theta_start, sched.theta_end, f);
}

inline std::vector<Index> select_split_candidates(std::span<const double> curvatures,
                                                  std::span<const std::uint8_t> grad_flags,
                                                  std::int64_t t, const SplitSchedule& sched,
                                                  GateMode mode = GateMode::kAnd) {
    require(curvatures.size() == grad_flags.size(), ErrorCode::kInvalidArgument,
            "length mismatch: " + std::to_string(curvatures.size()) + " curvatures vs " +
                std::to_string(grad_flags.size()) + " gradient flags");
    const double theta = split_threshold(t, sched);
    std::vector<Index> out;
    for (Index i = 0; i < curvatures.size(); ++i) {
        const bool curved = curvatures[i] > theta;
        bool pick = false;
        switch (mode) {
            case GateMode::kAnd: pick = grad_flags[i] != 0 && curved; break;
            case GateMode::kOr: pick = grad_flags[i] != 0 || curved; break;
            case GateMode::kOff: pick = grad_flags[i] != 0; break;
        }
        if (pick) out.push_back(i);
    }
    return out;
}

inline constexpr double kSplitScaleDivisor = 1.6;

/// Two children drawn from the parent's density, scales shrunk by 1.6, other
/// attributes copied. The caller removes the parent.
inline std::array<Gaussian, 2> split_gaussian(const Gaussian& g, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Mat3 r = g.rotation_matrix();
    std::array<Gaussian, 2> children{g, g};
    for (auto& c : children) {
        Vec3 z;
        for (int a = 0; a < 3; ++a) z[a] = standard_normal(rng);
        c.mean = g.mean + r * g.scale.cwiseProduct(z);
        c.scale = g.scale / kSplitScaleDivisor;
    }
    return children;
}

/// Attaches the normal of each mean's nearest cloud point (lower index on ties).
inline GaussianSet associate_lidar_normals(const GaussianSet& set, const PointCloud& cloud,
                                           const NeighborIndex& index) {
    require(cloud.has_normals(), ErrorCode::kInvalidArgument, "cloud has no normals to associate");
    require(index.size() == cloud.size(), ErrorCode::kInvalidArgument, "neighbor index does not match the cloud");
    GaussianSet out = set;
    out.lidar_normals.emplace(set.size());
    parallel_for(set.size(), [&](Index b, Index e) {
        for (Index i = b; i < e; ++i) (*out.lidar_normals)[i] = (*cloud.normals)[index.nearest(set.gaussians[i].mean)];
    });
    return out;
}

struct NormalOrientation {
    std::optional<Vec3> viewpoint;
    // Point normals away from the viewpoint instead of towards it.
    bool away = false;
};

struct NormalEstimateStats {
    Index degenerate = 0;
};

inline constexpr double kDegenerateNeighborhood = 1e-10;

/// PCA normals: smallest-eigenvalue eigenvector of each point's neighbourhood
/// covariance. Neighbourhoods without a 2D spread get (0, 0, 1) and are counted.
inline PointCloud estimate_point_normals(const PointCloud& cloud, Index k, const NormalOrientation& orient = {},
                                         NormalEstimateStats* stats = nullptr) {
    require(k >= 2, ErrorCode::kInvalidArgument, "normal estimation needs k >= 2");
    require(cloud.size() >= k + 1, ErrorCode::kDegenerate,
            "normal estimation needs at least k+1 points, got " + std::to_string(cloud.size()));
    const NeighborIndex index(cloud.positions, k);
    PointCloud out = cloud;
    out.normals.emplace(cloud.size());
    std::vector<unsigned char> degenerate(cloud.size(), 0);
    parallel_for(
        cloud.size(),
        [&](Index b, Index e) {
            for (Index i = b; i < e; ++i) {
                const Mat3 c = local_covariance(cloud, index.knn(i, k));
                const Vec3 ev = sym_eigenvalues(c);
                if (!(ev[2] > 0.0) || ev[1] <= kDegenerateNeighborhood * ev[2]) {
                    (*out.normals)[i] = Vec3::UnitZ();
                    degenerate[i] = 1;
                    continue;
                }
                Vec3 n = smallest_eigenvector(c, ev);
                if (orient.viewpoint) {
                    const double side = n.dot(*orient.viewpoint - cloud.positions[i]);
                    if ((side < 0.0) != orient.away) n = -n;
                } else {
                    n = canonical_sign(n);
                }
                (*out.normals)[i] = n;
            }
        },
        64);
    Index bad = 0;
    for (auto d : degenerate) bad += d;
    if (bad) logger()->warn("estimate_point_normals: {} degenerate neighbourhoods got the fallback normal", bad);
    if (stats) stats->degenerate = bad;
    return out;
}

/// Mean of 1 - |n_gs . n_lidar| over the set; in [0, 1].
inline double normal_alignment_loss(const GaussianSet& set) {
    require(set.lidar_normals.has_value(), ErrorCode::kInvalidArgument, "gaussian set has no lidar normals");
    require(set.lidar_normals->size() == set.size(), ErrorCode::kInvalidArgument,
            "lidar normal count does not match gaussian count");
    require(!set.empty(), ErrorCode::kInvalidArgument, "normal loss of an empty set");
    double sum = 0.0;
    for (Index i = 0; i < set.size(); ++i) {
        const double d = std::min(1.0, std::abs(gaussian_normal(set.gaussians[i]).dot((*set.lidar_normals)[i])));
        sum += 1.0 - d;
    }
    return sum / static_cast<double>(set.size());
}

struct InitOptions {
    double opacity = 0.5;
    // Thickness along the normal relative to the in-plane scale.
    double flat_ratio = 0.1;
    // Multiplier on the mean distance to the 3 nearest neighbours.
    double scale_factor = 1.0;
    Index normal_k = 16;
};

/// One flat Gaussian per point: in-plane scale from the mean 3-NN distance,
/// thin along the point normal (estimated when the cloud has none), colour
/// from the cloud or mid grey. LiDAR normals are attached when present.
inline GaussianSet init_gaussians(const PointCloud& cloud, const InitOptions& opts = {}) {
    require(cloud.size() >= 4, ErrorCode::kDegenerate, "initialisation needs at least 4 points");
    require(opts.opacity > 0.0 && opts.opacity < 1.0, ErrorCode::kInvalidArgument, "initial opacity must lie in (0, 1)");
    require(opts.flat_ratio > 0.0 && opts.scale_factor > 0.0, ErrorCode::kInvalidArgument,
            "initial scale factors must be positive");
    const NeighborIndex index(cloud.positions, 3);
    std::vector<Vec3> normals;
    if (cloud.normals) {
        normals = *cloud.normals;
    } else {
        const Index k = std::min(opts.normal_k, cloud.size() - 1);
        normals = *estimate_point_normals(cloud, k).normals;
    }
    GaussianSet set;
    set.gaussians.resize(cloud.size());
    parallel_for(
        cloud.size(),
        [&](Index b, Index e) {
            for (Index i = b; i < e; ++i) {
                double d = 0.0;
                const auto nn = index.knn(i, 3);
                for (Index j : nn) d += std::sqrt(squared_distance(cloud.positions[i], cloud.positions[j]));
                d = std::max(d / static_cast<double>(nn.size()), 1e-7) * opts.scale_factor;
                Gaussian& g = set.gaussians[i];
                g.mean = cloud.positions[i];
                g.rotation = Quat::FromTwoVectors(Vec3::UnitZ(), normals[i]).normalized();
                g.scale = Vec3(d, d, d * opts.flat_ratio);
                g.opacity = opts.opacity;
                g.color = cloud.colors ? (*cloud.colors)[i] : Vec3::Constant(0.5);
            }
        },
        64);
    if (cloud.normals) set.lidar_normals = *cloud.normals;
    return set;
}

}  // namespace lidargs
