// Copyright Contributors to the lidargs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lidargs/common.hpp"
#include "lidargs/pointcloud.hpp"
#include "lidargs/sym_eigen3.hpp"

#include <optional>
#include <random>
#include <span>

namespace lidargs {

struct AllocationConfig {
    Index k = 64;
    double alpha = 0.5;
    double beta = 0.5;
    double epsilon = 1e-12;
    Index budget_M = 3'000'000;
    std::uint64_t seed = 0;
    // Query-loop chunk; the neighbour index itself is always global.
    Index chunk_size = 1 << 16;

    void validate() const {
        require(k >= 2, ErrorCode::kInvalidArgument, "k must be >= 2");
        require(alpha >= 0.0 && alpha <= 1.0 && beta >= 0.0 && beta <= 1.0, ErrorCode::kInvalidArgument,
                "alpha and beta must lie in [0, 1]");
        require(std::abs(alpha + beta - 1.0) <= 1e-9, ErrorCode::kInvalidArgument, "alpha + beta must equal 1");
        require(epsilon > 0.0, ErrorCode::kInvalidArgument, "epsilon must be positive");
        require(budget_M >= 1, ErrorCode::kInvalidArgument, "budget M must be >= 1");
        require(chunk_size >= 1, ErrorCode::kInvalidArgument, "chunk size must be >= 1");
    }
};

/// Per-point scores. `texture`/`texture_norm` are empty for colorless clouds.
struct ComplexityField {
    std::vector<double> curvature;
    std::vector<double> texture;
    std::vector<double> curvature_norm;
    std::vector<double> texture_norm;
    std::vector<double> probabilities;

    bool has_texture() const { return !texture.empty(); }
};

/// Unbiased neighbourhood covariance (divisor k - 1) about the neighbour centroid.
inline Mat3 local_covariance(std::span<const Vec3> positions, std::span<const Index> neighbor_ids) {
    const Index k = neighbor_ids.size();
    require(k >= 2, ErrorCode::kDegenerate, "covariance needs at least 2 neighbours, got " + std::to_string(k));
    Vec3 mean = Vec3::Zero();
    for (Index id : neighbor_ids) mean += positions[id];
    mean /= static_cast<double>(k);
    Mat3 c = Mat3::Zero();
    for (Index id : neighbor_ids) {
        const Vec3 d = positions[id] - mean;
        c += d * d.transpose();
    }
    return c / static_cast<double>(k - 1);
}

inline Mat3 local_covariance(const PointCloud& cloud, std::span<const Index> neighbor_ids) {
    return local_covariance(std::span<const Vec3>(cloud.positions), neighbor_ids);
}

/// Surface variation lambda_min / (trace + eps), in [0, 1/3].
inline double curvature(const Mat3& c, double epsilon = 1e-12) {
    const double scale = c.cwiseAbs().maxCoeff();
    require((c - c.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(scale, 1e-300), ErrorCode::kContract,
            "curvature expects a symmetric matrix");
    const Vec3 ev = sym_eigenvalues(c).cwiseMax(0.0);
    return ev[0] / (ev[0] + ev[1] + ev[2] + epsilon);
}

/// Mean per-channel (population) variance of the neighbour colours.
inline double texture_complexity(std::span<const Vec3> neighbor_colors) {
    const Index k = neighbor_colors.size();
    require(k >= 1, ErrorCode::kDegenerate, "texture complexity needs a non-empty neighbourhood");
    Vec3 mean = Vec3::Zero();
    for (const auto& c : neighbor_colors) mean += c;
    mean /= static_cast<double>(k);
    double sum = 0.0;
    for (const auto& c : neighbor_colors) sum += (c - mean).squaredNorm();
    return sum / (3.0 * static_cast<double>(k));
}

/// Global min-max normalisation; a constant input maps to all zeros.
inline std::vector<double> normalize_scores(std::span<const double> raw) {
    require(!raw.empty(), ErrorCode::kInvalidArgument, "cannot normalise an empty score array");
    double lo = raw[0];
    double hi = raw[0];
    for (Index i = 0; i < raw.size(); ++i) {
        require(std::isfinite(raw[i]), ErrorCode::kInvalidArgument,
                "non-finite score at index " + std::to_string(i));
        lo = std::min(lo, raw[i]);
        hi = std::max(hi, raw[i]);
    }
    std::vector<double> out(raw.size(), 0.0);
    if (hi == lo) return out;
    const double range = hi - lo;
    for (Index i = 0; i < raw.size(); ++i) out[i] = (raw[i] - lo) / range;
    return out;
}

/// P_i proportional to alpha * khat_i + beta * that_i. Without a texture term
/// the distribution is khat / sum(khat). A zero total falls back to uniform.
inline std::vector<double> allocation_probabilities(std::span<const double> khat,
                                                    std::optional<std::span<const double>> that,
                                                    const AllocationConfig& cfg) {
    const Index n = khat.size();
    require(n > 0, ErrorCode::kInvalidArgument, "empty score array");
    if (that)
        require(that->size() == n, ErrorCode::kInvalidArgument,
                "length mismatch: curvature " + std::to_string(n) + " vs texture " + std::to_string(that->size()));
    std::vector<double> p(n);
    for (Index i = 0; i < n; ++i) p[i] = that ? cfg.alpha * khat[i] + cfg.beta * (*that)[i] : khat[i];
    double total = 0.0;
    for (double v : p) total += v;
    if (!(total > 0.0)) {
        std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(n));
        return p;
    }
    for (double& v : p) v /= total;
    return p;
}

/// Raw curvature and texture for the points in `range`, written into the
/// matching slots of the output arrays.
inline void score_range(const PointCloud& cloud, const NeighborIndex& index, const AllocationConfig& cfg,
                        IndexRange range, std::span<double> curv_out, std::span<double> tex_out) {
    parallel_for(
        range.end - range.begin,
        [&](Index b, Index e) {
            std::vector<Vec3> neighbor_colors;
            for (Index off = b; off < e; ++off) {
                const Index i = range.begin + off;
                const auto ids = index.knn(i, cfg.k);
                curv_out[i] = curvature(local_covariance(cloud, ids), cfg.epsilon);
                if (!tex_out.empty()) {
                    neighbor_colors.clear();
                    for (Index id : ids) neighbor_colors.push_back((*cloud.colors)[id]);
                    tex_out[i] = texture_complexity(neighbor_colors);
                }
            }
        },
        64);
}

/// Full scoring pass: raw scores chunk by chunk, then global normalisation and
/// allocation probabilities.
inline ComplexityField compute_complexity(const PointCloud& cloud, const NeighborIndex& index,
                                          const AllocationConfig& cfg) {
    cfg.validate();
    const Index n = cloud.size();
    require(index.size() == n, ErrorCode::kInvalidArgument, "neighbor index does not match the cloud");
    require(n >= 3, ErrorCode::kDegenerate, "complexity scoring needs at least 3 points");
    ComplexityField f;
    f.curvature.assign(n, 0.0);
    if (cloud.has_colors()) f.texture.assign(n, 0.0);
    for (const auto& r : chunk_ranges(n, cfg.chunk_size)) score_range(cloud, index, cfg, r, f.curvature, f.texture);
    f.curvature_norm = normalize_scores(f.curvature);
    if (f.has_texture()) {
        f.texture_norm = normalize_scores(f.texture);
        f.probabilities = allocation_probabilities(f.curvature_norm, std::span<const double>(f.texture_norm), cfg);
    } else {
        f.probabilities = allocation_probabilities(f.curvature_norm, std::nullopt, cfg);
    }
    return f;
}

/// Weighted sampling without replacement (exponential keys): each point gets
/// key log(u)/P_i and the M largest keys win. Zero-probability points rank
/// below every positive one and are used only to fill the budget. Returns
/// ascending ids.
inline std::vector<Index> sample_budget_ids(std::span<const double> probs, Index budget, std::uint64_t seed) {
    const Index n = probs.size();
    require(budget >= 1, ErrorCode::kInvalidArgument, "budget M must be >= 1");
    require(budget <= n, ErrorCode::kInvalidArgument,
            "budget M = " + std::to_string(budget) + " exceeds point count N = " + std::to_string(n));
    struct Key {
        int tier;
        double key;
        Index id;
    };
    std::vector<Key> keys(n);
    std::mt19937_64 rng(seed);
    for (Index i = 0; i < n; ++i) {
        require(probs[i] >= 0.0 && std::isfinite(probs[i]), ErrorCode::kInvalidArgument,
                "invalid probability at index " + std::to_string(i));
        const double logu = std::log(uniform_open0(rng));
        keys[i] = probs[i] > 0.0 ? Key{1, logu / probs[i], i} : Key{0, logu, i};
    }
    auto better = [](const Key& a, const Key& b) {
        if (a.tier != b.tier) return a.tier > b.tier;
        if (a.key != b.key) return a.key > b.key;
        return a.id < b.id;
    };
    std::nth_element(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(budget - 1), keys.end(), better);
    std::vector<Index> ids(budget);
    for (Index i = 0; i < budget; ++i) ids[i] = keys[i].id;
    std::sort(ids.begin(), ids.end());
    return ids;
}

inline PointCloud sample_budget(const PointCloud& cloud, std::span<const double> probs, Index budget,
                                std::uint64_t seed) {
    require(probs.size() == cloud.size(), ErrorCode::kInvalidArgument, "probability count does not match the cloud");
    const auto ids = sample_budget_ids(probs, budget, seed);
    return cloud.subset(ids);
}

}  // namespace lidargs
