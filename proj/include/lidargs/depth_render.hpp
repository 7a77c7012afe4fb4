// Copyright Contributors to the lidargs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lidargs/camera.hpp"
#include "lidargs/common.hpp"
#include "lidargs/image.hpp"
#include "lidargs/splat_model.hpp"

#include <optional>

namespace lidargs {

/// A Gaussian prepared for one view: its local plane in camera coordinates
/// and its screen-space footprint.
struct PlanarSplat {
    Vec3 normal_cam = Vec3::UnitZ();  // oriented so normal_cam . mean_cam > 0
    double plane_distance = 0.0;      // normal_cam . mean_cam
    Vec2 mean_px = Vec2::Zero();
    Mat2 conic = Mat2::Identity();
    double opacity = 0.0;
    Vec3 color = Vec3::Zero();
    // Pixel radius beyond which alpha < 1/255.
    double radius_px = 0.0;
};

inline constexpr double kNearPlane = 0.01;
inline constexpr double kCovarianceFloorPx2 = 0.3;
inline constexpr double kAlphaMax = 0.999;
inline constexpr double kAlphaMin = 1.0 / 255.0;
inline constexpr double kMinRayDot = 1e-6;
inline constexpr double kTransmittanceStop = 1e-4;

/// Camera-frame plane and projected footprint; nullopt if culled (mean behind
/// the near plane, plane through the camera centre, or invisible opacity).
inline std::optional<PlanarSplat> plane_params(const Gaussian& g, const CameraView& view) {
    const Vec3 mu = view.to_camera(g.mean);
    if (!(mu.z() > kNearPlane)) return std::nullopt;
    Vec3 n = view.R_wc * gaussian_normal(g);
    if (n.dot(mu) < 0.0) n = -n;
    const double dist = n.dot(mu);
    if (!(dist > 1e-12)) return std::nullopt;

    const Mat3 sigma_cam = view.R_wc * covariance_of(g) * view.R_wc.transpose();
    const double iz = 1.0 / mu.z();
    Eigen::Matrix<double, 2, 3> j;
    j << view.fx * iz, 0.0, -view.fx * mu.x() * iz * iz, 0.0, view.fy * iz, -view.fy * mu.y() * iz * iz;
    Mat2 cov2 = j * sigma_cam * j.transpose();
    cov2(0, 0) += kCovarianceFloorPx2;
    cov2(1, 1) += kCovarianceFloorPx2;
    const double det = cov2.determinant();
    if (!(det > 0.0)) return std::nullopt;

    PlanarSplat s;
    s.normal_cam = n;
    s.plane_distance = dist;
    s.mean_px = Vec2(view.fx * mu.x() * iz + view.cx, view.fy * mu.y() * iz + view.cy);
    s.conic = Mat2{{cov2(1, 1) / det, -cov2(0, 1) / det}, {-cov2(1, 0) / det, cov2(0, 0) / det}};
    s.opacity = g.opacity;
    s.color = g.color;
    const double peak = std::min(g.opacity, kAlphaMax);
    if (peak < kAlphaMin) return std::nullopt;
    const double mid = 0.5 * (cov2(0, 0) + cov2(1, 1));
    const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
    // Unclamped opacity: alpha = min(kAlphaMax, opacity * exp(.)) reaches 1/255 here.
    s.radius_px = std::sqrt(2.0 * std::log(g.opacity / kAlphaMin) * lambda_max);
    return s;
}

/// opacity * exp(-1/2 d^T conic d), clamped to kAlphaMax.
inline double splat_alpha(const PlanarSplat& s, const Vec2& pixel) {
    const Vec2 d = pixel - s.mean_px;
    const double power = -0.5 * d.dot(s.conic * d);
    return std::min(kAlphaMax, s.opacity * std::exp(power));
}

/// Depth weighting: alpha * transmittance (front-to-back), or bare alpha.
enum class DepthWeighting { kTransmittance, kRaw };

struct RenderOptions {
    DepthWeighting weighting = DepthWeighting::kTransmittance;
    bool color = true;
    int tile_size = 16;
};

struct RenderDiagnostics {
    Index culled = 0;
    Index tiny_denominator = 0;
};

struct RenderedFrame {
    DepthMap depth;
    RgbImage color;
    Image<int> contributors;
    RenderDiagnostics diagnostics;
};

/// Rasterises planar Gaussians into unbiased depth, colour and contributor
/// counts. Per pixel, contributors are ordered by their ray depth
/// D_i / (n_i . K^-1 p); depth is sum(w_i D_i) / sum(w_i n_i . K^-1 p).
inline RenderedFrame render(const GaussianSet& set, const CameraView& view, const RenderOptions& opts = {}) {
    const int w = view.width;
    const int h = view.height;
    RenderedFrame frame;
    frame.depth = DepthMap(w, h);
    frame.contributors = Image<int>(w, h, 0);
    if (opts.color) frame.color = RgbImage(w, h, Vec3::Zero());

    std::vector<PlanarSplat> splats;
    splats.reserve(set.size());
    for (const auto& g : set.gaussians) {
        if (auto s = plane_params(g, view)) {
            splats.push_back(*s);
        } else {
            ++frame.diagnostics.culled;
        }
    }

    const int ts = std::max(1, opts.tile_size);
    const int tiles_x = (w + ts - 1) / ts;
    const int tiles_y = (h + ts - 1) / ts;
    std::vector<std::vector<std::uint32_t>> bins(static_cast<std::size_t>(tiles_x) * tiles_y);
    for (std::uint32_t i = 0; i < splats.size(); ++i) {
        const auto& s = splats[i];
        const double r = s.radius_px;
        const int x0 = std::max(0, static_cast<int>(std::floor((s.mean_px.x() - r) / ts)));
        const int x1 = std::min(tiles_x - 1, static_cast<int>(std::floor((s.mean_px.x() + r) / ts)));
        const int y0 = std::max(0, static_cast<int>(std::floor((s.mean_px.y() - r) / ts)));
        const int y1 = std::min(tiles_y - 1, static_cast<int>(std::floor((s.mean_px.y() + r) / ts)));
        for (int ty = y0; ty <= y1; ++ty)
            for (int tx = x0; tx <= x1; ++tx) bins[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(i);
    }

    struct Hit {
        double ray_depth;
        std::uint32_t id;
        double alpha;
        double dot;
    };
    std::vector<Index> tiny(bins.size(), 0);
    parallel_for(
        bins.size(),
        [&](Index b, Index e) {
            std::vector<Hit> hits;
            for (Index tile = b; tile < e; ++tile) {
                const auto& bin = bins[tile];
                if (bin.empty()) continue;
                const int tx = static_cast<int>(tile % tiles_x);
                const int ty = static_cast<int>(tile / tiles_x);
                for (int y = ty * ts; y < std::min(h, (ty + 1) * ts); ++y) {
                    for (int x = tx * ts; x < std::min(w, (tx + 1) * ts); ++x) {
                        const Vec2 px(x, y);
                        const Vec3 ray = view.pixel_ray(x, y);
                        hits.clear();
                        for (std::uint32_t id : bin) {
                            const auto& s = splats[id];
                            if (std::abs(px.x() - s.mean_px.x()) > s.radius_px ||
                                std::abs(px.y() - s.mean_px.y()) > s.radius_px)
                                continue;
                            const double a = splat_alpha(s, px);
                            if (a < kAlphaMin) continue;
                            const double dot = s.normal_cam.dot(ray);
                            if (dot <= kMinRayDot) continue;
                            hits.push_back({s.plane_distance / dot, id, a, dot});
                        }
                        if (hits.empty()) continue;
                        std::sort(hits.begin(), hits.end(), [](const Hit& l, const Hit& r) {
                            return l.ray_depth < r.ray_depth || (l.ray_depth == r.ray_depth && l.id < r.id);
                        });

                        // Effective weights, reusing `alpha` to hold w_i.
                        double t = 1.0;
                        std::size_t used = 0;
                        Vec3 color = Vec3::Zero();
                        for (auto& hit : hits) {
                            const double a = hit.alpha;
                            const double weight = a * t;
                            if (opts.color) color += weight * splats[hit.id].color;
                            hit.alpha = opts.weighting == DepthWeighting::kTransmittance ? weight : a;
                            t *= 1.0 - a;
                            ++used;
                            if (t < kTransmittanceStop) break;
                        }
                        if (opts.weighting == DepthWeighting::kRaw) used = hits.size();
                        double total = 0.0;
                        double raw_den = 0.0;
                        for (std::size_t k = 0; k < used; ++k) {
                            total += hits[k].alpha;
                            raw_den += hits[k].alpha * hits[k].dot;
                        }
                        frame.contributors.at(x, y) = static_cast<int>(used);
                        if (opts.color) frame.color.at(x, y) = color;
                        if (raw_den < 1e-9) {
                            ++tiny[tile];
                            continue;
                        }
                        // Normalising the weights first makes a lone contributor
                        // return exactly D / (n . ray), whatever its alpha.
                        double num = 0.0;
                        double den = 0.0;
                        for (std::size_t k = 0; k < used; ++k) {
                            const double wn = hits[k].alpha / total;
                            num += wn * splats[hits[k].id].plane_distance;
                            den += wn * hits[k].dot;
                        }
                        frame.depth.depth.at(x, y) = num / den;
                        frame.depth.valid.at(x, y) = 1;
                    }
                }
            }
        },
        4);
    for (Index v : tiny) frame.diagnostics.tiny_denominator += v;
    if (frame.diagnostics.tiny_denominator)
        logger()->debug("render: {} pixels with vanishing depth denominator", frame.diagnostics.tiny_denominator);
    return frame;
}

/// Depth part of `render`. Requires at least one Gaussian in front of the camera.
inline RenderedFrame render_depth(const GaussianSet& set, const CameraView& view,
                                  DepthWeighting weighting = DepthWeighting::kTransmittance) {
    bool any = false;
    for (const auto& g : set.gaussians) any = any || view.to_camera(g.mean).z() > kNearPlane;
    require(any, ErrorCode::kInvalidArgument, "no gaussian lies in front of camera '" + view.name + "'");
    return render(set, view, RenderOptions{weighting, false, 16});
}

inline RgbImage render_color(const GaussianSet& set, const CameraView& view) {
    return render(set, view, RenderOptions{DepthWeighting::kTransmittance, true, 16}).color;
}

}  // namespace lidargs
