// Copyright Contributors to the lidargs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lidargs/camera.hpp"
#include "lidargs/common.hpp"
#include "lidargs/image.hpp"

#include <array>

namespace lidargs {

struct ConfidenceMap {
    GrayImage weights;  // in [0, 1] on valid pixels, 0 elsewhere
    Mask valid;
};

struct LossWeights {
    double lambda_depth = 1.0;
    double lambda_rgb = 0.8;
    double lambda_ssim = 0.2;
    double lambda_normal = 0.01;
    bool normal_enabled = false;

    void validate() const {
        require(lambda_depth >= 0.0 && lambda_rgb >= 0.0 && lambda_ssim >= 0.0 && lambda_normal >= 0.0,
                ErrorCode::kInvalidArgument, "loss weights must be non-negative");
    }
};

/// 5-point Laplacian with replicated borders.
inline GrayImage laplacian(const GrayImage& img) {
    require(!img.empty(), ErrorCode::kInvalidArgument, "laplacian of an empty image");
    const int w = img.width;
    const int h = img.height;
    GrayImage out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double c = img.at(x, y);
            const double l = img.at(std::max(0, x - 1), y);
            const double r = img.at(std::min(w - 1, x + 1), y);
            const double u = img.at(x, std::max(0, y - 1));
            const double d = img.at(x, std::min(h - 1, y + 1));
            out.at(x, y) = l + r + u + d - 4.0 * c;
        }
    }
    return out;
}

inline GrayImage laplacian(const RgbImage& img) { return laplacian(to_luminance(img)); }

/// w(p) = 1 - |lap(p)| / max over valid q of |lap(q)|; all ones if that max is 0.
inline ConfidenceMap confidence_weights(const RgbImage& image, const Mask& valid) {
    require(image.same_shape(valid), ErrorCode::kInvalidArgument, "image and mask sizes differ");
    const GrayImage lap = laplacian(image);
    double peak = 0.0;
    Index count = 0;
    for (std::size_t i = 0; i < lap.size(); ++i) {
        if (!valid.data[i]) continue;
        ++count;
        peak = std::max(peak, std::abs(lap.data[i]));
    }
    require(count > 0, ErrorCode::kInvalidArgument, "confidence weights need at least one valid pixel");
    ConfidenceMap out{GrayImage(image.width, image.height, 0.0), valid};
    for (std::size_t i = 0; i < lap.size(); ++i) {
        if (!valid.data[i]) continue;
        out.weights.data[i] = peak > 0.0 ? std::clamp(1.0 - std::abs(lap.data[i]) / peak, 0.0, 1.0) : 1.0;
    }
    return out;
}

/// Confidence-weighted L1 between LiDAR and rendered depth, averaged over
/// pixels valid in both maps. Returns 0 (with a warning) when none are.
inline double depth_loss(const DepthMap& lidar, const DepthMap& rendered, const ConfidenceMap& conf) {
    require(lidar.depth.same_shape(rendered.depth) && lidar.depth.same_shape(conf.weights), ErrorCode::kInvalidArgument,
            "depth loss inputs have different resolutions");
    double sum = 0.0;
    Index n = 0;
    for (std::size_t i = 0; i < lidar.depth.size(); ++i) {
        if (!lidar.valid.data[i] || !rendered.valid.data[i]) continue;
        sum += conf.weights.data[i] * std::abs(lidar.depth.data[i] - rendered.depth.data[i]);
        ++n;
    }
    if (n == 0) {
        logger()->warn("depth_loss: no pixel is valid in both LiDAR and rendered depth");
        return 0.0;
    }
    return sum / static_cast<double>(n);
}

inline double l1_rgb(const RgbImage& a, const RgbImage& b) {
    require(a.same_shape(b), ErrorCode::kInvalidArgument, "l1_rgb: image shapes differ");
    require(!a.empty(), ErrorCode::kInvalidArgument, "l1_rgb: empty images");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += (a.data[i] - b.data[i]).cwiseAbs().sum();
    return sum / (3.0 * static_cast<double>(a.size()));
}

inline double mse_rgb(const RgbImage& a, const RgbImage& b) {
    require(a.same_shape(b), ErrorCode::kInvalidArgument, "mse_rgb: image shapes differ");
    require(!a.empty(), ErrorCode::kInvalidArgument, "mse_rgb: empty images");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += (a.data[i] - b.data[i]).squaredNorm();
    return sum / (3.0 * static_cast<double>(a.size()));
}

/// 10 log10(1 / MSE) for [0, 1] images; +inf for identical images.
inline double psnr(const RgbImage& a, const RgbImage& b) {
    const double mse = mse_rgb(a, b);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

namespace detail {

inline std::array<double, kSsimWindow> ssim_kernel() {
    std::array<double, kSsimWindow> k{};
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double x = i - kSsimWindow / 2;
        k[i] = std::exp(-0.5 * x * x / (kSsimSigma * kSsimSigma));
        sum += k[i];
    }
    for (auto& v : k) v /= sum;
    return k;
}

/// Separable Gaussian filter evaluated only where the whole window fits.
inline std::vector<double> filter_valid(const std::vector<double>& src, int w, int h) {
    static const auto k = ssim_kernel();
    const int ow = w - kSsimWindow + 1;
    const int oh = h - kSsimWindow + 1;
    std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < kSsimWindow; ++i) s += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * ow + x] = s;
        }
    std::vector<double> out(static_cast<std::size_t>(ow) * oh);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < kSsimWindow; ++i) s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    return out;
}

inline double ssim_channel(const std::vector<double>& a, const std::vector<double>& b, int w, int h) {
    std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    const auto mu_a = filter_valid(a, w, h);
    const auto mu_b = filter_valid(b, w, h);
    const auto e_aa = filter_valid(aa, w, h);
    const auto e_bb = filter_valid(bb, w, h);
    const auto e_ab = filter_valid(ab, w, h);
    double sum = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i];
        const double mb = mu_b[i];
        const double va = e_aa[i] - ma * ma;
        const double vb = e_bb[i] - mb * mb;
        const double cov = e_ab[i] - ma * mb;
        sum += ((2.0 * ma * mb + kSsimC1) * (2.0 * cov + kSsimC2)) /
               ((ma * ma + mb * mb + kSsimC1) * (va + vb + kSsimC2));
    }
    return sum / static_cast<double>(mu_a.size());
}

}  // namespace detail

/// Mean SSIM over channels and all window positions that fit inside the image
/// (11x11 Gaussian window, sigma 1.5, data range 1).
inline double ssim(const RgbImage& a, const RgbImage& b) {
    require(a.same_shape(b), ErrorCode::kInvalidArgument, "ssim: image shapes differ");
    require(a.width >= kSsimWindow && a.height >= kSsimWindow, ErrorCode::kInvalidArgument,
            "ssim: images must be at least 11x11");
    double total = 0.0;
    std::vector<double> ca(a.size()), cb(a.size());
    for (int c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            ca[i] = a.data[i][c];
            cb[i] = b.data[i][c];
        }
        total += detail::ssim_channel(ca, cb, a.width, a.height);
    }
    return total / 3.0;
}

inline double ssim_loss(const RgbImage& a, const RgbImage& b) { return 1.0 - ssim(a, b); }

/// lambda_rgb L_rgb + lambda_ssim L_ssim + lambda_depth L_depth, plus
/// lambda_normal L_normal when enabled.
inline double total_loss(double rgb_l1, double ssim_term, double depth, const LossWeights& w, double normal = 0.0) {
    double total = w.lambda_rgb * rgb_l1 + w.lambda_ssim * ssim_term + w.lambda_depth * depth;
    if (w.normal_enabled) total += w.lambda_normal * normal;
    return total;
}

}  // namespace lidargs
