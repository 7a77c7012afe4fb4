// Copyright Contributors to the lidargs Project
// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <gtest/gtest.h>

using namespace lidargs;

namespace {

CameraView axis_camera(int size = 64, double f = 64.0) {
    CameraView v;
    v.name = "cam";
    v.fx = v.fy = f;
    v.cx = v.cy = size / 2.0;
    v.width = v.height = size;
    return v;
}

Gaussian disk(const Vec3& mean, double radius, double thickness, const Quat& q = Quat::Identity(),
              double opacity = 0.8, const Vec3& color = Vec3(0.5, 0.5, 0.5)) {
    Gaussian g;
    g.mean = mean;
    g.rotation = q;
    g.scale = Vec3(radius, radius, thickness);
    g.opacity = opacity;
    g.color = color;
    return g;
}

GaussianSet one(const Gaussian& g) {
    GaussianSet s;
    s.gaussians.push_back(g);
    return s;
}

}  // namespace

TEST(PlaneParams, FrontoParallelAndTranslated) {
    const CameraView v = axis_camera();
    auto s = plane_params(disk(Vec3(0, 0, 3), 0.5, 0.01), v);
    ASSERT_TRUE(s);
    EXPECT_EQ(s->normal_cam, Vec3(0, 0, 1));
    EXPECT_EQ(s->plane_distance, 3.0);
    s = plane_params(disk(Vec3(0.4, -0.3, 3), 0.5, 0.01), v);
    ASSERT_TRUE(s);
    EXPECT_EQ(s->normal_cam, Vec3(0, 0, 1));
    EXPECT_EQ(s->plane_distance, 3.0);
    EXPECT_TRUE(s->conic.isApprox(s->conic.transpose()));
    EXPECT_GT(s->conic.determinant(), 0.0);
}

TEST(PlaneParams, FortyFiveDegreeThinAxis) {
    const Quat q(Eigen::AngleAxisd(M_PI / 4, Vec3::UnitX()));
    const auto s = plane_params(disk(Vec3(0, 0, 2), 0.5, 0.01, q), axis_camera());
    ASSERT_TRUE(s);
    EXPECT_NEAR(s->plane_distance, 2.0 * std::cos(M_PI / 4), 1e-12);
    EXPECT_GT(s->normal_cam.dot(Vec3(0, 0, 2)), 0.0);
}

TEST(PlaneParams, CulledBehindCamera) {
    EXPECT_FALSE(plane_params(disk(Vec3(0, 0, -1), 0.5, 0.01), axis_camera()));
    EXPECT_FALSE(plane_params(disk(Vec3(0, 0, 0.005), 0.5, 0.01), axis_camera()));
}

TEST(SplatAlpha, CentreHalfFalloffAndCutoff) {
    const auto s = plane_params(disk(Vec3(0, 0, 3), 0.3, 0.01), axis_camera());
    ASSERT_TRUE(s);
    EXPECT_DOUBLE_EQ(splat_alpha(*s, s->mean_px), 0.8);
    // Walk along x until d^T conic d = 2 ln 2.
    const double dx = std::sqrt(2.0 * std::log(2.0) / s->conic(0, 0));
    EXPECT_NEAR(splat_alpha(*s, s->mean_px + Vec2(dx, 0)), 0.4, 1e-12);
    EXPECT_LT(splat_alpha(*s, s->mean_px + Vec2(s->radius_px + 1.0, 0)), kAlphaMin);
    auto opaque = *s;
    opaque.opacity = 0.99999;
    EXPECT_EQ(splat_alpha(opaque, s->mean_px), kAlphaMax);
}

TEST(RenderDepth, SingleFrontoParallelPlane) {
    const CameraView v = axis_camera();
    const auto f = render_depth(one(disk(Vec3(0.2, 0.1, 2.5), 0.6, 0.01)), v);
    Index covered = 0;
    for (std::size_t i = 0; i < f.depth.depth.size(); ++i) {
        if (!f.depth.valid.data[i]) continue;
        EXPECT_EQ(f.depth.depth.data[i], 2.5);
        ++covered;
    }
    EXPECT_GT(covered, 500u);
}

TEST(RenderDepth, TiltedPlaneMatchesRayPlaneOracle) {
    const CameraView v = axis_camera();
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const Vec3 axis(standard_normal(rng), standard_normal(rng), standard_normal(rng));
        const double angle = 1.2 * uniform_open0(rng);
        const Quat q(Eigen::AngleAxisd(angle, axis.normalized()));
        const Vec3 mean(0.3 * standard_normal(rng), 0.3 * standard_normal(rng), 2.0 + uniform_open0(rng));
        const Gaussian g = disk(mean, 0.5, 0.02, q, 0.3 + 0.6 * uniform_open0(rng));
        const auto f = render_depth(one(g), v);
        Vec3 n = q * Vec3::UnitZ();
        if (n.dot(mean) < 0) n = -n;
        Index covered = 0;
        for (int y = 0; y < v.height; ++y)
            for (int x = 0; x < v.width; ++x) {
                ASSERT_EQ(f.contributors.at(x, y) > 0, f.depth.valid.at(x, y) != 0);
                if (!f.depth.valid.at(x, y)) continue;
                const auto z = oracle::ray_plane_z(v, x, y, n, n.dot(mean));
                ASSERT_TRUE(z);
                EXPECT_NEAR(f.depth.depth.at(x, y), *z, 1e-6);
                ++covered;
            }
        EXPECT_GT(covered, 0u);
    }
}

TEST(RenderDepth, SingleContributorOpacityInvariance) {
    const CameraView v = axis_camera();
    const Quat q(Eigen::AngleAxisd(0.5, Vec3(1, 1, 0).normalized()));
    const Gaussian g = disk(Vec3(0.1, 0, 2.2), 0.5, 0.02, q, 0.9);
    const auto base = render_depth(one(g), v);
    for (double c : {1.0, 0.5, 0.1, 0.02}) {
        Gaussian h = g;
        h.opacity = g.opacity * c;
        const auto f = render_depth(one(h), v);
        Index compared = 0;
        for (std::size_t i = 0; i < f.depth.depth.size(); ++i) {
            if (!f.depth.valid.data[i] || !base.depth.valid.data[i]) continue;
            EXPECT_EQ(f.depth.depth.data[i], base.depth.depth.data[i]);
            ++compared;
        }
        EXPECT_GT(compared, 0u);
    }
}

TEST(RenderDepth, NearOpaquePlaneOccludesFarPlane) {
    const CameraView v = axis_camera();
    GaussianSet s;
    s.gaussians.push_back(disk(Vec3(0, 0, 5), 3.0, 0.05, Quat::Identity(), 0.9));
    s.gaussians.push_back(disk(Vec3(0, 0, 1), 0.6, 0.01, Quat::Identity(), 0.9999));
    const auto f = render(s, v);
    const auto front = *plane_params(s.gaussians[1], v);
    const auto back = *plane_params(s.gaussians[0], v);
    Index overlap = 0;
    Index opaque = 0;
    for (int y = 0; y < v.height; ++y)
        for (int x = 0; x < v.width; ++x) {
            const Vec2 p(x, y);
            const double a1 = splat_alpha(front, p);
            const double a2 = splat_alpha(back, p);
            if (a1 < kAlphaMin || a2 < kAlphaMin) continue;
            ++overlap;
            ASSERT_TRUE(f.depth.valid.at(x, y));
            if (a1 == kAlphaMax) {
                ++opaque;
                EXPECT_NEAR(f.depth.depth.at(x, y), 1.0, 1e-2);
            }
            // Two-term compositing oracle (both planes face the camera: n.ray = 1).
            const double w1 = a1;
            const double w2 = (1.0 - a1) * a2;
            EXPECT_NEAR(f.depth.depth.at(x, y), (w1 * 1.0 + w2 * 5.0) / (w1 + w2), 1e-12);
            EXPECT_EQ(f.contributors.at(x, y), 2);
        }
    EXPECT_GT(overlap, 500u);
    EXPECT_GT(opaque, 4u);

    // Bare alpha weighting lets the far plane pull harder.
    const auto raw = render(s, v, RenderOptions{DepthWeighting::kRaw, false, 16});
    const int c = 32;
    EXPECT_GT(raw.depth.depth.at(c, c), f.depth.depth.at(c, c));
}

TEST(RenderColor, RedOverBlueCompositing) {
    const CameraView v = axis_camera();
    GaussianSet s;
    s.gaussians.push_back(disk(Vec3(0, 0, 3), 0.8, 0.01, Quat::Identity(), 0.7, Vec3(0, 0, 1)));
    s.gaussians.push_back(disk(Vec3(0, 0, 2), 0.05, 0.01, Quat::Identity(), 0.5, Vec3(1, 0, 0)));
    const auto f = render(s, v);
    const auto red = *plane_params(s.gaussians[1], v);
    const auto blue = *plane_params(s.gaussians[0], v);
    for (int y = 28; y < 37; ++y)
        for (int x = 28; x < 37; ++x) {
            const double ar = splat_alpha(red, Vec2(x, y));
            const double ab = splat_alpha(blue, Vec2(x, y));
            const Vec3 expect = ar >= kAlphaMin ? Vec3(ar, 0, (1.0 - ar) * ab) : Vec3(0, 0, ab);
            EXPECT_LE((f.color.at(x, y) - expect).cwiseAbs().maxCoeff(), 1e-12);
        }
    // At the red centre the front alpha is exactly its opacity.
    ASSERT_EQ(red.mean_px, Vec2(32, 32));
    const double ab = splat_alpha(blue, Vec2(32, 32));
    EXPECT_LE((f.color.at(32, 32) - Vec3(0.5, 0, 0.5 * ab)).norm(), 1e-12);
}

TEST(RenderColor, OpaqueRedAndEmpty) {
    const CameraView v = axis_camera();
    const auto img = render_color(one(disk(Vec3(0, 0, 2), 0.3, 0.01, Quat::Identity(), 0.9999, Vec3(1, 0, 0))), v);
    EXPECT_LE((img.at(32, 32) - Vec3(kAlphaMax, 0, 0)).norm(), 1e-12);
    const auto empty = render(GaussianSet{}, v);
    for (const auto& c : empty.color.data) EXPECT_EQ(c, Vec3::Zero());
    EXPECT_EQ(empty.depth.valid_count(), 0u);
    EXPECT_THROW(render_depth(GaussianSet{}, v), Error);
    EXPECT_THROW(render_depth(one(disk(Vec3(0, 0, -2), 0.3, 0.01)), v), Error);
}

TEST(RenderDepth, TranslationEquivariant) {
    const auto cams = synth::orbit_cameras(2, 2.5, Vec3::Zero(), 0.4, 64, 64, 64);
    const PointCloud cube = synth::cube(300, 0.5, 4);
    const GaussianSet set = init_gaussians(cube);
    const Vec3 shift(10.0, -3.0, 7.0);
    GaussianSet moved = set;
    for (auto& g : moved.gaussians) g.mean += shift;
    for (const auto& v : cams) {
        CameraView mv = v;
        mv.t_wc = v.t_wc - v.R_wc * shift;
        const auto a = render_depth(set, v);
        const auto b = render_depth(moved, mv);
        for (std::size_t i = 0; i < a.depth.depth.size(); ++i) {
            if (!a.depth.valid.data[i] || !b.depth.valid.data[i]) continue;
            EXPECT_NEAR(a.depth.depth.data[i], b.depth.depth.data[i], 1e-9);
        }
        EXPECT_GT(a.depth.valid_count(), 100u);
    }
}

TEST(Render, ContributorsIffValidAndTileSizeIndependent) {
    const auto cams = synth::orbit_cameras(1, 2.5, Vec3::Zero(), 0.4, 64, 64, 64);
    const GaussianSet set = init_gaussians(synth::sphere(400, 0.6));
    const auto a = render(set, cams[0]);
    const auto b = render(set, cams[0], RenderOptions{DepthWeighting::kTransmittance, true, 7});
    for (std::size_t i = 0; i < a.depth.depth.size(); ++i) {
        EXPECT_EQ(a.contributors.data[i] > 0, a.depth.valid.data[i] != 0);
        if (a.depth.valid.data[i]) {
            EXPECT_GT(a.depth.depth.data[i], 0.0);
        }
    }
    EXPECT_EQ(a.depth.depth.data, b.depth.depth.data);
    EXPECT_EQ(a.contributors.data, b.contributors.data);
}
