// Copyright Contributors to the lidargs Project
// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <fstream>

using namespace lidargs;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = -1;
    std::string err;
};

CliResult cli(const std::string& args, const fs::path& dir) {
    const fs::path err = dir / "stderr.txt";
    const std::string cmd = std::string(LIDARGS_CLI) + " " + args + " 2> " + err.string() + " > /dev/null";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = fs::exists(err) ? oracle::file_bytes(err) : "";
    return r;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(oracle::file_bytes(p)); }

CameraView facing_plane(const std::string& name, bool away) {
    CameraView v;
    v.name = name;
    v.fx = v.fy = 48;
    v.cx = v.cy = 24;
    v.width = v.height = 48;
    if (away) v.R_wc = Eigen::AngleAxisd(M_PI, Vec3::UnitY()).toRotationMatrix();
    return v;
}

}  // namespace

TEST(Cli, SampleBudgetAndReproducibility) {
    const auto dir = oracle::scratch_dir("cli_sample");
    ASSERT_EQ(cli("synth --scene textured-cube --points 3000 --views 2 -o " + (dir / "scene").string(), dir).code, 0);
    const std::string cloud = (dir / "scene" / "cloud.ply").string();
    const auto n = load_pointcloud(cloud).size();
    ASSERT_EQ(cli("sample --cloud " + cloud + " --budget 400 --seed 5 -o " + (dir / "a").string(), dir).code, 0);
    ASSERT_EQ(cli("sample --seed 5 -o " + (dir / "b").string() + " --cloud " + cloud + " --budget 400", dir).code, 0);
    EXPECT_EQ(ply::read_vertices(dir / "a" / "sampled.ply").count, 400u);
    const auto scores = ply::read_vertices(dir / "a" / "scores.ply");
    EXPECT_EQ(scores.count, n);
    ASSERT_NE(scores.find("prob"), nullptr);
    double total = 0.0;
    for (double p : *scores.find("prob")) total += p;
    EXPECT_NEAR(total, 1.0, 1e-4);
    for (const char* f : {"sampled.ply", "scores.ply", "stats.json"})
        EXPECT_EQ(oracle::file_bytes(dir / "a" / f), oracle::file_bytes(dir / "b" / f)) << f;
    const auto stats = read_json(dir / "a" / "stats.json");
    EXPECT_EQ(stats["N"], n);
    EXPECT_EQ(stats["M"], 400);
    EXPECT_TRUE(fs::exists(dir / "a" / "timing.json"));
    EXPECT_TRUE(fs::exists(dir / "a" / "effective_config.json"));
}

TEST(Cli, BudgetAboveCloudSizeIsAnError) {
    const auto dir = oracle::scratch_dir("cli_budget");
    PointCloud c = oracle::random_cloud(100, 3);
    save_pointcloud(dir / "c.ply", c);
    const CliResult r = cli("sample --cloud " + (dir / "c.ply").string() + " --budget 101 -o " + (dir / "o").string(), dir);
    EXPECT_EQ(r.code, 1);
    const auto j = nlohmann::json::parse(r.err.substr(r.err.find('{')));
    EXPECT_EQ(j["error"]["command"], "sample");
    EXPECT_NE(j["error"]["message"].get<std::string>().find("exceeds"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir / "o" / "sampled.ply"));
    EXPECT_EQ(cli("sample --no-such-flag", dir).code, 2);
}

TEST(Cli, ColorlessAlphaOneMatchesDefault) {
    const auto dir = oracle::scratch_dir("cli_colorless");
    save_pointcloud(dir / "c.ply", oracle::random_cloud(800, 4, false));
    const std::string base = "sample --cloud " + (dir / "c.ply").string() + " --budget 100 --seed 3 -o ";
    ASSERT_EQ(cli(base + (dir / "d").string(), dir).code, 0);
    ASSERT_EQ(cli(base + (dir / "a").string() + " --alpha 1", dir).code, 0);
    EXPECT_EQ(oracle::file_bytes(dir / "d" / "sampled.ply"), oracle::file_bytes(dir / "a" / "sampled.ply"));
    EXPECT_EQ(oracle::file_bytes(dir / "d" / "scores.ply"), oracle::file_bytes(dir / "a" / "scores.ply"));
}

TEST(Cli, DepthmapsMatchLibraryAndWarnOnEmptyView) {
    const auto dir = oracle::scratch_dir("cli_depth");
    const PointCloud plane = synth::plane(150, 1.5, Vec3(0, 0, 2));
    save_pointcloud(dir / "plane.ply", plane);
    const std::vector<CameraView> cams{facing_plane("front", false), facing_plane("back", true)};
    save_cameras_json(dir / "cams.json", cams);
    const CliResult r = cli("depthmaps --cloud " + (dir / "plane.ply").string() + " --cameras " +
                          (dir / "cams.json").string() + " -o " + (dir / "o").string(),
                      dir);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.err.find("back"), std::string::npos);
    const PointCloud stored = load_pointcloud(dir / "plane.ply");
    const DepthMap lib = lidar_depth_map(cams[0], stored);
    const DepthMap front = read_depth_pfm(dir / "o" / "depth" / "front.pfm");
    EXPECT_EQ(front.valid.data, lib.valid.data);
    for (std::size_t i = 0; i < lib.depth.size(); ++i)
        EXPECT_EQ(front.depth.data[i], static_cast<double>(static_cast<float>(lib.depth.data[i])));
    // The plane fills the whole 48x48 frame at z = 2 (half-width 1.5 > 2 * 24 / 48).
    EXPECT_EQ(lib.valid_count(), 48u * 48u);
    EXPECT_EQ(read_depth_pfm(dir / "o" / "depth" / "back.pfm").valid_count(), 0u);
    const auto manifest = read_json(dir / "o" / "manifest.json");
    ASSERT_EQ(manifest["views"].size(), 2u);
    EXPECT_EQ(manifest["views"][0]["coverage"], 1.0);
    EXPECT_EQ(manifest["views"][1]["coverage"], 0.0);

    save_cameras_json(dir / "away.json", std::vector<CameraView>{cams[1]});
    const CliResult bad = cli("depthmaps --cloud " + (dir / "plane.ply").string() + " --cameras " +
                            (dir / "away.json").string() + " -o " + (dir / "o2").string(),
                        dir);
    EXPECT_EQ(bad.code, 1);
    EXPECT_NE(bad.err.find("back"), std::string::npos);
}

TEST(Cli, RenderMatchesRayPlaneOracle) {
    const auto dir = oracle::scratch_dir("cli_render");
    Gaussian g;
    g.mean = Vec3(0.1, -0.05, 2.0);
    g.rotation = Quat(Eigen::AngleAxisd(0.6, Vec3(1, 0.5, 0).normalized()));
    g.scale = Vec3(0.6, 0.4, 0.01);
    g.opacity = 0.7;
    g.color = Vec3(0.2, 0.6, 0.9);
    GaussianSet set;
    set.gaussians.push_back(g);
    save_splat_ply(dir / "one.ply", set);
    const CameraView cam = facing_plane("view_0", false);
    save_cameras_json(dir / "cams.json", std::vector<CameraView>{cam});
    const CliResult r = cli("render --checkpoint " + (dir / "one.ply").string() + " --cameras " +
                          (dir / "cams.json").string() + " -o " + (dir / "o").string(),
                      dir);
    ASSERT_EQ(r.code, 0) << r.err;
    const DepthMap d = read_depth_pfm(dir / "o" / "depth" / "view_0.pfm");
    const Gaussian stored = load_splat_ply(dir / "one.ply").gaussians[0];
    Vec3 n = stored.rotation_matrix().col(2);
    if (n.dot(stored.mean) < 0) n = -n;
    Index checked = 0;
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) {
            if (!d.valid.at(x, y)) continue;
            const auto z = oracle::ray_plane_z(cam, x, y, n, n.dot(stored.mean));
            ASSERT_TRUE(z);
            EXPECT_NEAR(d.depth.at(x, y), *z, 1e-6);
            ++checked;
        }
    EXPECT_GT(checked, 200u);
    EXPECT_TRUE(fs::exists(dir / "o" / "rgb" / "view_0.png"));
}

TEST(Cli, EvalSelfAndTrainToyZeroIterations) {
    const auto dir = oracle::scratch_dir("cli_train");
    const std::string scene = (dir / "scene").string();
    ASSERT_EQ(cli("synth --scene cube --points 400 --views 2 --width 32 --height 32 --focal 32 -o " + scene, dir).code, 0);
    const CliResult e = cli("eval --pred " + scene + "/images --gt " + scene + "/images -o " + (dir / "ev").string(), dir);
    ASSERT_EQ(e.code, 0) << e.err;
    const auto m = read_json(dir / "ev" / "metrics.json");
    const auto csv = oracle::file_bytes(dir / "ev" / "metrics.csv");
    EXPECT_NE(csv.find("inf"), std::string::npos);
    ASSERT_EQ(m["views"].size(), 2u);
    for (const auto& row : m["views"]) {
        EXPECT_NEAR(row["ssim"].get<double>(), 1.0, 1e-12);
        EXPECT_EQ(row["psnr"], "inf");
    }

    const std::string args = "train-toy --cloud " + scene + "/cloud.ply --cameras " + scene + "/cameras.json --images " +
                             scene + "/images --budget 100 --iters 0 --seed 11 -o ";
    const CliResult t = cli(args + (dir / "t0").string(), dir);
    ASSERT_EQ(t.code, 0) << t.err;
    EXPECT_EQ(oracle::file_bytes(dir / "t0" / "init.ply"), oracle::file_bytes(dir / "t0" / "final.ply"));
    EXPECT_EQ(ply::read_vertices(dir / "t0" / "init.ply").count, 100u);

    // Feeding the effective config back reproduces the run.
    ASSERT_EQ(cli(args + (dir / "t1").string() + " -c " + (dir / "t0" / "effective_config.json").string(), dir).code,
              0);
    EXPECT_EQ(oracle::file_bytes(dir / "t0" / "final.ply"), oracle::file_bytes(dir / "t1" / "final.ply"));
    auto c0 = read_json(dir / "t0" / "effective_config.json");
    auto c1 = read_json(dir / "t1" / "effective_config.json");
    c0["paths"]["output"] = c1["paths"]["output"];
    EXPECT_EQ(c0, c1);
}
