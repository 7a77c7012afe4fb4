// Copyright Contributors to the lidargs Project
// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace lidargs;
namespace fs = std::filesystem;

namespace {

fs::path write_file(const fs::path& dir, const std::string& name, const std::string& text) {
    const fs::path p = dir / name;
    std::ofstream(p, std::ios::binary) << text;
    return p;
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an error";
    return ErrorCode::kContract;
}

}  // namespace

TEST(Ply, MinimalAsciiXyz) {
    const auto dir = oracle::scratch_dir("ply_min");
    const auto p = write_file(dir, "a.ply",
                              "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\n"
                              "property float z\nend_header\n0 0 0\n1 0 0\n0 1 0.5\n");
    const PointCloud c = load_pointcloud(p);
    EXPECT_EQ(c.size(), 3u);
    EXPECT_FALSE(c.colors.has_value());
    EXPECT_FALSE(c.normals.has_value());
    EXPECT_EQ(c.positions[2], Vec3(0, 1, 0.5));
}

TEST(Ply, EightBitColorsAndRenormalisedNormals) {
    const auto dir = oracle::scratch_dir("ply_col");
    const auto p = write_file(dir, "a.ply",
                              "ply\nformat ascii 1.0\ncomment test\nelement vertex 1\nproperty float x\n"
                              "property float y\nproperty float z\nproperty float nx\nproperty float ny\n"
                              "property float nz\nproperty uchar red\nproperty uchar green\nproperty uchar blue\n"
                              "end_header\n1 2 3 2 0 0 255 0 0\n");
    const PointCloud c = load_pointcloud(p);
    ASSERT_TRUE(c.colors && c.normals);
    EXPECT_EQ((*c.colors)[0], Vec3(1, 0, 0));
    EXPECT_EQ((*c.normals)[0], Vec3(1, 0, 0));
}

TEST(Ply, SkipsFaceElementsWithLists) {
    const auto dir = oracle::scratch_dir("ply_face");
    const auto p = write_file(dir, "a.ply",
                              "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\n"
                              "property float z\nelement face 1\nproperty list uchar int vertex_indices\n"
                              "end_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n");
    EXPECT_EQ(load_pointcloud(p).size(), 3u);
}

TEST(Ply, Errors) {
    const auto dir = oracle::scratch_dir("ply_err");
    EXPECT_EQ(code_of([&] { load_pointcloud(dir / "missing.ply"); }), ErrorCode::kIo);
    const auto be = write_file(dir, "be.ply",
                               "ply\nformat binary_big_endian 1.0\nelement vertex 1\nproperty float x\n"
                               "property float y\nproperty float z\nend_header\n");
    try {
        load_pointcloud(be);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kParse);
        EXPECT_NE(std::string(e.what()).find("endian"), std::string::npos);
    }
    const auto bad = write_file(dir, "bad.ply", "ply\nformat ascii 1.0\nelement vertex two\nend_header\n");
    EXPECT_EQ(code_of([&] { load_pointcloud(bad); }), ErrorCode::kParse);
    const auto nan = write_file(dir, "nan.ply",
                                "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
                                "property float z\nend_header\n0 0 0\n1 nan 0\n");
    try {
        load_pointcloud(nan);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kParse);
        EXPECT_NE(std::string(e.what()).find("vertex 1"), std::string::npos);
    }
    const auto noz = write_file(dir, "noz.ply",
                                "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
                                "end_header\n0 0\n");
    EXPECT_EQ(code_of([&] { load_pointcloud(noz); }), ErrorCode::kParse);
    const auto trunc = write_file(dir, "trunc.ply",
                                  "ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty float x\n"
                                  "property float y\nproperty float z\nend_header\nabcd");
    EXPECT_EQ(code_of([&] { load_pointcloud(trunc); }), ErrorCode::kParse);
}

TEST(Ply, RoundTripBinaryAndAscii) {
    const auto dir = oracle::scratch_dir("ply_rt");
    PointCloud c = oracle::random_cloud(257, 4);
    for (auto& col : *c.colors) col = (col * 255.0).array().round() / 255.0;
    c.normals.emplace();
    for (const auto& p : c.positions) c.normals->push_back(p.normalized());
    for (auto fmt : {ply::Format::kBinaryLittleEndian, ply::Format::kAscii}) {
        const auto path = dir / (fmt == ply::Format::kAscii ? "a.ply" : "b.ply");
        save_pointcloud(path, c, {{"score", ply::Type::kFloat32, std::vector<double>(c.size(), 0.25)}}, fmt);
        const PointCloud r = load_pointcloud(path);
        ASSERT_EQ(r.size(), c.size());
        for (Index i = 0; i < c.size(); ++i) {
            for (int a = 0; a < 3; ++a) {
                EXPECT_EQ(r.positions[i][a], static_cast<double>(static_cast<float>(c.positions[i][a])));
                EXPECT_EQ((*r.colors)[i][a], (*c.colors)[i][a]);
            }
            EXPECT_NEAR((*r.normals)[i].norm(), 1.0, 1e-6);
        }
        const auto table = ply::read_vertices(path);
        ASSERT_NE(table.find("score"), nullptr);
        EXPECT_EQ((*table.find("score"))[7], 0.25);
    }
}

TEST(Ply, ZeroNormals) {
    const auto dir = oracle::scratch_dir("ply_zero");
    const auto all = write_file(dir, "all.ply",
                                "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
                                "property float z\nproperty float nx\nproperty float ny\nproperty float nz\n"
                                "end_header\n0 0 0 0 0 0\n1 0 0 0 0 0\n");
    EXPECT_FALSE(load_pointcloud(all).normals.has_value());
    const auto some = write_file(dir, "some.ply",
                                 "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
                                 "property float z\nproperty float nx\nproperty float ny\nproperty float nz\n"
                                 "end_header\n0 0 0 0 0 1\n1 0 0 0 0 0\n");
    EXPECT_EQ(code_of([&] { load_pointcloud(some); }), ErrorCode::kParse);
}
