// Copyright Contributors to the lidargs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lidargs/common.hpp"
#include "lidargs/image.hpp"
#include "lidargs/pointcloud.hpp"

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>

namespace lidargs {

/// Pinhole camera (zero skew) with a world-to-camera pose. Camera axes follow
/// the OpenCV convention: x right, y down, z forward. Pixel (u, v) has its
/// centre at integer coordinates.
struct CameraView {
    std::string name = "view";
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.5;
    double cy = 0.5;
    Mat3 R_wc = Mat3::Identity();
    Vec3 t_wc = Vec3::Zero();
    int width = 1;
    int height = 1;

    Mat3 K() const {
        Mat3 k = Mat3::Zero();
        k(0, 0) = fx;
        k(1, 1) = fy;
        k(0, 2) = cx;
        k(1, 2) = cy;
        k(2, 2) = 1.0;
        return k;
    }

    /// K^-1 (u, v, 1): the camera-frame ray through pixel (u, v) with z = 1.
    Vec3 pixel_ray(double u, double v) const { return Vec3((u - cx) / fx, (v - cy) / fy, 1.0); }

    Vec3 to_camera(const Vec3& world) const { return R_wc * world + t_wc; }
    Vec3 center_world() const { return -R_wc.transpose() * t_wc; }

    void validate() const {
        require(width > 0 && height > 0, ErrorCode::kInvalidArgument, name + ": image size must be positive");
        require(fx > 0.0 && fy > 0.0, ErrorCode::kInvalidArgument, name + ": focal lengths must be positive");
        require(cx > 0.0 && cx < width && cy > 0.0 && cy < height, ErrorCode::kInvalidArgument,
                name + ": principal point must lie inside the image");
        require((R_wc * R_wc.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-6 &&
                    std::abs(R_wc.determinant() - 1.0) <= 1e-6,
                ErrorCode::kInvalidArgument, name + ": R_wc is not a proper rotation");
        require(t_wc.allFinite(), ErrorCode::kInvalidArgument, name + ": t_wc is not finite");
    }
};

/// Camera at `eye` looking at `target`; `up` is the approximate world up.
inline CameraView look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width, int height,
                          std::string name = "view") {
    const Vec3 z = (target - eye).normalized();
    Vec3 x = z.cross(-up);
    if (x.norm() < 1e-12) x = z.unitOrthogonal();
    x.normalize();
    const Vec3 y = z.cross(x);
    CameraView v;
    v.name = std::move(name);
    v.R_wc.row(0) = x.transpose();
    v.R_wc.row(1) = y.transpose();
    v.R_wc.row(2) = z.transpose();
    v.t_wc = -v.R_wc * eye;
    v.fx = v.fy = focal;
    v.cx = width / 2.0;
    v.cy = height / 2.0;
    v.width = width;
    v.height = height;
    return v;
}

struct Projection {
    Vec2 pixel;
    double depth = 0.0;
};

/// Pinhole projection; nullopt when the point is at or behind the camera plane.
inline std::optional<Projection> project_point(const CameraView& view, const Vec3& world) {
    const Vec3 p = view.to_camera(world);
    if (!(p.z() > 0.0)) return std::nullopt;
    return Projection{Vec2(view.fx * p.x() / p.z() + view.cx, view.fy * p.y() / p.z() + view.cy), p.z()};
}

/// Per-pixel metric z-depth. Invalid pixels hold 0.
struct DepthMap {
    GrayImage depth;
    Mask valid;

    DepthMap() = default;
    DepthMap(int w, int h) : depth(w, h, 0.0), valid(w, h, 0) {}

    int width() const { return depth.width; }
    int height() const { return depth.height; }
    Index valid_count() const {
        Index n = 0;
        for (auto v : valid.data) n += v ? 1 : 0;
        return n;
    }
    double coverage() const { return valid.empty() ? 0.0 : static_cast<double>(valid_count()) / valid.size(); }
};

struct DepthProjectionParams {
    int splat_radius_px = 1;
    double z_tolerance = 0.05;
};

/// Projects a cloud into a view with z-buffer visibility filtering.
///
/// Pass 1 splats every in-frustum point over its disk (radius in pixels
/// around the rounded projection) into an occlusion buffer holding the
/// minimum z. Pass 2 keeps a point only if its own centre pixel is within
/// z_tolerance of that buffer, and writes it to the disk pixels where it is
/// also within tolerance; each pixel keeps the smallest surviving z.
inline DepthMap lidar_depth_map(const CameraView& view, const PointCloud& cloud,
                                const DepthProjectionParams& params = {}) {
    require(!cloud.empty(), ErrorCode::kInvalidArgument, "cannot project an empty cloud");
    require(params.splat_radius_px >= 0, ErrorCode::kInvalidArgument, "splat radius must be non-negative");
    require(params.z_tolerance >= 0.0, ErrorCode::kInvalidArgument, "z tolerance must be non-negative");
    const int w = view.width;
    const int h = view.height;
    const int r = params.splat_radius_px;
    constexpr double kInf = std::numeric_limits<double>::infinity();

    struct Hit {
        int x;
        int y;
        double z;
    };
    std::vector<Hit> hits;
    hits.reserve(cloud.size());
    for (const auto& p : cloud.positions) {
        const auto proj = project_point(view, p);
        if (!proj) continue;
        const double fx = std::floor(proj->pixel.x() + 0.5);
        const double fy = std::floor(proj->pixel.y() + 0.5);
        if (!(fx >= 0.0 && fx < w && fy >= 0.0 && fy < h)) continue;
        hits.push_back({static_cast<int>(fx), static_cast<int>(fy), proj->depth});
    }

    auto for_disk = [&](const Hit& hit, auto&& fn) {
        for (int dy = -r; dy <= r; ++dy) {
            const int y = hit.y + dy;
            if (y < 0 || y >= h) continue;
            for (int dx = -r; dx <= r; ++dx) {
                if (dx * dx + dy * dy > r * r) continue;
                const int x = hit.x + dx;
                if (x < 0 || x >= w) continue;
                fn(x, y);
            }
        }
    };

    GrayImage occlusion(w, h, kInf);
    for (const auto& hit : hits)
        for_disk(hit, [&](int x, int y) { occlusion.at(x, y) = std::min(occlusion.at(x, y), hit.z); });

    DepthMap out(w, h);
    GrayImage best(w, h, kInf);
    for (const auto& hit : hits) {
        if (hit.z > occlusion.at(hit.x, hit.y) + params.z_tolerance) continue;
        for_disk(hit, [&](int x, int y) {
            if (hit.z <= occlusion.at(x, y) + params.z_tolerance) best.at(x, y) = std::min(best.at(x, y), hit.z);
        });
    }
    for (std::size_t i = 0; i < best.size(); ++i) {
        if (best.data[i] < kInf) {
            out.depth.data[i] = best.data[i];
            out.valid.data[i] = 1;
        }
    }
    return out;
}

/// Depth maps for several views, computed in parallel.
inline std::vector<DepthMap> lidar_depth_maps(std::span<const CameraView> views, const PointCloud& cloud,
                                              const DepthProjectionParams& params = {}) {
    std::vector<DepthMap> out(views.size());
    parallel_for(
        views.size(),
        [&](Index b, Index e) {
            for (Index i = b; i < e; ++i) out[i] = lidar_depth_map(views[i], cloud, params);
        },
        1);
    return out;
}

/// Reads a depth PFM; pixels with finite depth > 0 are valid.
inline DepthMap read_depth_pfm(const std::filesystem::path& path) {
    const GrayImage img = read_pfm_gray(path);
    DepthMap d(img.width, img.height);
    for (std::size_t i = 0; i < img.size(); ++i) {
        if (std::isfinite(img.data[i]) && img.data[i] > 0.0) {
            d.depth.data[i] = img.data[i];
            d.valid.data[i] = 1;
        }
    }
    return d;
}

// ---- camera files -------------------------------------------------------

inline nlohmann::json camera_to_json(const CameraView& v) {
    nlohmann::json j;
    j["name"] = v.name;
    j["width"] = v.width;
    j["height"] = v.height;
    j["fx"] = v.fx;
    j["fy"] = v.fy;
    j["cx"] = v.cx;
    j["cy"] = v.cy;
    j["R_wc"] = {{v.R_wc(0, 0), v.R_wc(0, 1), v.R_wc(0, 2)},
                 {v.R_wc(1, 0), v.R_wc(1, 1), v.R_wc(1, 2)},
                 {v.R_wc(2, 0), v.R_wc(2, 1), v.R_wc(2, 2)}};
    j["t_wc"] = {v.t_wc.x(), v.t_wc.y(), v.t_wc.z()};
    return j;
}

inline CameraView camera_from_json(const nlohmann::json& j) {
    try {
        CameraView v;
        v.name = j.value("name", std::string("view"));
        v.width = j.at("width").get<int>();
        v.height = j.at("height").get<int>();
        v.fx = j.at("fx").get<double>();
        v.fy = j.at("fy").get<double>();
        v.cx = j.at("cx").get<double>();
        v.cy = j.at("cy").get<double>();
        const auto& r = j.at("R_wc");
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) v.R_wc(a, b) = r.at(a).at(b).get<double>();
        const auto& t = j.at("t_wc");
        v.t_wc = Vec3(t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>());
        v.validate();
        return v;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kParse, std::string("bad camera JSON: ") + e.what());
    }
}

inline void save_cameras_json(const std::filesystem::path& path, std::span<const CameraView> views) {
    nlohmann::json j;
    j["cameras"] = nlohmann::json::array();
    for (const auto& v : views) j["cameras"].push_back(camera_to_json(v));
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw Error(ErrorCode::kIo, "cannot write file: " + path.string());
    f << j.dump(2) << "\n";
}

inline std::vector<CameraView> load_cameras_json(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorCode::kIo, "cannot open file: " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
    }
    if (!j.contains("cameras") || !j["cameras"].is_array())
        throw Error(ErrorCode::kParse, path.string() + ": expected a 'cameras' array");
    std::vector<CameraView> out;
    for (const auto& c : j["cameras"]) out.push_back(camera_from_json(c));
    return out;
}

/// COLMAP text model: `cameras.txt` (PINHOLE or SIMPLE_PINHOLE) and
/// `images.txt` (world-to-camera quaternion and translation).
inline std::vector<CameraView> load_cameras_colmap(const std::filesystem::path& cameras_txt,
                                                   const std::filesystem::path& images_txt) {
    struct Intrinsics {
        int w, h;
        double fx, fy, cx, cy;
    };
    std::map<long, Intrinsics> intr;
    {
        std::ifstream f(cameras_txt);
        if (!f) throw Error(ErrorCode::kIo, "cannot open file: " + cameras_txt.string());
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::istringstream ss(line);
            long id;
            std::string model;
            Intrinsics in{};
            if (!(ss >> id >> model >> in.w >> in.h))
                throw Error(ErrorCode::kParse, cameras_txt.string() + ": bad camera line: " + line);
            if (model == "PINHOLE") {
                if (!(ss >> in.fx >> in.fy >> in.cx >> in.cy))
                    throw Error(ErrorCode::kParse, cameras_txt.string() + ": bad PINHOLE params: " + line);
            } else if (model == "SIMPLE_PINHOLE") {
                if (!(ss >> in.fx >> in.cx >> in.cy))
                    throw Error(ErrorCode::kParse, cameras_txt.string() + ": bad SIMPLE_PINHOLE params: " + line);
                in.fy = in.fx;
            } else {
                throw Error(ErrorCode::kParse, cameras_txt.string() + ": unsupported camera model " + model);
            }
            intr[id] = in;
        }
    }
    std::vector<CameraView> out;
    std::ifstream f(images_txt);
    if (!f) throw Error(ErrorCode::kIo, "cannot open file: " + images_txt.string());
    std::string line;
    bool expect_points = false;
    while (std::getline(f, line)) {
        if (!line.empty() && line[0] == '#') continue;
        if (expect_points) {
            expect_points = false;
            continue;
        }
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ss(line);
        long image_id, camera_id;
        double qw, qx, qy, qz, tx, ty, tz;
        std::string name;
        if (!(ss >> image_id >> qw >> qx >> qy >> qz >> tx >> ty >> tz >> camera_id >> name))
            throw Error(ErrorCode::kParse, images_txt.string() + ": bad image line: " + line);
        const auto it = intr.find(camera_id);
        if (it == intr.end())
            throw Error(ErrorCode::kParse, images_txt.string() + ": unknown camera id " + std::to_string(camera_id));
        CameraView v;
        v.name = std::filesystem::path(name).stem().string();
        v.width = it->second.w;
        v.height = it->second.h;
        v.fx = it->second.fx;
        v.fy = it->second.fy;
        v.cx = it->second.cx;
        v.cy = it->second.cy;
        v.R_wc = Quat(qw, qx, qy, qz).normalized().toRotationMatrix();
        v.t_wc = Vec3(tx, ty, tz);
        v.validate();
        out.push_back(v);
        expect_points = true;
    }
    return out;
}

}  // namespace lidargs
