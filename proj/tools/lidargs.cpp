// Copyright Contributors to the lidargs Project
// SPDX-License-Identifier: Apache-2.0

#include "lidargs/lidargs.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace lidargs;

namespace {

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool verbose = false;
};

PipelineConfig resolve_config(const Common& c) {
    nlohmann::json j = nlohmann::json::object();
    if (!c.config_path.empty()) {
        std::ifstream f(c.config_path);
        if (!f) throw Error(ErrorCode::kIo, "cannot open config: " + c.config_path);
        try {
            f >> j;
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::kParse, c.config_path + ": " + e.what());
        }
    }
    if (c.seed) j["seed"] = *c.seed;
    if (!c.out.empty()) j["paths"]["output"] = c.out;
    return config_from_json(j);
}

void write_text(const fs::path& path, const std::string& text) { detail::write_bytes(path, text); }

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

void emit_effective_config(const PipelineConfig& cfg) {
    write_json(fs::path(cfg.paths.output) / "effective_config.json", config_to_json(cfg));
}

const std::string& need(const std::string& value, const char* what) {
    if (value.empty()) throw Error(ErrorCode::kInvalidArgument, std::string("missing required input: ") + what);
    return value;
}

std::vector<CameraView> load_cameras(const std::string& path) {
    const fs::path p(path);
    if (fs::is_directory(p)) return load_cameras_colmap(p / "cameras.txt", p / "images.txt");
    return load_cameras_json(p);
}

/// Image for view `name` inside `dir`, as PNG or PFM.
RgbImage load_view_image(const fs::path& dir, const std::string& name) {
    for (const char* ext : {".png", ".pfm"}) {
        const fs::path p = dir / (name + ext);
        if (fs::exists(p)) return read_rgb(p);
    }
    throw Error(ErrorCode::kIo, "no image for view '" + name + "' in " + dir.string());
}

nlohmann::json histogram(std::span<const double> values, int bins) {
    std::vector<Index> counts(static_cast<std::size_t>(bins), 0);
    for (double v : values) {
        const int b = std::clamp(static_cast<int>(v * bins), 0, bins - 1);
        ++counts[static_cast<std::size_t>(b)];
    }
    return {{"range", {0.0, 1.0}}, {"counts", counts}};
}

std::string format_metric(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream s;
    s.precision(10);
    s << v;
    return s.str();
}

nlohmann::json metric_json(double v) {
    if (std::isinf(v)) return format_metric(v);
    return v;
}

// ---------------------------------------------------------------------------

struct SampleArgs {
    std::string cloud;
    std::optional<Index> budget;
    std::optional<double> alpha;
};

void cmd_sample(const Common& common, const SampleArgs& a) {
    PipelineConfig cfg = resolve_config(common);
    if (!a.cloud.empty()) cfg.paths.cloud = a.cloud;
    if (a.budget) cfg.allocation.budget_M = *a.budget;
    if (a.alpha) {
        cfg.allocation.alpha = *a.alpha;
        cfg.allocation.beta = 1.0 - *a.alpha;
    }
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const PointCloud cloud = load_pointcloud(need(cfg.paths.cloud, "cloud"));
    const Index n = cloud.size();
    const Index m = cfg.allocation.budget_M;
    if (m > n)
        throw Error(ErrorCode::kInvalidArgument,
                    "budget M = " + std::to_string(m) + " exceeds the cloud size N = " + std::to_string(n));
    require(n > cfg.allocation.k, ErrorCode::kDegenerate,
            "cloud has " + std::to_string(n) + " points, need more than k = " + std::to_string(cfg.allocation.k));
    const NeighborIndex index(cloud.positions, cfg.allocation.k);
    const ComplexityField field = compute_complexity(cloud, index, cfg.allocation);
    const PointCloud sampled = sample_budget(cloud, field.probabilities, m, cfg.allocation.seed);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const fs::path out(cfg.paths.output);
    save_pointcloud(out / "sampled.ply", sampled);
    std::vector<double> tex = field.has_texture() ? field.texture : std::vector<double>(n, 0.0);
    save_pointcloud(out / "scores.ply", cloud,
                    {{"curvature", ply::Type::kFloat32, field.curvature},
                     {"texture", ply::Type::kFloat32, tex},
                     {"prob", ply::Type::kFloat32, field.probabilities}});
    nlohmann::json stats;
    stats["N"] = n;
    stats["M"] = m;
    stats["k"] = cfg.allocation.k;
    stats["alpha"] = cfg.allocation.alpha;
    stats["beta"] = cfg.allocation.beta;
    stats["has_texture"] = field.has_texture();
    stats["curvature_hist"] = histogram(field.curvature_norm, 20);
    if (field.has_texture()) stats["texture_hist"] = histogram(field.texture_norm, 20);
    write_json(out / "stats.json", stats);
    // Wall-clock figures live apart from the reproducible outputs.
    write_json(out / "timing.json", {{"runtime_s", seconds}});
    emit_effective_config(cfg);
}

struct NormalsArgs {
    std::string cloud;
    Index k = 16;
    std::vector<double> viewpoint;
};

void cmd_normals(const Common& common, const NormalsArgs& a) {
    PipelineConfig cfg = resolve_config(common);
    if (!a.cloud.empty()) cfg.paths.cloud = a.cloud;
    const PointCloud cloud = load_pointcloud(need(cfg.paths.cloud, "cloud"));
    NormalOrientation orient;
    if (!a.viewpoint.empty()) {
        require(a.viewpoint.size() == 3, ErrorCode::kInvalidArgument, "viewpoint needs three coordinates");
        orient.viewpoint = Vec3(a.viewpoint[0], a.viewpoint[1], a.viewpoint[2]);
    }
    NormalEstimateStats stats;
    const PointCloud out = estimate_point_normals(cloud, a.k, orient, &stats);
    save_pointcloud(fs::path(cfg.paths.output) / "normals.ply", out);
    write_json(fs::path(cfg.paths.output) / "normals_stats.json",
               {{"N", cloud.size()}, {"k", a.k}, {"degenerate", stats.degenerate}});
    emit_effective_config(cfg);
}

struct DepthArgs {
    std::string cloud;
    std::string cameras;
};

void cmd_depthmaps(const Common& common, const DepthArgs& a) {
    PipelineConfig cfg = resolve_config(common);
    if (!a.cloud.empty()) cfg.paths.cloud = a.cloud;
    if (!a.cameras.empty()) cfg.paths.cameras = a.cameras;
    const PointCloud cloud = load_pointcloud(need(cfg.paths.cloud, "cloud"));
    const auto views = load_cameras(need(cfg.paths.cameras, "cameras"));
    require(!views.empty(), ErrorCode::kInvalidArgument, "camera file lists no views");
    const auto maps = lidar_depth_maps(views, cloud, cfg.depth);
    const fs::path out(cfg.paths.output);
    nlohmann::json manifest;
    manifest["views"] = nlohmann::json::array();
    std::vector<std::string> empty;
    for (Index i = 0; i < views.size(); ++i) {
        const auto& v = views[i];
        if (maps[i].valid_count() == 0) {
            logger()->warn("view '{}' covers no LiDAR point", v.name);
            empty.push_back(v.name);
        }
        write_pfm(out / "depth" / (v.name + ".pfm"), maps[i].depth);
        write_png(out / "depth" / (v.name + "_mask.png"), maps[i].valid);
        manifest["views"].push_back({{"name", v.name},
                                     {"depth", "depth/" + v.name + ".pfm"},
                                     {"mask", "depth/" + v.name + "_mask.png"},
                                     {"valid_pixels", maps[i].valid_count()},
                                     {"coverage", maps[i].coverage()}});
    }
    if (empty.size() == views.size()) {
        std::string names;
        for (const auto& e : empty) names += (names.empty() ? "" : ", ") + e;
        throw Error(ErrorCode::kDegenerate, "no view covers any LiDAR point (views: " + names + ")");
    }
    write_json(out / "manifest.json", manifest);
    emit_effective_config(cfg);
}

struct RenderArgs {
    std::string checkpoint;
    std::string cameras;
    bool raw = false;
};

void cmd_render(const Common& common, const RenderArgs& a) {
    PipelineConfig cfg = resolve_config(common);
    if (!a.checkpoint.empty()) cfg.paths.checkpoint = a.checkpoint;
    if (!a.cameras.empty()) cfg.paths.cameras = a.cameras;
    if (a.raw) cfg.train.weighting = DepthWeighting::kRaw;
    const GaussianSet set = load_splat_ply(need(cfg.paths.checkpoint, "checkpoint"));
    const auto views = load_cameras(need(cfg.paths.cameras, "cameras"));
    const fs::path out(cfg.paths.output);
    nlohmann::json manifest;
    manifest["views"] = nlohmann::json::array();
    for (const auto& v : views) {
        const RenderedFrame f = render(set, v, RenderOptions{cfg.train.weighting, true, 16});
        write_pfm(out / "depth" / (v.name + ".pfm"), f.depth.depth);
        write_png(out / "depth" / (v.name + "_mask.png"), f.depth.valid);
        write_png(out / "rgb" / (v.name + ".png"), f.color);
        write_pfm(out / "rgb" / (v.name + ".pfm"), f.color);
        manifest["views"].push_back({{"name", v.name},
                                     {"valid_pixels", f.depth.valid_count()},
                                     {"culled", f.diagnostics.culled},
                                     {"tiny_denominator", f.diagnostics.tiny_denominator}});
    }
    write_json(out / "manifest.json", manifest);
    emit_effective_config(cfg);
}

struct TrainArgs {
    std::string cloud;
    std::string cameras;
    std::string images;
    std::string depth;
    std::optional<std::int64_t> iters;
    std::optional<Index> budget;
    std::optional<std::string> gate;
};

void cmd_train_toy(const Common& common, const TrainArgs& a) {
    PipelineConfig cfg = resolve_config(common);
    if (!a.cloud.empty()) cfg.paths.cloud = a.cloud;
    if (!a.cameras.empty()) cfg.paths.cameras = a.cameras;
    if (!a.images.empty()) cfg.paths.images = a.images;
    if (!a.depth.empty()) cfg.paths.depth = a.depth;
    if (a.iters) cfg.train.total_iters = *a.iters;
    if (a.budget) cfg.allocation.budget_M = *a.budget;
    if (a.gate) cfg.train.gate = parse_gate_mode(*a.gate);
    cfg.validate();

    const PointCloud cloud = load_pointcloud(need(cfg.paths.cloud, "cloud"));
    const auto cams = load_cameras(need(cfg.paths.cameras, "cameras"));
    const fs::path images(need(cfg.paths.images, "images"));
    std::vector<TrainView> views;
    for (const auto& cam : cams) {
        DepthMap lidar = cfg.paths.depth.empty() ? lidar_depth_map(cam, cloud, cfg.depth)
                                                 : read_depth_pfm(fs::path(cfg.paths.depth) / (cam.name + ".pfm"));
        views.push_back(make_train_view(cam, load_view_image(images, cam.name), std::move(lidar)));
    }

    PointCloud init_cloud = cloud;
    const Index m = std::min(cfg.allocation.budget_M, cloud.size());
    if (m < cloud.size()) {
        require(cloud.size() > cfg.allocation.k, ErrorCode::kDegenerate, "cloud too small for the allocation k");
        const NeighborIndex index(cloud.positions, cfg.allocation.k);
        const ComplexityField field = compute_complexity(cloud, index, cfg.allocation);
        init_cloud = sample_budget(cloud, field.probabilities, m, cfg.allocation.seed);
    } else {
        logger()->info("train-toy: budget {} covers the whole cloud of {} points", cfg.allocation.budget_M,
                       cloud.size());
    }

    TrainState state = make_train_state(init_gaussians(init_cloud), cfg.train);
    const fs::path out(cfg.paths.output);
    save_checkpoint(out / "init", state);
    std::string csv = "iteration,loss,gaussians,splits,pruned\n";
    state = train(state, views, cfg.train, [&](const TrainState& s, const StepRecord& r, const DensifyReport* d) {
        csv += std::to_string(r.t) + "," + format_metric(r.loss) + "," + std::to_string(r.gaussians) + "," +
               std::to_string(d ? d->split_ids.size() : 0) + "," + std::to_string(d ? d->pruned : 0) + "\n";
        if (cfg.train.checkpoint_interval > 0 && s.t % cfg.train.checkpoint_interval == 0 &&
            s.t < s.total_iters) {
            std::ostringstream name;
            name << "ckpt_" << std::setw(6) << std::setfill('0') << s.t;
            save_checkpoint(out / name.str(), s);
        }
    });
    save_checkpoint(out / "final", state);
    write_text(out / "loss.csv", csv);
    emit_effective_config(cfg);
}

struct EvalArgs {
    std::string pred;
    std::string gt;
    std::string pred_depth;
    std::string gt_depth;
};

void cmd_eval(const Common& common, const EvalArgs& a) {
    PipelineConfig cfg = resolve_config(common);
    const fs::path pred(need(a.pred, "pred"));
    const fs::path gt(need(a.gt, "gt"));
    std::vector<std::pair<fs::path, fs::path>> pairs;
    if (fs::is_directory(gt)) {
        std::vector<fs::path> names;
        for (const auto& e : fs::directory_iterator(gt)) {
            const auto ext = e.path().extension();
            if (e.is_regular_file() && (ext == ".png" || ext == ".pfm")) names.push_back(e.path().filename());
        }
        std::sort(names.begin(), names.end());
        for (const auto& n : names) {
            if (n.string().ends_with("_mask.png")) continue;
            const fs::path p = fs::is_directory(pred) ? pred / n : pred;
            if (!fs::exists(p)) throw Error(ErrorCode::kIo, "eval: no prediction for " + n.string());
            pairs.emplace_back(p, gt / n);
        }
    } else {
        pairs.emplace_back(pred, gt);
    }
    require(!pairs.empty(), ErrorCode::kInvalidArgument, "eval: no images found in " + gt.string());

    std::string csv = "view,psnr,ssim,depth_loss\n";
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [p, g] : pairs) {
        const std::string view = g.stem().string();
        const RgbImage ip = read_rgb(p);
        const RgbImage ig = read_rgb(g);
        if (!ip.same_shape(ig)) throw Error(ErrorCode::kInvalidArgument, "eval: size mismatch for view '" + view + "'");
        const double ps = psnr(ip, ig);
        const double ss = ssim(ip, ig);
        std::optional<double> dl;
        if (!a.pred_depth.empty() && !a.gt_depth.empty()) {
            const DepthMap dp = read_depth_pfm(fs::path(a.pred_depth) / (view + ".pfm"));
            const DepthMap dg = read_depth_pfm(fs::path(a.gt_depth) / (view + ".pfm"));
            const ConfidenceMap conf =
                dg.valid_count() ? confidence_weights(ig, dg.valid)
                                 : ConfidenceMap{GrayImage(ig.width, ig.height, 0.0), dg.valid};
            dl = depth_loss(dg, dp, conf);
        }
        csv += view + "," + format_metric(ps) + "," + format_metric(ss) + "," + (dl ? format_metric(*dl) : "") + "\n";
        nlohmann::json row{{"view", view}, {"psnr", metric_json(ps)}, {"ssim", ss}};
        row["depth_loss"] = dl ? nlohmann::json(*dl) : nlohmann::json(nullptr);
        rows.push_back(row);
    }
    const fs::path out(cfg.paths.output);
    write_text(out / "metrics.csv", csv);
    write_json(out / "metrics.json", {{"views", rows}});
    emit_effective_config(cfg);
}

struct SynthArgs {
    std::string scene = "cube";
    Index points = 6000;
    Index views = 4;
    int width = 64;
    int height = 64;
    double focal = 64.0;
    double distance = 3.0;
};

void cmd_synth(const Common& common, const SynthArgs& a) {
    PipelineConfig cfg = resolve_config(common);
    const std::uint64_t seed = cfg.synth_seed();
    PointCloud cloud;
    std::vector<CameraView> cams;
    const auto side = static_cast<Index>(std::max(2.0, std::round(std::sqrt(static_cast<double>(a.points)))));
    if (a.scene == "plane") {
        cloud = synth::plane(side, 1.5, Vec3(0, 0, 2), Vec3::UnitZ(), Vec3::Constant(0.5));
        for (Index i = 0; i < a.views; ++i) {
            const double shift = 0.2 * static_cast<double>(i);
            cams.push_back(look_at(Vec3(shift, 0, 0), Vec3(shift, 0, 2), -Vec3::UnitY(), a.focal, a.width, a.height,
                                   "view_" + std::to_string(i)));
        }
    } else if (a.scene == "cube" || a.scene == "textured-cube") {
        cloud = synth::cube(a.points, 0.5, seed, a.scene == "cube" ? synth::Texture::kNone : synth::Texture::kNoise);
        cams = synth::orbit_cameras(a.views, a.distance, Vec3::Zero(), 0.5, a.focal, a.width, a.height);
    } else if (a.scene == "sphere") {
        cloud = synth::sphere(a.points, 0.5);
        cams = synth::orbit_cameras(a.views, a.distance, Vec3::Zero(), 0.5, a.focal, a.width, a.height);
    } else {
        throw Error(ErrorCode::kInvalidArgument, "unknown scene '" + a.scene + "'");
    }
    const fs::path out(cfg.paths.output);
    save_pointcloud(out / "cloud.ply", cloud);
    save_cameras_json(out / "cameras.json", cams);
    // Render from the stored cloud so images match what later commands read.
    const PointCloud stored = load_pointcloud(out / "cloud.ply");
    const auto images = synth::reference_images(stored, cams);
    for (Index i = 0; i < cams.size(); ++i) write_png(out / "images" / (cams[i].name + ".png"), images[i]);
    emit_effective_config(cfg);
}

void report_error(std::string_view command, std::string_view code, const std::string& message) {
    nlohmann::json j{{"error", {{"command", command}, {"code", code}, {"message", message}}}};
    std::cerr << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LiDAR-conditioned Gaussian splatting toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    Common common;
    app.add_option("-c,--config", common.config_path, "JSON configuration file");
    app.add_option("--seed", common.seed, "Top-level seed (overrides the config)");
    app.add_option("-o,--out", common.out, "Output directory (overrides the config)");
    app.add_flag("-v,--verbose", common.verbose, "Log progress to stderr");

    SampleArgs sample;
    auto* s = app.add_subcommand("sample", "Score a cloud and draw the Gaussian budget");
    s->add_option("--cloud", sample.cloud, "Input PLY");
    s->add_option("--budget", sample.budget, "Number of points M to keep");
    s->add_option("--alpha", sample.alpha, "Curvature weight (texture weight is 1 - alpha)");

    NormalsArgs normals;
    auto* n = app.add_subcommand("normals", "Estimate PCA normals for a cloud");
    n->add_option("--cloud", normals.cloud, "Input PLY");
    n->add_option("-k", normals.k, "Neighbourhood size");
    n->add_option("--viewpoint", normals.viewpoint, "Orient normals towards x y z")->expected(3);

    DepthArgs depth;
    auto* d = app.add_subcommand("depthmaps", "Project the cloud into per-view depth maps");
    d->add_option("--cloud", depth.cloud, "Input PLY");
    d->add_option("--cameras", depth.cameras, "cameras.json or a COLMAP text model directory");

    RenderArgs render_args;
    auto* r = app.add_subcommand("render", "Render depth and colour from a splat checkpoint");
    r->add_option("--checkpoint", render_args.checkpoint, "Splat PLY");
    r->add_option("--cameras", render_args.cameras, "cameras.json or a COLMAP text model directory");
    r->add_flag("--raw-alpha", render_args.raw, "Weight depth by bare alpha instead of alpha * transmittance");

    TrainArgs train_args;
    auto* t = app.add_subcommand("train-toy", "Desk-scale training with finite-difference gradients");
    t->add_option("--cloud", train_args.cloud, "LiDAR PLY");
    t->add_option("--cameras", train_args.cameras, "cameras.json or a COLMAP text model directory");
    t->add_option("--images", train_args.images, "Directory with <view>.png or <view>.pfm");
    t->add_option("--depth", train_args.depth, "Directory with <view>.pfm depth maps (default: project the cloud)");
    t->add_option("--iters", train_args.iters, "Total iterations T");
    t->add_option("--budget", train_args.budget, "Initial Gaussian budget M");
    t->add_option("--gate", train_args.gate, "Curvature gate: AND, OR or OFF");

    EvalArgs eval_args;
    auto* e = app.add_subcommand("eval", "PSNR, SSIM and depth loss tables");
    e->add_option("--pred", eval_args.pred, "Predicted image or directory")->required();
    e->add_option("--gt", eval_args.gt, "Reference image or directory")->required();
    e->add_option("--pred-depth", eval_args.pred_depth, "Directory of predicted depth PFMs");
    e->add_option("--gt-depth", eval_args.gt_depth, "Directory of LiDAR depth PFMs");

    SynthArgs synth_args;
    auto* y = app.add_subcommand("synth", "Write a synthetic scene: cloud, cameras and reference images");
    y->add_option("--scene", synth_args.scene, "plane, cube, textured-cube or sphere");
    y->add_option("--points", synth_args.points, "Approximate point count");
    y->add_option("--views", synth_args.views, "Number of cameras");
    y->add_option("--width", synth_args.width, "Image width");
    y->add_option("--height", synth_args.height, "Image height");
    y->add_option("--focal", synth_args.focal, "Focal length in pixels");

    std::string command = "lidargs";
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForAllHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        report_error(command, "usage", ex.what());
        return 2;
    }
    if (common.verbose) logger()->set_level(spdlog::level::info);

    try {
        if (s->parsed()) {
            command = "sample";
            cmd_sample(common, sample);
        } else if (n->parsed()) {
            command = "normals";
            cmd_normals(common, normals);
        } else if (d->parsed()) {
            command = "depthmaps";
            cmd_depthmaps(common, depth);
        } else if (r->parsed()) {
            command = "render";
            cmd_render(common, render_args);
        } else if (t->parsed()) {
            command = "train-toy";
            cmd_train_toy(common, train_args);
        } else if (e->parsed()) {
            command = "eval";
            cmd_eval(common, eval_args);
        } else if (y->parsed()) {
            command = "synth";
            cmd_synth(common, synth_args);
        }
    } catch (const Error& ex) {
        report_error(command, to_string(ex.code()), ex.what());
        return 1;
    } catch (const std::exception& ex) {
        report_error(command, "internal", ex.what());
        return 1;
    }
    return 0;
}
