// Copyright Contributors to the lidargs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lidargs/camera.hpp"
#include "lidargs/common.hpp"
#include "lidargs/complexity.hpp"
#include "lidargs/trainer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <set>

namespace lidargs {

struct PathConfig {
    std::string cloud;
    std::string cameras;
    std::string images;
    std::string depth;
    std::string checkpoint;
    std::string output = "out";
};

/// Everything a pipeline command needs. Missing keys keep these defaults;
/// unknown keys are rejected.
struct PipelineConfig {
    std::uint64_t seed = 0;
    AllocationConfig allocation;  // alpha = beta = 0.5, M = 3,000,000
    TrainConfig train;            // theta 0.1 -> 0.3, depth/rgb/ssim weights 1, 0.8, 0.2
    DepthProjectionParams depth;
    PathConfig paths;

    void validate() const {
        allocation.validate();
        train.validate();
        require(depth.splat_radius_px >= 0, ErrorCode::kInvalidArgument, "depth.splat_radius_px must be >= 0");
        require(depth.z_tolerance >= 0.0, ErrorCode::kInvalidArgument, "depth.z_tolerance must be >= 0");
    }

    // Per-stage seeds fanned out from the top-level seed.
    std::uint64_t allocation_seed() const { return derive_seed(seed, 1); }
    std::uint64_t train_seed() const { return derive_seed(seed, 2); }
    std::uint64_t synth_seed() const { return derive_seed(seed, 3); }
};

namespace detail {

/// Reads known keys from one JSON object and rejects the rest.
class ObjectReader {
public:
    ObjectReader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw Error(ErrorCode::kParse, "config: '" + where_ + "' must be an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::kParse, "config: bad value for '" + path(key) + "': " + e.what());
        }
    }

    const nlohmann::json* child(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw Error(ErrorCode::kParse, "config: unknown key '" + path(it.key()) + "'");
    }

private:
    const nlohmann::json& j_;
    std::string where_;
    std::set<std::string, std::less<>> seen_;
};

}  // namespace detail

inline PipelineConfig config_from_json(const nlohmann::json& j) {
    PipelineConfig c;
    detail::ObjectReader root(j, "");
    root.get("seed", c.seed);
    if (const auto* a = root.child("allocation")) {
        detail::ObjectReader r(*a, "allocation");
        r.get("k", c.allocation.k);
        r.get("alpha", c.allocation.alpha);
        r.get("beta", c.allocation.beta);
        r.get("epsilon", c.allocation.epsilon);
        r.get("budget", c.allocation.budget_M);
        r.get("chunk_size", c.allocation.chunk_size);
        r.finish();
    }
    if (const auto* t = root.child("train")) {
        detail::ObjectReader r(*t, "train");
        auto& tc = c.train;
        r.get("total_iters", tc.total_iters);
        r.get("densify_interval", tc.densify_interval);
        r.get("checkpoint_interval", tc.checkpoint_interval);
        r.get("fd_epsilon", tc.fd_epsilon);
        r.get("theta_start", tc.theta_start);
        r.get("theta_end", tc.theta_end);
        r.get("max_gaussians", tc.max_gaussians);
        r.get("online_k", tc.online_k);
        r.get("curvature_epsilon", tc.curvature_epsilon);
        r.get("prune_opacity", tc.prune_opacity);
        r.get("grad_top_fraction", tc.grad_top_fraction);
        std::string gate(to_string(tc.gate));
        r.get("gate", gate);
        tc.gate = parse_gate_mode(gate);
        std::string weighting = tc.weighting == DepthWeighting::kRaw ? "raw" : "transmittance";
        r.get("depth_weighting", weighting);
        if (weighting == "raw") {
            tc.weighting = DepthWeighting::kRaw;
        } else if (weighting == "transmittance") {
            tc.weighting = DepthWeighting::kTransmittance;
        } else {
            throw Error(ErrorCode::kParse, "config: train.depth_weighting must be 'transmittance' or 'raw'");
        }
        if (const auto* lr = r.child("lr")) {
            detail::ObjectReader l(*lr, "train.lr");
            l.get("mean", tc.lr.mean);
            l.get("log_scale", tc.lr.log_scale);
            l.get("opacity_logit", tc.lr.opacity_logit);
            l.get("color", tc.lr.color);
            l.finish();
        }
        r.finish();
    }
    if (const auto* l = root.child("loss")) {
        detail::ObjectReader r(*l, "loss");
        r.get("lambda_depth", c.train.loss.lambda_depth);
        r.get("lambda_rgb", c.train.loss.lambda_rgb);
        r.get("lambda_ssim", c.train.loss.lambda_ssim);
        r.get("lambda_normal", c.train.loss.lambda_normal);
        r.get("normal_enabled", c.train.loss.normal_enabled);
        r.finish();
    }
    if (const auto* d = root.child("depth")) {
        detail::ObjectReader r(*d, "depth");
        r.get("splat_radius_px", c.depth.splat_radius_px);
        r.get("z_tolerance", c.depth.z_tolerance);
        r.finish();
    }
    if (const auto* p = root.child("paths")) {
        detail::ObjectReader r(*p, "paths");
        r.get("cloud", c.paths.cloud);
        r.get("cameras", c.paths.cameras);
        r.get("images", c.paths.images);
        r.get("depth", c.paths.depth);
        r.get("checkpoint", c.paths.checkpoint);
        r.get("output", c.paths.output);
        r.finish();
    }
    root.finish();
    c.allocation.seed = c.allocation_seed();
    c.train.seed = c.train_seed();
    c.validate();
    return c;
}

/// The effective configuration; feeding it back yields an identical config.
inline nlohmann::json config_to_json(const PipelineConfig& c) {
    const auto& tc = c.train;
    nlohmann::json j;
    j["seed"] = c.seed;
    j["allocation"] = {{"k", c.allocation.k},
                       {"alpha", c.allocation.alpha},
                       {"beta", c.allocation.beta},
                       {"epsilon", c.allocation.epsilon},
                       {"budget", c.allocation.budget_M},
                       {"chunk_size", c.allocation.chunk_size}};
    j["train"] = {{"total_iters", tc.total_iters},
                  {"densify_interval", tc.densify_interval},
                  {"checkpoint_interval", tc.checkpoint_interval},
                  {"fd_epsilon", tc.fd_epsilon},
                  {"theta_start", tc.theta_start},
                  {"theta_end", tc.theta_end},
                  {"max_gaussians", tc.max_gaussians},
                  {"online_k", tc.online_k},
                  {"curvature_epsilon", tc.curvature_epsilon},
                  {"prune_opacity", tc.prune_opacity},
                  {"grad_top_fraction", tc.grad_top_fraction},
                  {"gate", std::string(to_string(tc.gate))},
                  {"depth_weighting", tc.weighting == DepthWeighting::kRaw ? "raw" : "transmittance"},
                  {"lr",
                   {{"mean", tc.lr.mean},
                    {"log_scale", tc.lr.log_scale},
                    {"opacity_logit", tc.lr.opacity_logit},
                    {"color", tc.lr.color}}}};
    j["loss"] = {{"lambda_depth", tc.loss.lambda_depth},
                 {"lambda_rgb", tc.loss.lambda_rgb},
                 {"lambda_ssim", tc.loss.lambda_ssim},
                 {"lambda_normal", tc.loss.lambda_normal},
                 {"normal_enabled", tc.loss.normal_enabled}};
    j["depth"] = {{"splat_radius_px", c.depth.splat_radius_px}, {"z_tolerance", c.depth.z_tolerance}};
    j["paths"] = {{"cloud", c.paths.cloud},
                  {"cameras", c.paths.cameras},
                  {"images", c.paths.images},
                  {"depth", c.paths.depth},
                  {"checkpoint", c.paths.checkpoint},
                  {"output", c.paths.output}};
    return j;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorCode::kIo, "cannot open config: " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

}  // namespace lidargs
