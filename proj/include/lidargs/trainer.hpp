// Copyright Contributors to the lidargs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lidargs/camera.hpp"
#include "lidargs/common.hpp"
#include "lidargs/depth_render.hpp"
#include "lidargs/losses.hpp"
#include "lidargs/splat_io.hpp"
#include "lidargs/splat_model.hpp"

#include <nlohmann/json.hpp>

#include <functional>

namespace lidargs {

struct LearningRates {
    double mean = 1e-3;
    double log_scale = 5e-3;
    double opacity_logit = 5e-2;
    double color = 2.5e-3;
};

struct TrainConfig {
    std::int64_t total_iters = 200;
    std::int64_t densify_interval = 100;
    std::int64_t checkpoint_interval = 0;  // 0 disables intermediate checkpoints
    LearningRates lr;
    double fd_epsilon = 1e-4;
    LossWeights loss;
    GateMode gate = GateMode::kAnd;
    double theta_start = 0.1;
    double theta_end = 0.3;
    Index max_gaussians = 200000;
    Index online_k = 64;
    double curvature_epsilon = 1e-12;
    double prune_opacity = 0.005;
    // Fraction of Gaussians flagged per step by mean-gradient norm.
    double grad_top_fraction = 0.1;
    DepthWeighting weighting = DepthWeighting::kTransmittance;
    std::uint64_t seed = 0;

    SplitSchedule schedule() const { return SplitSchedule{theta_start, theta_end, std::max<std::int64_t>(1, total_iters)}; }

    void validate() const {
        require(total_iters >= 0, ErrorCode::kInvalidArgument, "total_iters must be >= 0");
        require(densify_interval > 0, ErrorCode::kInvalidArgument, "densify_interval must be positive");
        require(checkpoint_interval >= 0, ErrorCode::kInvalidArgument, "checkpoint_interval must be >= 0");
        require(lr.mean >= 0.0 && lr.log_scale >= 0.0 && lr.opacity_logit >= 0.0 && lr.color >= 0.0,
                ErrorCode::kInvalidArgument, "learning rates must be non-negative");
        require(fd_epsilon > 0.0, ErrorCode::kInvalidArgument, "fd_epsilon must be positive");
        require(max_gaussians > 0, ErrorCode::kInvalidArgument, "max_gaussians must be positive");
        require(online_k >= 2, ErrorCode::kInvalidArgument, "online_k must be >= 2");
        require(prune_opacity >= 0.0 && prune_opacity < 1.0, ErrorCode::kInvalidArgument,
                "prune_opacity must lie in [0, 1)");
        require(grad_top_fraction > 0.0 && grad_top_fraction <= 1.0, ErrorCode::kInvalidArgument,
                "grad_top_fraction must lie in (0, 1]");
        loss.validate();
    }
};

/// One supervised view: ground-truth image, LiDAR depth and its confidence.
struct TrainView {
    CameraView camera;
    RgbImage image;
    DepthMap lidar;
    ConfidenceMap confidence;
};

inline TrainView make_train_view(CameraView camera, RgbImage image, DepthMap lidar) {
    require(image.same_shape(camera.width, camera.height) && lidar.depth.same_shape(image), ErrorCode::kInvalidArgument,
            "view '" + camera.name + "': image, depth and camera sizes differ");
    ConfidenceMap conf;
    if (lidar.valid_count() > 0) {
        conf = confidence_weights(image, lidar.valid);
    } else {
        logger()->warn("view '{}' has no LiDAR depth; depth loss is inactive there", camera.name);
        conf = ConfidenceMap{GrayImage(image.width, image.height, 0.0), lidar.valid};
    }
    return TrainView{std::move(camera), std::move(image), std::move(lidar), std::move(conf)};
}

struct TrainDiagnostics {
    Index aborted_steps = 0;
    Index skipped_probes = 0;
    Index suppressed_densifications = 0;
    Index pruned = 0;
    Index splits = 0;
};

struct TrainState {
    GaussianSet set;
    std::int64_t t = 0;
    std::int64_t total_iters = 0;
    SplitSchedule schedule;  // its T is clamped to >= 1 so theta stays defined
    std::uint64_t seed = 0;
    std::vector<std::uint8_t> grad_flags;
    double last_loss = std::numeric_limits<double>::quiet_NaN();
    TrainDiagnostics diagnostics;

    void validate() const {
        set.validate();
        require(grad_flags.size() == set.size(), ErrorCode::kContract, "grad_flags length does not match |G|");
        require(t >= 0 && t <= total_iters, ErrorCode::kContract, "iteration outside [0, T]");
    }
};

inline TrainState make_train_state(GaussianSet set, const TrainConfig& cfg) {
    cfg.validate();
    set.validate();
    TrainState s;
    s.grad_flags.assign(set.size(), 0);
    s.set = std::move(set);
    s.total_iters = cfg.total_iters;
    s.schedule = cfg.schedule();
    s.seed = cfg.seed;
    return s;
}

// ---------------------------------------------------------------------------
// Parameterisation

enum class Attribute { kMean, kLogScale, kOpacityLogit, kColor };

inline int attribute_width(Attribute a) { return a == Attribute::kOpacityLogit ? 1 : 3; }

inline std::string_view to_string(Attribute a) {
    switch (a) {
        case Attribute::kMean: return "mean";
        case Attribute::kLogScale: return "log_scale";
        case Attribute::kOpacityLogit: return "opacity_logit";
        case Attribute::kColor: return "color";
    }
    return "mean";
}

/// One scalar optimisation variable.
struct ParamRef {
    Index gaussian = 0;
    Attribute attr = Attribute::kMean;
    int component = 0;
};

inline constexpr double kLogitClamp = 20.0;

inline double get_param(const Gaussian& g, Attribute a, int c) {
    switch (a) {
        case Attribute::kMean: return g.mean[c];
        case Attribute::kLogScale: return std::log(g.scale[c]);
        case Attribute::kOpacityLogit: return logit(g.opacity);
        case Attribute::kColor: return g.color[c];
    }
    return 0.0;
}

/// Writes an unconstrained value back; opacity stays inside (0, 1) and colours
/// inside [0, 1].
inline void set_param(Gaussian& g, Attribute a, int c, double v) {
    switch (a) {
        case Attribute::kMean: g.mean[c] = v; break;
        case Attribute::kLogScale: g.scale[c] = std::exp(std::clamp(v, -30.0, 30.0)); break;
        case Attribute::kOpacityLogit: g.opacity = sigmoid(std::clamp(v, -kLogitClamp, kLogitClamp)); break;
        case Attribute::kColor: g.color[c] = std::clamp(v, 0.0, 1.0); break;
    }
}

inline std::vector<ParamRef> select_params(Index count, std::span<const Attribute> attrs) {
    std::vector<ParamRef> out;
    for (Index i = 0; i < count; ++i)
        for (Attribute a : attrs)
            for (int c = 0; c < attribute_width(a); ++c) out.push_back({i, a, c});
    return out;
}

using LossEvaluator = std::function<double(const GaussianSet&)>;

struct GradientResult {
    std::vector<double> grad;
    Index skipped = 0;
};

/// Central differences per selected scalar. Probes that hit a non-finite loss
/// get gradient 0 and are counted. Each worker perturbs its own copy of the
/// set and restores the exact original value after each probe.
inline GradientResult finite_diff_grad(const LossEvaluator& loss, const GaussianSet& set,
                                       std::span<const ParamRef> params, double eps) {
    require(eps > 0.0, ErrorCode::kInvalidArgument, "finite-difference epsilon must be positive");
    for (const auto& p : params)
        require(p.gaussian < set.size(), ErrorCode::kOutOfRange, "parameter refers to a missing gaussian");
    GradientResult out;
    out.grad.assign(params.size(), 0.0);
    std::vector<std::uint8_t> bad(params.size(), 0);
    parallel_for(
        params.size(),
        [&](Index b, Index e) {
            GaussianSet work = set;
            for (Index i = b; i < e; ++i) {
                const ParamRef& p = params[i];
                Gaussian& g = work.gaussians[p.gaussian];
                const Gaussian saved = g;
                const double x = get_param(saved, p.attr, p.component);
                set_param(g, p.attr, p.component, x + eps);
                const double fp = loss(work);
                g = saved;
                set_param(g, p.attr, p.component, x - eps);
                const double fm = loss(work);
                g = saved;
                if (!std::isfinite(fp) || !std::isfinite(fm)) {
                    bad[i] = 1;
                    continue;
                }
                out.grad[i] = (fp - fm) / (2.0 * eps);
            }
        },
        1);
    for (auto v : bad) out.skipped += v;
    if (out.skipped) logger()->warn("finite_diff_grad: {} probes hit a non-finite loss and were skipped", out.skipped);
    return out;
}

// ---------------------------------------------------------------------------
// Loss

struct LossBreakdown {
    double rgb = 0.0;
    double ssim = 0.0;
    double depth = 0.0;
    double normal = 0.0;
    double total = 0.0;
    Index depth_pixels = 0;
};

inline Index joint_valid(const DepthMap& a, const DepthMap& b) {
    Index n = 0;
    for (std::size_t i = 0; i < a.valid.size(); ++i) n += (a.valid.data[i] && b.valid.data[i]) ? 1 : 0;
    return n;
}

inline LossBreakdown evaluate_loss(const GaussianSet& set, const TrainView& view, const TrainConfig& cfg) {
    const LossWeights& w = cfg.loss;
    const bool want_color = w.lambda_rgb > 0.0 || w.lambda_ssim > 0.0;
    const RenderedFrame frame = render(set, view.camera, RenderOptions{cfg.weighting, want_color, 16});
    LossBreakdown out;
    if (w.lambda_rgb > 0.0) out.rgb = l1_rgb(frame.color, view.image);
    if (w.lambda_ssim > 0.0) out.ssim = ssim_loss(frame.color, view.image);
    if (w.lambda_depth > 0.0) {
        out.depth_pixels = joint_valid(view.lidar, frame.depth);
        if (out.depth_pixels > 0) out.depth = depth_loss(view.lidar, frame.depth, view.confidence);
    }
    if (w.normal_enabled && set.lidar_normals) out.normal = normal_alignment_loss(set);
    out.total = total_loss(out.rgb, out.ssim, out.depth, w, out.normal);
    return out;
}

/// Whether a view yields any supervised pixel for the current set.
inline bool view_has_signal(const GaussianSet& set, const TrainView& view, const TrainConfig& cfg) {
    const RenderedFrame frame = render(set, view.camera, RenderOptions{cfg.weighting, false, 16});
    if (frame.depth.valid_count() == 0) return false;
    if (cfg.loss.lambda_rgb > 0.0 || cfg.loss.lambda_ssim > 0.0) return true;
    return cfg.loss.lambda_depth > 0.0 && joint_valid(view.lidar, frame.depth) > 0;
}

// ---------------------------------------------------------------------------
// Step

inline std::vector<Attribute> active_attributes(const LearningRates& lr) {
    std::vector<Attribute> out;
    if (lr.mean > 0.0) out.push_back(Attribute::kMean);
    if (lr.log_scale > 0.0) out.push_back(Attribute::kLogScale);
    if (lr.opacity_logit > 0.0) out.push_back(Attribute::kOpacityLogit);
    if (lr.color > 0.0) out.push_back(Attribute::kColor);
    return out;
}

inline double learning_rate(const LearningRates& lr, Attribute a) {
    switch (a) {
        case Attribute::kMean: return lr.mean;
        case Attribute::kLogScale: return lr.log_scale;
        case Attribute::kOpacityLogit: return lr.opacity_logit;
        case Attribute::kColor: return lr.color;
    }
    return 0.0;
}

/// Flags Gaussians whose mean-gradient norm is in the top fraction (and nonzero).
inline std::vector<std::uint8_t> top_gradient_flags(std::span<const double> norms, double top_fraction) {
    std::vector<std::uint8_t> flags(norms.size(), 0);
    if (norms.empty()) return flags;
    std::vector<double> sorted(norms.begin(), norms.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const auto count = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(top_fraction * static_cast<double>(norms.size()))));
    const double threshold = sorted[std::min(count, sorted.size()) - 1];
    for (std::size_t i = 0; i < norms.size(); ++i) flags[i] = (norms[i] >= threshold && norms[i] > 0.0) ? 1 : 0;
    return flags;
}

/// Index of the view used at iteration t.
inline Index pick_view(std::uint64_t seed, std::int64_t t, Index view_count) {
    return static_cast<Index>(derive_seed(seed, static_cast<std::uint64_t>(t)) % view_count);
}

/// One gradient-descent step on a view chosen from (seed, t); falls through the
/// remaining views in order if that one has no supervised pixels.
inline TrainState train_step(const TrainState& state, std::span<const TrainView> views, const TrainConfig& cfg) {
    require(!views.empty(), ErrorCode::kInvalidArgument, "train_step needs at least one view");
    state.validate();
    TrainState next = state;
    require(state.t < state.total_iters, ErrorCode::kContract,
            "train_step called at t = T = " + std::to_string(state.t));
    const auto attrs = active_attributes(cfg.lr);
    if (attrs.empty() || state.set.empty()) {
        ++next.t;
        return next;
    }

    const Index first = pick_view(state.seed, state.t, views.size());
    std::optional<Index> chosen;
    for (Index k = 0; k < views.size() && !chosen; ++k) {
        const Index v = (first + k) % views.size();
        if (view_has_signal(state.set, views[v], cfg)) chosen = v;
    }
    if (!chosen) {
        logger()->warn("train_step t={}: no view produced supervised pixels, step aborted", state.t);
        ++next.diagnostics.aborted_steps;
        ++next.t;
        return next;
    }
    const TrainView& view = views[*chosen];
    const LossEvaluator eval = [&](const GaussianSet& s) { return evaluate_loss(s, view, cfg).total; };
    next.last_loss = eval(state.set);

    const auto params = select_params(state.set.size(), attrs);
    const GradientResult g = finite_diff_grad(eval, state.set, params, cfg.fd_epsilon);
    next.diagnostics.skipped_probes += g.skipped;

    std::vector<double> mean_sq(state.set.size(), 0.0);
    for (Index i = 0; i < params.size(); ++i) {
        const ParamRef& p = params[i];
        if (p.attr == Attribute::kMean) mean_sq[p.gaussian] += g.grad[i] * g.grad[i];
        Gaussian& target = next.set.gaussians[p.gaussian];
        const double x = get_param(state.set.gaussians[p.gaussian], p.attr, p.component);
        set_param(target, p.attr, p.component, x - learning_rate(cfg.lr, p.attr) * g.grad[i]);
    }
    if (cfg.lr.mean > 0.0) {
        for (auto& v : mean_sq) v = std::sqrt(v);
        const auto flags = top_gradient_flags(mean_sq, cfg.grad_top_fraction);
        for (Index i = 0; i < flags.size(); ++i) next.grad_flags[i] |= flags[i];
    }
    ++next.t;
    return next;
}

// ---------------------------------------------------------------------------
// Densification

struct DensifyReport {
    std::vector<Index> split_ids;  // indices into the pre-densify set
    std::vector<double> curvature;
    double theta = 0.0;
    Index pruned = 0;
    bool suppressed = false;
};

/// Candidates the densifier would split on `state` under `mode`.
inline std::vector<Index> densify_candidates(const TrainState& state, const TrainConfig& cfg, GateMode mode,
                                             std::vector<double>* curvature_out = nullptr) {
    const Index n = state.set.size();
    if (n < 3) return {};
    const Index k = std::min(cfg.online_k, n - 1);
    const auto curv = online_curvature(state.set, k, cfg.curvature_epsilon);
    auto ids = select_split_candidates(curv, state.grad_flags, state.t, state.schedule, mode);
    if (curvature_out) *curvature_out = curv;
    return ids;
}

inline TrainState densify(const TrainState& state, const TrainConfig& cfg, DensifyReport* report = nullptr) {
    state.validate();
    require(state.t % cfg.densify_interval == 0, ErrorCode::kContract,
            "densify at t = " + std::to_string(state.t) + " which is not a multiple of densify_interval = " +
                std::to_string(cfg.densify_interval));
    DensifyReport rep;
    rep.theta = split_threshold(state.t, state.schedule);
    auto ids = densify_candidates(state, cfg, cfg.gate, &rep.curvature);

    TrainState next = state;
    if (state.set.size() + ids.size() > cfg.max_gaussians) {
        logger()->warn("densify t={}: {} splits would exceed the cap of {} gaussians, splitting suppressed", state.t,
                       ids.size(), cfg.max_gaussians);
        ++next.diagnostics.suppressed_densifications;
        rep.suppressed = true;
        ids.clear();
    }

    std::vector<std::uint8_t> split(state.set.size(), 0);
    for (Index i : ids) split[i] = 1;
    GaussianSet grown;
    if (state.set.lidar_normals) grown.lidar_normals.emplace();
    const std::uint64_t stage_seed = derive_seed(state.seed, 0x5b117ULL + static_cast<std::uint64_t>(state.t));
    for (Index i = 0; i < state.set.size(); ++i) {
        const Gaussian& g = state.set.gaussians[i];
        const int copies = split[i] ? 2 : 1;
        if (split[i]) {
            for (const auto& c : split_gaussian(g, derive_seed(stage_seed, i))) grown.gaussians.push_back(c);
        } else {
            grown.gaussians.push_back(g);
        }
        if (grown.lidar_normals)
            for (int c = 0; c < copies; ++c) grown.lidar_normals->push_back((*state.set.lidar_normals)[i]);
    }

    GaussianSet kept;
    if (grown.lidar_normals) kept.lidar_normals.emplace();
    for (Index i = 0; i < grown.size(); ++i) {
        if (grown.gaussians[i].opacity < cfg.prune_opacity) {
            ++rep.pruned;
            continue;
        }
        kept.gaussians.push_back(grown.gaussians[i]);
        if (kept.lidar_normals) kept.lidar_normals->push_back((*grown.lidar_normals)[i]);
    }

    next.set = std::move(kept);
    next.grad_flags.assign(next.set.size(), 0);
    next.diagnostics.pruned += rep.pruned;
    next.diagnostics.splits += ids.size();
    rep.split_ids = std::move(ids);
    if (report) *report = std::move(rep);
    return next;
}

// ---------------------------------------------------------------------------
// Loop and state files

struct StepRecord {
    std::int64_t t = 0;
    double loss = 0.0;
    Index gaussians = 0;
};

using StepCallback = std::function<void(const TrainState&, const StepRecord&, const DensifyReport*)>;

/// Runs steps until t = T, densifying after every densify_interval steps
/// (except at T). `on_step` sees the state after each step.
inline TrainState train(TrainState state, std::span<const TrainView> views, const TrainConfig& cfg,
                        const StepCallback& on_step = {}) {
    cfg.validate();
    while (state.t < state.total_iters) {
        state = train_step(state, views, cfg);
        const StepRecord rec{state.t, state.last_loss, state.set.size()};
        std::optional<DensifyReport> rep;
        if (state.t % cfg.densify_interval == 0 && state.t < state.total_iters) {
            rep.emplace();
            state = densify(state, cfg, &*rep);
        }
        if (on_step) on_step(state, rec, rep ? &*rep : nullptr);
    }
    return state;
}

inline nlohmann::json state_to_json(const TrainState& s) {
    nlohmann::json j;
    j["iteration"] = s.t;
    j["total_iters"] = s.total_iters;
    j["theta_start"] = s.schedule.theta_start;
    j["theta_end"] = s.schedule.theta_end;
    j["seed"] = s.seed;
    j["gaussians"] = s.set.size();
    j["grad_flags"] = s.grad_flags;
    j["diagnostics"] = {{"aborted_steps", s.diagnostics.aborted_steps},
                        {"skipped_probes", s.diagnostics.skipped_probes},
                        {"suppressed_densifications", s.diagnostics.suppressed_densifications},
                        {"pruned", s.diagnostics.pruned},
                        {"splits", s.diagnostics.splits}};
    return j;
}

/// Writes <stem>.ply and <stem>.json.
inline void save_checkpoint(const std::filesystem::path& stem, const TrainState& s) {
    save_splat_ply(std::filesystem::path(stem.string() + ".ply"), s.set);
    detail::write_bytes(std::filesystem::path(stem.string() + ".json"), state_to_json(s).dump(2) + "\n");
}

}  // namespace lidargs
