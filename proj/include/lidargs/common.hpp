// Copyright Contributors to the lidargs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

namespace lidargs {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

using Index = std::size_t;

/// Error categories surfaced to callers and, by the CLI, as machine-readable codes.
enum class ErrorCode {
    kInvalidArgument,
    kOutOfRange,
    kParse,
    kIo,
    kDegenerate,
    kContract,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::kInvalidArgument: return "invalid_argument";
        case ErrorCode::kOutOfRange: return "out_of_range";
        case ErrorCode::kParse: return "parse_error";
        case ErrorCode::kIo: return "io_error";
        case ErrorCode::kDegenerate: return "degenerate";
        case ErrorCode::kContract: return "contract_violation";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
    if (!cond) throw Error(code, what);
}

inline std::shared_ptr<spdlog::logger> logger() {
    static auto instance = [] {
        auto existing = spdlog::get("lidargs");
        if (existing) return existing;
        auto l = spdlog::stderr_color_mt("lidargs");
        l->set_level(spdlog::level::warn);
        return l;
    }();
    return instance;
}

// splitmix64 step; used to fan a top-level seed out to independent streams.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return mix_seed(seed ^ mix_seed(stream + 0x632BE59BD9B4E019ull));
}

/// Uniform double in (0, 1] from 53 random bits. Layout is fixed so draws are
/// reproducible across standard library implementations.
template <class Engine>
double uniform_open0(Engine& rng) {
    return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
}

/// Standard normal draw via Box-Muller on uniform_open0.
template <class Engine>
double standard_normal(Engine& rng) {
    const double u1 = uniform_open0(rng);
    const double u2 = uniform_open0(rng);
    constexpr double kTwoPi = 6.283185307179586;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

inline unsigned worker_count() {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1u : hc;
}

namespace detail {
inline thread_local bool in_parallel_region = false;
}

/// Runs body(begin, end) over a static partition of [0, n). Each index is
/// visited by exactly one worker, so writes to disjoint per-index slots are
/// deterministic regardless of the worker count. Nested calls run serially.
template <class Body>
void parallel_for(std::size_t n, Body&& body, std::size_t min_grain = 256) {
    if (n == 0) return;
    const std::size_t workers =
        std::min<std::size_t>(worker_count(), std::max<std::size_t>(1, n / std::max<std::size_t>(1, min_grain)));
    if (workers <= 1 || detail::in_parallel_region) {
        body(std::size_t{0}, n);
        return;
    }
    struct RegionGuard {
        RegionGuard() { detail::in_parallel_region = true; }
        ~RegionGuard() { detail::in_parallel_region = false; }
    };
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t per = (n + workers - 1) / workers;
    for (std::size_t w = 1; w < workers; ++w) {
        const std::size_t b = std::min(n, w * per);
        const std::size_t e = std::min(n, b + per);
        pool.emplace_back([&, w, b, e] {
            RegionGuard guard;
            try {
                body(b, e);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    try {
        RegionGuard guard;
        body(std::size_t{0}, std::min(n, per));
    } catch (...) {
        errors[0] = std::current_exception();
    }
    pool.clear();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline bool all_finite(const Vec3& v) { return v.allFinite(); }

}  // namespace lidargs
