// Copyright Contributors to the lidargs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lidargs/common.hpp"
#include "lidargs/ply.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <queue>
#include <span>

namespace lidargs {

/// Registered, metric-scale point cloud. Colors are per-channel in [0, 1];
/// normals are unit length. Optional attributes are either absent or sized N.
struct PointCloud {
    std::vector<Vec3> positions;
    std::optional<std::vector<Vec3>> colors;
    std::optional<std::vector<Vec3>> normals;

    Index size() const { return positions.size(); }
    bool empty() const { return positions.empty(); }
    bool has_colors() const { return colors.has_value(); }
    bool has_normals() const { return normals.has_value(); }

    /// Throws kContract if any invariant is broken.
    void validate() const {
        const Index n = size();
        if (colors)
            require(colors->size() == n, ErrorCode::kContract, "color count does not match position count");
        if (normals) {
            require(normals->size() == n, ErrorCode::kContract, "normal count does not match position count");
            for (Index i = 0; i < n; ++i)
                require(std::abs((*normals)[i].norm() - 1.0) <= 1e-6, ErrorCode::kContract,
                        "normal " + std::to_string(i) + " is not unit length");
        }
        for (Index i = 0; i < n; ++i)
            require(positions[i].allFinite(), ErrorCode::kContract,
                    "position " + std::to_string(i) + " is not finite");
    }

    /// Returns the points at `ids`, in the given order, with all attributes.
    PointCloud subset(std::span<const Index> ids) const {
        PointCloud out;
        out.positions.reserve(ids.size());
        for (Index id : ids) out.positions.push_back(positions.at(id));
        if (colors) {
            out.colors.emplace();
            out.colors->reserve(ids.size());
            for (Index id : ids) out.colors->push_back((*colors)[id]);
        }
        if (normals) {
            out.normals.emplace();
            out.normals->reserve(ids.size());
            for (Index id : ids) out.normals->push_back((*normals)[id]);
        }
        return out;
    }
};

/// Reads a PLY `vertex` element (ASCII or binary little-endian). 8-bit colors
/// are divided by 255; float colors are taken as-is. Normals are renormalized.
inline PointCloud load_pointcloud(const std::filesystem::path& path) {
    const ply::VertexTable t = ply::read_vertices(path);
    const auto* x = t.find("x");
    const auto* y = t.find("y");
    const auto* z = t.find("z");
    if (!x || !y || !z) throw Error(ErrorCode::kParse, path.string() + ": vertex element lacks x/y/z properties");

    PointCloud cloud;
    cloud.positions.resize(t.count);
    for (Index i = 0; i < t.count; ++i) {
        cloud.positions[i] = Vec3((*x)[i], (*y)[i], (*z)[i]);
        if (!cloud.positions[i].allFinite())
            throw Error(ErrorCode::kParse, path.string() + ": non-finite coordinate at vertex " + std::to_string(i));
    }

    const auto* r = t.find("red");
    const auto* g = t.find("green");
    const auto* b = t.find("blue");
    if (r && g && b) {
        const auto type = *t.type_of("red");
        const bool is_float = type == ply::Type::kFloat32 || type == ply::Type::kFloat64;
        const double div = is_float ? 1.0 : (type == ply::Type::kUInt16 ? 65535.0 : 255.0);
        cloud.colors.emplace(t.count);
        for (Index i = 0; i < t.count; ++i) {
            Vec3 c((*r)[i] / div, (*g)[i] / div, (*b)[i] / div);
            if (!c.allFinite())
                throw Error(ErrorCode::kParse, path.string() + ": non-finite color at vertex " + std::to_string(i));
            (*cloud.colors)[i] = c;
        }
    }

    const auto* nx = t.find("nx");
    const auto* ny = t.find("ny");
    const auto* nz = t.find("nz");
    if (nx && ny && nz) {
        std::vector<Vec3> normals(t.count);
        Index zero_count = 0;
        for (Index i = 0; i < t.count; ++i) {
            const Vec3 n((*nx)[i], (*ny)[i], (*nz)[i]);
            if (!n.allFinite())
                throw Error(ErrorCode::kParse, path.string() + ": non-finite normal at vertex " + std::to_string(i));
            const double len = n.norm();
            if (len == 0.0) {
                ++zero_count;
                continue;
            }
            normals[i] = n / len;
        }
        if (zero_count == t.count) {
            if (t.count > 0) logger()->warn("{}: all normals are zero; treating normals as absent", path.string());
        } else if (zero_count > 0) {
            for (Index i = 0; i < t.count; ++i)
                if (Vec3((*nx)[i], (*ny)[i], (*nz)[i]).norm() == 0.0)
                    throw Error(ErrorCode::kParse,
                                path.string() + ": zero-length normal at vertex " + std::to_string(i));
        } else {
            cloud.normals = std::move(normals);
        }
    }
    return cloud;
}

/// Writes positions as float32, colors as uint8 and normals as float32, plus
/// any extra float properties (one value per point).
inline void save_pointcloud(const std::filesystem::path& path, const PointCloud& cloud,
                            const std::vector<ply::Column>& extra = {},
                            ply::Format format = ply::Format::kBinaryLittleEndian) {
    const Index n = cloud.size();
    std::vector<ply::Column> cols;
    for (int a = 0; a < 3; ++a) {
        ply::Column c{std::string(1, "xyz"[a]), ply::Type::kFloat32, std::vector<double>(n)};
        for (Index i = 0; i < n; ++i) c.values[i] = cloud.positions[i][a];
        cols.push_back(std::move(c));
    }
    if (cloud.normals) {
        const char* names[3] = {"nx", "ny", "nz"};
        for (int a = 0; a < 3; ++a) {
            ply::Column c{names[a], ply::Type::kFloat32, std::vector<double>(n)};
            for (Index i = 0; i < n; ++i) c.values[i] = (*cloud.normals)[i][a];
            cols.push_back(std::move(c));
        }
    }
    if (cloud.colors) {
        const char* names[3] = {"red", "green", "blue"};
        for (int a = 0; a < 3; ++a) {
            ply::Column c{names[a], ply::Type::kUInt8, std::vector<double>(n)};
            for (Index i = 0; i < n; ++i) c.values[i] = std::round(std::clamp((*cloud.colors)[i][a], 0.0, 1.0) * 255.0);
            cols.push_back(std::move(c));
        }
    }
    for (const auto& c : extra) cols.push_back(c);
    ply::write_vertices(path, n, cols, format);
}

/// Squared Euclidean distance written out component-wise so every caller
/// (index and oracles) ranks with identical rounding.
inline double squared_distance(const Vec3& a, const Vec3& b) {
    const double dx = a.x() - b.x();
    const double dy = a.y() - b.y();
    const double dz = a.z() - b.z();
    return dx * dx + dy * dy + dz * dz;
}

/// Exact k-nearest-neighbour index (kd-tree). Ties in distance are broken by
/// ascending point index. Immutable after construction; queries are thread-safe.
class NeighborIndex {
public:
    static constexpr Index kLeafSize = 16;

    explicit NeighborIndex(std::span<const Vec3> positions, Index k_default = 64)
        : points_(positions.begin(), positions.end()), k_default_(k_default) {
        require(points_.size() >= 2, ErrorCode::kInvalidArgument,
                "neighbor index needs at least 2 points, got " + std::to_string(points_.size()));
        require(k_default_ > 0, ErrorCode::kInvalidArgument, "k_default must be positive");
        order_.resize(points_.size());
        for (Index i = 0; i < order_.size(); ++i) order_[i] = i;
        nodes_.reserve(2 * points_.size() / kLeafSize + 2);
        build(0, points_.size());
    }

    Index size() const { return points_.size(); }
    Index k_default() const { return k_default_; }
    const std::vector<Vec3>& points() const { return points_; }

    /// k nearest neighbours of stored point `point_id`, excluding itself,
    /// sorted by (distance, index). Returns min(k, N-1) ids.
    std::vector<Index> knn(Index point_id, Index k) const {
        require(point_id < points_.size(), ErrorCode::kOutOfRange,
                "point id " + std::to_string(point_id) + " out of range [0, " + std::to_string(points_.size()) + ")");
        return query(points_[point_id], std::min(k, points_.size() - 1), point_id);
    }

    std::vector<Index> knn(Index point_id) const { return knn(point_id, k_default_); }

    /// k nearest stored points to an arbitrary location (nothing excluded).
    std::vector<Index> knn_at(const Vec3& where, Index k) const {
        return query(where, std::min(k, points_.size()), kNone);
    }

    Index nearest(const Vec3& where) const { return query(where, 1, kNone).front(); }

private:
    static constexpr Index kNone = std::numeric_limits<Index>::max();

    struct Node {
        Vec3 lo;
        Vec3 hi;
        Index begin = 0;
        Index end = 0;
        Index left = kNone;
        Index right = kNone;
    };

    using Candidate = std::pair<double, Index>;

    Index build(Index begin, Index end) {
        Node node;
        node.begin = begin;
        node.end = end;
        node.lo = node.hi = points_[order_[begin]];
        for (Index i = begin + 1; i < end; ++i) {
            node.lo = node.lo.cwiseMin(points_[order_[i]]);
            node.hi = node.hi.cwiseMax(points_[order_[i]]);
        }
        const Index id = nodes_.size();
        nodes_.push_back(node);
        if (end - begin > kLeafSize) {
            int dim = 0;
            (node.hi - node.lo).maxCoeff(&dim);
            const Index mid = begin + (end - begin) / 2;
            std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                             order_.begin() + static_cast<std::ptrdiff_t>(mid),
                             order_.begin() + static_cast<std::ptrdiff_t>(end), [&](Index a, Index b) {
                                 const double pa = points_[a][dim];
                                 const double pb = points_[b][dim];
                                 return pa < pb || (pa == pb && a < b);
                             });
            const Index l = build(begin, mid);
            const Index r = build(mid, end);
            nodes_[id].left = l;
            nodes_[id].right = r;
        }
        return id;
    }

    static double box_distance(const Node& n, const Vec3& q) {
        double d2 = 0.0;
        for (int a = 0; a < 3; ++a) {
            double d = 0.0;
            if (q[a] < n.lo[a]) {
                d = n.lo[a] - q[a];
            } else if (q[a] > n.hi[a]) {
                d = q[a] - n.hi[a];
            }
            d2 += d * d;
        }
        return d2;
    }

    std::vector<Index> query(const Vec3& q, Index k, Index exclude) const {
        std::vector<Index> out;
        if (k == 0) return out;
        // Max-heap on (distance, index): the top is the current worst candidate.
        std::priority_queue<Candidate> heap;
        search(0, q, k, exclude, heap);
        out.resize(heap.size());
        for (Index i = out.size(); i-- > 0;) {
            out[i] = heap.top().second;
            heap.pop();
        }
        return out;
    }

    void search(Index node_id, const Vec3& q, Index k, Index exclude, std::priority_queue<Candidate>& heap) const {
        const Node& node = nodes_[node_id];
        if (node.left == kNone) {
            for (Index i = node.begin; i < node.end; ++i) {
                const Index id = order_[i];
                if (id == exclude) continue;
                const Candidate c{squared_distance(points_[id], q), id};
                if (heap.size() < k) {
                    heap.push(c);
                } else if (c < heap.top()) {
                    heap.pop();
                    heap.push(c);
                }
            }
            return;
        }
        const Node& l = nodes_[node.left];
        const Node& r = nodes_[node.right];
        const double dl = box_distance(l, q);
        const double dr = box_distance(r, q);
        const Index first = dl <= dr ? node.left : node.right;
        const Index second = dl <= dr ? node.right : node.left;
        const double d_first = std::min(dl, dr);
        const double d_second = std::max(dl, dr);
        // Prune only on strictly larger bounds: an equal-distance point with a
        // lower index could still displace the worst candidate.
        if (heap.size() < k || d_first <= heap.top().first) search(first, q, k, exclude, heap);
        if (heap.size() < k || d_second <= heap.top().first) search(second, q, k, exclude, heap);
    }

    std::vector<Vec3> points_;
    Index k_default_;
    std::vector<Index> order_;
    std::vector<Node> nodes_;
};

inline NeighborIndex build_neighbor_index(const PointCloud& cloud, Index k_default = 64) {
    return NeighborIndex(cloud.positions, k_default);
}

struct IndexRange {
    Index begin = 0;
    Index end = 0;
    bool operator==(const IndexRange&) const = default;
};

/// Partitions [0, n) into consecutive ranges of at most `chunk_size`.
inline std::vector<IndexRange> chunk_ranges(Index n, Index chunk_size) {
    require(chunk_size >= 1, ErrorCode::kInvalidArgument, "chunk size must be >= 1");
    std::vector<IndexRange> out;
    for (Index b = 0; b < n; b += chunk_size) out.push_back({b, std::min(n, b + chunk_size)});
    return out;
}

}  // namespace lidargs
