// Copyright Contributors to the lidargs Project
// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <gtest/gtest.h>

using namespace lidargs;

TEST(NeighborIndex, TwoPoints) {
    const std::vector<Vec3> pts{Vec3(0, 0, 0), Vec3(1, 0, 0)};
    const NeighborIndex idx(pts);
    EXPECT_EQ(idx.knn(0, 1), std::vector<Index>{1});
    EXPECT_EQ(idx.knn(1, 1), std::vector<Index>{0});
}

TEST(NeighborIndex, CollinearAndClamping) {
    const std::vector<Vec3> pts{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)};
    const NeighborIndex idx(pts);
    EXPECT_EQ(idx.knn(0, 1), std::vector<Index>{1});
    EXPECT_EQ(idx.knn(0, 10), (std::vector<Index>{1, 2}));
}

TEST(NeighborIndex, TiesBreakByLowerIndex) {
    const std::vector<Vec3> pts{Vec3(0, 0, 0), Vec3(-1, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, -1, 0)};
    const NeighborIndex idx(pts);
    EXPECT_EQ(idx.knn(0, 2), (std::vector<Index>{1, 2}));
    EXPECT_EQ(idx.knn(0, 4), (std::vector<Index>{1, 2, 3, 4}));
}

TEST(NeighborIndex, ErrorsOnTinyCloudAndBadId) {
    const std::vector<Vec3> one{Vec3::Zero()};
    EXPECT_THROW(NeighborIndex{one}, Error);
    const std::vector<Vec3> pts{Vec3(0, 0, 0), Vec3(1, 0, 0)};
    const NeighborIndex idx(pts);
    EXPECT_THROW(idx.knn(2, 1), Error);
}

TEST(NeighborIndex, MatchesExhaustiveSearchRandom) {
    for (Index n : {500u, 1000u, 2000u}) {
        const PointCloud c = oracle::random_cloud(n, n, false);
        const NeighborIndex idx(c.positions);
        for (Index k : {1u, 7u, 64u}) {
            for (Index i = 0; i < n; i += (n == 2000 ? 3 : 1)) {
                ASSERT_EQ(idx.knn(i, k), oracle::brute_knn(c.positions, c.positions[i], k, i)) << n << " " << k;
            }
        }
    }
}

TEST(NeighborIndex, MatchesExhaustiveSearchOnGridWithTies) {
    // Integer grid: lots of exactly equal distances.
    std::vector<Vec3> pts;
    for (int x = 0; x < 10; ++x)
        for (int y = 0; y < 10; ++y)
            for (int z = 0; z < 5; ++z) pts.emplace_back(x, y, z);
    const NeighborIndex idx(pts);
    for (Index i = 0; i < pts.size(); ++i)
        for (Index k : {6u, 18u, 64u}) ASSERT_EQ(idx.knn(i, k), oracle::brute_knn(pts, pts[i], k, i));
    for (Index i = 0; i < 50; ++i) {
        const Vec3 q(0.5 * static_cast<double>(i % 10), 0.25 * static_cast<double>(i % 7), 1.5);
        ASSERT_EQ(idx.knn_at(q, 9), oracle::brute_knn(pts, q, 9, std::nullopt));
        ASSERT_EQ(idx.nearest(q), oracle::brute_knn(pts, q, 1, std::nullopt).front());
    }
}

TEST(NeighborIndex, ResultsSortedAndDistinct) {
    const PointCloud c = oracle::random_cloud(300, 2, false);
    const NeighborIndex idx(c.positions);
    for (Index i = 0; i < c.size(); ++i) {
        const auto nn = idx.knn(i, 20);
        ASSERT_EQ(nn.size(), 20u);
        for (Index j = 1; j < nn.size(); ++j)
            EXPECT_LE(squared_distance(c.positions[i], c.positions[nn[j - 1]]),
                      squared_distance(c.positions[i], c.positions[nn[j]]));
        EXPECT_EQ(std::find(nn.begin(), nn.end(), i), nn.end());
    }
}

TEST(ChunkRanges, Partition) {
    EXPECT_EQ(chunk_ranges(10, 4), (std::vector<IndexRange>{{0, 4}, {4, 8}, {8, 10}}));
    EXPECT_EQ(chunk_ranges(10, 100), (std::vector<IndexRange>{{0, 10}}));
    EXPECT_TRUE(chunk_ranges(0, 3).empty());
    EXPECT_THROW(chunk_ranges(10, 0), Error);
}

TEST(PointCloud, ValidateAndSubset) {
    PointCloud c = oracle::random_cloud(10, 1);
    EXPECT_NO_THROW(c.validate());
    const std::vector<Index> ids{1, 5, 7};
    const PointCloud s = c.subset(ids);
    EXPECT_EQ(s.size(), 3u);
    EXPECT_EQ(s.positions[1], c.positions[5]);
    EXPECT_EQ((*s.colors)[2], (*c.colors)[7]);
    c.colors->pop_back();
    EXPECT_THROW(c.validate(), Error);
}
