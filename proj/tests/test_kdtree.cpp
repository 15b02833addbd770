#include <gtest/gtest.h>

#include <random>

#include "evstar/kdtree.hpp"
#include "oracles.hpp"

using namespace evstar;

namespace {

template <std::size_t D>
std::vector<std::array<double, D>> random_points(std::mt19937_64& rng, std::size_t n, bool grid) {
    std::uniform_real_distribution<double> u(0, 100);
    std::uniform_int_distribution<int> gi(0, 20);
    std::vector<std::array<double, D>> pts(n);
    for (auto& p : pts)
        for (auto& v : p) v = grid ? double(gi(rng)) : u(rng);
    return pts;
}

template <std::size_t D>
void check_against_brute_force(std::mt19937_64& rng, int instances) {
    std::uniform_int_distribution<std::size_t> size(1, 1000);
    for (int inst = 0; inst < instances; ++inst) {
        // Integer grids force exact distance ties.
        const bool grid = inst % 3 == 0;
        const auto ref = random_points<D>(rng, size(rng), grid);
        const auto queries = random_points<D>(rng, 20, grid);
        const KdTree<D> tree(ref);
        for (const auto& q : queries) {
            const auto got = tree.nearest(q);
            const auto want = oracle::nearest(ref, q);
            ASSERT_TRUE(got);
            ASSERT_EQ(got->first, want.first) << "instance " << inst;
            ASSERT_DOUBLE_EQ(got->second, want.second);
        }
        const double r = grid ? 3.0 : 7.5;
        ASSERT_EQ(tree.radius(queries[0], r), oracle::within(ref, queries[0], r));
    }
}

}  // namespace

TEST(KdTree, NearestMatchesBruteForce2d) {
    std::mt19937_64 rng(1);
    check_against_brute_force<2>(rng, 1000);
}

TEST(KdTree, NearestMatchesBruteForce4d) {
    std::mt19937_64 rng(2);
    check_against_brute_force<4>(rng, 200);
}

TEST(KdTree, QueryOnReferencePointIsExact) {
    std::mt19937_64 rng(3);
    const auto ref = random_points<2>(rng, 300, false);
    const KdTree<2> tree(ref);
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const auto nn = tree.nearest(ref[i]);
        EXPECT_EQ(nn->first, i);
        EXPECT_EQ(nn->second, 0.0);
    }
}

TEST(KdTree, SinglePointAnswersEveryQuery) {
    const KdTree<2> tree(std::vector<KdTree<2>::Point>{{5.0, -2.0}});
    std::mt19937_64 rng(4);
    for (const auto& q : random_points<2>(rng, 50, false)) EXPECT_EQ(tree.nearest(q)->first, 0u);
}

TEST(KdTree, EmptyTreeHasNoNeighbour) {
    const KdTree<2> tree;
    EXPECT_FALSE(tree.nearest({0.0, 0.0}));
    EXPECT_TRUE(tree.radius({0.0, 0.0}, 10.0).empty());
}

TEST(KdTree, DuplicatePointsTieToLowerIndex) {
    const KdTree<2> tree(std::vector<KdTree<2>::Point>{{1, 1}, {3, 3}, {1, 1}, {1, 1}});
    EXPECT_EQ(tree.nearest({1.2, 1.0})->first, 0u);
    EXPECT_EQ(tree.radius({1, 1}, 0.0), (std::vector<std::size_t>{0, 2, 3}));
}

TEST(KdTree, FilteredNearestMatchesBruteForce) {
    std::mt19937_64 rng(5);
    for (int inst = 0; inst < 200; ++inst) {
        const auto ref = random_points<2>(rng, 200, inst % 2 == 0);
        const KdTree<2> tree(ref);
        std::vector<std::uint8_t> allowed(ref.size());
        for (auto& a : allowed) a = rng() % 3 == 0;
        std::vector<std::array<double, 2>> kept;
        std::vector<std::size_t> kept_index;
        for (std::size_t i = 0; i < ref.size(); ++i)
            if (allowed[i]) {
                kept.push_back(ref[i]);
                kept_index.push_back(i);
            }
        const auto q = random_points<2>(rng, 1, false)[0];
        const auto got = tree.nearest_if(q, [&](std::size_t i) { return allowed[i] != 0; });
        if (kept.empty()) {
            EXPECT_FALSE(got);
            continue;
        }
        const auto want = oracle::nearest(kept, q);
        ASSERT_TRUE(got);
        EXPECT_EQ(got->first, kept_index[want.first]);
        EXPECT_DOUBLE_EQ(got->second, want.second);
    }
}
