#include <gtest/gtest.h>

#include <random>

#include "evstar/scene_synth.hpp"
#include "evstar/sourcefind.hpp"
#include "oracles.hpp"

using namespace evstar;

namespace {

template <std::size_t D>
std::vector<std::array<double, D>> clustered_points(std::mt19937_64& rng, int n_clusters, int per, int noise,
                                                    double spread, double extent, bool integer) {
    std::uniform_real_distribution<double> u(0, extent);
    std::normal_distribution<double> g(0, spread);
    std::vector<std::array<double, D>> pts;
    for (int c = 0; c < n_clusters; ++c) {
        std::array<double, D> ctr;
        for (auto& v : ctr) v = u(rng);
        for (int i = 0; i < per; ++i) {
            std::array<double, D> p;
            for (std::size_t k = 0; k < D; ++k) p[k] = ctr[k] + g(rng);
            pts.push_back(p);
        }
    }
    for (int i = 0; i < noise; ++i) {
        std::array<double, D> p;
        for (auto& v : p) v = u(rng);
        pts.push_back(p);
    }
    if (integer)
        for (auto& p : pts) p[0] = std::round(p[0]), p[1] = std::round(p[1]);
    std::shuffle(pts.begin(), pts.end(), rng);
    return pts;
}

Circle brute_circle(const std::vector<Vec2>& p) {
    auto covers = [&](const Circle& c) {
        for (const auto& q : p)
            if ((q - c.center).norm() > c.radius + 1e-9) return false;
        return true;
    };
    Circle best{{}, std::numeric_limits<double>::infinity()};
    if (p.size() == 1) return {p[0], 0};
    for (std::size_t i = 0; i < p.size(); ++i)
        for (std::size_t j = i + 1; j < p.size(); ++j) {
            Circle c{0.5 * (p[i] + p[j]), 0.5 * (p[i] - p[j]).norm()};
            if (c.radius < best.radius && covers(c)) best = c;
            for (std::size_t k = j + 1; k < p.size(); ++k) {
                const Vec2 a = p[i], b = p[j], cc = p[k];
                const double d = 2 * (a.x * (b.y - cc.y) + b.x * (cc.y - a.y) + cc.x * (a.y - b.y));
                if (std::abs(d) < 1e-12) continue;
                const double ux = ((a.x * a.x + a.y * a.y) * (b.y - cc.y) + (b.x * b.x + b.y * b.y) * (cc.y - a.y) +
                                   (cc.x * cc.x + cc.y * cc.y) * (a.y - b.y)) / d;
                const double uy = ((a.x * a.x + a.y * a.y) * (cc.x - b.x) + (b.x * b.x + b.y * b.y) * (a.x - cc.x) +
                                   (cc.x * cc.x + cc.y * cc.y) * (b.x - a.x)) / d;
                Circle t{{ux, uy}, (a - Vec2{ux, uy}).norm()};
                if (t.radius < best.radius && covers(t)) best = t;
            }
        }
    return best;
}

}  // namespace

TEST(Dbscan, MatchesAllPairsReference2D) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 150; ++trial) {
        auto pts = clustered_points<2>(rng, 1 + trial % 6, 5 + trial % 20, trial % 30, 1.5, 60, trial % 2 == 0);
        const double eps = 1.0 + (trial % 5) * 0.5;
        const int min_pts = 2 + trial % 7;
        ASSERT_EQ(dbscan<2>(pts, eps, min_pts), oracle::dbscan(pts, eps, min_pts)) << trial;
    }
}

TEST(Dbscan, MatchesAllPairsReference3D) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 150; ++trial) {
        auto pts = clustered_points<3>(rng, 1 + trial % 5, 6 + trial % 25, trial % 40, 1.2, 40, true);
        ASSERT_EQ(dbscan<3>(pts, 3.0, 6), oracle::dbscan(pts, 3.0, 6)) << trial;
    }
}

TEST(Dbscan, EdgeCases) {
    std::vector<std::array<double, 2>> none;
    EXPECT_TRUE(dbscan<2>(none, 1.0, 3).empty());
    std::vector<std::array<double, 2>> line{{0, 0}, {1, 0}, {2, 0}};
    EXPECT_EQ(dbscan<2>(line, 1.0, 2), (std::vector<int>{0, 0, 0}));
    EXPECT_EQ(dbscan<2>(line, 0.99, 2), (std::vector<int>{-1, -1, -1}));
    EXPECT_THROW(dbscan<2>(line, 0.0, 2), std::invalid_argument);
    EXPECT_THROW(dbscan<2>(line, 1.0, 0), std::invalid_argument);
}

TEST(MinEnclosingCircle, MatchesBruteForce) {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 300; ++trial) {
        std::uniform_int_distribution<int> u(0, 6 + trial % 10);
        std::vector<Vec2> p;
        const int n = 1 + trial % 15;
        for (int i = 0; i < n; ++i) p.push_back({double(u(rng)), double(u(rng))});
        auto got = min_enclosing_circle(p);
        auto want = brute_circle(p);
        ASSERT_NEAR(got.radius, want.radius, 1e-9) << trial;
        for (const auto& q : p) ASSERT_LE((q - got.center).norm(), got.radius + 1e-9);
    }
}

TEST(ShapeFeatures, CompactVersusElongated) {
    std::vector<Vec2> one{{3, 4}};
    auto f = shape_features(one);
    EXPECT_EQ(f.area, 1);
    EXPECT_DOUBLE_EQ(f.extent, 1.0);
    EXPECT_NEAR(f.equivalent_diameter, 2 / std::sqrt(kPi), 1e-12);

    std::vector<Vec2> disc, line;
    for (int y = -6; y <= 6; ++y)
        for (int x = -6; x <= 6; ++x)
            if (x * x + y * y <= 36) disc.push_back({double(x), double(y)});
    for (int x = 0; x < 30; ++x) line.push_back({double(x), 0});
    const auto d = shape_features(disc), l = shape_features(line);
    EXPECT_GT(d.extent, 0.8);
    EXPECT_LT(l.extent, 0.2);
    EXPECT_NEAR(d.geometric_centroid.x, 0.0, 1e-12);
}

class FindSources : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        scene_ = new SyntheticScene;
        scene_->field_center = {30.0, 10.0};
        scene_->duration_s = 3.0;
        scene_->slew_deg_s = {0.01, 0.0};
        scene_->noise_rate = 0.005;
        scene_->stars = random_star_field(*scene_, 25, 6.0, 10.0, 100, 60, 1180, 660, 99);
        auto [ev, truth] = synthesize(*scene_);
        stream_ = new EventStream(std::move(ev));
        truth_ = new GroundTruth(std::move(truth));
    }
    static void TearDownTestSuite() {
        delete scene_;
        delete stream_;
        delete truth_;
    }
    static SyntheticScene* scene_;
    static EventStream* stream_;
    static GroundTruth* truth_;
};
SyntheticScene* FindSources::scene_ = nullptr;
EventStream* FindSources::stream_ = nullptr;
GroundTruth* FindSources::truth_ = nullptr;

TEST_F(FindSources, RecoversInjectedStars) {
    const auto map = build_star_map(*stream_, truth_->field_velocity_px_s, {3.0, MapMode::MonoOn});
    const auto found = find_sources(map, *stream_);
    std::size_t matched = 0;
    for (std::size_t i = 0; i < truth_->stars.size(); ++i) {
        const Vec2 p = truth_->star_position(i, map.t0_us * 1e-6);
        for (const auto& s : found.sources)
            if ((s.centroid - p).norm() < 3.0) {
                ++matched;
                break;
            }
    }
    EXPECT_EQ(matched, truth_->stars.size());
    EXPECT_LE(found.sources.size(), truth_->stars.size() + 1);
    for (std::size_t i = 1; i < found.sources.size(); ++i) {
        EXPECT_GE(found.sources[i - 1].event_rate, found.sources[i].event_rate);
        EXPECT_EQ(found.sources[i].id, int(i));
    }
    for (const auto& s : found.sources) {
        EXPECT_EQ(s.n_events, s.n_on + s.n_off);
        EXPECT_GT(s.extent, 0.0);
        EXPECT_LE(s.extent, 1.0);
    }
}

TEST_F(FindSources, LargeComponentsBecomeExtendedOrFallBack) {
    const auto map = build_star_map(*stream_, truth_->field_velocity_px_s, {3.0, MapMode::Dual});
    SourceFinderOptions o;
    o.extended_threshold = 200;
    const auto found = find_sources(map, *stream_, o);
    std::size_t extended = 0;
    for (const auto& s : found.sources) {
        if (s.kind == SourceKind::Extended) {
            ++extended;
            EXPECT_GT(s.n_events, 200u);
        } else if (!s.fallback) {
            EXPECT_LE(s.n_events, 200u);
        }
    }
    EXPECT_GT(extended, 0u);
}

TEST(FindSourcesBright, VeryBrightStarIsOneExtendedSource) {
    SyntheticScene sc;
    sc.field_center = {120.0, -30.0};
    sc.duration_s = 4.0;
    sc.slew_deg_s = {0.002, 0.0};
    sc.stars = random_star_field(sc, 1, 1.0, 1.0, 600, 340, 680, 380, 3);
    auto [ev, truth] = synthesize(sc);
    const auto map = build_star_map(ev, truth.field_velocity_px_s, {3.0, MapMode::Dual});
    const auto found = find_sources(map, ev);
    ASSERT_EQ(found.sources.size(), 1u);
    const auto& s = found.sources[0];
    EXPECT_EQ(s.kind, SourceKind::Extended);
    EXPECT_GT(s.n_events, 10000u);
    EXPECT_LT((s.centroid - truth.star_position(0, map.t0_us * 1e-6)).norm(), 3.0);
}

TEST(FindSourcesNoise, PureNoiseGivesAtMostOneFalseSourcePerFrame) {
    std::size_t total = 0;
    const int frames = 6;
    for (int seed = 1; seed <= frames; ++seed) {
        SyntheticScene sc;
        sc.field_center = {10.0, 5.0};
        sc.duration_s = 3.0;
        sc.slew_deg_s = {0.01, 0.0};
        sc.noise_rate = 0.005;
        sc.seed = seed;
        auto [ev, truth] = synthesize(sc);
        const auto map = build_star_map(ev, truth.field_velocity_px_s, {3.0, MapMode::Dual});
        total += find_sources(map, ev).sources.size();
    }
    EXPECT_LE(double(total) / frames, 1.0);
}

TEST(FindSourcesShape, SinglePixelSourceFeatures) {
    // Eight ON events on one pixel over two seconds.
    std::vector<Event> ev;
    for (int i = 0; i < 8; ++i) ev.push_back({20, 30, i * 250000, Polarity::On});
    const EventStream s(std::move(ev), SensorGeometry{64, 64});
    const auto f = accumulate(s, 0, 2000000, {});
    SourceFinderOptions o;
    o.min_points = 4;
    const auto found = find_sources(f, s, o);
    ASSERT_EQ(found.sources.size(), 1u);
    const auto& src = found.sources[0];
    EXPECT_EQ(src.area, 1);
    EXPECT_EQ(src.n_on, 8u);
    EXPECT_EQ(src.n_off, 0u);
    EXPECT_DOUBLE_EQ(src.event_rate, 4.0);
    EXPECT_DOUBLE_EQ(src.extent, 1.0);
    EXPECT_DOUBLE_EQ(src.centroid.x, 20.0);
    EXPECT_DOUBLE_EQ(src.centroid.y, 30.0);
}

TEST(FindSourcesErrors, NeedsEventIndex) {
    EventStream s({}, SensorGeometry{8, 8});
    AccumulationOptions ao;
    ao.index_events = false;
    const auto f = accumulate(s, 0, 10, ao);
    EXPECT_THROW(find_sources(f, s), std::invalid_argument);
    const auto g = accumulate(s, 0, 10, {});
    EXPECT_TRUE(find_sources(g, s).sources.empty());
}
