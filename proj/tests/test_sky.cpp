#include <gtest/gtest.h>

#include <random>

#include "evstar/sky.hpp"

using namespace evstar;

namespace {

// Unit vector dot product; independent of the haversine used in the library.
double separation_by_vectors(SkyCoord a, SkyCoord b) {
    auto v = [](SkyCoord c) {
        const double ra = c.ra_deg * kDegToRad, de = c.dec_deg * kDegToRad;
        return std::array<double, 3>{std::cos(de) * std::cos(ra), std::cos(de) * std::sin(ra), std::sin(de)};
    };
    auto p = v(a), q = v(b);
    const double cx = p[1] * q[2] - p[2] * q[1], cy = p[2] * q[0] - p[0] * q[2], cz = p[0] * q[1] - p[1] * q[0];
    return std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), p[0] * q[0] + p[1] * q[1] + p[2] * q[2]) / kDegToRad;
}

}  // namespace

TEST(Gnomonic, CenterMapsToOriginAndAxesPointEastNorth) {
    SkyCoord c{83.8, -5.4};
    auto t = gnomonic(c, c);
    EXPECT_NEAR(t.xi, 0.0, 1e-9);
    EXPECT_NEAR(t.eta, 0.0, 1e-9);
    auto east = gnomonic({c.ra_deg + 0.01, c.dec_deg}, c);
    EXPECT_GT(east.xi, 0.0);
    auto north = gnomonic({c.ra_deg, c.dec_deg + 0.01}, c);
    EXPECT_NEAR(north.eta, 36.0, 1e-3);
    EXPECT_NEAR(north.xi, 0.0, 1e-9);
}

TEST(Gnomonic, RoundTripAcrossSky) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ura(0, 360), udec(-89.9, 89.9), off(-2.0, 2.0);
    for (int i = 0; i < 5000; ++i) {
        SkyCoord c{ura(rng), udec(rng)};
        SkyCoord p = inverse_gnomonic({off(rng) * 3600, off(rng) * 3600}, c);
        auto t = gnomonic(p, c);
        SkyCoord back = inverse_gnomonic(t, c);
        EXPECT_LT(separation_by_vectors(p, back) * 3600, 1e-7);
    }
    EXPECT_THROW(gnomonic({180, 0}, {0, 0}), std::domain_error);
}

TEST(AngularSeparation, AgreesWithVectorForm) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ura(0, 360), udec(-90, 90);
    for (int i = 0; i < 5000; ++i) {
        SkyCoord a{ura(rng), udec(rng)}, b{ura(rng), udec(rng)};
        EXPECT_NEAR(angular_separation_deg(a, b), separation_by_vectors(a, b), 1e-9);
    }
    EXPECT_NEAR(angular_separation_deg({359.9999, 0}, {0.0001, 0}), 0.0002, 1e-12);
}

TEST(WrapRa, Range) {
    EXPECT_DOUBLE_EQ(wrap_ra(-10), 350);
    EXPECT_DOUBLE_EQ(wrap_ra(720.5), 0.5);
    EXPECT_GE(wrap_ra(-1e-18), 0.0);
    EXPECT_LT(wrap_ra(-1e-18), 360.0);
}

TEST(CalibrationSolution, PixelWorldRoundTrip) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> ura(0, 360), udec(-85, 85), uang(-kPi, kPi), uscale(0.5, 5.0),
        ux(-200, 1480), uy(-200, 920), ud(-50, 50);
    SensorGeometry g;
    for (int i = 0; i < 2000; ++i) {
        auto sol = CalibrationSolution::ideal({ura(rng), udec(rng)}, uscale(rng), uang(rng), g, i % 2 == 1);
        sol.translation = {ud(rng), ud(rng)};
        Vec2 p{ux(rng), uy(rng)};
        Vec2 back = world_to_pixel(pixel_to_world(p, sol), sol);
        EXPECT_LT((back - p).norm(), 1e-9);
    }
}

TEST(CalibrationSolution, IdealOrientation) {
    SensorGeometry g;
    SkyCoord c{10, 20};
    auto sol = CalibrationSolution::ideal(c, 1.584, 0.0, g);
    auto center = pixel_to_world({g.center_x(), g.center_y()}, sol);
    EXPECT_LT(angular_separation_deg(center, c) * 3600, 1e-9);
    auto right = pixel_to_tangent({g.center_x() + 100, g.center_y()}, sol);
    EXPECT_NEAR(right.x, 158.4, 1e-9);
    EXPECT_NEAR(right.y, 0.0, 1e-9);

    auto rot = CalibrationSolution::ideal(c, 2.0, kPi / 2, g);
    auto up = pixel_to_tangent({g.center_x() + 1, g.center_y()}, rot);
    EXPECT_NEAR(up.x, 0.0, 1e-12);
    EXPECT_NEAR(up.y, 2.0, 1e-12);
    EXPECT_NEAR(rot.rotation_angle(), kPi / 2, 1e-12);
    EXPECT_FALSE(rot.mirrored());
    EXPECT_TRUE(CalibrationSolution::ideal(c, 2.0, 0.3, g, true).mirrored());
}

TEST(ProjectStar, NarrowFieldOnly) {
    SensorGeometry g;
    SkyCoord c{100, 30};
    EXPECT_NO_THROW(project_star({100.5, 30.5}, c, 1.584, 0.0, g));
    EXPECT_THROW(project_star({100, 32.1}, c, 1.584, 0.0, g), std::domain_error);
    auto p = project_star(c, c, 1.584, 0.7, g);
    EXPECT_NEAR(p.x, g.center_x(), 1e-9);
    EXPECT_NEAR(p.y, g.center_y(), 1e-9);
}
