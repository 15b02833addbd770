#include "evstar/sky.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace evstar {

TangentPoint gnomonic(SkyCoord p, SkyCoord center) {
    const double a = p.ra_deg * kDegToRad, d = p.dec_deg * kDegToRad;
    const double a0 = center.ra_deg * kDegToRad, d0 = center.dec_deg * kDegToRad;
    const double cos_da = std::cos(a - a0);
    const double cos_c = std::sin(d0) * std::sin(d) + std::cos(d0) * std::cos(d) * cos_da;
    if (cos_c <= 0.0) throw std::domain_error("gnomonic: point is on the far hemisphere");
    const double xi = std::cos(d) * std::sin(a - a0) / cos_c;
    const double eta = (std::cos(d0) * std::sin(d) - std::sin(d0) * std::cos(d) * cos_da) / cos_c;
    return {xi * kArcsecPerRad, eta * kArcsecPerRad};
}

SkyCoord inverse_gnomonic(TangentPoint t, SkyCoord center) {
    const double x = t.xi / kArcsecPerRad, y = t.eta / kArcsecPerRad;
    const double a0 = center.ra_deg * kDegToRad, d0 = center.dec_deg * kDegToRad;
    const double denom = std::cos(d0) - y * std::sin(d0);
    const double dec = std::atan2(std::sin(d0) + y * std::cos(d0), std::hypot(x, denom));
    const double ra = a0 + std::atan2(x, denom);
    return {wrap_ra(ra / kDegToRad), dec / kDegToRad};
}

double angular_separation_deg(SkyCoord a, SkyCoord b) {
    // Haversine keeps precision for the sub-arcsecond separations we care about.
    const double d1 = a.dec_deg * kDegToRad, d2 = b.dec_deg * kDegToRad;
    const double dd = d2 - d1, da = (b.ra_deg - a.ra_deg) * kDegToRad;
    const double h = std::sin(dd / 2) * std::sin(dd / 2) + std::cos(d1) * std::cos(d2) * std::sin(da / 2) * std::sin(da / 2);
    return 2.0 * std::asin(std::min(1.0, std::sqrt(h))) / kDegToRad;
}

double wrap_ra(double ra_deg) {
    double r = std::fmod(ra_deg, 360.0);
    if (r < 0) r += 360.0;
    if (r >= 360.0) r -= 360.0;
    return r;
}

CalibrationSolution CalibrationSolution::ideal(SkyCoord center, double pixel_scale, double rotation_rad,
                                               const SensorGeometry& geometry, bool mirrored) {
    CalibrationSolution s;
    const double c = std::cos(rotation_rad), sn = std::sin(rotation_rad);
    s.rotation << c, -sn, sn, c;
    if (mirrored) s.rotation.col(1) *= -1.0;
    s.pixel_scale = pixel_scale;
    s.field_center = center;
    s.reference_pixel = {geometry.center_x(), geometry.center_y()};
    return s;
}

double CalibrationSolution::rotation_angle() const { return std::atan2(rotation(1, 0), rotation(0, 0)); }

Vec2 pixel_to_tangent(Vec2 p, const CalibrationSolution& sol) {
    const Eigen::Vector2d xi(p.x - sol.reference_pixel.x, p.y - sol.reference_pixel.y);
    const Eigen::Vector2d t = sol.pixel_scale * (sol.rotation * xi + sol.translation);
    return {t.x(), t.y()};
}

Vec2 tangent_to_pixel(TangentPoint t, const CalibrationSolution& sol) {
    const Eigen::Vector2d tw(t.xi, t.eta);
    const Eigen::Vector2d xi = sol.rotation.transpose() * (tw / sol.pixel_scale - sol.translation);
    return {xi.x() + sol.reference_pixel.x, xi.y() + sol.reference_pixel.y};
}

SkyCoord pixel_to_world(Vec2 p, const CalibrationSolution& sol) {
    const Vec2 t = pixel_to_tangent(p, sol);
    return inverse_gnomonic({t.x, t.y}, sol.field_center);
}

Vec2 world_to_pixel(SkyCoord w, const CalibrationSolution& sol) {
    return tangent_to_pixel(gnomonic(w, sol.field_center), sol);
}

Vec2 project_star(SkyCoord world, SkyCoord center, double pixel_scale, double rotation_rad,
                  const SensorGeometry& geometry, bool mirrored) {
    if (angular_separation_deg(world, center) >= kNarrowFieldLimitDeg)
        throw std::domain_error("project_star: star is outside the narrow-field domain");
    return world_to_pixel(world, CalibrationSolution::ideal(center, pixel_scale, rotation_rad, geometry, mirrored));
}

}  // namespace evstar
