#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "evstar/event_model.hpp"
#include "evstar/geometry.hpp"

namespace evstar {

struct SkyCoord {
    double ra_deg = 0.0;
    double dec_deg = 0.0;
};

/// Telescope-reported pointing at a given stream time.
struct MountReport {
    std::int64_t t_us = 0;
    SkyCoord center;
};

/// Standard coordinates on the tangent plane, in arcsec. xi points east,
/// eta points north.
struct TangentPoint {
    double xi = 0.0;
    double eta = 0.0;
};

/// Gnomonic projection about `center`. Throws std::domain_error for points
/// 90 degrees or more from the center.
TangentPoint gnomonic(SkyCoord p, SkyCoord center);
SkyCoord inverse_gnomonic(TangentPoint t, SkyCoord center);

double angular_separation_deg(SkyCoord a, SkyCoord b);

/// Wraps to [0, 360).
double wrap_ra(double ra_deg);

/// Pixel-to-world mapping on the tangent plane anchored at field_center:
///
///   t = pixel_scale * (rotation * (p - reference_pixel) + translation)
///
/// with t in arcsec and p in pixels. rotation is orthonormal; a determinant of
/// -1 means the sensor is mirrored relative to the sky.
struct CalibrationSolution {
    Eigen::Matrix2d rotation = Eigen::Matrix2d::Identity();
    double pixel_scale = 1.0;  // arcsec / px
    Eigen::Vector2d translation = Eigen::Vector2d::Zero();  // px
    SkyCoord field_center;
    Vec2 reference_pixel;  // geometric image center
    double rms_residual_arcsec = 0.0;
    int n_matched = 0;

    /// A solution with no mount offset: image center maps to `center`.
    static CalibrationSolution ideal(SkyCoord center, double pixel_scale, double rotation_rad,
                                     const SensorGeometry& geometry, bool mirrored = false);

    double rotation_angle() const;
    bool mirrored() const { return rotation.determinant() < 0.0; }
};

Vec2 pixel_to_tangent(Vec2 p, const CalibrationSolution& sol);  // arcsec
Vec2 tangent_to_pixel(TangentPoint t, const CalibrationSolution& sol);

SkyCoord pixel_to_world(Vec2 p, const CalibrationSolution& sol);
Vec2 world_to_pixel(SkyCoord w, const CalibrationSolution& sol);

/// Ideal camera projection for synthesis. Narrow-field only: throws
/// std::domain_error when the star is 2 degrees or more from the center.
Vec2 project_star(SkyCoord world, SkyCoord center, double pixel_scale, double rotation_rad,
                  const SensorGeometry& geometry, bool mirrored = false);

inline constexpr double kNarrowFieldLimitDeg = 2.0;

}  // namespace evstar
