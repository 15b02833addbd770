#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "evstar/event_model.hpp"
#include "evstar/geometry.hpp"
#include "evstar/sky.hpp"

namespace evstar {

struct SceneStar {
    std::int64_t id = 0;
    SkyCoord position;
    double magnitude = 10.0;
};

struct HotPixel {
    int x = 0;
    int y = 0;
    double rate = 1.0;  // events / s
};

/// Pixel response used by the generator.
///
/// A star of magnitude m has peak log-contrast K0 = gain * 10^(-0.4 m),
/// expressed in units of the contrast threshold. A moving PSF only dwells
/// sigma/|v| seconds on a pixel, so the photoreceptor low-pass attenuates it
/// to K = K0 / (1 + |v| * pixel_time_constant / sigma). Pixels whose attenuated
/// contrast stays below one threshold never fire; the event density inside the
/// firing region follows the positive (ON) or negative (OFF) time derivative of
/// the PSF, scaled by K / (1 + K / saturation) to model refractory limits.
struct SensorModel {
    double gain = 1.7e6;
    double pixel_time_constant_s = 0.5;
    double saturation = 2000.0;
    double on_off_asymmetry = 0.7;
    double wake_tau_s = 0.0;          // OFF emission delay; 0 disables wake trails
    double scintillation_rate = 0.0;  // static-source events / s per unit contrast
};

/// What the generator predicts for one star at a given apparent speed.
struct StarResponse {
    double peak_contrast = 0.0;       // K0
    double attenuated_contrast = 0.0; // K
    double density_scale = 0.0;       // K / (1 + K / saturation)
    double firing_radius = 0.0;       // px; 0 when the star never crosses threshold
    double on_rate = 0.0;             // events / s while in view
    double off_rate = 0.0;
    double scintillation_rate = 0.0;
};

StarResponse star_response(const SensorModel& sensor, double magnitude, double speed_px_s, double psf_sigma);

struct SyntheticScene {
    std::vector<SceneStar> stars;
    SensorGeometry geometry;
    Vec2 slew_deg_s;  // pointing rate, (east, north) on the sky
    double duration_s = 10.0;
    SkyCoord field_center;  // true pointing at center_time_s
    double center_time_s = -1.0;  // negative: duration / 2
    double pixel_scale = 1.584;   // arcsec / px
    double rotation_deg = 0.0;
    bool mirrored = false;
    double psf_sigma = 1.0;    // px
    double noise_rate = 0.0;   // events / px / s
    std::vector<HotPixel> hot_pixels;
    Vec2 pointing_offset_arcsec;  // mount-reported minus true pointing
    double wind_step_arcsec = 0.0;  // random-walk step; 0 disables wind
    double wind_interval_s = 0.05;
    double mount_report_interval_s = 0.5;
    SensorModel sensor;
    std::uint64_t seed = 1;

    double reference_time_s() const { return center_time_s < 0.0 ? 0.5 * duration_s : center_time_s; }
};

inline constexpr std::int32_t kLabelNoise = -1;
inline constexpr std::int32_t kLabelHotPixel = -2;

struct StarTruth {
    std::int64_t id = 0;
    double magnitude = 0.0;
    SkyCoord world;
    Vec2 position_at_reference;  // px, without wind
    StarResponse response;
    std::size_t n_events = 0;
};

struct GroundTruth {
    Vec2 field_velocity_px_s;
    double reference_time_s = 0.0;
    CalibrationSolution solution;  // true mapping at the reference time
    std::vector<StarTruth> stars;
    std::vector<std::int32_t> labels;  // per event: star index, kLabelNoise or kLabelHotPixel
    std::vector<std::pair<double, Vec2>> wind;  // (t s, pointing jitter px), empty when calm
    std::vector<MountReport> mount_track;       // reported pointing, no wind
    std::vector<std::string> warnings;

    Vec2 jitter_at(double t_s) const;
    /// True pixel position of star i at time t, wind included.
    Vec2 star_position(std::size_t i, double t_s) const;
    /// Seconds star i spends with its center on the sensor inside [t0, t1).
    double time_in_view(std::size_t i, double t0_s, double t1_s, const SensorGeometry& g) const;
    std::size_t count_label(std::int32_t label) const;
};

/// Deterministic in (scene, seed). Throws std::invalid_argument for invalid
/// scenes; a star field that never enters the sensor only produces a warning.
std::pair<EventStream, GroundTruth> synthesize(const SyntheticScene& scene);

/// Uniformly scattered stars whose reference-time pixel positions fall in
/// [x0, x1) x [y0, y1), with magnitudes uniform in [mag_min, mag_max].
std::vector<SceneStar> random_star_field(const SyntheticScene& scene, int count, double mag_min, double mag_max,
                                         double x0, double y0, double x1, double y1, std::uint64_t seed);

/// Pixel region a star must occupy at the reference time to be on the
/// sensor at some point in [t0, t1): the sensor rectangle swept backwards.
struct PixelRegion {
    double x0, y0, x1, y1;
};
PixelRegion swept_region(const SyntheticScene& scene, double t0_s, double t1_s);

Vec2 field_velocity_px(const SyntheticScene& scene);

/// Parameters of a random star field swept by a constant slew.
struct FieldSpec {
    int n_stars = 60;  // per sensor area, over the swept region
    double mag_min = 8.0;
    double mag_max = 13.0;
    double speed_deg_s = 0.002;
    double heading_deg = 30.0;  // slew direction, east through north
    double rotation_deg = 15.0;
    bool mirrored = false;
    double duration_s = 6.0;
    double noise_rate = 0.005;
    double wake_tau_s = 0.0;
    int n_hot_pixels = 0;
    Vec2 pointing_offset_arcsec;
    double wind_step_arcsec = 0.0;
    SkyCoord center{80.0, 20.0};
    std::uint64_t seed = 1;
};

SyntheticScene make_field_scene(const FieldSpec& spec);

}  // namespace evstar
