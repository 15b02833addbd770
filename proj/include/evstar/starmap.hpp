#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evstar/event_model.hpp"
#include "evstar/geometry.hpp"

namespace evstar {

enum class MapMode { Dual, MonoOn };

const char* to_string(MapMode m);
MapMode map_mode_from_string(const std::string& s);

/// Time-warp to a common reference: x' = x - v (t - t0).
inline Vec2 warp(Vec2 p, std::int64_t t_us, Vec2 velocity_px_s, std::int64_t t0_us) {
    const double dt = (t_us - t0_us) * 1e-6;
    return {p.x - velocity_px_s.x * dt, p.y - velocity_px_s.y * dt};
}

inline Vec2 unwarp(Vec2 p, std::int64_t t_us, Vec2 velocity_px_s, std::int64_t t0_us) {
    const double dt = (t_us - t0_us) * 1e-6;
    return {p.x + velocity_px_s.x * dt, p.y + velocity_px_s.y * dt};
}

struct AccumulationOptions {
    Vec2 velocity;                     // px / s
    std::optional<std::int64_t> t0_us; // warp reference; window start when unset
    MapMode mode = MapMode::Dual;
    bool bilinear = false;
    bool pad = true;  // grow the canvas so no warped event is dropped
    bool index_events = true;
};

/// A 2-D accumulation of (optionally warped) events with a per-pixel index of
/// contributing events. Frame pixel (i, j) covers sensor coordinate
/// (i - origin_x, j - origin_y).
struct AccumulationFrame {
    int width = 0;
    int height = 0;
    int origin_x = 0;
    int origin_y = 0;
    std::vector<double> values;          // row-major
    std::vector<std::uint32_t> offsets;  // CSR row pointer, size width * height + 1
    std::vector<std::uint32_t> indices;  // stream indices, grouped by pixel
    std::size_t n_events = 0;            // events that landed on the canvas
    std::size_t dropped = 0;
    std::int64_t t_start_us = 0;
    std::int64_t t_end_us = 0;
    std::int64_t t0_us = 0;
    Vec2 velocity;
    MapMode mode = MapMode::Dual;

    bool empty() const { return n_events == 0; }
    std::size_t pixel(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
    double at(int x, int y) const { return values[pixel(x, y)]; }
    std::span<const std::uint32_t> events_at(std::size_t pixel_index) const {
        return {indices.data() + offsets[pixel_index], indices.data() + offsets[pixel_index + 1]};
    }
    double window_s() const { return (t_end_us - t_start_us) * 1e-6; }
    Vec2 to_sensor(Vec2 frame_px) const { return {frame_px.x - origin_x, frame_px.y - origin_y}; }
};

/// Accumulates events with t_start <= t < t_end. Dual mode adds the polarity
/// sign, mono-ON adds 1 per ON event and ignores OFF events.
AccumulationFrame accumulate(const EventStream& stream, std::int64_t t_start_us, std::int64_t t_end_us,
                             const AccumulationOptions& opts);

struct ClipResult {
    std::vector<std::uint8_t> mask;  // 1 = significant pixel
    double mean = 0.0;
    double stddev = 0.0;
    double threshold = 0.0;
    int iterations = 0;
};

/// Iterative two-sided sigma clipping of |value| over the whole frame.
/// Pixels strictly above mean + n_sigma * stddev of the converged background
/// are significant.
ClipResult sigma_clip(const AccumulationFrame& frame, double n_sigma = 3.0, int max_iter = 10);

/// 8-connected component labelling. Labels are 0 for background and 1..n in
/// raster order of each component's first pixel.
struct Components {
    std::vector<int> labels;
    int count = 0;
};
Components label_components(std::span<const std::uint8_t> mask, int width, int height);

struct VelocitySchedule {
    double integration_s = 0.05;
    double interval_s = 0.05;
};

/// Frame schedule for a given slew speed.
VelocitySchedule schedule_for_speed(double speed_deg_s);

struct VelocityOptions {
    double span_s = 6.0;  // frames are taken within +-span/2 of the stream midpoint
    int min_blob_area = 4;
    int blob_link_px = 5;  // mask pixels this close (Chebyshev) belong to one blob
    int max_blobs = 20;   // leading blobs per frame chained into tracks
    int vote_blobs = 5;   // leading blobs per frame voting on the common motion
    double match_tolerance_px = 2.0;   // displacement agreement, plus 5% of the displacement
};

struct VelocityEstimate {
    Vec2 velocity_px_s;
    bool valid = false;
    VelocitySchedule schedule;
    std::size_t n_frames = 0;
    std::size_t n_valid_frames = 0;
    std::vector<Vec2> pair_velocities;
    std::size_t n_used = 0;
};

/// Motion of the leading blobs across frames. Blob pairings between
/// consecutive frames vote for a common motion; pairings that agree with it
/// are chained into tracks and one velocity is fitted to all tracks.
/// pair_velocities holds the best agreeing pairing per frame pair and
/// n_used the number of chained links.
VelocityEstimate estimate_velocity(const EventStream& stream, const VelocitySchedule& schedule,
                                   const VelocityOptions& opts = {});

/// Coarse pass with the fastest schedule, then a refined pass with the
/// schedule matching the coarse speed.
VelocityEstimate estimate_velocity_auto(const EventStream& stream, double pixel_scale_arcsec,
                                        const VelocityOptions& opts = {});

struct StarMapOptions {
    double window_s = 3.0;
    MapMode mode = MapMode::Dual;
    bool bilinear = false;
    std::optional<std::int64_t> center_us;  // stream midpoint when unset
};

/// Warped accumulation over a window centred on the requested time, with the
/// warp reference at the window centre.
AccumulationFrame build_star_map(const EventStream& stream, Vec2 velocity_px_s, const StarMapOptions& opts = {});

struct RefineOptions {
    double window_s = 3.0;
    int iterations = 3;
    std::size_t min_events = 20;  // per compensated blob
    double n_sigma = 3.0;
};

struct VelocityRefinement {
    Vec2 velocity_px_s;
    std::size_t n_blobs = 0;  // blobs voting in the last pass
    int iterations = 0;
};

/// Removes the residual drift left in a star map: warps ON events with the
/// given velocity, regresses each significant blob's warped positions on
/// time and adds the median slope. Unchanged when no blob qualifies.
VelocityRefinement refine_velocity(const EventStream& stream, Vec2 velocity_px_s, const RefineOptions& opts = {});

/// 16-bit PGM of |value| (clamped).
void write_pgm(const AccumulationFrame& frame, const std::filesystem::path& path);

}  // namespace evstar
