#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "evstar/event_model.hpp"
#include "evstar/geometry.hpp"
#include "evstar/starmap.hpp"

namespace evstar {

inline constexpr int kDbscanNoise = -1;

/// Grid-accelerated DBSCAN with inclusive radius. Core points are visited in
/// index order, so cluster k is the one holding the k-th lowest core index;
/// a border point reachable from several clusters joins the lowest one.
template <std::size_t D>
std::vector<int> dbscan(std::span<const std::array<double, D>> points, double eps, int min_points);

struct Circle {
    Vec2 center;
    double radius = 0.0;
};

/// Smallest circle containing every point (Welzl). Empty input gives radius 0.
Circle min_enclosing_circle(std::span<const Vec2> points);

struct SourceFinderOptions {
    double n_sigma = 3.0;
    int clip_max_iter = 10;
    double eps = 3.0;
    int min_points = 6;
    // px per second of event time in the clustering metric; unset means the
    // frame window spans eps
    std::optional<double> time_scale;
    std::size_t extended_threshold = 10000;
};

enum class SourceKind { Point, Extended };

struct Source {
    int id = 0;
    SourceKind kind = SourceKind::Point;
    bool fallback = false;  // grouped by pixel connectivity instead of clustering
    std::size_t n_events = 0;
    std::size_t n_on = 0;
    std::size_t n_off = 0;
    int area = 0;  // px
    Vec2 centroid;            // |value|-weighted, sensor coordinates
    Vec2 geometric_centroid;  // unweighted pixel mean
    double equivalent_diameter = 0.0;
    double extent = 0.0;
    double event_rate = 0.0;  // events / s over the map window
    double flux = 0.0;        // sum of |value| over the source pixels
};

struct SourceList {
    std::vector<Source> sources;
    ClipResult clip;
    std::size_t n_noise_events = 0;
    std::size_t n_groups = 0;
    std::size_t n_fallback_groups = 0;
};

/// Sources ordered by decreasing event rate (ties by position), ids 0..n-1.
SourceList find_sources(const AccumulationFrame& frame, const EventStream& stream,
                        const SourceFinderOptions& opts = {});

/// Area-derived shape features of a pixel set (frame or sensor coordinates).
struct ShapeFeatures {
    int area = 0;
    Vec2 geometric_centroid;
    double equivalent_diameter = 0.0;
    double extent = 0.0;
};
ShapeFeatures shape_features(std::span<const Vec2> pixel_centers);

}  // namespace evstar
