#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evstar/catalog.hpp"
#include "evstar/kdtree.hpp"
#include "evstar/sky.hpp"
#include "evstar/sourcefind.hpp"
#include "evstar/starmap.hpp"

namespace evstar {

/// Geometric hash of four points. A and B are the most separated pair and
/// are sent to (0, 0) and (1, 1) by a similarity; the code is the image of C
/// and D. Among the two labellings of A and B the one with mean x of C and D
/// at most 1/2 is used, and C, D are ordered by x then y.
struct Quad {
    std::array<double, 4> code{};
    std::array<int, 4> members{};  // input indices in canonical order A, B, C, D
};

std::optional<Quad> make_quad(const std::array<Vec2, 4>& pts, const std::array<int, 4>& ids);

/// All quads whose A-B distance lies in [dmin, dmax] and whose C and D fall
/// inside the circle with diameter AB. Ordered by the largest member index,
/// then lexicographically, so quads of bright stars come first when `points`
/// is sorted by brightness.
std::vector<Quad> enumerate_quads(std::span<const Vec2> points, double dmin, double dmax);

/// Least-squares similarity w = a z + b between complex points (z as x + iy).
struct Similarity {
    double a_re = 1.0, a_im = 0.0, b_re = 0.0, b_im = 0.0;

    Vec2 apply(Vec2 z) const { return {a_re * z.x - a_im * z.y + b_re, a_im * z.x + a_re * z.y + b_im}; }
    double scale() const { return std::hypot(a_re, a_im); }
};
Similarity fit_similarity(std::span<const Vec2> from, std::span<const Vec2> to);

struct QuadIndex {
    SkyCoord center;
    Catalog stars;                // brightest first
    std::vector<Vec2> tangent;    // arcsec about center
    std::vector<Quad> quads;
    KdTree<4> tree;
};

QuadIndex build_index(const Catalog& catalog, SkyCoord center, double radius_deg, std::size_t max_stars,
                      double dmin_arcsec, double dmax_arcsec);

struct SolveOptions {
    double scale_hint = 1.584;  // arcsec / px
    double scale_tolerance = 0.1;
    double search_radius_deg = 0.1;  // allowed distance of the image center from the hint
    std::size_t max_sources = 50;
    std::size_t max_index_stars = 150;
    double min_quad_fraction = 0.1;  // quad diameter bounds as fractions of the short sensor side
    double max_quad_fraction = 0.95;
    double code_tolerance = 0.01;
    double match_radius_px = 2.0;
    std::size_t max_hypotheses = 5000;
    double max_rms_px = 1.5;
    double min_match_fraction = 0.5;
    int min_matches = 4;
    bool allow_mirror = true;
};

struct SolveResult {
    bool solved = false;
    std::string status;
    CalibrationSolution solution;
    std::size_t n_sources_used = 0;
    std::size_t n_index_stars = 0;
    std::size_t n_index_quads = 0;
    std::size_t n_source_quads = 0;
    std::size_t n_hypotheses = 0;
    std::size_t catalog_in_fov = 0;
    int n_inliers = 0;
    double rms_px = 0.0;
    std::vector<std::pair<int, std::int64_t>> matches;  // (source position index, catalog id)
};

/// Blind-within-a-cone solve. `positions` are sensor pixel coordinates
/// ordered by decreasing brightness.
SolveResult solve_positions(std::span<const Vec2> positions, const Catalog& catalog, SkyCoord center_hint,
                            const SensorGeometry& geometry, const SolveOptions& opts = {});

/// Uses the brightest sources by event rate; match indices are source ids.
SolveResult solve_field(std::span<const Source> sources, const Catalog& catalog, SkyCoord center_hint,
                        const SensorGeometry& geometry, const SolveOptions& opts = {});

struct WindowOptions {
    double window_s = 3.0;
    MapMode mode = MapMode::Dual;
    SourceFinderOptions finder;
    SolveOptions solve;
};

struct WindowSolve {
    int index = 0;
    std::int64_t t_start_us = 0;
    std::int64_t t_end_us = 0;
    std::int64_t t_center_us = 0;
    SkyCoord hint;
    SourceList sources;
    SolveResult result;
};

/// Independent solve of consecutive windows, each hinted by the mount
/// pointing at the window centre. A trailing partial window is kept when it
/// spans at least half a window. Windows the mount track does not cover are
/// reported unsolved.
std::vector<WindowSolve> solve_windows(const EventStream& stream, Vec2 velocity_px_s, const MountTrack& mount,
                                       const Catalog& catalog, const WindowOptions& opts = {});

/// Carries a solved mapping to other times by re-anchoring it on the
/// mount-reported pointing. Refuses times outside the mount track.
class PriorProjector {
public:
    PriorProjector(CalibrationSolution prior, MountTrack mount) : prior_(std::move(prior)), mount_(std::move(mount)) {}

    CalibrationSolution at(std::int64_t t_us) const;
    Vec2 world_to_pixel(SkyCoord w, std::int64_t t_us) const { return evstar::world_to_pixel(w, at(t_us)); }
    SkyCoord pixel_to_world(Vec2 p, std::int64_t t_us) const { return evstar::pixel_to_world(p, at(t_us)); }

private:
    CalibrationSolution prior_;
    MountTrack mount_;
};

}  // namespace evstar
