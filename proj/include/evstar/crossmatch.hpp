#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "evstar/catalog.hpp"
#include "evstar/sky.hpp"
#include "evstar/sourcefind.hpp"

namespace evstar {

struct SourceMatch {
    int source_id = 0;
    std::optional<std::int64_t> catalog_id;
    std::optional<std::size_t> catalog_index;  // into the catalog passed in
    double separation_arcsec = 0.0;  // to the match, or to the nearest unclaimed star when unmatched
    double magnitude = 0.0;          // catalog magnitude of the match, NaN when unmatched
    bool extended = false;
    SkyCoord world;  // weighted centroid on the sky
};

/// Greedy one-to-one association by increasing separation (ties by source
/// id, then catalog order) within radius_arcsec. Output follows source order.
std::vector<SourceMatch> match_external(std::span<const Source> sources, const CalibrationSolution& solution,
                                        const Catalog& catalog, double radius_arcsec = 4.0);

struct InternalMatch {
    int source_id = 0;
    std::optional<int> reference_id;
    double dx = 0.0;  // residual after removing the anchor offset, px
    double dy = 0.0;
};

struct InternalMatchResult {
    Vec2 anchor_offset;  // reference minus current anchor position, px
    int anchor_id = 0;
    int reference_anchor_id = 0;
    std::vector<InternalMatch> matches;
};

/// Aligns two source lists of the same field on their largest extended
/// source and pairs point sources greedily within tolerance_px per axis.
/// Throws std::invalid_argument if either list has no extended source.
InternalMatchResult match_internal(std::span<const Source> current, std::span<const Source> reference,
                                   double tolerance_px = 5.0);

}  // namespace evstar
