#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "evstar/event_model.hpp"
#include "evstar/sky.hpp"

namespace evstar {

struct CatalogStar {
    std::int64_t id = 0;
    SkyCoord position;
    double magnitude = 0.0;
};

using Catalog = std::vector<CatalogStar>;

/// CSV with header id,ra_deg,dec_deg,mag. Throws FormatError on bad rows.
Catalog read_catalog(const std::filesystem::path& path);
void write_catalog(const Catalog& catalog, const std::filesystem::path& path);

/// Stars within radius_deg of center, brightest first (ties by id).
Catalog cone_search(const Catalog& catalog, SkyCoord center, double radius_deg);

/// Reported pointing over time, linearly interpolated (RA wrap aware).
class MountTrack {
public:
    MountTrack() = default;
    explicit MountTrack(std::vector<MountReport> reports);

    bool empty() const;
    std::int64_t t_first() const;
    std::int64_t t_last() const;
    /// Throws std::out_of_range outside [t_first, t_last].
    SkyCoord at(std::int64_t t_us) const;
    const std::vector<MountReport>& reports() const { return reports_; }

private:
    std::vector<MountReport> reports_;
};

/// CSV with header t_us,ra_deg,dec_deg. Timestamps must not decrease.
MountTrack read_mount_track(const std::filesystem::path& path);
void write_mount_track(const MountTrack& track, const std::filesystem::path& path);

}  // namespace evstar
