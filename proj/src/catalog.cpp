#include "evstar/catalog.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "evstar/textio.hpp"

namespace evstar {

namespace {

template <typename Row>
void read_rows(const std::filesystem::path& path, std::size_t n_fields, Row&& row) {
    std::ifstream in(path);
    if (!in) throw FormatError(FormatError::Kind::Io, 0, "cannot open " + path.string());
    std::string line;
    std::uint64_t lineno = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
        auto fields = split_csv(line);
        if (first) {
            first = false;
            double probe;
            if (!parse_double(fields[0], probe)) continue;  // header row
        }
        if (fields.size() != n_fields)
            throw FormatError(FormatError::Kind::Malformed, lineno,
                              path.string() + " line " + std::to_string(lineno) + ": expected " +
                                  std::to_string(n_fields) + " fields");
        if (!row(fields))
            throw FormatError(FormatError::Kind::Malformed, lineno,
                              path.string() + " line " + std::to_string(lineno) + ": bad numeric field");
    }
}

}  // namespace

Catalog read_catalog(const std::filesystem::path& path) {
    Catalog out;
    read_rows(path, 4, [&](const std::vector<std::string_view>& f) {
        CatalogStar s;
        long long id;
        if (!parse_int64(f[0], id) || !parse_double(f[1], s.position.ra_deg) || !parse_double(f[2], s.position.dec_deg) ||
            !parse_double(f[3], s.magnitude))
            return false;
        if (std::abs(s.position.dec_deg) > 90.0) return false;
        s.id = id;
        s.position.ra_deg = wrap_ra(s.position.ra_deg);
        out.push_back(s);
        return true;
    });
    return out;
}

void write_catalog(const Catalog& catalog, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "id,ra_deg,dec_deg,mag\n";
    for (const auto& s : catalog)
        out << s.id << ',' << format_double(s.position.ra_deg) << ',' << format_double(s.position.dec_deg) << ','
            << format_double(s.magnitude) << '\n';
}

Catalog cone_search(const Catalog& catalog, SkyCoord center, double radius_deg) {
    Catalog out;
    for (const auto& s : catalog)
        if (angular_separation_deg(s.position, center) <= radius_deg) out.push_back(s);
    std::stable_sort(out.begin(), out.end(), [](const CatalogStar& a, const CatalogStar& b) {
        if (a.magnitude != b.magnitude) return a.magnitude < b.magnitude;
        return a.id < b.id;
    });
    return out;
}

MountTrack::MountTrack(std::vector<MountReport> reports) : reports_(std::move(reports)) {
    for (std::size_t i = 1; i < reports_.size(); ++i)
        if (reports_[i].t_us < reports_[i - 1].t_us)
            throw std::invalid_argument("mount track timestamps must not decrease");
}

bool MountTrack::empty() const { return reports_.empty(); }
std::int64_t MountTrack::t_first() const { return reports_.empty() ? 0 : reports_.front().t_us; }
std::int64_t MountTrack::t_last() const { return reports_.empty() ? 0 : reports_.back().t_us; }

SkyCoord MountTrack::at(std::int64_t t_us) const {
    if (reports_.empty() || t_us < t_first() || t_us > t_last())
        throw std::out_of_range("mount track does not cover t=" + std::to_string(t_us) + " us");
    auto it = std::lower_bound(reports_.begin(), reports_.end(), t_us,
                               [](const MountReport& r, std::int64_t t) { return r.t_us < t; });
    if (it->t_us == t_us) return it->center;
    const MountReport& b = *it;
    const MountReport& a = *(it - 1);
    const double f = double(t_us - a.t_us) / double(b.t_us - a.t_us);
    double dra = b.center.ra_deg - a.center.ra_deg;
    if (dra > 180.0) dra -= 360.0;
    if (dra < -180.0) dra += 360.0;
    return {wrap_ra(a.center.ra_deg + f * dra), a.center.dec_deg + f * (b.center.dec_deg - a.center.dec_deg)};
}

MountTrack read_mount_track(const std::filesystem::path& path) {
    std::vector<MountReport> reports;
    read_rows(path, 3, [&](const std::vector<std::string_view>& f) {
        long long t;
        MountReport r;
        if (!parse_int64(f[0], t) || !parse_double(f[1], r.center.ra_deg) || !parse_double(f[2], r.center.dec_deg))
            return false;
        r.t_us = t;
        reports.push_back(r);
        return true;
    });
    return MountTrack(std::move(reports));
}

void write_mount_track(const MountTrack& track, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "t_us,ra_deg,dec_deg\n";
    for (const auto& r : track.reports())
        out << r.t_us << ',' << format_double(r.center.ra_deg) << ',' << format_double(r.center.dec_deg) << '\n';
}

}  // namespace evstar
