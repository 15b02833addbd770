#include "evstar/crossmatch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>

#include "evstar/kdtree.hpp"

namespace evstar {

std::vector<SourceMatch> match_external(std::span<const Source> sources, const CalibrationSolution& solution,
                                        const Catalog& catalog, double radius_arcsec) {
    std::vector<SourceMatch> out(sources.size());
    std::vector<KdTree<2>::Point> cat_t;
    cat_t.reserve(catalog.size());
    // Stars on the far hemisphere can never match; park them out of reach.
    for (const auto& s : catalog) {
        try {
            const TangentPoint t = gnomonic(s.position, solution.field_center);
            cat_t.push_back({t.xi, t.eta});
        } catch (const std::domain_error&) {
            cat_t.push_back({std::numeric_limits<double>::max(), std::numeric_limits<double>::max()});
        }
    }
    const KdTree<2> tree(cat_t);
    std::vector<KdTree<2>::Point> src_t(sources.size());
    std::vector<std::tuple<double, int, std::size_t, std::size_t>> cand;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        const Vec2 t = pixel_to_tangent(sources[i].centroid, solution);
        src_t[i] = {t.x, t.y};
        out[i].source_id = sources[i].id;
        out[i].extended = sources[i].kind == SourceKind::Extended;
        out[i].world = inverse_gnomonic({t.x, t.y}, solution.field_center);
        out[i].magnitude = std::numeric_limits<double>::quiet_NaN();
        for (std::size_t c : tree.radius(src_t[i], radius_arcsec)) {
            const double d = std::hypot(src_t[i][0] - cat_t[c][0], src_t[i][1] - cat_t[c][1]);
            cand.emplace_back(d, sources[i].id, i, c);
        }
    }
    std::sort(cand.begin(), cand.end());
    std::vector<std::uint8_t> used_s(sources.size(), 0), used_c(catalog.size(), 0);
    for (const auto& [d, id, i, c] : cand) {
        if (used_s[i] || used_c[c]) continue;
        used_s[i] = used_c[c] = 1;
        out[i].catalog_id = catalog[c].id;
        out[i].catalog_index = c;
        out[i].separation_arcsec = d;
        out[i].magnitude = catalog[c].magnitude;
    }
    for (std::size_t i = 0; i < sources.size(); ++i) {
        if (used_s[i]) continue;
        auto nn = tree.nearest_if(src_t[i], [&](std::size_t c) { return !used_c[c]; });
        out[i].separation_arcsec = nn ? nn->second : std::numeric_limits<double>::infinity();
    }
    return out;
}

namespace {

const Source* largest_extended(std::span<const Source> s) {
    const Source* best = nullptr;
    for (const auto& x : s)
        if (x.kind == SourceKind::Extended &&
            (!best || x.area > best->area || (x.area == best->area && x.n_events > best->n_events)))
            best = &x;
    return best;
}

}  // namespace

InternalMatchResult match_internal(std::span<const Source> current, std::span<const Source> reference,
                                   double tolerance_px) {
    const Source* a = largest_extended(current);
    const Source* b = largest_extended(reference);
    if (!a || !b) throw std::invalid_argument("internal match needs an extended source in both lists");
    InternalMatchResult r;
    r.anchor_id = a->id;
    r.reference_anchor_id = b->id;
    r.anchor_offset = b->centroid - a->centroid;

    std::vector<std::tuple<double, std::size_t, std::size_t>> cand;
    for (std::size_t i = 0; i < current.size(); ++i) {
        if (current[i].kind == SourceKind::Extended) continue;
        const Vec2 p = current[i].centroid + r.anchor_offset;
        for (std::size_t j = 0; j < reference.size(); ++j) {
            if (reference[j].kind == SourceKind::Extended) continue;
            const Vec2 d = reference[j].centroid - p;
            if (std::abs(d.x) <= tolerance_px && std::abs(d.y) <= tolerance_px) cand.emplace_back(d.norm(), i, j);
        }
    }
    std::sort(cand.begin(), cand.end());
    std::vector<std::uint8_t> used_i(current.size(), 0), used_j(reference.size(), 0);
    std::vector<InternalMatch> by_source(current.size());
    for (std::size_t i = 0; i < current.size(); ++i) by_source[i].source_id = current[i].id;
    for (const auto& [d, i, j] : cand) {
        if (used_i[i] || used_j[j]) continue;
        used_i[i] = used_j[j] = 1;
        by_source[i].reference_id = reference[j].id;
        const Vec2 res = reference[j].centroid - (current[i].centroid + r.anchor_offset);
        by_source[i].dx = res.x;
        by_source[i].dy = res.y;
    }
    for (std::size_t i = 0; i < current.size(); ++i)
        if (current[i].kind != SourceKind::Extended) r.matches.push_back(by_source[i]);
    return r;
}

}  // namespace evstar
