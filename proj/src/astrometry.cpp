#include "evstar/astrometry.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <tuple>

namespace evstar {

namespace {

using cplx = std::complex<double>;

cplx as_complex(Vec2 v) { return {v.x, v.y}; }

CalibrationSolution to_solution(const Similarity& s, bool mirrored, SkyCoord center, const SensorGeometry& g) {
    CalibrationSolution sol;
    const double w = s.scale();
    const double c = s.a_re / w, sn = s.a_im / w;
    sol.rotation << c, -sn, sn, c;
    if (mirrored) sol.rotation.col(1) *= -1.0;
    sol.pixel_scale = w;
    sol.translation = {s.b_re / w, s.b_im / w};
    sol.field_center = center;
    sol.reference_pixel = {g.center_x(), g.center_y()};
    return sol;
}

struct Verification {
    int inliers = 0;
    double rms_px = 0.0;
    std::size_t in_fov = 0;
    std::vector<std::pair<int, int>> pairs;  // (source, region star)
};

struct Hypothesis {
    Similarity sim;
    bool mirrored = false;
    Verification v;
    std::size_t ordinal = 0;
};

bool better(const Verification& a, std::size_t oa, const Verification& b, std::size_t ob) {
    if (a.inliers != b.inliers) return a.inliers > b.inliers;
    if (a.rms_px != b.rms_px) return a.rms_px < b.rms_px;
    return oa < ob;
}

}  // namespace

std::optional<Quad> make_quad(const std::array<Vec2, 4>& pts, const std::array<int, 4>& ids) {
    int ia = 0, ib = 1;
    double best = -1.0;
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) {
            const double d = (pts[i] - pts[j]).norm();
            if (d > best) {
                best = d;
                ia = i;
                ib = j;
            }
        }
    if (!(best > 0.0)) return std::nullopt;
    int rest[2], k = 0;
    for (int i = 0; i < 4; ++i)
        if (i != ia && i != ib) rest[k++] = i;
    const cplx a = as_complex(pts[ia]), b = as_complex(pts[ib]);
    const cplx unit(1.0, 1.0);
    cplx wc = (as_complex(pts[rest[0]]) - a) / (b - a) * unit;
    cplx wd = (as_complex(pts[rest[1]]) - a) / (b - a) * unit;
    if (0.5 * (wc.real() + wd.real()) > 0.5) {
        std::swap(ia, ib);
        wc = unit - wc;
        wd = unit - wd;
    }
    int ic = rest[0], id = rest[1];
    if (wd.real() < wc.real() || (wd.real() == wc.real() && wd.imag() < wc.imag())) {
        std::swap(wc, wd);
        std::swap(ic, id);
    }
    Quad q;
    q.code = {wc.real(), wc.imag(), wd.real(), wd.imag()};
    q.members = {ids[ia], ids[ib], ids[ic], ids[id]};
    return q;
}

std::vector<Quad> enumerate_quads(std::span<const Vec2> points, double dmin, double dmax) {
    const int n = static_cast<int>(points.size());
    std::vector<std::pair<std::array<int, 4>, Quad>> keyed;
    std::vector<int> inside;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double d = (points[i] - points[j]).norm();
            if (d < dmin || d > dmax || d == 0.0) continue;
            const Vec2 mid = 0.5 * (points[i] + points[j]);
            const double r = 0.5 * d;
            inside.clear();
            for (int k = 0; k < n; ++k)
                if (k != i && k != j && (points[k] - mid).norm() < r) inside.push_back(k);
            for (std::size_t a = 0; a < inside.size(); ++a)
                for (std::size_t b = a + 1; b < inside.size(); ++b) {
                    const int c = inside[a], e = inside[b];
                    auto q = make_quad({points[i], points[j], points[c], points[e]}, {i, j, c, e});
                    if (!q) continue;
                    std::array<int, 4> key{i, j, c, e};
                    std::sort(key.begin(), key.end(), std::greater<>());
                    keyed.emplace_back(key, *q);
                }
        }
    std::sort(keyed.begin(), keyed.end(), [](const auto& l, const auto& r) { return l.first < r.first; });
    std::vector<Quad> out;
    out.reserve(keyed.size());
    for (auto& [k, q] : keyed) out.push_back(q);
    return out;
}

Similarity fit_similarity(std::span<const Vec2> from, std::span<const Vec2> to) {
    if (from.size() != to.size() || from.size() < 2) throw std::invalid_argument("fit_similarity needs >= 2 pairs");
    cplx zm, wm;
    for (std::size_t i = 0; i < from.size(); ++i) {
        zm += as_complex(from[i]);
        wm += as_complex(to[i]);
    }
    zm /= double(from.size());
    wm /= double(from.size());
    cplx num;
    double den = 0.0;
    for (std::size_t i = 0; i < from.size(); ++i) {
        const cplx dz = as_complex(from[i]) - zm, dw = as_complex(to[i]) - wm;
        num += std::conj(dz) * dw;
        den += std::norm(dz);
    }
    if (den == 0.0) throw std::invalid_argument("fit_similarity: degenerate input");
    const cplx a = num / den, b = wm - a * zm;
    return {a.real(), a.imag(), b.real(), b.imag()};
}

QuadIndex build_index(const Catalog& catalog, SkyCoord center, double radius_deg, std::size_t max_stars,
                      double dmin_arcsec, double dmax_arcsec) {
    QuadIndex idx;
    idx.center = center;
    idx.stars = cone_search(catalog, center, radius_deg);
    if (max_stars > 0 && idx.stars.size() > max_stars) idx.stars.resize(max_stars);
    for (const auto& s : idx.stars) {
        const TangentPoint t = gnomonic(s.position, center);
        idx.tangent.push_back({t.xi, t.eta});
    }
    idx.quads = enumerate_quads(idx.tangent, dmin_arcsec, dmax_arcsec);
    std::vector<KdTree<4>::Point> codes;
    codes.reserve(idx.quads.size());
    for (const auto& q : idx.quads) codes.push_back(q.code);
    idx.tree = KdTree<4>(std::move(codes));
    return idx;
}

SolveResult solve_positions(std::span<const Vec2> positions, const Catalog& catalog, SkyCoord center_hint,
                            const SensorGeometry& g, const SolveOptions& o) {
    SolveResult res;
    const std::size_t n_src = std::min(positions.size(), o.max_sources);
    res.n_sources_used = n_src;
    if (n_src < 4) {
        res.status = "too_few_sources";
        return res;
    }
    const double short_side = std::min(g.width, g.height);
    const double dmin_px = o.min_quad_fraction * short_side, dmax_px = o.max_quad_fraction * short_side;
    const double half_diag_deg = 0.5 * std::hypot(g.width, g.height) * o.scale_hint * (1.0 + o.scale_tolerance) / kArcsecPerDeg;
    const double region_deg = o.search_radius_deg + half_diag_deg;
    const QuadIndex index = build_index(catalog, center_hint, region_deg, o.max_index_stars,
                                        dmin_px * o.scale_hint * (1.0 - o.scale_tolerance),
                                        dmax_px * o.scale_hint * (1.0 + o.scale_tolerance));
    res.n_index_stars = index.stars.size();
    res.n_index_quads = index.quads.size();
    if (index.quads.empty()) {
        res.status = "no_catalog_quads";
        return res;
    }

    const Catalog region = cone_search(catalog, center_hint, region_deg);
    std::vector<Vec2> region_t;
    for (const auto& s : region) {
        const TangentPoint t = gnomonic(s.position, center_hint);
        region_t.push_back({t.xi, t.eta});
    }

    const Vec2 ref{g.center_x(), g.center_y()};
    std::vector<Vec2> rel[2];
    for (std::size_t i = 0; i < n_src; ++i) {
        const Vec2 d = positions[i] - ref;
        rel[0].push_back(d);
        rel[1].push_back({d.x, -d.y});
    }
    std::vector<KdTree<2>::Point> src_pts;
    for (std::size_t i = 0; i < n_src; ++i) src_pts.push_back({positions[i].x, positions[i].y});
    const KdTree<2> src_tree(src_pts);

    auto verify = [&](const Similarity& sim, bool mirrored) {
        const CalibrationSolution sol = to_solution(sim, mirrored, center_hint, g);
        Verification v;
        std::vector<std::tuple<double, int, int>> cand;
        for (std::size_t k = 0; k < region_t.size(); ++k) {
            const Vec2 p = tangent_to_pixel({region_t[k].x, region_t[k].y}, sol);
            if (p.x < -0.5 || p.y < -0.5 || p.x >= g.width - 0.5 || p.y >= g.height - 0.5) continue;
            ++v.in_fov;
            for (std::size_t s : src_tree.radius({p.x, p.y}, o.match_radius_px))
                cand.emplace_back((positions[s] - p).norm(), static_cast<int>(s), static_cast<int>(k));
        }
        std::sort(cand.begin(), cand.end());
        std::vector<std::uint8_t> used_s(n_src, 0), used_c(region_t.size(), 0);
        double ss = 0.0;
        for (const auto& [d, s, c] : cand) {
            if (used_s[static_cast<std::size_t>(s)] || used_c[static_cast<std::size_t>(c)]) continue;
            used_s[static_cast<std::size_t>(s)] = used_c[static_cast<std::size_t>(c)] = 1;
            v.pairs.emplace_back(s, c);
            ss += d * d;
        }
        v.inliers = static_cast<int>(v.pairs.size());
        v.rms_px = v.inliers ? std::sqrt(ss / v.inliers) : 0.0;
        return v;
    };
    auto refit = [&](const Verification& v, bool mirrored, Similarity fallback) {
        if (v.pairs.size() < 2) return fallback;
        std::vector<Vec2> from, to;
        for (const auto& [s, c] : v.pairs) {
            from.push_back(rel[mirrored ? 1 : 0][static_cast<std::size_t>(s)]);
            to.push_back(region_t[static_cast<std::size_t>(c)]);
        }
        return fit_similarity(from, to);
    };

    std::vector<Quad> src_quads[2];
    src_quads[0] = enumerate_quads(rel[0], dmin_px, dmax_px);
    if (o.allow_mirror) src_quads[1] = enumerate_quads(rel[1], dmin_px, dmax_px);
    res.n_source_quads = src_quads[0].size() + src_quads[1].size();

    std::optional<Hypothesis> best;
    const double max_offset = o.search_radius_deg * kArcsecPerDeg;
    const std::size_t longest = std::max(src_quads[0].size(), src_quads[1].size());
    for (std::size_t qi = 0; qi < longest && res.n_hypotheses < o.max_hypotheses; ++qi) {
        for (int parity = 0; parity < 2 && res.n_hypotheses < o.max_hypotheses; ++parity) {
            if (qi >= src_quads[parity].size()) continue;
            const Quad& sq = src_quads[parity][qi];
            for (std::size_t m : index.tree.radius(sq.code, o.code_tolerance)) {
                if (res.n_hypotheses >= o.max_hypotheses) break;
                const Quad& iq = index.quads[m];
                std::array<Vec2, 4> from, to;
                for (int k = 0; k < 4; ++k) {
                    from[k] = rel[parity][static_cast<std::size_t>(sq.members[k])];
                    to[k] = index.tangent[static_cast<std::size_t>(iq.members[k])];
                }
                const Similarity sim = fit_similarity(from, to);
                if (std::abs(sim.scale() - o.scale_hint) > o.scale_tolerance * o.scale_hint) continue;
                if (std::hypot(sim.b_re, sim.b_im) > max_offset) continue;
                const std::size_t ordinal = res.n_hypotheses++;
                Hypothesis h{sim, parity == 1, verify(sim, parity == 1), ordinal};
                const Similarity refined = refit(h.v, h.mirrored, sim);
                Verification rv = verify(refined, h.mirrored);
                if (rv.inliers > h.v.inliers || (rv.inliers == h.v.inliers && rv.rms_px <= h.v.rms_px)) {
                    h.sim = refined;
                    h.v = std::move(rv);
                }
                if (!best || better(h.v, h.ordinal, best->v, best->ordinal)) best = std::move(h);
            }
        }
    }
    if (!best) {
        res.status = "no_hypothesis";
        return res;
    }
    const Similarity final_sim = refit(best->v, best->mirrored, best->sim);
    Verification fv = verify(final_sim, best->mirrored);
    Similarity chosen = final_sim;
    if (fv.inliers < best->v.inliers) {
        fv = best->v;
        chosen = best->sim;
    }
    res.solution = to_solution(chosen, best->mirrored, center_hint, g);
    res.n_inliers = fv.inliers;
    res.rms_px = fv.rms_px;
    res.catalog_in_fov = fv.in_fov;
    res.solution.n_matched = fv.inliers;
    res.solution.rms_residual_arcsec = fv.rms_px * res.solution.pixel_scale;
    for (const auto& [s, c] : fv.pairs) res.matches.emplace_back(s, region[static_cast<std::size_t>(c)].id);
    std::sort(res.matches.begin(), res.matches.end());

    const double need = std::max<double>(o.min_matches, o.min_match_fraction * double(std::min(n_src, fv.in_fov)));
    res.solved = fv.inliers >= need && fv.rms_px < o.max_rms_px;
    res.status = res.solved ? "solved" : "rejected";
    return res;
}

SolveResult solve_field(std::span<const Source> sources, const Catalog& catalog, SkyCoord center_hint,
                        const SensorGeometry& geometry, const SolveOptions& opts) {
    std::vector<const Source*> order;
    for (const auto& s : sources) order.push_back(&s);
    std::stable_sort(order.begin(), order.end(),
                     [](const Source* a, const Source* b) { return a->event_rate > b->event_rate; });
    std::vector<Vec2> pos;
    for (const auto* s : order) pos.push_back(s->centroid);
    SolveResult r = solve_positions(pos, catalog, center_hint, geometry, opts);
    for (auto& m : r.matches) m.first = order[static_cast<std::size_t>(m.first)]->id;
    std::sort(r.matches.begin(), r.matches.end());
    return r;
}

std::vector<WindowSolve> solve_windows(const EventStream& stream, Vec2 velocity_px_s, const MountTrack& mount,
                                       const Catalog& catalog, const WindowOptions& opts) {
    if (opts.window_s <= 0.0) throw std::invalid_argument("window length must be positive");
    std::vector<WindowSolve> out;
    if (stream.empty()) return out;
    const auto len = static_cast<std::int64_t>(std::llround(opts.window_s * 1e6));
    const std::int64_t t0 = stream.t_first(), t_end = stream.t_last() + 1;
    // A trailing partial window is kept when it spans at least half a window.
    const std::int64_t n = std::max<std::int64_t>(1, (t_end - t0 + len / 2) / len);
    for (std::int64_t k = 0; k < n; ++k) {
        WindowSolve w;
        w.index = static_cast<int>(k);
        w.t_start_us = t0 + k * len;
        w.t_end_us = std::min(t_end, w.t_start_us + len);
        w.t_center_us = w.t_start_us + (w.t_end_us - w.t_start_us) / 2;
        StarMapOptions so;
        so.window_s = double(w.t_end_us - w.t_start_us) * 1e-6;
        so.mode = opts.mode;
        so.center_us = w.t_center_us;
        const AccumulationFrame map = build_star_map(stream, velocity_px_s, so);
        w.sources = find_sources(map, stream, opts.finder);
        try {
            w.hint = mount.at(w.t_center_us);
        } catch (const std::out_of_range&) {
            w.result.status = "no_mount_coverage";
            out.push_back(std::move(w));
            continue;
        }
        w.result = solve_field(w.sources.sources, catalog, w.hint, stream.geometry(), opts.solve);
        out.push_back(std::move(w));
    }
    return out;
}

CalibrationSolution PriorProjector::at(std::int64_t t_us) const {
    CalibrationSolution s = prior_;
    s.field_center = mount_.at(t_us);
    return s;
}

}  // namespace evstar
