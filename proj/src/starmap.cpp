#include "evstar/starmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace evstar {

namespace {

constexpr std::size_t kMaxCanvasPixels = std::size_t{1} << 28;

int pad_for(double v, std::int64_t t_start, std::int64_t t_end, std::int64_t t0) {
    const double reach = std::max(std::abs(double(t_start - t0)), std::abs(double(t_end - t0))) * 1e-6;
    return static_cast<int>(std::ceil(std::abs(v) * reach));
}

int find_root(std::vector<int>& parent, int i) {
    while (parent[i] != i) {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    return i;
}

}  // namespace

const char* to_string(MapMode m) { return m == MapMode::Dual ? "dual" : "mono_on"; }

MapMode map_mode_from_string(const std::string& s) {
    if (s == "dual") return MapMode::Dual;
    if (s == "mono_on") return MapMode::MonoOn;
    throw std::invalid_argument("unknown polarity mode '" + s + "' (expected dual or mono_on)");
}

AccumulationFrame accumulate(const EventStream& stream, std::int64_t t_start_us, std::int64_t t_end_us,
                             const AccumulationOptions& opts) {
    if (t_end_us < t_start_us) throw std::invalid_argument("accumulate: window end precedes start");
    AccumulationFrame f;
    f.t_start_us = t_start_us;
    f.t_end_us = t_end_us;
    f.t0_us = opts.t0_us.value_or(t_start_us);
    f.velocity = opts.velocity;
    f.mode = opts.mode;
    const auto& g = stream.geometry();
    if (opts.pad) {
        const int extra = opts.bilinear ? 1 : 0;
        f.origin_x = pad_for(opts.velocity.x, t_start_us, t_end_us, f.t0_us) + extra;
        f.origin_y = pad_for(opts.velocity.y, t_start_us, t_end_us, f.t0_us) + extra;
    }
    const std::size_t w = static_cast<std::size_t>(g.width) + 2 * static_cast<std::size_t>(f.origin_x);
    const std::size_t h = static_cast<std::size_t>(g.height) + 2 * static_cast<std::size_t>(f.origin_y);
    if (w * h > kMaxCanvasPixels) throw std::invalid_argument("accumulate: warped canvas too large");
    f.width = static_cast<int>(w);
    f.height = static_cast<int>(h);
    f.values.assign(w * h, 0.0);

    const auto [lo, hi] = stream.index_range(t_start_us, t_end_us);
    auto ev = stream.events();
    std::vector<std::int64_t> target(hi - lo, -1);
    for (std::size_t i = lo; i < hi; ++i) {
        const Event& e = ev[i];
        if (opts.mode == MapMode::MonoOn && e.p != Polarity::On) continue;
        const double b = opts.mode == MapMode::MonoOn ? 1.0 : sign(e.p);
        const Vec2 q = warp({double(e.x), double(e.y)}, e.t, opts.velocity, f.t0_us);
        const long ix = std::lround(q.x) + f.origin_x, iy = std::lround(q.y) + f.origin_y;
        if (ix < 0 || iy < 0 || ix >= f.width || iy >= f.height) {
            ++f.dropped;
            continue;
        }
        target[i - lo] = static_cast<std::int64_t>(iy) * f.width + ix;
        ++f.n_events;
        if (!opts.bilinear) {
            f.values[static_cast<std::size_t>(target[i - lo])] += b;
            continue;
        }
        const double fx = q.x + f.origin_x, fy = q.y + f.origin_y;
        const double x0 = std::floor(fx), y0 = std::floor(fy);
        const double ax = fx - x0, ay = fy - y0;
        const double wts[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
        for (int k = 0; k < 4; ++k) {
            const long px = static_cast<long>(x0) + (k & 1), py = static_cast<long>(y0) + (k >> 1);
            if (px < 0 || py < 0 || px >= f.width || py >= f.height) continue;
            f.values[static_cast<std::size_t>(py) * w + static_cast<std::size_t>(px)] += b * wts[k];
        }
    }

    if (opts.index_events) {
        f.offsets.assign(w * h + 1, 0);
        for (auto t : target)
            if (t >= 0) ++f.offsets[static_cast<std::size_t>(t) + 1];
        std::partial_sum(f.offsets.begin(), f.offsets.end(), f.offsets.begin());
        f.indices.resize(f.n_events);
        std::vector<std::uint32_t> cursor(f.offsets.begin(), f.offsets.end() - 1);
        for (std::size_t k = 0; k < target.size(); ++k)
            if (target[k] >= 0) f.indices[cursor[static_cast<std::size_t>(target[k])]++] = static_cast<std::uint32_t>(lo + k);
    }
    return f;
}

namespace {

// Iterative clip of |value| where only the nonzero magnitudes are listed;
// the remaining pixels form a single zero bin.
void clip_statistics(const std::vector<double>& nz, std::size_t n_total, double n_sigma, int max_iter,
                     ClipResult& r) {
    const double zeros = double(n_total - nz.size());
    std::vector<std::uint8_t> keep(nz.size(), 1);
    bool keep_zero = true;
    for (int it = 0; it < std::max(1, max_iter); ++it) {
        ++r.iterations;
        double cnt = keep_zero ? zeros : 0.0, sum = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < nz.size(); ++i)
            if (keep[i]) {
                cnt += 1.0;
                sum += nz[i];
                sq += nz[i] * nz[i];
            }
        if (cnt == 0.0) break;
        r.mean = sum / cnt;
        r.stddev = std::sqrt(std::max(0.0, sq / cnt - r.mean * r.mean));
        const double band = n_sigma * r.stddev;
        bool changed = false;
        const bool kz = std::abs(0.0 - r.mean) <= band;
        if (kz != keep_zero) changed = true;
        keep_zero = kz;
        for (std::size_t i = 0; i < nz.size(); ++i) {
            const std::uint8_t k = std::abs(nz[i] - r.mean) <= band;
            if (k != keep[i]) changed = true;
            keep[i] = k;
        }
        if (!changed) break;
    }
    r.threshold = r.mean + n_sigma * r.stddev;
}

}  // namespace

ClipResult sigma_clip(const AccumulationFrame& frame, double n_sigma, int max_iter) {
    ClipResult r;
    const std::size_t n = frame.values.size();
    r.mask.assign(n, 0);
    if (n == 0) return r;
    std::vector<double> nz;
    for (double v : frame.values)
        if (v != 0.0) nz.push_back(std::abs(v));
    clip_statistics(nz, n, n_sigma, max_iter, r);
    for (std::size_t i = 0; i < n; ++i) r.mask[i] = std::abs(frame.values[i]) > r.threshold;
    return r;
}

Components label_components(std::span<const std::uint8_t> mask, int width, int height) {
    const std::size_t n = static_cast<std::size_t>(width) * height;
    if (mask.size() != n) throw std::invalid_argument("label_components: mask size mismatch");
    Components c;
    c.labels.assign(n, 0);
    std::vector<int> parent;
    parent.push_back(0);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * width + x;
            if (!mask[i]) continue;
            int lbl = 0;
            const int nb[4][2] = {{-1, 0}, {-1, -1}, {0, -1}, {1, -1}};
            for (const auto& d : nb) {
                const int nx = x + d[0], ny = y + d[1];
                if (nx < 0 || ny < 0 || nx >= width) continue;
                const int l = c.labels[static_cast<std::size_t>(ny) * width + nx];
                if (!l) continue;
                if (!lbl) {
                    lbl = l;
                } else {
                    const int a = find_root(parent, lbl), b = find_root(parent, l);
                    if (a != b) parent[std::max(a, b)] = std::min(a, b);
                }
            }
            if (!lbl) {
                lbl = static_cast<int>(parent.size());
                parent.push_back(lbl);
            }
            c.labels[i] = lbl;
        }
    }
    // Provisional labels are created in raster order and unions keep the
    // smaller root, so renumbering roots in increasing order gives raster
    // order of first pixels.
    std::vector<int> final_label(parent.size(), 0);
    for (std::size_t l = 1; l < parent.size(); ++l) {
        const int r = find_root(parent, static_cast<int>(l));
        if (r == static_cast<int>(l)) final_label[l] = ++c.count;
    }
    for (auto& l : c.labels)
        if (l) l = final_label[static_cast<std::size_t>(find_root(parent, l))];
    return c;
}

VelocitySchedule schedule_for_speed(double speed_deg_s) {
    if (speed_deg_s >= 0.07) return {0.05, 0.05};
    if (speed_deg_s >= 0.002) return {0.05, 0.25};
    return {0.05, 2.0};
}

VelocityEstimate estimate_velocity(const EventStream& stream, const VelocitySchedule& schedule,
                                   const VelocityOptions& opts) {
    if (schedule.integration_s <= 0.0 || schedule.interval_s <= 0.0)
        throw std::invalid_argument("velocity schedule needs positive integration and interval");
    VelocityEstimate est;
    est.schedule = schedule;
    if (stream.empty()) return est;
    const std::int64_t mid = stream.t_first() + stream.duration_us() / 2;
    const auto half = static_cast<std::int64_t>(std::llround(opts.span_s * 0.5e6));
    const std::int64_t lo = std::max(stream.t_first(), mid - half);
    const std::int64_t hi = std::min(stream.t_last() + 1, mid + half);
    const auto integ = static_cast<std::int64_t>(std::llround(schedule.integration_s * 1e6));
    const double interval_us = schedule.interval_s * 1e6;

    struct Blob {
        int area;
        double weight;
        Vec2 c;
    };
    struct Sample {
        double t;
        std::vector<Blob> blobs;  // largest first
    };
    std::vector<Sample> samples;
    const auto& g = stream.geometry();
    const auto w = static_cast<std::int64_t>(g.width);
    const std::size_t n_pix = static_cast<std::size_t>(g.width) * g.height;
    const int link = opts.blob_link_px;
    auto ev = stream.events();
    for (long k = 0;; ++k) {
        const std::int64_t s = lo + static_cast<std::int64_t>(std::llround(k * interval_us));
        if (s + integ > hi) break;
        Sample smp{(s + 0.5 * integ) * 1e-6, {}};
        // Unwarped ON frame as a sorted list of occupied pixels with counts.
        const auto [e0, e1] = stream.index_range(s, s + integ);
        std::vector<std::int64_t> ids;
        for (std::size_t i = e0; i < e1; ++i)
            if (ev[i].p == Polarity::On) ids.push_back(std::int64_t{ev[i].y} * w + ev[i].x);
        std::sort(ids.begin(), ids.end());
        std::vector<std::int64_t> pix;
        std::vector<double> cnt;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (i == 0 || ids[i] != ids[i - 1]) {
                pix.push_back(ids[i]);
                cnt.push_back(0.0);
            }
            cnt.back() += 1.0;
        }
        ClipResult clip;
        clip_statistics(cnt, n_pix, 3.0, 10, clip);
        std::vector<std::int64_t> mp;
        std::vector<double> mw;
        for (std::size_t i = 0; i < pix.size(); ++i)
            if (cnt[i] > clip.threshold) {
                mp.push_back(pix[i]);
                mw.push_back(cnt[i]);
            }
        // Mask pixels within `link` (Chebyshev) of each other form one blob.
        std::vector<int> parent(mp.size());
        std::iota(parent.begin(), parent.end(), 0);
        for (std::size_t i = 0; i < mp.size(); ++i) {
            const std::int64_t y = mp[i] / w, x = mp[i] % w;
            for (std::int64_t dy = 0; dy <= link && dy <= y; ++dy) {
                const std::int64_t row = (y - dy) * w;
                const std::int64_t first = row + std::max<std::int64_t>(0, x - link);
                const std::int64_t last = dy == 0 ? mp[i] - 1 : row + std::min<std::int64_t>(w - 1, x + link);
                auto it = std::lower_bound(mp.begin(), mp.begin() + static_cast<std::ptrdiff_t>(i), first);
                for (; it != mp.begin() + static_cast<std::ptrdiff_t>(i) && *it <= last; ++it) {
                    const int ra = find_root(parent, static_cast<int>(i));
                    const int rb = find_root(parent, static_cast<int>(it - mp.begin()));
                    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
                }
            }
        }
        struct Acc {
            int area = 0;
            bool edge = false;  // cut by the sensor border, centroid biased
            double wsum = 0.0, wx = 0.0, wy = 0.0;
        };
        std::vector<Acc> acc(mp.size());
        for (std::size_t i = 0; i < mp.size(); ++i) {
            Acc& a = acc[static_cast<std::size_t>(find_root(parent, static_cast<int>(i)))];
            const std::int64_t y = mp[i] / w, x = mp[i] % w;
            ++a.area;
            if (x == 0 || y == 0 || x == w - 1 || y == g.height - 1) a.edge = true;
            a.wsum += mw[i];
            a.wx += mw[i] * double(x);
            a.wy += mw[i] * double(y);
        }
        for (const Acc& a : acc)
            if (a.area >= opts.min_blob_area && !a.edge && a.wsum > 0.0)
                smp.blobs.push_back({a.area, a.wsum, {a.wx / a.wsum, a.wy / a.wsum}});
        std::stable_sort(smp.blobs.begin(), smp.blobs.end(), [](const Blob& x, const Blob& y) {
            return x.area != y.area ? x.area > y.area : x.weight > y.weight;
        });
        if (smp.blobs.size() > static_cast<std::size_t>(opts.max_blobs))
            smp.blobs.resize(static_cast<std::size_t>(opts.max_blobs));
        samples.push_back(std::move(smp));
    }
    est.n_frames = samples.size();
    for (const auto& smp : samples)
        if (!smp.blobs.empty()) ++est.n_valid_frames;

    // Every pairing of the leading blobs in consecutive frames proposes a
    // velocity; the proposal shared by most pairings is the field motion.
    struct Proposal {
        std::size_t pair;
        std::size_t a, b;
        Vec2 v;
        double disp;
    };
    std::vector<Proposal> props;
    for (std::size_t i = 1; i < samples.size(); ++i) {
        const double dt = samples[i].t - samples[i - 1].t;
        for (std::size_t a = 0; a < samples[i - 1].blobs.size(); ++a)
            for (std::size_t b = 0; b < samples[i].blobs.size(); ++b) {
                const Vec2 d = samples[i].blobs[b].c - samples[i - 1].blobs[a].c;
                props.push_back({i, a, b, (1.0 / dt) * d, d.norm()});
            }
    }
    if (props.empty()) return est;
    auto tol = [&](const Proposal& p) { return (opts.match_tolerance_px + 0.05 * p.disp) / (samples[p.pair].t - samples[p.pair - 1].t); };
    const auto n_vote = static_cast<std::size_t>(opts.vote_blobs);
    std::vector<const Proposal*> voters;
    for (const auto& p : props)
        if (p.a < n_vote && p.b < n_vote) voters.push_back(&p);
    const Proposal* best = voters.front();
    std::size_t best_votes = 0;
    for (const Proposal* p : voters) {
        std::size_t votes = 0;
        const double r = tol(*p);
        for (const Proposal* q : voters)
            if ((q->v - p->v).norm() <= r) ++votes;
        if (votes > best_votes) {
            best_votes = votes;
            best = p;
        }
    }
    Vec2 consensus = best->v;
    auto tol_v = [&](Vec2 v, std::size_t pair) {
        const double dt = samples[pair].t - samples[pair - 1].t;
        return (opts.match_tolerance_px + 0.05 * v.norm() * dt) / dt;
    };
    for (int it = 0; it < 20; ++it) {
        Vec2 sum;
        std::size_t k = 0;
        for (const Proposal* q : voters)
            if ((q->v - consensus).norm() <= tol_v(consensus, q->pair)) {
                sum += q->v;
                ++k;
            }
        const Vec2 shifted = (1.0 / double(k)) * sum;
        const bool done = (shifted - consensus).norm() < 1e-9 * (1.0 + consensus.norm());
        consensus = shifted;
        if (done) break;
    }

    // Link each blob to its successor under the consensus motion, then fit one
    // common velocity to the resulting tracks, each with its own offset.
    std::vector<std::vector<int>> next(samples.size()), prev(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        next[i].assign(samples[i].blobs.size(), -1);
        prev[i].assign(samples[i].blobs.size(), -1);
    }
    std::vector<const Proposal*> links;
    for (const auto& p : props)
        if ((p.v - consensus).norm() <= tol_v(consensus, p.pair)) links.push_back(&p);
    std::stable_sort(links.begin(), links.end(), [&](const Proposal* x, const Proposal* y) {
        return (x->v - consensus).norm() < (y->v - consensus).norm();
    });
    std::vector<Vec2> pair_best(samples.size());
    std::vector<std::uint8_t> has_pair(samples.size(), 0);
    for (const Proposal* p : links) {
        if (!has_pair[p->pair]) {
            has_pair[p->pair] = 1;
            pair_best[p->pair] = p->v;
        }
        if (next[p->pair - 1][p->a] >= 0 || prev[p->pair][p->b] >= 0) continue;
        next[p->pair - 1][p->a] = static_cast<int>(p->b);
        prev[p->pair][p->b] = static_cast<int>(p->a);
    }
    for (std::size_t i = 1; i < samples.size(); ++i)
        if (has_pair[i]) est.pair_velocities.push_back(pair_best[i]);
    if (est.pair_velocities.empty()) return est;

    double sxx = 0.0;
    Vec2 sxp;
    std::size_t n_links = 0;
    for (std::size_t i = 0; i < samples.size(); ++i)
        for (std::size_t b = 0; b < samples[i].blobs.size(); ++b) {
            if (prev[i][b] >= 0 || next[i][b] < 0) continue;
            std::vector<std::pair<double, Vec2>> track;
            for (std::size_t k = i, j = b;; ++k) {
                track.emplace_back(samples[k].t, samples[k].blobs[j].c);
                if (next[k][j] < 0) break;
                j = static_cast<std::size_t>(next[k][j]);
            }
            double tm = 0.0;
            Vec2 pm;
            for (const auto& [t, c] : track) {
                tm += t;
                pm += c;
            }
            tm /= double(track.size());
            pm = (1.0 / double(track.size())) * pm;
            for (const auto& [t, c] : track) {
                sxx += (t - tm) * (t - tm);
                sxp += (t - tm) * (c - pm);
            }
            n_links += track.size() - 1;
        }
    if (sxx <= 0.0) return est;
    est.velocity_px_s = (1.0 / sxx) * sxp;
    est.n_used = n_links;
    est.valid = true;
    return est;
}

VelocityEstimate estimate_velocity_auto(const EventStream& stream, double pixel_scale_arcsec,
                                        const VelocityOptions& opts) {
    const VelocitySchedule fast = schedule_for_speed(1.0);
    VelocityEstimate coarse = estimate_velocity(stream, fast, opts);
    if (!coarse.valid) return coarse;
    const double speed = coarse.velocity_px_s.norm() * pixel_scale_arcsec / kArcsecPerDeg;
    const VelocitySchedule s = schedule_for_speed(speed);
    if (s.interval_s == fast.interval_s && s.integration_s == fast.integration_s) return coarse;
    VelocityEstimate refined = estimate_velocity(stream, s, opts);
    return refined.valid ? refined : coarse;
}

AccumulationFrame build_star_map(const EventStream& stream, Vec2 velocity_px_s, const StarMapOptions& opts) {
    if (opts.window_s <= 0.0) throw std::invalid_argument("star map window must be positive");
    const std::int64_t center = opts.center_us.value_or(stream.t_first() + stream.duration_us() / 2);
    const auto half = static_cast<std::int64_t>(std::llround(opts.window_s * 0.5e6));
    std::int64_t t_start = center - half, t_end = center + half;
    if (!stream.empty()) {
        t_start = std::max(t_start, stream.t_first());
        t_end = std::min(t_end, stream.t_last() + 1);
        if (t_end < t_start) t_end = t_start;
    }
    AccumulationOptions ao;
    ao.velocity = velocity_px_s;
    ao.t0_us = center;
    ao.mode = opts.mode;
    ao.bilinear = opts.bilinear;
    return accumulate(stream, t_start, t_end, ao);
}

VelocityRefinement refine_velocity(const EventStream& stream, Vec2 velocity_px_s, const RefineOptions& opts) {
    VelocityRefinement r;
    r.velocity_px_s = velocity_px_s;
    const double min_spread_s = 0.05 * opts.window_s;
    for (int it = 0; it < opts.iterations; ++it) {
        StarMapOptions mo;
        mo.window_s = opts.window_s;
        mo.mode = MapMode::MonoOn;
        const AccumulationFrame map = build_star_map(stream, r.velocity_px_s, mo);
        if (map.empty()) break;
        const ClipResult clip = sigma_clip(map, opts.n_sigma);
        const Components comps = label_components(clip.mask, map.width, map.height);
        std::vector<std::vector<std::uint32_t>> members(static_cast<std::size_t>(comps.count));
        for (std::size_t p = 0; p < comps.labels.size(); ++p)
            if (comps.labels[p] > 0)
                for (std::uint32_t e : map.events_at(p)) members[comps.labels[p] - 1].push_back(e);
        std::vector<double> sx, sy;
        for (const auto& m : members) {
            if (m.size() < opts.min_events) continue;
            double tm = 0, xm = 0, ym = 0;
            for (std::uint32_t i : m) {
                const Event& e = stream[i];
                const Vec2 w = warp({double(e.x), double(e.y)}, e.t, r.velocity_px_s, map.t0_us);
                tm += (e.t - map.t0_us) * 1e-6;
                xm += w.x;
                ym += w.y;
            }
            const double n = double(m.size());
            tm /= n;
            xm /= n;
            ym /= n;
            double stt = 0, stx = 0, sty = 0;
            for (std::uint32_t i : m) {
                const Event& e = stream[i];
                const Vec2 w = warp({double(e.x), double(e.y)}, e.t, r.velocity_px_s, map.t0_us);
                const double dt = (e.t - map.t0_us) * 1e-6 - tm;
                stt += dt * dt;
                stx += dt * (w.x - xm);
                sty += dt * (w.y - ym);
            }
            if (stt / n < min_spread_s * min_spread_s) continue;
            sx.push_back(stx / stt);
            sy.push_back(sty / stt);
        }
        r.n_blobs = sx.size();
        r.iterations = it + 1;
        if (sx.empty()) break;
        auto median = [](std::vector<double>& v) {
            const std::size_t h = v.size() / 2;
            std::nth_element(v.begin(), v.begin() + h, v.end());
            if (v.size() % 2) return v[h];
            return 0.5 * (v[h] + *std::max_element(v.begin(), v.begin() + h));
        };
        const Vec2 dv{median(sx), median(sy)};
        r.velocity_px_s += dv;
        if (dv.norm() < 1e-3) break;
    }
    return r;
}

void write_pgm(const AccumulationFrame& frame, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "P5\n" << frame.width << " " << frame.height << "\n65535\n";
    std::vector<unsigned char> buf;
    buf.reserve(frame.values.size() * 2);
    for (double v : frame.values) {
        const auto q = static_cast<std::uint16_t>(std::min(65535.0, std::round(std::abs(v))));
        buf.push_back(static_cast<unsigned char>(q >> 8));
        buf.push_back(static_cast<unsigned char>(q & 0xFF));
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace evstar
