#include "evstar/sourcefind.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <stdexcept>
#include <unordered_map>

namespace evstar {

namespace {

template <std::size_t D>
struct CellHash {
    std::size_t operator()(const std::array<std::int64_t, D>& c) const {
        std::uint64_t h = 1469598103934665603ULL;
        for (auto v : c) h = (h ^ static_cast<std::uint64_t>(v)) * 1099511628211ULL;
        return static_cast<std::size_t>(h);
    }
};

template <std::size_t D>
double dist2(const std::array<double, D>& a, const std::array<double, D>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < D; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return s;
}

bool inside(const Circle& c, Vec2 p) { return (p - c.center).norm() <= c.radius * (1.0 + 1e-12) + 1e-12; }

Circle circle2(Vec2 a, Vec2 b) { return {0.5 * (a + b), 0.5 * (a - b).norm()}; }

Circle circle3(Vec2 a, Vec2 b, Vec2 c) {
    const double bx = b.x - a.x, by = b.y - a.y, cx = c.x - a.x, cy = c.y - a.y;
    const double d = 2.0 * (bx * cy - by * cx);
    if (std::abs(d) < 1e-12) {
        Circle best = circle2(a, b);
        for (const Circle& k : {circle2(a, c), circle2(b, c)})
            if (k.radius > best.radius) best = k;
        return best;
    }
    const double b2 = bx * bx + by * by, c2 = cx * cx + cy * cy;
    const Vec2 o{(cy * b2 - by * c2) / d, (bx * c2 - cx * b2) / d};
    return {a + o, o.norm()};
}

struct PixelEvent {
    std::size_t pixel;
    std::uint32_t event;
};

int find_root(std::vector<int>& parent, int i) {
    while (parent[i] != i) {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    return i;
}

Source make_source(const AccumulationFrame& frame, const EventStream& stream, std::span<const PixelEvent> members,
                   SourceKind kind, bool fallback) {
    Source s;
    s.kind = kind;
    s.fallback = fallback;
    std::map<std::size_t, double> weight;
    for (const auto& m : members) {
        const Event& e = stream[m.event];
        const double b = frame.mode == MapMode::MonoOn ? 1.0 : sign(e.p);
        weight[m.pixel] += b;
        if (e.p == Polarity::On)
            ++s.n_on;
        else
            ++s.n_off;
    }
    s.n_events = members.size();
    std::vector<Vec2> centers;
    centers.reserve(weight.size());
    Vec2 wsum;
    for (const auto& [p, w] : weight) {
        const Vec2 c{double(p % frame.width), double(p / frame.width)};
        centers.push_back(c);
        s.flux += std::abs(w);
        wsum += std::abs(w) * c;
    }
    const ShapeFeatures sf = shape_features(centers);
    s.area = sf.area;
    s.equivalent_diameter = sf.equivalent_diameter;
    s.extent = sf.extent;
    s.geometric_centroid = frame.to_sensor(sf.geometric_centroid);
    s.centroid = s.flux > 0.0 ? frame.to_sensor((1.0 / s.flux) * wsum) : s.geometric_centroid;
    const double window = frame.window_s();
    s.event_rate = window > 0.0 ? double(s.n_events) / window : double(s.n_events);
    return s;
}

}  // namespace

template <std::size_t D>
std::vector<int> dbscan(std::span<const std::array<double, D>> points, double eps, int min_points) {
    if (!(eps > 0.0)) throw std::invalid_argument("dbscan: eps must be positive");
    if (min_points < 1) throw std::invalid_argument("dbscan: min_points must be at least 1");
    const std::size_t n = points.size();
    const double cell_size = eps * (1.0 + 1e-9);
    const double eps2 = eps * eps;
    using Key = std::array<std::int64_t, D>;
    std::unordered_map<Key, std::size_t, CellHash<D>> cell_of_key;
    std::vector<Key> cell_keys;
    std::vector<std::vector<std::size_t>> cells;
    std::vector<std::size_t> cell(n);
    for (std::size_t i = 0; i < n; ++i) {
        Key key;
        for (std::size_t k = 0; k < D; ++k) key[k] = static_cast<std::int64_t>(std::floor(points[i][k] / cell_size));
        auto [it, fresh] = cell_of_key.try_emplace(key, cells.size());
        if (fresh) {
            cell_keys.push_back(key);
            cells.emplace_back();
        }
        cell[i] = it->second;
        cells[it->second].push_back(i);
    }
    // Neighbouring cells (including itself) of every occupied cell.
    std::vector<std::vector<std::size_t>> adjacent(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
        Key off{};
        off.fill(-1);
        for (;;) {
            Key k = cell_keys[c];
            for (std::size_t d = 0; d < D; ++d) k[d] += off[d];
            if (auto it = cell_of_key.find(k); it != cell_of_key.end()) adjacent[c].push_back(it->second);
            std::size_t d = 0;
            while (d < D && off[d] == 1) off[d++] = -1;
            if (d == D) break;
            ++off[d];
        }
    }

    std::vector<std::uint8_t> core(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        int count = 0;
        for (std::size_t c : adjacent[cell[i]]) {
            for (std::size_t j : cells[c])
                if (dist2<D>(points[i], points[j]) <= eps2 && ++count >= min_points) break;
            if (count >= min_points) break;
        }
        core[i] = count >= min_points;
    }

    std::vector<std::size_t> open_cores(cells.size(), 0);
    for (std::size_t i = 0; i < n; ++i)
        if (core[i]) ++open_cores[cell[i]];
    std::vector<int> label(n, kDbscanNoise);
    int next = 0;
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < n; ++i) {
        if (!core[i] || label[i] != kDbscanNoise) continue;
        label[i] = next;
        --open_cores[cell[i]];
        stack.assign(1, i);
        while (!stack.empty()) {
            const std::size_t q = stack.back();
            stack.pop_back();
            for (std::size_t c : adjacent[cell[q]]) {
                if (open_cores[c] == 0) continue;
                for (std::size_t j : cells[c]) {
                    if (!core[j] || label[j] != kDbscanNoise || dist2<D>(points[q], points[j]) > eps2) continue;
                    label[j] = next;
                    --open_cores[c];
                    stack.push_back(j);
                }
            }
        }
        ++next;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (core[i]) continue;
        int best = kDbscanNoise;
        for (std::size_t c : adjacent[cell[i]])
            for (std::size_t j : cells[c])
                if (core[j] && dist2<D>(points[i], points[j]) <= eps2 && (best == kDbscanNoise || label[j] < best))
                    best = label[j];
        label[i] = best;
    }
    return label;
}

template std::vector<int> dbscan<2>(std::span<const std::array<double, 2>>, double, int);
template std::vector<int> dbscan<3>(std::span<const std::array<double, 3>>, double, int);

Circle min_enclosing_circle(std::span<const Vec2> points) {
    if (points.empty()) return {};
    std::vector<Vec2> p(points.begin(), points.end());
    std::mt19937 rng(0x5eed);
    std::shuffle(p.begin(), p.end(), rng);
    Circle c{p[0], 0.0};
    for (std::size_t i = 1; i < p.size(); ++i) {
        if (inside(c, p[i])) continue;
        c = {p[i], 0.0};
        for (std::size_t j = 0; j < i; ++j) {
            if (inside(c, p[j])) continue;
            c = circle2(p[i], p[j]);
            for (std::size_t k = 0; k < j; ++k)
                if (!inside(c, p[k])) c = circle3(p[i], p[j], p[k]);
        }
    }
    return c;
}

ShapeFeatures shape_features(std::span<const Vec2> pixel_centers) {
    ShapeFeatures f;
    f.area = static_cast<int>(pixel_centers.size());
    if (pixel_centers.empty()) return f;
    Vec2 sum;
    for (const auto& p : pixel_centers) sum += p;
    f.geometric_centroid = (1.0 / f.area) * sum;
    f.equivalent_diameter = 2.0 * std::sqrt(f.area / kPi);
    const double r = min_enclosing_circle(pixel_centers).radius + 0.5;
    f.extent = std::clamp(f.area / (kPi * r * r), 0.0, 1.0);
    return f;
}

SourceList find_sources(const AccumulationFrame& frame, const EventStream& stream, const SourceFinderOptions& opts) {
    if (frame.offsets.size() != frame.values.size() + 1)
        throw std::invalid_argument("find_sources: frame was accumulated without an event index");
    SourceList out;
    out.clip = sigma_clip(frame, opts.n_sigma, opts.clip_max_iter);
    const Components comp = label_components(out.clip.mask, frame.width, frame.height);
    auto pixel_events = [&](std::size_t p) { return frame.offsets[p + 1] - frame.offsets[p]; };

    std::vector<std::size_t> comp_events(static_cast<std::size_t>(comp.count) + 1, 0);
    for (std::size_t p = 0; p < comp.labels.size(); ++p)
        if (comp.labels[p]) comp_events[static_cast<std::size_t>(comp.labels[p])] += pixel_events(p);

    std::vector<std::vector<PixelEvent>> extended(comp_events.size());
    std::vector<std::size_t> small_pixels;
    for (std::size_t p = 0; p < comp.labels.size(); ++p) {
        const int l = comp.labels[p];
        if (!l) continue;
        if (comp_events[static_cast<std::size_t>(l)] > opts.extended_threshold) {
            for (auto e : frame.events_at(p)) extended[static_cast<std::size_t>(l)].push_back({p, e});
        } else {
            small_pixels.push_back(p);
        }
    }
    for (const auto& members : extended)
        if (!members.empty()) out.sources.push_back(make_source(frame, stream, members, SourceKind::Extended, false));

    // Pixels closer than eps (Chebyshev) may hold mutually reachable events;
    // anything farther apart can never share a cluster, so each group can be
    // clustered on its own.
    const int r = static_cast<int>(std::floor(opts.eps));
    std::vector<int> slot(frame.values.size(), -1);
    for (std::size_t k = 0; k < small_pixels.size(); ++k) slot[small_pixels[k]] = static_cast<int>(k);
    std::vector<int> parent(small_pixels.size());
    for (std::size_t k = 0; k < parent.size(); ++k) parent[k] = static_cast<int>(k);
    for (std::size_t k = 0; k < small_pixels.size(); ++k) {
        const int x = static_cast<int>(small_pixels[k] % frame.width), y = static_cast<int>(small_pixels[k] / frame.width);
        for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
                const int nx = x + dx, ny = y + dy;
                if (nx < 0 || ny < 0 || nx >= frame.width || ny >= frame.height) continue;
                const int o = slot[frame.pixel(nx, ny)];
                if (o < 0) continue;
                const int a = find_root(parent, static_cast<int>(k)), b = find_root(parent, o);
                if (a != b) parent[std::max(a, b)] = std::min(a, b);
            }
    }
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t k = 0; k < small_pixels.size(); ++k)
        groups[find_root(parent, static_cast<int>(k))].push_back(small_pixels[k]);
    out.n_groups = groups.size();

    const double window_s = frame.window_s();
    const double t_scale = opts.time_scale.value_or(window_s > 0.0 ? opts.eps / window_s : 0.0) * 1e-6;
    for (const auto& [root, pixels] : groups) {
        std::vector<PixelEvent> members;
        for (auto p : pixels)
            for (auto e : frame.events_at(p)) members.push_back({p, e});
        if (members.size() > opts.extended_threshold) {
            ++out.n_fallback_groups;
            std::map<int, std::vector<PixelEvent>> by_comp;
            for (const auto& m : members) by_comp[comp.labels[m.pixel]].push_back(m);
            for (const auto& [l, ms] : by_comp)
                out.sources.push_back(make_source(frame, stream, ms, SourceKind::Point, true));
            continue;
        }
        std::vector<std::array<double, 3>> pts(members.size());
        for (std::size_t i = 0; i < members.size(); ++i) {
            const auto p = members[i].pixel;
            pts[i] = {double(p % frame.width), double(p / frame.width),
                      double(stream[members[i].event].t - frame.t_start_us) * t_scale};
        }
        const auto labels = dbscan<3>(pts, opts.eps, opts.min_points);
        int n_clusters = 0;
        for (int l : labels) n_clusters = std::max(n_clusters, l + 1);
        std::vector<std::vector<PixelEvent>> clusters(static_cast<std::size_t>(n_clusters));
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == kDbscanNoise)
                ++out.n_noise_events;
            else
                clusters[static_cast<std::size_t>(labels[i])].push_back(members[i]);
        }
        for (const auto& c : clusters) out.sources.push_back(make_source(frame, stream, c, SourceKind::Point, false));
    }

    std::stable_sort(out.sources.begin(), out.sources.end(), [](const Source& a, const Source& b) {
        if (a.event_rate != b.event_rate) return a.event_rate > b.event_rate;
        if (a.geometric_centroid.y != b.geometric_centroid.y) return a.geometric_centroid.y < b.geometric_centroid.y;
        return a.geometric_centroid.x < b.geometric_centroid.x;
    });
    for (std::size_t i = 0; i < out.sources.size(); ++i) out.sources[i].id = static_cast<int>(i);
    return out;
}

}  // namespace evstar
