// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 when any fails.
// Usage: acceptance [path/to/evstar]

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

#include "evstar/pipeline.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace evstar;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

class Timer {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("evstar_accept_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * double(i + j) + 1.0;
        i = j + 1;
    }
    return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    const auto ra = ranks(a), rb = ranks(b);
    const double n = double(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n, mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

Vec2 slew(double speed, double heading_deg) {
    const double h = heading_deg * kPi / 180.0;
    return {speed * std::cos(h), speed * std::sin(h)};
}

Vec2 pipeline_velocity(const EventStream& ev) {
    const auto est = estimate_velocity_auto(ev, 1.584);
    if (!est.valid) return {0.0, 0.0};
    return refine_velocity(ev, est.velocity_px_s).velocity_px_s;
}

EventStream random_stream(std::mt19937_64& rng, std::size_t n, SensorGeometry g) {
    std::uniform_int_distribution<int> ux(0, g.width - 1), uy(0, g.height - 1), pol(0, 1);
    std::uniform_int_distribution<std::int64_t> ut(0, 3'000'000);
    std::vector<Event> ev(n);
    for (auto& e : ev)
        e = {std::uint16_t(ux(rng)), std::uint16_t(uy(rng)), ut(rng), pol(rng) ? Polarity::On : Polarity::Off};
    std::sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
    return EventStream(std::move(ev), g);
}

// 1. Pixel-scale recovery on 20 fields.
Verdict scale_recovery() {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> n_stars(30, 80);
    std::uniform_real_distribution<double> rot(0.0, 360.0), off(-60.0, 60.0);
    double worst = 0, sum = 0, elapsed = 0;
    int solved = 0;
    for (int k = 0; k < 20; ++k) {
        FieldSpec f;
        f.seed = 100 + k;
        f.n_stars = n_stars(rng);
        f.rotation_deg = rot(rng);
        f.mirrored = rng() % 2;
        f.n_hot_pixels = 5;
        f.pointing_offset_arcsec = {off(rng), off(rng)};
        const auto scene = make_field_scene(f);
        auto [ev, truth] = synthesize(scene);
        const auto cat = fixture::catalog_of(scene);
        const Timer t;
        const auto map = build_star_map(ev, pipeline_velocity(ev), {3.0, MapMode::Dual});
        const auto found = find_sources(map, ev);
        const auto r = solve_field(found.sources, cat, MountTrack(truth.mount_track).at(map.t0_us), ev.geometry());
        elapsed += t.seconds();
        if (!r.solved) continue;
        ++solved;
        const double err = std::abs(r.solution.pixel_scale - 1.584);
        worst = std::max(worst, err);
        sum += err;
    }
    const double mean = solved ? sum / solved : 1e9;
    return {solved == 20 && worst < 0.01 && mean < 0.003 && elapsed < 60.0,
            fmt("solved %d/20, max error %.2e, mean error %.2e arcsec/px, %.1f s", solved, worst, mean, elapsed)};
}

// 2. Velocity recovery from 0.000488 to 0.5 deg/s.
Verdict velocity_recovery() {
    const double speeds[] = {0.000488, 0.002, 0.01, 0.0625, 0.5};
    double worst[2] = {0, 0}, worst_coarse = 0, elapsed = 0;
    for (int noisy = 0; noisy < 2; ++noisy)
        for (double speed : speeds) {
            FieldSpec f;
            f.seed = 7;
            f.speed_deg_s = speed;
            f.noise_rate = noisy ? 0.005 : 0.0;
            auto [ev, truth] = synthesize(make_field_scene(f));
            const Timer t;
            const auto est = estimate_velocity_auto(ev, 1.584);
            const Vec2 v = est.valid ? refine_velocity(ev, est.velocity_px_s).velocity_px_s : Vec2{};
            elapsed += t.seconds();
            const Vec2 tv = truth.field_velocity_px_s;
            worst[noisy] = std::max(worst[noisy], (v - tv).norm() / tv.norm());
            worst_coarse = std::max(worst_coarse, est.valid ? (est.velocity_px_s - tv).norm() / tv.norm() : 1.0);
        }
    return {worst[0] < 0.05 && worst[1] < 0.10 && elapsed < 30.0,
            fmt("max relative error %.2e noise-free, %.2e noisy (before refinement %.2e), %.1f s", worst[0], worst[1],
                worst_coarse, elapsed)};
}

// 3. Scan budget.
Verdict scan_budget() {
    const SensorGeometry g{1280, 720};
    const double one = scan_time_s(0.5, 1.0, 1.584, g);
    const double geo = scan_time_s(0.5, 180.0 * 1280 * 1.584 / 3600.0, 1.584, g) / 60.0;
    return {std::abs(one - 3.55) <= 0.1 && std::abs(geo - 6.0) <= 0.3,
            fmt("1 deg^2 at 0.5 deg/s: %.3f s, GEO belt at 0.5 deg/s: %.3f min", one, geo)};
}

// 4. Oracle equivalences.
Verdict oracles() {
    std::mt19937_64 rng(4);
    std::size_t bad[4] = {0, 0, 0, 0};
    const int n = 1000;
    for (int k = 0; k < n; ++k) {
        std::uniform_int_distribution<int> np(1, 150);
        std::uniform_real_distribution<double> u(0.0, 30.0);
        std::vector<std::array<double, 3>> pts(np(rng));
        for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
        const double eps = 1.0 + 3.0 * (k % 7) / 6.0;
        const int mp = 2 + k % 6;
        bad[0] += dbscan<3>(pts, eps, mp) != oracle::dbscan(pts, eps, mp);
    }
    for (int k = 0; k < n; ++k) {
        const int w = 1 + int(rng() % 40), h = 1 + int(rng() % 40);
        std::bernoulli_distribution on(0.1 + 0.5 * (k % 5) / 4.0);
        std::vector<std::uint8_t> mask(std::size_t(w) * h);
        for (auto& m : mask) m = on(rng);
        int count = 0;
        const auto want = oracle::flood_fill(mask, w, h, &count);
        const auto got = label_components(mask, w, h);
        bad[1] += got.count != count || got.labels != want;
    }
    for (int k = 0; k < n; ++k) {
        std::uniform_real_distribution<double> u(-100.0, 100.0);
        std::vector<std::array<double, 2>> pts(1 + rng() % 200);
        for (auto& p : pts) p = {u(rng), u(rng)};
        if (k % 10 == 0) pts.insert(pts.end(), pts.begin(), pts.begin() + std::min<std::size_t>(pts.size(), 5));
        const KdTree<2> tree(pts);
        bool ok = true;
        for (int q = 0; q < 20 && ok; ++q) {
            const std::array<double, 2> p{u(rng), u(rng)};
            const auto got = tree.nearest(p);
            const auto want = oracle::nearest(pts, p);
            ok = got && got->first == want.first && got->second == want.second;
            ok = ok && tree.radius(p, 15.0) == oracle::within(pts, p, 15.0);
        }
        bad[2] += !ok;
    }
    for (int k = 0; k < n; ++k) {
        const SensorGeometry g{64, 48};
        const auto s = random_stream(rng, 1 + rng() % 400, g);
        std::uniform_real_distribution<double> uv(-40.0, 40.0);
        AccumulationOptions o;
        o.velocity = {uv(rng), uv(rng)};
        o.mode = k % 2 ? MapMode::MonoOn : MapMode::Dual;
        const std::int64_t ta = 200'000 * (k % 3), tb = 3'000'000 - 100'000 * (k % 4);
        o.t0_us = (ta + tb) / 2;
        const auto f = accumulate(s, ta, tb, o);
        const auto want = oracle::accumulate(s, ta, tb, o.velocity, *o.t0_us, o.mode);
        bool ok = true;
        std::size_t nonzero = 0;
        for (int y = 0; y < f.height && ok; ++y)
            for (int x = 0; x < f.width && ok; ++x) {
                const auto key = std::make_pair(long(x - f.origin_x), long(y - f.origin_y));
                const auto it = want.values.find(key);
                ok = f.at(x, y) == (it == want.values.end() ? 0.0 : it->second);
                const auto span = f.events_at(f.pixel(x, y));
                const std::vector<std::uint32_t> got(span.begin(), span.end());
                const auto ie = want.events.find(key);
                ok = ok && (ie == want.events.end() ? got.empty() : got == ie->second);
                nonzero += !got.empty();
            }
        bad[3] += !ok || nonzero != want.events.size();
    }
    const bool pass = bad[0] + bad[1] + bad[2] + bad[3] == 0;
    return {pass, fmt("mismatches over %d instances each: dbscan %zu, components %zu, kd-tree %zu, accumulate %zu", n,
                      bad[0], bad[1], bad[2], bad[3])};
}

// 5. Round trips.
Verdict round_trips() {
    std::mt19937_64 rng(5);
    const fs::path dir = scratch("io");
    std::size_t io_bad = 0;
    for (int k = 0; k < 40; ++k) {
        const auto s = random_stream(rng, 1 + rng() % 2000, {1280, 720});
        for (auto format : {StreamFormat::Binary, StreamFormat::Csv}) {
            const fs::path p = dir / (format == StreamFormat::Binary ? "e.bin" : "e.csv");
            write_stream(s, p, format);
            const auto back = read_stream(p, format, s.geometry());
            io_bad += !std::equal(s.events().begin(), s.events().end(), back.events().begin(), back.events().end());
        }
    }
    std::uniform_real_distribution<double> ura(0, 360), udec(-89, 89), urot(0, 2 * kPi), ux(0, 1280), uy(0, 720);
    double proj = 0, warp_err = 0;
    for (int k = 0; k < 10000; ++k) {
        const auto sol = CalibrationSolution::ideal({ura(rng), udec(rng)}, 1.584, urot(rng), {1280, 720}, k % 2);
        const Vec2 p{ux(rng), uy(rng)};
        proj = std::max(proj, (world_to_pixel(pixel_to_world(p, sol), sol) - p).norm());
        const Vec2 v{ux(rng) - 640, uy(rng) - 360};
        const std::int64_t t = std::int64_t(rng() % 10'000'000), t0 = std::int64_t(rng() % 10'000'000);
        warp_err = std::max(warp_err, (unwarp(warp(p, t, v, t0), t, v, t0) - p).norm());
    }
    return {io_bad == 0 && proj < 1e-9 && warp_err < 1e-9,
            fmt("event file mismatches %zu/80, world-pixel max %.2e px, warp max %.2e px", io_bad, proj, warp_err)};
}

// 6. Detection quality. Stars are counted as detectable when they fire, stay on
// the sensor for the whole map window, are expected to emit at least twice the
// cluster minimum, and have no other firing star within 8 px.
Verdict detection() {
    const double speeds[] = {0.5, 0.0625, 0.01, 0.002, 0.000488};
    const int min_points = SourceFinderOptions{}.min_points;
    std::size_t detectable = 0, recalled = 0, frames = 0, false_pos = 0;
    bool monotone = true;
    std::string counts;
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        FieldSpec f;
        f.seed = seed;
        f.speed_deg_s = speeds[0];
        f.mag_min = 8;
        f.mag_max = 16;
        const auto base = make_field_scene(f);
        const auto cat = fixture::catalog_of(base);
        std::size_t previous = 0;
        counts += seed > 1 ? "; " : "";
        for (double speed : speeds) {
            auto sc = base;
            sc.slew_deg_s = slew(speed, f.heading_deg);
            auto [ev, truth] = synthesize(sc);
            const auto map = build_star_map(ev, pipeline_velocity(ev), {3.0, MapMode::Dual});
            const auto found = find_sources(map, ev);
            const auto m = match_external(found.sources, truth.solution, cat);
            const auto& g = sc.geometry;
            std::size_t in_view = 0;
            for (std::size_t i = 0; i < m.size(); ++i) {
                const Vec2 c = found.sources[i].centroid;
                in_view += c.x >= -0.5 && c.y >= -0.5 && c.x < g.width - 0.5 && c.y < g.height - 0.5;
                false_pos += !m[i].catalog_id;
            }
            ++frames;
            monotone = monotone && in_view >= previous;
            previous = in_view;
            counts += (speed == speeds[0] ? "" : ",") + std::to_string(in_view);
            if (speed != speeds[4]) continue;
            const double ta = map.t_start_us * 1e-6, tb = map.t_end_us * 1e-6, t0 = map.t0_us * 1e-6;
            for (std::size_t i = 0; i < truth.stars.size(); ++i) {
                const auto& s = truth.stars[i];
                if (s.response.firing_radius <= 0) continue;
                if (truth.time_in_view(i, ta, tb, g) < (tb - ta) - 1e-9) continue;
                if ((s.response.on_rate + s.response.off_rate) * (tb - ta) < 2.0 * min_points) continue;
                const Vec2 p = truth.star_position(i, t0);
                bool isolated = true;
                for (std::size_t j = 0; j < truth.stars.size() && isolated; ++j)
                    isolated = j == i || truth.stars[j].response.firing_radius <= 0 ||
                               (truth.star_position(j, t0) - p).norm() >= 8.0;
                if (!isolated) continue;
                ++detectable;
                recalled += std::any_of(m.begin(), m.end(), [&](const SourceMatch& r) {
                    return r.catalog_id && *r.catalog_id == s.id;
                });
            }
        }
    }
    const double recall = detectable ? double(recalled) / detectable : 0.0;
    const double fp = double(false_pos) / frames;
    return {recall >= 0.95 && fp <= 1.0 && monotone,
            fmt("recall %zu/%zu = %.3f at 0.000488 deg/s, %.2f false positives per frame, in-view counts fast to "
                "slow per seed [%s] %s",
                recalled, detectable, recall, fp, counts.c_str(), monotone ? "monotone" : "not monotone")};
}

// 7. Feature trends.
Verdict features() {
    std::vector<double> mag, rate, diam, gw_mono, diam_mono, gw_dual, diam_dual;
    for (std::uint64_t seed = 1; seed <= 3; ++seed)
        for (double speed : {0.0005, 0.002, 0.01}) {
            FieldSpec f;
            f.seed = seed;
            f.speed_deg_s = speed;
            f.mag_min = 6;
            f.mag_max = 14;
            const auto scene = make_field_scene(f);
            auto [ev, truth] = synthesize(scene);
            const auto cat = fixture::catalog_of(scene);
            for (MapMode mode : {MapMode::Dual, MapMode::MonoOn}) {
                const auto map = build_star_map(ev, truth.field_velocity_px_s, {3.0, mode});
                const auto found = find_sources(map, ev);
                const auto m = match_external(found.sources, truth.solution, cat);
                for (std::size_t i = 0; i < m.size(); ++i) {
                    if (!m[i].catalog_id) continue;
                    const Source& s = found.sources[i];
                    const double gw = (s.geometric_centroid - s.centroid).norm();
                    if (mode == MapMode::Dual) {
                        mag.push_back(m[i].magnitude);
                        rate.push_back(s.event_rate);
                        diam.push_back(s.equivalent_diameter);
                        gw_dual.push_back(gw);
                        diam_dual.push_back(s.equivalent_diameter);
                    } else {
                        gw_mono.push_back(gw);
                        diam_mono.push_back(s.equivalent_diameter);
                    }
                }
            }
        }
    const double r_rate = spearman(rate, mag), r_diam = spearman(diam, mag);
    const double r_gw = spearman(gw_mono, diam_mono), r_gw_dual = spearman(gw_dual, diam_dual);

    double wake_mono = 0, wake_dual = 0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        FieldSpec f;
        f.seed = seed;
        f.speed_deg_s = 0.01;
        f.wake_tau_s = 0.3;
        const auto scene = make_field_scene(f);
        auto [ev, truth] = synthesize(scene);
        const auto cat = fixture::catalog_of(scene);
        for (MapMode mode : {MapMode::MonoOn, MapMode::Dual}) {
            const auto map = build_star_map(ev, truth.field_velocity_px_s, {3.0, mode});
            const auto found = find_sources(map, ev);
            const auto m = match_external(found.sources, truth.solution, cat, 10.0);
            const auto st = report_com_offsets(m, found.sources, cat, truth.solution, truth.field_velocity_px_s, mode);
            (mode == MapMode::MonoOn ? wake_mono : wake_dual) += st.mean_along_slew / 3.0;
        }
    }
    return {r_rate < -0.7 && r_diam < -0.7 && r_gw > 0.0 && wake_mono > 0.0,
            fmt("n=%zu, rho(rate,mag) %.3f, rho(diameter,mag) %.3f, rho(|g-w|,diameter) %.3f mono-ON (dual %.3f), "
                "wake offset along slew %+.2f px mono-ON (dual %+.2f)",
                mag.size(), r_rate, r_diam, r_gw, r_gw_dual, wake_mono, wake_dual)};
}

// 8. Quad code similarity invariance.
Verdict quad_invariance() {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-500, 500), ang(0, 2 * kPi), lscale(-3, 3);
    double worst = 0;
    int compared = 0, degenerate = 0, inconsistent = 0;
    while (compared < 10000) {
        std::array<Vec2, 4> p;
        for (auto& q : p) q = {u(rng), u(rng)};
        const double th = ang(rng), s = std::exp(lscale(rng));
        const Vec2 t{u(rng), u(rng)};
        std::array<Vec2, 4> q;
        for (int i = 0; i < 4; ++i)
            q[i] = {s * (std::cos(th) * p[i].x - std::sin(th) * p[i].y) + t.x,
                    s * (std::sin(th) * p[i].x + std::cos(th) * p[i].y) + t.y};
        const auto a = make_quad(p, {0, 1, 2, 3});
        const auto b = make_quad(q, {0, 1, 2, 3});
        if (!a || !b) {
            degenerate += !a && !b;
            inconsistent += bool(a) != bool(b);
            if (!a && !b) continue;
            break;
        }
        if (a->members != b->members) {
            ++inconsistent;
            continue;
        }
        for (int k = 0; k < 4; ++k) worst = std::max(worst, std::abs(a->code[k] - b->code[k]));
        ++compared;
    }
    return {inconsistent == 0 && worst < 1e-9,
            fmt("%d quads, max code difference %.2e, %d labelling disagreements, %d degenerate skipped", compared,
                worst, inconsistent, degenerate)};
}

// 9. Determinism of the command-line run.
Verdict determinism(const std::string& cli) {
    const fs::path obs = scratch("obs");
    FieldSpec f;
    f.seed = 9;
    synthesize_to(f, obs);
    const fs::path out = obs / "out";
    std::vector<std::string> names{"starmap.pgm", "starmap.json", "sources.csv", "sources.json", "solution.json",
                                   "windows.json", "matches.csv",  "report.json", "report.csv",   "plot.csv"};
    std::function<void()> run;
    std::string how;
    if (!cli.empty()) {
        how = "command line";
        const std::string cmd = "\"" + cli + "\" run --events \"" + (obs / "events.bin").string() + "\" --catalog \"" +
                                (obs / "catalog.csv").string() + "\" --mount \"" + (obs / "mount.csv").string() +
                                "\" -o \"" + out.string() + "\" > /dev/null";
        run = [cmd] {
            if (std::system(cmd.c_str()) != 0) throw std::runtime_error("run failed: " + cmd);
        };
    } else {
        how = "library";
        PipelineConfig c;
        c.events = obs / "events.bin";
        c.catalog = obs / "catalog.csv";
        c.mount = obs / "mount.csv";
        c.output_dir = out;
        run = [c] { run_pipeline(c); };
    }
    run();
    std::vector<std::string> first;
    for (const auto& n : names) first.push_back(slurp(out / n));
    fs::remove_all(out);
    run();
    std::size_t same = 0;
    for (std::size_t i = 0; i < names.size(); ++i) same += fs::exists(out / names[i]) && slurp(out / names[i]) == first[i];
    return {same == names.size(), fmt("%zu/%zu artifacts byte-identical across two %s runs", same, names.size(), how.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
    const std::string cli = argc > 1 ? argv[1] : "";
    const std::vector<std::pair<const char*, std::function<Verdict()>>> checks{
        {"pixel-scale recovery", scale_recovery},
        {"velocity recovery", velocity_recovery},
        {"scan budget", scan_budget},
        {"oracle equivalence", oracles},
        {"round trips", round_trips},
        {"detection quality", detection},
        {"feature trends", features},
        {"quad invariance", quad_invariance},
        {"determinism", [&] { return determinism(cli); }},
    };
    int failed = 0;
    for (std::size_t i = 0; i < checks.size(); ++i) {
        Verdict v;
        try {
            v = checks[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failed += !v.pass;
        std::cout << (v.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << checks[i].first << ": " << v.detail
                  << std::endl;
    }
    std::cout << (failed ? "FAILED " : "ALL PASSED ") << checks.size() - failed << "/" << checks.size() << std::endl;
    return failed ? 1 : 0;
}
