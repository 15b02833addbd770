#include "evstar/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "evstar/catalog.hpp"
#include "evstar/textio.hpp"

namespace evstar {

namespace fs = std::filesystem;

const char* to_string(CalibrationMode m) { return m == CalibrationMode::Mpmi ? "mpmi" : "spsi"; }

CalibrationMode calibration_mode_from_string(const std::string& s) {
    if (s == "mpmi") return CalibrationMode::Mpmi;
    if (s == "spsi") return CalibrationMode::Spsi;
    throw std::invalid_argument("unknown calibration mode '" + s + "' (expected mpmi or spsi)");
}

namespace {

// ---- config helpers ----

double number(const Json& v, const std::string& key, double lo, double hi) {
    if (!v.is_number()) throw std::invalid_argument("config key '" + key + "' must be a number");
    const double x = v.get<double>();
    if (!(x >= lo && x <= hi))
        throw std::invalid_argument("config key '" + key + "' out of range [" + format_double(lo) + ", " +
                                    format_double(hi) + "]");
    return x;
}

long long integer(const Json& v, const std::string& key, long long lo, long long hi) {
    if (!v.is_number_integer()) throw std::invalid_argument("config key '" + key + "' must be an integer");
    const long long x = v.get<long long>();
    if (x < lo || x > hi)
        throw std::invalid_argument("config key '" + key + "' out of range [" + std::to_string(lo) + ", " +
                                    std::to_string(hi) + "]");
    return x;
}

bool boolean(const Json& v, const std::string& key) {
    if (!v.is_boolean()) throw std::invalid_argument("config key '" + key + "' must be true or false");
    return v.get<bool>();
}

std::string text(const Json& v, const std::string& key) {
    if (!v.is_string()) throw std::invalid_argument("config key '" + key + "' must be a string");
    return v.get<std::string>();
}

fs::path path_value(const Json& v, const std::string& key) {
    if (v.is_null()) return {};
    return text(v, key);
}

Vec2 pair_value(const Json& v, const std::string& key) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        throw std::invalid_argument("config key '" + key + "' must be a pair of numbers");
    return {v[0].get<double>(), v[1].get<double>()};
}

using Setter = std::function<void(const Json&, const std::string&)>;

void apply(const Json& j, const std::string& prefix, const std::map<std::string, Setter>& setters) {
    if (!j.is_object()) throw std::invalid_argument("config section '" + prefix + "' must be an object");
    for (const auto& [k, v] : j.items()) {
        const std::string key = prefix.empty() ? k : prefix + "." + k;
        auto it = setters.find(k);
        if (it == setters.end()) throw std::invalid_argument("unknown config key '" + key + "'");
        it->second(v, key);
    }
}

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }
Json path_json(const fs::path& p) { return p.empty() ? Json(nullptr) : Json(p.generic_string()); }

constexpr double kHuge = 1e12;

// ---- io helpers ----

Json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw std::runtime_error("invalid JSON in " + p.string() + ": " + e.what());
    }
}

Json read_artifact(const fs::path& p) {
    if (!fs::exists(p)) throw std::runtime_error("missing " + p.string() + " (run the earlier stage first)");
    return read_json(p);
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << s;
}

void write_json(const fs::path& p, const Json& j) { write_text(p, j.dump(2) + "\n"); }

template <class F>
auto staged(const char* stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

EventStream ingest(const PipelineConfig& cfg) {
    return staged("ingest", [&] {
        if (cfg.events.empty()) throw std::runtime_error("no event file configured");
        if (!fs::exists(cfg.events)) throw std::runtime_error("event file " + cfg.events.string() + " not found");
        EventStream s = read_stream(cfg.events, format_from_path(cfg.events), cfg.geometry);
        if (s.empty()) throw std::runtime_error("event file " + cfg.events.string() + " holds no events");
        return s;
    });
}

Catalog load_catalog(const PipelineConfig& cfg) {
    if (cfg.catalog.empty()) throw std::runtime_error("no catalog configured");
    return read_catalog(cfg.catalog);
}

std::optional<MountTrack> load_mount(const PipelineConfig& cfg) {
    if (cfg.mount.empty()) return std::nullopt;
    return read_mount_track(cfg.mount);
}

Json coord_json(SkyCoord c) { return Json::array({c.ra_deg, c.dec_deg}); }
Json vec_json(Vec2 v) { return Json::array({v.x, v.y}); }
Vec2 vec_from(const Json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

std::string opt_text(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

// Star map geometry as recorded by the map stage.
struct MapInfo {
    Vec2 velocity;
    std::int64_t t0_us = 0;
    double window_s = 0.0;
    MapMode mode = MapMode::Dual;
    SensorGeometry sensor;
};

MapInfo read_map_info(const PipelineConfig& cfg) {
    const Json j = read_artifact(cfg.output_dir / "starmap.json");
    MapInfo m;
    m.velocity = vec_from(j.at("velocity_px_s"));
    m.t0_us = j.at("t0_us").get<std::int64_t>();
    m.window_s = j.at("window_s").get<double>();
    m.mode = map_mode_from_string(j.at("mode").get<std::string>());
    m.sensor.width = j.at("sensor").at("width").get<int>();
    m.sensor.height = j.at("sensor").at("height").get<int>();
    return m;
}

AccumulationFrame rebuild_map(const EventStream& stream, const MapInfo& m) {
    StarMapOptions o;
    o.window_s = m.window_s;
    o.mode = m.mode;
    o.center_us = m.t0_us;
    return build_star_map(stream, m.velocity, o);
}

struct MatchRow {
    int source_id = 0;
    std::optional<std::int64_t> catalog_id;
    std::optional<double> sep;
    std::optional<double> mag;
    std::string flags;
};

void write_matches_csv(const std::vector<MatchRow>& rows, const fs::path& p) {
    std::ostringstream out;
    out << "source_id,catalog_id,sep,mag,flags\n";
    for (const auto& r : rows)
        out << r.source_id << ',' << (r.catalog_id ? std::to_string(*r.catalog_id) : "") << ',' << opt_text(r.sep)
            << ',' << opt_text(r.mag) << ',' << r.flags << '\n';
    write_text(p, out.str());
}

std::vector<MatchRow> read_matches_csv(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("missing " + p.string() + " (run the earlier stage first)");
    std::vector<MatchRow> rows;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        if (++n == 1 || line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 5) throw FormatError(FormatError::Kind::Malformed, n, p.string() + ": expected 5 fields");
        MatchRow r;
        long long id = 0;
        double d = 0;
        if (!parse_int64(f[0], id)) throw FormatError(FormatError::Kind::Malformed, n, p.string() + ": bad source_id");
        r.source_id = static_cast<int>(id);
        if (!f[1].empty()) {
            if (!parse_int64(f[1], id)) throw FormatError(FormatError::Kind::Malformed, n, p.string() + ": bad catalog_id");
            r.catalog_id = id;
        }
        if (!f[2].empty()) {
            if (!parse_double(f[2], d)) throw FormatError(FormatError::Kind::Malformed, n, p.string() + ": bad sep");
            r.sep = d;
        }
        if (!f[3].empty()) {
            if (!parse_double(f[3], d)) throw FormatError(FormatError::Kind::Malformed, n, p.string() + ": bad mag");
            r.mag = d;
        }
        r.flags = std::string(f[4]);
        rows.push_back(std::move(r));
    }
    return rows;
}

bool has_extended(std::span<const Source> s) {
    return std::any_of(s.begin(), s.end(), [](const Source& x) { return x.kind == SourceKind::Extended; });
}

double speed_label(const PipelineConfig& cfg, Vec2 v) {
    return cfg.speed_deg_s ? *cfg.speed_deg_s : v.norm() * cfg.pixel_scale / kArcsecPerDeg;
}

// Same partition as the per-window solver.
std::vector<std::pair<std::int64_t, std::int64_t>> window_partition(const EventStream& s, double window_s) {
    const std::int64_t len = std::max<std::int64_t>(1, std::llround(window_s * 1e6));
    const std::int64_t t0 = s.t_first(), t_end = s.t_last() + 1;
    const std::int64_t n = std::max<std::int64_t>(1, (t_end - t0 + len / 2) / len);
    std::vector<std::pair<std::int64_t, std::int64_t>> w;
    for (std::int64_t k = 0; k < n; ++k) w.emplace_back(t0 + k * len, k + 1 == n ? std::max(t_end, t0 + (k + 1) * len) : t0 + (k + 1) * len);
    return w;
}

}  // namespace

// ---- config ----

Json to_json(const PipelineConfig& c) {
    const auto& v = c.velocity;
    const auto& f = c.finder;
    const auto& s = c.solver;
    Json j;
    j["field"] = c.field;
    j["events"] = path_json(c.events);
    j["catalog"] = path_json(c.catalog);
    j["mount"] = path_json(c.mount);
    j["output_dir"] = path_json(c.output_dir);
    j["geometry"] = {{"width", c.geometry.width}, {"height", c.geometry.height}};
    j["mode"] = to_string(c.mode);
    j["polarity_mode"] = to_string(c.polarity_mode);
    j["pixel_scale"] = c.pixel_scale;
    j["truth_pixel_scale"] = optional_number(c.truth_pixel_scale);
    j["speed_deg_s"] = optional_number(c.speed_deg_s);
    j["velocity_px_s"] = c.velocity_px_s ? vec_json(*c.velocity_px_s) : Json(nullptr);
    j["center_hint"] = c.center_hint ? coord_json(*c.center_hint) : Json(nullptr);
    j["map_window_s"] = c.map_window_s;
    j["velocity"] = {{"span_s", v.span_s},
                     {"min_blob_area", v.min_blob_area},
                     {"blob_link_px", v.blob_link_px},
                     {"max_blobs", v.max_blobs},
                     {"vote_blobs", v.vote_blobs},
                     {"match_tolerance_px", v.match_tolerance_px},
                     {"refine", c.refine_velocity},
                     {"refine_iterations", c.refine.iterations},
                     {"refine_min_events", c.refine.min_events}};
    j["sigma_clip"] = {{"n_sigma", f.n_sigma}, {"max_iter", f.clip_max_iter}};
    j["cluster"] = {{"eps", f.eps},
                    {"min_points", f.min_points},
                    {"time_scale", optional_number(f.time_scale)},
                    {"extended_threshold", f.extended_threshold}};
    j["solver"] = {{"scale_tolerance", s.scale_tolerance},
                   {"search_radius_deg", s.search_radius_deg},
                   {"max_sources", s.max_sources},
                   {"max_index_stars", s.max_index_stars},
                   {"min_quad_fraction", s.min_quad_fraction},
                   {"max_quad_fraction", s.max_quad_fraction},
                   {"code_tolerance", s.code_tolerance},
                   {"match_radius_px", s.match_radius_px},
                   {"max_hypotheses", s.max_hypotheses},
                   {"max_rms_px", s.max_rms_px},
                   {"min_match_fraction", s.min_match_fraction},
                   {"min_matches", s.min_matches},
                   {"allow_mirror", s.allow_mirror}};
    j["match_radius_arcsec"] = c.match_radius_arcsec;
    j["fallback"] = {{"sibling_dir", path_json(c.sibling_dir)}, {"prior_solution", path_json(c.prior_solution)}};
    j["report"] = {{"plot_csv", c.plot_csv}, {"windows", c.windows}};
    return j;
}

void merge_config(PipelineConfig& c, const Json& j) {
    auto& v = c.velocity;
    auto& f = c.finder;
    auto& s = c.solver;
    const std::map<std::string, Setter> top{
        {"field", [&](const Json& x, const std::string& k) { c.field = text(x, k); }},
        {"events", [&](const Json& x, const std::string& k) { c.events = path_value(x, k); }},
        {"catalog", [&](const Json& x, const std::string& k) { c.catalog = path_value(x, k); }},
        {"mount", [&](const Json& x, const std::string& k) { c.mount = path_value(x, k); }},
        {"output_dir", [&](const Json& x, const std::string& k) { c.output_dir = path_value(x, k); }},
        {"geometry",
         [&](const Json& x, const std::string& k) {
             apply(x, k,
                   {{"width", [&](const Json& y, const std::string& kk) { c.geometry.width = int(integer(y, kk, 1, 65535)); }},
                    {"height", [&](const Json& y, const std::string& kk) { c.geometry.height = int(integer(y, kk, 1, 65535)); }}});
         }},
        {"mode", [&](const Json& x, const std::string& k) { c.mode = calibration_mode_from_string(text(x, k)); }},
        {"polarity_mode", [&](const Json& x, const std::string& k) { c.polarity_mode = map_mode_from_string(text(x, k)); }},
        {"pixel_scale", [&](const Json& x, const std::string& k) { c.pixel_scale = number(x, k, 1e-3, 3600); }},
        {"truth_pixel_scale",
         [&](const Json& x, const std::string& k) {
             c.truth_pixel_scale = x.is_null() ? std::nullopt : std::optional<double>(number(x, k, 1e-3, 3600));
         }},
        {"speed_deg_s",
         [&](const Json& x, const std::string& k) {
             c.speed_deg_s = x.is_null() ? std::nullopt : std::optional<double>(number(x, k, 0, 90));
         }},
        {"velocity_px_s",
         [&](const Json& x, const std::string& k) {
             c.velocity_px_s = x.is_null() ? std::nullopt : std::optional<Vec2>(pair_value(x, k));
         }},
        {"center_hint",
         [&](const Json& x, const std::string& k) {
             if (x.is_null()) {
                 c.center_hint.reset();
                 return;
             }
             const Vec2 p = pair_value(x, k);
             if (std::abs(p.y) > 90) throw std::invalid_argument("config key '" + k + "': declination out of range");
             c.center_hint = SkyCoord{wrap_ra(p.x), p.y};
         }},
        {"map_window_s", [&](const Json& x, const std::string& k) { c.map_window_s = number(x, k, 1e-3, 3600); }},
        {"velocity",
         [&](const Json& x, const std::string& k) {
             apply(x, k,
                   {{"span_s", [&](const Json& y, const std::string& kk) { v.span_s = number(y, kk, 1e-3, 1e6); }},
                    {"min_blob_area", [&](const Json& y, const std::string& kk) { v.min_blob_area = int(integer(y, kk, 1, 1 << 20)); }},
                    {"blob_link_px", [&](const Json& y, const std::string& kk) { v.blob_link_px = int(integer(y, kk, 1, 100)); }},
                    {"max_blobs", [&](const Json& y, const std::string& kk) { v.max_blobs = int(integer(y, kk, 1, 10000)); }},
                    {"vote_blobs", [&](const Json& y, const std::string& kk) { v.vote_blobs = int(integer(y, kk, 1, 10000)); }},
                    {"match_tolerance_px",
                     [&](const Json& y, const std::string& kk) { v.match_tolerance_px = number(y, kk, 0, 1e4); }},
                    {"refine", [&](const Json& y, const std::string& kk) { c.refine_velocity = boolean(y, kk); }},
                    {"refine_iterations",
                     [&](const Json& y, const std::string& kk) { c.refine.iterations = int(integer(y, kk, 1, 100)); }},
                    {"refine_min_events", [&](const Json& y, const std::string& kk) {
                         c.refine.min_events = std::size_t(integer(y, kk, 3, 1 << 30));
                     }}});
         }},
        {"sigma_clip",
         [&](const Json& x, const std::string& k) {
             apply(x, k,
                   {{"n_sigma", [&](const Json& y, const std::string& kk) { f.n_sigma = number(y, kk, 0, 100); }},
                    {"max_iter", [&](const Json& y, const std::string& kk) { f.clip_max_iter = int(integer(y, kk, 1, 1000)); }}});
         }},
        {"cluster",
         [&](const Json& x, const std::string& k) {
             apply(x, k,
                   {{"eps", [&](const Json& y, const std::string& kk) { f.eps = number(y, kk, 1e-6, 1e4); }},
                    {"min_points", [&](const Json& y, const std::string& kk) { f.min_points = int(integer(y, kk, 1, 1 << 20)); }},
                    {"time_scale",
                     [&](const Json& y, const std::string& kk) {
                         f.time_scale = y.is_null() ? std::nullopt : std::optional<double>(number(y, kk, 0, kHuge));
                     }},
                    {"extended_threshold", [&](const Json& y, const std::string& kk) {
                         f.extended_threshold = std::size_t(integer(y, kk, 1, 1LL << 40));
                     }}});
         }},
        {"solver",
         [&](const Json& x, const std::string& k) {
             apply(x, k,
                   {{"scale_tolerance", [&](const Json& y, const std::string& kk) { s.scale_tolerance = number(y, kk, 0, 1); }},
                    {"search_radius_deg", [&](const Json& y, const std::string& kk) { s.search_radius_deg = number(y, kk, 0, 10); }},
                    {"max_sources", [&](const Json& y, const std::string& kk) { s.max_sources = std::size_t(integer(y, kk, 4, 100000)); }},
                    {"max_index_stars", [&](const Json& y, const std::string& kk) { s.max_index_stars = std::size_t(integer(y, kk, 4, 100000)); }},
                    {"min_quad_fraction", [&](const Json& y, const std::string& kk) { s.min_quad_fraction = number(y, kk, 0, 10); }},
                    {"max_quad_fraction", [&](const Json& y, const std::string& kk) { s.max_quad_fraction = number(y, kk, 0, 10); }},
                    {"code_tolerance", [&](const Json& y, const std::string& kk) { s.code_tolerance = number(y, kk, 0, 1); }},
                    {"match_radius_px", [&](const Json& y, const std::string& kk) { s.match_radius_px = number(y, kk, 0, 1000); }},
                    {"max_hypotheses", [&](const Json& y, const std::string& kk) { s.max_hypotheses = std::size_t(integer(y, kk, 1, 1LL << 40)); }},
                    {"max_rms_px", [&](const Json& y, const std::string& kk) { s.max_rms_px = number(y, kk, 0, 1000); }},
                    {"min_match_fraction", [&](const Json& y, const std::string& kk) { s.min_match_fraction = number(y, kk, 0, 1); }},
                    {"min_matches", [&](const Json& y, const std::string& kk) { s.min_matches = int(integer(y, kk, 2, 100000)); }},
                    {"allow_mirror", [&](const Json& y, const std::string& kk) { s.allow_mirror = boolean(y, kk); }}});
         }},
        {"match_radius_arcsec", [&](const Json& x, const std::string& k) { c.match_radius_arcsec = number(x, k, 0, 3600); }},
        {"fallback",
         [&](const Json& x, const std::string& k) {
             apply(x, k,
                   {{"sibling_dir", [&](const Json& y, const std::string& kk) { c.sibling_dir = path_value(y, kk); }},
                    {"prior_solution", [&](const Json& y, const std::string& kk) { c.prior_solution = path_value(y, kk); }}});
         }},
        {"report",
         [&](const Json& x, const std::string& k) {
             apply(x, k,
                   {{"plot_csv", [&](const Json& y, const std::string& kk) { c.plot_csv = boolean(y, kk); }},
                    {"windows", [&](const Json& y, const std::string& kk) { c.windows = boolean(y, kk); }}});
         }},
    };
    apply(j, "", top);
    if (s.min_quad_fraction >= s.max_quad_fraction)
        throw std::invalid_argument("config: solver.min_quad_fraction must be below max_quad_fraction");
}

PipelineConfig load_config(const fs::path& path) {
    PipelineConfig c;
    merge_config(c, read_json(path));
    return c;
}

Json to_json(const FieldSpec& f) {
    Json j;
    j["n_stars"] = f.n_stars;
    j["mag_min"] = f.mag_min;
    j["mag_max"] = f.mag_max;
    j["speed_deg_s"] = f.speed_deg_s;
    j["heading_deg"] = f.heading_deg;
    j["rotation_deg"] = f.rotation_deg;
    j["mirrored"] = f.mirrored;
    j["duration_s"] = f.duration_s;
    j["noise_rate"] = f.noise_rate;
    j["wake_tau_s"] = f.wake_tau_s;
    j["n_hot_pixels"] = f.n_hot_pixels;
    j["pointing_offset_arcsec"] = vec_json(f.pointing_offset_arcsec);
    j["wind_step_arcsec"] = f.wind_step_arcsec;
    j["center"] = coord_json(f.center);
    j["seed"] = f.seed;
    return j;
}

void merge_field_spec(FieldSpec& f, const Json& j) {
    apply(j, "",
          {{"n_stars", [&](const Json& x, const std::string& k) { f.n_stars = int(integer(x, k, 0, 100000)); }},
           {"mag_min", [&](const Json& x, const std::string& k) { f.mag_min = number(x, k, -30, 30); }},
           {"mag_max", [&](const Json& x, const std::string& k) { f.mag_max = number(x, k, -30, 30); }},
           {"speed_deg_s", [&](const Json& x, const std::string& k) { f.speed_deg_s = number(x, k, 0, 90); }},
           {"heading_deg", [&](const Json& x, const std::string& k) { f.heading_deg = number(x, k, -3600, 3600); }},
           {"rotation_deg", [&](const Json& x, const std::string& k) { f.rotation_deg = number(x, k, -3600, 3600); }},
           {"mirrored", [&](const Json& x, const std::string& k) { f.mirrored = boolean(x, k); }},
           {"duration_s", [&](const Json& x, const std::string& k) { f.duration_s = number(x, k, 1e-3, 3600); }},
           {"noise_rate", [&](const Json& x, const std::string& k) { f.noise_rate = number(x, k, 0, 1000); }},
           {"wake_tau_s", [&](const Json& x, const std::string& k) { f.wake_tau_s = number(x, k, 0, 100); }},
           {"n_hot_pixels", [&](const Json& x, const std::string& k) { f.n_hot_pixels = int(integer(x, k, 0, 100000)); }},
           {"pointing_offset_arcsec",
            [&](const Json& x, const std::string& k) { f.pointing_offset_arcsec = pair_value(x, k); }},
           {"wind_step_arcsec", [&](const Json& x, const std::string& k) { f.wind_step_arcsec = number(x, k, 0, 3600); }},
           {"center",
            [&](const Json& x, const std::string& k) {
                const Vec2 p = pair_value(x, k);
                if (std::abs(p.y) > 90) throw std::invalid_argument("field key '" + k + "': declination out of range");
                f.center = {wrap_ra(p.x), p.y};
            }},
           {"seed", [&](const Json& x, const std::string& k) { f.seed = std::uint64_t(integer(x, k, 0, 1LL << 62)); }}});
    if (f.mag_min > f.mag_max) throw std::invalid_argument("field: mag_min exceeds mag_max");
}

// ---- artifacts ----

void write_sources_csv(std::span<const Source> sources, const fs::path& p) {
    std::ostringstream out;
    out << "id,kind,fallback,n_events,n_on,n_off,area,x,y,geometric_x,geometric_y,equivalent_diameter,extent,"
           "event_rate,flux\n";
    for (const auto& s : sources)
        out << s.id << ',' << (s.kind == SourceKind::Extended ? "extended" : "point") << ',' << (s.fallback ? 1 : 0)
            << ',' << s.n_events << ',' << s.n_on << ',' << s.n_off << ',' << s.area << ','
            << format_double(s.centroid.x) << ',' << format_double(s.centroid.y) << ','
            << format_double(s.geometric_centroid.x) << ',' << format_double(s.geometric_centroid.y) << ','
            << format_double(s.equivalent_diameter) << ',' << format_double(s.extent) << ','
            << format_double(s.event_rate) << ',' << format_double(s.flux) << '\n';
    write_text(p, out.str());
}

std::vector<Source> read_sources_csv(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("missing " + p.string() + " (run the earlier stage first)");
    std::vector<Source> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        if (++n == 1 || line.empty()) continue;
        const auto f = split_csv(line);
        auto bad = [&](const char* what) {
            return FormatError(FormatError::Kind::Malformed, n, p.string() + ": bad " + what);
        };
        if (f.size() != 15) throw bad("field count");
        long long iv[6];
        double dv[8];
        const std::size_t int_cols[6] = {0, 2, 3, 4, 5, 6};
        for (int k = 0; k < 6; ++k)
            if (!parse_int64(f[int_cols[k]], iv[k])) throw bad("integer field");
        for (int k = 0; k < 8; ++k)
            if (!parse_double(f[7 + k], dv[k])) throw bad("numeric field");
        Source s;
        s.id = int(iv[0]);
        if (f[1] == "extended")
            s.kind = SourceKind::Extended;
        else if (f[1] != "point")
            throw bad("kind");
        s.fallback = iv[1] != 0;
        s.n_events = std::size_t(iv[2]);
        s.n_on = std::size_t(iv[3]);
        s.n_off = std::size_t(iv[4]);
        s.area = int(iv[5]);
        s.centroid = {dv[0], dv[1]};
        s.geometric_centroid = {dv[2], dv[3]};
        s.equivalent_diameter = dv[4];
        s.extent = dv[5];
        s.event_rate = dv[6];
        s.flux = dv[7];
        out.push_back(s);
    }
    return out;
}

Json solution_to_json(const CalibrationSolution& s) {
    Json j;
    j["rotation"] = Json::array({s.rotation(0, 0), s.rotation(0, 1), s.rotation(1, 0), s.rotation(1, 1)});
    j["pixel_scale"] = s.pixel_scale;
    j["translation"] = Json::array({s.translation.x(), s.translation.y()});
    j["field_center"] = coord_json(s.field_center);
    j["reference_pixel"] = vec_json(s.reference_pixel);
    j["rms_arcsec"] = s.rms_residual_arcsec;
    j["n_matched"] = s.n_matched;
    return j;
}

CalibrationSolution solution_from_json(const Json& j) {
    CalibrationSolution s;
    const auto& r = j.at("rotation");
    if (r.size() != 4) throw std::invalid_argument("solution rotation needs 4 entries");
    s.rotation << r[0].get<double>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>();
    s.pixel_scale = j.at("pixel_scale").get<double>();
    s.translation = {j.at("translation").at(0).get<double>(), j.at("translation").at(1).get<double>()};
    s.field_center = {j.at("field_center").at(0).get<double>(), j.at("field_center").at(1).get<double>()};
    s.reference_pixel = vec_from(j.at("reference_pixel"));
    s.rms_residual_arcsec = j.value("rms_arcsec", 0.0);
    s.n_matched = j.value("n_matched", 0);
    return s;
}

fs::path synthesize_to(const FieldSpec& spec, const fs::path& dir, StreamFormat format) {
    fs::create_directories(dir);
    const SyntheticScene scene = make_field_scene(spec);
    auto [stream, truth] = synthesize(scene);
    const fs::path events = dir / (format == StreamFormat::Csv ? "events.csv" : "events.bin");
    write_stream(stream, events, format);
    Catalog cat;
    for (const auto& s : scene.stars) cat.push_back({s.id, s.position, s.magnitude});
    write_catalog(cat, dir / "catalog.csv");
    write_mount_track(MountTrack(truth.mount_track), dir / "mount.csv");

    Json j;
    j["field"] = to_json(spec);
    j["sensor"] = {{"width", scene.geometry.width}, {"height", scene.geometry.height}};
    j["pixel_scale"] = scene.pixel_scale;
    j["field_velocity_px_s"] = vec_json(truth.field_velocity_px_s);
    j["reference_time_s"] = truth.reference_time_s;
    j["solution"] = solution_to_json(truth.solution);
    j["n_events"] = stream.size();
    j["n_noise_events"] = truth.count_label(kLabelNoise);
    j["n_hot_pixel_events"] = truth.count_label(kLabelHotPixel);
    Json stars = Json::array();
    for (const auto& s : truth.stars)
        stars.push_back({{"id", s.id},
                         {"magnitude", s.magnitude},
                         {"x", s.position_at_reference.x},
                         {"y", s.position_at_reference.y},
                         {"n_events", s.n_events}});
    j["stars"] = stars;
    j["warnings"] = truth.warnings;
    write_json(dir / "truth.json", j);
    return events;
}

// ---- stages ----

void stage_map(const PipelineConfig& cfg) {
    const EventStream stream = ingest(cfg);
    staged("map", [&] {
        fs::create_directories(cfg.output_dir);
        VelocityEstimate est;
        std::string source = "configured";
        if (cfg.velocity_px_s) {
            est.velocity_px_s = *cfg.velocity_px_s;
            est.valid = true;
        } else {
            est = estimate_velocity_auto(stream, cfg.pixel_scale, cfg.velocity);
            source = "estimated";
            if (!est.valid) throw StageError("velocity", "field velocity could not be estimated (no trackable stars)");
        }
        const Vec2 coarse = est.velocity_px_s;
        VelocityRefinement refined{coarse, 0, 0};
        if (source == "estimated" && cfg.refine_velocity) {
            RefineOptions ro = cfg.refine;
            ro.window_s = cfg.map_window_s;
            refined = refine_velocity(stream, coarse, ro);
            est.velocity_px_s = refined.velocity_px_s;
        }
        StarMapOptions o;
        o.window_s = cfg.map_window_s;
        o.mode = cfg.polarity_mode;
        const AccumulationFrame map = build_star_map(stream, est.velocity_px_s, o);
        write_pgm(map, cfg.output_dir / "starmap.pgm");
        Json j;
        j["field"] = cfg.field;
        j["velocity_px_s"] = vec_json(est.velocity_px_s);
        j["velocity_source"] = source;
        j["coarse_velocity_px_s"] = vec_json(coarse);
        j["refine_blobs"] = refined.n_blobs;
        j["refine_iterations"] = refined.iterations;
        j["speed_deg_s"] = speed_label(cfg, est.velocity_px_s);
        j["schedule"] = {{"integration_s", est.schedule.integration_s}, {"interval_s", est.schedule.interval_s}};
        j["n_frames"] = est.n_frames;
        j["n_links"] = est.n_used;
        j["mode"] = to_string(cfg.polarity_mode);
        j["window_s"] = cfg.map_window_s;
        j["t_start_us"] = map.t_start_us;
        j["t_end_us"] = map.t_end_us;
        j["t0_us"] = map.t0_us;
        j["width"] = map.width;
        j["height"] = map.height;
        j["origin_x"] = map.origin_x;
        j["origin_y"] = map.origin_y;
        j["n_events"] = map.n_events;
        j["dropped"] = map.dropped;
        j["sensor"] = {{"width", stream.geometry().width}, {"height", stream.geometry().height}};
        write_json(cfg.output_dir / "starmap.json", j);
    });
}

void stage_find(const PipelineConfig& cfg) {
    const EventStream stream = ingest(cfg);
    staged("find", [&] {
        const MapInfo info = read_map_info(cfg);
        const AccumulationFrame map = rebuild_map(stream, info);
        const SourceList found = find_sources(map, stream, cfg.finder);
        write_sources_csv(found.sources, cfg.output_dir / "sources.csv");
        const auto n_ext = std::count_if(found.sources.begin(), found.sources.end(),
                                         [](const Source& s) { return s.kind == SourceKind::Extended; });
        Json j;
        j["n_sources"] = found.sources.size();
        j["n_extended"] = n_ext;
        j["n_groups"] = found.n_groups;
        j["n_fallback_groups"] = found.n_fallback_groups;
        j["n_noise_events"] = found.n_noise_events;
        j["clip"] = {{"mean", found.clip.mean},
                     {"stddev", found.clip.stddev},
                     {"threshold", found.clip.threshold},
                     {"iterations", found.clip.iterations}};
        write_json(cfg.output_dir / "sources.json", j);
    });
}

Outcome stage_solve(const PipelineConfig& cfg) {
    return staged("solve", [&] {
        const MapInfo info = read_map_info(cfg);
        const std::vector<Source> sources = read_sources_csv(cfg.output_dir / "sources.csv");
        const Catalog catalog = load_catalog(cfg);
        const std::optional<MountTrack> mount = load_mount(cfg);
        SkyCoord hint;
        if (cfg.center_hint) {
            hint = *cfg.center_hint;
        } else if (mount) {
            hint = mount->at(info.t0_us);
        } else {
            throw std::runtime_error("no pointing hint: configure center_hint or a mount track");
        }
        SolveOptions opts = cfg.solver;
        opts.scale_hint = cfg.pixel_scale;
        const SolveResult res = solve_field(sources, catalog, hint, info.sensor, opts);

        Json j;
        j["solved"] = res.solved;
        j["status"] = res.status;
        j["t_us"] = info.t0_us;
        j["hint"] = coord_json(hint);
        j["n_sources_used"] = res.n_sources_used;
        j["catalog_in_fov"] = res.catalog_in_fov;
        j["n_hypotheses"] = res.n_hypotheses;
        j["n_inliers"] = res.n_inliers;
        j["rms_px"] = res.rms_px;

        std::optional<CalibrationSolution> sol;
        std::string source = "none";
        std::string note;
        if (res.solved) {
            sol = res.solution;
            source = "solved";
        } else {
            if (!cfg.sibling_dir.empty()) {
                const fs::path sib = cfg.sibling_dir / "sources.csv";
                if (!fs::exists(sib) || !fs::exists(cfg.sibling_dir / "matches.csv"))
                    note = "sibling run incomplete";
                else if (!has_extended(sources) || !has_extended(read_sources_csv(sib)))
                    note = "no extended anchor source for internal matching";
                else
                    source = "internal";
            }
            if (source == "none" && !cfg.prior_solution.empty()) {
                const Json p = read_json(cfg.prior_solution);
                const CalibrationSolution prior = solution_from_json(p.contains("solution") ? p.at("solution") : p);
                sol = mount ? PriorProjector(prior, *mount).at(info.t0_us) : prior;
                source = "prior";
            }
        }
        j["source"] = source;
        j["fallback_note"] = note.empty() ? Json(nullptr) : Json(note);
        j["solution"] = sol ? solution_to_json(*sol) : Json(nullptr);
        write_json(cfg.output_dir / "solution.json", j);

        if (cfg.windows && mount) {
            const EventStream stream = ingest(cfg);
            Json w = Json::array();
            if (cfg.mode == CalibrationMode::Mpmi) {
                WindowOptions wo;
                wo.window_s = cfg.map_window_s;
                wo.mode = info.mode;
                wo.finder = cfg.finder;
                wo.solve = opts;
                for (const auto& ws : solve_windows(stream, info.velocity, *mount, catalog, wo))
                    w.push_back({{"index", ws.index},
                                 {"t_start_us", ws.t_start_us},
                                 {"t_end_us", ws.t_end_us},
                                 {"t_center_us", ws.t_center_us},
                                 {"solved", ws.result.solved},
                                 {"status", ws.result.status},
                                 {"solution", ws.result.solved ? solution_to_json(ws.result.solution) : Json(nullptr)}});
            } else {
                int k = 0;
                for (const auto& [a, b] : window_partition(stream, cfg.map_window_s)) {
                    const std::int64_t tc = a + (b - a) / 2;
                    Json e{{"index", k++}, {"t_start_us", a}, {"t_end_us", b}, {"t_center_us", tc}};
                    if (!sol) {
                        e["solved"] = false;
                        e["status"] = "no_prior";
                        e["solution"] = nullptr;
                    } else if (tc < mount->t_first() || tc > mount->t_last()) {
                        e["solved"] = false;
                        e["status"] = "no_mount_coverage";
                        e["solution"] = nullptr;
                    } else {
                        e["solved"] = true;
                        e["status"] = "projected";
                        e["solution"] = solution_to_json(PriorProjector(*sol, *mount).at(tc));
                    }
                    w.push_back(e);
                }
            }
            write_json(cfg.output_dir / "windows.json", Json{{"mode", to_string(cfg.mode)}, {"windows", w}});
        }
        return res.solved ? Outcome::Solved : Outcome::Unsolved;
    });
}

void stage_match(const PipelineConfig& cfg) {
    staged("match", [&] {
        const Json sj = read_artifact(cfg.output_dir / "solution.json");
        const std::vector<Source> sources = read_sources_csv(cfg.output_dir / "sources.csv");
        const std::string source = sj.at("source").get<std::string>();
        std::vector<MatchRow> rows;
        if (source == "solved" || source == "prior") {
            const Catalog catalog = load_catalog(cfg);
            const CalibrationSolution sol = solution_from_json(sj.at("solution"));
            for (const auto& m : match_external(sources, sol, catalog, cfg.match_radius_arcsec)) {
                MatchRow r;
                r.source_id = m.source_id;
                r.catalog_id = m.catalog_id;
                if (std::isfinite(m.separation_arcsec)) r.sep = m.separation_arcsec;
                if (m.catalog_id) r.mag = m.magnitude;
                r.flags = m.catalog_id ? "matched" : "spurious";
                if (m.extended) r.flags += "|extended";
                rows.push_back(r);
            }
        } else if (source == "internal") {
            const auto ref = read_sources_csv(cfg.sibling_dir / "sources.csv");
            std::map<int, MatchRow> ref_rows;
            for (const auto& r : read_matches_csv(cfg.sibling_dir / "matches.csv")) ref_rows[r.source_id] = r;
            const InternalMatchResult im = match_internal(sources, ref);
            std::map<int, InternalMatch> by_id;
            for (const auto& m : im.matches) by_id[m.source_id] = m;
            for (const auto& s : sources) {
                MatchRow r;
                r.source_id = s.id;
                std::optional<int> ref_id;
                if (s.id == im.anchor_id) {
                    ref_id = im.reference_anchor_id;
                    r.sep = 0.0;
                    r.flags = "internal|anchor";
                } else if (auto it = by_id.find(s.id); it != by_id.end() && it->second.reference_id) {
                    ref_id = it->second.reference_id;
                    r.sep = std::hypot(it->second.dx, it->second.dy);
                    r.flags = "internal";
                } else {
                    r.flags = "internal|spurious";
                }
                if (ref_id) {
                    auto rr = ref_rows.find(*ref_id);
                    if (rr != ref_rows.end() && rr->second.catalog_id) {
                        r.catalog_id = rr->second.catalog_id;
                        r.mag = rr->second.mag;
                    } else {
                        r.flags += "|uncatalogued";
                    }
                }
                if (s.kind == SourceKind::Extended) r.flags += "|extended";
                rows.push_back(r);
            }
        } else {
            for (const auto& s : sources)
                rows.push_back({s.id, std::nullopt, std::nullopt, std::nullopt,
                                s.kind == SourceKind::Extended ? "unsolved|extended" : "unsolved"});
        }
        write_matches_csv(rows, cfg.output_dir / "matches.csv");
    });
}

ComOffsetStats report_com_offsets(std::span<const SourceMatch> matches, std::span<const Source> sources,
                                  const Catalog& catalog, const CalibrationSolution& solution, Vec2 slew_direction,
                                  MapMode mode) {
    std::map<int, std::size_t> src_index;
    for (std::size_t i = 0; i < sources.size(); ++i) src_index[sources[i].id] = i;
    std::map<std::int64_t, std::size_t> cat_index;
    for (std::size_t i = 0; i < catalog.size(); ++i) cat_index.emplace(catalog[i].id, i);
    const double sn = slew_direction.norm();
    const Vec2 u = sn > 0 ? (1.0 / sn) * slew_direction : Vec2{};

    ComOffsetStats st;
    st.mode = mode;
    for (const auto& m : matches) {
        if (!m.catalog_id) continue;
        auto is = src_index.find(m.source_id);
        if (is == src_index.end()) continue;
        std::size_t c;
        if (m.catalog_index && *m.catalog_index < catalog.size()) {
            c = *m.catalog_index;
        } else {
            auto ic = cat_index.find(*m.catalog_id);
            if (ic == cat_index.end()) continue;
            c = ic->second;
        }
        const Source& s = sources[is->second];
        ComOffset o;
        o.source_id = s.id;
        o.weighted_minus_catalog = s.centroid - world_to_pixel(catalog[c].position, solution);
        o.geometric_minus_weighted = s.geometric_centroid - s.centroid;
        o.equivalent_diameter = s.equivalent_diameter;
        st.offsets.push_back(o);
    }
    if (st.offsets.empty()) throw std::invalid_argument("COM offsets need at least one matched source");
    const double n = double(st.offsets.size());
    for (const auto& o : st.offsets) {
        st.mean_weighted_minus_catalog += (1.0 / n) * o.weighted_minus_catalog;
        st.mean_geometric_minus_weighted += (1.0 / n) * o.geometric_minus_weighted;
        st.mean_along_slew += o.weighted_minus_catalog.dot(u) / n;
    }
    return st;
}

void stage_report(const PipelineConfig& cfg) {
    staged("report", [&] {
        const MapInfo info = read_map_info(cfg);
        const Json sj = read_artifact(cfg.output_dir / "solution.json");
        const std::vector<Source> sources = read_sources_csv(cfg.output_dir / "sources.csv");
        const std::vector<MatchRow> rows = read_matches_csv(cfg.output_dir / "matches.csv");
        std::map<int, const MatchRow*> row_of;
        for (const auto& r : rows) row_of[r.source_id] = &r;

        const std::string source = sj.at("source").get<std::string>();
        const bool solved = sj.at("solved").get<bool>();
        std::optional<CalibrationSolution> sol;
        if (!sj.at("solution").is_null()) sol = solution_from_json(sj.at("solution"));
        const double speed = speed_label(cfg, info.velocity);
        const std::string pmode = to_string(info.mode);

        std::map<int, ComOffset> com;
        std::optional<ComOffsetStats> stats;
        if (sol) {
            std::vector<SourceMatch> ms;
            for (const auto& r : rows)
                if (r.catalog_id) {
                    SourceMatch m;
                    m.source_id = r.source_id;
                    m.catalog_id = r.catalog_id;
                    ms.push_back(m);
                }
            if (!ms.empty()) {
                stats = report_com_offsets(ms, sources, load_catalog(cfg), *sol, info.velocity, info.mode);
                for (const auto& o : stats->offsets) com[o.source_id] = o;
            }
        }

        std::size_t n_matched = 0, n_extended = 0;
        std::optional<double> limiting, brightest;
        Json src_rows = Json::array();
        std::ostringstream csv;
        csv << "field,speed_deg_s,polarity_mode,source_id,kind,fallback,x,y,geometric_x,geometric_y,n_events,n_on,"
               "n_off,on_off_ratio,area,equivalent_diameter,extent,event_rate,flux,catalog_id,sep,mag,flags,com_dx,"
               "com_dy,gw_dx,gw_dy\n";
        std::ostringstream plot;
        plot << "field,speed_deg_s,polarity_mode,source_id,catalog_mag,metric,value\n";
        const std::string key = cfg.field + ',' + format_double(speed) + ',' + pmode + ',';

        for (const auto& s : sources) {
            const MatchRow* r = row_of.count(s.id) ? row_of[s.id] : nullptr;
            const bool matched = r && r->catalog_id;
            n_matched += matched;
            n_extended += s.kind == SourceKind::Extended;
            if (matched && r->mag) {
                limiting = limiting ? std::max(*limiting, *r->mag) : *r->mag;
                brightest = brightest ? std::min(*brightest, *r->mag) : *r->mag;
            }
            const std::string ratio = s.n_off > 0 ? format_double(double(s.n_on) / double(s.n_off)) : "";
            const Vec2 gw = s.geometric_centroid - s.centroid;
            auto c = com.find(s.id);

            Json row;
            row["source_id"] = s.id;
            row["kind"] = s.kind == SourceKind::Extended ? "extended" : "point";
            row["fallback"] = s.fallback;
            row["centroid"] = vec_json(s.centroid);
            row["geometric_centroid"] = vec_json(s.geometric_centroid);
            row["n_events"] = s.n_events;
            row["n_on"] = s.n_on;
            row["n_off"] = s.n_off;
            row["on_off_ratio"] = s.n_off > 0 ? Json(double(s.n_on) / double(s.n_off)) : Json(nullptr);
            row["area"] = s.area;
            row["equivalent_diameter"] = s.equivalent_diameter;
            row["extent"] = s.extent;
            row["event_rate"] = s.event_rate;
            row["flux"] = s.flux;
            row["catalog_id"] = matched ? Json(*r->catalog_id) : Json(nullptr);
            row["sep"] = r ? optional_number(r->sep) : Json(nullptr);
            row["mag"] = r ? optional_number(r->mag) : Json(nullptr);
            row["flags"] = r ? r->flags : "";
            row["com_offset_px"] = c != com.end() ? vec_json(c->second.weighted_minus_catalog) : Json(nullptr);
            row["geometric_minus_weighted_px"] = vec_json(gw);
            src_rows.push_back(row);

            csv << key << s.id << ',' << (s.kind == SourceKind::Extended ? "extended" : "point") << ','
                << (s.fallback ? 1 : 0) << ',' << format_double(s.centroid.x) << ',' << format_double(s.centroid.y)
                << ',' << format_double(s.geometric_centroid.x) << ',' << format_double(s.geometric_centroid.y) << ','
                << s.n_events << ',' << s.n_on << ',' << s.n_off << ',' << ratio << ',' << s.area << ','
                << format_double(s.equivalent_diameter) << ',' << format_double(s.extent) << ','
                << format_double(s.event_rate) << ',' << format_double(s.flux) << ','
                << (matched ? std::to_string(*r->catalog_id) : "") << ',' << (r ? opt_text(r->sep) : "") << ','
                << (r ? opt_text(r->mag) : "") << ',' << (r ? r->flags : "") << ',';
            if (c != com.end())
                csv << format_double(c->second.weighted_minus_catalog.x) << ','
                    << format_double(c->second.weighted_minus_catalog.y);
            else
                csv << ',';
            csv << ',' << format_double(gw.x) << ',' << format_double(gw.y) << '\n';

            const std::string mag = matched && r->mag ? format_double(*r->mag) : "";
            auto metric = [&](const char* name, const std::string& value) {
                plot << key << s.id << ',' << mag << ',' << name << ',' << value << '\n';
            };
            metric("event_rate", format_double(s.event_rate));
            metric("equivalent_diameter", format_double(s.equivalent_diameter));
            metric("extent", format_double(s.extent));
            if (!ratio.empty()) metric("on_off_ratio", ratio);
            metric("geometric_minus_weighted_px", format_double(gw.norm()));
            if (c != com.end()) metric("com_offset_px", format_double(c->second.weighted_minus_catalog.norm()));
        }

        Json agg;
        agg["n_sources"] = sources.size();
        agg["n_extended"] = n_extended;
        agg["n_matched"] = n_matched;
        agg["n_unmatched"] = sources.size() - n_matched;
        agg["limiting_magnitude"] = optional_number(limiting);
        agg["brightest_magnitude"] = optional_number(brightest);
        agg["pixel_scale"] = sol ? Json(sol->pixel_scale) : Json(nullptr);
        agg["pixel_scale_error"] = sol && solved && cfg.truth_pixel_scale
                                       ? Json(std::abs(sol->pixel_scale - *cfg.truth_pixel_scale))
                                       : Json(nullptr);
        agg["mean_com_offset_px"] = stats ? vec_json(stats->mean_weighted_minus_catalog) : Json(nullptr);
        agg["mean_com_offset_along_slew_px"] = stats ? Json(stats->mean_along_slew) : Json(nullptr);
        agg["mean_geometric_minus_weighted_px"] = stats ? vec_json(stats->mean_geometric_minus_weighted) : Json(nullptr);

        Json rep;
        rep["field"] = cfg.field;
        rep["speed_deg_s"] = speed;
        rep["polarity_mode"] = pmode;
        rep["calibration_mode"] = to_string(cfg.mode);
        rep["velocity_px_s"] = vec_json(info.velocity);
        rep["solved"] = solved;
        rep["solution_source"] = source;
        rep["aggregates"] = agg;
        rep["sources"] = src_rows;
        write_json(cfg.output_dir / "report.json", rep);
        write_text(cfg.output_dir / "report.csv", csv.str());

        if (cfg.plot_csv) {
            plot << key << ",,detected_sources," << sources.size() << '\n';
            plot << key << ",,matched_sources," << n_matched << '\n';
            if (limiting) plot << key << ",,limiting_magnitude," << format_double(*limiting) << '\n';
            write_text(cfg.output_dir / "plot.csv", plot.str());
        }
    });
}

Outcome run_pipeline(const PipelineConfig& cfg) {
    staged("config", [&] {
        fs::create_directories(cfg.output_dir);
        write_json(cfg.output_dir / "config.json", to_json(cfg));
    });
    stage_map(cfg);
    stage_find(cfg);
    const Outcome o = stage_solve(cfg);
    stage_match(cfg);
    stage_report(cfg);
    return o;
}

double scan_time_s(double speed_deg_s, double region_deg2, double pixel_scale_arcsec, const SensorGeometry& g) {
    if (!(speed_deg_s > 0.0)) throw std::invalid_argument("scan speed must be positive");
    if (!(region_deg2 >= 0.0)) throw std::invalid_argument("scan region must be non-negative");
    const double swath_deg = g.width * pixel_scale_arcsec / kArcsecPerDeg;
    return region_deg2 / (swath_deg * speed_deg_s);
}

}  // namespace evstar
