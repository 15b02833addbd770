#include "evstar/scene_synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace evstar {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) { return splitmix(splitmix(seed) ^ splitmix(stream + 0x51ed27ULL)); }

constexpr std::uint64_t kNoiseStream = 0xffff0001ULL;
constexpr std::uint64_t kWindStream = 0xffff0002ULL;
constexpr std::uint64_t kHotStreamBase = 0xfffe0000ULL;

// Interval of t in [t0, t1] where lo <= p + v t <= hi.
std::pair<double, double> clip_linear(double p, double v, double lo, double hi, double t0, double t1) {
    if (v == 0.0) {
        if (p < lo || p > hi) return {1.0, 0.0};
        return {t0, t1};
    }
    double a = (lo - p) / v, b = (hi - p) / v;
    if (a > b) std::swap(a, b);
    return {std::max(a, t0), std::min(b, t1)};
}

// Time interval (relative to t_ref) during which a point moving linearly stays
// inside the padded sensor rectangle.
std::pair<double, double> visible_interval(Vec2 p_ref, Vec2 v, const SensorGeometry& g, double margin, double t0,
                                           double t1) {
    const auto ix = clip_linear(p_ref.x, v.x, -0.5 - margin, g.width - 0.5 + margin, t0, t1);
    const auto iy = clip_linear(p_ref.y, v.y, -0.5 - margin, g.height - 0.5 + margin, t0, t1);
    return {std::max(ix.first, iy.first), std::min(ix.second, iy.second)};
}

void validate(const SyntheticScene& s) {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("invalid scene: ") + what);
    };
    require(s.geometry.width > 0 && s.geometry.height > 0 && s.geometry.width <= 65535 && s.geometry.height <= 65535,
            "sensor geometry");
    require(s.duration_s > 0.0 && std::isfinite(s.duration_s), "duration_s must be positive");
    require(s.pixel_scale > 0.0, "pixel_scale must be positive");
    require(s.psf_sigma > 0.0, "psf_sigma must be positive");
    require(s.noise_rate >= 0.0, "noise_rate must be non-negative");
    require(s.wind_step_arcsec >= 0.0, "wind_step_arcsec must be non-negative");
    require(s.wind_step_arcsec == 0.0 || s.wind_interval_s > 0.0, "wind_interval_s must be positive");
    require(s.mount_report_interval_s > 0.0, "mount_report_interval_s must be positive");
    require(s.sensor.gain >= 0.0 && s.sensor.pixel_time_constant_s >= 0.0 && s.sensor.saturation > 0.0,
            "sensor model");
    require(s.sensor.on_off_asymmetry >= 0.0 && s.sensor.wake_tau_s >= 0.0 && s.sensor.scintillation_rate >= 0.0,
            "sensor model");
    require(std::abs(s.field_center.dec_deg) <= 90.0, "field_center.dec_deg");
    for (const auto& h : s.hot_pixels) {
        require(s.geometry.contains(h.x, h.y), "hot pixel outside sensor");
        require(h.rate >= 0.0, "hot pixel rate");
    }
}

struct Tagged {
    Event e;
    std::int32_t label;
};

bool emit(std::vector<Tagged>& out, const SensorGeometry& g, double x, double y, double t_s, double duration_s,
          Polarity p, std::int32_t label) {
    if (t_s < 0.0 || t_s >= duration_s) return false;
    const long ix = std::lround(x), iy = std::lround(y);
    if (!g.contains(static_cast<int>(ix), static_cast<int>(iy))) return false;
    out.push_back({{static_cast<std::uint16_t>(ix), static_cast<std::uint16_t>(iy),
                    static_cast<std::int64_t>(std::floor(t_s * 1e6)), p},
                   label});
    return true;
}

CalibrationSolution truth_solution(const SyntheticScene& s) {
    return CalibrationSolution::ideal(s.field_center, s.pixel_scale, s.rotation_deg * kDegToRad, s.geometry,
                                      s.mirrored);
}

}  // namespace

StarResponse star_response(const SensorModel& sensor, double magnitude, double speed_px_s, double psf_sigma) {
    StarResponse r;
    r.peak_contrast = sensor.gain * std::pow(10.0, -0.4 * magnitude);
    r.attenuated_contrast = r.peak_contrast / (1.0 + speed_px_s * sensor.pixel_time_constant_s / psf_sigma);
    const double k = r.attenuated_contrast;
    r.density_scale = k / (1.0 + k / sensor.saturation);
    if (k <= 1.0) return r;
    r.firing_radius = psf_sigma * std::sqrt(2.0 * std::log(k));
    // Fraction of the derivative lobe (Rayleigh along track, normal across)
    // falling inside the firing disc.
    const double u = r.firing_radius / psf_sigma;
    const double inside = std::erf(u / std::sqrt(2.0)) - std::sqrt(2.0 / kPi) * u * std::exp(-0.5 * u * u);
    r.on_rate = r.density_scale * speed_px_s * psf_sigma * std::sqrt(2.0 * kPi) * inside;
    r.off_rate = r.on_rate * sensor.on_off_asymmetry;
    // Gaussian mass inside 3 sigma, where scintillation events are drawn.
    r.scintillation_rate = sensor.scintillation_rate * r.density_scale * (1.0 - std::exp(-4.5));
    return r;
}

Vec2 field_velocity_px(const SyntheticScene& s) {
    const CalibrationSolution sol = truth_solution(s);
    const Eigen::Vector2d t(-s.slew_deg_s.x * kArcsecPerDeg / s.pixel_scale,
                            -s.slew_deg_s.y * kArcsecPerDeg / s.pixel_scale);
    const Eigen::Vector2d v = sol.rotation.transpose() * t;
    return {v.x(), v.y()};
}

PixelRegion swept_region(const SyntheticScene& s, double t0_s, double t1_s) {
    const Vec2 v = field_velocity_px(s);
    const double tr = s.reference_time_s();
    const double d0 = t0_s - tr, d1 = t1_s - tr;
    const double w = s.geometry.width - 0.5, h = s.geometry.height - 0.5;
    return {std::min(-0.5 - v.x * d0, -0.5 - v.x * d1), std::min(-0.5 - v.y * d0, -0.5 - v.y * d1),
            std::max(w - v.x * d0, w - v.x * d1), std::max(h - v.y * d0, h - v.y * d1)};
}

std::vector<SceneStar> random_star_field(const SyntheticScene& s, int count, double mag_min, double mag_max, double x0,
                                         double y0, double x1, double y1, std::uint64_t seed) {
    std::mt19937_64 rng(derive_seed(seed, 0x57a25ULL));
    std::uniform_real_distribution<double> ux(x0, x1), uy(y0, y1), um(mag_min, mag_max);
    const CalibrationSolution sol = truth_solution(s);
    std::vector<SceneStar> stars;
    stars.reserve(static_cast<std::size_t>(std::max(count, 0)));
    for (int i = 0; i < count; ++i) {
        const double x = ux(rng), y = uy(rng), m = um(rng);
        stars.push_back({i + 1, pixel_to_world({x, y}, sol), m});
    }
    return stars;
}

Vec2 GroundTruth::jitter_at(double t_s) const {
    if (wind.empty()) return {};
    if (t_s <= wind.front().first) return wind.front().second;
    if (t_s >= wind.back().first) return wind.back().second;
    auto it = std::upper_bound(wind.begin(), wind.end(), t_s,
                               [](double t, const std::pair<double, Vec2>& w) { return t < w.first; });
    const auto& b = *it;
    const auto& a = *(it - 1);
    const double f = (t_s - a.first) / (b.first - a.first);
    return a.second + f * (b.second - a.second);
}

Vec2 GroundTruth::star_position(std::size_t i, double t_s) const {
    return stars.at(i).position_at_reference + (t_s - reference_time_s) * field_velocity_px_s + jitter_at(t_s);
}

double GroundTruth::time_in_view(std::size_t i, double t0_s, double t1_s, const SensorGeometry& g) const {
    const auto iv = visible_interval(stars.at(i).position_at_reference, field_velocity_px_s, g, 0.0,
                                     t0_s - reference_time_s, t1_s - reference_time_s);
    return std::max(0.0, iv.second - iv.first);
}

std::size_t GroundTruth::count_label(std::int32_t label) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

std::pair<EventStream, GroundTruth> synthesize(const SyntheticScene& scene) {
    validate(scene);
    const SensorGeometry& g = scene.geometry;
    const double T = scene.duration_s;
    const double tr = scene.reference_time_s();
    const double sigma = scene.psf_sigma;

    GroundTruth truth;
    truth.reference_time_s = tr;
    truth.solution = truth_solution(scene);
    truth.field_velocity_px_s = field_velocity_px(scene);
    const Vec2 v = truth.field_velocity_px_s;
    const double speed = v.norm();
    const Vec2 along = speed > 0.0 ? (1.0 / speed) * v : Vec2{1.0, 0.0};
    const Vec2 across{-along.y, along.x};

    double jitter_max = 0.0;
    if (scene.wind_step_arcsec > 0.0) {
        std::mt19937_64 rng(derive_seed(scene.seed, kWindStream));
        std::normal_distribution<double> step(0.0, scene.wind_step_arcsec / scene.pixel_scale);
        Vec2 j;
        for (long k = 0;; ++k) {
            const double t = k * scene.wind_interval_s;
            truth.wind.emplace_back(t, j);
            jitter_max = std::max({jitter_max, std::abs(j.x), std::abs(j.y)});
            if (t >= T) break;
            j += Vec2{step(rng), step(rng)};
        }
    }

    std::vector<Tagged> all;
    bool any_in_view = false;
    truth.stars.reserve(scene.stars.size());
    for (std::size_t si = 0; si < scene.stars.size(); ++si) {
        const SceneStar& star = scene.stars[si];
        StarTruth st;
        st.id = star.id;
        st.magnitude = star.magnitude;
        st.world = star.position;
        st.response = star_response(scene.sensor, star.magnitude, speed, sigma);
        try {
            st.position_at_reference = world_to_pixel(star.position, truth.solution);
        } catch (const std::domain_error&) {
            truth.warnings.push_back("star " + std::to_string(star.id) + " is on the far hemisphere; skipped");
            truth.stars.push_back(st);
            continue;
        }
        const StarResponse& r = st.response;
        const double wake_reach = scene.sensor.wake_tau_s * speed * 10.0;
        const double margin = std::max(r.firing_radius, 3.0 * sigma) + 1.0 + jitter_max + wake_reach;
        const auto [a, b] = visible_interval(st.position_at_reference, v, g, margin, -tr, T - tr);
        const auto in_view = visible_interval(st.position_at_reference, v, g, 0.0, -tr, T - tr);
        if (in_view.second > in_view.first) any_in_view = true;
        const double span = b - a;
        if (span <= 0.0) {
            truth.stars.push_back(st);
            continue;
        }

        std::mt19937_64 rng(derive_seed(scene.seed, si));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::normal_distribution<double> normal(0.0, sigma);
        const std::int32_t label = static_cast<std::int32_t>(si);
        std::size_t produced = 0;
        auto center_at = [&](double t_s) {
            return st.position_at_reference + (t_s - tr) * v + truth.jitter_at(t_s);
        };

        if (r.firing_radius > 0.0 && speed > 0.0) {
            const double r2 = r.firing_radius * r.firing_radius;
            const double lobe_rate = r.density_scale * speed * sigma * std::sqrt(2.0 * kPi);
            for (int pol = 0; pol < 2; ++pol) {
                const bool on = pol == 0;
                const double mean = lobe_rate * span * (on ? 1.0 : scene.sensor.on_off_asymmetry);
                std::poisson_distribution<long long> count(mean);
                std::exponential_distribution<double> wake(
                    scene.sensor.wake_tau_s > 0.0 ? 1.0 / scene.sensor.wake_tau_s : 1.0);
                const long long n = mean > 0.0 ? count(rng) : 0;
                for (long long k = 0; k < n; ++k) {
                    const double t_s = tr + a + span * unit(rng);
                    const double ra = sigma * std::sqrt(-2.0 * std::log(1.0 - unit(rng)));
                    const double rb = normal(rng);
                    const double delay = (!on && scene.sensor.wake_tau_s > 0.0) ? wake(rng) : 0.0;
                    if (ra * ra + rb * rb > r2) continue;
                    const Vec2 c = center_at(t_s);
                    const Vec2 p = c + (on ? ra : -ra) * along + rb * across;
                    if (emit(all, g, p.x, p.y, t_s + delay, T, on ? Polarity::On : Polarity::Off, label)) ++produced;
                }
            }
        }
        if (r.scintillation_rate > 0.0 && r.firing_radius > 0.0) {
            const auto [sa, sb] = in_view;
            const double sspan = sb - sa;
            if (sspan > 0.0) {
                std::poisson_distribution<long long> count(r.scintillation_rate * sspan);
                const long long n = count(rng);
                for (long long k = 0; k < n; ++k) {
                    const double t_s = tr + sa + sspan * unit(rng);
                    const double dx = normal(rng), dy = normal(rng);
                    const Polarity p = unit(rng) < 0.5 ? Polarity::On : Polarity::Off;
                    if (dx * dx + dy * dy > 9.0 * sigma * sigma) continue;
                    const Vec2 c = center_at(t_s);
                    if (emit(all, g, c.x + dx, c.y + dy, t_s, T, p, label)) ++produced;
                }
            }
        }
        st.n_events = produced;
        truth.stars.push_back(st);
    }
    if (!scene.stars.empty() && !any_in_view)
        truth.warnings.push_back("no star enters the field of view during the recording");

    if (scene.noise_rate > 0.0) {
        std::mt19937_64 rng(derive_seed(scene.seed, kNoiseStream));
        std::poisson_distribution<long long> count(scene.noise_rate * g.width * g.height * T);
        std::uniform_int_distribution<int> ux(0, g.width - 1), uy(0, g.height - 1);
        std::uniform_real_distribution<double> ut(0.0, T);
        std::bernoulli_distribution pol(0.5);
        const long long n = count(rng);
        for (long long k = 0; k < n; ++k) {
            const int x = ux(rng), y = uy(rng);
            emit(all, g, x, y, ut(rng), T, pol(rng) ? Polarity::On : Polarity::Off, kLabelNoise);
        }
    }

    for (std::size_t hi = 0; hi < scene.hot_pixels.size(); ++hi) {
        const HotPixel& h = scene.hot_pixels[hi];
        std::mt19937_64 rng(derive_seed(scene.seed, kHotStreamBase + hi));
        std::poisson_distribution<long long> count(h.rate * T);
        std::uniform_real_distribution<double> ut(0.0, T);
        const long long n = h.rate > 0.0 ? count(rng) : 0;
        std::vector<double> times(static_cast<std::size_t>(n));
        for (auto& t : times) t = ut(rng);
        std::sort(times.begin(), times.end());
        for (std::size_t k = 0; k < times.size(); ++k)
            emit(all, g, h.x, h.y, times[k], T, k % 2 == 0 ? Polarity::On : Polarity::Off, kLabelHotPixel);
    }

    std::stable_sort(all.begin(), all.end(), [](const Tagged& l, const Tagged& r) { return l.e.t < r.e.t; });
    std::vector<Event> events;
    events.reserve(all.size());
    truth.labels.reserve(all.size());
    for (const auto& tg : all) {
        events.push_back(tg.e);
        truth.labels.push_back(tg.label);
    }

    const Eigen::Vector2d offset(scene.pointing_offset_arcsec.x, scene.pointing_offset_arcsec.y);
    const Vec2 c_img{g.center_x(), g.center_y()};
    for (long k = 0;; ++k) {
        const double t = k * scene.mount_report_interval_s;
        if (t > T + 1e-9) break;
        const SkyCoord true_center = pixel_to_world(c_img - (t - tr) * v, truth.solution);
        const SkyCoord reported = inverse_gnomonic({offset.x(), offset.y()}, true_center);
        truth.mount_track.push_back({static_cast<std::int64_t>(std::llround(t * 1e6)), reported});
    }

    return {EventStream(std::move(events), g, 0, scene.pixel_scale), std::move(truth)};
}

SyntheticScene make_field_scene(const FieldSpec& f) {
    SyntheticScene s;
    s.field_center = f.center;
    s.duration_s = f.duration_s;
    const double h = f.heading_deg * kPi / 180.0;
    s.slew_deg_s = {f.speed_deg_s * std::cos(h), f.speed_deg_s * std::sin(h)};
    s.rotation_deg = f.rotation_deg;
    s.mirrored = f.mirrored;
    s.noise_rate = f.noise_rate;
    s.sensor.wake_tau_s = f.wake_tau_s;
    s.pointing_offset_arcsec = f.pointing_offset_arcsec;
    s.wind_step_arcsec = f.wind_step_arcsec;
    s.seed = f.seed;
    std::mt19937_64 rng(derive_seed(f.seed, 0x407ULL));
    std::uniform_int_distribution<int> hx(0, s.geometry.width - 1), hy(0, s.geometry.height - 1);
    std::uniform_real_distribution<double> hr(0.5, 5.0);
    for (int i = 0; i < f.n_hot_pixels; ++i) s.hot_pixels.push_back({hx(rng), hy(rng), hr(rng)});
    const PixelRegion r = swept_region(s, 0.0, s.duration_s);
    const double area = (r.x1 - r.x0) * (r.y1 - r.y0) / (double(s.geometry.width) * s.geometry.height);
    const int n = std::max(1, static_cast<int>(std::lround(f.n_stars * area)));
    s.stars = random_star_field(s, n, f.mag_min, f.mag_max, r.x0, r.y0, r.x1, r.y1, f.seed * 7919 + 17);
    return s;
}

}  // namespace evstar
