#include <array>
#include <fstream>
#include <map>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "evstar/pipeline.hpp"

using namespace evstar;

namespace {

// Flags that mirror PipelineConfig keys; set flags override the config file.
struct PipelineFlags {
    std::string config, out, events, catalog, mount, field, mode, polarity, sibling, prior;
    double pixel_scale = 0, truth_scale = 0, speed = 0, window = 0, match_radius = 0;
    std::vector<double> velocity, center;
    int width = 0, height = 0;
    std::vector<CLI::Option*> opts;

    void attach(CLI::App* app) {
        app->add_option("-c,--config", config, "JSON config file")->check(CLI::ExistingFile);
        auto add = [&](const char* name, auto& target, const char* help) {
            opts.push_back(app->add_option(name, target, help));
            return opts.back();
        };
        add("-o,--out", out, "output directory");
        add("--events", events, "event file (.csv or binary)");
        add("--catalog", catalog, "catalog CSV");
        add("--mount", mount, "mount track CSV");
        add("--field", field, "field label used in reports");
        add("--mode", mode, "calibration mode: mpmi or spsi");
        add("--polarity", polarity, "star map polarity: dual or mono_on");
        add("--sibling", sibling, "output directory of a solved run of the same field");
        add("--prior", prior, "solution.json used when the field does not solve");
        add("--pixel-scale", pixel_scale, "pixel scale hint, arcsec/px");
        add("--truth-scale", truth_scale, "true pixel scale for the error aggregate");
        add("--speed", speed, "slew speed label, deg/s");
        add("--window", window, "star map window, s");
        add("--match-radius", match_radius, "external match radius, arcsec");
        add("--velocity", velocity, "field velocity vx vy in px/s (skips estimation)")->expected(2);
        add("--center", center, "pointing hint ra dec in degrees")->expected(2);
        add("--width", width, "sensor width for CSV event files");
        add("--height", height, "sensor height for CSV event files");
    }

    bool given(const std::string& name) const {
        for (auto* o : opts)
            if (o->check_lname(name) && o->count() > 0) return true;
        return false;
    }

    PipelineConfig build() const {
        PipelineConfig cfg;
        if (!config.empty()) cfg = load_config(config);
        Json j = Json::object();
        if (given("out")) j["output_dir"] = out;
        if (given("events")) j["events"] = events;
        if (given("catalog")) j["catalog"] = catalog;
        if (given("mount")) j["mount"] = mount;
        if (given("field")) j["field"] = field;
        if (given("mode")) j["mode"] = mode;
        if (given("polarity")) j["polarity_mode"] = polarity;
        if (given("pixel-scale")) j["pixel_scale"] = pixel_scale;
        if (given("truth-scale")) j["truth_pixel_scale"] = truth_scale;
        if (given("speed")) j["speed_deg_s"] = speed;
        if (given("window")) j["map_window_s"] = window;
        if (given("match-radius")) j["match_radius_arcsec"] = match_radius;
        if (given("velocity")) j["velocity_px_s"] = velocity;
        if (given("center")) j["center_hint"] = center;
        if (given("width") || given("height"))
            j["geometry"] = {{"width", given("width") ? width : cfg.geometry.width},
                             {"height", given("height") ? height : cfg.geometry.height}};
        if (given("sibling") || given("prior"))
            j["fallback"] = Json::object();
        if (given("sibling")) j["fallback"]["sibling_dir"] = sibling;
        if (given("prior")) j["fallback"]["prior_solution"] = prior;
        merge_config(cfg, j);
        return cfg;
    }
};

int exit_code(Outcome o) { return o == Outcome::Solved ? 0 : 2; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Event-camera star mapping and calibration"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic observation");
    std::string spec_path, synth_out, synth_format = "bin";
    FieldSpec spec;
    std::vector<double> synth_center;
    synth->add_option("--spec", spec_path, "JSON field description")->check(CLI::ExistingFile);
    synth->add_option("-o,--out", synth_out, "output directory")->required();
    synth->add_option("--format", synth_format, "event file format")->check(CLI::IsMember({"bin", "csv"}));
    std::vector<CLI::Option*> synth_opts{
        synth->add_option("--stars", spec.n_stars, "stars per sensor area"),
        synth->add_option("--mag-min", spec.mag_min, "brightest magnitude"),
        synth->add_option("--mag-max", spec.mag_max, "faintest magnitude"),
        synth->add_option("--speed", spec.speed_deg_s, "slew speed, deg/s"),
        synth->add_option("--heading", spec.heading_deg, "slew direction, deg east through north"),
        synth->add_option("--rotation", spec.rotation_deg, "sensor rotation, deg"),
        synth->add_flag("--mirrored", spec.mirrored, "mirrored sensor"),
        synth->add_option("--duration", spec.duration_s, "duration, s"),
        synth->add_option("--noise", spec.noise_rate, "noise events / px / s"),
        synth->add_option("--wake", spec.wake_tau_s, "OFF wake delay, s"),
        synth->add_option("--hot-pixels", spec.n_hot_pixels, "number of hot pixels"),
        synth->add_option("--wind", spec.wind_step_arcsec, "wind random-walk step, arcsec"),
        synth->add_option("--seed", spec.seed, "random seed"),
    };
    auto* center_opt = synth->add_option("--center", synth_center, "field centre ra dec, deg")->expected(2);

    // pipeline stages
    struct Stage {
        const char* name;
        const char* help;
    };
    const Stage stages[] = {{"map", "estimate the field velocity and build the star map"},
                            {"find", "extract sources from the star map"},
                            {"solve", "calibrate the star map against the catalog"},
                            {"match", "associate sources with catalog stars or a solved sibling"},
                            {"report", "write characterization reports"},
                            {"run", "run every stage"}};
    std::array<PipelineFlags, std::size(stages)> flags;
    std::vector<CLI::App*> stage_apps;
    for (std::size_t i = 0; i < std::size(stages); ++i) {
        auto* sub = app.add_subcommand(stages[i].name, stages[i].help);
        flags[i].attach(sub);
        stage_apps.push_back(sub);
    }

    // scan-budget
    auto* budget = app.add_subcommand("scan-budget", "time to sweep a sky region");
    double b_speed = 0, b_area = 1.0, b_scale = 1.584;
    int b_width = 1280;
    bool geo = false;
    budget->add_option("--speed", b_speed, "slew speed, deg/s")->required();
    budget->add_option("--area", b_area, "region, deg^2");
    budget->add_flag("--geo-belt", geo, "GEO belt, 180 deg by one swath");
    budget->add_option("--pixel-scale", b_scale, "arcsec/px");
    budget->add_option("--width", b_width, "sensor width, px");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            FieldSpec f;
            if (!spec_path.empty()) {
                std::ifstream in(spec_path);
                merge_field_spec(f, Json::parse(in));
            }
            Json j = Json::object();
            const Json given = to_json(spec);
            for (auto* o : synth_opts)
                if (o->count() > 0) {
                    std::string key = o->get_lnames().front();
                    static const std::map<std::string, std::string> names{
                        {"stars", "n_stars"},       {"mag-min", "mag_min"},       {"mag-max", "mag_max"},
                        {"speed", "speed_deg_s"},   {"heading", "heading_deg"},   {"rotation", "rotation_deg"},
                        {"mirrored", "mirrored"},   {"duration", "duration_s"},   {"noise", "noise_rate"},
                        {"wake", "wake_tau_s"},     {"hot-pixels", "n_hot_pixels"}, {"wind", "wind_step_arcsec"},
                        {"seed", "seed"}};
                    const std::string& k = names.at(key);
                    j[k] = given[k];
                }
            if (center_opt->count() > 0) j["center"] = synth_center;
            merge_field_spec(f, j);
            const auto events =
                synthesize_to(f, synth_out, synth_format == "csv" ? StreamFormat::Csv : StreamFormat::Binary);
            std::cout << Json{{"events", events.generic_string()}, {"field", to_json(f)}}.dump(2) << '\n';
            return 0;
        }
        if (budget->parsed()) {
            SensorGeometry g;
            g.width = b_width;
            const double swath = b_width * b_scale / 3600.0;
            const double area = geo ? 180.0 * swath : b_area;
            const double t = scan_time_s(b_speed, area, b_scale, g);
            Json j{{"speed_deg_s", b_speed},
                   {"region_deg2", area},
                   {"swath_deg", swath},
                   {"seconds", t},
                   {"minutes", t / 60.0},
                   {"hours", t / 3600.0}};
            std::cout << j.dump(2) << '\n';
            return 0;
        }
        for (std::size_t i = 0; i < stage_apps.size(); ++i) {
            if (!stage_apps[i]->parsed()) continue;
            const std::string name = stages[i].name;
            const PipelineConfig cfg = flags[i].build();
            if (name == "map") {
                stage_map(cfg);
                return 0;
            }
            if (name == "find") {
                stage_find(cfg);
                return 0;
            }
            if (name == "solve") return exit_code(stage_solve(cfg));
            if (name == "match") {
                stage_match(cfg);
                return 0;
            }
            if (name == "report") {
                stage_report(cfg);
                return 0;
            }
            return exit_code(run_pipeline(cfg));
        }
    } catch (const StageError& e) {
        std::cerr << "evstar: error in " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "evstar: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
