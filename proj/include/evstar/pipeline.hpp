#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "evstar/astrometry.hpp"
#include "evstar/crossmatch.hpp"
#include "evstar/scene_synth.hpp"
#include "evstar/starmap.hpp"

namespace evstar {

using Json = nlohmann::ordered_json;

enum class CalibrationMode { Mpmi, Spsi };

const char* to_string(CalibrationMode m);
CalibrationMode calibration_mode_from_string(const std::string& s);

struct PipelineConfig {
    std::string field = "field";
    std::filesystem::path events;
    std::filesystem::path catalog;
    std::filesystem::path mount;  // optional
    std::filesystem::path output_dir = "out";
    SensorGeometry geometry;      // used for CSV event files
    CalibrationMode mode = CalibrationMode::Mpmi;
    MapMode polarity_mode = MapMode::Dual;
    double pixel_scale = 1.584;
    std::optional<double> truth_pixel_scale;
    std::optional<double> speed_deg_s;    // report label; taken from the velocity when unset
    std::optional<Vec2> velocity_px_s;    // skips estimation
    std::optional<SkyCoord> center_hint;  // mount pointing at the map centre when unset
    double map_window_s = 3.0;
    VelocityOptions velocity;
    bool refine_velocity = true;  // estimated velocities only
    RefineOptions refine;         // window_s follows map_window_s
    SourceFinderOptions finder;
    SolveOptions solver;
    double match_radius_arcsec = 4.0;
    std::filesystem::path sibling_dir;     // output of a solved run of the same field
    std::filesystem::path prior_solution;  // solution.json used when the field does not solve
    bool plot_csv = true;
    bool windows = true;
};

Json to_json(const PipelineConfig& cfg);
/// Overrides the keys present in j. Unknown keys and out-of-range values throw
/// std::invalid_argument.
void merge_config(PipelineConfig& cfg, const Json& j);
PipelineConfig load_config(const std::filesystem::path& path);

Json to_json(const FieldSpec& spec);
void merge_field_spec(FieldSpec& spec, const Json& j);

class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& cause)
        : std::runtime_error(stage + ": " + cause), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

enum class Outcome { Solved, Unsolved };

/// Writes events, catalog.csv, mount.csv and truth.json into dir.
/// Returns the event file path.
std::filesystem::path synthesize_to(const FieldSpec& spec, const std::filesystem::path& dir,
                                    StreamFormat format = StreamFormat::Binary);

// Stages read earlier artifacts from cfg.output_dir and write their own there.
void stage_map(const PipelineConfig& cfg);      // starmap.pgm, starmap.json
void stage_find(const PipelineConfig& cfg);     // sources.csv, sources.json
Outcome stage_solve(const PipelineConfig& cfg); // solution.json, windows.json
void stage_match(const PipelineConfig& cfg);    // matches.csv
void stage_report(const PipelineConfig& cfg);   // report.json, report.csv, plot.csv

/// Echoes the effective config and runs every stage in order.
Outcome run_pipeline(const PipelineConfig& cfg);

void write_sources_csv(std::span<const Source> sources, const std::filesystem::path& path);
std::vector<Source> read_sources_csv(const std::filesystem::path& path);

Json solution_to_json(const CalibrationSolution& s);
CalibrationSolution solution_from_json(const Json& j);

struct ComOffset {
    int source_id = 0;
    Vec2 weighted_minus_catalog;    // px
    Vec2 geometric_minus_weighted;  // px
    double equivalent_diameter = 0.0;
};

struct ComOffsetStats {
    MapMode mode = MapMode::Dual;
    std::vector<ComOffset> offsets;
    Vec2 mean_weighted_minus_catalog;
    double mean_along_slew = 0.0;  // px, positive ahead of the catalogued star
    Vec2 mean_geometric_minus_weighted;
};

/// Offsets of matched sources from their catalogued stars. slew_direction is
/// the apparent star motion on the sensor. Throws std::invalid_argument when
/// nothing is matched.
ComOffsetStats report_com_offsets(std::span<const SourceMatch> matches, std::span<const Source> sources,
                                  const Catalog& catalog, const CalibrationSolution& solution, Vec2 slew_direction,
                                  MapMode mode);

/// Seconds to sweep region_deg2 with a swath one sensor width across.
/// Throws std::invalid_argument for a non-positive speed.
double scan_time_s(double speed_deg_s, double region_deg2, double pixel_scale_arcsec, const SensorGeometry& geometry);

}  // namespace evstar
