#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "breedkit/geodata.hpp"
#include "breedkit/spectral.hpp"

namespace breedkit::structural {

using geodata::PlotGeometry;
using geodata::RasterGrid;
using spectral::PlotStatistic;

inline constexpr double kDefaultNoiseFloor = 0.05;

struct CanopyHeightModel {
    RasterGrid grid;
};

// DSM - DEM per cell. Differences in [-noise_floor, 0) clamp to 0; below
// -noise_floor they are registration error and become nodata.
CanopyHeightModel canopy_height_model(const RasterGrid &dsm, const RasterGrid &dem,
                                      double noise_floor = kDefaultNoiseFloor);

// Nearest-rank percentile: the ceil(p*n)-th smallest value (at least the 1st).
double nearest_rank(std::vector<double> values, double percentile);

PlotStatistic plot_canopy_height(const CanopyHeightModel &chm, const PlotGeometry &plot, double percentile = 0.95);

struct CanopyVolumeResult {
    double volume_lowest_plane = 0.0;
    double volume_mean_plane = 0.0;
    double volume = 0.0;
};

// Cut plus fill volume against horizontal planes at the lowest and the mean
// elevation of the plot cells, averaged.
CanopyVolumeResult canopy_volume(const RasterGrid &surface, const PlotGeometry &plot);

enum class LevelKind { PL, WL };

enum class Level {
    no_lodging,
    slight_lodging,
    severe_lodging,
    special,
    no_weeds,
    slight_weeds,
    moderate_weeds,
    severe_weeds,
};

std::string to_string(Level level);
std::string to_string(LevelKind kind);

struct CategoricalLevel {
    LevelKind kind;
    double ratio = 0.0;
    Level level;
};

// Interval rules, lower-exclusive and upper-inclusive. Ratios outside [0, 1]
// throw InvalidInput.
Level lodging_level(double ratio, bool special = false);
Level weed_level(double ratio);

CategoricalLevel classify_lodging(const RasterGrid &lodging_mask, const PlotGeometry &plot, bool special = false);
CategoricalLevel classify_weed(const RasterGrid &weed_mask, const PlotGeometry &plot, const geodata::BufferRing &ring);

struct WheatHeadDensity {
    double heads_per_image = 0.0;
    double ground_area = 0.0;
    double density = 0.0;
};

// Nadir camera over flat ground: footprint = (2 h tan(fov_h/2)) * (2 h tan(fov_v/2)).
double image_footprint_area(double altitude, double fov_h_deg, double fov_v_deg);
WheatHeadDensity wheat_head_density(std::span<const double> head_counts, double altitude, double fov_h_deg,
                                    double fov_v_deg);

// Head-count CSV (plot_id, image_id, count) grouped by plot id.
std::map<std::string, std::vector<double>> read_head_counts(std::istream &in, const std::string &source = "<stream>");
std::map<std::string, std::vector<double>> load_head_counts(const std::filesystem::path &path);

} // namespace breedkit::structural
