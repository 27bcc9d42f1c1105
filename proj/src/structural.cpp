#include "breedkit/structural.hpp"

#include "breedkit/csv.hpp"
#include "breedkit/error.hpp"
#include "breedkit/format.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

namespace breedkit::structural {

CanopyHeightModel canopy_height_model(const RasterGrid &dsm, const RasterGrid &dem, double noise_floor) {
    geodata::require_aligned(dsm.geometry(), dem.geometry(), "DSM vs DEM");
    if (!(noise_floor >= 0.0)) throw InvalidInput("noise floor must be non-negative");
    RasterGrid out = dsm.blank_like();
    for (std::size_t i = 0; i < dsm.values().size(); ++i) {
        if (!dsm.defined(i) || !dem.defined(i)) continue;
        double h = dsm[i] - dem[i];
        if (h < -noise_floor) continue;
        out[i] = h < 0.0 ? 0.0 : h;
    }
    return {std::move(out)};
}

double nearest_rank(std::vector<double> values, double percentile) {
    if (values.empty()) throw EmptyInput("nearest_rank: no values");
    if (!(percentile >= 0.0 && percentile <= 1.0)) throw InvalidInput("percentile must lie in [0,1]");
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    auto rank = static_cast<std::size_t>(std::ceil(percentile * static_cast<double>(n)));
    rank = std::clamp<std::size_t>(rank, 1, n);
    return values[rank - 1];
}

namespace {

std::vector<double> defined_plot_values(const RasterGrid &grid, const PlotGeometry &plot, const char *what) {
    std::vector<double> values;
    for (auto idx : geodata::region_cells(grid.geometry(), plot))
        if (grid.defined(idx)) values.push_back(grid[idx]);
    if (values.empty()) throw EmptyPlot("plot '" + plot.plot_id() + "' has no defined " + what + " cells");
    return values;
}

} // namespace

PlotStatistic plot_canopy_height(const CanopyHeightModel &chm, const PlotGeometry &plot, double percentile) {
    auto values = defined_plot_values(chm.grid, plot, "canopy height");
    const auto n = values.size();
    return {plot.plot_id(), "CH", nearest_rank(std::move(values), percentile), n};
}

CanopyVolumeResult canopy_volume(const RasterGrid &surface, const PlotGeometry &plot) {
    const auto values = defined_plot_values(surface, plot, "surface");
    double lowest = values.front();
    double sum = 0.0;
    for (double z : values) {
        lowest = std::min(lowest, z);
        sum += z;
    }
    const double mean = sum / static_cast<double>(values.size());
    const double area = surface.geometry().cell_area();
    double cut_fill_low = 0.0, cut_fill_mean = 0.0;
    for (double z : values) {
        cut_fill_low += std::fabs(z - lowest);
        cut_fill_mean += std::fabs(z - mean);
    }
    CanopyVolumeResult r;
    r.volume_lowest_plane = cut_fill_low * area;
    r.volume_mean_plane = cut_fill_mean * area;
    r.volume = (r.volume_lowest_plane + r.volume_mean_plane) / 2.0;
    return r;
}

std::string to_string(Level level) {
    switch (level) {
    case Level::no_lodging: return "no_lodging";
    case Level::slight_lodging: return "slight";
    case Level::severe_lodging: return "severe";
    case Level::special: return "special";
    case Level::no_weeds: return "no_weeds";
    case Level::slight_weeds: return "slight";
    case Level::moderate_weeds: return "moderate";
    case Level::severe_weeds: return "severe";
    }
    return "?";
}

std::string to_string(LevelKind kind) { return kind == LevelKind::PL ? "PL" : "WL"; }

namespace {
void check_ratio(double ratio) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw InvalidInput("area ratio " + format_double(ratio) + " outside [0,1]");
}
} // namespace

Level lodging_level(double ratio, bool special) {
    check_ratio(ratio);
    if (special) return Level::special;
    if (ratio == 0.0) return Level::no_lodging;
    if (ratio <= 0.5) return Level::slight_lodging;
    return Level::severe_lodging;
}

Level weed_level(double ratio) {
    check_ratio(ratio);
    if (ratio <= 0.10) return Level::no_weeds;
    if (ratio <= 0.40) return Level::slight_weeds;
    if (ratio <= 0.70) return Level::moderate_weeds;
    return Level::severe_weeds;
}

namespace {

template <geodata::Region R>
double mask_ratio(const RasterGrid &mask, const R &region, const std::string &plot_id, const char *what) {
    geodata::validate_mask(mask, what);
    auto cells = geodata::region_cells(mask.geometry(), region);
    if (cells.empty()) throw EmptyPlot("plot '" + plot_id + "' covers no cell centers of the " + what);
    std::size_t hits = 0;
    for (auto idx : cells)
        if (mask[idx] == 1.0) ++hits;
    return static_cast<double>(hits) / static_cast<double>(cells.size());
}

} // namespace

CategoricalLevel classify_lodging(const RasterGrid &lodging_mask, const PlotGeometry &plot, bool special) {
    const double ratio = mask_ratio(lodging_mask, plot, plot.plot_id(), "lodging mask");
    return {LevelKind::PL, ratio, lodging_level(ratio, special)};
}

CategoricalLevel classify_weed(const RasterGrid &weed_mask, const PlotGeometry &plot, const geodata::BufferRing &ring) {
    if (ring.plot().plot_id() != plot.plot_id())
        throw InvalidInput("buffer ring belongs to plot '" + ring.plot().plot_id() + "', not '" + plot.plot_id() + "'");
    const double ratio = mask_ratio(weed_mask, geodata::PlotWithRing(ring), plot.plot_id(), "weed mask");
    return {LevelKind::WL, ratio, weed_level(ratio)};
}

double image_footprint_area(double altitude, double fov_h_deg, double fov_v_deg) {
    if (!(altitude > 0.0) || !std::isfinite(altitude))
        throw InvalidInput("flight altitude must be positive, got " + format_double(altitude));
    for (double fov : {fov_h_deg, fov_v_deg})
        if (!(fov > 0.0 && fov < 180.0)) throw InvalidInput("field of view must be in (0, 180) degrees, got " + format_double(fov));
    auto side = [altitude](double fov_deg) {
        return 2.0 * altitude * std::tan(fov_deg * std::numbers::pi / 360.0);
    };
    return side(fov_h_deg) * side(fov_v_deg);
}

WheatHeadDensity wheat_head_density(std::span<const double> head_counts, double altitude, double fov_h_deg,
                                    double fov_v_deg) {
    if (head_counts.empty()) throw InvalidInput("wheat head density needs at least one image count");
    double sum = 0.0;
    for (double c : head_counts) {
        if (!(c >= 0.0) || !std::isfinite(c)) throw InvalidInput("head count must be a non-negative number");
        sum += c;
    }
    WheatHeadDensity r;
    r.heads_per_image = sum / static_cast<double>(head_counts.size());
    r.ground_area = image_footprint_area(altitude, fov_h_deg, fov_v_deg);
    r.density = r.heads_per_image / r.ground_area;
    return r;
}

std::map<std::string, std::vector<double>> read_head_counts(std::istream &in, const std::string &source) {
    auto table = csv::Table::read(in, source);
    std::map<std::string, std::vector<double>> counts;
    std::set<std::pair<std::string, std::string>> seen;
    for (std::size_t r = 0; r < table.rows(); ++r) {
        std::string plot(trim(table.cell(r, "plot_id")));
        std::string image(trim(table.cell(r, "image_id")));
        if (!seen.emplace(plot, image).second)
            throw ParseError(source + ":" + std::to_string(table.line_of(r)) + ": duplicate image '" + image +
                             "' for plot '" + plot + "'");
        const double count = table.required_number(r, "count");
        if (!(count >= 0.0) || !std::isfinite(count))
            throw ParseError(source + ":" + std::to_string(table.line_of(r)) + ": head count must be non-negative");
        counts[plot].push_back(count);
    }
    return counts;
}

std::map<std::string, std::vector<double>> load_head_counts(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open head counts " + path.string());
    return read_head_counts(in, path.string());
}

} // namespace breedkit::structural
