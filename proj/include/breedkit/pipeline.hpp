#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "breedkit/date.hpp"
#include "breedkit/fusion.hpp"
#include "breedkit/geodata.hpp"
#include "breedkit/spectral.hpp"

namespace breedkit::pipeline {

using geodata::PlotGeometry;
using geodata::RasterGrid;

// Per-plot field records: identity metadata, ground phenotyping and harvest.
struct GroundRecord {
    std::string plot_id;
    std::string site;
    std::optional<Date> date;
    std::map<std::string, double> phenotyping; // SPAD, LAI, measured_CH
    std::optional<double> yield_kg_ha;
    // Raw harvest, standardised when no yield_kg_ha is given.
    std::optional<double> harvest_mass_kg;
    std::optional<double> moisture;
    std::optional<double> plot_area_ha; // defaults to the polygon area
    bool lodging_special = false;
};

// Columns: plot_id, then any of site, date, SPAD, LAI, measured_CH,
// yield_kg_ha, harvest_mass_kg, moisture, plot_area_ha, lodging_special.
std::vector<GroundRecord> read_ground(std::istream &in, const std::string &source = "<stream>");
std::vector<GroundRecord> load_ground(const std::filesystem::path &path);

// Hyperspectral manifest CSV (wavelength_nm, path); relative paths resolve
// against the manifest's directory.
spectral::BandSet load_hs_manifest(const std::filesystem::path &path);

struct ExtractInputs {
    std::vector<PlotGeometry> plots;
    std::optional<spectral::BandSet> ms;
    std::optional<spectral::BandSet> hs;
    std::optional<RasterGrid> dsm;
    std::optional<RasterGrid> dem;
    std::optional<RasterGrid> vegetation_mask;
    std::optional<RasterGrid> lodging_mask;
    std::optional<RasterGrid> weed_mask;
    std::map<std::string, std::vector<double>> head_counts;
    std::vector<GroundRecord> ground;
};

struct ExtractParams {
    spectral::IndexParams index;
    double ch_percentile = 0.95;
    double noise_floor = 0.05;
    double ring_inner = 0.0;
    double ring_outer = 0.5;
    // Average VIs over vegetation cells only (needs a vegetation mask).
    bool vi_on_vegetation = false;
    std::optional<double> altitude_m;
    std::optional<double> fov_h_deg;
    std::optional<double> fov_v_deg;
};

// One record per plot, in plot order. Features are produced for whichever
// inputs are present; a plot that an input does not cover raises EmptyPlot.
std::vector<fusion::PlotFeatureRecord> extract_features(const ExtractInputs &inputs, const ExtractParams &params,
                                                        unsigned threads = 1);

} // namespace breedkit::pipeline
