#pragma once

#include <map>
#include <optional>
#include <string>

#include "breedkit/geodata.hpp"

namespace breedkit::spectral {

using geodata::PlotGeometry;
using geodata::RasterGrid;

enum class SensorKind { MS, HS };

struct Band {
    RasterGrid grid;
    double center_wavelength_nm = 0.0;
};

// Co-registered reflectance bands from one sensor. MS sets are addressed by
// name (blue, green, red, red_edge, nir); HS sets by wavelength.
class BandSet {
  public:
    // Validates alignment, reflectance range and the sensor's required bands.
    BandSet(SensorKind kind, std::map<std::string, Band> bands);

    SensorKind kind() const { return kind_; }
    const std::map<std::string, Band> &bands() const { return bands_; }
    const geodata::GridGeometry &geometry() const { return bands_.begin()->second.grid.geometry(); }

    const Band &band(const std::string &name) const; // MissingBand
    // Band whose center is nearest `target_nm` within `tolerance_nm`; ties go
    // to the lower wavelength. Throws MissingBand(target).
    const Band &nearest(double target_nm, double tolerance_nm = 10.0) const;

  private:
    SensorKind kind_;
    std::map<std::string, Band> bands_;
};

enum class IndexName { NDVI, SAVI, kNDVI, NIRv, PSRI };

std::string to_string(IndexName name);
IndexName index_from_string(const std::string &name);

struct VegetationIndexMap {
    IndexName index_name;
    RasterGrid grid;
};

struct IndexParams {
    double savi_l = 0.5;
    // Unset: sigma = 0.5 (NIR + R) per pixel, i.e. kNDVI = tanh(NDVI^2).
    std::optional<double> kndvi_sigma;
};

// Per-pixel formulas. nullopt when the denominator is zero.
namespace formula {
std::optional<double> ndvi(double nir, double red);
std::optional<double> savi(double nir, double red, double l);
std::optional<double> kndvi(double nir, double red, std::optional<double> sigma = std::nullopt);
std::optional<double> nirv(double nir, double red);
std::optional<double> psri(double red, double green, double nir);
} // namespace formula

// Wavelengths used to pick red, green and NIR from a hyperspectral set.
inline constexpr double kHsRedNm = 650.0;
inline constexpr double kHsGreenNm = 560.0;
inline constexpr double kHsNirNm = 840.0;
inline constexpr double kHsTargetToleranceNm = 10.0;

// Applies the index per cell; nodata propagates and zero denominators give
// nodata. PSRI on an HS set delegates to psri_hs.
VegetationIndexMap vi_map(const BandSet &bands, IndexName index, const IndexParams &params = {});

// (R680 - R500) / R750 from the nearest bands within 10 nm.
VegetationIndexMap psri_hs(const BandSet &bands);

struct PlotStatistic {
    std::string plot_id;
    std::string feature_name;
    double value = 0.0;
    std::size_t n_cells = 0;
};

// Mean over defined plot cells, optionally restricted to cells where
// `restrict_to` is 1. Throws EmptyPlot when nothing is left.
PlotStatistic plot_statistic(const RasterGrid &grid, const PlotGeometry &plot,
                             const RasterGrid *restrict_to = nullptr, const std::string &feature_name = "");
inline PlotStatistic plot_statistic(const VegetationIndexMap &map, const PlotGeometry &plot,
                                    const RasterGrid *restrict_to = nullptr) {
    return plot_statistic(map.grid, plot, restrict_to, to_string(map.index_name));
}

// Fraction of plot cells flagged as vegetation; nodata counts as bare.
PlotStatistic fvc(const RasterGrid &vegetation_mask, const PlotGeometry &plot);

} // namespace breedkit::spectral
