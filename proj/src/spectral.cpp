#include "breedkit/spectral.hpp"

#include "breedkit/error.hpp"
#include "breedkit/format.hpp"

#include <cmath>
#include <limits>

namespace breedkit::spectral {

namespace {
const char *const kMsRequired[] = {"blue", "green", "red", "red_edge", "nir"};
}

BandSet::BandSet(SensorKind kind, std::map<std::string, Band> bands) : kind_(kind), bands_(std::move(bands)) {
    if (bands_.empty()) throw MissingBand("band set is empty");
    const auto &ref = bands_.begin()->second.grid.geometry();
    for (const auto &[name, band] : bands_) {
        geodata::require_aligned(ref, band.grid.geometry(), "band '" + name + "'");
        geodata::validate_reflectance(band.grid, "band '" + name + "'");
    }
    if (kind_ == SensorKind::MS) {
        for (const char *name : kMsRequired)
            if (!bands_.count(name)) throw MissingBand(std::string("MS band set lacks '") + name + "'");
    } else {
        if (bands_.size() < 2) throw MissingBand("HS band set needs at least 2 bands");
        for (const auto &[name, band] : bands_)
            if (!(band.center_wavelength_nm > 0.0))
                throw InvalidInput("HS band '" + name + "' has no center wavelength");
    }
}

const Band &BandSet::band(const std::string &name) const {
    auto it = bands_.find(name);
    if (it == bands_.end()) throw MissingBand("missing band '" + name + "'");
    return it->second;
}

const Band &BandSet::nearest(double target_nm, double tolerance_nm) const {
    const Band *best = nullptr;
    double best_dist = std::numeric_limits<double>::infinity();
    for (const auto &[_, band] : bands_) {
        const double d = std::fabs(band.center_wavelength_nm - target_nm);
        if (d > tolerance_nm) continue;
        if (d < best_dist || (d == best_dist && band.center_wavelength_nm < best->center_wavelength_nm)) {
            best = &band;
            best_dist = d;
        }
    }
    if (!best) throw MissingBand("no band within " + format_double(tolerance_nm) + " nm of " + format_double(target_nm) + " nm");
    return *best;
}

std::string to_string(IndexName name) {
    switch (name) {
    case IndexName::NDVI: return "NDVI";
    case IndexName::SAVI: return "SAVI";
    case IndexName::kNDVI: return "kNDVI";
    case IndexName::NIRv: return "NIRv";
    case IndexName::PSRI: return "PSRI";
    }
    return "?";
}

IndexName index_from_string(const std::string &name) {
    for (auto n : {IndexName::NDVI, IndexName::SAVI, IndexName::kNDVI, IndexName::NIRv, IndexName::PSRI})
        if (to_string(n) == name) return n;
    throw InvalidInput("unknown vegetation index '" + name + "'");
}

namespace formula {

std::optional<double> ndvi(double nir, double red) {
    const double den = nir + red;
    if (den == 0.0) return std::nullopt;
    return (nir - red) / den;
}

std::optional<double> savi(double nir, double red, double l) {
    const double den = nir + red + l;
    if (den == 0.0) return std::nullopt;
    return (1.0 + l) * (nir - red) / den;
}

std::optional<double> kndvi(double nir, double red, std::optional<double> sigma) {
    if (!sigma) {
        auto n = ndvi(nir, red);
        if (!n) return std::nullopt;
        return std::tanh(*n * *n);
    }
    if (*sigma == 0.0) return std::nullopt;
    const double t = (nir - red) / (2.0 * *sigma);
    return std::tanh(t * t);
}

std::optional<double> nirv(double nir, double red) {
    auto n = ndvi(nir, red);
    if (!n) return std::nullopt;
    return nir * *n;
}

std::optional<double> psri(double red, double green, double nir) {
    if (nir == 0.0) return std::nullopt;
    return (red - green) / nir;
}

} // namespace formula

namespace {

template <typename Fn>
RasterGrid apply2(const RasterGrid &a, const RasterGrid &b, Fn fn) {
    RasterGrid out = a.blank_like();
    for (std::size_t i = 0; i < a.values().size(); ++i) {
        if (!a.defined(i) || !b.defined(i)) continue;
        if (auto v = fn(a[i], b[i])) out[i] = *v;
    }
    return out;
}

template <typename Fn>
RasterGrid apply3(const RasterGrid &a, const RasterGrid &b, const RasterGrid &c, Fn fn) {
    RasterGrid out = a.blank_like();
    for (std::size_t i = 0; i < a.values().size(); ++i) {
        if (!a.defined(i) || !b.defined(i) || !c.defined(i)) continue;
        if (auto v = fn(a[i], b[i], c[i])) out[i] = *v;
    }
    return out;
}

struct RgNir {
    const RasterGrid *red;
    const RasterGrid *green;
    const RasterGrid *nir;
};

RgNir select_bands(const BandSet &bands, bool need_green) {
    if (bands.kind() == SensorKind::MS) {
        return {&bands.band("red").grid, need_green ? &bands.band("green").grid : nullptr, &bands.band("nir").grid};
    }
    return {&bands.nearest(kHsRedNm, kHsTargetToleranceNm).grid,
            need_green ? &bands.nearest(kHsGreenNm, kHsTargetToleranceNm).grid : nullptr,
            &bands.nearest(kHsNirNm, kHsTargetToleranceNm).grid};
}

} // namespace

VegetationIndexMap vi_map(const BandSet &bands, IndexName index, const IndexParams &params) {
    if (index == IndexName::PSRI && bands.kind() == SensorKind::HS) return psri_hs(bands);
    const auto sel = select_bands(bands, index == IndexName::PSRI);
    const RasterGrid &nir = *sel.nir;
    const RasterGrid &red = *sel.red;
    switch (index) {
    case IndexName::NDVI: return {index, apply2(nir, red, formula::ndvi)};
    case IndexName::SAVI:
        return {index, apply2(nir, red, [l = params.savi_l](double n, double r) { return formula::savi(n, r, l); })};
    case IndexName::kNDVI:
        return {index, apply2(nir, red, [s = params.kndvi_sigma](double n, double r) { return formula::kndvi(n, r, s); })};
    case IndexName::NIRv: return {index, apply2(nir, red, formula::nirv)};
    case IndexName::PSRI: return {index, apply3(red, *sel.green, nir, formula::psri)};
    }
    throw InvalidInput("unhandled index");
}

VegetationIndexMap psri_hs(const BandSet &bands) {
    if (bands.kind() != SensorKind::HS) throw InvalidInput("psri_hs requires a hyperspectral band set");
    // Report every missing target, not just the first.
    std::vector<const RasterGrid *> picked;
    std::string missing;
    for (double target : {680.0, 500.0, 750.0}) {
        try {
            picked.push_back(&bands.nearest(target, kHsTargetToleranceNm).grid);
        } catch (const MissingBand &) {
            missing += (missing.empty() ? "" : ", ") + format_double(target);
        }
    }
    if (!missing.empty())
        throw MissingBand("PSRI needs bands within " + format_double(kHsTargetToleranceNm) + " nm of " + missing + " nm");
    return {IndexName::PSRI, apply3(*picked[0], *picked[1], *picked[2], formula::psri)};
}

PlotStatistic plot_statistic(const RasterGrid &grid, const PlotGeometry &plot, const RasterGrid *restrict_to,
                             const std::string &feature_name) {
    if (restrict_to) {
        geodata::require_aligned(grid.geometry(), restrict_to->geometry(), "restrict_to mask");
        geodata::validate_mask(*restrict_to, "restrict_to mask");
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (auto idx : geodata::region_cells(grid.geometry(), plot)) {
        if (!grid.defined(idx)) continue;
        if (restrict_to && (*restrict_to)[idx] != 1.0) continue;
        sum += grid[idx];
        ++n;
    }
    if (n == 0) throw EmptyPlot("plot '" + plot.plot_id() + "' has no usable cells for " + feature_name);
    return {plot.plot_id(), feature_name, sum / static_cast<double>(n), n};
}

PlotStatistic fvc(const RasterGrid &vegetation_mask, const PlotGeometry &plot) {
    geodata::validate_mask(vegetation_mask, "vegetation mask");
    auto cells = geodata::region_cells(vegetation_mask.geometry(), plot);
    if (cells.empty()) throw EmptyPlot("plot '" + plot.plot_id() + "' covers no cell centers of the vegetation mask");
    std::size_t vegetated = 0;
    for (auto idx : cells)
        if (vegetation_mask[idx] == 1.0) ++vegetated;
    return {plot.plot_id(), "FVC", static_cast<double>(vegetated) / static_cast<double>(cells.size()), cells.size()};
}

} // namespace breedkit::spectral
