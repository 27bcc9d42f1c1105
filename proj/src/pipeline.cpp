#include "breedkit/pipeline.hpp"

#include "breedkit/csv.hpp"
#include "breedkit/error.hpp"
#include "breedkit/format.hpp"
#include "breedkit/parallel.hpp"
#include "breedkit/structural.hpp"

#include <fstream>
#include <set>

namespace breedkit::pipeline {

namespace {

const char *const kPhenotypingColumns[] = {"SPAD", "LAI", "measured_CH"};

bool parse_flag(const std::optional<std::string> &text, const std::string &where) {
    if (!text) return false;
    const auto v = to_lower(trim(*text));
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ParseError(where + ": expected a boolean, got \"" + *text + "\"");
}

} // namespace

std::vector<GroundRecord> read_ground(std::istream &in, const std::string &source) {
    const auto t = csv::Table::read(in, source);
    t.column("plot_id");
    std::vector<GroundRecord> out;
    std::set<std::string> seen;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        const auto where = source + ":" + std::to_string(t.line_of(r));
        GroundRecord g;
        g.plot_id = std::string(trim(t.cell(r, "plot_id")));
        if (g.plot_id.empty()) throw ParseError(where + ": empty plot_id");
        if (!seen.insert(g.plot_id).second) throw ParseError(where + ": plot '" + g.plot_id + "' listed twice");
        g.site = std::string(trim(t.optional_cell(r, "site").value_or("")));
        if (auto d = t.optional_cell(r, "date")) g.date = Date::parse(*d);
        for (const char *c : kPhenotypingColumns)
            if (auto v = t.number(r, c)) g.phenotyping[c] = *v;
        g.yield_kg_ha = t.number(r, "yield_kg_ha");
        g.harvest_mass_kg = t.number(r, "harvest_mass_kg");
        g.moisture = t.number(r, "moisture");
        g.plot_area_ha = t.number(r, "plot_area_ha");
        g.lodging_special = parse_flag(t.optional_cell(r, "lodging_special"), where);
        if (g.harvest_mass_kg && !g.moisture) throw ParseError(where + ": harvest_mass_kg needs moisture");
        out.push_back(std::move(g));
    }
    return out;
}

std::vector<GroundRecord> load_ground(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open ground table " + path.string());
    return read_ground(in, path.string());
}

spectral::BandSet load_hs_manifest(const std::filesystem::path &path) {
    const auto t = csv::Table::read_file(path);
    std::map<std::string, spectral::Band> bands;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        const double nm = t.required_number(r, "wavelength_nm");
        std::filesystem::path band_path = std::string(trim(t.cell(r, "path")));
        if (band_path.is_relative()) band_path = path.parent_path() / band_path;
        auto name = format_double(nm);
        if (bands.count(name))
            throw ParseError(path.string() + ":" + std::to_string(t.line_of(r)) + ": wavelength " + name + " listed twice");
        bands.emplace(std::move(name), spectral::Band{geodata::load_raster(band_path), nm});
    }
    if (bands.empty()) throw EmptyInput(path.string() + ": no hyperspectral bands");
    return spectral::BandSet(spectral::SensorKind::HS, std::move(bands));
}

std::vector<fusion::PlotFeatureRecord> extract_features(const ExtractInputs &in, const ExtractParams &params,
                                                        unsigned threads) {
    if (in.plots.empty()) throw EmptyInput("no plots to extract");
    if (params.vi_on_vegetation && !in.vegetation_mask)
        throw InvalidInput("VI averaging over vegetation needs a vegetation mask");
    if (in.dsm.has_value() != in.dem.has_value()) throw InvalidInput("canopy height needs both a DSM and a DEM");
    const bool density = !in.head_counts.empty();
    if (density && !(params.altitude_m && params.fov_h_deg && params.fov_v_deg))
        throw InvalidInput("wheat-head density needs altitude and both fields of view");
    {
        std::set<std::string> ids;
        for (const auto &p : in.plots)
            if (!ids.insert(p.plot_id()).second) throw InvalidInput("plot '" + p.plot_id() + "' defined twice");
    }

    // Whole-scene rasters are computed once and shared read-only by the workers.
    const auto indices = {spectral::IndexName::NDVI, spectral::IndexName::SAVI, spectral::IndexName::kNDVI,
                          spectral::IndexName::NIRv, spectral::IndexName::PSRI};
    std::vector<std::pair<std::string, spectral::VegetationIndexMap>> vi_maps;
    for (const auto &[suffix, set] : {std::pair{"_MS", &in.ms}, std::pair{"_HS", &in.hs}}) {
        if (!*set) continue;
        for (auto idx : indices)
            vi_maps.emplace_back(spectral::to_string(idx) + suffix, spectral::vi_map(**set, idx, params.index));
    }
    std::optional<structural::CanopyHeightModel> chm;
    if (in.dsm) chm = structural::canopy_height_model(*in.dsm, *in.dem, params.noise_floor);

    std::map<std::string, const GroundRecord *> ground;
    for (const auto &g : in.ground) ground[g.plot_id] = &g;
    for (const auto &[id, _] : ground) {
        bool known = false;
        for (const auto &p : in.plots) known = known || p.plot_id() == id;
        if (!known) throw InvalidInput("ground record for unknown plot '" + id + "'");
    }
    for (const auto &[id, _] : in.head_counts) {
        bool known = false;
        for (const auto &p : in.plots) known = known || p.plot_id() == id;
        if (!known) throw InvalidInput("head counts for unknown plot '" + id + "'");
    }

    std::vector<fusion::PlotFeatureRecord> out(in.plots.size());
    parallel_for(in.plots.size(), threads, [&](std::size_t i) {
        const auto &plot = in.plots[i];
        auto &rec = out[i];
        rec.plot_id = plot.plot_id();
        rec.germplasm_id = plot.germplasm_id();
        const RasterGrid *restrict_to = params.vi_on_vegetation ? &*in.vegetation_mask : nullptr;
        for (const auto &[name, map] : vi_maps) rec.features[name] = spectral::plot_statistic(map.grid, plot, restrict_to).value;
        if (chm) {
            rec.features["CH"] = structural::plot_canopy_height(*chm, plot, params.ch_percentile).value;
            rec.features["CV"] = structural::canopy_volume(*in.dsm, plot).volume;
        }
        if (in.vegetation_mask) rec.features["FVC"] = spectral::fvc(*in.vegetation_mask, plot).value;

        const auto g = ground.find(plot.plot_id());
        const GroundRecord *gr = g == ground.end() ? nullptr : g->second;
        if (in.lodging_mask) {
            auto pl = structural::classify_lodging(*in.lodging_mask, plot, gr && gr->lodging_special);
            rec.features["PL_ratio"] = pl.ratio;
            rec.labels["PL_level"] = structural::to_string(pl.level);
        }
        if (in.weed_mask) {
            auto wl = structural::classify_weed(*in.weed_mask, plot,
                                                geodata::buffer_ring(plot, params.ring_inner, params.ring_outer));
            rec.features["WL_ratio"] = wl.ratio;
            rec.labels["WL_level"] = structural::to_string(wl.level);
        }
        if (density) {
            if (auto h = in.head_counts.find(plot.plot_id()); h != in.head_counts.end())
                rec.features["WH_density"] =
                    structural::wheat_head_density(h->second, *params.altitude_m, *params.fov_h_deg, *params.fov_v_deg)
                        .density;
        }
        if (gr) {
            rec.site = gr->site;
            rec.date = gr->date;
            for (const auto &[k, v] : gr->phenotyping) rec.features[k] = v;
            if (gr->yield_kg_ha) {
                rec.yield_kg_ha = gr->yield_kg_ha;
            } else if (gr->harvest_mass_kg) {
                const double area = gr->plot_area_ha.value_or(plot.area() / 10000.0);
                rec.yield_kg_ha = fusion::standardize_yield(*gr->harvest_mass_kg, area, *gr->moisture);
            }
        }
    });
    return out;
}

} // namespace breedkit::pipeline
