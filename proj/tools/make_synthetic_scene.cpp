// Writes the bundled three-plot synthetic scene. Every plot has constant
// reflectances and simple canopy geometry so each extracted feature has a
// closed form.

#include "breedkit/csv.hpp"
#include "breedkit/format.hpp"
#include "breedkit/geodata.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace breedkit;
using geodata::GridGeometry;
using geodata::RasterGrid;

namespace {

constexpr double kCell = 0.1;
constexpr std::size_t kCols = 90, kRows = 20;
constexpr double kGround = 50.0;

struct Plot {
    const char *id;
    const char *germplasm;
    double x0; // plots span [x0, x0 + 2] x [0.5, 1.5]
    std::array<double, 5> ms; // blue, green, red, red_edge, nir
    std::array<double, 6> hs; // 500, 560, 650, 680, 750, 840 nm
    int vegetated_cols;       // of 20
    int lodged_cols;
    bool weeds_inside;
    bool weeds_below;
};

const std::array<double, 5> kSoilMs = {0.08, 0.10, 0.14, 0.18, 0.22};
const std::array<double, 6> kSoilHs = {0.09, 0.10, 0.14, 0.15, 0.20, 0.22};
const std::array<int, 6> kHsNm = {500, 560, 650, 680, 750, 840};
const char *const kMsNames[] = {"blue", "green", "red", "red_edge", "nir"};

const std::vector<Plot> kPlots = {
    {"P1", "Zhoumai 22", 0.5, {0.03, 0.08, 0.04, 0.25, 0.48}, {0.04, 0.08, 0.04, 0.05, 0.40, 0.48}, 20, 0, false, false},
    {"P2", "Nongda 3486", 3.5, {0.04, 0.09, 0.06, 0.22, 0.40}, {0.05, 0.09, 0.06, 0.07, 0.35, 0.40}, 15, 12, true, true},
    {"P3", "Jimai 22", 6.5, {0.05, 0.10, 0.09, 0.20, 0.33}, {0.06, 0.10, 0.09, 0.10, 0.30, 0.33}, 10, 5, false, true},
};

// Canopy height of plot cell `col` (0..19 from the plot's left edge).
double canopy(std::size_t plot, int col) {
    switch (plot) {
    case 0: return 0.8;
    case 1: return 0.6 + 0.01 * col;
    default: return 0.7;
    }
}

const GridGeometry kGeo{kCols, kRows, kCell, 0.0, 0.0};

// Plot index and column within the plot for a grid cell, or -1.
int plot_of(std::size_t col, std::size_t row, int *plot_col) {
    const auto c = kGeo.cell_center(col, row);
    for (std::size_t p = 0; p < kPlots.size(); ++p) {
        const double x0 = kPlots[p].x0;
        if (c.x > x0 && c.x < x0 + 2.0 && c.y > 0.5 && c.y < 1.5) {
            *plot_col = static_cast<int>(std::floor((c.x - x0) / kCell));
            return static_cast<int>(p);
        }
    }
    return -1;
}

template <typename Fn>
RasterGrid grid_of(Fn value) {
    RasterGrid g(kGeo, geodata::kDefaultNodata, 0.0);
    for (std::size_t r = 0; r < kRows; ++r)
        for (std::size_t c = 0; c < kCols; ++c) {
            int pc = 0;
            const int p = plot_of(c, r, &pc);
            g[kGeo.index(c, r)] = value(p, pc, kGeo.cell_center(c, r));
        }
    return g;
}

void write_text(const fs::path &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

} // namespace

int main(int argc, char **argv) {
    if (argc != 2) {
        std::cerr << "usage: make_synthetic_scene OUTPUT_DIR\n";
        return 2;
    }
    const fs::path dir = argv[1];
    try {
        fs::create_directories(dir);

        std::ostringstream plots;
        csv::write_row(plots, {"plot_id", "germplasm_id", "vertex_index", "x", "y"});
        for (const auto &p : kPlots) {
            const std::array<std::array<double, 2>, 4> v = {
                {{p.x0, 0.5}, {p.x0 + 2.0, 0.5}, {p.x0 + 2.0, 1.5}, {p.x0, 1.5}}};
            for (std::size_t i = 0; i < v.size(); ++i)
                csv::write_row(plots, {p.id, p.germplasm, std::to_string(i), format_double(v[i][0]),
                                       format_double(v[i][1])});
        }
        write_text(dir / "plots.csv", plots.str());

        for (std::size_t b = 0; b < 5; ++b)
            geodata::save_raster(dir / ("ms_" + std::string(kMsNames[b]) + ".asc"), grid_of([&](int p, int, auto) {
                                     return p < 0 ? kSoilMs[b] : kPlots[static_cast<std::size_t>(p)].ms[b];
                                 }));
        std::ostringstream manifest;
        csv::write_row(manifest, {"wavelength_nm", "path"});
        for (std::size_t b = 0; b < kHsNm.size(); ++b) {
            const std::string name = "hs_" + std::to_string(kHsNm[b]) + ".asc";
            geodata::save_raster(dir / name, grid_of([&](int p, int, auto) {
                                     return p < 0 ? kSoilHs[b] : kPlots[static_cast<std::size_t>(p)].hs[b];
                                 }));
            csv::write_row(manifest, {std::to_string(kHsNm[b]), name});
        }
        write_text(dir / "hs_manifest.csv", manifest.str());

        // One ground return and, inside plots, one canopy return per cell.
        std::ostringstream points;
        for (std::size_t r = 0; r < kRows; ++r)
            for (std::size_t c = 0; c < kCols; ++c) {
                const auto ctr = kGeo.cell_center(c, r);
                const std::string xy = format_double(ctr.x) + " " + format_double(ctr.y) + " ";
                points << xy << format_double(kGround) << '\n';
                int pc = 0;
                const int p = plot_of(c, r, &pc);
                if (p >= 0) points << xy << format_double(kGround + canopy(static_cast<std::size_t>(p), pc)) << '\n';
            }
        write_text(dir / "points.xyz", points.str());

        geodata::save_raster(dir / "vegetation_mask.asc", grid_of([](int p, int pc, auto) {
                                 return p >= 0 && pc < kPlots[static_cast<std::size_t>(p)].vegetated_cols ? 1.0 : 0.0;
                             }));
        geodata::save_raster(dir / "lodging_mask.asc", grid_of([](int p, int pc, auto) {
                                 return p >= 0 && pc < kPlots[static_cast<std::size_t>(p)].lodged_cols ? 1.0 : 0.0;
                             }));
        // Weeds: inside flagged plots, and in the strip below a flagged plot's ring span.
        geodata::save_raster(dir / "weed_mask.asc", grid_of([](int p, int, geodata::Point2 c) {
                                 if (p >= 0) return kPlots[static_cast<std::size_t>(p)].weeds_inside ? 1.0 : 0.0;
                                 for (const auto &q : kPlots)
                                     if (q.weeds_below && c.y < 0.5 && c.x > q.x0 - 0.5 && c.x < q.x0 + 2.5) return 1.0;
                                 return 0.0;
                             }));

        write_text(dir / "head_counts.csv", "plot_id,image_id,count\n"
                                            "P1,img01,48\nP1,img02,52\n"
                                            "P2,img03,30\n"
                                            "P3,img04,60\nP3,img05,62\nP3,img06,64\n");
        write_text(dir / "ground.csv",
                   "plot_id,site,date,SPAD,LAI,measured_CH,harvest_mass_kg,moisture,lodging_special\n"
                   "P1,Tongzhou,2024-05-20,52.1,4.6,0.79,1.25,0.14,no\n"
                   "P2,Tongzhou,2024-05-20,47.3,3.8,0.71,1.02,0.16,no\n"
                   "P3,Tongzhou,2024-05-20,44,3.1,0.69,0.8,0.13,no\n");

        std::ostringstream weather;
        csv::write_row(weather, {"site", "date", "t_mean", "dew_point", "precip", "net_radiation", "wind_speed"});
        for (int d = 1; d <= 10; ++d)
            csv::write_row(weather, {"Tongzhou", "2024-05-" + std::string(d < 10 ? "0" : "") + std::to_string(d),
                                     format_double(16.0 + 0.5 * d), format_double(6.0 + 0.25 * d),
                                     format_double(d % 4 == 0 ? 3.5 : 0.0), format_double(120.0 + 4.0 * d),
                                     format_double(1.5 + 0.1 * (d % 3))});
        write_text(dir / "weather.csv", weather.str());

        write_text(dir / "germplasm.csv",
                   "variety_name,origin,crude_protein,lysine,sedimentation_value,stripe_rust,leaf_rust,powdery_mildew,"
                   "drought,cold,maturity,plant_height,thousand_grain_weight,grain_hardness\n"
                   "Zhoumai 22,Henan,14.6,0.38,42,R,MR,S,MR,R,231,78,46.5,hard\n"
                   "Nongda 3486,Beijing,13.1,0.41,31,S,S,MS,S,R,245,85,40.2,mixed\n"
                   "Jimai 22,Shandong,14.2,0.36,45,MR,R,R,R,MR,228,72,44,hard\n"
                   "Kechengmai 4,Sichuan,12,0.35,28,HR,R,R,S,S,190,91,48.1,soft\n");
        write_text(dir / "prices.csv", "observation_point,variety_name,price,specification,planting_area,date\n"
                                       "Miyun District,Nongda 3486,150,25,North,2024-06-01\n"
                                       "Miyun District,Jingdong 18,120,25,North,2024-06-01\n"
                                       "Miyun District,Nongda 3486,155,25,North,2024-07-10\n"
                                       "Chengdu,Kechengmai 4,25,2.5,Southwest,2024-07-24\n");

        std::ostringstream trials;
        csv::write_row(trials, {"model_id", "task", "subtask", "question_id", "trial_index", "answer_numeric",
                                "answer_label", "judged_correct", "reference_value", "reference_label",
                                "stability_protocol", "text_pass"});
        const std::array<const char *, 3> models = {"model_a", "model_b", "model_c"};
        const std::array<double, 3> yields = {6142.857142857143, 4896, 3977.142857142857};
        for (std::size_t m = 0; m < models.size(); ++m) {
            const double bias = 1.0 + 0.04 * static_cast<double>(m);
            for (std::size_t q = 0; q < yields.size(); ++q) {
                const std::string qid = "yield_P" + std::to_string(q + 1);
                csv::write_row(trials, {models[m], "phenotyping_estimation", "Yield", qid, "0",
                                        format_double(yields[q] * bias + 50.0 * static_cast<double>(q)), "", "",
                                        format_double(yields[q]), "", "", ""});
                for (int k = 1; k <= 2; ++k)
                    csv::write_row(trials, {models[m], "phenotyping_estimation", "Yield", qid, std::to_string(k),
                                            format_double(yields[q] * (bias + 0.03 * k)), "", "",
                                            format_double(yields[q]), "", k == 1 ? "consistency" : "robustness", ""});
            }
            const std::array<const char *, 3> lodging = {"no", "severe", "slight"};
            for (std::size_t q = 0; q < 3; ++q)
                csv::write_row(trials, {models[m], "phenotyping_estimation", "PL", "pl_P" + std::to_string(q + 1), "0",
                                        "", m == 2 && q == 1 ? "slight" : lodging[q], "", "", lodging[q], "", ""});
            for (int q = 0; q < 4; ++q)
                csv::write_row(trials, {models[m], "germplasm_screening", "HQ", "hq_" + std::to_string(q), "0", "",
                                        "", (q + static_cast<int>(m)) % 4 != 3 ? "true" : "false", "", "", "", ""});
            csv::write_row(trials, {models[m], "seed_price_query", "SP", "sp_miyun", "0",
                                    format_double(150.0 + 8.0 * static_cast<double>(m)), "", "", "150", "", "", ""});
            csv::write_row(trials, {models[m], "cultivation_recommendation", "CT", "ct_sowing", "1", "", "", "", "",
                                    "", "consistency", m == 1 ? "false" : "true"});
        }
        write_text(dir / "trials.csv", trials.str());

        std::ostringstream ballots;
        csv::write_row(ballots, {"test_id", "model_id", "score", "axis"});
        const std::array<const char *, 3> axes = {"explanation", "inductive_reasoning", "logical_deduction"};
        for (std::size_t a = 0; a < axes.size(); ++a)
            for (int t = 0; t < 4; ++t)
                for (std::size_t m = 0; m < models.size(); ++m) {
                    const std::size_t score = (m + a + static_cast<std::size_t>(t)) % 3 + 1;
                    csv::write_row(ballots, {axes[a] + std::string("_") + std::to_string(t), models[m],
                                             std::to_string(score), axes[a]});
                }
        write_text(dir / "ballots.csv", ballots.str());

        write_text(dir / "sft.jsonl", "{\"prompt\":[0],\"answer\":[1,2]}\n"
                                      "{\"prompt\":[1],\"answer\":[3,0]}\n"
                                      "{\"prompt\":[0],\"answer\":[1,3]}\n");
        write_text(dir / "preferences.jsonl", "{\"prompt\":[0],\"chosen\":[1,2],\"rejected\":[0,0]}\n"
                                              "{\"prompt\":[1],\"ranked\":[[3,0],[2,2],[0,1]]}\n");
        write_text(dir / "prompts.jsonl", "{\"prompt\":[0]}\n{\"prompt\":[1]}\n");

        // A 1 m x 1 m footprint from 3 m altitude.
        const std::string fov = format_double(2.0 * std::atan(1.0 / 6.0) * 180.0 / M_PI);
        write_text(dir / "scene.ini", "# Scene parameters; input paths are passed on the command line.\n"
                                      "[extract]\n"
                                      "cell-size = 0.1\n"
                                      "altitude = 3\n"
                                      "fov-h = " + fov + "\n"
                                      "fov-v = " + fov + "\n"
                                      "ring-inner = 0\n"
                                      "ring-outer = 0.5\n"
                                      "\n"
                                      "[fuse]\n"
                                      "k = 3\n"
                                      "lambda = 1\n"
                                      "seed = 7\n");
    } catch (const std::exception &e) {
        std::cerr << "make_synthetic_scene: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
