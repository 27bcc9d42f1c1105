// breedkit command-line driver. Data goes to files under --out, logs to
// stderr, and one JSON summary line to stdout. Exit 0 on success, 1 on a
// module error, 2 on an invalid configuration.

#include "breedkit/bench.hpp"
#include "breedkit/csv.hpp"
#include "breedkit/error.hpp"
#include "breedkit/format.hpp"
#include "breedkit/fusion.hpp"
#include "breedkit/geodata.hpp"
#include "breedkit/kb.hpp"
#include "breedkit/pipeline.hpp"
#include "breedkit/prefopt.hpp"
#include "breedkit/spectral.hpp"
#include "breedkit/structural.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace breedkit;
using ordered_json = nlohmann::ordered_json;

namespace {

// Invalid configuration: reported with the offending field path.
struct ConfigError {
    std::string field;
    std::string message;
};

struct Common {
    std::string out;
    unsigned threads = 1;
};

void require_file(const std::string &field, const std::string &path) {
    if (path.empty()) throw ConfigError{field, "required"};
    if (!fs::is_regular_file(path)) throw ConfigError{field, "file not found: " + path};
}

void optional_file(const std::string &field, const std::string &path) {
    if (!path.empty()) require_file(field, path);
}

void log(const std::string &msg) { std::cerr << "breedkit: " << msg << '\n'; }

class Output {
  public:
    explicit Output(const std::string &dir) : dir_(dir) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec || !fs::is_directory(dir_)) throw ConfigError{"out", "cannot create directory " + dir};
    }

    template <typename Fn>
    void write(const std::string &name, Fn &&fn) {
        std::ostringstream buf;
        fn(buf);
        const auto path = dir_ / name;
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f << buf.str();
        if (!f) throw IoError("cannot write " + path.string());
        files_.push_back(name);
        log("wrote " + path.string());
    }

    const std::vector<std::string> &files() const { return files_; }

  private:
    fs::path dir_;
    std::vector<std::string> files_;
};

std::ifstream open_input(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return in;
}

// ---------------------------------------------------------------------------
// extract

struct ExtractOpts {
    std::string plots, ms_blue, ms_green, ms_red, ms_red_edge, ms_nir, hs_manifest;
    std::string points, dsm, dem;
    double cell_size = 0.1;
    std::string vegetation_mask, lodging_mask, weed_mask, head_counts, ground;
    std::optional<double> altitude, fov_h, fov_v, kndvi_sigma;
    double savi_l = 0.5, ch_percentile = 0.95, noise_floor = 0.05, ring_inner = 0.0, ring_outer = 0.5;
    bool vi_on_vegetation = false;
};

void add_extract(CLI::App &app, ExtractOpts &o) {
    app.add_option("--plots", o.plots, "Plot polygon CSV (plot_id, germplasm_id, vertex_index, x, y)");
    app.add_option("--ms-blue", o.ms_blue, "Multispectral blue band (.asc)");
    app.add_option("--ms-green", o.ms_green, "Multispectral green band (.asc)");
    app.add_option("--ms-red", o.ms_red, "Multispectral red band (.asc)");
    app.add_option("--ms-red-edge", o.ms_red_edge, "Multispectral red-edge band (.asc)");
    app.add_option("--ms-nir", o.ms_nir, "Multispectral NIR band (.asc)");
    app.add_option("--hs-manifest", o.hs_manifest, "Hyperspectral manifest CSV (wavelength_nm, path)");
    app.add_option("--points", o.points, "Point cloud (x y z per line); DSM = max, DEM = min per cell");
    app.add_option("--cell-size", o.cell_size, "Rasterization cell size for --points (m)");
    app.add_option("--dsm", o.dsm, "Surface model raster (.asc), with --dem");
    app.add_option("--dem", o.dem, "Terrain model raster (.asc), with --dsm");
    app.add_option("--vegetation-mask", o.vegetation_mask, "0/1 vegetation mask (.asc)");
    app.add_option("--lodging-mask", o.lodging_mask, "0/1 lodging mask (.asc)");
    app.add_option("--weed-mask", o.weed_mask, "0/1 weed mask (.asc)");
    app.add_option("--head-counts", o.head_counts, "Per-image wheat-head counts CSV (plot_id, image_id, count)");
    app.add_option("--altitude", o.altitude, "Flight altitude above canopy (m)");
    app.add_option("--fov-h", o.fov_h, "Horizontal field of view (degrees)");
    app.add_option("--fov-v", o.fov_v, "Vertical field of view (degrees)");
    app.add_option("--ground", o.ground, "Ground records CSV (plot_id, site, date, SPAD, LAI, measured_CH, yield)");
    app.add_option("--savi-l", o.savi_l, "SAVI soil factor L");
    app.add_option("--kndvi-sigma", o.kndvi_sigma, "Fixed kNDVI kernel width (default: per pixel)");
    app.add_option("--ch-percentile", o.ch_percentile, "Canopy height percentile in (0, 1]");
    app.add_option("--noise-floor", o.noise_floor, "CHM values below this are set to zero (m)");
    app.add_option("--ring-inner", o.ring_inner, "Weed buffer ring inner distance (m)");
    app.add_option("--ring-outer", o.ring_outer, "Weed buffer ring outer distance (m)");
    app.add_flag("--vi-on-vegetation", o.vi_on_vegetation, "Average indices over vegetation cells only");
}

ordered_json run_extract(const ExtractOpts &o, const Common &c) {
    require_file("extract.plots", o.plots);
    const std::vector<std::pair<std::string, std::string>> ms = {
        {"blue", o.ms_blue}, {"green", o.ms_green}, {"red", o.ms_red}, {"red_edge", o.ms_red_edge}, {"nir", o.ms_nir}};
    std::size_t ms_given = 0;
    for (const auto &[name, path] : ms) ms_given += !path.empty();
    if (ms_given != 0 && ms_given != ms.size()) {
        for (const auto &[name, path] : ms)
            if (path.empty()) throw ConfigError{"extract.ms-" + std::string(name == "red_edge" ? "red-edge" : name),
                                                "all five multispectral bands are required together"};
    }
    for (const auto &[name, path] : ms) optional_file("extract.ms-" + std::string(name == "red_edge" ? "red-edge" : name), path);
    optional_file("extract.hs-manifest", o.hs_manifest);
    optional_file("extract.points", o.points);
    optional_file("extract.dsm", o.dsm);
    optional_file("extract.dem", o.dem);
    if (!o.points.empty() && (!o.dsm.empty() || !o.dem.empty()))
        throw ConfigError{"extract.points", "give either a point cloud or DSM/DEM rasters, not both"};
    if (o.dsm.empty() != o.dem.empty()) throw ConfigError{o.dsm.empty() ? "extract.dsm" : "extract.dem", "DSM and DEM go together"};
    if (!(o.cell_size > 0.0)) throw ConfigError{"extract.cell-size", "must be positive"};
    optional_file("extract.vegetation-mask", o.vegetation_mask);
    optional_file("extract.lodging-mask", o.lodging_mask);
    optional_file("extract.weed-mask", o.weed_mask);
    optional_file("extract.head-counts", o.head_counts);
    optional_file("extract.ground", o.ground);
    if (!o.head_counts.empty()) {
        if (!o.altitude) throw ConfigError{"extract.altitude", "required with head counts"};
        if (!o.fov_h) throw ConfigError{"extract.fov-h", "required with head counts"};
        if (!o.fov_v) throw ConfigError{"extract.fov-v", "required with head counts"};
    }
    if (o.vi_on_vegetation && o.vegetation_mask.empty())
        throw ConfigError{"extract.vegetation-mask", "required with --vi-on-vegetation"};
    if (!(o.ch_percentile > 0.0 && o.ch_percentile <= 1.0)) throw ConfigError{"extract.ch-percentile", "must lie in (0, 1]"};
    if (!(o.ring_inner >= 0.0 && o.ring_outer > o.ring_inner)) throw ConfigError{"extract.ring-outer", "need 0 <= inner < outer"};
    Output out(c.out);

    pipeline::ExtractInputs in;
    in.plots = geodata::load_plots(o.plots);
    if (ms_given) {
        const std::map<std::string, double> centers = {
            {"blue", 450}, {"green", 560}, {"red", 650}, {"red_edge", 730}, {"nir", 840}};
        std::map<std::string, spectral::Band> bands;
        for (const auto &[name, path] : ms) bands.emplace(name, spectral::Band{geodata::load_raster(path), centers.at(name)});
        in.ms = spectral::BandSet(spectral::SensorKind::MS, std::move(bands));
    }
    if (!o.hs_manifest.empty()) in.hs = pipeline::load_hs_manifest(o.hs_manifest);
    if (!o.points.empty()) {
        const auto cloud = geodata::load_point_cloud(o.points);
        in.dsm = geodata::rasterize_elevation(cloud, o.cell_size, geodata::Aggregator::max);
        in.dem = geodata::rasterize_elevation(cloud, o.cell_size, geodata::Aggregator::min);
    } else if (!o.dsm.empty()) {
        in.dsm = geodata::load_raster(o.dsm);
        in.dem = geodata::load_raster(o.dem);
    }
    if (!o.vegetation_mask.empty()) in.vegetation_mask = geodata::load_raster(o.vegetation_mask);
    if (!o.lodging_mask.empty()) in.lodging_mask = geodata::load_raster(o.lodging_mask);
    if (!o.weed_mask.empty()) in.weed_mask = geodata::load_raster(o.weed_mask);
    if (!o.head_counts.empty()) in.head_counts = structural::load_head_counts(o.head_counts);
    if (!o.ground.empty()) in.ground = pipeline::load_ground(o.ground);

    pipeline::ExtractParams p;
    p.index.savi_l = o.savi_l;
    p.index.kndvi_sigma = o.kndvi_sigma;
    p.ch_percentile = o.ch_percentile;
    p.noise_floor = o.noise_floor;
    p.ring_inner = o.ring_inner;
    p.ring_outer = o.ring_outer;
    p.vi_on_vegetation = o.vi_on_vegetation;
    p.altitude_m = o.altitude;
    p.fov_h_deg = o.fov_h;
    p.fov_v_deg = o.fov_v;

    log("extracting features for " + std::to_string(in.plots.size()) + " plots");
    const auto records = pipeline::extract_features(in, p, c.threads);
    out.write("features.csv", [&](std::ostream &s) { fusion::write_plot_features(s, records); });
    return {{"plots", records.size()}, {"outputs", out.files()}};
}

// ---------------------------------------------------------------------------
// fuse

struct FuseOpts {
    std::string features, weather, germplasm, domains = "all";
    double lambda = fusion::kDefaultLambda;
    std::size_t k = 5;
    std::optional<std::uint64_t> seed;
};

void add_fuse(CLI::App &app, FuseOpts &o) {
    app.add_option("--features", o.features, "Plot feature CSV written by extract");
    app.add_option("--weather", o.weather, "Daily weather CSV (site, date, t_mean, dew_point, precip, ...)");
    app.add_option("--germplasm", o.germplasm, "Germplasm table CSV");
    app.add_option("--domains", o.domains, "Comma-separated subset of RS, phenotyping, weather, germplasm, or all");
    app.add_option("--lambda", o.lambda, "Ridge penalty");
    app.add_option("--k", o.k, "Cross-validation folds (rows for leave-one-out)");
    app.add_option("--seed", o.seed, "Fold-assignment seed (required)");
}

ordered_json run_fuse(const FuseOpts &o, const Common &c) {
    require_file("fuse.features", o.features);
    std::set<fusion::Domain> domains;
    try {
        domains = fusion::parse_domains(o.domains);
    } catch (const Error &e) {
        throw ConfigError{"fuse.domains", e.what()};
    }
    if (domains.count(fusion::Domain::weather)) require_file("fuse.weather", o.weather);
    else optional_file("fuse.weather", o.weather);
    if (domains.count(fusion::Domain::germplasm)) require_file("fuse.germplasm", o.germplasm);
    else optional_file("fuse.germplasm", o.germplasm);
    if (!(o.lambda >= 0.0)) throw ConfigError{"fuse.lambda", "must be non-negative"};
    if (o.k < 2) throw ConfigError{"fuse.k", "need at least 2 folds"};
    if (!o.seed) throw ConfigError{"fuse.seed", "required for fold assignment"};
    Output out(c.out);

    const auto records = fusion::load_plot_features(o.features);
    const auto weather = o.weather.empty() ? std::vector<fusion::WeatherRecord>{} : fusion::load_weather(o.weather);
    const auto germ = o.germplasm.empty() ? std::vector<kb::GermplasmRecord>{} : kb::load_germplasm(o.germplasm);
    const auto m = fusion::assemble(records, weather, germ, domains);
    for (const auto &d : m.dropped) log("dropped plot " + d.plot_id + ": " + d.reason);
    log("fitting ridge on " + std::to_string(m.rows()) + " rows x " + std::to_string(m.cols()) + " columns");
    const auto cv = fusion::kfold_cv(m, o.k, o.lambda, *o.seed, c.threads);
    out.write("cv_metrics.json", [&](std::ostream &s) { fusion::write_cv_metrics_json(s, cv, m); });
    out.write("scatter.csv", [&](std::ostream &s) { fusion::write_scatter_csv(s, cv); });
    return {{"rows", m.rows()},
            {"columns", m.cols()},
            {"pooled_r2", cv.pooled.r2},
            {"pooled_rmse", cv.pooled.rmse},
            {"outputs", out.files()}};
}

// ---------------------------------------------------------------------------
// prefopt

struct SftOpts {
    std::string data, init_policy;
    int vocab = 0, context = 1;
    double lr = 0.5;
    std::size_t epochs = 100;
};

struct RmOpts {
    std::string preferences;
    int vocab = 0;
    double lr = 0.5;
    std::size_t epochs = 200;
};

struct PpoOpts {
    std::string policy, reference, reward_model, prompts;
    prefopt::RLHFConfig rl;
    std::optional<std::uint64_t> seed;
};

void add_prefopt(CLI::App &sft, SftOpts &s, CLI::App &rm, RmOpts &r, CLI::App &ppo, PpoOpts &p) {
    sft.add_option("--data", s.data, "SFT examples, one JSON object per line: {prompt, answer}");
    sft.add_option("--vocab", s.vocab, "Vocabulary size");
    sft.add_option("--context", s.context, "Policy context length");
    sft.add_option("--init-policy", s.init_policy, "Start from this policy JSON instead of uniform");
    sft.add_option("--lr", s.lr, "Learning rate");
    sft.add_option("--epochs", s.epochs, "Full-batch epochs");

    rm.add_option("--preferences", r.preferences, "Preference JSONL: {prompt, chosen, rejected} or {prompt, ranked}");
    rm.add_option("--vocab", r.vocab, "Vocabulary size");
    rm.add_option("--lr", r.lr, "Learning rate");
    rm.add_option("--epochs", r.epochs, "Full-batch epochs");

    ppo.add_option("--policy", p.policy, "Starting policy JSON");
    ppo.add_option("--reference", p.reference, "Frozen reference policy JSON (default: the starting policy)");
    ppo.add_option("--reward-model", p.reward_model, "Reward model JSON");
    ppo.add_option("--prompts", p.prompts, "Prompt JSONL: {prompt}");
    ppo.add_option("--beta", p.rl.beta, "KL penalty weight");
    ppo.add_option("--clip", p.rl.ppo_clip, "PPO clip range");
    ppo.add_option("--lr", p.rl.learning_rate, "Learning rate");
    ppo.add_option("--iterations", p.rl.iterations, "PPO iterations");
    ppo.add_option("--samples-per-prompt", p.rl.samples_per_prompt, "Sampled answers per prompt and iteration");
    ppo.add_option("--answer-length", p.rl.answer_length, "Tokens per sampled answer");
    ppo.add_option("--minibatches", p.rl.minibatches, "Minibatches per iteration");
    ppo.add_option("--seed", p.seed, "Sampling seed (required)");
}

template <typename Fn>
auto load_with(const std::string &path, Fn &&fn) {
    auto in = open_input(path);
    return fn(in, path);
}

ordered_json run_sft(const SftOpts &o, const Common &c) {
    require_file("prefopt.sft.data", o.data);
    optional_file("prefopt.sft.init-policy", o.init_policy);
    if (o.init_policy.empty() && o.vocab < 1) throw ConfigError{"prefopt.sft.vocab", "required (positive)"};
    if (o.context < 0) throw ConfigError{"prefopt.sft.context", "must be non-negative"};
    if (!(o.lr >= 0.0)) throw ConfigError{"prefopt.sft.lr", "must be non-negative"};
    Output out(c.out);

    auto data = load_with(o.data, [](std::istream &in, const std::string &s) { return prefopt::read_sft_jsonl(in, s); });
    auto policy = o.init_policy.empty()
                      ? prefopt::PolicyModel(o.vocab, o.context)
                      : load_with(o.init_policy, [](std::istream &in, const std::string &s) { return prefopt::load_policy(in, s); });
    const auto losses = prefopt::train_sft(policy, data, o.lr, o.epochs);
    out.write("policy.json", [&](std::ostream &s) { prefopt::save_policy(s, policy); });
    out.write("sft_loss.csv", [&](std::ostream &s) { prefopt::write_loss_csv(s, losses); });
    return {{"examples", data.size()}, {"final_loss", losses.back()}, {"outputs", out.files()}};
}

ordered_json run_rm(const RmOpts &o, const Common &c) {
    require_file("prefopt.rm.preferences", o.preferences);
    if (o.vocab < 1) throw ConfigError{"prefopt.rm.vocab", "required (positive)"};
    if (!(o.lr >= 0.0)) throw ConfigError{"prefopt.rm.lr", "must be non-negative"};
    Output out(c.out);

    auto data = load_with(o.preferences,
                          [](std::istream &in, const std::string &s) { return prefopt::read_preference_jsonl(in, s); });
    prefopt::RewardModel rm(o.vocab);
    const auto losses = prefopt::train_reward_model(rm, data, o.lr, o.epochs);
    out.write("reward_model.json", [&](std::ostream &s) { prefopt::save_reward_model(s, rm); });
    out.write("rm_loss.csv", [&](std::ostream &s) { prefopt::write_loss_csv(s, losses); });
    return {{"pairs", data.size()}, {"final_loss", losses.back()}, {"outputs", out.files()}};
}

ordered_json run_ppo(const PpoOpts &o, const Common &c) {
    require_file("prefopt.ppo.policy", o.policy);
    optional_file("prefopt.ppo.reference", o.reference);
    require_file("prefopt.ppo.reward-model", o.reward_model);
    require_file("prefopt.ppo.prompts", o.prompts);
    if (!o.seed) throw ConfigError{"prefopt.ppo.seed", "required for sampling"};
    auto cfg = o.rl;
    cfg.seed = *o.seed;
    try {
        cfg.validate();
    } catch (const Error &e) {
        throw ConfigError{"prefopt.ppo", e.what()};
    }
    Output out(c.out);

    auto read_policy = [](std::istream &in, const std::string &s) { return prefopt::load_policy(in, s); };
    auto policy = load_with(o.policy, read_policy);
    const prefopt::ReferencePolicy reference(o.reference.empty() ? policy : load_with(o.reference, read_policy));
    const auto rm = load_with(o.reward_model,
                              [](std::istream &in, const std::string &s) { return prefopt::load_reward_model(in, s); });
    const auto prompts =
        load_with(o.prompts, [](std::istream &in, const std::string &s) { return prefopt::read_prompt_jsonl(in, s); });
    auto run = prefopt::rlhf_train(std::move(policy), reference, rm, prompts, cfg);
    out.write("policy_ppo.json", [&](std::ostream &s) { prefopt::save_policy(s, run.policy); });
    out.write("ppo_diagnostics.csv", [&](std::ostream &s) { prefopt::write_step_csv(s, run.diagnostics); });
    ordered_json summary = {{"iterations", run.diagnostics.size()}};
    if (!run.diagnostics.empty()) {
        summary["final_mean_score"] = run.diagnostics.back().mean_score;
        summary["final_mean_kl"] = run.diagnostics.back().mean_kl;
    }
    summary["outputs"] = out.files();
    return summary;
}

// ---------------------------------------------------------------------------
// bench

struct BenchOpts {
    std::string trials, ballots;
};

ordered_json run_bench(const BenchOpts &o, const Common &c) {
    require_file("bench.trials", o.trials);
    optional_file("bench.ballots", o.ballots);
    Output out(c.out);

    const auto trials = bench::load_trials(o.trials);
    const auto ballots = o.ballots.empty() ? std::vector<bench::ReasoningBallot>{} : bench::load_ballots(o.ballots);
    const auto report = bench::build_report(trials, ballots, c.threads);
    out.write("report.json", [&](std::ostream &s) { bench::write_report_json(s, report); });
    out.write("accuracy.csv", [&](std::ostream &s) { bench::write_accuracy_csv(s, report); });
    out.write("stability.csv", [&](std::ostream &s) { bench::write_stability_csv(s, report); });
    if (report.reasoning) out.write("reasoning.csv", [&](std::ostream &s) { bench::write_reasoning_csv(s, report); });
    return {{"models", report.models}, {"trials", trials.size()}, {"outputs", out.files()}};
}

// ---------------------------------------------------------------------------
// kb

struct ScreenOpts {
    std::string germplasm;
    std::vector<std::string> criteria, traits;
};

struct PriceOpts {
    std::string prices, point, date, variety;
};

std::string field_text(const kb::FieldValue &v) {
    if (const auto *d = std::get_if<double>(&v)) return format_double(*d);
    if (const auto *s = std::get_if<std::string>(&v)) return *s;
    return "";
}

ordered_json run_screen(const ScreenOpts &o, const Common &c) {
    require_file("kb.screen.germplasm", o.germplasm);
    std::vector<kb::Criterion> criteria;
    for (const auto &t : o.criteria) {
        try {
            criteria.push_back(kb::Criterion::parse(t));
        } catch (const Error &e) {
            throw ConfigError{"kb.screen.criterion", e.what()};
        }
    }
    for (const auto &t : o.traits) {
        try {
            const auto extra = kb::trait_criteria(kb::trait_from_string(t));
            criteria.insert(criteria.end(), extra.begin(), extra.end());
        } catch (const Error &e) {
            throw ConfigError{"kb.screen.trait", e.what()};
        }
    }
    Output out(c.out);

    const auto records = kb::load_germplasm(o.germplasm);
    const auto hits = kb::screen_germplasm(records, criteria);
    out.write("screen.csv", [&](std::ostream &s) {
        csv::write_row(s, kb::germplasm_fields());
        for (const auto &r : hits) {
            std::vector<std::string> row;
            for (const auto &f : kb::germplasm_fields()) row.push_back(field_text(kb::field_value(r, f)));
            csv::write_row(s, row);
        }
    });
    ordered_json names = ordered_json::array();
    for (const auto &r : hits) names.push_back(r.variety_name);
    return {{"matches", names}, {"outputs", out.files()}};
}

ordered_json run_price(const PriceOpts &o, const Common &c) {
    require_file("kb.price.prices", o.prices);
    if (o.point.empty()) throw ConfigError{"kb.price.point", "required"};
    Date date;
    try {
        date = Date::parse(o.date);
    } catch (const Error &e) {
        throw ConfigError{"kb.price.date", e.what()};
    }
    Output out(c.out);

    const auto records = kb::load_prices(o.prices);
    const auto hits = kb::query_price(records, o.point, date,
                                      o.variety.empty() ? std::nullopt : std::optional<std::string>(o.variety));
    if (!hits) log("no price recorded at " + o.point + " within the date window");
    out.write("price.csv", [&](std::ostream &s) {
        csv::write_row(s, {"observation_point", "variety_name", "price", "specification", "planting_area", "date"});
        if (!hits) return;
        for (const auto &r : *hits)
            csv::write_row(s, {r.observation_point, r.variety_name, format_double(r.price),
                               format_double(r.specification), r.planting_area, r.date.str()});
    });
    return {{"found", hits.has_value()}, {"records", hits ? hits->size() : 0}, {"outputs", out.files()}};
}

void print_summary(const std::string &command, const std::string &status, ordered_json detail) {
    ordered_json j = {{"command", command}, {"status", status}};
    for (auto &[k, v] : detail.items()) j[k] = v;
    std::cout << j.dump() << std::endl;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"breedkit: plot phenotyping features, yield fusion, preference optimisation and benchmark scoring"};
    app.set_config("--config", "", "INI/TOML config file; [section] per subcommand, flags win over the file");
    app.require_subcommand(1);
    Common common;
    app.add_option("--out", common.out, "Output directory")->required();
    app.add_option("--threads", common.threads, "Worker threads (results do not depend on it)")
        ->check(CLI::Range(1u, 1024u));

    ExtractOpts ex;
    auto *extract = app.add_subcommand("extract", "Per-plot features from rasters, point clouds and masks");
    add_extract(*extract, ex);

    FuseOpts fu;
    auto *fuse = app.add_subcommand("fuse", "Assemble a feature matrix and cross-validate ridge yield regression");
    add_fuse(*fuse, fu);

    SftOpts so;
    RmOpts ro;
    PpoOpts po;
    auto *prefopt_cmd = app.add_subcommand("prefopt", "Preference-optimisation stages");
    prefopt_cmd->require_subcommand(1);
    auto *sft = prefopt_cmd->add_subcommand("sft", "Supervised fine-tuning of a tabular policy");
    auto *rm = prefopt_cmd->add_subcommand("rm", "Train a pairwise reward model");
    auto *ppo = prefopt_cmd->add_subcommand("ppo", "KL-regularised PPO against a reward model");
    add_prefopt(*sft, so, *rm, ro, *ppo, po);

    BenchOpts bo;
    auto *bench_cmd = app.add_subcommand("bench", "Score benchmark trials and reasoning ballots");
    bench_cmd->add_option("--trials", bo.trials, "Trial CSV");
    bench_cmd->add_option("--ballots", bo.ballots, "Reasoning ballot CSV (test_id, model_id, score[, axis])");

    ScreenOpts sc;
    PriceOpts pr;
    auto *kb_cmd = app.add_subcommand("kb", "Knowledge-base queries");
    kb_cmd->require_subcommand(1);
    auto *screen = kb_cmd->add_subcommand("screen", "Screen germplasm by criteria and traits");
    screen->add_option("--germplasm", sc.germplasm, "Germplasm table CSV");
    screen->add_option("--criterion", sc.criteria, "Criterion such as plant_height<=80 (repeatable)");
    screen->add_option("--trait", sc.traits, "Trait HQ, DS, DR, MP or AM (repeatable)");
    auto *price = kb_cmd->add_subcommand("price", "Seed price at an observation point near a date");
    price->add_option("--prices", pr.prices, "Price table CSV");
    price->add_option("--point", pr.point, "Observation point");
    price->add_option("--date", pr.date, "Date YYYY-MM-DD");
    price->add_option("--variety", pr.variety, "Variety name");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        std::cerr << "breedkit: configuration error: " << e.what() << '\n';
        print_summary("", "config_error", {{"field", ""}, {"message", e.what()}});
        return 2;
    }

    std::string command;
    try {
        if (*extract) {
            command = "extract";
            print_summary(command, "ok", run_extract(ex, common));
        } else if (*fuse) {
            command = "fuse";
            print_summary(command, "ok", run_fuse(fu, common));
        } else if (*sft) {
            command = "prefopt sft";
            print_summary(command, "ok", run_sft(so, common));
        } else if (*rm) {
            command = "prefopt rm";
            print_summary(command, "ok", run_rm(ro, common));
        } else if (*ppo) {
            command = "prefopt ppo";
            print_summary(command, "ok", run_ppo(po, common));
        } else if (*bench_cmd) {
            command = "bench";
            print_summary(command, "ok", run_bench(bo, common));
        } else if (*screen) {
            command = "kb screen";
            print_summary(command, "ok", run_screen(sc, common));
        } else if (*price) {
            command = "kb price";
            print_summary(command, "ok", run_price(pr, common));
        }
    } catch (const ConfigError &e) {
        std::cerr << "breedkit: configuration error: " << e.field << ": " << e.message << '\n';
        print_summary(command, "config_error", {{"field", e.field}, {"message", e.message}});
        return 2;
    } catch (const Error &e) {
        std::cerr << "breedkit: " << e.name() << ": " << e.what() << '\n';
        print_summary(command, "error", {{"error", e.name()}, {"message", e.what()}});
        return 1;
    } catch (const std::exception &e) {
        std::cerr << "breedkit: internal error: " << e.what() << '\n';
        print_summary(command, "error", {{"error", "InternalError"}, {"message", e.what()}});
        return 1;
    }
    return 0;
}
