// Acceptance suite: one PASS/FAIL line per criterion. Tolerances and time
// limits are fixed here. Exit status is nonzero if any gating criterion fails.

#include "breedkit/bench.hpp"
#include "breedkit/error.hpp"
#include "breedkit/fusion.hpp"
#include "breedkit/geodata.hpp"
#include "breedkit/kb.hpp"
#include "breedkit/prefopt.hpp"
#include "breedkit/spectral.hpp"
#include "breedkit/structural.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace breedkit;
namespace fs = std::filesystem;
using geodata::GridGeometry;
using geodata::kDefaultNodata;
using geodata::PlotGeometry;
using geodata::RasterGrid;

namespace {

struct Outcome {
    enum Status { pass, fail, skip } status = pass;
    std::string detail;
};

// Collects failures inside one criterion.
class Checker {
  public:
    void expect(bool ok, const std::string &what) {
        ++checks_;
        if (!ok && failures_.size() < 5) failures_.push_back(what);
        failed_ += !ok;
    }
    std::size_t checks() const { return checks_; }
    std::size_t failed() const { return failed_; }
    std::string summary() const {
        std::ostringstream s;
        s << checks_ - failed_ << "/" << checks_ << " checks";
        for (const auto &f : failures_) s << "; " << f;
        return s.str();
    }

  private:
    std::size_t checks_ = 0, failed_ = 0;
    std::vector<std::string> failures_;
};

bool within_rel(double got, double want, double rel) {
    if (got == want) return true;
    return std::fabs(got - want) <= rel * std::max(std::fabs(got), std::fabs(want));
}

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
}

PlotGeometry rect(double x0, double y0, double x1, double y1, const std::string &id = "p") {
    return PlotGeometry(id, "g", {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}});
}

// ---------------------------------------------------------------------------
// 1. Vegetation-index formulas against per-pixel scalar oracles.

Outcome feature_formulas() {
    constexpr std::size_t n = 64;
    const GridGeometry g{n, n, 1.0, 0, 0};
    const double L = 0.5;
    Checker c;
    std::size_t bitwise = 0, total = 0;
    std::mt19937_64 rng(20240601);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> cell(0, n * n - 1);

    for (int set = 0; set < 100; ++set) {
        auto band = [&] {
            std::vector<double> v(n * n);
            for (auto &x : v) x = u(rng);
            return v;
        };
        auto blue = band(), green = band(), red = band(), red_edge = band(), nir = band();
        auto h500 = band(), h560 = band(), h650 = band(), h680 = band(), h750 = band(), h840 = band();
        // Zero denominators and nodata holes.
        for (int k = 0; k < 40; ++k) {
            const auto i = cell(rng);
            nir[i] = red[i] = 0.0;
            h840[i] = h650[i] = 0.0;
            h750[cell(rng)] = 0.0;
        }
        for (int k = 0; k < 40; ++k) {
            red[cell(rng)] = kDefaultNodata;
            h680[cell(rng)] = kDefaultNodata;
        }
        auto grid = [&](const std::vector<double> &v) { return RasterGrid(g, kDefaultNodata, v); };
        const spectral::BandSet ms(spectral::SensorKind::MS, {{"blue", {grid(blue), 450}},
                                                               {"green", {grid(green), 560}},
                                                               {"red", {grid(red), 650}},
                                                               {"red_edge", {grid(red_edge), 730}},
                                                               {"nir", {grid(nir), 840}}});
        const spectral::BandSet hs(spectral::SensorKind::HS, {{"500", {grid(h500), 500}},
                                                               {"560", {grid(h560), 560}},
                                                               {"650", {grid(h650), 650}},
                                                               {"680", {grid(h680), 680}},
                                                               {"750", {grid(h750), 750}},
                                                               {"840", {grid(h840), 840}}});
        spectral::IndexParams params;
        params.savi_l = L;

        auto compare = [&](const RasterGrid &got, const std::function<std::optional<double>(std::size_t)> &oracle,
                           const std::string &name) {
            for (std::size_t i = 0; i < n * n; ++i) {
                const auto want = oracle(i);
                ++total;
                if (!want) {
                    c.expect(!got.defined(i), name + " expected nodata at " + std::to_string(i));
                    continue;
                }
                if (!got.defined(i)) {
                    c.expect(false, name + " unexpected nodata at " + std::to_string(i));
                    continue;
                }
                bitwise += std::memcmp(&got.values()[i], &*want, sizeof(double)) == 0;
                c.expect(within_rel(got[i], *want, 1e-12), name + " mismatch at " + std::to_string(i));
            }
        };
        auto nd = [](double v) { return v == kDefaultNodata; };
        auto ms_pair = [&](const std::vector<double> &nv, const std::vector<double> &rv,
                           std::size_t i) -> std::optional<std::pair<double, double>> {
            if (nd(nv[i]) || nd(rv[i])) return std::nullopt;
            return std::pair{nv[i], rv[i]};
        };
        for (int sensor = 0; sensor < 2; ++sensor) {
            const auto &set_ = sensor == 0 ? ms : hs;
            const auto &nv = sensor == 0 ? nir : h840;
            const auto &rv = sensor == 0 ? red : h650;
            const std::string sfx = sensor == 0 ? "_MS" : "_HS";
            auto ndvi = [&](std::size_t i) -> std::optional<double> {
                auto p = ms_pair(nv, rv, i);
                if (!p || p->first + p->second == 0.0) return std::nullopt;
                return (p->first - p->second) / (p->first + p->second);
            };
            compare(spectral::vi_map(set_, spectral::IndexName::NDVI, params).grid, ndvi, "NDVI" + sfx);
            compare(
                spectral::vi_map(set_, spectral::IndexName::SAVI, params).grid,
                [&](std::size_t i) -> std::optional<double> {
                    auto p = ms_pair(nv, rv, i);
                    if (!p || p->first + p->second + L == 0.0) return std::nullopt;
                    return (1.0 + L) * (p->first - p->second) / (p->first + p->second + L);
                },
                "SAVI" + sfx);
            compare(
                spectral::vi_map(set_, spectral::IndexName::kNDVI, params).grid,
                [&](std::size_t i) -> std::optional<double> {
                    auto v = ndvi(i);
                    if (!v) return std::nullopt;
                    return std::tanh(*v * *v);
                },
                "kNDVI" + sfx);
            compare(
                spectral::vi_map(set_, spectral::IndexName::NIRv, params).grid,
                [&](std::size_t i) -> std::optional<double> {
                    auto v = ndvi(i);
                    if (!v) return std::nullopt;
                    return nv[i] * *v;
                },
                "NIRv" + sfx);
        }
        compare(
            spectral::vi_map(ms, spectral::IndexName::PSRI, params).grid,
            [&](std::size_t i) -> std::optional<double> {
                if (nd(red[i]) || nd(green[i]) || nd(nir[i]) || nir[i] == 0.0) return std::nullopt;
                return (red[i] - green[i]) / nir[i];
            },
            "PSRI_MS");
        compare(
            spectral::vi_map(hs, spectral::IndexName::PSRI, params).grid,
            [&](std::size_t i) -> std::optional<double> {
                if (nd(h680[i]) || nd(h500[i]) || nd(h750[i]) || h750[i] == 0.0) return std::nullopt;
                return (h680[i] - h500[i]) / h750[i];
            },
            "PSRI_HS");
    }
    Outcome o;
    o.status = c.failed() ? Outcome::fail : Outcome::pass;
    o.detail = c.summary() + "; " + std::to_string(bitwise) + " of " + std::to_string(total) +
               " pixel values bitwise equal, rest within 1e-12 relative";
    return o;
}

// ---------------------------------------------------------------------------
// 2. Structural oracles.

Outcome structural_oracles() {
    Checker c;
    const auto row_grid = [](std::vector<double> v, double cs) {
        const GridGeometry g{v.size(), 1, cs, 0, 0};
        return RasterGrid(g, kDefaultNodata, std::move(v));
    };
    // Prism: k of N cells raised by h.
    {
        const double h = 2.3, cs = 0.5, a = cs * cs;
        const std::size_t N = 12, k = 5;
        std::vector<double> z(N, 10.0);
        for (std::size_t i = 0; i < k; ++i) z[i * 2] += h;
        const auto r = structural::canopy_volume(row_grid(z, cs), rect(0, 0, N * cs, cs));
        const double lowest = k * h * a;
        const double mean_plane = 2.0 * h * k * (N - k) / N * a;
        c.expect(within_rel(r.volume_lowest_plane, lowest, 1e-9), "prism lowest plane");
        c.expect(within_rel(r.volume_mean_plane, mean_plane, 1e-9), "prism mean plane");
        c.expect(within_rel(r.volume, (lowest + mean_plane) / 2, 1e-9), "prism volume");
    }
    // Wedge: z = s * column over a 7 x 16 block.
    {
        const double s = 0.13, cs = 0.25, a = cs * cs;
        const std::size_t cols = 16, rows = 7;
        std::vector<double> z(cols * rows);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t col = 0; col < cols; ++col) z[r * cols + col] = 100.0 + s * static_cast<double>(col);
        const GridGeometry g{cols, rows, cs, 0, 0};
        const auto res = structural::canopy_volume(RasterGrid(g, kDefaultNodata, z), rect(0, 0, cols * cs, rows * cs));
        double sum_col = 0, sum_dev = 0;
        for (std::size_t col = 0; col < cols; ++col) sum_col += static_cast<double>(col);
        for (std::size_t col = 0; col < cols; ++col) sum_dev += std::fabs(static_cast<double>(col) - 7.5);
        const double lowest = rows * s * sum_col * a;
        const double mean_plane = rows * s * sum_dev * a;
        c.expect(within_rel(res.volume_lowest_plane, lowest, 1e-9), "wedge lowest plane");
        c.expect(within_rel(res.volume_mean_plane, mean_plane, 1e-9), "wedge mean plane");
    }
    // Translation invariance on random surfaces.
    {
        std::mt19937_64 rng(99);
        std::uniform_real_distribution<double> u(0, 3), shift(-1000, 1000);
        const GridGeometry g{24, 18, 0.2, 5, -3};
        const auto plot = PlotGeometry("p", "g", {{5.3, -2.6}, {9.4, -2.1}, {8.8, 0.4}, {5.6, 0.2}});
        for (int rep = 0; rep < 50; ++rep) {
            std::vector<double> z(g.cell_count());
            for (auto &x : z) x = u(rng);
            const auto base = structural::canopy_volume(RasterGrid(g, kDefaultNodata, z), plot);
            const double dz = shift(rng);
            for (auto &x : z) x += dz;
            const auto moved = structural::canopy_volume(RasterGrid(g, kDefaultNodata, z), plot);
            c.expect(within_rel(moved.volume, base.volume, 1e-9), "translation invariance rep " + std::to_string(rep));
        }
    }
    // CHM(s, s) = 0.
    {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> u(-50, 3000);
        std::vector<double> z(40 * 30);
        for (auto &x : z) x = u(rng);
        const RasterGrid s({40, 30, 0.5, 0, 0}, kDefaultNodata, z);
        const auto chm = structural::canopy_height_model(s, s);
        bool zero = true;
        for (double v : chm.grid.values()) zero = zero && v == 0.0;
        c.expect(zero, "CHM(s, s) != 0");
    }
    // Rasterization against brute-force bucketing of 10k points.
    {
        std::mt19937_64 rng(31337);
        std::uniform_real_distribution<double> ux(-12.3, 7.9), uy(250.1, 262.6), uz(30, 45);
        std::vector<geodata::Point3> pts(10000);
        for (auto &p : pts) p = {ux(rng), uy(rng), uz(rng)};
        const double cs = 0.4;
        for (auto agg : {geodata::Aggregator::min, geodata::Aggregator::max, geodata::Aggregator::mean}) {
            const auto grid = geodata::rasterize_elevation(geodata::PointCloud(pts), cs, agg);
            const auto &geo = grid.geometry();
            std::map<std::size_t, std::vector<double>> bucket;
            for (const auto &p : pts) {
                // Half-open cells [origin + i cs, origin + (i + 1) cs).
                std::size_t col = 0, row_up = 0;
                while (geo.origin_x + static_cast<double>(col + 1) * cs <= p.x) ++col;
                while (geo.origin_y + static_cast<double>(row_up + 1) * cs <= p.y) ++row_up;
                bucket[geo.index(col, geo.n_rows - 1 - row_up)].push_back(p.z);
            }
            bool same = true;
            for (std::size_t i = 0; i < geo.cell_count(); ++i) {
                auto it = bucket.find(i);
                if (it == bucket.end()) {
                    same = same && !grid.defined(i);
                    continue;
                }
                auto zs = it->second;
                std::sort(zs.begin(), zs.end());
                double want = 0;
                if (agg == geodata::Aggregator::min) want = zs.front();
                if (agg == geodata::Aggregator::max) want = zs.back();
                if (agg == geodata::Aggregator::mean) {
                    for (double z : zs) want += z;
                    want /= static_cast<double>(zs.size());
                }
                same = same && grid[i] == want;
            }
            c.expect(same, "rasterization differs from brute force");
        }
    }
    return {c.failed() ? Outcome::fail : Outcome::pass, c.summary()};
}

// ---------------------------------------------------------------------------
// 3. Lodging and weed thresholds at every boundary.

Outcome thresholds() {
    using structural::Level;
    Checker c;
    const double eps = 1e-9;
    const double bases[] = {0.0, 0.10, 0.40, 0.50, 0.70, 1.0};
    // Expected labels at base - eps, base, base + eps; "invalid" outside [0, 1].
    const std::vector<std::array<const char *, 3>> pl = {
        {"invalid", "no_lodging", "slight"}, {"slight", "slight", "slight"}, {"slight", "slight", "slight"},
        {"slight", "slight", "severe"},      {"severe", "severe", "severe"}, {"severe", "severe", "invalid"}};
    const std::vector<std::array<const char *, 3>> wl = {
        {"invalid", "no_weeds", "no_weeds"}, {"no_weeds", "no_weeds", "slight"}, {"slight", "slight", "moderate"},
        {"moderate", "moderate", "moderate"}, {"moderate", "moderate", "severe"}, {"severe", "severe", "invalid"}};
    auto label = [](const std::function<Level()> &fn) -> std::string {
        try {
            return structural::to_string(fn());
        } catch (const InvalidInput &) {
            return "invalid";
        }
    };
    for (std::size_t b = 0; b < 6; ++b) {
        const double ratios[] = {bases[b] - eps, bases[b], bases[b] + eps};
        for (std::size_t k = 0; k < 3; ++k) {
            const double r = ratios[k];
            const std::string at = "ratio " + fmt(bases[b]) + (k == 0 ? "-eps" : k == 2 ? "+eps" : "");
            const auto got_pl = label([&] { return structural::lodging_level(r); });
            const auto got_wl = label([&] { return structural::weed_level(r); });
            c.expect(got_pl == pl[b][k], "PL " + at + ": " + got_pl);
            c.expect(got_wl == wl[b][k], "WL " + at + ": " + got_wl);
            const auto got_special = label([&] { return structural::lodging_level(r, true); });
            c.expect(got_special == (std::string(pl[b][k]) == "invalid" ? "invalid" : "special"), "special " + at);
        }
    }
    // The same boundaries reached through masks: k flagged cells out of 100.
    const GridGeometry g{10, 10, 1.0, 0, 0};
    const auto plot = rect(0, 0, 10, 10);
    for (int k : {0, 1, 9, 10, 11, 39, 40, 41, 49, 50, 51, 69, 70, 71, 99, 100}) {
        RasterGrid mask(g, kDefaultNodata, 0.0);
        for (int i = 0; i < k; ++i) mask[static_cast<std::size_t>(i)] = 1.0;
        const auto l = structural::classify_lodging(mask, plot);
        const double r = k / 100.0;
        c.expect(l.ratio == r, "mask lodging ratio " + std::to_string(k));
        const char *want_pl = k == 0 ? "no_lodging" : k <= 50 ? "slight" : "severe";
        c.expect(structural::to_string(l.level) == want_pl, "mask lodging level " + std::to_string(k));
        // A zero-width ring keeps the union equal to the plot.
        const auto w = structural::classify_weed(mask, plot, geodata::buffer_ring(plot, 0.0, 1e-6));
        const char *want_wl = k <= 10 ? "no_weeds" : k <= 40 ? "slight" : k <= 70 ? "moderate" : "severe";
        c.expect(structural::to_string(w.level) == want_wl, "mask weed level " + std::to_string(k));
    }
    return {c.failed() ? Outcome::fail : Outcome::pass, c.summary()};
}

// ---------------------------------------------------------------------------
// 4. Fusion recovers a planted model split across four domain groups.

struct Planted {
    fusion::FeatureMatrix m;
    double theoretical_r2 = 1.0;
};

Planted planted(std::uint64_t seed, bool noisy) {
    using fusion::Domain;
    const std::size_t n = 200;
    struct Col {
        const char *name;
        Domain domain;
        double beta;
        bool binary;
    };
    const std::vector<Col> cols = {
        {"NDVI_MS", Domain::RS, 300, false},       {"CH", Domain::RS, -200, false},
        {"FVC", Domain::RS, 150, false},           {"SPAD", Domain::phenotyping, 250, false},
        {"LAI", Domain::phenotyping, -180, false}, {"t_mean_mean", Domain::weather, 220, false},
        {"precip_total", Domain::weather, 160, false}, {"HQ", Domain::germplasm, 400, true},
        {"DS", Domain::germplasm, -300, true}};
    double signal_var = 0;
    for (const auto &c : cols) signal_var += c.beta * c.beta * (c.binary ? 0.25 : 1.0);
    const double sigma = noisy ? std::sqrt(signal_var / 4.0) : 0.0; // R2 = 0.8

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0, 1);
    std::bernoulli_distribution coin(0.5);
    Planted p;
    auto &m = p.m;
    m.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols.size()));
    m.y.resize(static_cast<Eigen::Index>(n));
    for (const auto &c : cols) {
        m.columns.push_back(c.name);
        m.column_domains.push_back(c.domain);
    }
    for (std::size_t i = 0; i < n; ++i) {
        m.plot_ids.push_back("plot" + std::to_string(i));
        m.germplasm_ids.push_back("v" + std::to_string(i % 17));
        double y = 5000;
        for (std::size_t j = 0; j < cols.size(); ++j) {
            const double x = cols[j].binary ? (coin(rng) ? 1.0 : 0.0) : z(rng);
            m.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x;
            y += cols[j].beta * x;
        }
        m.y(static_cast<Eigen::Index>(i)) = y + sigma * z(rng);
    }
    p.theoretical_r2 = noisy ? 0.8 : 1.0;
    return p;
}

Outcome fusion_recovery() {
    Checker c;
    const std::size_t seeds = 20;
    const double lambda = fusion::kDefaultLambda;
    double worst_clean = 1.0, sum_noisy = 0.0, lo = 1.0, hi = 0.0;
    std::size_t per_seed_within = 0, ablation_ok = 0;
    for (std::uint64_t s = 1; s <= seeds; ++s) {
        const auto clean = planted(s, false);
        const auto loo = fusion::kfold_cv(clean.m, clean.m.rows(), lambda, s);
        worst_clean = std::min(worst_clean, loo.pooled.r2);

        const auto noisy = planted(1000 + s, true);
        const auto all = fusion::kfold_cv(noisy.m, noisy.m.rows(), lambda, s);
        const auto rs = fusion::kfold_cv(noisy.m.select({fusion::Domain::RS}), noisy.m.rows(), lambda, s);
        sum_noisy += all.pooled.r2;
        lo = std::min(lo, all.pooled.r2);
        hi = std::max(hi, all.pooled.r2);
        per_seed_within += std::fabs(all.pooled.r2 - noisy.theoretical_r2) <= 0.05;
        ablation_ok += all.pooled.r2 >= rs.pooled.r2;
    }
    const double mean_noisy = sum_noisy / static_cast<double>(seeds);
    c.expect(worst_clean >= 0.999, "noise-free LOO R2 " + fmt(worst_clean));
    c.expect(std::fabs(mean_noisy - 0.8) <= 0.05, "mean noisy R2 " + fmt(mean_noisy));
    c.expect(ablation_ok >= 19, "ablation held in " + std::to_string(ablation_ok) + "/20");
    std::ostringstream d;
    d << c.summary() << "; noise-free min LOO R2 " << fmt(worst_clean) << "; noisy LOO R2 mean " << fmt(mean_noisy)
      << " (range " << fmt(lo) << ".." << fmt(hi) << ", " << per_seed_within << "/20 seeds within 0.05 of 0.8)"
      << "; all >= RS in " << ablation_ok << "/20";
    return {c.failed() ? Outcome::fail : Outcome::pass, d.str()};
}

// ---------------------------------------------------------------------------
// 5. Preference-optimisation math.

using prefopt::PolicyModel;
using prefopt::Tokens;

Tokens random_tokens(std::mt19937_64 &rng, int vocab, std::size_t len) {
    std::uniform_int_distribution<int> d(0, vocab - 1);
    Tokens t(len);
    for (auto &x : t) x = d(rng);
    return t;
}

void randomize(PolicyModel &p, std::mt19937_64 &rng, const std::vector<Tokens> &prompts, std::size_t length,
               double spread) {
    std::normal_distribution<double> z(0, spread);
    for (const auto &x : prompts) {
        std::vector<Tokens> frontier{{}};
        for (std::size_t t = 0; t < length; ++t) {
            std::vector<Tokens> next;
            for (const auto &prefix : frontier) {
                for (auto &l : p.mutable_logits(p.state(x, prefix))) l = z(rng);
                for (int v = 0; v < p.vocab_size(); ++v) {
                    auto longer = prefix;
                    longer.push_back(v);
                    next.push_back(longer);
                }
            }
            frontier = std::move(next);
        }
    }
}

double rel_err(double a, double b) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-8});
}

Outcome preference_math() {
    Checker c;
    const double h = 1e-5;
    double worst_sft = 0, worst_rm = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(7000 + seed);
        const int V = 3 + static_cast<int>(seed % 3);
        std::vector<prefopt::SftExample> data;
        std::vector<Tokens> prompts;
        for (int i = 0; i < 3; ++i) {
            data.push_back({random_tokens(rng, V, 1), random_tokens(rng, V, 2)});
            prompts.push_back(data.back().prompt);
        }
        PolicyModel p(V, 1);
        randomize(p, rng, prompts, 2, 1.5);
        const auto lg = prefopt::sft_loss_and_grad(p, data);
        for (const auto &[key, row] : lg.gradient)
            for (std::size_t v = 0; v < row.size(); ++v) {
                auto plus = p, minus = p;
                plus.mutable_logits(key)[v] += h;
                minus.mutable_logits(key)[v] -= h;
                const double fd = (prefopt::sft_loss_and_grad(plus, data).loss -
                                   prefopt::sft_loss_and_grad(minus, data).loss) /
                                  (2 * h);
                worst_sft = std::max(worst_sft, rel_err(row[v], fd));
            }

        prefopt::RewardModel rm(V);
        std::normal_distribution<double> z(0, 1);
        for (auto &w : rm.weights()) w = z(rng);
        std::vector<prefopt::PreferenceExample> prefs;
        for (int i = 0; i < 4; ++i)
            prefs.push_back({random_tokens(rng, V, 2), random_tokens(rng, V, 2), random_tokens(rng, V, 3)});
        const auto rg = prefopt::rm_loss_and_grad(rm, prefs);
        for (std::size_t i = 0; i < rm.weights().size(); ++i) {
            if (rg.gradient[i] == 0.0) continue; // untouched weight
            auto plus = rm, minus = rm;
            plus.weights()[i] += h;
            minus.weights()[i] -= h;
            const double fd =
                (prefopt::rm_loss_and_grad(plus, prefs).loss - prefopt::rm_loss_and_grad(minus, prefs).loss) / (2 * h);
            worst_rm = std::max(worst_rm, rel_err(rg.gradient[i], fd));
        }
    }
    c.expect(worst_sft < 1e-5, "SFT gradient rel err " + fmt(worst_sft));
    c.expect(worst_rm < 1e-5, "RM gradient rel err " + fmt(worst_rm));

    // Uniform policy: loss = T ln V.
    for (int V : {2, 5, 11}) {
        std::mt19937_64 rng(static_cast<std::uint64_t>(V));
        for (std::size_t T : {1u, 3u, 6u}) {
            std::vector<prefopt::SftExample> data;
            for (int i = 0; i < 5; ++i) data.push_back({random_tokens(rng, V, 2), random_tokens(rng, V, T)});
            const double loss = prefopt::sft_loss_and_grad(PolicyModel(V, 2), data).loss;
            c.expect(std::fabs(loss - static_cast<double>(T) * std::log(static_cast<double>(V))) <= 1e-10,
                     "uniform SFT loss V=" + std::to_string(V));
        }
    }
    // Zero reward gap: ln 2.
    {
        std::mt19937_64 rng(17);
        prefopt::RewardModel rm(4);
        std::normal_distribution<double> z(0, 3);
        for (auto &w : rm.weights()) w = z(rng);
        const auto y = random_tokens(rng, 4, 3);
        const std::vector<prefopt::PreferenceExample> tie = {{random_tokens(rng, 4, 2), y, y}};
        c.expect(std::fabs(prefopt::rm_loss_and_grad(rm, tie).loss - std::log(2.0)) <= 1e-12, "zero-gap RM loss");
    }
    // pi = pi_ref: the KL penalty vanishes exactly.
    {
        std::mt19937_64 rng(23);
        for (int rep = 0; rep < 20; ++rep) {
            const std::vector<Tokens> prompts = {random_tokens(rng, 4, 1)};
            PolicyModel p(4, 1);
            randomize(p, rng, prompts, 2, 2.0);
            prefopt::RewardModel rm(4);
            std::normal_distribution<double> z(0, 1);
            for (auto &w : rm.weights()) w = z(rng);
            const prefopt::ReferencePolicy ref(p);
            const auto y = random_tokens(rng, 4, 2);
            c.expect(prefopt::combined_reward(rm, p, ref, prompts[0], y, 0.37) == rm.score(prompts[0], y),
                     "combined reward with pi = pi_ref");
        }
    }
    // Bandit: pi(rewarded) > 0.9 within 500 steps for 10/10 seeds.
    std::size_t converged = 0, slowest = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const std::vector<Tokens> prompts = {{0}, {1}};
        const PolicyModel start(4, 0);
        const prefopt::ReferencePolicy ref(start);
        prefopt::RewardModel rm(4);
        rm.weights()[2] = 1.0;
        prefopt::RLHFConfig cfg;
        cfg.seed = seed;
        PolicyModel p = start;
        for (std::size_t it = 0; it < 500; ++it) {
            p = prefopt::rlhf_step(p, ref, rm, prompts, cfg, it).policy;
            bool done = true;
            for (const auto &x : prompts) done = done && p.probabilities(p.state(x, {}))[2] > 0.9;
            if (done) {
                ++converged;
                slowest = std::max(slowest, it + 1);
                break;
            }
        }
    }
    c.expect(converged == 10, "bandit converged for " + std::to_string(converged) + "/10 seeds");
    // beta = 1e3 keeps the exact KL at or below 1.05x its starting value.
    double kl_ratio = 0;
    {
        std::mt19937_64 rng(8);
        const std::vector<Tokens> prompts = {{0}, {1}, {2}};
        const PolicyModel reference(4, 0);
        PolicyModel start(4, 0);
        randomize(start, rng, prompts, 1, 0.5);
        const prefopt::ReferencePolicy ref(reference);
        prefopt::RewardModel rm(4);
        rm.weights()[1] = 1.0;
        auto mean_kl = [&](const PolicyModel &p) {
            double s = 0;
            for (const auto &x : prompts) s += prefopt::exact_kl(p, reference, x, 1);
            return s / static_cast<double>(prompts.size());
        };
        const double initial = mean_kl(start);
        prefopt::RLHFConfig cfg;
        cfg.beta = 1e3;
        cfg.seed = 3;
        PolicyModel p = start;
        for (std::size_t it = 0; it < 200; ++it) {
            p = prefopt::rlhf_step(p, ref, rm, prompts, cfg, it).policy;
            kl_ratio = std::max(kl_ratio, mean_kl(p) / initial);
        }
    }
    c.expect(kl_ratio <= 1.05, "beta=1e3 max KL ratio " + fmt(kl_ratio));

    std::ostringstream d;
    d << c.summary() << "; FD rel err SFT " << fmt(worst_sft) << ", RM " << fmt(worst_rm) << "; bandit " << converged
      << "/10 (slowest " << slowest << " steps); beta=1e3 max KL/initial " << fmt(kl_ratio);
    return {c.failed() ? Outcome::fail : Outcome::pass, d.str()};
}

// ---------------------------------------------------------------------------
// 6. Benchmark scorer on a hand-scored fixture.

Outcome bench_fixture() {
    using bench::Subtask;
    Checker c;
    const std::vector<std::string> models = {"A", "B", "C"};
    std::ostringstream t;
    t << "model_id,task,subtask,question_id,trial_index,answer_numeric,answer_label,judged_correct,reference_value,"
         "reference_label,stability_protocol,text_pass\n";
    // Per model: Yield answers offset from references 4000 + 100 i; PL correct
    // count; HQ correct count; SP passing count; consistency and robustness passes.
    const int pl_ok[] = {20, 17, 11}, hq_ok[] = {18, 14, 10}, sp_ok[] = {20, 19, 10}, cons_ok[] = {20, 15, 5},
              rob_ok[] = {20, 16, 12};
    for (std::size_t m = 0; m < 3; ++m) {
        const auto &id = models[m];
        for (int i = 0; i < 20; ++i) {
            const double ref = 4000 + 100 * i;
            const double off = m == 0 ? 0 : m == 1 ? 50 : (i % 2 == 0 ? 100 : -100);
            t << id << ",phenotyping_estimation,Yield,y" << i << ",0," << ref + off << ",,," << ref << ",,,\n";
            t << id << ",phenotyping_estimation,PL,pl" << i << ",0,," << (i < pl_ok[m] ? "slight" : "severe")
              << ",,,slight,,\n";
            t << id << ",germplasm_screening,HQ,hq" << i << ",0,,," << (i < hq_ok[m] ? "true" : "false") << ",,,,\n";
            // Passing answers include both +-10 % edges; failing ones sit just outside.
            const double sp_pass[] = {150, 165, 135, 151};
            const double sp_fail[] = {166, 134, 200, 100};
            const double sp = i < sp_ok[m] ? sp_pass[i % 4] : sp_fail[i % 4];
            t << id << ",seed_price_query,SP,sp" << i << ",0," << sp << ",,,150,,,\n";
            const double cons = i < cons_ok[m] ? (i % 2 ? 5500 : 4500) : (i % 2 ? 5501 : 4499);
            t << id << ",phenotyping_estimation,Yield,y0," << i + 1 << "," << cons << ",,,5000,,consistency,\n";
            t << id << ",cultivation_recommendation,CT,ct" << i << ",0,,,,,,robustness,"
              << (i < rob_ok[m] ? "true" : "false") << "\n";
        }
    }
    std::istringstream tin(t.str());
    const auto trials = bench::read_trials(tin, "fixture");

    // Ten ballots over A, B, C: totals 25, 19, 16 of 60.
    const int ballots[10][3] = {{3, 2, 1}, {3, 2, 1}, {3, 2, 1}, {3, 1, 2}, {3, 1, 2},
                                {3, 1, 2}, {2, 3, 1}, {2, 1, 3}, {2, 3, 1}, {1, 3, 2}};
    std::ostringstream b;
    b << "test_id,model_id,score\n";
    for (int k = 0; k < 10; ++k)
        for (std::size_t m = 0; m < 3; ++m) b << "r" << k << "," << models[m] << "," << ballots[k][m] << "\n";
    std::istringstream bin(b.str());
    const auto ballot_rows = bench::read_ballots(bin, "ballots");

    const auto report = bench::build_report(trials, ballot_rows);
    auto acc = [&](const std::string &model, Subtask s) -> const bench::AccuracyScore * {
        for (const auto &r : report.accuracy)
            if (r.model_id == model && r.subtask == s) return &r.score;
        return nullptr;
    };
    auto stab = [&](const std::string &model, Subtask s) -> const bench::StabilityScore * {
        for (const auto &r : report.stability)
            if (r.model_id == model && r.subtask == s) return &r.score;
        return nullptr;
    };
    const double sst = 6650000.0; // sum over i of (100 (i - 9.5))^2
    const double sse[] = {0.0, 50000.0, 200000.0};
    const double rmse[] = {0.0, 50.0, 100.0};
    for (std::size_t m = 0; m < 3; ++m) {
        const auto &id = models[m];
        const auto *y = acc(id, Subtask::Yield);
        c.expect(y && y->r2 && *y->r2 == 1.0 - sse[m] / sst, id + " Yield R2");
        c.expect(y && y->rmse && *y->rmse == rmse[m], id + " Yield RMSE");
        const auto *pl = acc(id, Subtask::PL);
        c.expect(pl && pl->proportion == pl_ok[m] / 20.0, id + " PL accuracy");
        const auto *hq = acc(id, Subtask::HQ);
        c.expect(hq && hq->proportion == hq_ok[m] / 20.0, id + " HQ accuracy");
        const auto *sp = acc(id, Subtask::SP);
        c.expect(sp && sp->proportion == sp_ok[m] / 20.0, id + " SP accuracy");
        c.expect(y && y->n_trials == 20 && pl && pl->n_trials == 20, id + " trial counts");
        const auto *sy = stab(id, Subtask::Yield);
        c.expect(sy && sy->n_consistency == 20 && sy->consistency == cons_ok[m] / 20.0 && !sy->robustness,
                 id + " Yield consistency");
        const auto *sc = stab(id, Subtask::CT);
        c.expect(sc && sc->n_robustness == 20 && sc->robustness == rob_ok[m] / 20.0 && !sc->consistency,
                 id + " CT robustness");
    }
    c.expect(report.accuracy.size() == 12 && report.stability.size() == 6, "report row counts");

    const int totals[] = {25, 19, 16};
    double sum = 0;
    if (!report.reasoning) {
        c.expect(false, "reasoning missing");
    } else {
        for (std::size_t m = 0; m < 3; ++m) {
            const auto &rows = *report.reasoning;
            auto it = std::find_if(rows.begin(), rows.end(), [&](const auto &r) { return r.model_id == models[m]; });
            const bool ok = it != rows.end() && it->proportion == totals[m] / 60.0 && it->n_tests == 10;
            c.expect(ok, models[m] + " reasoning proportion");
            if (it != rows.end()) sum += it->proportion;
        }
        c.expect(std::fabs(sum - 1.0) <= 1e-12, "reasoning sum " + fmt(sum));
    }

    // Price boundary cases, both through the benchmark rule and the knowledge base.
    kb::PriceRecord rec;
    rec.price = 150;
    c.expect(bench::numeric_stable(165, 150) && !bench::numeric_stable(166, 150), "stability +-10% at 150");
    c.expect(kb::price_consistent(165, rec) && !kb::price_consistent(166, rec), "price 165 passes, 166 fails");
    c.expect(kb::price_consistent(135, rec) && !kb::price_consistent(134, rec), "price 135 passes, 134 fails");
    return {c.failed() ? Outcome::fail : Outcome::pass, c.summary() + "; reasoning sum - 1 = " + fmt(sum - 1.0)};
}

// ---------------------------------------------------------------------------
// 7. End-to-end CLI run on the bundled scene.

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), {});
}

int run(const std::string &cmd) { return std::system(cmd.c_str()); }

Outcome end_to_end() {
    Checker c;
    const fs::path scene = fs::path(BREEDKIT_DATA_DIR) / "synthetic_scene";
    const fs::path work = BREEDKIT_WORK_DIR;
    fs::remove_all(work);
    fs::create_directories(work);
    const std::string cli = std::string("'") + BREEDKIT_CLI + "'";
    auto q = [](const fs::path &p) { return "'" + p.string() + "'"; };
    const auto s = [&](const char *f) { return q(scene / f); };
    const std::vector<std::pair<std::string, unsigned>> runs = {{"first", 1}, {"second", 1}, {"threads4", 4}};
    for (const auto &[name, threads] : runs) {
        const auto out = work / name;
        const std::string common = cli + " --threads " + std::to_string(threads) + " --out " + q(out);
        const std::string logs = " >>" + q(work / (name + ".log")) + " 2>&1";
        const std::string extract =
            common + " --config " + s("scene.ini") + " extract --plots " + s("plots.csv") + " --ms-blue " +
            s("ms_blue.asc") + " --ms-green " + s("ms_green.asc") + " --ms-red " + s("ms_red.asc") +
            " --ms-red-edge " + s("ms_red_edge.asc") + " --ms-nir " + s("ms_nir.asc") + " --hs-manifest " +
            s("hs_manifest.csv") + " --points " + s("points.xyz") + " --vegetation-mask " + s("vegetation_mask.asc") +
            " --lodging-mask " + s("lodging_mask.asc") + " --weed-mask " + s("weed_mask.asc") + " --head-counts " +
            s("head_counts.csv") + " --ground " + s("ground.csv");
        const std::string fuse = common + " --config " + s("scene.ini") + " fuse --features " + q(out / "features.csv") +
                                 " --weather " + s("weather.csv") + " --germplasm " + s("germplasm.csv");
        const std::string bench = common + " bench --trials " + s("trials.csv") + " --ballots " + s("ballots.csv");
        c.expect(run(extract + logs) == 0, name + " extract exit status");
        c.expect(run(fuse + logs) == 0, name + " fuse exit status");
        c.expect(run(bench + logs) == 0, name + " bench exit status");
    }
    const auto golden = slurp(fs::path(BREEDKIT_DATA_DIR) / "golden" / "features.csv");
    c.expect(!golden.empty() && slurp(work / "first" / "features.csv") == golden, "extract differs from golden");
    for (const char *f : {"features.csv", "cv_metrics.json", "scatter.csv", "report.json", "accuracy.csv",
                          "stability.csv", "reasoning.csv"}) {
        const auto a = slurp(work / "first" / f);
        c.expect(!a.empty(), std::string(f) + " missing");
        c.expect(a == slurp(work / "second" / f), std::string(f) + " differs between runs");
        c.expect(a == slurp(work / "threads4" / f), std::string(f) + " differs across thread counts");
    }
    return {c.failed() ? Outcome::fail : Outcome::pass, c.summary()};
}

// ---------------------------------------------------------------------------
// 8. Optional real-data check.

Outcome real_data() {
    const char *env = std::getenv("BREEDKIT_FIELD_DATA");
    const fs::path dir = env ? fs::path(env) : fs::path(BREEDKIT_DATA_DIR) / "field";
    const auto features = dir / "features.csv";
    if (!fs::exists(features)) return {Outcome::skip, "no field dataset at " + dir.string()};
    try {
        const auto records = fusion::load_plot_features(features);
        const auto weather = fs::exists(dir / "weather.csv") ? fusion::load_weather(dir / "weather.csv")
                                                             : std::vector<fusion::WeatherRecord>{};
        const auto germ = fs::exists(dir / "germplasm.csv") ? kb::load_germplasm(dir / "germplasm.csv")
                                                            : std::vector<kb::GermplasmRecord>{};
        std::set<fusion::Domain> domains = {fusion::Domain::RS, fusion::Domain::phenotyping};
        if (!weather.empty()) domains.insert(fusion::Domain::weather);
        if (!germ.empty()) domains.insert(fusion::Domain::germplasm);
        const auto m = fusion::assemble(records, weather, germ, domains);
        const auto all = fusion::kfold_cv(m, 5, fusion::kDefaultLambda, 1);
        const auto rs = fusion::kfold_cv(m.select({fusion::Domain::RS}), 5, fusion::kDefaultLambda, 1);
        const bool ok = all.pooled.r2 > rs.pooled.r2;
        return {ok ? Outcome::pass : Outcome::fail,
                "all-domain R2 " + fmt(all.pooled.r2) + " vs RS-only " + fmt(rs.pooled.r2)};
    } catch (const Error &e) {
        return {Outcome::fail, e.name() + ": " + e.what()};
    }
}

} // namespace

int main() {
    struct Criterion {
        int id;
        const char *name;
        double limit_s; // 0: no time limit
        bool gating;
        std::function<Outcome()> fn;
    };
    const std::vector<Criterion> criteria = {
        {1, "feature-formula oracles", 10, true, feature_formulas},
        {2, "structural oracles", 0, true, structural_oracles},
        {3, "classification thresholds", 0, true, thresholds},
        {4, "fusion recovery", 0, true, fusion_recovery},
        {5, "preference-optimisation math", 60, true, preference_math},
        {6, "benchmark scorer", 0, true, bench_fixture},
        {7, "end-to-end golden run", 30, true, end_to_end},
        {8, "field data (optional)", 0, false, real_data},
    };
    int failures = 0;
    for (const auto &cr : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = cr.fn();
        } catch (const std::exception &e) {
            o = {Outcome::fail, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (cr.limit_s > 0 && secs >= cr.limit_s && o.status == Outcome::pass) {
            o.status = Outcome::fail;
            o.detail += "; over the " + fmt(cr.limit_s) + " s limit";
        }
        const char *tag = o.status == Outcome::pass ? "PASS" : o.status == Outcome::skip ? "SKIP" : "FAIL";
        std::cout << tag << "  " << cr.id << " " << cr.name << " (" << fmt(secs) << " s): " << o.detail << std::endl;
        if (o.status == Outcome::fail && cr.gating) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
