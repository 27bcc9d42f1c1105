#include "breedkit/fusion.hpp"

#include "breedkit/csv.hpp"
#include "breedkit/error.hpp"
#include "breedkit/format.hpp"
#include "breedkit/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace breedkit::fusion {

std::string to_string(Domain d) {
    switch (d) {
    case Domain::RS: return "RS";
    case Domain::phenotyping: return "phenotyping";
    case Domain::weather: return "weather";
    case Domain::germplasm: return "germplasm";
    }
    return "?";
}

Domain domain_from_string(const std::string &name) {
    for (auto d : all_domains())
        if (to_lower(to_string(d)) == to_lower(name)) return d;
    throw InvalidInput("unknown domain '" + name + "' (expected RS, phenotyping, weather or germplasm)");
}

const std::set<Domain> &all_domains() {
    static const std::set<Domain> all = {Domain::RS, Domain::phenotyping, Domain::weather, Domain::germplasm};
    return all;
}

std::set<Domain> parse_domains(const std::string &list) {
    if (trim(list) == "all") return all_domains();
    std::set<Domain> out;
    std::string_view rest = list;
    while (!rest.empty()) {
        auto comma = rest.find(',');
        auto item = trim(rest.substr(0, comma));
        if (!item.empty()) out.insert(domain_from_string(std::string(item)));
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
    }
    if (out.empty()) throw InvalidInput("no domains selected");
    return out;
}

const std::vector<std::string> &canonical_feature_columns() {
    static const std::vector<std::string> cols = {
        "NDVI_MS", "SAVI_MS", "kNDVI_MS", "NIRv_MS", "PSRI_MS", "NDVI_HS",  "SAVI_HS",    "kNDVI_HS",
        "NIRv_HS", "PSRI_HS", "CH",       "CV",      "FVC",     "PL_ratio", "WL_ratio",   "WH_density",
        "SPAD",    "LAI",     "measured_CH"};
    return cols;
}

namespace {

const char *const kPhenotypingFields[] = {"SPAD", "LAI", "measured_CH"};
const char *const kLabelColumns[] = {"PL_level", "WL_level"};
const char *const kIdentityColumns[] = {"plot_id", "germplasm_id", "site", "date", "yield_kg_ha"};

template <typename T>
bool listed(const T &range, const std::string &name) {
    return std::find(std::begin(range), std::end(range), name) != std::end(range);
}

} // namespace

Domain feature_domain(const std::string &feature) {
    return listed(kPhenotypingFields, feature) ? Domain::phenotyping : Domain::RS;
}

// ---------------------------------------------------------------------------
// Tables

std::vector<PlotFeatureRecord> read_plot_features(std::istream &in, const std::string &source) {
    auto t = csv::Table::read(in, source);
    std::vector<PlotFeatureRecord> out;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        PlotFeatureRecord rec;
        rec.plot_id = std::string(trim(t.cell(r, "plot_id")));
        if (rec.plot_id.empty()) throw ParseError(source + ":" + std::to_string(t.line_of(r)) + ": empty plot_id");
        rec.germplasm_id = t.optional_cell(r, "germplasm_id").value_or("");
        rec.site = t.optional_cell(r, "site").value_or("");
        if (auto d = t.optional_cell(r, "date")) rec.date = Date::parse(*d);
        rec.yield_kg_ha = t.number(r, "yield_kg_ha");
        if (rec.yield_kg_ha && *rec.yield_kg_ha < 0.0)
            throw ParseError(source + ":" + std::to_string(t.line_of(r)) + ": negative yield");
        for (const auto &col : t.header()) {
            if (listed(kIdentityColumns, col)) continue;
            if (listed(kLabelColumns, col)) {
                if (auto v = t.optional_cell(r, col)) rec.labels[col] = *v;
                continue;
            }
            if (auto v = t.number(r, col)) rec.features[col] = *v;
        }
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<PlotFeatureRecord> load_plot_features(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open feature table " + path.string());
    return read_plot_features(in, path.string());
}

void write_plot_features(std::ostream &out, const std::vector<PlotFeatureRecord> &records) {
    std::set<std::string> present;
    for (const auto &r : records) {
        for (const auto &[k, _] : r.features) present.insert(k);
        for (const auto &[k, _] : r.labels) present.insert(k);
    }
    std::vector<std::string> columns;
    for (const auto &c : canonical_feature_columns()) {
        if (present.erase(c)) columns.push_back(c);
        // Level labels sit next to their ratios.
        if (c == "PL_ratio" && present.erase("PL_level")) columns.push_back("PL_level");
        if (c == "WL_ratio" && present.erase("WL_level")) columns.push_back("WL_level");
    }
    for (const auto &c : present) columns.push_back(c);

    std::vector<std::string> header(std::begin(kIdentityColumns), std::end(kIdentityColumns));
    header.insert(header.end(), columns.begin(), columns.end());
    csv::write_row(out, header);
    for (const auto &r : records) {
        std::vector<std::string> row = {r.plot_id, r.germplasm_id, r.site, r.date ? r.date->str() : "",
                                        r.yield_kg_ha ? format_double(*r.yield_kg_ha) : ""};
        for (const auto &c : columns) {
            if (auto f = r.features.find(c); f != r.features.end()) {
                row.push_back(format_double(f->second));
            } else if (auto l = r.labels.find(c); l != r.labels.end()) {
                row.push_back(l->second);
            } else {
                row.emplace_back();
            }
        }
        csv::write_row(out, row);
    }
}

std::vector<WeatherRecord> read_weather(std::istream &in, const std::string &source) {
    auto t = csv::Table::read(in, source);
    std::vector<WeatherRecord> out;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        const auto where = source + ":" + std::to_string(t.line_of(r));
        WeatherRecord w;
        w.site = std::string(trim(t.cell(r, "site")));
        w.date = Date::parse(t.cell(r, "date"));
        w.t_mean = t.required_number(r, "t_mean");
        w.dew_point = t.required_number(r, "dew_point");
        w.precip = t.required_number(r, "precip");
        w.net_radiation = t.required_number(r, "net_radiation");
        w.wind_speed = t.required_number(r, "wind_speed");
        if (w.precip < 0.0) throw ParseError(where + ": negative precipitation");
        if (w.wind_speed < 0.0) throw ParseError(where + ": negative wind speed");
        out.push_back(w);
    }
    return out;
}

std::vector<WeatherRecord> load_weather(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open weather table " + path.string());
    return read_weather(in, path.string());
}

double standardize_yield(double raw_mass_kg, double plot_area_ha, double moisture) {
    if (!(moisture >= 0.0 && moisture < 1.0)) throw InvalidInput("moisture must lie in [0,1), got " + format_double(moisture));
    if (!(plot_area_ha > 0.0)) throw InvalidInput("plot area must be positive, got " + format_double(plot_area_ha));
    if (!(raw_mass_kg >= 0.0)) throw InvalidInput("harvested mass must be non-negative");
    return (raw_mass_kg / plot_area_ha) * (1.0 - moisture) / (1.0 - kStandardMoisture);
}

// ---------------------------------------------------------------------------
// Assembly

FeatureMatrix FeatureMatrix::select(const std::set<Domain> &domains) const {
    FeatureMatrix out;
    out.plot_ids = plot_ids;
    out.germplasm_ids = germplasm_ids;
    out.y = y;
    out.dropped = dropped;
    std::vector<Eigen::Index> keep;
    for (std::size_t j = 0; j < columns.size(); ++j) {
        if (!domains.count(column_domains[j])) continue;
        keep.push_back(static_cast<Eigen::Index>(j));
        out.columns.push_back(columns[j]);
        out.column_domains.push_back(column_domains[j]);
    }
    out.X.resize(X.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) out.X.col(static_cast<Eigen::Index>(j)) = X.col(keep[j]);
    return out;
}

namespace {

const char *const kWeatherColumns[] = {"t_mean_mean", "dew_point_mean", "precip_total", "net_radiation_mean",
                                       "wind_speed_mean"};

std::optional<std::vector<double>> season_summary(const std::vector<WeatherRecord> &weather, const std::string &site,
                                                  std::string &why) {
    std::set<std::string> sites;
    for (const auto &w : weather) sites.insert(w.site);
    std::string use = site;
    if (use.empty()) {
        if (sites.size() != 1) {
            why = sites.empty() ? "no weather records" : "plot has no site and weather covers several sites";
            return std::nullopt;
        }
        use = *sites.begin();
    }
    double t = 0, dew = 0, precip = 0, rad = 0, wind = 0;
    std::size_t n = 0;
    for (const auto &w : weather) {
        if (w.site != use) continue;
        t += w.t_mean;
        dew += w.dew_point;
        precip += w.precip;
        rad += w.net_radiation;
        wind += w.wind_speed;
        ++n;
    }
    if (n == 0) {
        why = "no weather records for site '" + use + "'";
        return std::nullopt;
    }
    const double dn = static_cast<double>(n);
    return std::vector<double>{t / dn, dew / dn, precip, rad / dn, wind / dn};
}

} // namespace

FeatureMatrix assemble(const std::vector<PlotFeatureRecord> &records, const std::vector<WeatherRecord> &weather,
                       const std::vector<kb::GermplasmRecord> &germplasm, const std::set<Domain> &domains,
                       const kb::TraitThresholds &thresholds) {
    if (domains.empty()) throw InvalidInput("no domains selected");
    {
        std::set<std::string> ids;
        for (const auto &r : records)
            if (!ids.insert(r.plot_id).second)
                throw InvalidInput("plot '" + r.plot_id + "' appears more than once; assemble expects one record per plot");
    }

    // Columns: union of plot-record features by domain, then weather and traits.
    std::vector<std::string> columns;
    std::vector<Domain> column_domains;
    std::set<std::string> record_features;
    for (const auto &r : records)
        for (const auto &[name, _] : r.features) record_features.insert(name);
    std::vector<std::string> ordered;
    for (const auto &c : canonical_feature_columns())
        if (record_features.erase(c)) ordered.push_back(c);
    ordered.insert(ordered.end(), record_features.begin(), record_features.end());
    for (auto d : {Domain::RS, Domain::phenotyping}) {
        if (!domains.count(d)) continue;
        for (const auto &c : ordered)
            if (feature_domain(c) == d) {
                columns.push_back(c);
                column_domains.push_back(d);
            }
    }
    const std::size_t record_columns = columns.size();
    if (domains.count(Domain::weather))
        for (const char *c : kWeatherColumns) {
            columns.emplace_back(c);
            column_domains.push_back(Domain::weather);
        }
    const std::vector<kb::Trait> traits = {kb::Trait::HQ, kb::Trait::DS, kb::Trait::DR, kb::Trait::MP, kb::Trait::AM};
    if (domains.count(Domain::germplasm))
        for (auto t : traits) {
            columns.push_back(kb::to_string(t));
            column_domains.push_back(Domain::germplasm);
        }

    std::map<std::string, const kb::GermplasmRecord *> by_variety;
    for (const auto &g : germplasm) by_variety[g.variety_name] = &g;

    FeatureMatrix m;
    m.columns = columns;
    m.column_domains = column_domains;
    std::vector<std::vector<double>> rows;
    std::vector<double> ys;
    for (const auto &r : records) {
        std::vector<double> row;
        row.reserve(columns.size());
        std::string why;
        if (!r.yield_kg_ha) why = "missing yield";
        for (std::size_t j = 0; j < record_columns && why.empty(); ++j) {
            auto it = r.features.find(columns[j]);
            if (it == r.features.end() || !std::isfinite(it->second)) {
                why = "missing " + columns[j];
            } else {
                row.push_back(it->second);
            }
        }
        if (why.empty() && domains.count(Domain::weather)) {
            if (auto s = season_summary(weather, r.site, why)) row.insert(row.end(), s->begin(), s->end());
        }
        if (why.empty() && domains.count(Domain::germplasm)) {
            auto it = by_variety.find(r.germplasm_id);
            if (it == by_variety.end()) {
                why = "no germplasm record for '" + r.germplasm_id + "'";
            } else {
                for (auto t : traits) row.push_back(kb::has_trait(*it->second, t, thresholds) ? 1.0 : 0.0);
            }
        }
        if (!why.empty()) {
            m.dropped.push_back({r.plot_id, why});
            continue;
        }
        m.plot_ids.push_back(r.plot_id);
        m.germplasm_ids.push_back(r.germplasm_id);
        rows.push_back(std::move(row));
        ys.push_back(*r.yield_kg_ha);
    }
    if (rows.empty()) throw EmptyDataset("no plot survived assembly (" + std::to_string(m.dropped.size()) + " dropped)");
    m.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(columns.size()));
    m.y.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < columns.size(); ++j)
            m.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        m.y(static_cast<Eigen::Index>(i)) = ys[i];
    }
    return m;
}

// ---------------------------------------------------------------------------
// Ridge

double RidgeModel::predict(std::span<const double> full_row) const {
    double p = intercept;
    for (std::size_t j = 0; j < weights.size(); ++j)
        p += weights[j] * (full_row[column_index[j]] - column_means[j]) / column_stds[j];
    return p;
}

Eigen::VectorXd RidgeModel::predict(const Eigen::MatrixXd &X) const {
    Eigen::VectorXd out(X.rows());
    std::vector<double> row(static_cast<std::size_t>(X.cols()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (Eigen::Index j = 0; j < X.cols(); ++j) row[static_cast<std::size_t>(j)] = X(i, j);
        out(i) = predict(row);
    }
    return out;
}

std::vector<double> RidgeModel::raw_coefficients() const {
    std::vector<double> out(weights.size());
    for (std::size_t j = 0; j < weights.size(); ++j) out[j] = weights[j] / column_stds[j];
    return out;
}

RidgeModel fit_ridge(const Eigen::MatrixXd &X, const Eigen::VectorXd &y, std::span<const std::size_t> rows,
                     double lambda, const std::vector<std::string> &columns) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidInput("lambda must be a finite value >= 0");
    if (rows.empty()) throw EmptyDataset("ridge fit on zero rows");
    const double n = static_cast<double>(rows.size());
    RidgeModel model;
    model.lambda = lambda;

    double y_sum = 0.0;
    for (auto i : rows) y_sum += y(static_cast<Eigen::Index>(i));
    model.intercept = y_sum / n;

    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        double sum = 0.0;
        for (auto i : rows) sum += X(static_cast<Eigen::Index>(i), j);
        const double mean = sum / n;
        double ss = 0.0;
        for (auto i : rows) {
            const double d = X(static_cast<Eigen::Index>(i), j) - mean;
            ss += d * d;
        }
        const double sd = std::sqrt(ss / n);
        const std::string name = static_cast<std::size_t>(j) < columns.size() ? columns[static_cast<std::size_t>(j)]
                                                                               : "x" + std::to_string(j);
        if (!(sd > 1e-12 * std::max(1.0, std::fabs(mean)))) {
            model.dropped_columns.push_back(name);
            continue;
        }
        model.column_index.push_back(static_cast<std::size_t>(j));
        model.columns.push_back(name);
        model.column_means.push_back(mean);
        model.column_stds.push_back(sd);
    }
    const auto p = static_cast<Eigen::Index>(model.column_index.size());
    if (p == 0) return model;

    Eigen::MatrixXd Z(static_cast<Eigen::Index>(rows.size()), p);
    Eigen::VectorXd yc(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto i = static_cast<Eigen::Index>(rows[r]);
        for (Eigen::Index j = 0; j < p; ++j) {
            const auto sj = static_cast<std::size_t>(j);
            Z(static_cast<Eigen::Index>(r), j) =
                (X(i, static_cast<Eigen::Index>(model.column_index[sj])) - model.column_means[sj]) / model.column_stds[sj];
        }
        yc(static_cast<Eigen::Index>(r)) = y(i) - model.intercept;
    }
    Eigen::MatrixXd A = Z.transpose() * Z;
    A.diagonal().array() += lambda;
    const Eigen::VectorXd b = Z.transpose() * yc;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-13)
        throw SingularSystem("normal equations are singular (collinear columns at lambda=" + format_double(lambda) +
                             "); use lambda > 0");
    const Eigen::VectorXd w = llt.solve(b);
    model.weights.assign(w.data(), w.data() + w.size());
    return model;
}

RidgeModel fit_ridge(const FeatureMatrix &m, double lambda) {
    std::vector<std::size_t> rows(m.rows());
    std::iota(rows.begin(), rows.end(), 0);
    return fit_ridge(m.X, m.y, rows, lambda, m.columns);
}

// ---------------------------------------------------------------------------
// Metrics

namespace {
void check_lengths(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || a.size() != b.size())
        throw InvalidInput("metrics need equal, non-zero lengths (got " + std::to_string(a.size()) + " and " +
                           std::to_string(b.size()) + ")");
}
} // namespace

double rmse(std::span<const double> y_true, std::span<const double> y_pred) {
    check_lengths(y_true, y_pred);
    double ss = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const double d = y_true[i] - y_pred[i];
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(y_true.size()));
}

Metrics metrics(std::span<const double> y_true, std::span<const double> y_pred) {
    check_lengths(y_true, y_pred);
    double sum = 0.0;
    for (double v : y_true) sum += v;
    const double mean = sum / static_cast<double>(y_true.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const double r = y_true[i] - y_pred[i];
        const double t = y_true[i] - mean;
        ss_res += r * r;
        ss_tot += t * t;
    }
    if (ss_tot == 0.0) throw UndefinedR2("R² is undefined: measured values have zero variance");
    return {1.0 - ss_res / ss_tot, std::sqrt(ss_res / static_cast<double>(y_true.size()))};
}

// ---------------------------------------------------------------------------
// Cross-validation

namespace {

// Uniform integer in [0, bound) by rejection; std distributions are not
// specified bit-for-bit across standard libraries.
std::uint64_t bounded(std::mt19937_64 &rng, std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % bound;
}

} // namespace

std::vector<std::size_t> fold_assignment(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw InvalidInput("k-fold needs k >= 2");
    if (k > n) throw InvalidInput("k=" + std::to_string(k) + " exceeds the " + std::to_string(n) + " available rows");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[bounded(rng, i)]);
    std::vector<std::size_t> fold(n);
    for (std::size_t i = 0; i < n; ++i) fold[perm[i]] = i % k;
    return fold;
}

CvResult kfold_cv(const FeatureMatrix &m, std::size_t k, double lambda, std::uint64_t seed, unsigned threads) {
    const std::size_t n = m.rows();
    CvResult cv;
    cv.k = k;
    cv.lambda = lambda;
    cv.seed = seed;
    cv.fold_of_row = fold_assignment(n, k, seed);
    std::vector<double> predicted(n, 0.0);
    parallel_for(k, threads, [&](std::size_t f) {
        std::vector<std::size_t> train, test;
        for (std::size_t i = 0; i < n; ++i) (cv.fold_of_row[i] == f ? test : train).push_back(i);
        auto model = fit_ridge(m.X, m.y, train, lambda, m.columns);
        std::vector<double> row(m.cols());
        for (auto i : test) {
            for (std::size_t j = 0; j < m.cols(); ++j)
                row[j] = m.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            predicted[i] = model.predict(row);
        }
    });

    for (std::size_t f = 0; f < k; ++f) {
        std::vector<double> yt, yp;
        for (std::size_t i = 0; i < n; ++i)
            if (cv.fold_of_row[i] == f) {
                yt.push_back(m.y(static_cast<Eigen::Index>(i)));
                yp.push_back(predicted[i]);
            }
        FoldResult fr;
        fr.fold = f;
        fr.n_test = yt.size();
        fr.rmse = rmse(yt, yp);
        try {
            fr.r2 = metrics(yt, yp).r2;
        } catch (const UndefinedR2 &) {
        }
        cv.per_fold.push_back(fr);
    }
    std::vector<double> measured(n);
    for (std::size_t i = 0; i < n; ++i) {
        measured[i] = m.y(static_cast<Eigen::Index>(i));
        cv.rows.push_back({m.plot_ids.at(i), m.germplasm_ids.at(i), measured[i], predicted[i], cv.fold_of_row[i],
                           predicted[i] > kYieldFlagThreshold});
    }
    cv.pooled = metrics(measured, predicted);
    return cv;
}

void write_cv_metrics_json(std::ostream &out, const CvResult &cv, const FeatureMatrix &m) {
    using nlohmann::ordered_json;
    ordered_json j;
    ordered_json folds = ordered_json::array();
    for (const auto &f : cv.per_fold) {
        ordered_json fj{{"fold", f.fold}, {"n", f.n_test}};
        fj["r2"] = f.r2 ? ordered_json(*f.r2) : ordered_json(nullptr);
        fj["rmse"] = f.rmse;
        folds.push_back(fj);
    }
    j["per_fold"] = folds;
    j["pooled"] = {{"r2", cv.pooled.r2}, {"rmse", cv.pooled.rmse}};
    j["k"] = cv.k;
    j["lambda"] = cv.lambda;
    j["seed"] = cv.seed;
    j["n_rows"] = m.rows();
    std::set<std::string> domains;
    for (auto d : m.column_domains) domains.insert(to_string(d));
    j["domains"] = domains;
    j["columns"] = m.columns;
    ordered_json dropped = ordered_json::array();
    for (const auto &d : m.dropped) dropped.push_back({{"plot_id", d.plot_id}, {"reason", d.reason}});
    j["dropped_rows"] = dropped;
    std::size_t flagged = 0;
    for (const auto &r : cv.rows) flagged += r.exceeds_threshold;
    j["predictions_exceeding_4230_2"] = flagged;
    out << j.dump(2) << '\n';
}

void write_scatter_csv(std::ostream &out, const CvResult &cv) {
    csv::write_row(out, {"plot_id", "germplasm_id", "measured", "predicted", "exceeds_4230_2"});
    for (const auto &r : cv.rows)
        csv::write_row(out, {r.plot_id, r.germplasm_id, format_double(r.measured), format_double(r.predicted),
                             r.exceeds_threshold ? "1" : "0"});
}

} // namespace breedkit::fusion
