#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "breedkit/date.hpp"
#include "breedkit/kb.hpp"

namespace breedkit::fusion {

enum class Domain { RS, phenotyping, weather, germplasm };

std::string to_string(Domain d);
Domain domain_from_string(const std::string &name);
// Parse "RS,phenotyping,..." (or "all").
std::set<Domain> parse_domains(const std::string &list);
const std::set<Domain> &all_domains();

// Column order used when writing feature tables.
const std::vector<std::string> &canonical_feature_columns();
// Phenotyping fields are ground measurements; every other scalar feature of
// a plot record is remote sensing.
Domain feature_domain(const std::string &feature);

struct PlotFeatureRecord {
    std::string plot_id;
    std::string germplasm_id;
    std::string site;
    std::optional<Date> date;
    std::map<std::string, double> features;
    std::map<std::string, std::string> labels; // e.g. PL_level, WL_level
    std::optional<double> yield_kg_ha;
};

std::vector<PlotFeatureRecord> read_plot_features(std::istream &in, const std::string &source = "<stream>");
std::vector<PlotFeatureRecord> load_plot_features(const std::filesystem::path &path);
void write_plot_features(std::ostream &out, const std::vector<PlotFeatureRecord> &records);

struct WeatherRecord {
    std::string site;
    Date date;
    double t_mean = 0.0;
    double dew_point = 0.0;
    double precip = 0.0;
    double net_radiation = 0.0;
    double wind_speed = 0.0;
};

std::vector<WeatherRecord> read_weather(std::istream &in, const std::string &source = "<stream>");
std::vector<WeatherRecord> load_weather(const std::filesystem::path &path);

inline constexpr double kStandardMoisture = 0.125;

// kg/ha at 12.5 % moisture from harvested mass (kg), plot area (ha) and
// grain moisture fraction.
double standardize_yield(double raw_mass_kg, double plot_area_ha, double moisture);

struct DroppedRow {
    std::string plot_id;
    std::string reason;
};

struct FeatureMatrix {
    std::vector<std::string> plot_ids;
    std::vector<std::string> germplasm_ids;
    std::vector<std::string> columns;
    std::vector<Domain> column_domains;
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    std::vector<DroppedRow> dropped;

    std::size_t rows() const { return static_cast<std::size_t>(X.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(X.cols()); }
    // Same rows restricted to columns of the given domains.
    FeatureMatrix select(const std::set<Domain> &domains) const;
};

// One row per plot with the selected domain columns. Weather is summarised
// over the plot site's season (means; total precipitation); germplasm traits
// become 0/1 indicators. Rows missing any selected value are dropped and
// listed in `dropped`. Throws EmptyDataset if nothing survives.
FeatureMatrix assemble(const std::vector<PlotFeatureRecord> &records, const std::vector<WeatherRecord> &weather,
                       const std::vector<kb::GermplasmRecord> &germplasm, const std::set<Domain> &domains,
                       const kb::TraitThresholds &thresholds = {});

struct RidgeModel {
    std::vector<std::size_t> column_index; // into the fitted matrix
    std::vector<std::string> columns;
    std::vector<double> column_means;
    std::vector<double> column_stds;
    std::vector<double> weights; // on z-scored columns
    double intercept = 0.0;
    double lambda = 0.0;
    std::vector<std::string> dropped_columns; // zero variance

    double predict(std::span<const double> full_row) const;
    Eigen::VectorXd predict(const Eigen::MatrixXd &X) const;
    // Weights mapped back to the original column units.
    std::vector<double> raw_coefficients() const;
};

inline constexpr double kDefaultLambda = 1.0;

// Solves (Z'Z + lambda I) w = Z'(y - mean y) on z-scored columns. Throws
// SingularSystem when the system cannot be solved (collinear at lambda = 0).
RidgeModel fit_ridge(const FeatureMatrix &m, double lambda = kDefaultLambda);
RidgeModel fit_ridge(const Eigen::MatrixXd &X, const Eigen::VectorXd &y, std::span<const std::size_t> rows,
                     double lambda, const std::vector<std::string> &columns = {});

struct Metrics {
    double r2 = 0.0;
    double rmse = 0.0;
};

double rmse(std::span<const double> y_true, std::span<const double> y_pred);
// Throws UndefinedR2 when y_true has zero variance.
Metrics metrics(std::span<const double> y_true, std::span<const double> y_pred);

// Regional mean wheat yield used to flag optimistic predictions.
inline constexpr double kYieldFlagThreshold = 4230.2;

struct FoldResult {
    std::size_t fold = 0;
    std::size_t n_test = 0;
    std::optional<double> r2; // undefined for single-row or constant folds
    double rmse = 0.0;
};

struct OutOfFoldRow {
    std::string plot_id;
    std::string germplasm_id;
    double measured = 0.0;
    double predicted = 0.0;
    std::size_t fold = 0;
    bool exceeds_threshold = false;
};

struct CvResult {
    std::size_t k = 0;
    double lambda = 0.0;
    std::uint64_t seed = 0;
    std::vector<FoldResult> per_fold;
    Metrics pooled;
    std::vector<OutOfFoldRow> rows; // original row order
    std::vector<std::size_t> fold_of_row;
};

// Seeded fold assignment: a Fisher-Yates shuffle of the rows dealt round-robin
// into k folds.
std::vector<std::size_t> fold_assignment(std::size_t n, std::size_t k, std::uint64_t seed);

// Normalisation is refit on each training split. Folds may run on several
// threads; results do not depend on the thread count.
CvResult kfold_cv(const FeatureMatrix &m, std::size_t k, double lambda, std::uint64_t seed, unsigned threads = 1);

void write_cv_metrics_json(std::ostream &out, const CvResult &cv, const FeatureMatrix &m);
void write_scatter_csv(std::ostream &out, const CvResult &cv);

} // namespace breedkit::fusion
