#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "breedkit/error.hpp"
#include "breedkit/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

using namespace breedkit;
using namespace breedkit::fusion;

namespace {

// Dense Gaussian elimination with partial pivoting, independent of Eigen.
std::vector<double> gauss_solve(std::vector<std::vector<double>> a, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
        std::swap(a[c], a[piv]);
        std::swap(b[c], b[piv]);
        for (std::size_t r = c + 1; r < n; ++r) {
            const double f = a[r][c] / a[c][c];
            for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
            b[r] -= f * b[c];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
        x[i] = s / a[i][i];
    }
    return x;
}

// Ridge on z-scored columns (population std) solved by elimination.
std::vector<double> oracle_ridge(const std::vector<std::vector<double>> &x, const std::vector<double> &y, double lambda) {
    const std::size_t n = x.size(), p = x[0].size();
    std::vector<double> mean(p, 0), sd(p, 0);
    for (std::size_t j = 0; j < p; ++j) {
        for (std::size_t i = 0; i < n; ++i) mean[j] += x[i][j];
        mean[j] /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) sd[j] += (x[i][j] - mean[j]) * (x[i][j] - mean[j]);
        sd[j] = std::sqrt(sd[j] / static_cast<double>(n));
    }
    double ym = 0;
    for (double v : y) ym += v;
    ym /= static_cast<double>(n);
    std::vector<std::vector<double>> a(p, std::vector<double>(p, 0));
    std::vector<double> b(p, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) {
            const double zj = (x[i][j] - mean[j]) / sd[j];
            b[j] += zj * (y[i] - ym);
            for (std::size_t k = 0; k < p; ++k) a[j][k] += zj * (x[i][k] - mean[k]) / sd[k];
        }
    for (std::size_t j = 0; j < p; ++j) a[j][j] += lambda;
    return gauss_solve(a, b);
}

FeatureMatrix planted(std::size_t n, std::size_t p, double noise, std::uint64_t seed,
                      std::vector<double> *coef_out = nullptr) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0, 1);
    std::vector<double> coef(p);
    for (std::size_t j = 0; j < p; ++j) coef[j] = 100.0 * static_cast<double>(j + 1) * (j % 2 ? -1 : 1);
    FeatureMatrix m;
    m.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    m.y.resize(static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < p; ++j) {
        m.columns.push_back("f" + std::to_string(j));
        m.column_domains.push_back(Domain::RS);
    }
    for (std::size_t i = 0; i < n; ++i) {
        double v = 3000;
        for (std::size_t j = 0; j < p; ++j) {
            const double x = z(rng);
            m.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x;
            v += coef[j] * x;
        }
        m.y(static_cast<Eigen::Index>(i)) = v + noise * z(rng);
        m.plot_ids.push_back("P" + std::to_string(i));
        m.germplasm_ids.push_back("G");
    }
    if (coef_out) *coef_out = coef;
    return m;
}

double train_mse(const FeatureMatrix &m, double lambda) {
    auto model = fit_ridge(m, lambda);
    Eigen::VectorXd r = m.y - model.predict(m.X);
    return r.squaredNorm() / static_cast<double>(m.rows());
}

const char *kGermplasm = "variety_name,crude_protein,sedimentation_value,grain_hardness,stripe_rust,leaf_rust,"
                         "powdery_mildew,drought,cold,maturity,plant_height\n"
                         "Zhoumai 22,14.6,42,hard,R,MR,S,2,1,231,78\n"
                         "Nongda 3486,13.1,31,mixed,S,S,MS,3,1,245,85\n";

const char *kWeather = "site,date,t_mean,dew_point,precip,net_radiation,wind_speed\n"
                       "A,2024-04-01,10,2,5,100,1\n"
                       "A,2024-04-02,14,4,0,140,3\n"
                       "B,2024-04-01,20,6,1,200,2\n";

} // namespace

TEST_CASE("yield standardisation") {
    CHECK(standardize_yield(100, 0.02, 0.2) == doctest::Approx(100 / 0.02 * 0.8 / 0.875).epsilon(1e-12));
    CHECK(standardize_yield(100, 0.02, 0.2) == doctest::Approx(4571.43).epsilon(1e-6));
    CHECK(standardize_yield(100, 0.02, 0.125) == doctest::Approx(5000).epsilon(1e-15));
    CHECK_THROWS_AS(standardize_yield(100, 0.02, 1.0), InvalidInput);
    CHECK_THROWS_AS(standardize_yield(100, 0.0, 0.1), InvalidInput);
    CHECK_THROWS_AS(standardize_yield(-1, 0.02, 0.1), InvalidInput);
}

TEST_CASE("domain lists") {
    CHECK(parse_domains("all") == all_domains());
    CHECK(parse_domains("RS, weather") == std::set<Domain>{Domain::RS, Domain::weather});
    CHECK(parse_domains("rs") == std::set<Domain>{Domain::RS});
    CHECK_THROWS_AS(parse_domains("RS,soil"), InvalidInput);
    CHECK_THROWS_AS(parse_domains(" , "), InvalidInput);
    CHECK(feature_domain("LAI") == Domain::phenotyping);
    CHECK(feature_domain("NDVI_MS") == Domain::RS);
}

TEST_CASE("feature table round trip") {
    std::vector<PlotFeatureRecord> recs(2);
    recs[0].plot_id = "P1";
    recs[0].germplasm_id = "Zhoumai 22";
    recs[0].site = "A";
    recs[0].date = Date::parse("2024-05-10");
    recs[0].features = {{"NDVI_MS", 0.1 + 0.2}, {"LAI", 3.5}, {"PL_ratio", 0.25}};
    recs[0].labels = {{"PL_level", "slight"}};
    recs[0].yield_kg_ha = 5123.25;
    recs[1].plot_id = "P, 2";
    recs[1].features = {{"NDVI_MS", 0.7}};
    std::ostringstream out;
    write_plot_features(out, recs);
    std::istringstream in(out.str());
    auto back = read_plot_features(in);
    REQUIRE(back.size() == 2);
    CHECK(back[0].features == recs[0].features);
    CHECK(back[0].labels == recs[0].labels);
    CHECK(back[0].yield_kg_ha == recs[0].yield_kg_ha);
    CHECK(back[0].date == recs[0].date);
    CHECK(back[1].plot_id == "P, 2");
    CHECK_FALSE(back[1].yield_kg_ha);
    CHECK(back[1].features.size() == 1);
    // level label sits right after its ratio
    CHECK(out.str().find("PL_ratio,PL_level") != std::string::npos);
}

TEST_CASE("assemble builds one row per plot") {
    std::istringstream gin(kGermplasm), win(kWeather);
    auto germ = kb::read_germplasm(gin);
    auto weather = read_weather(win);

    std::vector<PlotFeatureRecord> recs(3);
    recs[0] = {"P1", "Zhoumai 22", "A", std::nullopt, {{"NDVI_MS", 0.8}, {"CH", 0.7}, {"LAI", 4.0}}, {}, 6000.0};
    recs[1] = {"P2", "Nongda 3486", "B", std::nullopt, {{"NDVI_MS", 0.6}, {"CH", 0.5}, {"LAI", 3.0}}, {}, 5000.0};
    recs[2] = {"P3", "Nongda 3486", "B", std::nullopt, {{"NDVI_MS", 0.5}, {"CH", 0.4}}, {}, 4000.0};

    auto m = assemble(recs, weather, germ, all_domains());
    CHECK(m.columns == std::vector<std::string>{"NDVI_MS", "CH", "LAI", "t_mean_mean", "dew_point_mean", "precip_total",
                                                "net_radiation_mean", "wind_speed_mean", "HQ", "DS", "DR", "MP", "AM"});
    REQUIRE(m.rows() == 2);
    REQUIRE(m.dropped.size() == 1);
    CHECK(m.dropped[0].plot_id == "P3");
    CHECK(m.dropped[0].reason == "missing LAI");

    const std::vector<double> p1 = {0.8, 0.7, 4.0, 12, 3, 5, 120, 2};
    const std::vector<double> p2 = {0.6, 0.5, 3.0, 20, 6, 1, 200, 2};
    for (std::size_t j = 0; j < p1.size(); ++j) {
        CHECK(m.X(0, static_cast<Eigen::Index>(j)) == p1[j]);
        CHECK(m.X(1, static_cast<Eigen::Index>(j)) == p2[j]);
    }
    const std::vector<kb::Trait> traits = {kb::Trait::HQ, kb::Trait::DS, kb::Trait::DR, kb::Trait::MP, kb::Trait::AM};
    for (std::size_t t = 0; t < traits.size(); ++t) {
        CHECK(m.X(0, static_cast<Eigen::Index>(8 + t)) == (kb::has_trait(germ[0], traits[t]) ? 1.0 : 0.0));
        CHECK(m.X(1, static_cast<Eigen::Index>(8 + t)) == (kb::has_trait(germ[1], traits[t]) ? 1.0 : 0.0));
    }
    CHECK(m.X(0, 8) == 1.0); // Zhoumai 22 is high quality
    CHECK(m.X(1, 8) == 0.0);
    CHECK(m.y(0) == 6000.0);
    CHECK(m.y(1) == 5000.0);

    // RS only: phenotyping, weather and trait columns are absent and P3 survives
    auto rs = assemble(recs, weather, germ, {Domain::RS});
    CHECK(rs.columns == std::vector<std::string>{"NDVI_MS", "CH"});
    CHECK(rs.rows() == 3);
    for (auto d : rs.column_domains) CHECK(d == Domain::RS);
    auto sel = m.select({Domain::RS});
    CHECK(sel.columns == rs.columns);
    CHECK(sel.X == m.X.leftCols(2));

    auto missing_yield = recs;
    missing_yield[0].yield_kg_ha.reset();
    auto my = assemble(missing_yield, weather, germ, {Domain::RS});
    CHECK(my.rows() == 2);
    CHECK(my.dropped[0].reason == "missing yield");

    auto unknown = recs;
    unknown[0].germplasm_id = "Nobody";
    CHECK(assemble(unknown, weather, germ, {Domain::germplasm}).dropped[0].plot_id == "P1");
    auto nosite = recs;
    nosite[0].site = "Z";
    CHECK(assemble(nosite, weather, germ, {Domain::weather}).dropped[0].plot_id == "P1");

    std::vector<PlotFeatureRecord> none = {recs[2]};
    none[0].yield_kg_ha.reset();
    CHECK_THROWS_AS(assemble(none, weather, germ, {Domain::RS}), EmptyDataset);
    auto dup = recs;
    dup[1].plot_id = "P1";
    CHECK_THROWS_AS(assemble(dup, weather, germ, {Domain::RS}), InvalidInput);
}

TEST_CASE("ridge recovers planted coefficients at lambda 0") {
    std::vector<double> coef;
    auto m = planted(60, 4, 0.0, 5, &coef);
    auto model = fit_ridge(m, 0.0);
    auto raw = model.raw_coefficients();
    REQUIRE(raw.size() == coef.size());
    for (std::size_t j = 0; j < coef.size(); ++j) CHECK(std::fabs(raw[j] - coef[j]) < 1e-8);
}

TEST_CASE("heavy shrinkage drives weights to zero") {
    // yields in t/ha; w is bounded by |Z'(y - mean y)| / lambda
    auto m = planted(40, 3, 5.0, 6);
    m.y /= 1000.0;
    auto model = fit_ridge(m, 1e9);
    for (double w : model.weights) CHECK(std::fabs(w) < 1e-6);
    CHECK(model.intercept == doctest::Approx(m.y.mean()).epsilon(1e-12));
    auto p = model.predict(m.X);
    for (Eigen::Index i = 0; i < p.size(); ++i) CHECK(std::fabs(p(i) - m.y.mean()) < 1e-5);
}

TEST_CASE("ridge agrees with an elimination oracle") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-3, 3);
    for (double lambda : {0.0, 0.5, 3.0}) {
        std::vector<std::vector<double>> x(5, std::vector<double>(3));
        std::vector<double> y(5);
        FeatureMatrix m;
        m.X.resize(5, 3);
        m.y.resize(5);
        for (int i = 0; i < 5; ++i) {
            for (int j = 0; j < 3; ++j) m.X(i, j) = x[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = u(rng);
            m.y(i) = y[static_cast<std::size_t>(i)] = 1000 * u(rng);
        }
        auto expect = oracle_ridge(x, y, lambda);
        auto model = fit_ridge(m, lambda);
        REQUIRE(model.weights.size() == 3);
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(std::fabs(model.weights[j] - expect[j]) <= 1e-8 * std::max(1.0, std::fabs(expect[j])));
    }
}

TEST_CASE("collinear columns at lambda 0 are singular") {
    auto m = planted(20, 2, 1.0, 7);
    m.X.conservativeResize(Eigen::NoChange, 3);
    m.X.col(2) = 2.0 * m.X.col(0);
    m.columns.push_back("twice_f0");
    m.column_domains.push_back(Domain::RS);
    CHECK_THROWS_AS(fit_ridge(m, 0.0), SingularSystem);
    CHECK_NOTHROW(fit_ridge(m, 1.0));
}

TEST_CASE("training error grows with lambda") {
    auto m = planted(50, 5, 50.0, 8);
    double prev = train_mse(m, 0.0);
    for (double lambda : {0.01, 0.1, 1.0, 10.0, 100.0}) {
        const double cur = train_mse(m, lambda);
        CHECK(cur >= prev - 1e-9 * prev);
        prev = cur;
    }
}

TEST_CASE("predictions do not depend on column units") {
    auto m = planted(30, 3, 20.0, 10);
    auto base = fit_ridge(m, 2.0).predict(m.X);
    auto scaled = m;
    scaled.X.col(1) *= 10.0;
    scaled.X.col(2).array() += 1000.0;
    auto moved = fit_ridge(scaled, 2.0).predict(scaled.X);
    for (Eigen::Index i = 0; i < base.size(); ++i) CHECK(std::fabs(base(i) - moved(i)) < 1e-8 * std::fabs(base(i)));
}

TEST_CASE("zero-variance columns are dropped") {
    auto m = planted(20, 2, 1.0, 11);
    m.X.conservativeResize(Eigen::NoChange, 3);
    m.X.col(2).setConstant(7.5);
    m.columns.push_back("const");
    auto model = fit_ridge(m, 0.0);
    CHECK(model.dropped_columns == std::vector<std::string>{"const"});
    CHECK(model.columns.size() == 2);
    auto only = planted(20, 2, 1.0, 11);
    auto a = model.predict(m.X), b = fit_ridge(only, 0.0).predict(only.X);
    for (Eigen::Index i = 0; i < a.size(); ++i) CHECK(a(i) == b(i));
}

TEST_CASE("metrics") {
    std::vector<double> y = {1, 2, 3}, yhat = {1, 2, 4};
    auto s = metrics(y, yhat);
    CHECK(s.rmse == doctest::Approx(std::sqrt(1.0 / 3.0)).epsilon(1e-15));
    CHECK(s.r2 == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(metrics(y, y).r2 == 1.0);
    CHECK(metrics(y, y).rmse == 0.0);
    std::vector<double> mean(3, 2.0);
    CHECK(metrics(y, mean).r2 == 0.0);
    std::vector<double> flat = {5, 5, 5};
    CHECK_THROWS_AS(metrics(flat, y), UndefinedR2);
    CHECK(rmse(flat, flat) == 0.0);
    CHECK_THROWS_AS(metrics(y, std::vector<double>{1, 2}), InvalidInput);
    CHECK_THROWS_AS(rmse(std::vector<double>{}, std::vector<double>{}), InvalidInput);
}

TEST_CASE("fold assignment") {
    for (std::size_t n : {5u, 10u, 23u})
        for (std::size_t k = 2; k <= n; k += 3) {
            auto f = fold_assignment(n, k, 42);
            std::vector<std::size_t> size(k, 0);
            for (auto x : f) ++size.at(x);
            for (auto s : size) {
                CHECK(s >= n / k);
                CHECK(s <= (n + k - 1) / k);
            }
        }
    CHECK(fold_assignment(20, 5, 1) == fold_assignment(20, 5, 1));
    CHECK(fold_assignment(20, 5, 1) != fold_assignment(20, 5, 2));
    CHECK_THROWS_AS(fold_assignment(4, 5, 1), InvalidInput);
    CHECK_THROWS_AS(fold_assignment(4, 1, 1), InvalidInput);
}

TEST_CASE("cross-validation") {
    SUBCASE("leave-one-out on planted rows") {
        auto m = planted(6, 2, 0.0, 12);
        auto cv = kfold_cv(m, 6, 0.0, 3);
        CHECK(cv.pooled.r2 > 0.99);
        for (const auto &f : cv.per_fold) {
            CHECK(f.n_test == 1);
            CHECK_FALSE(f.r2);
        }
    }
    SUBCASE("seeded and thread independent") {
        auto m = planted(40, 4, 30.0, 13);
        auto a = kfold_cv(m, 5, 1.0, 99, 1);
        auto b = kfold_cv(m, 5, 1.0, 99, 1);
        auto c = kfold_cv(m, 5, 1.0, 99, 4);
        for (std::size_t i = 0; i < m.rows(); ++i) {
            CHECK(a.rows[i].predicted == b.rows[i].predicted);
            CHECK(a.rows[i].predicted == c.rows[i].predicted);
        }
        CHECK(a.pooled.r2 == c.pooled.r2);
        std::ostringstream ja, jc, sa, sc;
        write_cv_metrics_json(ja, a, m);
        write_cv_metrics_json(jc, c, m);
        write_scatter_csv(sa, a);
        write_scatter_csv(sc, c);
        CHECK(ja.str() == jc.str());
        CHECK(sa.str() == sc.str());
        CHECK_THROWS_AS(kfold_cv(m, 41, 1.0, 1), InvalidInput);
    }
    SUBCASE("held-out rows never see their own yield") {
        auto m = planted(20, 3, 10.0, 14);
        auto base = kfold_cv(m, 4, 0.5, 7);
        for (std::size_t i = 0; i < m.rows(); ++i) {
            auto poked = m;
            poked.y(static_cast<Eigen::Index>(i)) += 1e6;
            auto cv = kfold_cv(poked, 4, 0.5, 7);
            CHECK(cv.rows[i].predicted == base.rows[i].predicted);
            CHECK(cv.rows[i].fold == base.rows[i].fold);
        }
    }
    SUBCASE("optimistic predictions are flagged") {
        FeatureMatrix m;
        const std::vector<double> xs = {0, 1, 2, 3, 4, 5};
        m.X.resize(6, 1);
        m.y.resize(6);
        for (int i = 0; i < 6; ++i) {
            m.X(i, 0) = xs[static_cast<std::size_t>(i)];
            m.y(i) = 4000 + 100 * xs[static_cast<std::size_t>(i)]; // 4000 .. 4500
            m.plot_ids.push_back("P" + std::to_string(i));
            m.germplasm_ids.push_back("G");
        }
        m.columns = {"x"};
        m.column_domains = {Domain::RS};
        auto cv = kfold_cv(m, 6, 0.0, 1);
        for (const auto &r : cv.rows) {
            CHECK(r.predicted == doctest::Approx(r.measured).epsilon(1e-9));
            CHECK(r.exceeds_threshold == (r.measured > kYieldFlagThreshold));
        }
        CHECK_FALSE(cv.rows[2].exceeds_threshold); // 4200
        CHECK(cv.rows[3].exceeds_threshold);       // 4300
    }
}
