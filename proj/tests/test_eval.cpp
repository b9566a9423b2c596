#include "lupi/eval.hpp"

#include "lupi/data.hpp"
#include "lupi/regressor.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>

namespace lupi {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Dataset synthetic_population(std::uint64_t seed, int n)
{
    const MeasurementSchema schema = MeasurementSchema::default_schema();
    SyntheticConfig c = SyntheticConfig::defaults(schema);
    c.n_subjects = n;
    c.seed = seed;
    return make_dataset(generate_synthetic(c, schema), schema);
}

// Heights driven by the first observable column plus independent factors,
// each of which one privileged column measures with a little noise.
Dataset toy_dataset(std::uint64_t seed, Index n, Index p_priv = 5)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Dataset d;
    d.observable = test::random_normal(rng, n, 3);
    d.heights.resize(n);
    d.privileged.resize(n, p_priv);
    for (Index i = 0; i < n; ++i) {
        d.heights(i) = 1700.0 + 60.0 * std::tanh(d.observable(i, 0));
        for (Index j = 0; j < p_priv; ++j) {
            const double factor = normal(rng);
            d.heights(i) += 10.0 * factor;
            d.privileged(i, j) = factor + 0.3 * normal(rng);
        }
        d.genders.push_back(i % 2 == 0 ? Gender::Male : Gender::Female);
    }
    return d;
}

GridConfig small_grid(std::vector<double> values)
{
    GridConfig g;
    g.values = std::move(values);
    g.folds = 3;
    g.k = 2;
    return g;
}

std::vector<Index> sorted_union(const std::vector<Fold>& folds)
{
    std::vector<Index> all;
    for (const Fold& f : folds)
        all.insert(all.end(), f.test.begin(), f.test.end());
    std::sort(all.begin(), all.end());
    return all;
}

void expect_partition(const std::vector<Fold>& folds, std::size_t n)
{
    const std::vector<Index> all = sorted_union(folds);
    ASSERT_EQ(all.size(), n);
    for (std::size_t i = 0; i < n; ++i)
        EXPECT_EQ(all[i], static_cast<Index>(i));
    for (const Fold& f : folds) {
        EXPECT_EQ(f.train.size() + f.test.size(), n);
        std::vector<Index> overlap;
        std::set_intersection(f.train.begin(), f.train.end(), f.test.begin(), f.test.end(),
                              std::back_inserter(overlap));
        EXPECT_TRUE(overlap.empty());
    }
}

TEST(KFold, EqualFoldsCoverEverything)
{
    const auto folds = kfold_split(10, 5, 3);
    ASSERT_EQ(folds.size(), 5u);
    for (const Fold& f : folds)
        EXPECT_EQ(f.test.size(), 2u);
    expect_partition(folds, 10);
}

TEST(KFold, RemainderGoesToTheFirstFolds)
{
    const auto folds = kfold_split(7, 5, 11);
    std::vector<std::size_t> sizes;
    for (const Fold& f : folds)
        sizes.push_back(f.test.size());
    EXPECT_EQ(sizes, (std::vector<std::size_t>{2, 2, 1, 1, 1}));
    expect_partition(folds, 7);
}

TEST(KFold, DeterministicPerSeed)
{
    const auto a = kfold_split(50, 5, 42);
    const auto b = kfold_split(50, 5, 42);
    const auto c = kfold_split(50, 5, 43);
    bool differs = false;
    for (std::size_t f = 0; f < 5; ++f) {
        EXPECT_EQ(a[f].test, b[f].test);
        differs = differs || a[f].test != c[f].test;
    }
    EXPECT_TRUE(differs);
}

TEST(KFold, RejectsImpossibleSplits)
{
    EXPECT_THROW(kfold_split(4, 5, 1), std::invalid_argument);
    EXPECT_THROW(kfold_split(10, 1, 1), std::invalid_argument);
    EXPECT_THROW(stratified_kfold_split({0, 1, 0}, 4, 1), std::invalid_argument);
}

TEST(KFold, StratifiedSpreadsEveryStratum)
{
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> stratum(0, 7);
    std::vector<int> strata(203);
    for (int& s : strata)
        s = stratum(rng);
    const auto folds = stratified_kfold_split(strata, 5, 9);
    expect_partition(folds, strata.size());
    std::size_t smallest = strata.size(), largest = 0;
    for (const Fold& f : folds) {
        smallest = std::min(smallest, f.test.size());
        largest = std::max(largest, f.test.size());
    }
    EXPECT_LE(largest - smallest, 1u);
    for (int s = 0; s < 8; ++s) {
        std::vector<int> per_fold;
        for (const Fold& f : folds)
            per_fold.push_back(static_cast<int>(
                std::count_if(f.test.begin(), f.test.end(), [&](Index i) { return strata[static_cast<size_t>(i)] == s; })));
        EXPECT_LE(*std::max_element(per_fold.begin(), per_fold.end()) - *std::min_element(per_fold.begin(), per_fold.end()),
                  1);
    }
}

TEST(KFold, GenderQuartileStrata)
{
    const Dataset d = synthetic_population(3, 200);
    const std::vector<int> strata = gender_quartile_strata(d);
    std::map<int, int> counts;
    for (size_t i = 0; i < strata.size(); ++i) {
        counts[strata[i]]++;
        EXPECT_EQ(strata[i] < 4, d.genders[i] == Gender::Male);
    }
    EXPECT_EQ(counts.size(), 8u);
}

TEST(Grid, CellsFollowTheParameterLists)
{
    GridConfig g = small_grid({0.1, 1.0, 10.0});
    EXPECT_EQ(parameter_names(Method::Svr, g), (std::vector<std::string>{"C", "gamma_g"}));
    EXPECT_EQ(parameter_names(Method::SvrPlus, g).size(), 4u);
    EXPECT_EQ(parameter_names(Method::Pip, g),
              (std::vector<std::string>{"feature_C", "feature_gamma_g", "height_C", "height_gamma_g"}));
    g.epsilon_values = {0.05, 0.1};
    EXPECT_EQ(parameter_names(Method::Svr, g).back(), "epsilon");
    EXPECT_EQ(parameter_names(Method::Pip, g).size(), 6u);

    const MethodParams p = params_for_cell(Method::SvrPlus, g, {2.0, 0.5, 3.0, 0.25, 0.05});
    EXPECT_EQ(p.svr_plus.cost, 2.0);
    EXPECT_EQ(p.svr_plus.kernel_decision.gamma_g, 0.5);
    EXPECT_EQ(p.svr_plus.gamma_correcting, 3.0);
    EXPECT_EQ(p.svr_plus.kernel_correcting.gamma_g, 0.25);
    EXPECT_EQ(p.svr_plus.epsilon, 0.05);
    EXPECT_THROW(params_for_cell(Method::Svr, g, {1.0}), std::invalid_argument);

    g.values = {1.0, 1.0};
    EXPECT_THROW(g.validate(), std::invalid_argument);
}

TEST(Grid, CellCountsMatchTheSearchDimension)
{
    const Dataset d = toy_dataset(1, 36);
    const std::vector<Fold> folds = kfold_split(36, 3, 1);
    const GridConfig g = small_grid({0.1, 1.0, 10.0});

    const GridSearchResult svr = grid_search(Method::Svr, d, g, folds);
    EXPECT_EQ(svr.cells.size(), 9u);

    const GridSearchResult plus = grid_search(Method::SvrPlus, d, g, folds);
    EXPECT_EQ(plus.cells.size(), 81u);
    ASSERT_EQ(plus.stage_counts.size(), 1u);
    EXPECT_EQ(plus.stage_counts[0].cells, 81u);

    const GridSearchResult joint = grid_search(Method::Pip, d, g, folds);
    std::map<std::string, std::size_t> counts;
    for (const StageCount& c : joint.stage_counts)
        counts[c.stage] = c.cells;
    EXPECT_EQ(counts["feature"], 9u);
    EXPECT_EQ(counts["height"], 9u);
    EXPECT_EQ(counts["joint"], 81u);
    EXPECT_EQ(joint.cells.size(), 81u);

    GridConfig seq = g;
    seq.pip_mode = PipGridMode::Sequential;
    const GridSearchResult sequential = grid_search(Method::Pip, d, seq, folds);
    EXPECT_EQ(sequential.cells.size(), 18u);
    EXPECT_EQ(sequential.cells[sequential.best_cell].stage, "height");
}

TEST(Grid, SingleCellIsReturned)
{
    const Dataset d = toy_dataset(2, 30);
    const GridSearchResult r = grid_search(Method::Svr, d, small_grid({1.0}), kfold_split(30, 3, 2));
    ASSERT_EQ(r.cells.size(), 1u);
    EXPECT_EQ(r.best_cell, 0u);
    EXPECT_EQ(r.best_params.svr.cost, 1.0);
    EXPECT_NEAR(r.best_cv.mean_error, r.cells[0].mean_error, 1e-12);
}

TEST(Grid, UnderfittingCellLoses)
{
    Dataset d = toy_dataset(3, 60);
    d.observable = d.observable.leftCols(1).eval();
    for (Index i = 0; i < 60; ++i)
        d.heights(i) = 1700.0 + 150.0 * std::tanh(d.observable(i, 0));
    GridConfig g = small_grid({1e-4, 100.0});
    g.parameter_values["gamma_g"] = {0.5};
    const GridSearchResult r = grid_search(Method::Svr, d, g, kfold_split(60, 3, 3));
    ASSERT_EQ(r.cells.size(), 2u);
    EXPECT_EQ(r.best_params.svr.cost, 100.0);
    EXPECT_GE(r.cells[0].mean_error, 5.0 * r.cells[1].mean_error);
}

TEST(Grid, TiesGoToSmallerCThenSmallerWidth)
{
    Dataset d = toy_dataset(4, 30);
    d.heights.setConstant(1650.0);
    const GridSearchResult r = grid_search(Method::Svr, d, small_grid({0.1, 1.0, 10.0}), kfold_split(30, 3, 4));
    for (const GridCellResult& c : r.cells)
        EXPECT_NEAR(c.mean_error, 0.0, 1e-9);
    EXPECT_EQ(r.best_cell, 0u);
    EXPECT_EQ(r.best_params.svr.cost, 0.1);
    EXPECT_EQ(r.best_params.svr.kernel.gamma_g, 0.1);
}

TEST(Grid, FailedCellsAreSkipped)
{
    const Dataset d = toy_dataset(5, 30);
    GridConfig g = small_grid({0.5});
    g.parameter_values["C"] = {-1.0, 1.0};
    const GridSearchResult r = grid_search(Method::Svr, d, g, kfold_split(30, 3, 5));
    ASSERT_EQ(r.cells.size(), 2u);
    EXPECT_FALSE(r.cells[0].ok);
    EXPECT_NE(r.cells[0].message.find("cost"), std::string::npos);
    EXPECT_EQ(r.best_cell, 1u);
    EXPECT_EQ(r.stage_counts[0].failed, 1u);

    g.parameter_values["C"] = {-2.0, -1.0};
    EXPECT_THROW(grid_search(Method::Svr, d, g, kfold_split(30, 3, 5)), std::runtime_error);
}

TEST(CrossValidation, PipWithoutPrivilegedFeaturesIsSvr)
{
    const Dataset d = toy_dataset(6, 45);
    const auto folds = kfold_split(45, 3, 6);
    MethodParams p;
    p.svr.cost = 3.0;
    p.svr.kernel.gamma_g = 0.3;
    p.pip.k = 0;
    p.pip.height_stage = p.svr;
    const CvResult a = cross_validate(Method::Svr, d, p, folds);
    const CvResult b = cross_validate(Method::Pip, d, p, folds);
    EXPECT_LE((a.predictions - b.predictions).cwiseAbs().maxCoeff(), 1e-10);

    const KSweepResult sweep = k_sweep(d, {0, 2, 0}, p.pip, folds);
    ASSERT_EQ(sweep.points.size(), 2u);
    ASSERT_EQ(sweep.warnings.size(), 1u);
    EXPECT_NEAR(sweep.points[0].mean_error, a.mean_error, 1e-10);
    EXPECT_THROW(k_sweep(d, {6}, p.pip, folds), std::invalid_argument);
}

TEST(CrossValidation, ParallelFoldsMatchSerial)
{
    const Dataset d = toy_dataset(7, 45);
    const auto folds = kfold_split(45, 3, 7);
    MethodParams p;
    p.pip.k = 2;
    const CvResult a = cross_validate(Method::Pip, d, p, folds, {1});
    const CvResult b = cross_validate(Method::Pip, d, p, folds, {3});
    EXPECT_EQ((a.predictions - b.predictions).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(a.fold_selections, b.fold_selections);
}

TEST(CrossValidation, OverfitsItsOwnTrainingData)
{
    const Dataset d = toy_dataset(8, 30);
    std::vector<Index> all(30);
    std::iota(all.begin(), all.end(), Index{0});
    MethodParams p;
    p.svr.cost = 1e4;
    p.svr.epsilon = 0.0;
    p.svr.kernel.gamma_g = 1.0;
    const CvResult cv = cross_validate(Method::Svr, d, p, {Fold{all, all}});
    EXPECT_LT(cv.mean_error, 1e-3);
}

using test::factor_dataset;

TEST(Leakage, TestFoldTargetCopyIsNeverSelected)
{
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Dataset d = factor_dataset(100 + seed, 300);
        const auto folds = kfold_split(300, 3, seed);
        // Column 4 equals the height on fold 0's test rows, noise elsewhere.
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(1700.0, 60.0);
        for (Index i = 0; i < 300; ++i)
            d.privileged(i, 4) = normal(rng);
        for (Index i : folds[0].test)
            d.privileged(i, 4) = d.heights(i);

        MethodParams p;
        p.pip.k = 2;
        const CvResult cv = cross_validate(Method::Pip, d, p, folds);
        const auto& chosen = cv.fold_selections[0];
        EXPECT_EQ(std::count(chosen.begin(), chosen.end(), 4), 0) << "seed " << seed;
    }
}

TEST(Leakage, TrainingTargetCopyIsSelectedFirst)
{
    Dataset d = factor_dataset(9, 150);
    d.privileged.col(4) = d.heights;
    MethodParams p;
    p.pip.k = 2;
    const CvResult cv = cross_validate(Method::Pip, d, p, kfold_split(150, 3, 9));
    for (const auto& s : cv.fold_selections)
        EXPECT_EQ(s.front(), 4);
}

TEST(Accuracy, PerfectPredictionsAreAlwaysRight)
{
    VectorXd h(8);
    h << 1500, 1550, 1600, 1650, 1700, 1750, 1800, 1850;
    const auto curve = accuracy_curve(h, h, quartile_boundaries(h), {0.0, 1.0, 5.0});
    for (const AccuracyPoint& p : curve) {
        EXPECT_EQ(p.overall, 100.0);
        for (double a : p.per_quartile)
            EXPECT_EQ(a, 100.0);
    }
}

TEST(Accuracy, MonotoneAndReachesCertainty)
{
    std::mt19937_64 rng(12);
    std::normal_distribution<double> noise(0.0, 40.0);
    VectorXd truth(200), pred(200);
    for (Index i = 0; i < 200; ++i) {
        truth(i) = 1700.0 + 3.0 * noise(rng);
        pred(i) = truth(i) + noise(rng);
    }
    const QuartileBoundaries b = quartile_boundaries(truth);
    double max_error = 0.0;
    int strict = 0;
    for (Index i = 0; i < 200; ++i) {
        max_error = std::max(max_error, percent_error(pred(i), truth(i)));
        strict += quartile_class(pred(i), b) == quartile_class(truth(i), b);
    }
    std::vector<double> grid = default_e_grid();
    grid.push_back(max_error + 0.01);
    const auto curve = accuracy_curve(pred, truth, b, grid);
    EXPECT_NEAR(curve.front().overall, 100.0 * strict / 200.0, 1e-12);
    for (size_t i = 1; i < curve.size(); ++i) {
        EXPECT_GE(curve[i].overall, curve[i - 1].overall);
        for (size_t q = 0; q < 4; ++q)
            EXPECT_GE(curve[i].per_quartile[q], curve[i - 1].per_quartile[q]);
    }
    EXPECT_EQ(curve.back().overall, 100.0);
    EXPECT_THROW(accuracy_curve(pred, truth, b, {-1.0}), std::invalid_argument);
    EXPECT_THROW(accuracy_curve(pred.head(3), truth, b, {1.0}), std::invalid_argument);
}

TEST(Table, AllRowIsThePooledMean)
{
    Dataset d;
    d.heights.resize(8);
    d.heights << 1500, 1510, 1600, 1700, 1710, 1720, 1800, 1900;
    CvResult cv;
    cv.predictions = d.heights;
    cv.predictions(0) += 30.0;
    cv.predictions(7) -= 95.0;
    cv.predictions(3) += 17.0;
    cv.fold_of_sample = {0, 1, 0, 1, 0, 1, 0, 1};
    const QuartileBoundaries b{1550.0, 1650.0, 1750.0};
    cv.fold_boundaries = {b, b};

    const auto rows = error_rows(Method::Svr, GenderGroup::Both, d, cv);
    ASSERT_EQ(rows.size(), 5u);
    double pooled = 0.0;
    for (Index i = 0; i < 8; ++i)
        pooled += percent_error(cv.predictions(i), d.heights(i));
    EXPECT_NEAR(rows[0].mean, pooled / 8.0, 1e-12);
    EXPECT_EQ(rows[0].samples, 8u);
    double lo = 1e9, hi = -1e9, mean_of_means = 0.0;
    for (int q = 1; q <= 4; ++q) {
        lo = std::min(lo, rows[static_cast<size_t>(q)].mean);
        hi = std::max(hi, rows[static_cast<size_t>(q)].mean);
        mean_of_means += rows[static_cast<size_t>(q)].mean / 4.0;
    }
    EXPECT_GE(rows[0].mean, lo);
    EXPECT_LE(rows[0].mean, hi);
    EXPECT_EQ(rows[4].samples, 2u); // 1800 and 1900
    EXPECT_EQ(rows[2].samples, 1u); // 1600

    // Standard deviation over the two fold means of all samples.
    double f0 = 0.0, f1 = 0.0;
    for (Index i = 0; i < 8; ++i)
        (i % 2 == 0 ? f0 : f1) += percent_error(cv.predictions(i), d.heights(i)) / 4.0;
    EXPECT_NEAR(rows[0].std_dev, std::abs(f0 - f1) / std::sqrt(2.0), 1e-12);
}

TEST(Table, ExtremeQuartilesAreHarder)
{
    double extreme = 0.0, middle = 0.0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const Dataset d = synthetic_population(seed, 200);
        MethodParams p;
        p.svr.cost = 1.0;
        p.svr.kernel.gamma_g = 0.001;
        const CvResult cv = cross_validate(Method::Svr, d, p, kfold_split(200, 5, seed));
        const auto rows = error_rows(Method::Svr, GenderGroup::Both, d, cv);
        extreme += rows[1].mean + rows[4].mean;
        middle += rows[2].mean + rows[3].mean;
    }
    EXPECT_GE(extreme, middle);
}

TEST(Table, EvaluatesEveryGroupAndWritesReports)
{
    const Dataset d = synthetic_population(5, 90);
    GridConfig g = small_grid({0.01, 1.0});
    EvalReport report;
    evaluate_table(Method::Svr, d, g, report, {0.0, 2.0, 4.0});
    evaluate_table(Method::Pip, d, g, report, {0.0, 2.0, 4.0});
    EXPECT_EQ(report.rows.size(), 30u);
    EXPECT_EQ(report.curves.size(), 6u);
    EXPECT_EQ(report.searches.size(), 6u);
    EXPECT_TRUE(report.warnings.empty());
    EXPECT_EQ(report.seconds.count("svr"), 1u);
    for (const ErrorRow& r : report.rows) {
        EXPECT_GT(r.mean, 0.0);
        EXPECT_LT(r.mean, 20.0);
    }

    std::ostringstream csv, json, curve, log;
    write_report_csv(csv, report);
    write_report_json(json, report);
    write_curve_csv(curve, report);
    write_cv_log_csv(log, report);
    auto lines = [](const std::ostringstream& out) {
        const std::string s = out.str();
        return std::count(s.begin(), s.end(), '\n');
    };
    EXPECT_EQ(lines(csv), 31);
    EXPECT_EQ(lines(curve), 19);
    const auto parsed = nlohmann::json::parse(json.str());
    EXPECT_EQ(parsed["std_over"], "folds");
    EXPECT_EQ(parsed["rows"].size(), 30u);
    EXPECT_EQ(parsed["searches"][3]["cell_counts"]["joint"]["cells"], 16);
    // 3 groups x (4 svr cells + 16 pip cells) plus the header.
    EXPECT_EQ(lines(log), 61);
    EXPECT_NE(log.str().find("Both,pip,joint,16,"), std::string::npos);
}

TEST(Table, EmptyGroupIsOmittedWithWarning)
{
    Dataset d = synthetic_population(6, 40);
    std::fill(d.genders.begin(), d.genders.end(), Gender::Female);
    EvalReport report;
    evaluate_table(Method::Svr, d, small_grid({1.0}), report);
    ASSERT_EQ(report.warnings.size(), 1u);
    EXPECT_NE(report.warnings[0].find("Male"), std::string::npos);
    EXPECT_EQ(report.rows.size(), 10u);
}

} // namespace
} // namespace lupi
