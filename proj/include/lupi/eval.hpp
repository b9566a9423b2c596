/**
 * @file eval.hpp
 * @brief Cross-validation, grid search and the evaluation protocol: error per
 *        gender group and height quartile, K sweeps and accuracy-vs-tolerance
 *        curves.
 *
 * Everything fitted from data (standardizers, mRMR selection, quartile
 * boundaries) is fitted on the training part of each fold only.
 */

#pragma once

#include "lupi/features.hpp"
#include "lupi/pip.hpp"
#include "lupi/svr.hpp"
#include "lupi/svr_plus.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lupi {

enum class Method { Svr, SvrPlus, Pip };

std::string to_string(Method m); ///< "svr", "svr+", "pip"
Method parse_method(const std::string& text);

/// Rows of the three matrices and the gender list are aligned.
struct Dataset {
    Eigen::MatrixXd observable;
    Eigen::MatrixXd privileged;
    Eigen::VectorXd heights;
    std::vector<Gender> genders;

    Eigen::Index size() const { return heights.size(); }
};

Dataset make_dataset(const std::vector<MeasurementRecord>& records, const MeasurementSchema& schema);
Dataset subset(const Dataset& data, const std::vector<Eigen::Index>& rows);

struct Fold {
    std::vector<Eigen::Index> train;
    std::vector<Eigen::Index> test;
};

/// Shuffled split; the first n % folds test folds hold one extra sample.
/// Throws std::invalid_argument when folds < 2 or folds > n.
std::vector<Fold> kfold_split(std::size_t n, int folds, std::uint64_t seed);

/**
 * Stratified split: samples are shuffled within each stratum and dealt to
 * folds in turn, continuing across strata, so every stratum is spread evenly
 * and fold sizes still differ by at most one.
 */
std::vector<Fold> stratified_kfold_split(const std::vector<int>& strata, int folds, std::uint64_t seed);

/// Strata used for the evaluation protocol: height quartile within each gender.
std::vector<int> gender_quartile_strata(const Dataset& data);

/// Hyperparameters for any of the three methods; only the slot of the
/// method in use matters.
struct MethodParams {
    SvrHyperparams svr;
    SvrPlusHyperparams svr_plus;
    PipHyperparams pip;
};

/// Out-of-fold results of one hyperparameter setting.
struct CvResult {
    Eigen::VectorXd predictions;                    ///< height per sample, from the fold where it was tested
    std::vector<int> fold_of_sample;
    std::vector<QuartileBoundaries> fold_boundaries; ///< from each fold's training heights
    std::vector<std::vector<int>> fold_selections;  ///< PIP only: privileged columns chosen per fold
    double mean_error = 0.0;                        ///< pooled mean percent error
};

struct CvOptions {
    int jobs = 1; ///< folds trained concurrently
};

CvResult cross_validate(Method method, const Dataset& data, const MethodParams& params,
                        const std::vector<Fold>& folds, const CvOptions& options = {});

enum class PipGridMode { Joint, Sequential };

std::string to_string(PipGridMode m);
PipGridMode parse_pip_grid_mode(const std::string& text);

struct GridConfig {
    std::vector<double> values{1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4};
    /// Per-parameter overrides of `values`, keyed by the names from parameter_names().
    std::map<std::string, std::vector<double>> parameter_values;
    /// Empty: ε is fixed at `epsilon` and not searched.
    std::vector<double> epsilon_values;
    double epsilon = 0.1;
    int folds = 5;
    std::uint64_t seed = 1;
    int k = 6; ///< privileged columns for PIP
    PipGridMode pip_mode = PipGridMode::Joint;
    int jobs = 1;

    /// Throws std::invalid_argument: value lists must be nonempty and strictly increasing.
    void validate() const;
    const std::vector<double>& values_for(const std::string& parameter) const;
};

/**
 * Searched parameters in enumeration order (C first, then widths):
 *   svr:  C, gamma_g [, epsilon]
 *   svr+: C, gamma_g, gamma, gamma_g_star [, epsilon]
 *   pip:  feature_C, feature_gamma_g [, feature_epsilon], height_C, height_gamma_g [, height_epsilon]
 */
std::vector<std::string> parameter_names(Method method, const GridConfig& grid);

/// Turns one grid cell (values in parameter_names order) into hyperparameters.
MethodParams params_for_cell(Method method, const GridConfig& grid, const std::vector<double>& cell);

struct GridCellResult {
    std::string stage;          ///< "all" for svr/svr+, "joint", "feature" or "height" for pip
    std::vector<double> values; ///< in parameter_names order; unsearched ones hold the fixed value
    double mean_error = 0.0;    ///< percent height error (feature stage: mean |z| error)
    bool ok = true;
    std::string message;
};

struct StageCount {
    std::string stage;
    std::size_t cells = 0;
    std::size_t failed = 0;
};

struct GridSearchResult {
    Method method = Method::Svr;
    std::vector<std::string> parameter_names;
    std::vector<GridCellResult> cells;
    std::vector<StageCount> stage_counts;
    std::size_t best_cell = 0; ///< index into cells
    MethodParams best_params;
    CvResult best_cv;
    double seconds = 0.0;
};

/**
 * Exhaustive search; the best cell has the lowest pooled CV error, ties go to
 * the earlier cell in enumeration order (smaller C, then smaller widths).
 * Failed cells are logged and skipped; throws std::runtime_error when every
 * cell fails.
 */
GridSearchResult grid_search(Method method, const Dataset& data, const GridConfig& grid,
                             const std::vector<Fold>& folds);

/// Grid search on folds stratified by gender_quartile_strata().
GridSearchResult grid_search(Method method, const Dataset& data, const GridConfig& grid);

struct AccuracyPoint {
    double e = 0.0;
    std::array<double, 4> per_quartile{}; ///< grouped by the true class; NaN for an empty class
    double overall = 0.0;
};

/// Percent of samples classified correctly at each tolerance e (percent).
std::vector<AccuracyPoint> accuracy_curve(const Eigen::VectorXd& predictions, const Eigen::VectorXd& truths,
                                          const QuartileBoundaries& boundaries, const std::vector<double>& e_grid);

/// Same, with per-sample boundaries (e.g. each sample's fold).
std::vector<AccuracyPoint> accuracy_curve(const Eigen::VectorXd& predictions, const Eigen::VectorXd& truths,
                                          const std::vector<QuartileBoundaries>& boundaries,
                                          const std::vector<double>& e_grid);

std::vector<double> default_e_grid(); ///< 0, 0.5, ..., 10

enum class GenderGroup { Male, Female, Both };

std::string to_string(GenderGroup g);

struct ErrorRow {
    Method method = Method::Svr;
    GenderGroup group = GenderGroup::Both;
    int quartile = 0;        ///< 1..4, 0 for all samples
    double mean = 0.0;       ///< pooled over every test sample in the row
    double std_dev = 0.0;    ///< sample standard deviation of the per-fold means
    std::size_t samples = 0;
};

struct GroupCurve {
    Method method = Method::Svr;
    GenderGroup group = GenderGroup::Both;
    std::vector<AccuracyPoint> points;
};

struct GroupSearch {
    GenderGroup group = GenderGroup::Both;
    GridSearchResult search;
};

struct EvalReport {
    std::vector<ErrorRow> rows;
    std::vector<GroupCurve> curves;
    std::vector<GroupSearch> searches;
    std::map<std::string, double> seconds; ///< wall clock per method
    std::vector<std::string> warnings;
    std::string std_over = "folds";
};

/**
 * Grid search and out-of-fold evaluation for Male, Female and Both; quartile
 * rows slice test samples by their true height against the boundaries of
 * their fold's training heights. Results are appended to `report`.
 */
void evaluate_table(Method method, const Dataset& data, const GridConfig& grid, EvalReport& report,
                    const std::vector<double>& e_grid = default_e_grid());

/// Table rows for an already computed out-of-fold result.
std::vector<ErrorRow> error_rows(Method method, GenderGroup group, const Dataset& data, const CvResult& cv);

struct KSweepPoint {
    int k = 0;
    double mean_error = 0.0;
    double std_dev = 0.0; ///< over folds
};

struct KSweepResult {
    std::vector<KSweepPoint> points;
    std::vector<std::string> warnings;
};

/// One PIP cross-validation per K with shared hyperparameters; duplicate K
/// values are dropped with a warning, order of first appearance is kept.
KSweepResult k_sweep(const Dataset& data, const std::vector<int>& k_values, const PipHyperparams& params,
                     const std::vector<Fold>& folds, const CvOptions& options = {});

void write_report_csv(std::ostream& out, const EvalReport& report);
void write_report_json(std::ostream& out, const EvalReport& report);
void write_curve_csv(std::ostream& out, const EvalReport& report);
void write_k_sweep_csv(std::ostream& out, const KSweepResult& sweep);
/// One line per grid cell of every search in the report.
void write_cv_log_csv(std::ostream& out, const EvalReport& report);

} // namespace lupi
