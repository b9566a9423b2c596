/**
 * @file pip.hpp
 * @brief Privileged information prediction: learn to predict the most
 *        informative privileged ratios from observable ones, then regress
 *        height on observables plus those predictions.
 *
 * Training on (x, x*, h):
 *   1. select K privileged columns by mRMR/MID against h;
 *   2. fit one ε-SVR per selected column, x -> x*_i (shared hyperparameters);
 *   3. append the in-sample predictions to x and fit the height ε-SVR.
 * At test time only x is needed. With K = 0 the model is a plain ε-SVR on x.
 */

#pragma once

#include "lupi/features.hpp"
#include "lupi/mrmr.hpp"
#include "lupi/svr.hpp"

#include <Eigen/Dense>

#include <vector>

namespace lupi {

struct QuartileBoundaries {
    double q25 = 0.0;
    double q50 = 0.0;
    double q75 = 0.0;
};

/// 25th/50th/75th percentiles with linear interpolation between order statistics.
QuartileBoundaries quartile_boundaries(const Eigen::VectorXd& heights);

/// 1..4; values on a boundary go to the lower class.
int quartile_class(double height, const QuartileBoundaries& b);

/// 100 |predicted - truth| / truth. Throws std::invalid_argument for truth <= 0.
double percent_error(double predicted, double truth);

struct QuartileDecision {
    int predicted_class = 0;
    int true_class = 0;
    bool correct = false;
};

/// Correct when the classes agree or the percent error is within tolerance_e.
QuartileDecision classify_quartile(double predicted_height, double true_height, const QuartileBoundaries& b,
                                   double tolerance_e);

struct PipHyperparams {
    int k = 6;
    SvrHyperparams feature_stage; ///< shared by all K privileged-feature predictors
    SvrHyperparams height_stage;
    DiscretizationConfig selection;
};

inline constexpr int kPipModelVersion = 1;

struct PipModel {
    int version = kPipModelVersion;
    SelectionResult selection;
    std::vector<SvrModel> feature_predictors; ///< one per selected privileged column
    SvrModel height_model;
    Standardizer observable_scaler;  ///< raw observable ratios -> model input
    Standardizer privileged_scaler;  ///< selected raw privileged columns -> predictor targets
    Standardizer predicted_scaler;   ///< predictor outputs -> appended height-model inputs
    TargetScaler height_scaler;      ///< mm <-> z-scored height
    QuartileBoundaries quartile_boundaries;
    PipHyperparams hyperparams;
};

struct PipTrainOptions {
    int jobs = 1; ///< worker threads for the K independent feature predictors
};

/**
 * `observable` and `privileged` hold raw ratios, one subject per row; heights
 * in mm. Failures are rethrown as StageError naming "feature predictor i" or
 * "height model".
 */
PipModel pip_train(const Eigen::MatrixXd& observable, const Eigen::MatrixXd& privileged, const Eigen::VectorXd& heights,
                   const PipHyperparams& params, const PipTrainOptions& options = {});

/// Stage one alone (selection given), so grid searches can reuse it across
/// height-stage settings.
struct PipFeatureStage {
    SelectionResult selection;
    Standardizer observable_scaler;
    Standardizer privileged_scaler;
    std::vector<SvrModel> predictors;
    Eigen::MatrixXd inputs;    ///< standardized training observables
    Eigen::MatrixXd in_sample; ///< predictor outputs on the training rows
};

PipFeatureStage pip_train_feature_stage(const Eigen::MatrixXd& observable, const Eigen::MatrixXd& privileged,
                                        const SelectionResult& selection, const SvrHyperparams& params,
                                        const PipTrainOptions& options = {});

/// Predictor outputs for new rows, in the standardized units of the selected columns.
Eigen::MatrixXd pip_feature_predictions(const PipFeatureStage& stage, const Eigen::MatrixXd& observable);

PipModel pip_train_height_stage(const PipFeatureStage& stage, const Eigen::VectorXd& heights,
                                const PipHyperparams& params);

struct HeightPrediction {
    double height_mm = 0.0;
    double height_cm = 0.0;
};

HeightPrediction pip_predict(const PipModel& model, const Eigen::VectorXd& observable);

/// Heights in mm for every row.
Eigen::VectorXd pip_predict_batch(const PipModel& model, const Eigen::MatrixXd& observable);

/// The standardized inputs the height model sees: [x_std, predicted_std].
Eigen::MatrixXd pip_height_inputs(const PipModel& model, const Eigen::MatrixXd& observable);

} // namespace lupi
