/**
 * @file regressor.hpp
 * @brief Height regressors on raw ratio features: ε-SVR and ε-SVR+ wrapped
 *        with the preprocessing every method shares.
 *
 * Inputs are standardized with statistics of the training rows, and the
 * target is z-scored, so one hyperparameter grid fits all populations.
 * Predictions are mapped back to the target's units.
 */

#pragma once

#include "lupi/features.hpp"
#include "lupi/svr.hpp"
#include "lupi/svr_plus.hpp"

#include <Eigen/Dense>

namespace lupi {

struct SvrRegressor {
    Standardizer input_scaler;
    TargetScaler target_scaler;
    SvrModel model;
};

SvrRegressor train_svr_regressor(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                                 const SvrHyperparams& params);
Eigen::VectorXd predict(const SvrRegressor& r, const Eigen::MatrixXd& inputs);

struct SvrPlusRegressor {
    Standardizer input_scaler;
    Standardizer privileged_scaler; ///< training-time only; kept for diagnostics
    TargetScaler target_scaler;
    SvrPlusModel model;
};

SvrPlusRegressor train_svr_plus_regressor(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& privileged,
                                          const Eigen::VectorXd& targets, const SvrPlusHyperparams& params);
Eigen::VectorXd predict(const SvrPlusRegressor& r, const Eigen::MatrixXd& inputs);

} // namespace lupi
