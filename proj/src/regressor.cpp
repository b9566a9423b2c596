#include "lupi/regressor.hpp"

namespace lupi {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd to_z(const TargetScaler& s, const VectorXd& y)
{
    return (y.array() - s.mean) / s.scale;
}

} // namespace

SvrRegressor train_svr_regressor(const MatrixXd& inputs, const VectorXd& targets, const SvrHyperparams& params)
{
    SvrRegressor r;
    r.input_scaler = standardize_fit(inputs);
    r.target_scaler = target_scaler_fit(targets);
    r.model = svr_train(r.input_scaler.apply(inputs), to_z(r.target_scaler, targets), params);
    return r;
}

VectorXd predict(const SvrRegressor& r, const MatrixXd& inputs)
{
    const VectorXd z = svr_predict_batch(r.model, r.input_scaler.apply(inputs));
    return z.array() * r.target_scaler.scale + r.target_scaler.mean;
}

SvrPlusRegressor train_svr_plus_regressor(const MatrixXd& inputs, const MatrixXd& privileged, const VectorXd& targets,
                                          const SvrPlusHyperparams& params)
{
    SvrPlusRegressor r;
    r.input_scaler = standardize_fit(inputs);
    r.privileged_scaler = standardize_fit(privileged);
    r.target_scaler = target_scaler_fit(targets);
    r.model = svr_plus_train(r.input_scaler.apply(inputs), r.privileged_scaler.apply(privileged),
                             to_z(r.target_scaler, targets), params);
    return r;
}

VectorXd predict(const SvrPlusRegressor& r, const MatrixXd& inputs)
{
    const VectorXd z = svr_plus_predict_batch(r.model, r.input_scaler.apply(inputs));
    return z.array() * r.target_scaler.scale + r.target_scaler.mean;
}

} // namespace lupi
