#include "lupi/pip.hpp"

#include "lupi/errors.hpp"
#include "lupi/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lupi {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double interpolated_quantile(const std::vector<double>& sorted, double q)
{
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(pos));
    const size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

MatrixXd concatenate(const MatrixXd& left, const MatrixXd& right)
{
    MatrixXd out(left.rows(), left.cols() + right.cols());
    out.leftCols(left.cols()) = left;
    out.rightCols(right.cols()) = right;
    return out;
}

} // namespace

QuartileBoundaries quartile_boundaries(const VectorXd& heights)
{
    if (heights.size() == 0) {
        throw std::invalid_argument("quartile_boundaries: no heights");
    }
    std::vector<double> sorted(heights.data(), heights.data() + heights.size());
    std::sort(sorted.begin(), sorted.end());
    return {interpolated_quantile(sorted, 0.25), interpolated_quantile(sorted, 0.50),
            interpolated_quantile(sorted, 0.75)};
}

int quartile_class(double height, const QuartileBoundaries& b)
{
    if (height <= b.q25) {
        return 1;
    }
    if (height <= b.q50) {
        return 2;
    }
    if (height <= b.q75) {
        return 3;
    }
    return 4;
}

double percent_error(double predicted, double truth)
{
    if (!(truth > 0.0)) {
        throw std::invalid_argument("percent_error: true value must be positive");
    }
    return 100.0 * std::abs(predicted - truth) / truth;
}

QuartileDecision classify_quartile(double predicted_height, double true_height, const QuartileBoundaries& b,
                                   double tolerance_e)
{
    if (!(tolerance_e >= 0.0)) {
        throw std::invalid_argument("classify_quartile: tolerance must be non-negative");
    }
    QuartileDecision d;
    d.predicted_class = quartile_class(predicted_height, b);
    d.true_class = quartile_class(true_height, b);
    d.correct = d.predicted_class == d.true_class || percent_error(predicted_height, true_height) <= tolerance_e;
    return d;
}

PipFeatureStage pip_train_feature_stage(const MatrixXd& observable, const MatrixXd& privileged,
                                        const SelectionResult& selection, const SvrHyperparams& params,
                                        const PipTrainOptions& options)
{
    const Index n = observable.rows();
    PipFeatureStage stage;
    stage.selection = selection;
    stage.observable_scaler = standardize_fit(observable);
    stage.inputs = stage.observable_scaler.apply(observable);
    const MatrixXd& xs = stage.inputs;

    const MatrixXd selected = privileged(Eigen::all, selection.selected_indices);
    stage.privileged_scaler = standardize_fit(selected);
    const MatrixXd targets = stage.privileged_scaler.apply(selected);

    const size_t k = selection.selected_indices.size();
    stage.predictors.resize(k);
    stage.in_sample.resize(n, static_cast<Index>(k));
    parallel_for(k, options.jobs, [&](size_t i) {
        try {
            stage.predictors[i] = svr_train(xs, targets.col(static_cast<Index>(i)), params);
        } catch (const std::exception& e) {
            throw StageError("feature predictor " + std::to_string(i), e.what());
        }
        stage.in_sample.col(static_cast<Index>(i)) = svr_predict_batch(stage.predictors[i], xs);
    });
    return stage;
}

MatrixXd pip_feature_predictions(const PipFeatureStage& stage, const MatrixXd& observable)
{
    const MatrixXd xs = stage.observable_scaler.apply(observable);
    MatrixXd out(observable.rows(), static_cast<Index>(stage.predictors.size()));
    for (size_t i = 0; i < stage.predictors.size(); ++i) {
        out.col(static_cast<Index>(i)) = svr_predict_batch(stage.predictors[i], xs);
    }
    return out;
}

PipModel pip_train_height_stage(const PipFeatureStage& stage, const VectorXd& heights, const PipHyperparams& params)
{
    params.height_stage.validate();
    PipModel model;
    model.hyperparams = params;
    model.selection = stage.selection;
    model.feature_predictors = stage.predictors;
    model.observable_scaler = stage.observable_scaler;
    model.privileged_scaler = stage.privileged_scaler;
    model.predicted_scaler = standardize_fit(stage.in_sample);

    const MatrixXd z_inputs = concatenate(stage.inputs, model.predicted_scaler.apply(stage.in_sample));
    model.height_scaler = target_scaler_fit(heights);
    const VectorXd z_heights = (heights.array() - model.height_scaler.mean) / model.height_scaler.scale;
    try {
        model.height_model = svr_train(z_inputs, z_heights, params.height_stage);
    } catch (const std::exception& e) {
        throw StageError("height model", e.what());
    }
    model.quartile_boundaries = quartile_boundaries(heights);
    return model;
}

PipModel pip_train(const MatrixXd& observable, const MatrixXd& privileged, const VectorXd& heights,
                   const PipHyperparams& params, const PipTrainOptions& options)
{
    const Index n = observable.rows();
    if (privileged.rows() != n || heights.size() != n) {
        throw std::invalid_argument("pip: observable, privileged and height counts differ");
    }
    if (params.k < 0 || params.k > privileged.cols()) {
        throw std::invalid_argument("pip: K = " + std::to_string(params.k) + " but only " +
                                    std::to_string(privileged.cols()) + " privileged features");
    }
    if (n < std::max<Index>(2, 2 * params.k)) {
        throw std::invalid_argument("pip: too few training samples for K = " + std::to_string(params.k));
    }
    params.feature_stage.validate();
    params.height_stage.validate();
    const SelectionResult selection = select_mid(privileged, heights, params.k, params.selection);
    return pip_train_height_stage(pip_train_feature_stage(observable, privileged, selection, params.feature_stage, options),
                                  heights, params);
}

MatrixXd pip_height_inputs(const PipModel& model, const MatrixXd& observable)
{
    const MatrixXd xs = model.observable_scaler.apply(observable);
    MatrixXd predicted(observable.rows(), static_cast<Index>(model.feature_predictors.size()));
    for (size_t i = 0; i < model.feature_predictors.size(); ++i) {
        predicted.col(static_cast<Index>(i)) = svr_predict_batch(model.feature_predictors[i], xs);
    }
    return concatenate(xs, model.predicted_scaler.apply(predicted));
}

VectorXd pip_predict_batch(const PipModel& model, const MatrixXd& observable)
{
    const VectorXd z = svr_predict_batch(model.height_model, pip_height_inputs(model, observable));
    return z.array() * model.height_scaler.scale + model.height_scaler.mean;
}

HeightPrediction pip_predict(const PipModel& model, const VectorXd& observable)
{
    const VectorXd xs = model.observable_scaler.apply_row(observable);
    VectorXd predicted(static_cast<Index>(model.feature_predictors.size()));
    for (size_t i = 0; i < model.feature_predictors.size(); ++i) {
        predicted(static_cast<Index>(i)) = svr_predict(model.feature_predictors[i], xs);
    }
    VectorXd input(xs.size() + predicted.size());
    input << xs, model.predicted_scaler.apply_row(predicted);
    HeightPrediction h;
    h.height_mm = model.height_scaler.inverse(svr_predict(model.height_model, input));
    h.height_cm = h.height_mm / 10.0;
    return h;
}

} // namespace lupi
