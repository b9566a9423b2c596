#include "lupi/svr.hpp"

#include "lupi/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace lupi {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void SvrHyperparams::validate() const
{
    if (!(cost > 0.0) || !std::isfinite(cost)) {
        throw std::invalid_argument("svr: cost C must be positive");
    }
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
        throw std::invalid_argument("svr: epsilon must be non-negative");
    }
    kernel.validate();
}

QpProblem svr_dual_problem(const MatrixXd& gram, const VectorXd& targets, double cost, double epsilon)
{
    const Index n = targets.size();
    QpProblem p;
    p.H.resize(2 * n, 2 * n);
    p.H.topLeftCorner(n, n) = gram;
    p.H.topRightCorner(n, n) = -gram;
    p.H.bottomLeftCorner(n, n) = -gram;
    p.H.bottomRightCorner(n, n) = gram;
    p.g.resize(2 * n);
    p.g.head(n) = epsilon - targets.array();
    p.g.tail(n) = epsilon + targets.array();
    p.A_eq.resize(1, 2 * n);
    p.A_eq.leftCols(n).setOnes();
    p.A_eq.rightCols(n).setConstant(-1.0);
    p.b_eq = VectorXd::Zero(1);
    p.lower = VectorXd::Zero(2 * n);
    p.upper = VectorXd::Constant(2 * n, cost);
    return p;
}

double svr_bias(const MatrixXd& gram, const VectorXd& targets, const VectorXd& beta, double cost, double epsilon)
{
    const VectorXd fitted = gram * beta;
    double free_sum = 0.0;
    Index free_count = 0;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < targets.size(); ++i) {
        const double b = beta(i);
        const double base = targets(i) - fitted(i);
        const double magnitude = std::abs(b);
        if (magnitude > kFreeMargin * cost && magnitude < (1.0 - kFreeMargin) * cost) {
            // alpha free: y - f = eps; alpha* free: f - y = eps.
            free_sum += b > 0.0 ? base - epsilon : base + epsilon;
            ++free_count;
        } else if (magnitude <= kFreeMargin * cost) {
            lo = std::max(lo, base - epsilon);
            hi = std::min(hi, base + epsilon);
        } else if (b > 0.0) {
            hi = std::min(hi, base - epsilon);
        } else {
            lo = std::max(lo, base + epsilon);
        }
    }
    if (free_count > 0) {
        return free_sum / static_cast<double>(free_count);
    }
    if (std::isfinite(lo) && std::isfinite(hi)) {
        return 0.5 * (lo + hi);
    }
    return std::isfinite(lo) ? lo : hi;
}

namespace {

void check_training_inputs(const MatrixXd& inputs, const VectorXd& targets)
{
    if (inputs.rows() < 2) {
        throw std::invalid_argument("svr: need at least 2 training samples");
    }
    if (inputs.rows() != targets.size()) {
        throw std::invalid_argument("svr: " + std::to_string(inputs.rows()) + " inputs but " +
                                    std::to_string(targets.size()) + " targets");
    }
    if (!targets.allFinite()) {
        throw std::invalid_argument("svr: non-finite target");
    }
    if (!inputs.allFinite()) {
        throw std::invalid_argument("svr: non-finite input");
    }
}

} // namespace

void restore_balance(VectorXd& beta, double cost)
{
    // Pruning and solver tolerance leave sum(beta) slightly off zero. Spread the
    // imbalance over coefficients that can absorb it without leaving [-C, C]
    // or changing sign; a few passes handle coefficients that hit a limit.
    for (int pass = 0; pass < 8; ++pass) {
        const double excess = beta.sum();
        if (std::abs(excess) <= 1e-12 * std::max(1.0, cost)) {
            return;
        }
        std::vector<Index> movable;
        for (Index i = 0; i < beta.size(); ++i) {
            const double b = beta(i);
            if (b == 0.0) {
                continue;
            }
            const bool shrinks = (b > 0.0) == (excess > 0.0);
            if (shrinks || std::abs(b) < cost) {
                movable.push_back(i);
            }
        }
        if (movable.empty()) {
            return;
        }
        const double share = excess / static_cast<double>(movable.size());
        for (Index i : movable) {
            const double b = beta(i);
            double moved = std::clamp(b - share, -cost, cost);
            if ((moved > 0.0) != (b > 0.0)) {
                moved = 0.0;
            }
            beta(i) = moved;
        }
    }
}

SvrModel svr_train(const MatrixXd& inputs, const VectorXd& targets, const SvrHyperparams& params,
                   const QpSettings& settings)
{
    params.validate();
    check_training_inputs(inputs, targets);
    const Index n = inputs.rows();

    const MatrixXd gram = kernel_matrix(inputs, params.kernel);
    const QpProblem dual = svr_dual_problem(gram, targets, params.cost, params.epsilon);
    QpSettings qp_settings = settings;
    qp_settings.check_convexity = false; // Gram matrices are PSD by construction
    const QpSolution sol = solve(dual, qp_settings);
    if (!qp_solution_usable(sol, settings.tolerance)) {
        throw QpFailure("svr", sol);
    }

    VectorXd beta = sol.x.head(n) - sol.x.tail(n);
    beta = beta.cwiseMax(-params.cost).cwiseMin(params.cost);
    std::vector<Index> support;
    for (Index i = 0; i < n; ++i) {
        if (std::abs(beta(i)) > kSupportThreshold * params.cost) {
            support.push_back(i);
        } else {
            beta(i) = 0.0;
        }
    }
    restore_balance(beta, params.cost);
    std::erase_if(support, [&](Index i) { return beta(i) == 0.0; });

    SvrModel model;
    model.hyperparams = params;
    model.feature_dim = inputs.cols();
    model.support_vectors = inputs(support, Eigen::all);
    model.dual_coefficients = beta(support);
    model.bias = svr_bias(gram, targets, beta, params.cost, params.epsilon);
    model.training_diagnostics.kkt_residual = sol.kkt_residual;
    model.training_diagnostics.n_support = static_cast<Index>(support.size());
    model.training_diagnostics.iterations = sol.iterations;
    model.training_diagnostics.status = sol.status;
    return model;
}

double svr_predict(const SvrModel& model, const Eigen::Ref<const VectorXd>& input)
{
    if (input.size() != model.feature_dim) {
        throw std::invalid_argument("svr: input has dimension " + std::to_string(input.size()) + ", model expects " +
                                    std::to_string(model.feature_dim));
    }
    double value = model.bias;
    for (Index i = 0; i < model.dual_coefficients.size(); ++i) {
        value += model.dual_coefficients(i) *
                 kernel_value(model.support_vectors.row(i).transpose(), input, model.hyperparams.kernel);
    }
    return value;
}

VectorXd svr_predict_batch(const SvrModel& model, const MatrixXd& inputs)
{
    if (inputs.rows() > 0 && inputs.cols() != model.feature_dim) {
        throw std::invalid_argument("svr: input has dimension " + std::to_string(inputs.cols()) +
                                    ", model expects " + std::to_string(model.feature_dim));
    }
    VectorXd out = VectorXd::Constant(inputs.rows(), model.bias);
    if (inputs.rows() == 0 || model.dual_coefficients.size() == 0) {
        return out;
    }
    const MatrixXd k = kernel_matrix(inputs, model.support_vectors, model.hyperparams.kernel);
    for (Index r = 0; r < inputs.rows(); ++r) {
        // Same accumulation order as svr_predict.
        double value = model.bias;
        for (Index i = 0; i < model.dual_coefficients.size(); ++i) {
            value += model.dual_coefficients(i) * k(r, i);
        }
        out(r) = value;
    }
    return out;
}

} // namespace lupi
