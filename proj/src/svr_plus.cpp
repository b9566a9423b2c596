#include "lupi/svr_plus.hpp"

#include "lupi/errors.hpp"
#include "lupi/svr.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace lupi {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void SvrPlusHyperparams::validate() const
{
    if (!(cost > 0.0) || !std::isfinite(cost)) {
        throw std::invalid_argument("svr+: cost C must be positive");
    }
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
        throw std::invalid_argument("svr+: epsilon must be non-negative");
    }
    if (!(gamma_correcting > 0.0) || !std::isfinite(gamma_correcting)) {
        throw std::invalid_argument("svr+: correcting-space weight gamma must be positive");
    }
    kernel_decision.validate();
    kernel_correcting.validate();
}

QpProblem svr_plus_dual_problem(const MatrixXd& gram, const MatrixXd& privileged_gram, const VectorXd& targets,
                                const SvrPlusHyperparams& params)
{
    const Index n = targets.size();
    const double c = params.cost;
    const MatrixXd p = privileged_gram / params.gamma_correcting;
    const VectorXd p_row_sums = p.rowwise().sum();

    // Blocks: 0 = a, 1 = a*, 2 = m, 3 = v.
    QpProblem q;
    q.H = MatrixXd::Zero(4 * n, 4 * n);
    auto block = [&](int r, int col) { return q.H.block(r * n, col * n, n, n); };
    block(0, 0) = gram + p;
    block(1, 1) = gram + p;
    block(0, 1) = -gram;
    block(1, 0) = -gram;
    block(0, 2) = p;
    block(2, 0) = p;
    block(1, 3) = p;
    block(3, 1) = p;
    block(2, 2) = p;
    block(3, 3) = p;

    q.g.resize(4 * n);
    q.g.segment(0, n) = params.epsilon - targets.array() - c * p_row_sums.array();
    q.g.segment(n, n) = params.epsilon + targets.array() - c * p_row_sums.array();
    q.g.segment(2 * n, n) = -c * p_row_sums;
    q.g.segment(3 * n, n) = -c * p_row_sums;

    q.A_eq = MatrixXd::Zero(3, 4 * n);
    q.A_eq.block(0, 0, 1, n).setOnes();
    q.A_eq.block(0, n, 1, n).setConstant(-1.0);
    q.A_eq.block(1, 0, 1, n).setOnes();
    q.A_eq.block(1, 2 * n, 1, n).setOnes();
    q.A_eq.block(2, n, 1, n).setOnes();
    q.A_eq.block(2, 3 * n, 1, n).setOnes();
    q.b_eq = VectorXd(3);
    q.b_eq << 0.0, static_cast<double>(n) * c, static_cast<double>(n) * c;

    q.lower = VectorXd::Zero(4 * n);
    q.upper = VectorXd::Constant(4 * n, static_cast<double>(n) * c);
    return q;
}

namespace {

void check_training_inputs(const MatrixXd& inputs, const MatrixXd& privileged, const VectorXd& targets)
{
    if (inputs.rows() < 2) {
        throw std::invalid_argument("svr+: need at least 2 training samples");
    }
    if (inputs.rows() != targets.size() || privileged.rows() != targets.size()) {
        throw std::invalid_argument("svr+: " + std::to_string(inputs.rows()) + " inputs, " +
                                    std::to_string(privileged.rows()) + " privileged rows and " +
                                    std::to_string(targets.size()) + " targets");
    }
    if (privileged.cols() == 0) {
        throw std::invalid_argument("svr+: privileged vectors are empty");
    }
    if (!targets.allFinite() || !inputs.allFinite() || !privileged.allFinite()) {
        throw std::invalid_argument("svr+: non-finite training data");
    }
}

} // namespace

SvrPlusModel svr_plus_train(const MatrixXd& inputs, const MatrixXd& privileged, const VectorXd& targets,
                            const SvrPlusHyperparams& params, const QpSettings& settings)
{
    params.validate();
    check_training_inputs(inputs, privileged, targets);
    const Index n = inputs.rows();
    const double c = params.cost;

    const MatrixXd gram = kernel_matrix(inputs, params.kernel_decision);
    const MatrixXd privileged_gram = kernel_matrix(privileged, params.kernel_correcting);
    const QpProblem dual = svr_plus_dual_problem(gram, privileged_gram, targets, params);
    QpSettings qp_settings = settings;
    qp_settings.check_convexity = false; // sum of PSD Gram blocks
    const QpSolution sol = solve(dual, qp_settings);
    if (!qp_solution_usable(sol, settings.tolerance)) {
        throw QpFailure("svr+", sol);
    }

    const VectorXd a = sol.x.segment(0, n);
    const VectorXd a_star = sol.x.segment(n, n);
    const VectorXd m = sol.x.segment(2 * n, n);
    const VectorXd v = sol.x.segment(3 * n, n);
    const VectorXd beta = a - a_star;
    const VectorXd rho1 = (a + m).array() - c;
    const VectorXd rho2 = (a_star + v).array() - c;

    SvrPlusModel model;
    model.hyperparams = params;
    model.feature_dim = inputs.cols();
    model.privileged_dim = privileged.cols();

    const double threshold = kSupportThreshold * c;
    std::vector<Index> support;
    std::vector<Index> correcting;
    for (Index i = 0; i < n; ++i) {
        if (std::abs(beta(i)) > threshold) {
            support.push_back(i);
        }
        if (std::abs(rho1(i)) > threshold || std::abs(rho2(i)) > threshold) {
            correcting.push_back(i);
        }
    }
    model.support_vectors = inputs(support, Eigen::all);
    model.dual_coefficients = beta(support);
    model.bias = -sol.eq_multipliers(0);

    model.privileged_vectors = privileged(correcting, Eigen::all);
    model.correcting_coefficients_1 = rho1(correcting) / params.gamma_correcting;
    model.correcting_coefficients_2 = rho2(correcting) / params.gamma_correcting;
    model.correcting_bias_1 = -sol.eq_multipliers(1);
    model.correcting_bias_2 = -sol.eq_multipliers(2);

    const double gamma = params.gamma_correcting;
    model.training_diagnostics.objective = -0.5 * beta.dot(gram * beta) -
                                           0.5 / gamma * rho1.dot(privileged_gram * rho1) -
                                           0.5 / gamma * rho2.dot(privileged_gram * rho2) -
                                           params.epsilon * (a.sum() + a_star.sum()) + targets.dot(beta);
    model.training_diagnostics.kkt_residual = sol.kkt_residual;
    model.training_diagnostics.n_support = static_cast<Index>(support.size());
    model.training_diagnostics.iterations = sol.iterations;
    model.training_diagnostics.status = sol.status;
    return model;
}

double svr_plus_predict(const SvrPlusModel& model, const Eigen::Ref<const VectorXd>& input)
{
    if (input.size() != model.feature_dim) {
        throw std::invalid_argument("svr+: input has dimension " + std::to_string(input.size()) +
                                    ", model expects " + std::to_string(model.feature_dim));
    }
    double value = model.bias;
    for (Index i = 0; i < model.dual_coefficients.size(); ++i) {
        value += model.dual_coefficients(i) *
                 kernel_value(model.support_vectors.row(i).transpose(), input, model.hyperparams.kernel_decision);
    }
    return value;
}

VectorXd svr_plus_predict_batch(const SvrPlusModel& model, const MatrixXd& inputs)
{
    if (inputs.rows() > 0 && inputs.cols() != model.feature_dim) {
        throw std::invalid_argument("svr+: input has dimension " + std::to_string(inputs.cols()) +
                                    ", model expects " + std::to_string(model.feature_dim));
    }
    VectorXd out = VectorXd::Constant(inputs.rows(), model.bias);
    if (inputs.rows() == 0 || model.dual_coefficients.size() == 0) {
        return out;
    }
    const MatrixXd k = kernel_matrix(inputs, model.support_vectors, model.hyperparams.kernel_decision);
    for (Index r = 0; r < inputs.rows(); ++r) {
        double value = model.bias;
        for (Index i = 0; i < model.dual_coefficients.size(); ++i) {
            value += model.dual_coefficients(i) * k(r, i);
        }
        out(r) = value;
    }
    return out;
}

CorrectingValues reconstruct_correcting_values(const SvrPlusModel& model, const MatrixXd& privileged)
{
    if (privileged.rows() > 0 && privileged.cols() != model.privileged_dim) {
        throw std::invalid_argument("svr+: privileged input has dimension " + std::to_string(privileged.cols()) +
                                    ", model expects " + std::to_string(model.privileged_dim));
    }
    CorrectingValues out{VectorXd::Constant(privileged.rows(), model.correcting_bias_1),
                         VectorXd::Constant(privileged.rows(), model.correcting_bias_2)};
    if (privileged.rows() == 0 || model.privileged_vectors.rows() == 0) {
        return out;
    }
    const MatrixXd k = kernel_matrix(privileged, model.privileged_vectors, model.hyperparams.kernel_correcting);
    out.first += k * model.correcting_coefficients_1;
    out.second += k * model.correcting_coefficients_2;
    return out;
}

} // namespace lupi
