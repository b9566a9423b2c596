/**
 * @file svr.hpp
 * @brief Soft-margin epsilon-SVR with a Gaussian kernel, trained through the
 *        dense QP solver.
 *
 * Training solves the standard dual in the (alpha, alpha*) variables
 *
 *   minimize   1/2 (a - a*)' K (a - a*) + eps * 1'(a + a*) - y'(a - a*)
 *   subject to 1'(a - a*) = 0,   0 <= a, a* <= C
 *
 * and keeps beta = a - a* as the expansion coefficients. At the optimum
 * a_i * a*_i = 0 whenever eps > 0, so a_i = max(beta_i, 0) and
 * a*_i = max(-beta_i, 0) recover the pair.
 */

#pragma once

#include "lupi/kernel.hpp"
#include "lupi/qp.hpp"

#include <Eigen/Dense>

namespace lupi {

struct SvrHyperparams {
    double cost = 1.0;    ///< C
    double epsilon = 0.1; ///< tube half-width
    KernelParams kernel;

    void validate() const;
};

struct SvrDiagnostics {
    double kkt_residual = 0.0;
    Eigen::Index n_support = 0;
    int iterations = 0;
    QpStatus status = QpStatus::Optimal;
};

struct SvrModel {
    Eigen::MatrixXd support_vectors;   ///< one support vector per row
    Eigen::VectorXd dual_coefficients; ///< beta_i, one per support vector
    double bias = 0.0;
    SvrHyperparams hyperparams;
    SvrDiagnostics training_diagnostics;
    Eigen::Index feature_dim = 0;
};

/// |beta| above this fraction of C keeps a training point as a support vector.
inline constexpr double kSupportThreshold = 1e-7;
/// Free support vectors satisfy kFreeMargin*C < |beta| < (1 - kFreeMargin)*C.
inline constexpr double kFreeMargin = 1e-6;

/// Dual problem in (alpha, alpha*) order for a precomputed Gram matrix.
QpProblem svr_dual_problem(const Eigen::MatrixXd& gram, const Eigen::VectorXd& targets, double cost, double epsilon);

/**
 * Bias from KKT conditions given final coefficients: the mean over free
 * support vectors of y_i -/+ eps - (K beta)_i, or, with no free vectors, the
 * midpoint of the interval of biases consistent with every point.
 */
double svr_bias(const Eigen::MatrixXd& gram, const Eigen::VectorXd& targets, const Eigen::VectorXd& beta, double cost,
                double epsilon);

/// Shifts nonzero coefficients so they sum to zero while staying in [-C, C]
/// with unchanged signs.
void restore_balance(Eigen::VectorXd& beta, double cost);

/// Samples are rows of `inputs`. Throws std::invalid_argument on bad input and
/// std::runtime_error when the QP does not reach an acceptable optimum.
SvrModel svr_train(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets, const SvrHyperparams& params,
                   const QpSettings& settings = {});

double svr_predict(const SvrModel& model, const Eigen::Ref<const Eigen::VectorXd>& input);

Eigen::VectorXd svr_predict_batch(const SvrModel& model, const Eigen::MatrixXd& inputs);

} // namespace lupi
