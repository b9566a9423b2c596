/**
 * @file svr_plus.hpp
 * @brief epsilon-SVR+ : support vector regression whose two slack families are
 *        modelled by correcting functions on privileged features.
 *
 * Primal, with phi_k(x*) = <w_k*, x*> + b_k*:
 *
 *   min  1/2 |w|^2 + gamma/2 (|w1*|^2 + |w2*|^2) + C sum phi_1(x*_i) + C sum phi_2(x*_i)
 *   s.t. y_i - f(x_i) <= eps + phi_1(x*_i),  f(x_i) - y_i <= eps + phi_2(x*_i),
 *        phi_1(x*_i) >= 0,  phi_2(x*_i) >= 0.
 *
 * With multipliers a, a*, m, v >= 0 for the four constraint families, writing
 * beta = a - a*, rho1 = a + m - C, rho2 = a* + v - C, K the decision kernel
 * and P = K* / gamma the scaled correcting kernel, the dual solved here is
 *
 *   min  1/2 beta'K beta + 1/2 (a+m)'P(a+m) + 1/2 (a*+v)'P(a*+v)
 *        + eps 1'(a + a*) - y'beta - C 1'P(a + m + a* + v)
 *   s.t. 1'beta = 0,  1'(a + m) = nC,  1'(a* + v) = nC,  all variables >= 0.
 *
 * Variables are ordered [a; a*; m; v]. Stationarity gives w = sum beta_i x_i and
 * w_k* = (1/gamma) sum rho_k,i x*_i. The three biases are the negated equality
 * multipliers (b, b1*, b2* in constraint order). Each variable is also bounded
 * by nC, which the equalities already imply.
 */

#pragma once

#include "lupi/kernel.hpp"
#include "lupi/qp.hpp"

#include <Eigen/Dense>

namespace lupi {

struct SvrPlusHyperparams {
    double cost = 1.0;
    double epsilon = 0.1;
    double gamma_correcting = 1.0; ///< weight of |w1*|^2 + |w2*|^2
    KernelParams kernel_decision;
    KernelParams kernel_correcting;

    void validate() const;
};

struct SvrPlusDiagnostics {
    double kkt_residual = 0.0;
    double objective = 0.0; ///< dual objective (maximization form) at the solution
    Eigen::Index n_support = 0;
    int iterations = 0;
    QpStatus status = QpStatus::Optimal;
};

struct SvrPlusModel {
    // Decision function over the observable space; the only part used to predict.
    Eigen::MatrixXd support_vectors;
    Eigen::VectorXd dual_coefficients;
    double bias = 0.0;

    // Correcting functions phi_k(x*) = sum_j c_k,j K*(x*_j, x*) + b_k*.
    Eigen::MatrixXd privileged_vectors;
    Eigen::VectorXd correcting_coefficients_1;
    Eigen::VectorXd correcting_coefficients_2;
    double correcting_bias_1 = 0.0;
    double correcting_bias_2 = 0.0;

    SvrPlusHyperparams hyperparams;
    SvrPlusDiagnostics training_diagnostics;
    Eigen::Index feature_dim = 0;
    Eigen::Index privileged_dim = 0;
};

QpProblem svr_plus_dual_problem(const Eigen::MatrixXd& gram, const Eigen::MatrixXd& privileged_gram,
                                const Eigen::VectorXd& targets, const SvrPlusHyperparams& params);

/// Rows of `inputs` and `privileged` describe the same training samples.
/// Throws std::invalid_argument on bad input and QpFailure when the dual
/// cannot be solved to an acceptable residual.
SvrPlusModel svr_plus_train(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& privileged,
                            const Eigen::VectorXd& targets, const SvrPlusHyperparams& params,
                            const QpSettings& settings = {});

/// Uses the observable-space expansion only.
double svr_plus_predict(const SvrPlusModel& model, const Eigen::Ref<const Eigen::VectorXd>& input);

Eigen::VectorXd svr_plus_predict_batch(const SvrPlusModel& model, const Eigen::MatrixXd& inputs);

struct CorrectingValues {
    Eigen::VectorXd first;  ///< phi_1 per row, bounds the upward tube violation
    Eigen::VectorXd second; ///< phi_2 per row, bounds the downward tube violation
};

CorrectingValues reconstruct_correcting_values(const SvrPlusModel& model, const Eigen::MatrixXd& privileged);

} // namespace lupi
