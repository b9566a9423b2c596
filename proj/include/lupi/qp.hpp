/**
 * @file qp.hpp
 * @brief Dense convex quadratic programming.
 *
 * Solves problems of the form
 *
 *   minimize    1/2 x^T H x + g^T x
 *   subject to  A_eq x = b_eq
 *               lower <= x <= upper
 *
 * with a primal-dual interior-point method (Mehrotra predictor-corrector).
 * H only has to be positive semidefinite. Bounds may be infinite; use
 * `unbounded` for a missing bound.
 */

#pragma once

#include <Eigen/Dense>

#include <limits>
#include <string>

namespace lupi {

/// Marker for an absent bound. Only +/- this value counts as "no bound".
inline constexpr double unbounded = std::numeric_limits<double>::infinity();

struct QpProblem {
    Eigen::MatrixXd H;     ///< n x n, symmetric PSD
    Eigen::VectorXd g;     ///< n
    Eigen::MatrixXd A_eq;  ///< m x n (m may be 0)
    Eigen::VectorXd b_eq;  ///< m
    Eigen::VectorXd lower; ///< n, entries may be -unbounded
    Eigen::VectorXd upper; ///< n, entries may be +unbounded

    /// Unconstrained problem of the right shape; callers fill in constraints.
    static QpProblem unconstrained(Eigen::MatrixXd H, Eigen::VectorXd g);

    Eigen::Index size() const { return g.size(); }
    Eigen::Index num_equalities() const { return A_eq.rows(); }

    /// Checks dimensions, finiteness, symmetry and bound ordering.
    /// Throws std::invalid_argument.
    void validate() const;
};

enum class QpStatus { Optimal, MaxIterations, Infeasible };

std::string to_string(QpStatus status);

struct QpSettings {
    /// 1e-8 leaves weakly active bounds off by up to ~1e-4 in x; 1e-10 costs one or two iterations.
    double tolerance = 1e-10;
    int max_iterations = 100;
    /// Verify H is PSD (one extra Cholesky) before solving.
    bool check_convexity = true;
};

struct QpSolution {
    Eigen::VectorXd x;
    Eigen::VectorXd eq_multipliers;    ///< y in  H x + g - A^T y - z_l + z_u = 0
    Eigen::VectorXd lower_multipliers; ///< z_l >= 0, zero where lower is unbounded
    Eigen::VectorXd upper_multipliers; ///< z_u >= 0, zero where upper is unbounded
    double objective = 0.0;
    double kkt_residual = unbounded;
    int iterations = 0;
    QpStatus status = QpStatus::MaxIterations;
};

/// 1/2 x^T H x + g^T x
double qp_objective(const QpProblem& problem, const Eigen::VectorXd& x);

/// Lagrangian value at (x, multipliers). Equals the objective at a KKT point.
double qp_lagrangian(const QpProblem& problem, const QpSolution& solution);

/**
 * Largest violation among stationarity, primal feasibility (equalities and
 * bounds), dual feasibility and complementarity.
 *
 * Each term is divided by the magnitude of the quantities it balances,
 * floored at 1, so the measure is comparable across problem scalings while
 * reducing to the plain absolute violation on O(1) problems.
 */
double kkt_residual(const QpProblem& problem, const QpSolution& solution);

/// Throws std::invalid_argument on malformed or (when checked) non-convex input.
/// Never throws for numerical trouble; that is reported through `status`.
QpSolution solve(const QpProblem& problem, const QpSettings& settings = {});

} // namespace lupi
