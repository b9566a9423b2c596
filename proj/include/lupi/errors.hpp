#pragma once

#include "lupi/qp.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <utility>

namespace lupi {

/// A training QP ended without a usable optimum.
class QpFailure : public std::runtime_error {
public:
    QpFailure(const std::string& stage, const QpSolution& solution)
        : std::runtime_error(stage + ": QP " + to_string(solution.status) + " after " +
                             std::to_string(solution.iterations) + " iterations, KKT residual " +
                             std::to_string(solution.kkt_residual)),
          status(solution.status), kkt_residual(solution.kkt_residual), iterations(solution.iterations)
    {
    }

    QpStatus status;
    double kkt_residual;
    int iterations;
};

/// Wraps a failure with the pipeline stage it came from, e.g. "feature predictor 3".
class StageError : public std::runtime_error {
public:
    StageError(std::string stage_name, const std::string& what)
        : std::runtime_error(stage_name + ": " + what), stage(std::move(stage_name))
    {
    }

    std::string stage;
};

/// Interior-point runs that stop at the iteration cap a little short of the
/// requested tolerance are still accepted for model fitting.
inline constexpr double kAcceptableResidual = 1e-6;

inline bool qp_solution_usable(const QpSolution& s, double tolerance)
{
    if (s.status == QpStatus::Optimal) {
        return true;
    }
    return s.status == QpStatus::MaxIterations && s.kkt_residual <= std::max(tolerance, kAcceptableResidual);
}

} // namespace lupi
