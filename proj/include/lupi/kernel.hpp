#pragma once

#include <Eigen/Dense>

namespace lupi {

/// Gaussian kernel k(a, b) = exp(-gamma_g * ||a - b||^2).
///
/// Note the width is a plain multiplier on the squared distance (no 1/2sigma^2),
/// so grid values are directly the coefficient in the exponent.
struct KernelParams {
    double gamma_g = 1.0;

    void validate() const;
};

double kernel_value(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b,
                    const KernelParams& params);

/// Entry (i, j) = kernel_value(rows.row(i), cols.row(j)). Samples are rows.
Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& rows, const Eigen::MatrixXd& cols, const KernelParams& params);

/// Symmetric Gram matrix of one sample set; exactly symmetric with unit diagonal.
Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& samples, const KernelParams& params);

} // namespace lupi
