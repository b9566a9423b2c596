#include "lupi/kernel.hpp"

#include <cmath>
#include <stdexcept>

namespace lupi {

void KernelParams::validate() const
{
    if (!(gamma_g > 0.0) || !std::isfinite(gamma_g)) {
        throw std::invalid_argument("kernel: gamma_g must be positive and finite");
    }
}

double kernel_value(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b,
                    const KernelParams& params)
{
    params.validate();
    if (a.size() != b.size()) {
        throw std::invalid_argument("kernel: dimension mismatch");
    }
    if (!a.allFinite() || !b.allFinite()) {
        throw std::invalid_argument("kernel: non-finite input component");
    }
    return std::exp(-params.gamma_g * (a - b).squaredNorm());
}

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& rows, const Eigen::MatrixXd& cols, const KernelParams& params)
{
    params.validate();
    if (rows.cols() != cols.cols()) {
        throw std::invalid_argument("kernel: dimension mismatch");
    }
    if (!rows.allFinite() || !cols.allFinite()) {
        throw std::invalid_argument("kernel: non-finite input component");
    }
    Eigen::MatrixXd k(rows.rows(), cols.rows());
    for (Eigen::Index j = 0; j < cols.rows(); ++j) {
        for (Eigen::Index i = 0; i < rows.rows(); ++i) {
            k(i, j) = std::exp(-params.gamma_g * (rows.row(i) - cols.row(j)).squaredNorm());
        }
    }
    return k;
}

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& samples, const KernelParams& params)
{
    params.validate();
    if (!samples.allFinite()) {
        throw std::invalid_argument("kernel: non-finite input component");
    }
    const Eigen::Index n = samples.rows();
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        k(j, j) = 1.0;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            k(i, j) = std::exp(-params.gamma_g * (samples.row(i) - samples.row(j)).squaredNorm());
            k(j, i) = k(i, j);
        }
    }
    return k;
}

} // namespace lupi
