/**
 * @file mrmr.hpp
 * @brief Minimum-redundancy maximum-relevance feature selection, MID scheme.
 *
 * Features and target are discretized into equal-frequency bins, mutual
 * information is computed from the empirical joint distribution in nats, and
 * features are picked greedily: first the most relevant, then at every step
 * the candidate maximizing I(f; y) - mean_{s in S} I(f; s).
 */

#pragma once

#include <Eigen/Dense>

#include <vector>

namespace lupi {

struct DiscretizationConfig {
    int n_bins = 10;

    void validate() const;
};

/**
 * Equal-frequency labels in [0, n_bins): the value of rank r (0-based, stable
 * sort) goes to bin floor(r * n_bins / n). Tied values all take the bin of the
 * lowest rank among them, so a constant vector maps to bin 0.
 */
std::vector<int> discretize(const Eigen::VectorXd& values, const DiscretizationConfig& config);

/// I(a; b) in nats for non-negative integer labels.
double mutual_information(const std::vector<int>& a, const std::vector<int>& b);

struct SelectionResult {
    std::vector<int> selected_indices;  ///< in selection order
    Eigen::VectorXd relevance_scores;   ///< I(f; y) for every feature
    Eigen::VectorXd mid_scores_at_selection; ///< MID score of each pick when it was made
};

/// Scores closer than this are treated as tied; the lower feature index wins.
inline constexpr double kMidTieTolerance = 1e-12;

/// `features` is n x p with one sample per row. Throws std::invalid_argument
/// for k > p, k < 0, fewer than 2 samples or a target length mismatch.
SelectionResult select_mid(const Eigen::MatrixXd& features, const Eigen::VectorXd& target, int k,
                           const DiscretizationConfig& config = {});

} // namespace lupi
