/**
 * @file features.hpp
 * @brief Measurement schema, subject records, ratio features and per-fold
 *        standardization.
 *
 * Every unordered pair i < j of measurements in a group (schema order) gives
 * one feature m_i / m_j, so a group of n measurements yields n(n-1)/2 ratios.
 * Ratios are invariant to a global scale of the subject, which is what makes
 * them usable when absolute measurements are unreliable.
 */

#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lupi {

enum class Gender { Male, Female };

std::string to_string(Gender g);
/// Accepts "M"/"F"/"male"/"female" in any case; throws std::invalid_argument otherwise.
Gender parse_gender(const std::string& text);

struct MeasurementSchema {
    std::vector<std::string> names;      ///< every column, including the height column
    std::vector<int> observable_indices; ///< into names, in feature order
    std::vector<int> privileged_indices; ///< into names, in feature order
    int height_index = -1;

    /// Throws std::invalid_argument naming the first broken invariant.
    void validate() const;
    int index_of(const std::string& name) const; ///< -1 when absent

    /// Reconstructed default: 11 skeletal lengths observable (55 ratios), 26
    /// circumferences, depths and head/face measurements privileged (325
    /// ratios), plus stature as height. With gender that is 39 columns.
    static MeasurementSchema default_schema();
};

struct MeasurementRecord {
    std::string subject_id;
    Gender gender = Gender::Male;
    Eigen::VectorXd measurements; ///< one value per schema name in mm; NaN marks missing
    double height = 0.0;          ///< mm; same value as measurements[height_index]
    std::optional<double> weight; ///< kg, carried through but unused by the default schema
};

/// A record that cannot produce features; `field` names the offending measurement.
class DiscardError : public std::invalid_argument {
public:
    DiscardError(std::string field_name, const std::string& reason)
        : std::invalid_argument(reason), field(std::move(field_name))
    {
    }
    std::string field;
};

using PairMap = std::vector<std::pair<int, int>>;

/// Lexicographic (i, j), i < j, pairs for n items.
PairMap ratio_pairs(int n);

/// Throws std::invalid_argument naming the index of a non-positive or non-finite value.
Eigen::VectorXd compute_ratios(const Eigen::VectorXd& measurements);

struct FeatureSplit {
    Eigen::VectorXd observable;
    Eigen::VectorXd privileged;
    PairMap observable_pairs; ///< schema indices behind each observable ratio
    PairMap privileged_pairs;
};

/// Throws DiscardError when a required measurement is missing or non-positive.
FeatureSplit split_features(const MeasurementRecord& record, const MeasurementSchema& schema);

/// Feature matrices for a list of records, one row per record.
struct FeatureMatrices {
    Eigen::MatrixXd observable;
    Eigen::MatrixXd privileged;
    Eigen::VectorXd heights;
};

FeatureMatrices build_feature_matrices(const std::vector<MeasurementRecord>& records, const MeasurementSchema& schema);

/// Per-column z-score with population standard deviation. Columns whose
/// deviation is below 1e-12 are only centered.
struct Standardizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale; ///< divisor per column (1 for near-constant columns)

    Eigen::MatrixXd apply(const Eigen::MatrixXd& rows) const;
    Eigen::VectorXd apply_row(const Eigen::VectorXd& row) const;
    Eigen::Index dim() const { return mean.size(); }
};

inline constexpr double kMinScale = 1e-12;

Standardizer standardize_fit(const Eigen::MatrixXd& rows);

/// Scalar version used for regression targets.
struct TargetScaler {
    double mean = 0.0;
    double scale = 1.0;

    double forward(double y) const { return (y - mean) / scale; }
    double inverse(double z) const { return z * scale + mean; }
};

TargetScaler target_scaler_fit(const Eigen::VectorXd& targets);

} // namespace lupi
