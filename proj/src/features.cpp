#include "lupi/features.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

namespace lupi {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string to_string(Gender g)
{
    return g == Gender::Male ? "M" : "F";
}

Gender parse_gender(const std::string& text)
{
    std::string t;
    for (char c : text) {
        t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (t == "m" || t == "male") {
        return Gender::Male;
    }
    if (t == "f" || t == "female") {
        return Gender::Female;
    }
    throw std::invalid_argument("unknown gender '" + text + "'");
}

void MeasurementSchema::validate() const
{
    const int n = static_cast<int>(names.size());
    std::set<std::string> unique(names.begin(), names.end());
    if (static_cast<int>(unique.size()) != n) {
        throw std::invalid_argument("schema: duplicate measurement names");
    }
    for (const std::string& name : names) {
        if (name.empty() || name == "subject_id" || name == "gender" || name == "weight") {
            throw std::invalid_argument("schema: invalid measurement name '" + name + "'");
        }
    }
    if (height_index < 0 || height_index >= n) {
        throw std::invalid_argument("schema: height column missing");
    }
    std::set<int> seen;
    auto check_group = [&](const std::vector<int>& group, const char* label) {
        for (int i : group) {
            if (i < 0 || i >= n) {
                throw std::invalid_argument(std::string("schema: ") + label + " index out of range");
            }
            if (i == height_index) {
                throw std::invalid_argument(std::string("schema: height listed as ") + label);
            }
            if (!seen.insert(i).second) {
                throw std::invalid_argument("schema: '" + names[static_cast<size_t>(i)] +
                                            "' appears in more than one group");
            }
        }
    };
    check_group(observable_indices, "observable");
    check_group(privileged_indices, "privileged");
    if (observable_indices.size() < 2) {
        throw std::invalid_argument("schema: need at least 2 observable measurements");
    }
}

int MeasurementSchema::index_of(const std::string& name) const
{
    const auto it = std::find(names.begin(), names.end(), name);
    return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

MeasurementSchema MeasurementSchema::default_schema()
{
    static const std::vector<std::string> observable = {
        "acromion_radiale_length", "radiale_stylion_length", "hand_length",   "hand_breadth",
        "foot_length",             "foot_breadth",           "knee_height",   "buttock_knee_length",
        "biacromial_breadth",      "hip_breadth",            "arm_span_half",
    };
    static const std::vector<std::string> privileged = {
        "head_breadth",          "head_length",          "face_length",          "head_circumference",
        "neck_circumference",    "chest_circumference",  "waist_circumference",  "hip_circumference",
        "thigh_circumference",   "knee_circumference",   "calf_circumference",   "ankle_circumference",
        "biceps_circumference",  "forearm_circumference", "wrist_circumference", "underbust_circumference",
        "waist_front_length",    "chest_depth",          "waist_depth",          "bizygomatic_breadth",
        "bitragion_breadth",     "menton_sellion_length", "interpupillary_breadth", "neck_base_circumference",
        "armscye_circumference", "vertical_trunk_circumference",
    };
    MeasurementSchema s;
    for (const auto& name : observable) {
        s.observable_indices.push_back(static_cast<int>(s.names.size()));
        s.names.push_back(name);
    }
    for (const auto& name : privileged) {
        s.privileged_indices.push_back(static_cast<int>(s.names.size()));
        s.names.push_back(name);
    }
    s.height_index = static_cast<int>(s.names.size());
    s.names.push_back("stature");
    return s;
}

PairMap ratio_pairs(int n)
{
    PairMap pairs;
    pairs.reserve(static_cast<size_t>(std::max(0, n * (n - 1) / 2)));
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            pairs.emplace_back(i, j);
        }
    }
    return pairs;
}

VectorXd compute_ratios(const VectorXd& measurements)
{
    const Index n = measurements.size();
    for (Index i = 0; i < n; ++i) {
        if (!std::isfinite(measurements(i)) || measurements(i) <= 0.0) {
            throw std::invalid_argument("compute_ratios: measurement " + std::to_string(i) +
                                        " is not a positive finite value");
        }
    }
    VectorXd out(n * (n - 1) / 2);
    Index k = 0;
    for (Index i = 0; i < n; ++i) {
        for (Index j = i + 1; j < n; ++j) {
            out(k++) = measurements(i) / measurements(j);
        }
    }
    return out;
}

namespace {

VectorXd gather(const MeasurementRecord& record, const MeasurementSchema& schema, const std::vector<int>& group)
{
    VectorXd values(static_cast<Index>(group.size()));
    for (size_t g = 0; g < group.size(); ++g) {
        const int idx = group[g];
        const std::string& name = schema.names[static_cast<size_t>(idx)];
        if (idx >= record.measurements.size()) {
            throw DiscardError(name, "missing value in " + name);
        }
        const double v = record.measurements(idx);
        if (std::isnan(v)) {
            throw DiscardError(name, "missing value in " + name);
        }
        if (!std::isfinite(v) || v <= 0.0) {
            throw DiscardError(name, "non-positive value in " + name);
        }
        values(static_cast<Index>(g)) = v;
    }
    return values;
}

PairMap to_schema_pairs(const std::vector<int>& group)
{
    PairMap pairs = ratio_pairs(static_cast<int>(group.size()));
    for (auto& [i, j] : pairs) {
        i = group[static_cast<size_t>(i)];
        j = group[static_cast<size_t>(j)];
    }
    return pairs;
}

} // namespace

FeatureSplit split_features(const MeasurementRecord& record, const MeasurementSchema& schema)
{
    FeatureSplit split;
    split.observable = compute_ratios(gather(record, schema, schema.observable_indices));
    split.privileged = compute_ratios(gather(record, schema, schema.privileged_indices));
    split.observable_pairs = to_schema_pairs(schema.observable_indices);
    split.privileged_pairs = to_schema_pairs(schema.privileged_indices);
    return split;
}

FeatureMatrices build_feature_matrices(const std::vector<MeasurementRecord>& records, const MeasurementSchema& schema)
{
    const Index n = static_cast<Index>(records.size());
    const Index n_obs = static_cast<Index>(schema.observable_indices.size());
    const Index n_priv = static_cast<Index>(schema.privileged_indices.size());
    FeatureMatrices m{MatrixXd(n, n_obs * (n_obs - 1) / 2), MatrixXd(n, n_priv * (n_priv - 1) / 2), VectorXd(n)};
    for (Index r = 0; r < n; ++r) {
        const MeasurementRecord& rec = records[static_cast<size_t>(r)];
        const FeatureSplit s = split_features(rec, schema);
        m.observable.row(r) = s.observable.transpose();
        m.privileged.row(r) = s.privileged.transpose();
        m.heights(r) = rec.height;
    }
    return m;
}

MatrixXd Standardizer::apply(const MatrixXd& rows) const
{
    if (rows.cols() != mean.size()) {
        throw std::invalid_argument("standardize: " + std::to_string(rows.cols()) + " columns, fitted on " +
                                    std::to_string(mean.size()));
    }
    return (rows.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

VectorXd Standardizer::apply_row(const VectorXd& row) const
{
    if (row.size() != mean.size()) {
        throw std::invalid_argument("standardize: dimension " + std::to_string(row.size()) + ", fitted on " +
                                    std::to_string(mean.size()));
    }
    return (row - mean).cwiseQuotient(scale);
}

Standardizer standardize_fit(const MatrixXd& rows)
{
    if (rows.rows() < 2) {
        throw std::invalid_argument("standardize: need at least 2 rows to fit");
    }
    Standardizer s;
    s.mean = rows.colwise().mean().transpose();
    const MatrixXd centered = rows.rowwise() - s.mean.transpose();
    s.scale = (centered.colwise().squaredNorm().transpose() / static_cast<double>(rows.rows())).cwiseSqrt();
    for (Index j = 0; j < s.scale.size(); ++j) {
        if (s.scale(j) < kMinScale) {
            s.scale(j) = 1.0;
        }
    }
    return s;
}

TargetScaler target_scaler_fit(const VectorXd& targets)
{
    const Standardizer s = standardize_fit(targets);
    return TargetScaler{s.mean(0), s.scale(0)};
}

} // namespace lupi
