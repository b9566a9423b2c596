/**
 * @file serialization.hpp
 * @brief JSON documents for trained models, feature selections and schemas.
 *
 * Numbers are written in shortest round-trip form, so loading a saved model
 * reproduces every coefficient bit for bit. Matrices are arrays of rows.
 */

#pragma once

#include "lupi/eval.hpp"
#include "lupi/features.hpp"
#include "lupi/mrmr.hpp"
#include "lupi/pip.hpp"
#include "lupi/regressor.hpp"
#include "lupi/svr.hpp"
#include "lupi/svr_plus.hpp"

#include <json.hpp>

#include <string>
#include <variant>

namespace lupi {

using Json = nlohmann::json;

// nlohmann ADL hooks. Loading throws std::invalid_argument for missing or
// inconsistent fields.
void to_json(Json& j, const SvrModel& m);
void from_json(const Json& j, SvrModel& m);
void to_json(Json& j, const SvrPlusModel& m);
void from_json(const Json& j, SvrPlusModel& m);
void to_json(Json& j, const Standardizer& s);
void from_json(const Json& j, Standardizer& s);
void to_json(Json& j, const TargetScaler& s);
void from_json(const Json& j, TargetScaler& s);
void to_json(Json& j, const SelectionResult& s);
void from_json(const Json& j, SelectionResult& s);
void to_json(Json& j, const QuartileBoundaries& b);
void from_json(const Json& j, QuartileBoundaries& b);
void to_json(Json& j, const SvrHyperparams& p);
void from_json(const Json& j, SvrHyperparams& p);
void to_json(Json& j, const PipModel& m);
/// Requires "version" equal to kPipModelVersion.
void from_json(const Json& j, PipModel& m);
void to_json(Json& j, const SvrRegressor& r);
void from_json(const Json& j, SvrRegressor& r);
void to_json(Json& j, const SvrPlusRegressor& r);
void from_json(const Json& j, SvrPlusRegressor& r);

/// {"names": [...], "observable": [names], "privileged": [names], "height": name}
Json schema_to_json(const MeasurementSchema& schema);
/// Validates the result; throws std::invalid_argument naming the problem.
MeasurementSchema schema_from_json(const Json& j);
MeasurementSchema load_schema(const std::string& path);
void save_schema(const std::string& path, const MeasurementSchema& schema);

/// What `train` writes and `predict` reads: a fitted height model of any method.
struct TrainedModel {
    Method method = Method::Svr;
    std::variant<SvrRegressor, SvrPlusRegressor, PipModel> model;
    MeasurementSchema schema;
    QuartileBoundaries quartile_boundaries; ///< of the training heights, for quartile classes
};

inline constexpr int kModelFileVersion = 1;

Json trained_model_to_json(const TrainedModel& m);
TrainedModel trained_model_from_json(const Json& j);
void save_model(const std::string& path, const TrainedModel& m);
TrainedModel load_model(const std::string& path);

/// Heights in mm for raw observable ratio rows.
Eigen::VectorXd predict_heights(const TrainedModel& m, const Eigen::MatrixXd& observable);

Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& j);

} // namespace lupi
