#include "lupi/serialization.hpp"

#include <fstream>
#include <stdexcept>

namespace lupi {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

const Json& field(const Json& j, const char* name)
{
    if (!j.is_object()) {
        throw std::invalid_argument(std::string("json: expected an object holding '") + name + "'");
    }
    const auto it = j.find(name);
    if (it == j.end()) {
        throw std::invalid_argument(std::string("json: missing field '") + name + "'");
    }
    return *it;
}

double number(const Json& j, const char* name)
{
    const Json& v = field(j, name);
    if (!v.is_number()) {
        throw std::invalid_argument(std::string("json: field '") + name + "' must be a number");
    }
    return v.get<double>();
}

Index count(const Json& j, const char* name)
{
    const Json& v = field(j, name);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
        throw std::invalid_argument(std::string("json: field '") + name + "' must be a non-negative integer");
    }
    return static_cast<Index>(v.get<long long>());
}

Json vector_json(const VectorXd& v)
{
    return Json(std::vector<double>(v.data(), v.data() + v.size()));
}

VectorXd vector_from(const Json& j, const char* name)
{
    const Json& v = field(j, name);
    if (!v.is_array()) {
        throw std::invalid_argument(std::string("json: field '") + name + "' must be an array");
    }
    const std::vector<double> values = v.get<std::vector<double>>();
    return Eigen::Map<const VectorXd>(values.data(), static_cast<Index>(values.size()));
}

Json matrix_json(const MatrixXd& m)
{
    Json rows = Json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        rows.push_back(vector_json(m.row(i).transpose()));
    }
    return rows;
}

MatrixXd matrix_from(const Json& j, const char* name, Index cols)
{
    const Json& v = field(j, name);
    if (!v.is_array()) {
        throw std::invalid_argument(std::string("json: field '") + name + "' must be an array of rows");
    }
    MatrixXd m(static_cast<Index>(v.size()), cols);
    for (size_t i = 0; i < v.size(); ++i) {
        const std::vector<double> row = v[i].get<std::vector<double>>();
        if (static_cast<Index>(row.size()) != cols) {
            throw std::invalid_argument(std::string("json: row ") + std::to_string(i) + " of '" + name + "' has " +
                                        std::to_string(row.size()) + " values, expected " + std::to_string(cols));
        }
        m.row(static_cast<Index>(i)) = Eigen::Map<const VectorXd>(row.data(), cols).transpose();
    }
    return m;
}

QpStatus parse_status(const std::string& s)
{
    for (QpStatus st : {QpStatus::Optimal, QpStatus::MaxIterations, QpStatus::Infeasible}) {
        if (to_string(st) == s) {
            return st;
        }
    }
    throw std::invalid_argument("json: unknown solver status '" + s + "'");
}

template <typename Diagnostics>
Json diagnostics_json(const Diagnostics& d)
{
    return {{"kkt_residual", d.kkt_residual},
            {"n_support", d.n_support},
            {"iterations", d.iterations},
            {"status", to_string(d.status)}};
}

template <typename Diagnostics>
void diagnostics_from(const Json& j, Diagnostics& d)
{
    if (!j.contains("training_diagnostics")) {
        return;
    }
    const Json& t = j["training_diagnostics"];
    d.kkt_residual = number(t, "kkt_residual");
    d.n_support = count(t, "n_support");
    d.iterations = static_cast<int>(count(t, "iterations"));
    d.status = parse_status(field(t, "status").get<std::string>());
}

void check_lengths(Index vectors, Index coefficients, const char* what)
{
    if (vectors != coefficients) {
        throw std::invalid_argument(std::string("json: ") + what + ": " + std::to_string(vectors) +
                                    " vectors but " + std::to_string(coefficients) + " coefficients");
    }
}

std::vector<std::string> names_at(const MeasurementSchema& s, const std::vector<int>& idx)
{
    std::vector<std::string> out;
    for (int i : idx) {
        out.push_back(s.names[static_cast<size_t>(i)]);
    }
    return out;
}

} // namespace

void to_json(Json& j, const SvrHyperparams& p)
{
    j = {{"cost", p.cost}, {"epsilon", p.epsilon}, {"gamma_g", p.kernel.gamma_g}};
}

void from_json(const Json& j, SvrHyperparams& p)
{
    p.cost = number(j, "cost");
    p.epsilon = number(j, "epsilon");
    p.kernel.gamma_g = number(j, "gamma_g");
}

void to_json(Json& j, const SvrModel& m)
{
    j = {{"support_vectors", matrix_json(m.support_vectors)},
         {"dual_coefficients", vector_json(m.dual_coefficients)},
         {"bias", m.bias},
         {"cost", m.hyperparams.cost},
         {"epsilon", m.hyperparams.epsilon},
         {"gamma_g", m.hyperparams.kernel.gamma_g},
         {"feature_dim", m.feature_dim},
         {"training_diagnostics", diagnostics_json(m.training_diagnostics)}};
}

void from_json(const Json& j, SvrModel& m)
{
    m.feature_dim = count(j, "feature_dim");
    m.support_vectors = matrix_from(j, "support_vectors", m.feature_dim);
    m.dual_coefficients = vector_from(j, "dual_coefficients");
    check_lengths(m.support_vectors.rows(), m.dual_coefficients.size(), "svr");
    m.bias = number(j, "bias");
    from_json(j, m.hyperparams);
    diagnostics_from(j, m.training_diagnostics);
}

void to_json(Json& j, const SvrPlusModel& m)
{
    j = {{"support_vectors", matrix_json(m.support_vectors)},
         {"dual_coefficients", vector_json(m.dual_coefficients)},
         {"bias", m.bias},
         {"cost", m.hyperparams.cost},
         {"epsilon", m.hyperparams.epsilon},
         {"gamma_g", m.hyperparams.kernel_decision.gamma_g},
         {"feature_dim", m.feature_dim},
         {"gamma", m.hyperparams.gamma_correcting},
         {"gamma_g_star", m.hyperparams.kernel_correcting.gamma_g},
         {"privileged_dim", m.privileged_dim},
         {"privileged_vectors", matrix_json(m.privileged_vectors)},
         {"correcting_coefficients_1", vector_json(m.correcting_coefficients_1)},
         {"correcting_coefficients_2", vector_json(m.correcting_coefficients_2)},
         {"correcting_bias_1", m.correcting_bias_1},
         {"correcting_bias_2", m.correcting_bias_2},
         {"training_diagnostics", diagnostics_json(m.training_diagnostics)}};
    j["training_diagnostics"]["objective"] = m.training_diagnostics.objective;
}

void from_json(const Json& j, SvrPlusModel& m)
{
    m.feature_dim = count(j, "feature_dim");
    m.privileged_dim = count(j, "privileged_dim");
    m.support_vectors = matrix_from(j, "support_vectors", m.feature_dim);
    m.dual_coefficients = vector_from(j, "dual_coefficients");
    check_lengths(m.support_vectors.rows(), m.dual_coefficients.size(), "svr+ decision part");
    m.bias = number(j, "bias");
    m.privileged_vectors = matrix_from(j, "privileged_vectors", m.privileged_dim);
    m.correcting_coefficients_1 = vector_from(j, "correcting_coefficients_1");
    m.correcting_coefficients_2 = vector_from(j, "correcting_coefficients_2");
    check_lengths(m.privileged_vectors.rows(), m.correcting_coefficients_1.size(), "svr+ correcting part");
    check_lengths(m.privileged_vectors.rows(), m.correcting_coefficients_2.size(), "svr+ correcting part");
    m.correcting_bias_1 = number(j, "correcting_bias_1");
    m.correcting_bias_2 = number(j, "correcting_bias_2");
    m.hyperparams.cost = number(j, "cost");
    m.hyperparams.epsilon = number(j, "epsilon");
    m.hyperparams.kernel_decision.gamma_g = number(j, "gamma_g");
    m.hyperparams.gamma_correcting = number(j, "gamma");
    m.hyperparams.kernel_correcting.gamma_g = number(j, "gamma_g_star");
    diagnostics_from(j, m.training_diagnostics);
    if (j.contains("training_diagnostics")) {
        m.training_diagnostics.objective = number(j["training_diagnostics"], "objective");
    }
}

void to_json(Json& j, const Standardizer& s)
{
    j = {{"mean", vector_json(s.mean)}, {"scale", vector_json(s.scale)}};
}

void from_json(const Json& j, Standardizer& s)
{
    s.mean = vector_from(j, "mean");
    s.scale = vector_from(j, "scale");
    if (s.mean.size() != s.scale.size()) {
        throw std::invalid_argument("json: standardizer mean and scale lengths differ");
    }
}

void to_json(Json& j, const TargetScaler& s)
{
    j = {{"mean", s.mean}, {"scale", s.scale}};
}

void from_json(const Json& j, TargetScaler& s)
{
    s.mean = number(j, "mean");
    s.scale = number(j, "scale");
}

void to_json(Json& j, const SelectionResult& s)
{
    j = {{"selected_indices", s.selected_indices},
         {"relevance_scores", vector_json(s.relevance_scores)},
         {"mid_scores_at_selection", vector_json(s.mid_scores_at_selection)}};
}

void from_json(const Json& j, SelectionResult& s)
{
    s.selected_indices = field(j, "selected_indices").get<std::vector<int>>();
    s.relevance_scores = vector_from(j, "relevance_scores");
    s.mid_scores_at_selection = vector_from(j, "mid_scores_at_selection");
    for (int i : s.selected_indices) {
        if (i < 0 || i >= s.relevance_scores.size()) {
            throw std::invalid_argument("json: selected index " + std::to_string(i) + " out of range");
        }
    }
}

void to_json(Json& j, const QuartileBoundaries& b)
{
    j = {{"q25", b.q25}, {"q50", b.q50}, {"q75", b.q75}};
}

void from_json(const Json& j, QuartileBoundaries& b)
{
    b.q25 = number(j, "q25");
    b.q50 = number(j, "q50");
    b.q75 = number(j, "q75");
}

void to_json(Json& j, const PipModel& m)
{
    j = {{"version", m.version},
         {"k", m.hyperparams.k},
         {"n_bins", m.hyperparams.selection.n_bins},
         {"feature_stage", m.hyperparams.feature_stage},
         {"height_stage", m.hyperparams.height_stage},
         {"selection", m.selection},
         {"feature_predictors", m.feature_predictors},
         {"height_model", m.height_model},
         {"observable_scaler", m.observable_scaler},
         {"privileged_scaler", m.privileged_scaler},
         {"predicted_scaler", m.predicted_scaler},
         {"height_scaler", m.height_scaler},
         {"quartile_boundaries", m.quartile_boundaries}};
}

void from_json(const Json& j, PipModel& m)
{
    if (!j.is_object() || !j.contains("version")) {
        throw std::invalid_argument("json: PIP model lacks a version field");
    }
    m.version = static_cast<int>(count(j, "version"));
    if (m.version != kPipModelVersion) {
        throw std::invalid_argument("json: unsupported PIP model version " + std::to_string(m.version));
    }
    m.hyperparams.k = static_cast<int>(count(j, "k"));
    m.hyperparams.selection.n_bins = static_cast<int>(count(j, "n_bins"));
    m.hyperparams.feature_stage = field(j, "feature_stage").get<SvrHyperparams>();
    m.hyperparams.height_stage = field(j, "height_stage").get<SvrHyperparams>();
    m.selection = field(j, "selection").get<SelectionResult>();
    m.feature_predictors = field(j, "feature_predictors").get<std::vector<SvrModel>>();
    m.height_model = field(j, "height_model").get<SvrModel>();
    m.observable_scaler = field(j, "observable_scaler").get<Standardizer>();
    m.privileged_scaler = field(j, "privileged_scaler").get<Standardizer>();
    m.predicted_scaler = field(j, "predicted_scaler").get<Standardizer>();
    m.height_scaler = field(j, "height_scaler").get<TargetScaler>();
    m.quartile_boundaries = field(j, "quartile_boundaries").get<QuartileBoundaries>();

    const size_t k = static_cast<size_t>(m.hyperparams.k);
    if (m.selection.selected_indices.size() != k || m.feature_predictors.size() != k ||
        m.predicted_scaler.dim() != static_cast<Index>(k)) {
        throw std::invalid_argument("json: PIP model parts disagree on K = " + std::to_string(k));
    }
    if (m.height_model.feature_dim != m.observable_scaler.dim() + static_cast<Index>(k)) {
        throw std::invalid_argument("json: PIP height model input dimension does not match");
    }
}

void to_json(Json& j, const SvrRegressor& r)
{
    j = {{"input_scaler", r.input_scaler}, {"target_scaler", r.target_scaler}, {"model", r.model}};
}

void from_json(const Json& j, SvrRegressor& r)
{
    r.input_scaler = field(j, "input_scaler").get<Standardizer>();
    r.target_scaler = field(j, "target_scaler").get<TargetScaler>();
    r.model = field(j, "model").get<SvrModel>();
}

void to_json(Json& j, const SvrPlusRegressor& r)
{
    j = {{"input_scaler", r.input_scaler},
         {"privileged_scaler", r.privileged_scaler},
         {"target_scaler", r.target_scaler},
         {"model", r.model}};
}

void from_json(const Json& j, SvrPlusRegressor& r)
{
    r.input_scaler = field(j, "input_scaler").get<Standardizer>();
    r.privileged_scaler = field(j, "privileged_scaler").get<Standardizer>();
    r.target_scaler = field(j, "target_scaler").get<TargetScaler>();
    r.model = field(j, "model").get<SvrPlusModel>();
}

Json schema_to_json(const MeasurementSchema& schema)
{
    return {{"names", schema.names},
            {"observable", names_at(schema, schema.observable_indices)},
            {"privileged", names_at(schema, schema.privileged_indices)},
            {"height", schema.names.at(static_cast<size_t>(schema.height_index))}};
}

MeasurementSchema schema_from_json(const Json& j)
{
    MeasurementSchema s;
    s.names = field(j, "names").get<std::vector<std::string>>();
    auto lookup = [&](const std::string& name) {
        const int i = s.index_of(name);
        if (i < 0) {
            throw std::invalid_argument("schema: '" + name + "' is not among the names");
        }
        return i;
    };
    for (const std::string& n : field(j, "observable").get<std::vector<std::string>>()) {
        s.observable_indices.push_back(lookup(n));
    }
    for (const std::string& n : field(j, "privileged").get<std::vector<std::string>>()) {
        s.privileged_indices.push_back(lookup(n));
    }
    s.height_index = lookup(field(j, "height").get<std::string>());
    s.validate();
    return s;
}

Json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open '" + path + "'");
    }
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw std::runtime_error("'" + path + "' is not valid JSON: " + e.what());
    }
}

void write_json_file(const std::string& path, const Json& j)
{
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write '" + path + "'");
    }
    out << j.dump(2) << '\n';
    if (!out) {
        throw std::runtime_error("write to '" + path + "' failed");
    }
}

MeasurementSchema load_schema(const std::string& path)
{
    return schema_from_json(read_json_file(path));
}

void save_schema(const std::string& path, const MeasurementSchema& schema)
{
    write_json_file(path, schema_to_json(schema));
}

Json trained_model_to_json(const TrainedModel& m)
{
    Json j = {{"format_version", kModelFileVersion}, {"method", to_string(m.method)}, {"schema", schema_to_json(m.schema)},
              {"quartile_boundaries", m.quartile_boundaries}};
    std::visit([&](const auto& model) { j["model"] = model; }, m.model);
    return j;
}

TrainedModel trained_model_from_json(const Json& j)
{
    if (count(j, "format_version") != kModelFileVersion) {
        throw std::invalid_argument("json: unsupported model file version");
    }
    TrainedModel m;
    m.method = parse_method(field(j, "method").get<std::string>());
    m.schema = schema_from_json(field(j, "schema"));
    m.quartile_boundaries = field(j, "quartile_boundaries").get<QuartileBoundaries>();
    const Json& model = field(j, "model");
    switch (m.method) {
    case Method::Svr: m.model = model.get<SvrRegressor>(); break;
    case Method::SvrPlus: m.model = model.get<SvrPlusRegressor>(); break;
    case Method::Pip: m.model = model.get<PipModel>(); break;
    }
    return m;
}

void save_model(const std::string& path, const TrainedModel& m)
{
    write_json_file(path, trained_model_to_json(m));
}

TrainedModel load_model(const std::string& path)
{
    return trained_model_from_json(read_json_file(path));
}

VectorXd predict_heights(const TrainedModel& m, const MatrixXd& observable)
{
    return std::visit(
        [&](const auto& model) -> VectorXd {
            using T = std::decay_t<decltype(model)>;
            if constexpr (std::is_same_v<T, PipModel>) {
                return pip_predict_batch(model, observable);
            } else {
                return predict(model, observable);
            }
        },
        m.model);
}

} // namespace lupi
