#include "lupi/cli.hpp"

#include "lupi/data.hpp"
#include "lupi/eval.hpp"
#include "lupi/serialization.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace lupi::cli {

namespace fs = std::filesystem;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double parse_double(const std::string& text, const std::string& list)
{
    double value = 0.0;
    const char* first = text.data();
    const char* last = first + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (text.empty() || ec != std::errc() || ptr != last || !std::isfinite(value)) {
        throw std::invalid_argument("value list '" + list + "': '" + text + "' is not a number");
    }
    return value;
}

std::vector<std::string> split(const std::string& text, char sep)
{
    std::vector<std::string> parts;
    std::string part;
    std::istringstream in(text);
    while (std::getline(in, part, sep)) {
        parts.push_back(part);
    }
    if (!text.empty() && text.back() == sep) {
        parts.emplace_back();
    }
    return parts;
}

std::string trim(std::string s)
{
    const auto begin = s.find_first_not_of(" \t");
    if (begin == std::string::npos) {
        return "";
    }
    return s.substr(begin, s.find_last_not_of(" \t") - begin + 1);
}

std::string format_number(double value)
{
    char buffer[64];
    const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
    return ec == std::errc() ? std::string(buffer, ptr) : std::string("nan");
}

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        out += c == '"' ? std::string("\"\"") : std::string(1, c);
    }
    return out + "\"";
}

/// A command-line mistake; reported with exit code 2 like CLI11's own errors.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

template <typename Body>
void write_text(const fs::path& path, Body&& body)
{
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write '" + path.string() + "'");
    }
    body(out);
    out.flush();
    if (!out) {
        throw std::runtime_error("write to '" + path.string() + "' failed");
    }
}

// Fills options that were not given on the command line from a flat JSON file.
void apply_config(CLI::App& sub, const std::string& path)
{
    const Json config = read_json_file(path);
    if (!config.is_object()) {
        throw UsageError("config '" + path + "': expected a flat JSON object");
    }
    auto text = [&](const std::string& key, const Json& v) -> std::string {
        if (v.is_string()) {
            return v.get<std::string>();
        }
        if (v.is_number() || v.is_boolean()) {
            return v.dump();
        }
        throw UsageError("config key '" + key + "': expected a string, number or list of them");
    };
    for (const auto& [key, value] : config.items()) {
        std::string flag = key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        CLI::Option* opt = sub.get_option_no_throw("--" + flag);
        if (opt == nullptr || flag == "config" || flag == "help") {
            throw UsageError("config key '" + key + "' is not an option of '" + sub.get_name() + "'");
        }
        if (opt->count() > 0) {
            continue;
        }
        const bool multi = opt->get_items_expected_max() > 1;
        if (value.is_array()) {
            if (!multi && value.size() != 1) {
                throw UsageError("config key '" + key + "' takes a single value");
            }
            if (value.empty()) {
                continue;
            }
            for (const Json& v : value) {
                opt->add_result(text(key, v));
            }
        } else {
            opt->add_result(text(key, value));
        }
        opt->run_callback();
    }
}

void require(const CLI::App& sub, std::initializer_list<const char*> flags)
{
    for (const char* flag : flags) {
        if (sub.get_option(flag)->count() == 0) {
            throw UsageError(std::string(flag) + " is required");
        }
    }
}

// Resolved options, keyed like a config file, so the manifest's "config"
// can be passed back with --config.
Json resolved_config(const CLI::App& sub)
{
    Json config = Json::object();
    for (const CLI::Option* opt : sub.get_options()) {
        const std::string& name = opt->get_single_name();
        if (name == "help" || name == "config") {
            continue;
        }
        if (opt->get_items_expected_max() > 1) {
            config[name] = opt->results();
        } else if (opt->count() > 0) {
            config[name] = opt->results().back();
        } else if (!opt->get_default_str().empty()) {
            config[name] = opt->get_default_str();
        }
    }
    return config;
}

struct Run {
    std::string command;
    std::vector<std::string> args;
    fs::path out;
    Json config;
    Json results = Json::object();
    std::vector<std::string> artifacts;
    std::ostream* log = nullptr;

    void note(const std::string& line) const { *log << command << ": " << line << '\n'; }

    template <typename Body>
    void artifact(const std::string& name, Body&& body)
    {
        write_text(out / name, std::forward<Body>(body));
        artifacts.push_back(name);
    }

    void write_manifest()
    {
        Json m = {{"tool", "lupi"},
                  {"command", command},
                  {"arguments", args},
                  {"config", config},
                  {"artifacts", artifacts},
                  {"results", results},
                  {"versions",
                   {{"lupi", kVersion},
                    {"model_format", kModelFileVersion},
                    {"pip_model", kPipModelVersion},
                    {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                  std::to_string(EIGEN_MINOR_VERSION)},
                    {"compiler", __VERSION__}}}};
        if (config.contains("seed")) {
            m["seed"] = std::stoull(config["seed"].get<std::string>());
        }
        write_text(out / "manifest.json", [&](std::ostream& o) { o << m.dump(2) << '\n'; });
    }
};

struct GenerateOptions {
    int n = 500;
    std::uint64_t seed = 1;
    std::string out;
    std::string schema;
    double male_fraction = 0.5;
};

struct TrainOptions {
    std::string data;
    std::string schema;
    std::string method = "pip";
    int k = 6;
    std::string grid = "1e-4..1e4";
    std::vector<std::string> params;
    std::string epsilon_grid;
    double epsilon = 0.1;
    int folds = 5;
    std::uint64_t seed = 1;
    std::string pip_mode = "joint";
    int jobs = 1;
    std::string out;
};

struct EvaluateOptions {
    TrainOptions common;
    std::string methods = "svr,svrplus,pip";
    std::string e_grid = "0:0.5:10";
    std::string k_sweep = "0:12";
    std::string model;
};

struct PredictOptions {
    std::string model;
    std::string data;
    std::string out;
};

MeasurementSchema schema_or_default(const std::string& path)
{
    return path.empty() ? MeasurementSchema::default_schema() : load_schema(path);
}

std::vector<Method> parse_methods(const std::string& text)
{
    std::vector<Method> methods;
    for (const std::string& part : split(text, ',')) {
        const Method m = parse_method(trim(part));
        if (std::find(methods.begin(), methods.end(), m) != methods.end()) {
            throw UsageError("--method lists '" + to_string(m) + "' twice");
        }
        methods.push_back(m);
    }
    if (methods.empty()) {
        throw UsageError("--method needs at least one method");
    }
    return methods;
}

GridConfig make_grid(const TrainOptions& o, const std::vector<Method>& methods)
{
    GridConfig g;
    g.values = parse_value_list(o.grid);
    if (!o.epsilon_grid.empty()) {
        g.epsilon_values = parse_value_list(o.epsilon_grid);
    }
    g.epsilon = o.epsilon;
    g.folds = o.folds;
    g.seed = o.seed;
    g.k = o.k;
    g.pip_mode = parse_pip_grid_mode(o.pip_mode);
    g.jobs = o.jobs;
    for (const std::string& p : o.params) {
        const auto eq = p.find('=');
        if (eq == std::string::npos) {
            throw UsageError("--param expects name=values, got '" + p + "'");
        }
        const std::string name = trim(p.substr(0, eq));
        bool known = false;
        std::string expected;
        for (Method m : methods) {
            for (const std::string& n : parameter_names(m, g)) {
                known = known || n == name;
                expected += (expected.empty() ? "" : ", ") + n;
            }
        }
        if (!known) {
            throw UsageError("--param: unknown parameter '" + name + "' (expected one of " + expected + ")");
        }
        g.parameter_values[name] = parse_value_list(p.substr(eq + 1));
    }
    g.validate();
    return g;
}

Dataset load_training_data(const std::string& path, const MeasurementSchema& schema, Run& run)
{
    LoadResult loaded;
    try {
        loaded = load_csv(path, schema);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error("data '" + path + "' does not match the schema: " + e.what());
    }
    for (const DiscardEntry& d : loaded.discarded) {
        run.note("line " + std::to_string(d.line) + " (" + d.subject_id + ") discarded: " + d.reason);
    }
    run.note(std::to_string(loaded.records.size()) + " records, " + std::to_string(loaded.discarded.size()) +
             " discarded");
    run.results["records"] = loaded.records.size();
    run.results["discarded"] = loaded.discarded.size();
    if (loaded.records.empty()) {
        throw std::runtime_error("data '" + path + "' has no complete records");
    }
    return make_dataset(loaded.records, schema);
}

Json params_json(Method method, const MethodParams& p)
{
    auto svr = [](const SvrHyperparams& h) {
        return Json{{"C", h.cost}, {"gamma_g", h.kernel.gamma_g}, {"epsilon", h.epsilon}};
    };
    switch (method) {
    case Method::Svr: return svr(p.svr);
    case Method::SvrPlus:
        return {{"C", p.svr_plus.cost},
                {"gamma_g", p.svr_plus.kernel_decision.gamma_g},
                {"gamma", p.svr_plus.gamma_correcting},
                {"gamma_g_star", p.svr_plus.kernel_correcting.gamma_g},
                {"epsilon", p.svr_plus.epsilon}};
    case Method::Pip:
        return {{"k", p.pip.k}, {"feature", svr(p.pip.feature_stage)}, {"height", svr(p.pip.height_stage)}};
    }
    return {};
}

Json stage_counts_json(const GridSearchResult& s)
{
    Json counts = Json::object();
    for (const StageCount& c : s.stage_counts) {
        counts[c.stage] = {{"cells", c.cells}, {"failed", c.failed}};
    }
    return counts;
}

void cmd_generate(const GenerateOptions& o, Run& run)
{
    const MeasurementSchema schema = schema_or_default(o.schema);
    SyntheticConfig config = SyntheticConfig::defaults(schema);
    config.n_subjects = o.n;
    config.seed = o.seed;
    config.male_fraction = o.male_fraction;
    config.validate(schema);
    const std::vector<MeasurementRecord> records = generate_synthetic(config, schema);
    fs::create_directories(run.out);
    run.artifact("data.csv", [&](std::ostream& out) { write_csv(out, records, schema); });
    run.artifact("schema.json", [&](std::ostream& out) { out << schema_to_json(schema).dump(2) << '\n'; });
    const GenderSplit split = split_by_gender(records);
    run.results = {{"subjects", records.size()}, {"male", split.male.size()}, {"female", split.female.size()}};
    run.note("wrote " + std::to_string(records.size()) + " subjects to " + (run.out / "data.csv").string());
}

void cmd_train(const TrainOptions& o, Run& run)
{
    const Method method = parse_method(o.method);
    const GridConfig grid = make_grid(o, {method});
    const MeasurementSchema schema = schema_or_default(o.schema);
    const Dataset data = load_training_data(o.data, schema, run);
    fs::create_directories(run.out);

    const auto start = std::chrono::steady_clock::now();
    const GridSearchResult search = grid_search(method, data, grid);
    std::string cells;
    for (const StageCount& c : search.stage_counts) {
        cells += (cells.empty() ? "" : ", ") + c.stage + " " + std::to_string(c.cells);
    }
    run.note(to_string(method) + ": grid cells " + cells + "; best cross-validated error " +
             format_number(search.best_cv.mean_error) + "%");

    TrainedModel model;
    model.method = method;
    model.schema = schema;
    model.quartile_boundaries = quartile_boundaries(data.heights);
    const MethodParams& p = search.best_params;
    switch (method) {
    case Method::Svr: model.model = train_svr_regressor(data.observable, data.heights, p.svr); break;
    case Method::SvrPlus:
        model.model = train_svr_plus_regressor(data.observable, data.privileged, data.heights, p.svr_plus);
        break;
    case Method::Pip:
        model.model = pip_train(data.observable, data.privileged, data.heights, p.pip, PipTrainOptions{o.jobs});
        break;
    }
    const VectorXd fitted = predict_heights(model, data.observable);
    double in_sample = 0.0;
    for (Index i = 0; i < data.size(); ++i) {
        in_sample += percent_error(fitted(i), data.heights(i));
    }
    in_sample /= static_cast<double>(data.size());
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    run.artifact("model.json", [&](std::ostream& out) { out << trained_model_to_json(model).dump(2) << '\n'; });
    EvalReport log;
    log.searches.push_back({GenderGroup::Both, search});
    run.artifact("cv_log.csv", [&](std::ostream& out) { write_cv_log_csv(out, log); });
    run.results["method"] = to_string(method);
    run.results["parameters"] = params_json(method, p);
    run.results["cv_error"] = search.best_cv.mean_error;
    run.results["in_sample_error"] = in_sample;
    run.results["cell_counts"] = stage_counts_json(search);
    run.results["seconds"] = seconds;
    if (method == Method::Pip) {
        run.results["selected_privileged"] = std::get<PipModel>(model.model).selection.selected_indices;
    }
}

/// A one-cell grid that reproduces the hyperparameters of a trained model.
GridConfig frozen_grid(const TrainedModel& model, GridConfig g)
{
    g.epsilon_values.clear();
    auto pin = [&](const std::string& name, double value) { g.parameter_values[name] = {value}; };
    if (const auto* r = std::get_if<SvrRegressor>(&model.model)) {
        const SvrHyperparams& h = r->model.hyperparams;
        pin("C", h.cost);
        pin("gamma_g", h.kernel.gamma_g);
        g.epsilon = h.epsilon;
    } else if (const auto* r = std::get_if<SvrPlusRegressor>(&model.model)) {
        const SvrPlusHyperparams& h = r->model.hyperparams;
        pin("C", h.cost);
        pin("gamma_g", h.kernel_decision.gamma_g);
        pin("gamma", h.gamma_correcting);
        pin("gamma_g_star", h.kernel_correcting.gamma_g);
        g.epsilon = h.epsilon;
    } else {
        const PipHyperparams& h = std::get<PipModel>(model.model).hyperparams;
        pin("feature_C", h.feature_stage.cost);
        pin("feature_gamma_g", h.feature_stage.kernel.gamma_g);
        pin("height_C", h.height_stage.cost);
        pin("height_gamma_g", h.height_stage.kernel.gamma_g);
        g.epsilon = h.feature_stage.epsilon;
        if (h.height_stage.epsilon != h.feature_stage.epsilon) {
            g.epsilon_values = {h.feature_stage.epsilon};
            pin("feature_epsilon", h.feature_stage.epsilon);
            pin("height_epsilon", h.height_stage.epsilon);
        }
        g.k = h.k;
    }
    return g;
}

void cmd_evaluate(const EvaluateOptions& o, bool methods_given, bool schema_given, Run& run)
{
    std::vector<Method> methods;
    std::optional<TrainedModel> model;
    MeasurementSchema schema;
    if (!o.model.empty()) {
        if (methods_given || schema_given) {
            throw UsageError("--model fixes the method and schema; drop --method and --schema");
        }
        model = load_model(o.model);
        methods = {model->method};
        schema = model->schema;
    } else {
        methods = parse_methods(o.methods);
        schema = schema_or_default(o.common.schema);
    }
    // The K sweep may search PIP parameters even when PIP is not evaluated.
    std::vector<Method> searched = methods;
    searched.push_back(Method::Pip);
    GridConfig grid = make_grid(o.common, searched);
    if (model) {
        grid = frozen_grid(*model, grid);
    }
    const std::vector<double> e_grid = parse_value_list(o.e_grid);
    const std::vector<int> k_values = parse_int_list(o.k_sweep);
    const Dataset data = load_training_data(o.common.data, schema, run);
    fs::create_directories(run.out);

    EvalReport report;
    for (Method m : methods) {
        run.note("evaluating " + to_string(m));
        evaluate_table(m, data, grid, report, e_grid);
    }

    // The K sweep reuses the PIP hyperparameters chosen for both genders.
    std::optional<PipHyperparams> pip_params;
    for (const GroupSearch& gs : report.searches) {
        if (gs.group == GenderGroup::Both && gs.search.method == Method::Pip) {
            pip_params = gs.search.best_params.pip;
        }
    }
    if (!pip_params) {
        run.note("searching PIP hyperparameters for the K sweep");
        GroupSearch gs{GenderGroup::Both, grid_search(Method::Pip, data, grid)};
        pip_params = gs.search.best_params.pip;
        report.searches.push_back(std::move(gs));
    }
    run.note("K sweep over " + std::to_string(k_values.size()) + " values");
    const std::vector<Fold> folds = stratified_kfold_split(gender_quartile_strata(data), grid.folds, grid.seed);
    const KSweepResult sweep = k_sweep(data, k_values, *pip_params, folds, CvOptions{grid.jobs});

    std::vector<std::string> warnings = report.warnings;
    warnings.insert(warnings.end(), sweep.warnings.begin(), sweep.warnings.end());
    for (const std::string& w : warnings) {
        run.note("warning: " + w);
    }
    run.artifact("report.csv", [&](std::ostream& out) { write_report_csv(out, report); });
    run.artifact("report.json", [&](std::ostream& out) { write_report_json(out, report); });
    run.artifact("curve_e.csv", [&](std::ostream& out) { write_curve_csv(out, report); });
    run.artifact("curve_k.csv", [&](std::ostream& out) { write_k_sweep_csv(out, sweep); });
    run.artifact("cv_log.csv", [&](std::ostream& out) { write_cv_log_csv(out, report); });

    Json summary = Json::array();
    for (const ErrorRow& r : report.rows) {
        if (r.quartile == 0) {
            summary.push_back({{"method", to_string(r.method)}, {"group", to_string(r.group)}, {"mean_error", r.mean}});
        }
    }
    run.results["overall"] = summary;
    run.results["warnings"] = warnings;
    run.results["k_sweep_parameters"] = params_json(Method::Pip, MethodParams{{}, {}, *pip_params});
}

void cmd_predict(const PredictOptions& o, Run& run)
{
    const TrainedModel model = load_model(o.model);
    const MeasurementSchema& schema = model.schema;
    LoadResult loaded;
    try {
        loaded = load_csv(o.data, schema, CsvOptions{true});
    } catch (const std::runtime_error& e) {
        throw std::runtime_error("data '" + o.data + "' does not match the model's schema: " + e.what());
    }

    struct Row {
        std::size_t line = 0;
        std::string subject_id;
        double height = std::nan("");
        double truth = std::nan("");
        std::string error;
    };
    std::vector<Row> rows;
    std::vector<std::size_t> usable;
    std::vector<VectorXd> inputs;
    for (size_t r = 0; r < loaded.records.size(); ++r) {
        const MeasurementRecord& rec = loaded.records[r];
        Row row{loaded.record_lines[r], rec.subject_id, std::nan(""), rec.height, ""};
        try {
            VectorXd m(static_cast<Index>(schema.observable_indices.size()));
            for (Index i = 0; i < m.size(); ++i) {
                m(i) = rec.measurements(schema.observable_indices[static_cast<size_t>(i)]);
            }
            inputs.push_back(compute_ratios(m));
            usable.push_back(rows.size());
        } catch (const std::invalid_argument& e) {
            row.error = e.what();
        }
        rows.push_back(row);
    }
    for (const DiscardEntry& d : loaded.discarded) {
        rows.push_back({d.line, d.subject_id, std::nan(""), std::nan(""), d.reason});
    }
    if (!inputs.empty()) {
        MatrixXd x(static_cast<Index>(inputs.size()), inputs.front().size());
        for (size_t i = 0; i < inputs.size(); ++i) {
            x.row(static_cast<Index>(i)) = inputs[i].transpose();
        }
        const VectorXd h = predict_heights(model, x);
        for (size_t i = 0; i < usable.size(); ++i) {
            rows[usable[i]].height = h(static_cast<Index>(i));
        }
    }
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.line < b.line; });

    fs::create_directories(run.out);
    double error_sum = 0.0;
    std::size_t with_truth = 0;
    std::size_t failed = 0;
    run.artifact("predictions.csv", [&](std::ostream& out) {
        out << "subject_id,line,height_cm,quartile,true_height_cm,percent_error,error\n";
        for (const Row& r : rows) {
            out << csv_field(r.subject_id) << ',' << r.line << ',';
            if (r.error.empty()) {
                const int q = quartile_class(r.height, model.quartile_boundaries);
                out << format_number(r.height / 10.0) << ",Q" << q << ',';
                if (!std::isnan(r.truth)) {
                    const double e = percent_error(r.height, r.truth);
                    out << format_number(r.truth / 10.0) << ',' << format_number(e);
                    error_sum += e;
                    ++with_truth;
                } else {
                    out << ',';
                }
                out << ",\n";
            } else {
                ++failed;
                out << ",,,," << csv_field(r.error) << '\n';
            }
        }
    });
    run.results["rows"] = rows.size();
    run.results["predicted"] = rows.size() - failed;
    run.results["row_errors"] = failed;
    if (with_truth > 0) {
        run.results["mean_percent_error"] = error_sum / static_cast<double>(with_truth);
    }
    run.note(std::to_string(rows.size() - failed) + " of " + std::to_string(rows.size()) + " rows predicted");
}

void add_common_training_options(CLI::App* sub, TrainOptions& o)
{
    sub->add_option("--data", o.data, "Measurement CSV");
    sub->add_option("--schema", o.schema, "Schema JSON (default: built-in schema)");
    sub->add_option("--k", o.k, "Privileged features selected for PIP");
    sub->add_option("--grid", o.grid, "Values searched for every C and kernel width");
    sub->add_option("--param", o.params, "Per-parameter values, e.g. height_C=1,10 (repeatable)");
    sub->add_option("--epsilon", o.epsilon, "Tube half-width in standardized height units");
    sub->add_option("--epsilon-grid", o.epsilon_grid, "Search epsilon over these values");
    sub->add_option("--folds", o.folds, "Cross-validation folds");
    sub->add_option("--seed", o.seed, "Fold assignment seed");
    sub->add_option("--pip-mode", o.pip_mode, "PIP grid: joint or sequential");
    sub->add_option("--jobs", o.jobs, "Worker threads");
    sub->add_option("--out", o.out, "Output directory");
}

} // namespace

std::vector<double> parse_value_list(const std::string& text)
{
    const std::string t = trim(text);
    std::vector<double> values;
    if (const auto dots = t.find(".."); dots != std::string::npos) {
        const double first = parse_double(trim(t.substr(0, dots)), text);
        const double last = parse_double(trim(t.substr(dots + 2)), text);
        if (!(first > 0.0) || !(last >= first)) {
            throw std::invalid_argument("value list '" + text + "': decade ranges need 0 < first <= last");
        }
        // Exact powers of ten when the ends are decades, so 1e-3 prints as 0.001.
        const double e0 = std::log10(first);
        const bool decade = std::abs(e0 - std::round(e0)) < 1e-12;
        for (int i = 0;; ++i) {
            const double v = decade ? std::pow(10.0, std::round(e0) + i) : first * std::pow(10.0, i);
            if (v > last * (1.0 + 1e-12)) {
                break;
            }
            values.push_back(v);
        }
    } else if (t.find(':') != std::string::npos) {
        const std::vector<std::string> parts = split(t, ':');
        if (parts.size() != 2 && parts.size() != 3) {
            throw std::invalid_argument("value list '" + text + "': expected first:last or first:step:last");
        }
        const double first = parse_double(trim(parts.front()), text);
        const double last = parse_double(trim(parts.back()), text);
        const double step = parts.size() == 3 ? parse_double(trim(parts[1]), text) : 1.0;
        if (!(step > 0.0) || last < first) {
            throw std::invalid_argument("value list '" + text + "': need a positive step and first <= last");
        }
        const auto count = static_cast<long>(std::floor((last - first) / step + 1e-9)) + 1;
        if (count > 1000000) {
            throw std::invalid_argument("value list '" + text + "' is too long");
        }
        for (long i = 0; i < count; ++i) {
            values.push_back(first + static_cast<double>(i) * step);
        }
    } else {
        for (const std::string& part : split(t, ',')) {
            values.push_back(parse_double(trim(part), text));
        }
    }
    if (values.empty()) {
        throw std::invalid_argument("value list '" + text + "' is empty");
    }
    return values;
}

std::vector<int> parse_int_list(const std::string& text)
{
    std::vector<int> ints;
    for (double v : parse_value_list(text)) {
        if (v < 0.0 || v != std::floor(v) || v > 1e6) {
            throw std::invalid_argument("value list '" + text + "': '" + format_number(v) +
                                        "' is not a non-negative integer");
        }
        ints.push_back(static_cast<int>(v));
    }
    return ints;
}

int run(const std::vector<std::string>& args, std::ostream& log)
{
    CLI::App app{"Height estimation from body-part ratios with privileged information"};
    app.name("lupi");
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();

    GenerateOptions gen;
    TrainOptions train;
    EvaluateOptions eval;
    PredictOptions pred;
    std::string config_path;

    CLI::App* g = app.add_subcommand("generate", "Write a synthetic population");
    g->add_option("--n", gen.n, "Subjects");
    g->add_option("--seed", gen.seed, "Generator seed");
    g->add_option("--schema", gen.schema, "Schema JSON (default: built-in schema)");
    g->add_option("--male-fraction", gen.male_fraction, "Share of male subjects");
    g->add_option("--out", gen.out, "Output directory");

    CLI::App* t = app.add_subcommand("train", "Grid-search and fit one height model");
    add_common_training_options(t, train);
    t->add_option("--method", train.method, "svr, svrplus or pip");

    CLI::App* e = app.add_subcommand("evaluate", "Per-gender, per-quartile errors, accuracy and K curves");
    add_common_training_options(e, eval.common);
    e->add_option("--method", eval.methods, "Comma-separated methods");
    e->add_option("--e-grid", eval.e_grid, "Tolerances in percent for the accuracy curve");
    e->add_option("--k-sweep", eval.k_sweep, "Values of K for the K curve");
    e->add_option("--model", eval.model, "Evaluate the hyperparameters of a trained model");

    CLI::App* p = app.add_subcommand("predict", "Predict heights and quartile classes");
    p->add_option("--model", pred.model, "model.json written by train");
    p->add_option("--data", pred.data, "Measurement CSV");
    p->add_option("--out", pred.out, "Output directory");

    for (CLI::App* sub : {g, t, e, p}) {
        sub->add_option("--config", config_path, "Flat JSON of option values; flags override it");
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err, log, log);
        return code == 0 ? 0 : 2;
    }

    CLI::App* sub = app.get_subcommands().front();
    Run run;
    run.command = sub->get_name();
    run.args = args;
    run.log = &log;
    try {
        if (!config_path.empty()) {
            apply_config(*sub, config_path);
        }
        if (sub == g) {
            require(*sub, {"--out"});
            run.out = gen.out;
        } else if (sub == t) {
            require(*sub, {"--data", "--out"});
            run.out = train.out;
        } else if (sub == e) {
            require(*sub, {"--data", "--out"});
            run.out = eval.common.out;
        } else {
            require(*sub, {"--model", "--data", "--out"});
            run.out = pred.out;
        }
        run.config = resolved_config(*sub);
        if (sub == g) {
            cmd_generate(gen, run);
        } else if (sub == t) {
            cmd_train(train, run);
        } else if (sub == e) {
            cmd_evaluate(eval, e->get_option("--method")->count() > 0, e->get_option("--schema")->count() > 0, run);
        } else {
            cmd_predict(pred, run);
        }
        run.write_manifest();
    } catch (const UsageError& err) {
        log << "lupi " << run.command << ": " << err.what() << '\n';
        return 2;
    } catch (const std::exception& err) {
        log << "lupi " << run.command << ": error: " << err.what() << '\n';
        return 1;
    }
    return 0;
}

int run(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cerr);
}

} // namespace lupi::cli
