#include "lupi/eval.hpp"

#include "lupi/parallel.hpp"
#include "lupi/regressor.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <stdexcept>

namespace lupi {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string to_string(Method m)
{
    switch (m) {
    case Method::Svr: return "svr";
    case Method::SvrPlus: return "svr+";
    case Method::Pip: return "pip";
    }
    return "?";
}

Method parse_method(const std::string& text)
{
    std::string t;
    for (char c : text) {
        t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (t == "svr") {
        return Method::Svr;
    }
    if (t == "svr+" || t == "svrplus" || t == "svr_plus") {
        return Method::SvrPlus;
    }
    if (t == "pip") {
        return Method::Pip;
    }
    throw std::invalid_argument("unknown method '" + text + "' (expected svr, svr+ or pip)");
}

std::string to_string(PipGridMode m)
{
    return m == PipGridMode::Joint ? "joint" : "sequential";
}

PipGridMode parse_pip_grid_mode(const std::string& text)
{
    if (text == "joint") {
        return PipGridMode::Joint;
    }
    if (text == "sequential") {
        return PipGridMode::Sequential;
    }
    throw std::invalid_argument("unknown PIP grid mode '" + text + "' (expected joint or sequential)");
}

std::string to_string(GenderGroup g)
{
    switch (g) {
    case GenderGroup::Male: return "Male";
    case GenderGroup::Female: return "Female";
    case GenderGroup::Both: return "Both";
    }
    return "?";
}

Dataset make_dataset(const std::vector<MeasurementRecord>& records, const MeasurementSchema& schema)
{
    const FeatureMatrices f = build_feature_matrices(records, schema);
    Dataset d{f.observable, f.privileged, f.heights, {}};
    d.genders.reserve(records.size());
    for (const MeasurementRecord& r : records) {
        d.genders.push_back(r.gender);
    }
    return d;
}

Dataset subset(const Dataset& data, const std::vector<Index>& rows)
{
    Dataset d;
    d.observable = data.observable(rows, Eigen::all);
    d.privileged = data.privileged(rows, Eigen::all);
    d.heights = data.heights(rows);
    d.genders.reserve(rows.size());
    for (Index r : rows) {
        d.genders.push_back(data.genders[static_cast<size_t>(r)]);
    }
    return d;
}

namespace {

void check_fold_count(std::size_t n, int folds)
{
    if (folds < 2) {
        throw std::invalid_argument("kfold: need at least 2 folds");
    }
    if (static_cast<std::size_t>(folds) > n) {
        throw std::invalid_argument("kfold: " + std::to_string(folds) + " folds for " + std::to_string(n) +
                                    " samples");
    }
}

std::vector<Fold> folds_from_assignment(const std::vector<int>& fold_of, int folds)
{
    std::vector<Fold> out(static_cast<size_t>(folds));
    for (size_t i = 0; i < fold_of.size(); ++i) {
        for (int f = 0; f < folds; ++f) {
            auto& side = f == fold_of[i] ? out[static_cast<size_t>(f)].test : out[static_cast<size_t>(f)].train;
            side.push_back(static_cast<Index>(i));
        }
    }
    return out;
}

std::string format_number(double v)
{
    if (std::isnan(v)) {
        return "nan";
    }
    char buffer[64];
    const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof buffer, v);
    return ec == std::errc() ? std::string(buffer, ptr) : std::to_string(v);
}

double sample_std(const std::vector<double>& xs)
{
    if (xs.size() < 2) {
        return 0.0;
    }
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) {
        ss += (x - mean) * (x - mean);
    }
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double pooled_error(const VectorXd& predictions, const VectorXd& truths)
{
    double sum = 0.0;
    for (Index i = 0; i < truths.size(); ++i) {
        sum += percent_error(predictions(i), truths(i));
    }
    return sum / static_cast<double>(truths.size());
}

struct FoldData {
    Dataset train;
    Dataset test;
};

std::vector<FoldData> materialize(const Dataset& data, const std::vector<Fold>& folds)
{
    std::vector<FoldData> out;
    out.reserve(folds.size());
    for (const Fold& f : folds) {
        out.push_back({subset(data, f.train), subset(data, f.test)});
    }
    return out;
}

/// Test-fold heights of one method, plus the PIP selection when there is one.
VectorXd fit_predict(Method method, const MethodParams& params, const FoldData& fold, std::vector<int>* selection)
{
    switch (method) {
    case Method::Svr:
        return predict(train_svr_regressor(fold.train.observable, fold.train.heights, params.svr),
                       fold.test.observable);
    case Method::SvrPlus:
        return predict(train_svr_plus_regressor(fold.train.observable, fold.train.privileged, fold.train.heights,
                                                params.svr_plus),
                       fold.test.observable);
    case Method::Pip: {
        const PipModel m = pip_train(fold.train.observable, fold.train.privileged, fold.train.heights, params.pip);
        if (selection) {
            *selection = m.selection.selected_indices;
        }
        return pip_predict_batch(m, fold.test.observable);
    }
    }
    throw std::logic_error("unknown method");
}

CvResult empty_cv(const Dataset& data, const std::vector<Fold>& folds)
{
    CvResult cv;
    cv.predictions = VectorXd::Constant(data.size(), std::numeric_limits<double>::quiet_NaN());
    cv.fold_of_sample.assign(static_cast<size_t>(data.size()), -1);
    for (size_t f = 0; f < folds.size(); ++f) {
        for (Index i : folds[f].test) {
            cv.fold_of_sample[static_cast<size_t>(i)] = static_cast<int>(f);
        }
        cv.fold_boundaries.push_back(quartile_boundaries(data.heights(folds[f].train)));
    }
    for (int f : cv.fold_of_sample) {
        if (f < 0) {
            throw std::invalid_argument("cross-validation: folds do not cover every sample");
        }
    }
    return cv;
}

std::vector<std::vector<double>> cartesian(const std::vector<std::vector<double>>& lists)
{
    std::vector<std::vector<double>> out{{}};
    for (const auto& list : lists) {
        std::vector<std::vector<double>> next;
        next.reserve(out.size() * list.size());
        for (const auto& prefix : out) {
            for (double v : list) {
                next.push_back(prefix);
                next.back().push_back(v);
            }
        }
        out = std::move(next);
    }
    return out;
}

} // namespace

std::vector<Fold> kfold_split(std::size_t n, int folds, std::uint64_t seed)
{
    check_fold_count(n, folds);
    std::vector<Index> order(n);
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    const std::size_t f_count = static_cast<std::size_t>(folds);
    const std::size_t base = n / f_count;
    const std::size_t extra = n % f_count;
    std::vector<int> fold_of(n);
    std::size_t pos = 0;
    for (std::size_t f = 0; f < f_count; ++f) {
        const std::size_t size = base + (f < extra ? 1 : 0);
        for (std::size_t j = 0; j < size; ++j) {
            fold_of[static_cast<size_t>(order[pos++])] = static_cast<int>(f);
        }
    }
    return folds_from_assignment(fold_of, folds);
}

std::vector<Fold> stratified_kfold_split(const std::vector<int>& strata, int folds, std::uint64_t seed)
{
    check_fold_count(strata.size(), folds);
    std::map<int, std::vector<Index>> groups;
    for (size_t i = 0; i < strata.size(); ++i) {
        groups[strata[i]].push_back(static_cast<Index>(i));
    }
    std::mt19937_64 rng(seed);
    std::vector<int> fold_of(strata.size());
    std::size_t pos = 0;
    for (auto& [stratum, members] : groups) {
        std::shuffle(members.begin(), members.end(), rng);
        for (Index i : members) {
            fold_of[static_cast<size_t>(i)] = static_cast<int>(pos++ % static_cast<std::size_t>(folds));
        }
    }
    return folds_from_assignment(fold_of, folds);
}

std::vector<int> gender_quartile_strata(const Dataset& data)
{
    std::vector<int> strata(static_cast<size_t>(data.size()));
    for (Gender g : {Gender::Male, Gender::Female}) {
        std::vector<Index> rows;
        for (size_t i = 0; i < data.genders.size(); ++i) {
            if (data.genders[i] == g) {
                rows.push_back(static_cast<Index>(i));
            }
        }
        if (rows.empty()) {
            continue;
        }
        const QuartileBoundaries b = quartile_boundaries(data.heights(rows));
        for (Index r : rows) {
            strata[static_cast<size_t>(r)] = (g == Gender::Male ? 0 : 4) + quartile_class(data.heights(r), b) - 1;
        }
    }
    return strata;
}

CvResult cross_validate(Method method, const Dataset& data, const MethodParams& params,
                        const std::vector<Fold>& folds, const CvOptions& options)
{
    CvResult cv = empty_cv(data, folds);
    const std::vector<FoldData> parts = materialize(data, folds);
    if (method == Method::Pip) {
        cv.fold_selections.resize(folds.size());
    }
    parallel_for(folds.size(), options.jobs, [&](size_t f) {
        const VectorXd pred =
            fit_predict(method, params, parts[f], method == Method::Pip ? &cv.fold_selections[f] : nullptr);
        cv.predictions(folds[f].test) = pred;
    });
    cv.mean_error = pooled_error(cv.predictions, data.heights);
    return cv;
}

void GridConfig::validate() const
{
    auto check = [](const std::vector<double>& list, const std::string& what) {
        if (list.empty()) {
            throw std::invalid_argument("grid: no values for " + what);
        }
        for (size_t i = 0; i < list.size(); ++i) {
            if (!std::isfinite(list[i])) {
                throw std::invalid_argument("grid: non-finite value for " + what);
            }
            if (i > 0 && !(list[i] > list[i - 1])) {
                throw std::invalid_argument("grid: values for " + what + " must be strictly increasing");
            }
        }
    };
    check(values, "values");
    for (const auto& [name, list] : parameter_values) {
        check(list, name);
    }
    if (!epsilon_values.empty()) {
        check(epsilon_values, "epsilon");
    }
    if (folds < 2) {
        throw std::invalid_argument("grid: need at least 2 folds");
    }
    if (k < 0) {
        throw std::invalid_argument("grid: K must be non-negative");
    }
    if (jobs < 1) {
        throw std::invalid_argument("grid: need at least one job");
    }
}

const std::vector<double>& GridConfig::values_for(const std::string& parameter) const
{
    const auto it = parameter_values.find(parameter);
    if (it != parameter_values.end()) {
        return it->second;
    }
    if (parameter.ends_with("epsilon") && !epsilon_values.empty()) {
        return epsilon_values;
    }
    return values;
}

std::vector<std::string> parameter_names(Method method, const GridConfig& grid)
{
    const bool eps = !grid.epsilon_values.empty();
    switch (method) {
    case Method::Svr:
        return eps ? std::vector<std::string>{"C", "gamma_g", "epsilon"} : std::vector<std::string>{"C", "gamma_g"};
    case Method::SvrPlus: {
        std::vector<std::string> names{"C", "gamma_g", "gamma", "gamma_g_star"};
        if (eps) {
            names.push_back("epsilon");
        }
        return names;
    }
    case Method::Pip: {
        std::vector<std::string> names{"feature_C", "feature_gamma_g"};
        if (eps) {
            names.push_back("feature_epsilon");
        }
        names.insert(names.end(), {"height_C", "height_gamma_g"});
        if (eps) {
            names.push_back("height_epsilon");
        }
        return names;
    }
    }
    return {};
}

MethodParams params_for_cell(Method method, const GridConfig& grid, const std::vector<double>& cell)
{
    const std::vector<std::string> names = parameter_names(method, grid);
    if (cell.size() != names.size()) {
        throw std::invalid_argument("grid: cell has " + std::to_string(cell.size()) + " values, expected " +
                                    std::to_string(names.size()));
    }
    auto get = [&](const std::string& name, double fallback) {
        for (size_t i = 0; i < names.size(); ++i) {
            if (names[i] == name && !std::isnan(cell[i])) {
                return cell[i];
            }
        }
        return fallback;
    };
    MethodParams p;
    p.svr.cost = get("C", p.svr.cost);
    p.svr.kernel.gamma_g = get("gamma_g", p.svr.kernel.gamma_g);
    p.svr.epsilon = get("epsilon", grid.epsilon);

    p.svr_plus.cost = p.svr.cost;
    p.svr_plus.kernel_decision.gamma_g = p.svr.kernel.gamma_g;
    p.svr_plus.gamma_correcting = get("gamma", p.svr_plus.gamma_correcting);
    p.svr_plus.kernel_correcting.gamma_g = get("gamma_g_star", p.svr_plus.kernel_correcting.gamma_g);
    p.svr_plus.epsilon = p.svr.epsilon;

    p.pip.k = grid.k;
    p.pip.feature_stage.cost = get("feature_C", p.pip.feature_stage.cost);
    p.pip.feature_stage.kernel.gamma_g = get("feature_gamma_g", p.pip.feature_stage.kernel.gamma_g);
    p.pip.feature_stage.epsilon = get("feature_epsilon", grid.epsilon);
    p.pip.height_stage.cost = get("height_C", p.pip.height_stage.cost);
    p.pip.height_stage.kernel.gamma_g = get("height_gamma_g", p.pip.height_stage.kernel.gamma_g);
    p.pip.height_stage.epsilon = get("height_epsilon", grid.epsilon);
    return p;
}

namespace {

/// Collects per-(cell, fold) outcomes and turns them into cell results.
struct CellTable {
    std::size_t n_folds = 0;
    std::vector<VectorXd> predictions;  ///< per cell, all samples
    std::vector<std::string> failures;  ///< per (cell, fold), empty when fine

    CellTable(std::size_t cells, std::size_t folds, Index n)
        : n_folds(folds), predictions(cells, VectorXd::Zero(n)), failures(cells * folds)
    {
    }

    std::string failure(std::size_t cell) const
    {
        for (std::size_t f = 0; f < n_folds; ++f) {
            if (!failures[cell * n_folds + f].empty()) {
                return "fold " + std::to_string(f) + ": " + failures[cell * n_folds + f];
            }
        }
        return "";
    }
};

std::size_t pick_best(const std::vector<GridCellResult>& cells, std::size_t begin, std::size_t end)
{
    std::size_t best = end;
    for (std::size_t c = begin; c < end; ++c) {
        if (cells[c].ok && (best == end || cells[c].mean_error < cells[best].mean_error)) {
            best = c;
        }
    }
    if (best == end) {
        throw std::runtime_error("grid search: every cell failed; first failure: " +
                                 (begin < end ? cells[begin].message : std::string("no cells")));
    }
    return best;
}

void fill_height_cells(const CellTable& table, const Dataset& data, const std::string& stage,
                       const std::vector<std::vector<double>>& values, std::vector<GridCellResult>& out)
{
    for (std::size_t c = 0; c < values.size(); ++c) {
        GridCellResult r;
        r.stage = stage;
        r.values = values[c];
        r.message = table.failure(c);
        r.ok = r.message.empty();
        r.mean_error = r.ok ? pooled_error(table.predictions[c], data.heights) : std::numeric_limits<double>::quiet_NaN();
        out.push_back(std::move(r));
    }
}

std::vector<std::vector<double>> lists_for(const GridConfig& grid, const std::vector<std::string>& names)
{
    std::vector<std::vector<double>> lists;
    for (const std::string& n : names) {
        lists.push_back(grid.values_for(n));
    }
    return lists;
}

void search_single_stage(Method method, const Dataset& data, const GridConfig& grid, const std::vector<Fold>& folds,
                         const std::vector<FoldData>& parts, GridSearchResult& result)
{
    const auto cells = cartesian(lists_for(grid, result.parameter_names));
    CellTable table(cells.size(), folds.size(), data.size());
    parallel_for(cells.size() * folds.size(), grid.jobs, [&](size_t unit) {
        const size_t c = unit / folds.size();
        const size_t f = unit % folds.size();
        try {
            const VectorXd pred = fit_predict(method, params_for_cell(method, grid, cells[c]), parts[f], nullptr);
            table.predictions[c](folds[f].test) = pred;
        } catch (const std::exception& e) {
            table.failures[unit] = e.what();
        }
    });
    fill_height_cells(table, data, "all", cells, result.cells);
    result.stage_counts.push_back({"all", cells.size(), 0});
}

std::vector<SelectionResult> fold_selections(const std::vector<FoldData>& parts, const GridConfig& grid)
{
    std::vector<SelectionResult> out(parts.size());
    parallel_for(parts.size(), grid.jobs, [&](size_t f) {
        out[f] = select_mid(parts[f].train.privileged, parts[f].train.heights, grid.k);
    });
    return out;
}

/// Splits PIP names into the feature-stage and height-stage halves.
std::pair<std::vector<std::string>, std::vector<std::string>> pip_stage_names(const std::vector<std::string>& names)
{
    std::vector<std::string> feature, height;
    for (const std::string& n : names) {
        (n.starts_with("feature_") ? feature : height).push_back(n);
    }
    return {feature, height};
}

std::vector<double> join(const std::vector<double>& a, const std::vector<double>& b)
{
    std::vector<double> out = a;
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

void search_pip_joint(const Dataset& data, const GridConfig& grid, const std::vector<Fold>& folds,
                      const std::vector<FoldData>& parts, const std::vector<SelectionResult>& selections,
                      GridSearchResult& result)
{
    const auto [feature_names, height_names] = pip_stage_names(result.parameter_names);
    const auto feature_cells = cartesian(lists_for(grid, feature_names));
    const auto height_cells = cartesian(lists_for(grid, height_names));
    const size_t n_height = height_cells.size();
    std::vector<std::vector<double>> joint;
    for (const auto& a : feature_cells) {
        for (const auto& b : height_cells) {
            joint.push_back(join(a, b));
        }
    }
    CellTable table(joint.size(), folds.size(), data.size());
    parallel_for(feature_cells.size() * folds.size(), grid.jobs, [&](size_t unit) {
        const size_t a = unit / folds.size();
        const size_t f = unit % folds.size();
        const MethodParams first = params_for_cell(Method::Pip, grid, joint[a * n_height]);
        PipFeatureStage stage;
        try {
            stage = pip_train_feature_stage(parts[f].train.observable, parts[f].train.privileged, selections[f],
                                            first.pip.feature_stage);
        } catch (const std::exception& e) {
            for (size_t b = 0; b < n_height; ++b) {
                table.failures[(a * n_height + b) * folds.size() + f] = e.what();
            }
            return;
        }
        for (size_t b = 0; b < n_height; ++b) {
            const size_t c = a * n_height + b;
            try {
                const PipModel m =
                    pip_train_height_stage(stage, parts[f].train.heights, params_for_cell(Method::Pip, grid, joint[c]).pip);
                table.predictions[c](folds[f].test) = pip_predict_batch(m, parts[f].test.observable);
            } catch (const std::exception& e) {
                table.failures[c * folds.size() + f] = e.what();
            }
        }
    });
    fill_height_cells(table, data, "joint", joint, result.cells);
    result.stage_counts.push_back({"feature", feature_cells.size(), 0});
    result.stage_counts.push_back({"height", height_cells.size(), 0});
    result.stage_counts.push_back({"joint", joint.size(), 0});
}

void search_pip_sequential(const Dataset& data, const GridConfig& grid, const std::vector<Fold>& folds,
                           const std::vector<FoldData>& parts, const std::vector<SelectionResult>& selections,
                           GridSearchResult& result)
{
    const auto [feature_names, height_names] = pip_stage_names(result.parameter_names);
    const auto feature_cells = cartesian(lists_for(grid, feature_names));
    const auto height_cells = cartesian(lists_for(grid, height_names));
    const std::vector<double> no_height(height_names.size(), std::numeric_limits<double>::quiet_NaN());

    // Stage one: mean absolute error of the standardized privileged predictions.
    const size_t nf = folds.size();
    std::vector<double> abs_error(feature_cells.size() * nf, 0.0);
    std::vector<double> count(feature_cells.size() * nf, 0.0);
    std::vector<std::string> failures(feature_cells.size() * nf);
    parallel_for(feature_cells.size() * nf, grid.jobs, [&](size_t unit) {
        const size_t a = unit / nf;
        const size_t f = unit % nf;
        try {
            const MethodParams p = params_for_cell(Method::Pip, grid, join(feature_cells[a], no_height));
            const PipFeatureStage stage = pip_train_feature_stage(parts[f].train.observable, parts[f].train.privileged,
                                                                  selections[f], p.pip.feature_stage);
            const MatrixXd truth = stage.privileged_scaler.apply(
                parts[f].test.privileged(Eigen::all, selections[f].selected_indices));
            const MatrixXd pred = pip_feature_predictions(stage, parts[f].test.observable);
            abs_error[unit] = (pred - truth).cwiseAbs().sum();
            count[unit] = static_cast<double>(truth.size());
        } catch (const std::exception& e) {
            failures[unit] = e.what();
        }
    });
    for (size_t a = 0; a < feature_cells.size(); ++a) {
        GridCellResult r;
        r.stage = "feature";
        r.values = join(feature_cells[a], no_height);
        double err = 0.0, cnt = 0.0;
        for (size_t f = 0; f < nf; ++f) {
            if (!failures[a * nf + f].empty() && r.message.empty()) {
                r.message = "fold " + std::to_string(f) + ": " + failures[a * nf + f];
            }
            err += abs_error[a * nf + f];
            cnt += count[a * nf + f];
        }
        r.ok = r.message.empty();
        r.mean_error = !r.ok ? std::numeric_limits<double>::quiet_NaN() : cnt > 0.0 ? err / cnt : 0.0;
        result.cells.push_back(std::move(r));
    }
    const size_t best_feature = pick_best(result.cells, 0, feature_cells.size());
    const size_t height_begin = result.cells.size();

    // Stage two with the chosen stage-one setting, refitted once per fold.
    const MethodParams chosen = params_for_cell(Method::Pip, grid, join(feature_cells[best_feature], no_height));
    std::vector<PipFeatureStage> stages(nf);
    parallel_for(nf, grid.jobs, [&](size_t f) {
        stages[f] = pip_train_feature_stage(parts[f].train.observable, parts[f].train.privileged, selections[f],
                                            chosen.pip.feature_stage);
    });
    std::vector<std::vector<double>> full;
    for (const auto& b : height_cells) {
        full.push_back(join(feature_cells[best_feature], b));
    }
    CellTable table(full.size(), nf, data.size());
    parallel_for(full.size() * nf, grid.jobs, [&](size_t unit) {
        const size_t c = unit / nf;
        const size_t f = unit % nf;
        try {
            const PipModel m =
                pip_train_height_stage(stages[f], parts[f].train.heights, params_for_cell(Method::Pip, grid, full[c]).pip);
            table.predictions[c](folds[f].test) = pip_predict_batch(m, parts[f].test.observable);
        } catch (const std::exception& e) {
            table.failures[unit] = e.what();
        }
    });
    fill_height_cells(table, data, "height", full, result.cells);
    result.stage_counts.push_back({"feature", feature_cells.size(), 0});
    result.stage_counts.push_back({"height", height_cells.size(), 0});
    result.best_cell = pick_best(result.cells, height_begin, result.cells.size());
}

} // namespace

GridSearchResult grid_search(Method method, const Dataset& data, const GridConfig& grid, const std::vector<Fold>& folds)
{
    grid.validate();
    const auto start = std::chrono::steady_clock::now();
    GridSearchResult result;
    result.method = method;
    result.parameter_names = parameter_names(method, grid);

    const std::vector<FoldData> parts = materialize(data, folds);
    std::vector<SelectionResult> selections;
    if (method == Method::Pip) {
        if (grid.k > data.privileged.cols()) {
            throw std::invalid_argument("grid search: K = " + std::to_string(grid.k) + " exceeds " +
                                        std::to_string(data.privileged.cols()) + " privileged features");
        }
        selections = fold_selections(parts, grid);
        if (grid.pip_mode == PipGridMode::Joint) {
            search_pip_joint(data, grid, folds, parts, selections, result);
        } else {
            search_pip_sequential(data, grid, folds, parts, selections, result);
        }
    } else {
        search_single_stage(method, data, grid, folds, parts, result);
    }
    if (!(method == Method::Pip && grid.pip_mode == PipGridMode::Sequential)) {
        result.best_cell = pick_best(result.cells, 0, result.cells.size());
    }
    for (StageCount& s : result.stage_counts) {
        s.failed = static_cast<std::size_t>(std::count_if(result.cells.begin(), result.cells.end(), [&](const auto& c) {
            return c.stage == s.stage && !c.ok;
        }));
    }
    result.best_params = params_for_cell(method, grid, result.cells[result.best_cell].values);

    // Replaying the best cell gives its out-of-fold predictions and per-fold selections.
    result.best_cv = cross_validate(method, data, result.best_params, folds, {grid.jobs});
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

GridSearchResult grid_search(Method method, const Dataset& data, const GridConfig& grid)
{
    grid.validate();
    return grid_search(method, data, grid, stratified_kfold_split(gender_quartile_strata(data), grid.folds, grid.seed));
}

std::vector<double> default_e_grid()
{
    std::vector<double> e;
    for (int i = 0; i <= 20; ++i) {
        e.push_back(0.5 * i);
    }
    return e;
}

std::vector<AccuracyPoint> accuracy_curve(const VectorXd& predictions, const VectorXd& truths,
                                          const std::vector<QuartileBoundaries>& boundaries,
                                          const std::vector<double>& e_grid)
{
    if (predictions.size() != truths.size() || boundaries.size() != static_cast<size_t>(truths.size())) {
        throw std::invalid_argument("accuracy_curve: predictions, truths and boundaries must align");
    }
    for (double e : e_grid) {
        if (!(e >= 0.0) || !std::isfinite(e)) {
            throw std::invalid_argument("accuracy_curve: tolerances must be finite and non-negative");
        }
    }
    std::vector<AccuracyPoint> out;
    for (double e : e_grid) {
        std::array<double, 4> correct{}, total{};
        for (Index i = 0; i < truths.size(); ++i) {
            const QuartileDecision d = classify_quartile(predictions(i), truths(i), boundaries[static_cast<size_t>(i)], e);
            total[static_cast<size_t>(d.true_class - 1)] += 1.0;
            correct[static_cast<size_t>(d.true_class - 1)] += d.correct ? 1.0 : 0.0;
        }
        AccuracyPoint p;
        p.e = e;
        double all_correct = 0.0, all_total = 0.0;
        for (size_t q = 0; q < 4; ++q) {
            p.per_quartile[q] = total[q] > 0.0 ? 100.0 * correct[q] / total[q] : std::numeric_limits<double>::quiet_NaN();
            all_correct += correct[q];
            all_total += total[q];
        }
        p.overall = all_total > 0.0 ? 100.0 * all_correct / all_total : std::numeric_limits<double>::quiet_NaN();
        out.push_back(p);
    }
    return out;
}

std::vector<AccuracyPoint> accuracy_curve(const VectorXd& predictions, const VectorXd& truths,
                                          const QuartileBoundaries& boundaries, const std::vector<double>& e_grid)
{
    return accuracy_curve(predictions, truths, std::vector<QuartileBoundaries>(static_cast<size_t>(truths.size()), boundaries),
                          e_grid);
}

std::vector<ErrorRow> error_rows(Method method, GenderGroup group, const Dataset& data, const CvResult& cv)
{
    const size_t n_folds = cv.fold_boundaries.size();
    std::vector<ErrorRow> rows;
    for (int q = 0; q <= 4; ++q) {
        std::vector<double> fold_sum(n_folds, 0.0), fold_count(n_folds, 0.0);
        double sum = 0.0;
        std::size_t count = 0;
        for (Index i = 0; i < data.size(); ++i) {
            const size_t f = static_cast<size_t>(cv.fold_of_sample[static_cast<size_t>(i)]);
            if (q != 0 && quartile_class(data.heights(i), cv.fold_boundaries[f]) != q) {
                continue;
            }
            const double err = percent_error(cv.predictions(i), data.heights(i));
            sum += err;
            ++count;
            fold_sum[f] += err;
            fold_count[f] += 1.0;
        }
        std::vector<double> fold_means;
        for (size_t f = 0; f < n_folds; ++f) {
            if (fold_count[f] > 0.0) {
                fold_means.push_back(fold_sum[f] / fold_count[f]);
            }
        }
        ErrorRow r;
        r.method = method;
        r.group = group;
        r.quartile = q;
        r.samples = count;
        r.mean = count > 0 ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
        r.std_dev = sample_std(fold_means);
        rows.push_back(r);
    }
    return rows;
}

void evaluate_table(Method method, const Dataset& data, const GridConfig& grid, EvalReport& report,
                    const std::vector<double>& e_grid)
{
    const auto start = std::chrono::steady_clock::now();
    for (GenderGroup group : {GenderGroup::Male, GenderGroup::Female, GenderGroup::Both}) {
        std::vector<Index> rows;
        for (size_t i = 0; i < data.genders.size(); ++i) {
            const bool keep = group == GenderGroup::Both ||
                              (group == GenderGroup::Male) == (data.genders[i] == Gender::Male);
            if (keep) {
                rows.push_back(static_cast<Index>(i));
            }
        }
        if (rows.size() < static_cast<size_t>(2 * grid.folds)) {
            report.warnings.push_back(to_string(method) + ": group " + to_string(group) + " has " +
                                      std::to_string(rows.size()) + " subjects, omitted");
            continue;
        }
        const Dataset part = subset(data, rows);
        GroupSearch gs{group, grid_search(method, part, grid)};
        const CvResult& cv = gs.search.best_cv;
        for (const ErrorRow& r : error_rows(method, group, part, cv)) {
            report.rows.push_back(r);
        }
        std::vector<QuartileBoundaries> per_sample;
        for (int f : cv.fold_of_sample) {
            per_sample.push_back(cv.fold_boundaries[static_cast<size_t>(f)]);
        }
        report.curves.push_back({method, group, accuracy_curve(cv.predictions, part.heights, per_sample, e_grid)});
        report.searches.push_back(std::move(gs));
    }
    report.seconds[to_string(method)] +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

KSweepResult k_sweep(const Dataset& data, const std::vector<int>& k_values, const PipHyperparams& params,
                     const std::vector<Fold>& folds, const CvOptions& options)
{
    KSweepResult result;
    std::vector<int> ks;
    std::set<int> seen;
    for (int k : k_values) {
        if (k < 0 || k > data.privileged.cols()) {
            throw std::invalid_argument("k_sweep: K = " + std::to_string(k) + " outside [0, " +
                                        std::to_string(data.privileged.cols()) + "]");
        }
        if (!seen.insert(k).second) {
            result.warnings.push_back("k_sweep: duplicate K = " + std::to_string(k) + " ignored");
            continue;
        }
        ks.push_back(k);
    }
    for (int k : ks) {
        MethodParams p;
        p.pip = params;
        p.pip.k = k;
        const CvResult cv = cross_validate(Method::Pip, data, p, folds, options);
        const ErrorRow all = error_rows(Method::Pip, GenderGroup::Both, data, cv).front();
        result.points.push_back({k, all.mean, all.std_dev});
    }
    return result;
}

namespace {

std::string quartile_label(int q)
{
    return q == 0 ? "All" : "Q" + std::to_string(q);
}

} // namespace

void write_report_csv(std::ostream& out, const EvalReport& report)
{
    out << "method,group,quartile,mean_error,std_error,samples\n";
    for (const ErrorRow& r : report.rows) {
        out << to_string(r.method) << ',' << to_string(r.group) << ',' << quartile_label(r.quartile) << ','
            << format_number(r.mean) << ',' << format_number(r.std_dev) << ',' << r.samples << '\n';
    }
}

void write_report_json(std::ostream& out, const EvalReport& report)
{
    using nlohmann::json;
    json j;
    j["std_over"] = report.std_over;
    j["error_unit"] = "percent";
    json rows = json::array();
    for (const ErrorRow& r : report.rows) {
        rows.push_back({{"method", to_string(r.method)},
                        {"group", to_string(r.group)},
                        {"quartile", quartile_label(r.quartile)},
                        {"mean_error", r.mean},
                        {"std_error", r.std_dev},
                        {"samples", r.samples}});
    }
    j["rows"] = rows;
    json best = json::array();
    for (const GroupSearch& gs : report.searches) {
        const GridSearchResult& s = gs.search;
        json params = json::object();
        for (size_t i = 0; i < s.parameter_names.size(); ++i) {
            params[s.parameter_names[i]] = s.cells[s.best_cell].values[i];
        }
        json counts = json::object();
        for (const StageCount& c : s.stage_counts) {
            counts[c.stage] = {{"cells", c.cells}, {"failed", c.failed}};
        }
        best.push_back({{"method", to_string(s.method)},
                        {"group", to_string(gs.group)},
                        {"parameters", params},
                        {"cv_error", s.best_cv.mean_error},
                        {"cell_counts", counts},
                        {"seconds", s.seconds}});
    }
    j["searches"] = best;
    j["seconds"] = report.seconds;
    j["warnings"] = report.warnings;
    out << j.dump(2) << '\n';
}

void write_curve_csv(std::ostream& out, const EvalReport& report)
{
    out << "method,group,e,accuracy_q1,accuracy_q2,accuracy_q3,accuracy_q4,accuracy_all\n";
    for (const GroupCurve& c : report.curves) {
        for (const AccuracyPoint& p : c.points) {
            out << to_string(c.method) << ',' << to_string(c.group) << ',' << format_number(p.e);
            for (double a : p.per_quartile) {
                out << ',' << format_number(a);
            }
            out << ',' << format_number(p.overall) << '\n';
        }
    }
}

void write_k_sweep_csv(std::ostream& out, const KSweepResult& sweep)
{
    out << "k,mean_error,std_error\n";
    for (const KSweepPoint& p : sweep.points) {
        out << p.k << ',' << format_number(p.mean_error) << ',' << format_number(p.std_dev) << '\n';
    }
}

void write_cv_log_csv(std::ostream& out, const EvalReport& report)
{
    out << "group,method,stage,stage_cells,cell,parameters,mean_error,status,message\n";
    for (const GroupSearch& gs : report.searches) {
        const GridSearchResult& s = gs.search;
        std::map<std::string, std::size_t> per_stage;
        for (const StageCount& c : s.stage_counts) {
            per_stage[c.stage] = c.cells;
        }
        for (size_t i = 0; i < s.cells.size(); ++i) {
            const GridCellResult& c = s.cells[i];
            std::string params;
            for (size_t p = 0; p < s.parameter_names.size(); ++p) {
                if (std::isnan(c.values[p])) {
                    continue;
                }
                params += (params.empty() ? "" : ";") + s.parameter_names[p] + "=" + format_number(c.values[p]);
            }
            std::string message = c.message;
            std::replace(message.begin(), message.end(), ',', ';');
            std::replace(message.begin(), message.end(), '\n', ' ');
            out << to_string(gs.group) << ',' << to_string(s.method) << ',' << c.stage << ',' << per_stage[c.stage]
                << ',' << i << ',' << params << ',' << format_number(c.mean_error) << ','
                << (c.ok ? (i == s.best_cell ? "best" : "ok") : "failed") << ',' << message << '\n';
        }
    }
}

} // namespace lupi
