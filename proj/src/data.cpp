#include "lupi/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

namespace lupi {

using Eigen::Index;
using Eigen::VectorXd;

namespace {

std::vector<std::string> split_line(const std::string& line)
{
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                current.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                current.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(current);
            current.clear();
        } else if (c != '\r') {
            current.push_back(c);
        }
    }
    fields.push_back(current);
    return fields;
}

std::string trim(const std::string& s)
{
    const auto begin = s.find_first_not_of(" \t");
    if (begin == std::string::npos) {
        return "";
    }
    const auto end = s.find_last_not_of(" \t");
    return s.substr(begin, end - begin + 1);
}

bool is_missing(const std::string& field)
{
    std::string lower;
    for (char c : field) {
        lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return lower.empty() || lower == "na" || lower == "nan";
}

/// Parses a complete decimal number; false on trailing garbage.
bool parse_number(const std::string& field, double& value)
{
    const char* first = field.data();
    const char* last = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    return ec == std::errc() && ptr == last;
}

std::string format_number(double value)
{
    char buffer[64];
    const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
    if (ec != std::errc()) {
        throw std::runtime_error("write_csv: cannot format number");
    }
    return std::string(buffer, ptr);
}

std::string quote_if_needed(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out.push_back('"');
        }
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

} // namespace

LoadResult read_csv(std::istream& in, const MeasurementSchema& schema, const CsvOptions& options)
{
    schema.validate();
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error("csv: missing header row");
    }
    const std::vector<std::string> header = split_line(line);
    std::map<std::string, size_t> column;
    for (size_t c = 0; c < header.size(); ++c) {
        const std::string name = trim(header[c]);
        if (!column.emplace(name, c).second) {
            throw std::runtime_error("csv: duplicate column '" + name + "' in header");
        }
    }
    auto require = [&](const std::string& name) {
        const auto it = column.find(name);
        if (it == column.end()) {
            throw std::runtime_error("csv: header lacks column '" + name + "'");
        }
        return it->second;
    };
    const size_t id_col = require("subject_id");
    const size_t gender_col = require("gender");
    const auto weight_it = column.find("weight");
    std::vector<bool> required(schema.names.size(), false);
    for (int i : schema.observable_indices) {
        required[static_cast<size_t>(i)] = true;
    }
    if (!options.observable_only) {
        required[static_cast<size_t>(schema.height_index)] = true;
        for (int i : schema.privileged_indices) {
            required[static_cast<size_t>(i)] = true;
        }
    }
    constexpr size_t kAbsent = static_cast<size_t>(-1);
    std::vector<size_t> measure_col;
    for (size_t m = 0; m < schema.names.size(); ++m) {
        const auto it = column.find(schema.names[m]);
        measure_col.push_back(it != column.end() || required[m] || !options.observable_only
                                  ? require(schema.names[m])
                                  : kAbsent);
    }

    LoadResult result;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty() || trim(line) == "\r") {
            continue;
        }
        const std::vector<std::string> fields = split_line(line);
        DiscardEntry entry{line_no, "", ""};
        if (fields.size() != header.size()) {
            entry.subject_id = fields.size() > id_col ? trim(fields[id_col]) : "";
            entry.reason = "expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(fields.size());
            result.discarded.push_back(entry);
            continue;
        }
        MeasurementRecord rec;
        rec.subject_id = trim(fields[id_col]);
        entry.subject_id = rec.subject_id;
        try {
            rec.gender = parse_gender(trim(fields[gender_col]));
        } catch (const std::invalid_argument&) {
            entry.reason = "invalid gender '" + trim(fields[gender_col]) + "'";
            result.discarded.push_back(entry);
            continue;
        }
        if (weight_it != column.end()) {
            const std::string w = trim(fields[weight_it->second]);
            double value = 0.0;
            if (!is_missing(w)) {
                if (!parse_number(w, value) || !std::isfinite(value) || value <= 0.0) {
                    entry.reason = "invalid value in weight";
                    result.discarded.push_back(entry);
                    continue;
                }
                rec.weight = value;
            }
        }
        rec.measurements = VectorXd::Constant(static_cast<Index>(schema.names.size()),
                                              std::numeric_limits<double>::quiet_NaN());
        for (size_t m = 0; m < schema.names.size() && entry.reason.empty(); ++m) {
            if (measure_col[m] == kAbsent) {
                continue;
            }
            const std::string f = trim(fields[measure_col[m]]);
            const std::string& name = schema.names[m];
            if (is_missing(f)) {
                if (required[m]) {
                    entry.reason = "missing value in " + name;
                }
                continue;
            }
            double value = 0.0;
            if (!parse_number(f, value) || !std::isfinite(value)) {
                if (required[m]) {
                    entry.reason = "invalid value in " + name;
                }
            } else if (value <= 0.0) {
                if (required[m]) {
                    entry.reason = "non-positive value in " + name;
                }
            } else {
                rec.measurements(static_cast<Index>(m)) = value;
            }
        }
        if (!entry.reason.empty()) {
            result.discarded.push_back(entry);
            continue;
        }
        rec.height = rec.measurements(schema.height_index);
        result.records.push_back(std::move(rec));
        result.record_lines.push_back(line_no);
    }
    return result;
}

LoadResult load_csv(const std::string& path, const MeasurementSchema& schema, const CsvOptions& options)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("csv: cannot open '" + path + "'");
    }
    return read_csv(in, schema, options);
}

void write_csv(std::ostream& out, const std::vector<MeasurementRecord>& records, const MeasurementSchema& schema)
{
    out << "subject_id,gender,weight";
    for (const std::string& name : schema.names) {
        out << ',' << name;
    }
    out << '\n';
    for (const MeasurementRecord& r : records) {
        out << quote_if_needed(r.subject_id) << ',' << to_string(r.gender) << ',';
        if (r.weight) {
            out << format_number(*r.weight);
        }
        for (size_t m = 0; m < schema.names.size(); ++m) {
            out << ',';
            const Index idx = static_cast<Index>(m);
            if (idx < r.measurements.size() && !std::isnan(r.measurements(idx))) {
                out << format_number(r.measurements(idx));
            }
        }
        out << '\n';
    }
}

void write_csv(const std::string& path, const std::vector<MeasurementRecord>& records,
               const MeasurementSchema& schema)
{
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("csv: cannot write '" + path + "'");
    }
    write_csv(out, records, schema);
    if (!out) {
        throw std::runtime_error("csv: write to '" + path + "' failed");
    }
}

void SyntheticConfig::validate(const MeasurementSchema& schema) const
{
    if (n_subjects <= 0) {
        throw std::invalid_argument("synthetic: number of subjects must be positive");
    }
    if (!(male_fraction >= 0.0 && male_fraction <= 1.0)) {
        throw std::invalid_argument("synthetic: male fraction must lie in [0, 1]");
    }
    if (!(male_sd_stature > 0.0) || !(female_sd_stature > 0.0) || !(male_mean_stature > 0.0) ||
        !(female_mean_stature > 0.0)) {
        throw std::invalid_argument("synthetic: stature means and spreads must be positive");
    }
    if (measurements.size() != schema.names.size()) {
        throw std::invalid_argument("synthetic: need one measurement model per schema name");
    }
    for (const MeasurementModel& m : measurements) {
        if (!std::isfinite(m.offset) || !std::isfinite(m.loading) || !(m.noise_sd >= 0.0)) {
            throw std::invalid_argument("synthetic: invalid measurement model");
        }
    }
}

namespace {

// Typical size of each default measurement as a fraction of stature.
const std::map<std::string, double>& typical_proportions()
{
    static const std::map<std::string, double> table = {
        {"acromion_radiale_length", 0.190}, {"radiale_stylion_length", 0.145}, {"hand_length", 0.108},
        {"hand_breadth", 0.050},            {"foot_length", 0.152},            {"foot_breadth", 0.058},
        {"knee_height", 0.285},             {"buttock_knee_length", 0.340},    {"biacromial_breadth", 0.230},
        {"hip_breadth", 0.210},             {"arm_span_half", 0.500},          {"head_breadth", 0.087},
        {"head_length", 0.113},             {"face_length", 0.070},            {"head_circumference", 0.330},
        {"neck_circumference", 0.220},      {"chest_circumference", 0.580},    {"waist_circumference", 0.500},
        {"hip_circumference", 0.600},       {"thigh_circumference", 0.350},    {"knee_circumference", 0.220},
        {"calf_circumference", 0.220},      {"ankle_circumference", 0.130},    {"biceps_circumference", 0.180},
        {"forearm_circumference", 0.160},   {"wrist_circumference", 0.100},    {"underbust_circumference", 0.500},
        {"waist_front_length", 0.250},      {"chest_depth", 0.150},            {"waist_depth", 0.140},
        {"bizygomatic_breadth", 0.080},     {"bitragion_breadth", 0.085},      {"menton_sellion_length", 0.070},
        {"interpupillary_breadth", 0.037},  {"neck_base_circumference", 0.270}, {"armscye_circumference", 0.270},
        {"vertical_trunk_circumference", 0.930},
    };
    return table;
}

// Low-discrepancy spread in [0, 1) so neighbouring measurements differ.
double spread(int i)
{
    const double golden = 0.6180339887498949;
    return std::fmod(0.5 + golden * static_cast<double>(i), 1.0);
}

} // namespace

SyntheticConfig SyntheticConfig::defaults(const MeasurementSchema& schema)
{
    // Calibration knobs: fraction of each measurement that does not scale with
    // stature, and noise as a fraction of the typical size.
    constexpr double kReference = 1700.0;
    constexpr double kObservableFixedMax = 0.60;
    constexpr double kObservableNoise = 0.035;
    constexpr double kPrivilegedFixedMax = 0.90;
    constexpr double kPrivilegedNoise = 0.015;

    SyntheticConfig c;
    c.measurements.resize(schema.names.size());
    auto fill = [&](const std::vector<int>& group, double fixed_max, double noise) {
        for (size_t g = 0; g < group.size(); ++g) {
            const size_t idx = static_cast<size_t>(group[g]);
            const auto it = typical_proportions().find(schema.names[idx]);
            const double p = it == typical_proportions().end() ? 0.2 : it->second;
            const double fixed = fixed_max * spread(static_cast<int>(g));
            MeasurementModel& m = c.measurements[idx];
            m.offset = fixed * p * kReference;
            m.loading = (1.0 - fixed) * p;
            m.noise_sd = noise * p * kReference;
        }
    };
    fill(schema.observable_indices, kObservableFixedMax, kObservableNoise);
    fill(schema.privileged_indices, kPrivilegedFixedMax, kPrivilegedNoise);
    // Measurements outside both groups follow stature loosely.
    for (size_t i = 0; i < schema.names.size(); ++i) {
        MeasurementModel& m = c.measurements[i];
        if (m.loading == 0.0 && m.offset == 0.0 && static_cast<int>(i) != schema.height_index) {
            m.loading = 0.2;
            m.noise_sd = 0.02 * 0.2 * kReference;
        }
    }
    return c;
}

std::vector<MeasurementRecord> generate_synthetic(const SyntheticConfig& config, const MeasurementSchema& schema)
{
    schema.validate();
    config.validate(schema);
    const int width = std::max(5, static_cast<int>(std::to_string(config.n_subjects).size()));
    std::vector<MeasurementRecord> records(static_cast<size_t>(config.n_subjects));
    for (int s = 0; s < config.n_subjects; ++s) {
        std::seed_seq seq{static_cast<std::uint32_t>(config.seed & 0xffffffffu),
                          static_cast<std::uint32_t>(config.seed >> 32), static_cast<std::uint32_t>(s)};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> unit(0.0, 1.0);

        MeasurementRecord& r = records[static_cast<size_t>(s)];
        std::string id = std::to_string(s + 1);
        r.subject_id = "S" + std::string(static_cast<size_t>(std::max(0, width - static_cast<int>(id.size()))), '0') + id;
        r.gender = unit(rng) < config.male_fraction ? Gender::Male : Gender::Female;
        const double mean = r.gender == Gender::Male ? config.male_mean_stature : config.female_mean_stature;
        const double sd = r.gender == Gender::Male ? config.male_sd_stature : config.female_sd_stature;
        const double stature = std::max(1.0, mean + sd * normal(rng));

        r.measurements.resize(static_cast<Index>(schema.names.size()));
        for (size_t m = 0; m < schema.names.size(); ++m) {
            const MeasurementModel& model = config.measurements[m];
            const double value = model.offset + model.loading * stature + model.noise_sd * normal(rng);
            r.measurements(static_cast<Index>(m)) = std::max(1.0, value);
        }
        r.measurements(schema.height_index) = stature;
        r.height = stature;
    }
    return records;
}

GenderSplit split_by_gender(const std::vector<MeasurementRecord>& records)
{
    GenderSplit split;
    for (const MeasurementRecord& r : records) {
        (r.gender == Gender::Male ? split.male : split.female).push_back(r);
    }
    return split;
}

} // namespace lupi
