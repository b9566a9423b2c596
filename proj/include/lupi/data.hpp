/**
 * @file data.hpp
 * @brief CSV ingestion of anthropometric records and a synthetic population
 *        generator standing in for license-restricted survey data.
 *
 * CSV layout: a header naming subject_id, gender, weight and every schema
 * measurement (extra columns are ignored), then one subject per line. Empty,
 * "NA" or "nan" fields are missing values.
 */

#pragma once

#include "lupi/features.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace lupi {

struct DiscardEntry {
    std::size_t line = 0; ///< 1-based line number in the file (header is line 1)
    std::string subject_id;
    std::string reason;
};

struct LoadResult {
    std::vector<MeasurementRecord> records;
    std::vector<std::size_t> record_lines; ///< file line of each kept record
    std::vector<DiscardEntry> discarded;
};

struct CsvOptions {
    /// Only observable columns are required, as when predicting: privileged
    /// and height columns may be absent or empty (height is then NaN).
    bool observable_only = false;
};

/// Throws std::runtime_error for unreadable files and malformed headers.
LoadResult load_csv(const std::string& path, const MeasurementSchema& schema, const CsvOptions& options = {});
LoadResult read_csv(std::istream& in, const MeasurementSchema& schema, const CsvOptions& options = {});

/// Values are written in shortest round-trip form, so read_csv(write_csv(r)) == r.
void write_csv(const std::string& path, const std::vector<MeasurementRecord>& records,
               const MeasurementSchema& schema);
void write_csv(std::ostream& out, const std::vector<MeasurementRecord>& records, const MeasurementSchema& schema);

/// One measurement of the synthetic population, in mm:
///   value = offset + loading * stature + noise_sd * N(0, 1), clipped to >= 1 mm.
struct MeasurementModel {
    double offset = 0.0;
    double loading = 0.0;
    double noise_sd = 0.0;
};

struct SyntheticConfig {
    int n_subjects = 500;
    std::uint64_t seed = 1;
    double male_fraction = 0.5;
    double male_mean_stature = 1756.0; ///< mm
    double male_sd_stature = 72.0;
    double female_mean_stature = 1629.0;
    double female_sd_stature = 66.0;
    std::vector<MeasurementModel> measurements; ///< one per schema name; the height slot is ignored

    void validate(const MeasurementSchema& schema) const;

    /// Calibrated defaults for a schema: observable lengths scale almost
    /// proportionally with stature and are noisy, privileged measurements mix
    /// stature-proportional and stature-independent parts with less noise, so
    /// privileged ratios carry more height information than observable ones.
    static SyntheticConfig defaults(const MeasurementSchema& schema);
};

/// Deterministic for a given config; every subject draws from its own
/// generator seeded by (seed, subject index).
std::vector<MeasurementRecord> generate_synthetic(const SyntheticConfig& config, const MeasurementSchema& schema);

struct GenderSplit {
    std::vector<MeasurementRecord> male;
    std::vector<MeasurementRecord> female;
};

GenderSplit split_by_gender(const std::vector<MeasurementRecord>& records);

} // namespace lupi
