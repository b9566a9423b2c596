/**
 * @file cli.hpp
 * @brief The `lupi` command line: generate, train, evaluate and predict.
 *
 * Every command accepts --config with a flat JSON object whose keys are flag
 * names without the leading dashes; flags given on the command line win.
 * Each run writes manifest.json into --out with the resolved configuration.
 */

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lupi::cli {

inline constexpr const char* kVersion = "1.0.0";

/**
 * Value lists used by --grid, --param, --e-grid and --k-sweep:
 *   "1e-4..1e4"   every power of ten from the first to the last value
 *   "0:0.5:10"    first:step:last, inclusive
 *   "0:12"        first:last with step 1
 *   "1,3,10"      explicit values
 * Throws std::invalid_argument for malformed or empty lists.
 */
std::vector<double> parse_value_list(const std::string& text);
/// Same syntax; every value must be a non-negative integer.
std::vector<int> parse_int_list(const std::string& text);

/// Runs one command; returns the process exit code. Progress and errors go to `log`.
int run(const std::vector<std::string>& args, std::ostream& log);
int run(int argc, char** argv);

} // namespace lupi::cli
