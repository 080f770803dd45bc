#pragma once

#include "robcov/ensemble.hpp"
#include "robcov/testers.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace robcov {

inline constexpr const char* kToolVersion = "robcov 0.1.0";

struct TrialRecord {
  std::string experiment;
  int dim = 0;
  double epsilon = 0.0;
  std::int64_t n_samples = 0;
  std::int64_t trial_index = 0;
  std::uint64_t seed = 0;
  std::map<std::string, double> metrics;
};

bool operator==(const TrialRecord& a, const TrialRecord& b);

enum class Format { Csv, Json };
Format parse_format(const std::string& tag);

// CSV columns: experiment, dim, epsilon, n_samples, trial_index, seed, then the
// union of metric names in sorted order. A record without a metric leaves the
// cell blank (null in JSON). Reals use %.17g; infinities are written as inf /
// -inf (strings in JSON). NaN metrics are refused.
void emit(std::ostream& out, std::span<const TrialRecord> records, Format format);
void emit(const std::string& path, std::span<const TrialRecord> records, Format format);
std::vector<TrialRecord> parse_records(std::istream& in, Format format);

struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string subcommand;
  std::uint64_t master_seed = 0;
  std::optional<EnsembleConfig> config;
  std::map<std::string, std::string> parameters;
  std::vector<std::string> outputs;
};

bool operator==(const RunManifest& a, const RunManifest& b);
std::string to_json(const RunManifest& m);
RunManifest manifest_from_json(const std::string& text);
std::string manifest_path(const std::string& output_path);

// ROBCOV_SEED when set (a decimal 64-bit integer), else fallback. A value
// that does not parse is an invalid-argument error.
std::uint64_t default_master_seed(std::uint64_t fallback = 0);

struct RunResult {
  std::vector<TrialRecord> records;
  RunManifest manifest;
  std::vector<std::string> summary;  // human-readable lines for the terminal
  int failures = 0;                  // selfcheck only
};

// Writes records to path and the manifest to manifest_path(path).
void write_run(const RunResult& run, const std::string& path, Format format);

struct RunSettings {
  std::uint64_t master_seed = 0;
  int trials = 0;  // 0 picks the subcommand default
  int workers = 1;
  std::vector<std::int64_t> samples;
  std::vector<double> thresholds;
};

enum class Chi2Mode { Exact, Taylor, Mixture };
Chi2Mode parse_chi2_mode(const std::string& tag);

// exact: the files hold covariances. taylor and mixture: the files hold
// perturbations A and B; mixture builds D_A and D_B at epsilon without the gap check.
RunResult run_chi2(const std::string& path_a, const std::string& path_b, Chi2Mode mode, double epsilon);

RunResult run_gen_ensemble(const EnsembleConfig& cfg, const RunSettings& s,
                           const std::optional<std::string>& matrix_dir);
RunResult run_concentration(const EnsembleConfig& cfg, const RunSettings& s);
RunResult run_indist(const EnsembleConfig& cfg, const RunSettings& s, PairMode mode = PairMode::Independent);

struct PowerGrid {
  std::vector<Dataset> datasets;
  std::vector<Tester> testers;
  PowerParams params;
};
RunResult run_power(const EnsembleConfig& cfg, const RunSettings& s, const PowerGrid& grid);

RunResult run_selfcheck(const RunSettings& s);

// Shortest round-trip decimal, always with a decimal point or exponent ("1.0").
std::string format_value(double x);

}  // namespace robcov
