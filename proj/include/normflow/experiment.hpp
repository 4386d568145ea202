#pragma once

#include "normflow/config.hpp"
#include "normflow/diagnostics.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace normflow {

inline constexpr const char* kTraceHeader = "t,lambda,norm_q,umax,umin,energy,B,dt,dissipation,drift";

// Samples the configured preset on the geometry (before normalization).
Field initial_data(const ExperimentConfig& config, const GeometryPtr& geom);

// Checks that only need the trace; `oracle` is evaluated separately from the final field.
std::vector<CheckReport> trace_checks(const ExperimentConfig& config, const Trace& trace);

struct OracleComparison {
    double lambda_oracle = 0.0;
    double lambda_relative_error = 0.0;
    double field_distance = 0.0;  // ||u - u_oracle||_w / ||u_oracle||_w
};
// Shooting-oracle steady state for B and C on intervals and balls; nullopt
// when no oracle applies (other geometries, or the profile stays positive).
std::optional<OracleComparison> compare_with_oracle(const ExperimentConfig& config, const Field& u, double lambda);

struct ExperimentResult {
    int exit_code = 1;  // 0 ok, 2 blow-up, 1 failed check or error
    std::optional<RunStatus> status;
    bool checks_passed = false;
    std::string error;
    std::filesystem::path directory;
};

/// Writes trace.csv, snapshots/u_<t>.csv and summary.json under `out_dir`.
/// Never throws; failures come back as exit code 1 with `error` set.
ExperimentResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir);

// Output directory for a single run: `explicit_out`, else [output] directory
// (relative to the config file), else $NORMFLOW_OUT/<name>, else normflow_out/<name>.
std::filesystem::path resolve_output_dir(const ExperimentConfig& config,
                                         const std::optional<std::filesystem::path>& explicit_out);
// $NORMFLOW_OUT or "normflow_out".
std::filesystem::path default_output_root();

struct SuiteEntry {
    std::string name;
    std::filesystem::path config;
    bool malformed = false;
    std::optional<RunStatus> expected;
    ExperimentResult result;
    bool unexpected = true;
};

struct SuiteReport {
    std::vector<SuiteEntry> entries;
    int exit_code = 0;  // nonzero iff any entry is unexpected
};

/// Runs every *.ini in `dir` on up to `jobs` threads, each into
/// out_root/<name>, and writes out_root/suite_report.json. Throws
/// InvalidConfig when the directory holds no configs.
SuiteReport run_suite(const std::filesystem::path& dir, const std::filesystem::path& out_root, unsigned jobs = 0);

// Columns missing from the header read as NaN.
Trace read_trace_csv(const std::filesystem::path& path, const FlowSpec& spec, double measure);

}  // namespace normflow
