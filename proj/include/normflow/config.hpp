#pragma once

#include "normflow/errors.hpp"
#include "normflow/flows.hpp"
#include "normflow/integrator.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace normflow {

struct GeometryConfig {
    GeometryKind kind = GeometryKind::IntervalDirichlet;
    std::vector<double> extents{1.0};
    int resolution = 128;
    int n = 1;  // ball dimension; equals the grid dimension otherwise
};

struct InitialConfig {
    // constant_plus_sine(a, mode) | parabola | gaussian_bump(width[, center...]) | file:<path>
    std::string preset = "parabola";
    double perturbation = 0.0;  // relative amplitude of uniform multiplicative noise
    std::uint64_t seed = 0;
};

// Parsed initial-data selector. `name` is one of constant_plus_sine,
// parabola, gaussian_bump or file; `path` is set for file presets.
struct PresetSpec {
    std::string name;
    std::vector<double> args;
    std::filesystem::path path;
};
// Throws InvalidConfig on unknown names or wrong argument counts.
PresetSpec parse_preset(const std::string& text);

struct DiagnosticsConfig {
    std::vector<std::string> checks;  // empty: defaults for the flow variant
    double tolerance = 1e-6;          // monotonicity, Harnack, Lyapunov, growth bounds
    double balance_tolerance = 1e-4;  // dissipation balance
    double integrable_tolerance = 0.01;
    double tail_fraction = 0.25;
    double bound_factor = 10.0;
    double oracle_tolerance = 1e-3;
};

struct ExperimentConfig {
    std::string name;
    std::optional<RunStatus> expect;
    FlowVariant variant = FlowVariant::A_YamabeType;
    double p = 2.0;
    bool allow_subcritical = false;
    GeometryConfig geometry;
    InitialConfig initial;
    SolverConfig solver;
    DiagnosticsConfig diagnostics;
    std::optional<std::filesystem::path> output_directory;
    int snapshot_every = 0;             // every k-th trace sample; 0: first and last only
    std::filesystem::path source_dir;   // base for relative file: presets

    FlowSpec flow_spec() const { return FlowSpec::make(variant, p, geometry.n, allow_subcritical); }
};

struct ConfigIssue {
    int line = 0;  // 0 when the issue is not tied to one line
    std::string message;
};

class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<ConfigIssue> issues);
    const std::vector<ConfigIssue>& issues() const { return issues_; }

private:
    std::vector<ConfigIssue> issues_;
};

// All problems are collected before throwing ConfigError.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Names accepted in [diagnostics] checks.
const std::vector<std::string>& known_checks();
std::vector<std::string> default_checks(FlowVariant variant);

}  // namespace normflow
