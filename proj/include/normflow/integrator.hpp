#pragma once

#include "normflow/flows.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

namespace normflow {

enum class Scheme {
    ExplicitEuler,
    // Crank-Nicolson on the Laplacian, explicit lambda and reaction term,
    // flow-A mobility u^(2-p) frozen at the start of the step.
    ImexCrankNicolson,
    // Same splitting with backward Euler on the Laplacian; L-stable.
    ImexBackwardEuler,
};

std::string_view to_string(Scheme scheme);
std::optional<Scheme> parse_scheme(std::string_view text);

struct SolverConfig {
    Scheme scheme = Scheme::ImexCrankNicolson;
    double dt_initial = 1e-4;
    double dt_min = 1e-10;
    double dt_max = 1e-2;
    double t_max = 10.0;
    double blowup_umax_factor = 100.0;
    double steady_residual_tol = 1e-8;
    double positivity_floor = 1e-12;
    int record_every = 1;

    // Step control. A step is rejected on NaN, negative values or a
    // pre-projection drift above `max_step_drift`; dt grows by
    // `growth_factor` after `growth_interval` consecutive accepted steps.
    double max_step_drift = 1e-3;
    int growth_interval = 20;
    double growth_factor = 1.2;
    // Crank-Nicolson barely damps the stiffest modes, so the first
    // `startup_steps` accepted steps use ImexBackwardEuler instead.
    int startup_steps = 4;

    // Throws InvalidConfig on violated invariants.
    void validate() const;
};

struct StepStats {
    double lambda = 0.0;    // multiplier used for the step (start of step)
    double drift = 0.0;     // |int u_new^q / int u^q - 1|, before projection
    double max_rate = 0.0;  // max |u_t| at the start of the step
};

struct StepResult {
    Field u;  // advanced field, not yet projected
    StepStats stats;
};

StepResult step(const FlowSpec& spec, const Geometry& geom, const Field& u, double dt, Scheme scheme);

// Rescales onto the unit L^q sphere; identical to normalize().
Field project(const FlowSpec& spec, const Geometry& geom, const Field& u);

// Largest stable explicit Euler step for the current state: 2 / (rho(L) max mobility).
double explicit_step_bound(const FlowSpec& spec, const Geometry& geom, const Vector& u);

struct TraceSample {
    std::size_t step = 0;
    double t = 0.0;
    double lambda = 0.0;
    double norm_pre = 1.0;   // int u^q before the last projection
    double norm_post = 1.0;  // int u^q of the recorded (projected) state
    double umax = 0.0;
    double umin = 0.0;
    double energy = 0.0;       // int |grad u|^2
    double B = 0.0;            // int u^(p+1)
    double dt = 0.0;           // size of the last accepted step
    double dissipation = 0.0;  // int w u_t^2, w = u^(p-2) for flow A, 1 otherwise
    double drift = 0.0;        // pre-projection drift of the last step
};

struct Trace {
    FlowSpec spec;
    double measure = 0.0;  // |Omega| of the geometry the run used
    std::vector<TraceSample> samples;
};

enum class RunStatus { Converged, BlowUp, HorizonReached, PositivityLost };

std::string_view to_string(RunStatus status);
std::optional<RunStatus> parse_run_status(std::string_view text);

// log umax ~ a + exponent * log(t_blowup - t), descriptive only.
struct GrowthFit {
    double exponent = 0.0;
    double t_blowup = 0.0;
    double r2 = 0.0;
    std::size_t samples = 0;
};

struct BlowupReport {
    double t_detect = 0.0;
    std::size_t sample_index = 0;
    double threshold = 0.0;  // factor * umax(0)
    bool threshold_crossed = false;
    bool dt_collapse = false;
    std::optional<GrowthFit> fit;
};

struct RunOutcome {
    RunStatus status = RunStatus::HorizonReached;
    Field final_field;
    double final_lambda = 0.0;
    double steady_residual = 0.0;
    double t_final = 0.0;
    std::size_t steps = 0;
    std::size_t rejected_steps = 0;
    std::optional<BlowupReport> blowup;
};

struct RunResult {
    RunOutcome outcome;
    Trace trace;
};

// Called for every recorded sample with the state it describes.
using RecordHook = std::function<void(const TraceSample&, const Field&)>;

/// Normalizes g and advances step -> project -> record until the state is
/// steady (Converged), umax crosses the blow-up threshold or dt collapses
/// while umax grows (BlowUp), the floor is breached (PositivityLost) or
/// t_max is reached (HorizonReached).
///
/// Throws InvalidInitialData for unusable g and StepSizeCollapse when dt
/// drops below dt_min without growth of umax.
RunResult run(const FlowSpec& spec, const GeometryPtr& geom, const Field& g, const SolverConfig& config,
              const RecordHook& on_record = {});

// First sample with umax > factor * umax(0), with a growth fit over the
// final decade leading up to it.
std::optional<BlowupReport> detect_blowup(const Trace& trace, const SolverConfig& config);

// Fit over samples [k, last] where umax stays within a factor 10 of umax(last).
std::optional<GrowthFit> fit_blowup_growth(const Trace& trace, std::size_t last);

}  // namespace normflow
