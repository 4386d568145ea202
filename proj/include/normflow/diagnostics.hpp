#pragma once

#include "normflow/integrator.hpp"

#include <map>
#include <optional>
#include <string>

namespace normflow {

// Outcome of one executable inequality or identity. `pass` is exactly
// `violation <= tolerance`; violations are dimensionless unless noted.
struct CheckReport {
    std::string name;
    bool pass = true;
    double violation = 0.0;
    double tolerance = 0.0;
    std::optional<std::size_t> time_index;  // sample where the worst violation sits
    std::map<std::string, double> context;
};

// Finishes a report: sets pass from violation and tolerance.
CheckReport make_report(std::string name, double violation, double tolerance, std::optional<std::size_t> index,
                        std::map<std::string, double> context = {});

// lambda(t_{k+1}) <= lambda(t_k) + tol * lambda(t_0). Flow A only.
CheckReport check_lambda_monotone(const Trace& trace, double tol = 1e-6);

struct DecayFit {
    double rate = 0.0;  // -slope of log lambda against t; +inf once lambda hits 0
    double r2 = 0.0;
    std::size_t samples = 0;
    bool degenerate = false;
    std::string note;
};

// Least squares of log lambda over the final `tail_fraction` of samples. Flow A only.
DecayFit fit_lambda_decay(const Trace& trace, double tail_fraction = 0.25);

// Empirical Harnack constant sup umax/umin. Fails when the ratio at the end
// exceeds the initial one by more than tol, or umin drops below
// umin(0) * (1 - tol). Throws NonpositiveField on umin <= 0. Flow A only.
CheckReport check_harnack(const Trace& trace, double tol = 1e-6);

// Trapezoidal int_0^t lambda at every sample.
std::vector<double> lambda_integral(const Trace& trace);

// Cauchy test on int lambda dt: the increment over the last quarter of the
// time span must stay below `tol` (default 1%) of the total. Flow A only.
CheckReport check_lambda_integrable(const Trace& trace, double tol = 0.01);

// log(umax/umax(0)) <= int lambda + tol and log(umin/umin(0)) >= int lambda - tol.
// Flow A only.
CheckReport check_growth_bounds(const Trace& trace, double tol = 1e-6);

// lambda B^((p-1)/(p+1)) non-increasing up to tol * initial value, and
// B >= |Omega|^(-(p-1)/2) (1 - tol). Flow B only.
CheckReport check_lyapunov_B(const Trace& trace, double tol = 1e-6);

// Energy balance along the trace, measured in units of E(0):
//   A, C: every 1/2 (E_{k+1} - E_k) <= tol E(0), and the running sum
//         1/2 (E_k - E_0) + int D dt stays within tol E(0);
//   B:    running 1/2 (E_k - E_0) + int D dt - int lambda/(p+1) dB likewise.
// Time integrals use the trapezoid rule. Throws MissingChannel when the
// dissipation (or, for B, the B) channel is absent (non-finite).
CheckReport check_dissipation_balance(const Trace& trace, double tol = 1e-4);

// sup lambda and sup energy along the trace, relative to their initial values,
// must stay below `factor`.
CheckReport check_trace_bounded(const Trace& trace, double factor = 10.0);

double steady_residual(const FlowSpec& spec, const Geometry& geom, const Field& u, double lambda);

}  // namespace normflow
