#pragma once

#include "normflow/geometry.hpp"

#include <optional>
#include <string_view>

namespace normflow {

enum class FlowVariant {
    A_YamabeType,         // u^(p-2) u_t = Lap u + lambda u^(p-1), conserves int u^p
    B_L2Preserving,       // u_t = Lap u + lambda u^p, conserves int u^2
    C_LpPlus1Preserving,  // u_t = Lap u + lambda u^p, conserves int u^(p+1)
};

std::string_view to_string(FlowVariant variant);
std::optional<FlowVariant> parse_flow_variant(std::string_view text);

// (n + 2) / (n - 2) for n >= 3, +infinity otherwise.
double critical_exponent(int n);

struct FlowSpec {
    FlowVariant variant = FlowVariant::B_L2Preserving;
    double p = 2.0;
    double q = 2.0;  // conserved norm exponent
    int n = 1;       // ambient dimension
    bool allow_subcritical = false;

    /// Validates the exponent window of each flow:
    ///  A: p > 1.  B: p > 1 and p < critical(n).  C: p > 1 and p >= critical(n),
    ///  unless `allow_subcritical` is set (contrast runs).
    static FlowSpec make(FlowVariant variant, double p, int n, bool allow_subcritical = false);

    // Flow B with p = 1: the linear L2-preserving flow u_t = Lap u + lambda u
    // with lambda the Rayleigh quotient. Outside the p > 1 window; used as an
    // eigenpair oracle.
    static FlowSpec linear_l2(int n);
};

// Flow A needs a periodic (closed) geometry, B and C a Dirichlet one, and
// the spec's n must match the geometry.
void require_compatible(const FlowSpec& spec, const Geometry& geom);

double lambda_value(const FlowSpec& spec, const Geometry& geom, const Field& u);
// Time derivative u_t. Flow A is returned in solved-for form u^(2-p) (Lap u + lambda u^(p-1)).
Field rhs(const FlowSpec& spec, const Geometry& geom, const Field& u, double lambda);
Field normalize(const FlowSpec& spec, const Geometry& geom, const Field& u);
double conserved_norm(const FlowSpec& spec, const Geometry& geom, const Field& u);

namespace kernels {

// Array-level versions used inside the time stepper. No geometry checks.
double lambda_value(const FlowSpec& spec, const Geometry& geom, const Vector& u);
// u^(2-p) for flow A, ones for B and C.
Vector mobility(const FlowSpec& spec, const Vector& u);
// lambda u^(p-1) for flow A, lambda u^p for B and C.
Vector reaction(const FlowSpec& spec, const Vector& u, double lambda);
Vector rhs(const FlowSpec& spec, const Geometry& geom, const Vector& u, double lambda);
double conserved_norm(const FlowSpec& spec, const Geometry& geom, const Vector& u);
// ||Lap u + lambda u^(p or p-1)||_w / ||u||_w.
double steady_residual(const FlowSpec& spec, const Geometry& geom, const Vector& u, double lambda);
// Elementwise u^e; small integer exponents use repeated multiplication.
Vector powered(const Vector& u, double e);

}  // namespace kernels

}  // namespace normflow
