#include "normflow/flows.hpp"

#include "normflow/errors.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace normflow {

std::string_view to_string(FlowVariant variant) {
    switch (variant) {
        case FlowVariant::A_YamabeType: return "A";
        case FlowVariant::B_L2Preserving: return "B";
        case FlowVariant::C_LpPlus1Preserving: return "C";
    }
    return "?";
}

std::optional<FlowVariant> parse_flow_variant(std::string_view text) {
    if (text == "A" || text == "a" || text == "yamabe") return FlowVariant::A_YamabeType;
    if (text == "B" || text == "b" || text == "l2") return FlowVariant::B_L2Preserving;
    if (text == "C" || text == "c" || text == "lp1") return FlowVariant::C_LpPlus1Preserving;
    return std::nullopt;
}

double critical_exponent(int n) {
    if (n <= 2) return std::numeric_limits<double>::infinity();
    return (n + 2.0) / (n - 2.0);
}

FlowSpec FlowSpec::make(FlowVariant variant, double p, int n, bool allow_subcritical) {
    if (!(p > 1.0) || !std::isfinite(p)) {
        std::ostringstream msg;
        msg << "p > 1 required, got p = " << p;
        throw Error(ErrorCode::InvalidFlowSpec, msg.str());
    }
    if (n < 1) throw Error(ErrorCode::InvalidFlowSpec, "dimension n must be >= 1");
    const double pc = critical_exponent(n);
    FlowSpec spec;
    spec.variant = variant;
    spec.p = p;
    spec.n = n;
    spec.allow_subcritical = allow_subcritical;
    switch (variant) {
        case FlowVariant::A_YamabeType:
            spec.q = p;
            break;
        case FlowVariant::B_L2Preserving:
            if (!(p < pc)) {
                std::ostringstream msg;
                msg << "flow B needs subcritical p < (n+2)/(n-2) = " << pc << ", got p = " << p;
                throw Error(ErrorCode::InvalidFlowSpec, msg.str());
            }
            spec.q = 2.0;
            break;
        case FlowVariant::C_LpPlus1Preserving:
            if (!(p >= pc) && !allow_subcritical) {
                std::ostringstream msg;
                msg << "flow C needs p >= (n+2)/(n-2) = " << pc << " (n = " << n << ", p = " << p
                    << "); set allow_subcritical for contrast runs";
                throw Error(ErrorCode::InvalidFlowSpec, msg.str());
            }
            spec.q = p + 1.0;
            break;
    }
    return spec;
}

FlowSpec FlowSpec::linear_l2(int n) {
    FlowSpec spec;
    spec.variant = FlowVariant::B_L2Preserving;
    spec.p = 1.0;
    spec.q = 2.0;
    spec.n = n;
    return spec;
}

void require_compatible(const FlowSpec& spec, const Geometry& geom) {
    if (spec.n != geom.dimension()) {
        throw Error(ErrorCode::InvalidFlowSpec,
                    "flow dimension n = " + std::to_string(spec.n) + " but geometry has n = " +
                        std::to_string(geom.dimension()));
    }
    if (spec.variant == FlowVariant::A_YamabeType && !geom.is_periodic()) {
        throw Error(ErrorCode::InvalidFlowSpec, "flow A runs on closed (periodic) geometries only");
    }
    if (spec.variant != FlowVariant::A_YamabeType && !geom.is_dirichlet()) {
        throw Error(ErrorCode::InvalidFlowSpec, "flows B and C need a Dirichlet geometry");
    }
}

namespace {

void require_sign(const FlowSpec& spec, const Vector& u) {
    const double lo = u.minCoeff();
    if (spec.variant == FlowVariant::A_YamabeType ? !(lo > 0.0) : !(lo >= 0.0)) {
        std::ostringstream msg;
        msg << "flow " << to_string(spec.variant) << " needs "
            << (spec.variant == FlowVariant::A_YamabeType ? "u > 0" : "u >= 0") << ", min(u) = " << lo;
        throw Error(ErrorCode::NonpositiveField, msg.str());
    }
}

void require_same(const Geometry& geom, const Field& u) {
    if (&u.geometry() != &geom) {
        throw Error(ErrorCode::GeometryMismatch, "field lives on a different geometry");
    }
}

double checked_denominator(double value, const char* what) {
    if (!(value > std::numeric_limits<double>::min())) {
        throw Error(ErrorCode::ZeroDenominator, std::string(what) + " vanishes: degenerate field");
    }
    return value;
}

}  // namespace

namespace kernels {

Vector powered(const Vector& u, double e) {
    if (e == 1.0) return u;
    if (e == 2.0) return u.array().square().matrix();
    if (e >= 0.0 && e <= 16.0 && std::floor(e) == e) {
        const int k = static_cast<int>(e);
        Vector out(u.size());
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            double acc = 1.0;
            double base = u[i];
            for (int bits = k; bits > 0; bits >>= 1) {
                if (bits & 1) acc *= base;
                base *= base;
            }
            out[i] = acc;
        }
        return out;
    }
    return u.array().pow(e).matrix();
}

double lambda_value(const FlowSpec& spec, const Geometry& geom, const Vector& u) {
    require_sign(spec, u);
    const double p = spec.p;
    switch (spec.variant) {
        case FlowVariant::A_YamabeType:
            return geom.energy(u);
        case FlowVariant::B_L2Preserving: {
            const double denom = checked_denominator(geom.integrate(powered(u, p + 1.0)),
                                                     "int u^(p+1)");
            return geom.energy(u) / denom;
        }
        case FlowVariant::C_LpPlus1Preserving: {
            // p int u^(p-1)|grad u|^2 in the edge form <grad u^p, grad u>, which
            // equals -int u^p Lap u exactly and therefore cancels the drift of
            // int u^(p+1) to rounding.
            const Vector up = powered(u, p);
            const double denom = checked_denominator(geom.integrate(up.array().square().matrix()),
                                                     "int u^(2p)");
            return geom.energy_form(up, u) / denom;
        }
    }
    return 0.0;
}

Vector mobility(const FlowSpec& spec, const Vector& u) {
    if (spec.variant == FlowVariant::A_YamabeType && spec.p != 2.0) {
        return powered(u, 2.0 - spec.p);
    }
    return Vector::Ones(u.size());
}

Vector reaction(const FlowSpec& spec, const Vector& u, double lambda) {
    const double e = spec.variant == FlowVariant::A_YamabeType ? spec.p - 1.0 : spec.p;
    return lambda * powered(u, e);
}

Vector rhs(const FlowSpec& spec, const Geometry& geom, const Vector& u, double lambda) {
    require_sign(spec, u);
    Vector f = geom.apply_laplacian(u) + reaction(spec, u, lambda);
    if (spec.variant == FlowVariant::A_YamabeType && spec.p != 2.0) {
        f.array() *= mobility(spec, u).array();
    }
    return f;
}

double conserved_norm(const FlowSpec& spec, const Geometry& geom, const Vector& u) {
    return geom.integrate(powered(u.cwiseAbs(), spec.q));
}

double steady_residual(const FlowSpec& spec, const Geometry& geom, const Vector& u, double lambda) {
    const Vector r = geom.apply_laplacian(u) + reaction(spec, u, lambda);
    const double denom = geom.integrate(u.array().square().matrix());
    if (!(denom > 0.0)) throw Error(ErrorCode::DegenerateField, "steady residual of a zero field");
    return std::sqrt(geom.integrate(r.array().square().matrix()) / denom);
}

}  // namespace kernels

double lambda_value(const FlowSpec& spec, const Geometry& geom, const Field& u) {
    require_same(geom, u);
    return kernels::lambda_value(spec, geom, u.values());
}

Field rhs(const FlowSpec& spec, const Geometry& geom, const Field& u, double lambda) {
    require_same(geom, u);
    return u.with_values(kernels::rhs(spec, geom, u.values(), lambda));
}

Field normalize(const FlowSpec& spec, const Geometry& geom, const Field& u) {
    require_same(geom, u);
    if (u.min() < 0.0) throw Error(ErrorCode::NonpositiveField, "normalize expects u >= 0");
    const double norm = kernels::conserved_norm(spec, geom, u.values());
    if (!(norm > 0.0)) throw Error(ErrorCode::DegenerateField, "cannot normalize an identically zero field");
    return u.with_values(u.values() / std::pow(norm, 1.0 / spec.q));
}

double conserved_norm(const FlowSpec& spec, const Geometry& geom, const Field& u) {
    require_same(geom, u);
    return kernels::conserved_norm(spec, geom, u.values());
}

}  // namespace normflow
