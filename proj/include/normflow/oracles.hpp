#pragma once

#include "normflow/geometry.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace normflow {

struct Eigenpair {
    double mu = 0.0;  // smallest nonzero eigenvalue of -Lap_h
    Field phi;        // unit weighted L2 norm, positive sum
    int iterations = 0;
};

// Inverse power iteration on -Lap_h. Periodic kinds deflate constants and
// target the first nonzero eigenvalue. Throws NonConvergence past `max_iterations`.
Eigenpair principal_eigenpair(const GeometryPtr& geom, int max_iterations = 20000);

enum class ProfileStatus { HitZero, StayedPositive, Diverged };

std::string_view to_string(ProfileStatus status);

// Solution of v'' + (n-1)/r v' + lambda v^p = 0, v'(0) = 0, stored at the
// integrator's nodes with v and v'; values in between come from quintic
// Hermite interpolation.
class RadialProfile {
public:
    RadialProfile(int n, double p, double lambda, std::vector<double> radii, std::vector<double> values,
                  std::vector<double> slopes, ProfileStatus status);

    int dimension() const { return n_; }
    double exponent() const { return p_; }
    double lambda() const { return lambda_; }
    ProfileStatus status() const { return status_; }
    // Radius of the first zero for HitZero, else the last radius reached.
    double extent() const { return radii_.back(); }
    const std::vector<double>& radii() const { return radii_; }
    const std::vector<double>& values() const { return values_; }
    const std::vector<double>& slopes() const { return slopes_; }

    double value(double r) const;
    double slope(double r) const;
    double curvature(double r) const;  // second derivative of the interpolant

    // Max over `per_interval` interior points of each node interval of
    // |v'' + (n-1)/r v' + lambda v^p|, divided by lambda v(0)^p.
    double ode_residual(int per_interval = 4) const;

    // k v with lambda / k^(p-1): the same solution set, rescaled.
    RadialProfile scaled(double k) const;
    // v(r * s): stretches radii by 1/s, lambda by s^2.
    RadialProfile stretched(double s) const;

private:
    struct Local {
        std::size_t i;
        double h, s;
    };
    Local locate(double r) const;
    double accel(std::size_t i) const;  // v'' from the ODE at node i
    double jerk(std::size_t i) const;   // v''' from the differentiated ODE at node i

    int n_;
    double p_;
    double lambda_;
    std::vector<double> radii_, values_, slopes_;
    ProfileStatus status_;
};

struct ShootOptions {
    double tol = 1e-12;
    double horizon = 1e3;     // normalized radius where StayedPositive is declared
    double max_step = 0.02;   // relative to max(1, r) in normalized units
};

// Integrates from v(0) = alpha, lambda = 1, up to r_end or the first zero.
RadialProfile lane_emden_integrate(int n, double p, double alpha, double r_end, const ShootOptions& options = {});

// Normalized shot from v(0) = 1; a first zero at rho is moved to R by the
// scaling v_a(r) = a v_1(a^((p-1)/2) r), keeping lambda = 1.
RadialProfile lane_emden_shoot(int n, double p, double R, const ShootOptions& options = {});

struct SteadyState {
    Field u;
    double lambda;
};

// Samples the profile on the nodes (radius r for balls, |x - L/2| for
// intervals with R = L/2), then u = c v, c = (int v^q)^(-1/q),
// lambda = lambda_v c^-(p-1).
SteadyState steady_state_from_profile(const RadialProfile& profile, const GeometryPtr& geom, double q);

}  // namespace normflow
