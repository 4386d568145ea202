#include "normflow/oracles.hpp"

#include "normflow/errors.hpp"
#include "normflow/linear_solve.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace normflow {

Eigenpair principal_eigenpair(const GeometryPtr& geom_ptr, int max_iterations) {
    const Geometry& geom = *geom_ptr;
    const bool periodic = geom.is_periodic();
    const double longest = *std::max_element(geom.extents().begin(), geom.extents().end());
    // A positive shift keeps the periodic solve nonsingular; constants are
    // projected out instead.
    const double shift = periodic ? std::pow(M_PI / longest, 2) : 0.0;
    const Vector d = Vector::Constant(geom.node_count(), shift);
    const double volume = geom.integrate(Vector::Ones(geom.node_count()));

    auto deflate = [&](Vector& x) {
        if (periodic) x.array() -= geom.integrate(x) / volume;
    };
    auto norm = [&](const Vector& x) { return std::sqrt(geom.integrate(x.cwiseProduct(x))); };

    Vector x;
    if (periodic) {
        std::mt19937_64 rng(20240601);
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        x.resize(geom.node_count());
        for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = dist(rng);
        deflate(x);
    } else {
        x = Vector::Ones(geom.node_count());
    }
    x /= norm(x);

    // Rounding in Lap_h y alone is about eps * rho(L).
    const double residual_floor =
        std::max(1e-11, 4.0 * std::numeric_limits<double>::epsilon() * geom.spectral_radius_bound());
    double mu = geom.energy(x);
    for (int it = 1; it <= max_iterations; ++it) {
        Vector y = solve_shifted_laplacian(geom, d, 1.0, x, 1e-15);
        deflate(y);
        y /= norm(y);
        if (geom.integrate(y.cwiseProduct(x)) < 0.0) y = -y;
        const double mu_new = geom.energy(y);
        const double residual = norm(-geom.apply_laplacian(y) - mu_new * y);
        const bool settled = std::abs(mu_new - mu) <= 1e-12 * std::abs(mu_new) && residual <= residual_floor;
        x = std::move(y);
        mu = mu_new;
        if (settled) {
            if (x.sum() < 0.0) x = -x;
            return {mu, Field(geom_ptr, x), it};
        }
    }
    std::ostringstream msg;
    msg << "inverse iteration did not settle within " << max_iterations << " iterations";
    throw Error(ErrorCode::NonConvergence, msg.str());
}

std::string_view to_string(ProfileStatus status) {
    switch (status) {
        case ProfileStatus::HitZero: return "HitZero";
        case ProfileStatus::StayedPositive: return "StayedPositive";
        case ProfileStatus::Diverged: return "Diverged";
    }
    return "?";
}

namespace {

double odd_power(double v, double p) { return std::copysign(std::pow(std::abs(v), p), v); }

// Coefficients of the quintic on t in [0, 1] matching value, first and second
// derivative (already multiplied by h and h^2) at both ends.
std::array<double, 6> quintic(double y0, double d0, double s0, double y1, double d1, double s1) {
    const double dy = y1 - y0;
    return {y0,
            d0,
            0.5 * s0,
            10 * dy - 6 * d0 - 4 * d1 - 1.5 * s0 + 0.5 * s1,
            -15 * dy + 8 * d0 + 7 * d1 + 1.5 * s0 - s1,
            6 * dy - 3 * d0 - 3 * d1 - 0.5 * s0 + 0.5 * s1};
}

double poly(const std::array<double, 6>& c, double t, int deriv) {
    double out = 0.0;
    for (int k = 5; k >= deriv; --k) {
        double coef = c[k];
        for (int j = 0; j < deriv; ++j) coef *= (k - j);
        out = out * t + coef;
    }
    return out;
}

struct State {
    double v, w;
};

struct Ode {
    int n;
    double p;
    double lambda;
    State operator()(double r, const State& y) const {
        const double friction = r > 0.0 ? (n - 1) / r * y.w : 0.0;
        return {y.w, -friction - lambda * odd_power(y.v, p)};
    }
};

// One Dormand-Prince 5(4) step; returns the 5th-order state and the error estimate.
std::pair<State, double> dp45(const Ode& f, double r, const State& y, double h, double tol) {
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                            b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                            e6 = 22.0 / 525, e7 = -1.0 / 40;
    auto comb = [&](std::initializer_list<std::pair<double, State>> terms) {
        State s = y;
        for (const auto& [a, k] : terms) {
            s.v += h * a * k.v;
            s.w += h * a * k.w;
        }
        return s;
    };
    const State k1 = f(r, y);
    const State k2 = f(r + c2 * h, comb({{a21, k1}}));
    const State k3 = f(r + c3 * h, comb({{a31, k1}, {a32, k2}}));
    const State k4 = f(r + c4 * h, comb({{a41, k1}, {a42, k2}, {a43, k3}}));
    const State k5 = f(r + c5 * h, comb({{a51, k1}, {a52, k2}, {a53, k3}, {a54, k4}}));
    const State k6 = f(r + h, comb({{a61, k1}, {a62, k2}, {a63, k3}, {a64, k4}, {a65, k5}}));
    const State y5 = comb({{b1, k1}, {b3, k3}, {b4, k4}, {b5, k5}, {b6, k6}});
    const State k7 = f(r + h, y5);
    const double ev = h * (e1 * k1.v + e3 * k3.v + e4 * k4.v + e5 * k5.v + e6 * k6.v + e7 * k7.v);
    const double ew = h * (e1 * k1.w + e3 * k3.w + e4 * k4.w + e5 * k5.w + e6 * k6.w + e7 * k7.w);
    const double sv = tol + tol * std::max(std::abs(y.v), std::abs(y5.v));
    const double sw = tol + tol * std::max(std::abs(y.w), std::abs(y5.w));
    const double err = std::max(std::abs(ev) / sv, std::abs(ew) / sw);
    return {y5, err};
}

}  // namespace

RadialProfile::RadialProfile(int n, double p, double lambda, std::vector<double> radii, std::vector<double> values,
                             std::vector<double> slopes, ProfileStatus status)
    : n_(n), p_(p), lambda_(lambda), radii_(std::move(radii)), values_(std::move(values)),
      slopes_(std::move(slopes)), status_(status) {
    if (radii_.size() < 2 || values_.size() != radii_.size() || slopes_.size() != radii_.size()) {
        throw Error(ErrorCode::InconsistentDimension, "profile arrays need matching lengths >= 2");
    }
    if (radii_.front() != 0.0) throw Error(ErrorCode::InvalidExtents, "profile radii must start at 0");
    for (std::size_t i = 0; i < radii_.size(); ++i) {
        if (!std::isfinite(values_[i]) || !std::isfinite(slopes_[i])) {
            throw Error(ErrorCode::NonFiniteState, "profile holds non-finite values");
        }
        if (i > 0 && !(radii_[i] > radii_[i - 1])) throw Error(ErrorCode::InvalidExtents, "profile radii must increase");
    }
}

double RadialProfile::accel(std::size_t i) const {
    const double r = radii_[i];
    const double f = lambda_ * odd_power(values_[i], p_);
    if (r == 0.0) return -f / n_;
    return -(n_ - 1) / r * slopes_[i] - f;
}

double RadialProfile::jerk(std::size_t i) const {
    const double r = radii_[i];
    if (r == 0.0) return 0.0;
    const double df = lambda_ * p_ * std::pow(std::abs(values_[i]), p_ - 1.0) * slopes_[i];
    return (n_ - 1) / (r * r) * slopes_[i] - (n_ - 1) / r * accel(i) - df;
}

RadialProfile::Local RadialProfile::locate(double r) const {
    if (!(r >= 0.0 && r <= radii_.back())) {
        std::ostringstream msg;
        msg << "radius " << r << " outside the profile range [0, " << radii_.back() << "]";
        throw Error(ErrorCode::InvalidExtents, msg.str());
    }
    auto it = std::upper_bound(radii_.begin(), radii_.end(), r);
    std::size_t i = it == radii_.begin() ? 0 : static_cast<std::size_t>(it - radii_.begin()) - 1;
    if (i + 1 >= radii_.size()) i = radii_.size() - 2;
    const double h = radii_[i + 1] - radii_[i];
    return {i, h, (r - radii_[i]) / h};
}

double RadialProfile::value(double r) const {
    const auto [i, h, s] = locate(r);
    const auto c = quintic(values_[i], h * slopes_[i], h * h * accel(i), values_[i + 1], h * slopes_[i + 1],
                           h * h * accel(i + 1));
    return poly(c, s, 0);
}

double RadialProfile::slope(double r) const {
    const auto [i, h, s] = locate(r);
    const auto c = quintic(slopes_[i], h * accel(i), h * h * jerk(i), slopes_[i + 1], h * accel(i + 1),
                           h * h * jerk(i + 1));
    return poly(c, s, 0);
}

double RadialProfile::curvature(double r) const {
    const auto [i, h, s] = locate(r);
    const auto c = quintic(values_[i], h * slopes_[i], h * h * accel(i), values_[i + 1], h * slopes_[i + 1],
                           h * h * accel(i + 1));
    return poly(c, s, 2) / (h * h);
}

double RadialProfile::ode_residual(int per_interval) const {
    double worst = 0.0;
    for (std::size_t i = 0; i + 1 < radii_.size(); ++i) {
        for (int k = 1; k <= per_interval; ++k) {
            const double r = radii_[i] + (radii_[i + 1] - radii_[i]) * k / (per_interval + 1.0);
            const double res = curvature(r) + (n_ - 1) / r * slope(r) + lambda_ * odd_power(value(r), p_);
            worst = std::max(worst, std::abs(res));
        }
    }
    return worst / (lambda_ * std::pow(std::abs(values_.front()), p_));
}

RadialProfile RadialProfile::scaled(double k) const {
    std::vector<double> v(values_), w(slopes_);
    for (auto& x : v) x *= k;
    for (auto& x : w) x *= k;
    return RadialProfile(n_, p_, lambda_ / std::pow(k, p_ - 1.0), radii_, std::move(v), std::move(w), status_);
}

RadialProfile RadialProfile::stretched(double s) const {
    std::vector<double> r(radii_), w(slopes_);
    for (auto& x : r) x /= s;
    for (auto& x : w) x *= s;
    return RadialProfile(n_, p_, lambda_ * s * s, std::move(r), values_, std::move(w), status_);
}

RadialProfile lane_emden_integrate(int n, double p, double alpha, double r_end, const ShootOptions& options) {
    if (n < 1 || !(p > 1.0) || !(alpha > 0.0) || !(r_end > 0.0)) {
        throw Error(ErrorCode::InvalidFlowSpec, "lane_emden needs n >= 1, p > 1, alpha > 0, r_end > 0");
    }
    const Ode f{n, p, 1.0};
    const double scale = std::pow(alpha, -(p - 1.0) / 2.0);  // natural length of v_alpha
    std::vector<double> radii{0.0}, values{alpha}, slopes{0.0};

    // Series start clears the r = 0 singularity of the friction term.
    const double r0 = std::min(1e-3 * scale, 0.5 * r_end);
    const double ap = std::pow(alpha, p);
    const double a2 = std::pow(alpha, 2 * p - 1);
    State y{alpha - ap * r0 * r0 / (2 * n) + p * a2 * std::pow(r0, 4) / (8.0 * n * (n + 2)),
            -ap * r0 / n + p * a2 * std::pow(r0, 3) / (2.0 * n * (n + 2))};
    double r = r0;
    radii.push_back(r);
    values.push_back(y.v);
    slopes.push_back(y.w);

    auto finish = [&](ProfileStatus status) {
        return RadialProfile(n, p, 1.0, std::move(radii), std::move(values), std::move(slopes), status);
    };

    double h = 1e-3 * scale;
    bool monotone = true;
    const std::size_t max_steps = 10'000'000;
    while (r < r_end) {
        if (radii.size() > max_steps || h < 1e-14 * scale) return finish(ProfileStatus::Diverged);
        h = std::min({h, options.max_step * std::max(scale, r), r_end - r});
        const auto [next, err] = dp45(f, r, y, h, options.tol);
        if (!std::isfinite(next.v) || !std::isfinite(next.w) || std::abs(next.v) > 1e6 * alpha) {
            if (!std::isfinite(err) || h < 1e-14 * scale) return finish(ProfileStatus::Diverged);
            h *= 0.2;
            continue;
        }
        if (err > 1.0) {
            h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
            continue;
        }
        if (next.v <= 0.0) {
            // Newton on the zero, re-stepping from the last node each time.
            double step = h * y.v / (y.v - next.v);
            State at = next;
            for (int k = 0; k < 50; ++k) {
                at = dp45(f, r, y, step, options.tol).first;
                const double delta = at.v / at.w;
                step -= delta;
                if (std::abs(delta) <= 1e-15 * (r + step)) break;
            }
            at = dp45(f, r, y, step, options.tol).first;
            radii.push_back(r + step);
            values.push_back(0.0);
            slopes.push_back(at.w);
            return finish(ProfileStatus::HitZero);
        }
        r = h == r_end - r ? r_end : r + h;
        y = next;
        if (y.w > 0.0) monotone = false;
        radii.push_back(r);
        values.push_back(y.v);
        slopes.push_back(y.w);
        h *= std::min(5.0, 0.9 * std::pow(std::max(err, 1e-10), -0.2));
    }
    return finish(monotone ? ProfileStatus::StayedPositive : ProfileStatus::Diverged);
}

RadialProfile lane_emden_shoot(int n, double p, double R, const ShootOptions& options) {
    if (!(R > 0.0)) throw Error(ErrorCode::InvalidExtents, "R must be > 0");
    RadialProfile unit = lane_emden_integrate(n, p, 1.0, options.horizon, options);
    if (unit.status() != ProfileStatus::HitZero) return unit;
    const double s = unit.extent() / R;
    return unit.stretched(s).scaled(std::pow(s, 2.0 / (p - 1.0)));
}

SteadyState steady_state_from_profile(const RadialProfile& profile, const GeometryPtr& geom_ptr, double q) {
    if (profile.status() != ProfileStatus::HitZero) {
        throw Error(ErrorCode::StatusMismatch,
                    "steady state needs a profile with a zero, got " + std::string(to_string(profile.status())));
    }
    const Geometry& geom = *geom_ptr;
    double R = 0.0;
    std::function<double(double, double)> radius;
    if (geom.kind() == GeometryKind::RadialBallDirichlet && geom.dimension() == profile.dimension()) {
        R = geom.extents()[0];
        radius = [](double r, double) { return r; };
    } else if (geom.kind() == GeometryKind::IntervalDirichlet && profile.dimension() == 1) {
        R = 0.5 * geom.extents()[0];
        radius = [R](double x, double) { return std::abs(x - R); };
    } else {
        throw Error(ErrorCode::GeometryMismatch, "profile needs a ball of the same dimension or an interval (n = 1)");
    }
    if (std::abs(profile.extent() - R) > 1e-9 * R) {
        std::ostringstream msg;
        msg << "profile zero at " << profile.extent() << " but the domain radius is " << R;
        throw Error(ErrorCode::GeometryMismatch, msg.str());
    }
    const Field v = Field::sample(geom_ptr, [&](double x, double y) {
        return std::max(0.0, profile.value(std::min(radius(x, y), profile.extent())));
    });
    const double mass = geom.integrate(v.values().array().pow(q).matrix());
    if (!(mass > 0.0)) throw Error(ErrorCode::DegenerateField, "sampled profile has zero mass");
    const double c = std::pow(mass, -1.0 / q);
    return {v.with_values(c * v.values()), profile.lambda() * std::pow(c, -(profile.exponent() - 1.0))};
}

}  // namespace normflow
