#include "normflow/integrator.hpp"

#include "normflow/errors.hpp"
#include "normflow/linear_solve.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace normflow {

std::string_view to_string(Scheme scheme) {
    switch (scheme) {
        case Scheme::ExplicitEuler: return "explicit_euler";
        case Scheme::ImexCrankNicolson: return "imex_cn";
        case Scheme::ImexBackwardEuler: return "imex_be";
    }
    return "?";
}

std::optional<Scheme> parse_scheme(std::string_view text) {
    if (text == "explicit_euler" || text == "ExplicitEuler" || text == "euler") return Scheme::ExplicitEuler;
    if (text == "imex_cn" || text == "IMEX_CN" || text == "cn") return Scheme::ImexCrankNicolson;
    if (text == "imex_be" || text == "IMEX_BE" || text == "be") return Scheme::ImexBackwardEuler;
    return std::nullopt;
}

std::string_view to_string(RunStatus status) {
    switch (status) {
        case RunStatus::Converged: return "Converged";
        case RunStatus::BlowUp: return "BlowUp";
        case RunStatus::HorizonReached: return "HorizonReached";
        case RunStatus::PositivityLost: return "PositivityLost";
    }
    return "?";
}

std::optional<RunStatus> parse_run_status(std::string_view text) {
    for (auto s : {RunStatus::Converged, RunStatus::BlowUp, RunStatus::HorizonReached, RunStatus::PositivityLost}) {
        if (text == to_string(s)) return s;
    }
    return std::nullopt;
}

void SolverConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); };
    if (!(dt_min > 0.0)) fail("dt_min must be > 0");
    if (!(dt_initial > 0.0)) fail("dt_initial must be > 0");
    if (!(dt_min <= dt_initial && dt_initial <= dt_max)) fail("need dt_min <= dt_initial <= dt_max");
    if (!(t_max > 0.0)) fail("t_max must be > 0");
    if (!(blowup_umax_factor > 1.0)) fail("blowup_umax_factor must be > 1");
    if (!(steady_residual_tol >= 0.0)) fail("steady_residual_tol must be >= 0");
    if (!(positivity_floor >= 0.0)) fail("positivity_floor must be >= 0");
    if (record_every < 1) fail("record_every must be >= 1");
    if (!(max_step_drift > 0.0)) fail("max_step_drift must be > 0");
    if (growth_interval < 1 || !(growth_factor >= 1.0)) fail("invalid dt growth control");
    if (startup_steps < 0) fail("startup_steps must be >= 0");
}

double explicit_step_bound(const FlowSpec& spec, const Geometry& geom, const Vector& u) {
    const double mob = kernels::mobility(spec, u).maxCoeff();
    return 2.0 / (geom.spectral_radius_bound() * mob);
}

StepResult step(const FlowSpec& spec, const Geometry& geom, const Field& u, double dt, Scheme scheme) {
    if (&u.geometry() != &geom) throw Error(ErrorCode::GeometryMismatch, "field lives on a different geometry");
    if (!(dt >= 0.0)) throw Error(ErrorCode::InvalidConfig, "dt must be >= 0");
    const Vector& v = u.values();
    const double lambda = kernels::lambda_value(spec, geom, v);
    const Vector f = kernels::rhs(spec, geom, v, lambda);

    Vector next;
    if (scheme == Scheme::ExplicitEuler || dt == 0.0) {
        next = v + dt * f;
    } else {
        // CN:  (W^-1 - dt/2 L) u_new = W^-1 u + dt/2 L u + dt * reaction
        // BE:  (W^-1 - dt L) u_new = W^-1 u + dt * reaction
        const Vector inv_mobility =
            spec.variant == FlowVariant::A_YamabeType && spec.p != 2.0 ? kernels::powered(v, spec.p - 2.0)
                                                                       : Vector::Ones(v.size());
        Vector b = inv_mobility.cwiseProduct(v) + dt * kernels::reaction(spec, v, lambda);
        double beta = dt;
        if (scheme == Scheme::ImexCrankNicolson) {
            b += 0.5 * dt * geom.apply_laplacian(v);
            beta = 0.5 * dt;
        }
        next = solve_shifted_laplacian(geom, inv_mobility, beta, b);
    }
    if (!next.allFinite()) throw Error(ErrorCode::NonFiniteState, "step produced NaN or Inf");

    StepStats stats;
    stats.lambda = lambda;
    stats.max_rate = f.cwiseAbs().maxCoeff();
    const double before = kernels::conserved_norm(spec, geom, v);
    stats.drift = std::abs(kernels::conserved_norm(spec, geom, next) / before - 1.0);
    return {u.with_values(std::move(next)), stats};
}

Field project(const FlowSpec& spec, const Geometry& geom, const Field& u) { return normalize(spec, geom, u); }

namespace {

TraceSample make_sample(const FlowSpec& spec, const Geometry& geom, const Vector& u, double lambda) {
    TraceSample s;
    s.lambda = lambda;
    s.norm_post = kernels::conserved_norm(spec, geom, u);
    s.umax = u.maxCoeff();
    s.umin = u.minCoeff();
    s.energy = geom.energy(u);
    s.B = geom.integrate(kernels::powered(u, spec.p + 1.0));
    const Vector f = kernels::rhs(spec, geom, u, lambda);
    Vector weight = Vector::Ones(u.size());
    if (spec.variant == FlowVariant::A_YamabeType && spec.p != 2.0) weight = kernels::powered(u, spec.p - 2.0);
    s.dissipation = geom.integrate(weight.cwiseProduct(f.cwiseProduct(f)));
    return s;
}

void validate_initial_data(const FlowSpec& spec, const Field& g) {
    const double lo = g.min();
    if (lo < 0.0) {
        std::ostringstream msg;
        msg << "initial data must be nonnegative, min(g) = " << lo;
        throw Error(ErrorCode::InvalidInitialData, msg.str());
    }
    if (!(g.max() > 0.0)) throw Error(ErrorCode::InvalidInitialData, "initial data is identically zero");
    if (spec.variant == FlowVariant::A_YamabeType && !(lo > 0.0)) {
        throw Error(ErrorCode::InvalidInitialData, "flow A needs strictly positive initial data");
    }
}

}  // namespace

RunResult run(const FlowSpec& spec, const GeometryPtr& geom_ptr, const Field& g, const SolverConfig& config,
              const RecordHook& on_record) {
    config.validate();
    const Geometry& geom = *geom_ptr;
    require_compatible(spec, geom);
    if (&g.geometry() != &geom) throw Error(ErrorCode::GeometryMismatch, "initial data lives on a different geometry");
    validate_initial_data(spec, g);

    Trace trace{spec, geom.measure(), {}};
    Field u = normalize(spec, geom, g);
    double lambda = kernels::lambda_value(spec, geom, u.values());
    double t = 0.0;
    double dt = config.dt_initial;
    std::size_t steps = 0;
    std::size_t rejected = 0;
    int accepted_streak = 0;
    double last_step_dt = 0.0;
    double last_drift = 0.0;
    double last_norm_pre = kernels::conserved_norm(spec, geom, g.values());
    const double umax0 = u.max();
    const double threshold = config.blowup_umax_factor * umax0;
    double umax_before_step = umax0;

    auto record = [&] {
        TraceSample s = make_sample(spec, geom, u.values(), lambda);
        s.step = steps;
        s.t = t;
        s.dt = last_step_dt;
        s.drift = last_drift;
        s.norm_pre = last_norm_pre;
        trace.samples.push_back(s);
        if (on_record) on_record(trace.samples.back(), u);
    };
    auto finish = [&](RunStatus status, std::optional<BlowupReport> blowup) {
        if (trace.samples.empty() || trace.samples.back().step != steps) record();
        const double residual = kernels::steady_residual(spec, geom, u.values(), lambda);
        RunOutcome outcome{status, u, lambda, residual, t, steps, rejected, std::move(blowup)};
        return RunResult{std::move(outcome), std::move(trace)};
    };

    record();
    if (spec.variant == FlowVariant::A_YamabeType && u.min() < config.positivity_floor) {
        return finish(RunStatus::PositivityLost, std::nullopt);
    }
    if (kernels::steady_residual(spec, geom, u.values(), lambda) < config.steady_residual_tol) {
        return finish(RunStatus::Converged, std::nullopt);
    }

    while (t < config.t_max) {
        double dt_try = std::min({dt, config.dt_max, config.t_max - t});
        if (config.scheme == Scheme::ExplicitEuler) {
            dt_try = std::min(dt_try, explicit_step_bound(spec, geom, u.values()));
        }

        Scheme scheme = config.scheme;
        if (scheme == Scheme::ImexCrankNicolson && steps < static_cast<std::size_t>(config.startup_steps)) {
            scheme = Scheme::ImexBackwardEuler;
        }
        std::optional<StepResult> attempt;
        try {
            attempt = step(spec, geom, u, dt_try, scheme);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NonFiniteState && e.code() != ErrorCode::LinearSolveFailure) throw;
        }
        const bool ok = attempt && attempt->u.min() >= 0.0 && attempt->stats.drift <= config.max_step_drift;
        if (!ok) {
            ++rejected;
            accepted_streak = 0;
            dt = 0.5 * dt_try;
            if (dt < config.dt_min) {
                if (u.max() > umax_before_step) {
                    BlowupReport report;
                    report.t_detect = t;
                    report.threshold = threshold;
                    report.dt_collapse = true;
                    if (trace.samples.back().step != steps) record();
                    report.sample_index = trace.samples.size() - 1;
                    report.fit = fit_blowup_growth(trace, report.sample_index);
                    return finish(RunStatus::BlowUp, std::move(report));
                }
                std::ostringstream msg;
                msg << "step size fell below dt_min = " << config.dt_min << " at t = " << t
                    << " without growth of max u";
                throw Error(ErrorCode::StepSizeCollapse, msg.str());
            }
            continue;
        }

        umax_before_step = u.max();
        last_norm_pre = kernels::conserved_norm(spec, geom, attempt->u.values());
        u = project(spec, geom, attempt->u);
        lambda = kernels::lambda_value(spec, geom, u.values());
        t += dt_try;
        ++steps;
        last_step_dt = dt_try;
        last_drift = attempt->stats.drift;
        if (++accepted_streak >= config.growth_interval) {
            dt = std::min(dt * config.growth_factor, config.dt_max);
            accepted_streak = 0;
        }

        if (u.min() < config.positivity_floor) return finish(RunStatus::PositivityLost, std::nullopt);
        if (steps % static_cast<std::size_t>(config.record_every) == 0) record();
        if (u.max() > threshold) {
            if (trace.samples.back().step != steps) record();
            auto report = detect_blowup(trace, config);
            return finish(RunStatus::BlowUp, std::move(report));
        }
        if (kernels::steady_residual(spec, geom, u.values(), lambda) < config.steady_residual_tol) {
            return finish(RunStatus::Converged, std::nullopt);
        }
    }
    return finish(RunStatus::HorizonReached, std::nullopt);
}

std::optional<BlowupReport> detect_blowup(const Trace& trace, const SolverConfig& config) {
    if (trace.samples.empty()) return std::nullopt;
    const double threshold = config.blowup_umax_factor * trace.samples.front().umax;
    for (std::size_t k = 0; k < trace.samples.size(); ++k) {
        if (trace.samples[k].umax > threshold) {
            BlowupReport report;
            report.t_detect = trace.samples[k].t;
            report.sample_index = k;
            report.threshold = threshold;
            report.threshold_crossed = true;
            report.fit = fit_blowup_growth(trace, k);
            return report;
        }
    }
    return std::nullopt;
}

namespace {

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double sse = 0.0;
    double r2 = 0.0;
};

LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / n;
    const double my = sy / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    LineFit fit;
    fit.slope = sxx > 0 ? sxy / sxx : 0.0;
    fit.intercept = my - fit.slope * mx;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (fit.intercept + fit.slope * x[i]);
        fit.sse += r * r;
    }
    fit.r2 = syy > 0 ? 1.0 - fit.sse / syy : 1.0;
    return fit;
}

}  // namespace

std::optional<GrowthFit> fit_blowup_growth(const Trace& trace, std::size_t last) {
    if (last >= trace.samples.size()) return std::nullopt;
    const double top = trace.samples[last].umax;
    std::size_t first = last;
    while (first > 0 && trace.samples[first - 1].umax >= top / 10.0 &&
           trace.samples[first - 1].t < trace.samples[first].t) {
        --first;
    }
    if (last - first + 1 < 4) return std::nullopt;
    std::vector<double> ts, logu;
    for (std::size_t k = first; k <= last; ++k) {
        ts.push_back(trace.samples[k].t);
        logu.push_back(std::log(trace.samples[k].umax));
    }
    const double t_last = ts.back();
    const double span = t_last - ts.front();
    if (!(span > 0.0)) return std::nullopt;

    auto fit_at = [&](double log_delta) {
        const double delta = std::exp(log_delta);
        std::vector<double> x(ts.size());
        for (std::size_t i = 0; i < ts.size(); ++i) x[i] = std::log(t_last + delta - ts[i]);
        return least_squares(x, logu);
    };
    // Coarse scan of the blow-up time offset, then golden-section refinement.
    const double lo = std::log(1e-8 * span);
    const double hi = std::log(1e3 * span);
    const int grid = 220;
    double best = lo;
    double best_sse = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= grid; ++i) {
        const double x = lo + (hi - lo) * i / grid;
        const double sse = fit_at(x).sse;
        if (sse < best_sse) {
            best_sse = sse;
            best = x;
        }
    }
    const double cell = (hi - lo) / grid;
    double a = std::max(lo, best - cell);
    double b = std::min(hi, best + cell);
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int it = 0; it < 80; ++it) {
        const double c = b - phi * (b - a);
        const double d = a + phi * (b - a);
        if (fit_at(c).sse < fit_at(d).sse) {
            b = d;
        } else {
            a = c;
        }
    }
    const double log_delta = 0.5 * (a + b);
    const LineFit fit = fit_at(log_delta);
    GrowthFit out;
    out.exponent = fit.slope;
    out.t_blowup = t_last + std::exp(log_delta);
    out.r2 = fit.r2;
    out.samples = ts.size();
    return out;
}

}  // namespace normflow
