#include "normflow/diagnostics.hpp"

#include "normflow/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace normflow {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

void require_variant(const Trace& trace, FlowVariant variant, const char* check) {
    if (trace.spec.variant != variant) {
        throw Error(ErrorCode::WrongFlowVariant, std::string(check) + " applies to flow " +
                                                     std::string(to_string(variant)) + " traces only");
    }
}

void require_samples(const Trace& trace, std::size_t n, const char* check) {
    if (trace.samples.size() < n) {
        throw Error(ErrorCode::DegenerateField, std::string(check) + " needs at least " + std::to_string(n) +
                                                    " trace samples");
    }
}

double scale_of(double v) { return v != 0.0 ? std::abs(v) : 1.0; }

}  // namespace

CheckReport make_report(std::string name, double violation, double tolerance, std::optional<std::size_t> index,
                        std::map<std::string, double> context) {
    CheckReport r;
    r.name = std::move(name);
    r.violation = std::isnan(violation) ? inf : std::max(violation, 0.0);
    r.tolerance = tolerance;
    r.pass = r.violation <= tolerance;
    r.time_index = index;
    r.context = std::move(context);
    return r;
}

CheckReport check_lambda_monotone(const Trace& trace, double tol) {
    require_variant(trace, FlowVariant::A_YamabeType, "lambda_monotone");
    require_samples(trace, 1, "lambda_monotone");
    const auto& s = trace.samples;
    const double scale = scale_of(s.front().lambda);
    double worst = 0.0;
    std::optional<std::size_t> at;
    for (std::size_t k = 0; k + 1 < s.size(); ++k) {
        const double rise = (s[k + 1].lambda - s[k].lambda) / scale;
        if (rise > worst || (std::isnan(rise) && !std::isnan(worst))) {
            worst = std::isnan(rise) ? inf : rise;
            at = k + 1;
        }
    }
    return make_report("lambda_monotone", worst, tol, at,
                       {{"lambda_initial", s.front().lambda}, {"lambda_final", s.back().lambda}});
}

DecayFit fit_lambda_decay(const Trace& trace, double tail_fraction) {
    require_variant(trace, FlowVariant::A_YamabeType, "lambda_decay");
    if (!(tail_fraction > 0.0 && tail_fraction <= 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "tail_fraction must lie in (0, 1]");
    }
    const auto& s = trace.samples;
    DecayFit fit;
    const std::size_t count =
        std::min(s.size(), static_cast<std::size_t>(std::ceil(tail_fraction * static_cast<double>(s.size()))));
    const std::size_t first = s.size() - count;
    fit.samples = count;
    for (std::size_t k = first; k < s.size(); ++k) {
        if (s[k].lambda == 0.0) {
            fit.rate = inf;
            fit.note = "lambda reached 0 at t = " + std::to_string(s[k].t);
            return fit;
        }
        if (!(s[k].lambda > 0.0)) {
            fit.degenerate = true;
            fit.note = "lambda is not positive on the tail window";
            return fit;
        }
    }
    if (count < 3) {
        fit.degenerate = true;
        fit.note = "fewer than three samples in the tail window";
        return fit;
    }
    double mt = 0, my = 0;
    for (std::size_t k = first; k < s.size(); ++k) {
        mt += s[k].t;
        my += std::log(s[k].lambda);
    }
    mt /= count;
    my /= count;
    double stt = 0, sty = 0, syy = 0;
    for (std::size_t k = first; k < s.size(); ++k) {
        const double dt = s[k].t - mt;
        const double dy = std::log(s[k].lambda) - my;
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    if (!(stt > 0.0)) {
        fit.degenerate = true;
        fit.note = "tail window spans no time";
        return fit;
    }
    const double slope = sty / stt;
    fit.rate = -slope;
    fit.r2 = syy > 0.0 ? (sty * sty) / (stt * syy) : 1.0;
    return fit;
}

CheckReport check_harnack(const Trace& trace, double tol) {
    require_variant(trace, FlowVariant::A_YamabeType, "harnack");
    require_samples(trace, 1, "harnack");
    const auto& s = trace.samples;
    double sup_ratio = 0.0;
    double min_umin = inf;
    double max_rise = 0.0;
    std::size_t at_floor = 0;
    for (std::size_t k = 0; k < s.size(); ++k) {
        if (!(s[k].umin > 0.0)) {
            throw Error(ErrorCode::NonpositiveField, "harnack: umin <= 0 at sample " + std::to_string(k));
        }
        const double ratio = s[k].umax / s[k].umin;
        sup_ratio = std::max(sup_ratio, ratio);
        if (s[k].umin < min_umin) {
            min_umin = s[k].umin;
            at_floor = k;
        }
        if (k > 0) max_rise = std::max(max_rise, ratio / (s[k - 1].umax / s[k - 1].umin) - 1.0);
    }
    const double r0 = s.front().umax / s.front().umin;
    const double r1 = s.back().umax / s.back().umin;
    const double end_excess = r1 / r0 - 1.0;
    const double floor_excess = (s.front().umin - min_umin) / s.front().umin;
    const double violation = std::isfinite(sup_ratio) ? std::max(end_excess, floor_excess) : inf;
    const std::size_t at = end_excess >= floor_excess ? s.size() - 1 : at_floor;
    return make_report("harnack", violation, tol, at,
                       {{"harnack_constant", sup_ratio},
                        {"ratio_initial", r0},
                        {"ratio_final", r1},
                        {"max_ratio_rise", max_rise},
                        {"umin_floor", s.front().umin * (1.0 - tol)},
                        {"umin_lowest", min_umin}});
}

std::vector<double> lambda_integral(const Trace& trace) {
    const auto& s = trace.samples;
    std::vector<double> out(s.size(), 0.0);
    for (std::size_t k = 1; k < s.size(); ++k) {
        out[k] = out[k - 1] + 0.5 * (s[k].t - s[k - 1].t) * (s[k].lambda + s[k - 1].lambda);
    }
    return out;
}

CheckReport check_lambda_integrable(const Trace& trace, double tol) {
    require_variant(trace, FlowVariant::A_YamabeType, "lambda_integrable");
    require_samples(trace, 2, "lambda_integrable");
    const auto& s = trace.samples;
    const std::vector<double> integral = lambda_integral(trace);
    const double total = integral.back();
    const double t_cut = s.front().t + 0.75 * (s.back().t - s.front().t);
    // Running integral at t_cut, interpolated inside the bracketing interval.
    std::size_t k = 0;
    while (k + 1 < s.size() && s[k + 1].t <= t_cut) ++k;
    double at_cut = integral[k];
    if (k + 1 < s.size() && s[k + 1].t > s[k].t) {
        const double theta = (t_cut - s[k].t) / (s[k + 1].t - s[k].t);
        const double lam_cut = s[k].lambda + theta * (s[k + 1].lambda - s[k].lambda);
        at_cut += 0.5 * (t_cut - s[k].t) * (s[k].lambda + lam_cut);
    }
    const double tail = total - at_cut;
    const double violation = total != 0.0 ? std::abs(tail) / std::abs(total) : (tail == 0.0 ? 0.0 : inf);
    return make_report("lambda_integrable", violation, tol, k,
                       {{"integral", total}, {"tail_increment", tail}, {"t_cut", t_cut}});
}

CheckReport check_growth_bounds(const Trace& trace, double tol) {
    require_variant(trace, FlowVariant::A_YamabeType, "growth_bounds");
    require_samples(trace, 1, "growth_bounds");
    const auto& s = trace.samples;
    const std::vector<double> integral = lambda_integral(trace);
    double worst = 0.0;
    std::optional<std::size_t> at;
    double worst_max = 0.0;
    double worst_min = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
        if (!(s[k].umin > 0.0)) {
            throw Error(ErrorCode::NonpositiveField, "growth_bounds: umin <= 0 at sample " + std::to_string(k));
        }
        const double over_max = std::log(s[k].umax / s.front().umax) - integral[k];
        const double under_min = integral[k] - std::log(s[k].umin / s.front().umin);
        worst_max = std::max(worst_max, over_max);
        worst_min = std::max(worst_min, under_min);
        if (std::max(over_max, under_min) > worst) {
            worst = std::max(over_max, under_min);
            at = k;
        }
    }
    return make_report("growth_bounds", worst, tol, at,
                       {{"max_bound_excess", worst_max},
                        {"min_bound_excess", worst_min},
                        {"lambda_integral", integral.back()},
                        {"harnack_bound", s.front().umax / s.front().umin}});
}

CheckReport check_lyapunov_B(const Trace& trace, double tol) {
    require_variant(trace, FlowVariant::B_L2Preserving, "lyapunov_B");
    require_samples(trace, 1, "lyapunov_B");
    const auto& s = trace.samples;
    const double p = trace.spec.p;
    const double e = (p - 1.0) / (p + 1.0);
    const double floor = std::pow(trace.measure, -(p - 1.0) / 2.0);
    for (std::size_t k = 0; k < s.size(); ++k) {
        if (!std::isfinite(s[k].B)) throw Error(ErrorCode::MissingChannel, "lyapunov_B: trace has no B channel");
    }
    auto phi = [&](std::size_t k) { return s[k].lambda * std::pow(s[k].B, e); };
    const double scale = scale_of(phi(0));
    double worst = 0.0;
    std::optional<std::size_t> at;
    double max_rise = 0.0;
    double lowest_B = inf;
    for (std::size_t k = 0; k < s.size(); ++k) {
        lowest_B = std::min(lowest_B, s[k].B);
        const double below = (floor - s[k].B) / floor;
        double v = below;
        if (k > 0) {
            const double rise = (phi(k) - phi(k - 1)) / scale;
            max_rise = std::max(max_rise, rise);
            v = std::max(v, rise);
        }
        if (v > worst) {
            worst = v;
            at = k;
        }
    }
    return make_report("lyapunov_B", worst, tol, at,
                       {{"lyapunov_initial", phi(0)},
                        {"lyapunov_final", phi(s.size() - 1)},
                        {"max_lyapunov_rise", max_rise},
                        {"B_floor", floor},
                        {"B_lowest", lowest_B}});
}

CheckReport check_dissipation_balance(const Trace& trace, double tol) {
    require_samples(trace, 1, "dissipation_balance");
    const auto& s = trace.samples;
    const bool with_B = trace.spec.variant == FlowVariant::B_L2Preserving;
    for (const auto& x : s) {
        if (!std::isfinite(x.dissipation)) {
            throw Error(ErrorCode::MissingChannel, "dissipation_balance: trace has no dissipation channel");
        }
        if (with_B && !std::isfinite(x.B)) {
            throw Error(ErrorCode::MissingChannel, "dissipation_balance: trace has no B channel");
        }
    }
    const double e0 = s.front().energy;
    const double scale = scale_of(e0);
    const double p = trace.spec.p;
    double running = 0.0;  // int D dt - [int lambda/(p+1) dB]
    double worst_rise = 0.0;
    double worst_balance = 0.0;
    std::optional<std::size_t> at;
    double worst = 0.0;
    for (std::size_t k = 1; k < s.size(); ++k) {
        const double dt = s[k].t - s[k - 1].t;
        running += 0.5 * dt * (s[k].dissipation + s[k - 1].dissipation);
        if (with_B) running -= 0.5 * (s[k].lambda + s[k - 1].lambda) * (s[k].B - s[k - 1].B) / (p + 1.0);
        const double balance = std::abs(0.5 * (s[k].energy - e0) + running) / scale;
        double v = balance;
        if (!with_B) {
            const double rise = 0.5 * (s[k].energy - s[k - 1].energy) / scale;
            worst_rise = std::max(worst_rise, rise);
            v = std::max(v, rise);
        }
        worst_balance = std::max(worst_balance, balance);
        if (v > worst || std::isnan(v)) {
            worst = std::isnan(v) ? inf : v;
            at = k;
        }
    }
    std::map<std::string, double> context{{"energy_initial", e0},
                                          {"energy_final", s.back().energy},
                                          {"max_balance_residual", worst_balance},
                                          {"dissipated", running}};
    if (!with_B) context["max_energy_rise"] = worst_rise;
    return make_report("dissipation_balance", worst, tol, at, std::move(context));
}

CheckReport check_trace_bounded(const Trace& trace, double factor) {
    require_samples(trace, 1, "trace_bounded");
    const auto& s = trace.samples;
    double sup_lambda = 0.0;
    double sup_energy = 0.0;
    std::size_t at = 0;
    double worst = 0.0;
    const double l0 = scale_of(s.front().lambda);
    const double e0 = scale_of(s.front().energy);
    for (std::size_t k = 0; k < s.size(); ++k) {
        sup_lambda = std::max(sup_lambda, std::abs(s[k].lambda));
        sup_energy = std::max(sup_energy, s[k].energy);
        const double v = std::max(std::abs(s[k].lambda) / l0, s[k].energy / e0);
        if (v > worst || !std::isfinite(v)) {
            worst = std::isfinite(v) ? v : inf;
            at = k;
        }
    }
    return make_report("trace_bounded", worst, factor, at, {{"sup_lambda", sup_lambda}, {"sup_energy", sup_energy}});
}

double steady_residual(const FlowSpec& spec, const Geometry& geom, const Field& u, double lambda) {
    if (&u.geometry() != &geom) throw Error(ErrorCode::GeometryMismatch, "field lives on a different geometry");
    return kernels::steady_residual(spec, geom, u.values(), lambda);
}

}  // namespace normflow
