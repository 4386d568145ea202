#include "normflow/errors.hpp"
#include "normflow/integrator.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace normflow;

namespace {

constexpr double pi = std::numbers::pi;

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected normflow::Error");
    return ErrorCode::Io;
}

double max_rel_diff(const Vector& a, const Vector& b) {
    return (a - b).cwiseAbs().maxCoeff() / b.cwiseAbs().maxCoeff();
}

Trace synthetic(const std::vector<double>& t, const std::function<double(double)>& umax) {
    Trace trace{FlowSpec::make(FlowVariant::C_LpPlus1Preserving, 7.0, 3), 1.0, {}};
    for (std::size_t k = 0; k < t.size(); ++k) {
        TraceSample s;
        s.step = k;
        s.t = t[k];
        s.umax = umax(t[k]);
        trace.samples.push_back(s);
    }
    return trace;
}

const Scheme all_schemes[] = {Scheme::ExplicitEuler, Scheme::ImexCrankNicolson, Scheme::ImexBackwardEuler};

}  // namespace

TEST_CASE("steady states are fixed points of every scheme") {
    auto circle = build_geometry(GeometryKind::Circle, {2.0 * pi}, 1, 64);
    auto interval = build_geometry(GeometryKind::IntervalDirichlet, {1.0}, 1, 64);
    const double h = 1.0 / 64;
    for (Scheme scheme : all_schemes) {
        CAPTURE(to_string(scheme));
        for (double p : {2.0, 3.0, 4.5}) {
            const auto spec = FlowSpec::make(FlowVariant::A_YamabeType, p, 1);
            const Field u = normalize(spec, *circle, Field::constant(circle, 1.0));
            const StepResult r = step(spec, *circle, u, 1e-4, scheme);
            CHECK(max_rel_diff(r.u.values(), u.values()) < 1e-10);
        }
        // Grid sine is an exact eigenvector of the 3-point Dirichlet Laplacian.
        const auto spec = FlowSpec::linear_l2(1);
        const Field u = normalize(spec, *interval, Field::sample(interval, [](double x, double) {
                                      return std::sin(pi * x);
                                  }));
        const StepResult r = step(spec, *interval, u, 0.5 * h * h, scheme);
        CHECK(max_rel_diff(r.u.values(), u.values()) < 1e-10);
        CHECK(r.stats.lambda == doctest::Approx(4.0 / (h * h) * std::pow(std::sin(pi * h / 2), 2)).epsilon(1e-12));
    }
}

TEST_CASE("explicit Euler on the linear flow is direct matrix arithmetic") {
    const int res = 50;
    const double h = 1.0 / res;
    auto g = build_geometry(GeometryKind::IntervalDirichlet, {1.0}, 1, res);
    const Field u = Field::sample(g, [](double x, double) { return std::sqrt(2.0) * std::sin(pi * x); });
    const double mu_h = 4.0 / (h * h) * std::pow(std::sin(pi * h / 2), 2);
    const double dt = 0.4 * h * h;
    const StepResult r = step(FlowSpec::linear_l2(1), *g, u, dt, Scheme::ExplicitEuler);
    const Vector expected = u.values() + dt * (g->apply_laplacian(u.values()) + mu_h * u.values());
    CHECK((r.u.values() - expected).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("zero-dt step is the identity") {
    std::mt19937_64 rng(11);
    for (const auto& g : test::one_of_each_kind(16)) {
        const Field u(g, test::random_vector(rng, g->node_count(), 0.5, 1.5));
        const int n = g->is_radial() ? g->dimension() : 1;
        FlowSpec spec = FlowSpec::make(FlowVariant::C_LpPlus1Preserving, 3.0, n, true);
        if (g->is_periodic()) spec = FlowSpec::make(FlowVariant::A_YamabeType, 3.0, g->dimension());
        for (Scheme scheme : all_schemes) {
            const StepResult r = step(spec, *g, u, 0.0, scheme);
            CHECK(r.u.values() == u.values());
            CHECK(r.stats.drift == 0.0);
        }
    }
}

TEST_CASE("pre-projection drift is second order in dt") {
    auto circle = build_geometry(GeometryKind::Circle, {2.0 * pi}, 1, 128);
    auto interval = build_geometry(GeometryKind::IntervalDirichlet, {1.0}, 1, 128);
    auto ball = build_geometry(GeometryKind::RadialBallDirichlet, {1.0}, 3, 128);
    struct Case {
        FlowSpec spec;
        GeometryPtr geom;
        std::function<double(double, double)> f;
    };
    const Case cases[] = {
        {FlowSpec::make(FlowVariant::A_YamabeType, 3.0, 1), circle,
         [](double x, double) { return 1.0 + 0.3 * std::sin(x); }},
        {FlowSpec::make(FlowVariant::B_L2Preserving, 3.0, 1), interval,
         [](double x, double) { return std::sin(pi * x); }},
        {FlowSpec::make(FlowVariant::C_LpPlus1Preserving, 7.0, 3), ball,
         [](double r, double) { return std::cos(pi * r / 2); }},
    };
    for (const auto& c : cases) {
        CAPTURE(to_string(c.spec.variant));
        const Field u = normalize(c.spec, *c.geom, Field::sample(c.geom, c.f));
        const double bound = explicit_step_bound(c.spec, *c.geom, u.values());
        std::vector<double> scaled;
        for (double dt : {1e-3, 5e-4, 2.5e-4}) {
            const double d = std::min(dt, 0.5 * bound) ;
            const StepResult r = step(c.spec, *c.geom, u, d, Scheme::ExplicitEuler);
            scaled.push_back(r.stats.drift / (d * d));
        }
        const auto [lo, hi] = std::minmax_element(scaled.begin(), scaled.end());
        CHECK(*lo > 0.0);
        CHECK(*hi / *lo < 4.0);
    }
}

TEST_CASE("project lands on the unit sphere and ignores scale") {
    auto g = build_geometry(GeometryKind::RadialBallDirichlet, {1.0}, 3, 64);
    const auto spec = FlowSpec::make(FlowVariant::C_LpPlus1Preserving, 7.0, 3);
    const Field u = Field::sample(g, [](double r, double) { return std::exp(-r * r / 0.09); });
    const Field once = project(spec, *g, u);
    CHECK(std::abs(conserved_norm(spec, *g, once) - 1.0) < 1e-13);
    CHECK(max_rel_diff(project(spec, *g, once).values(), once.values()) < 1e-15);
    CHECK(max_rel_diff(project(spec, *g, u.with_values(3.0 * u.values())).values(), once.values()) < 1e-15);
    CHECK(code_of([&] { project(spec, *g, Field::constant(g, 0.0)); }) == ErrorCode::DegenerateField);
}

TEST_CASE("solver config validation") {
    SolverConfig c;
    CHECK_NOTHROW(c.validate());
    c.dt_min = 1.0;
    CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidConfig);
    c = {};
    c.record_every = 0;
    CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidConfig);
    c = {};
    c.blowup_umax_factor = 0.5;
    CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidConfig);
    for (auto s : {RunStatus::Converged, RunStatus::BlowUp, RunStatus::HorizonReached, RunStatus::PositivityLost}) {
        CHECK(parse_run_status(to_string(s)) == s);
    }
    for (Scheme s : all_schemes) CHECK(parse_scheme(to_string(s)) == s);
}

TEST_CASE("run rejects unusable initial data") {
    auto circle = build_geometry(GeometryKind::Circle, {2.0 * pi}, 1, 32);
    auto interval = build_geometry(GeometryKind::IntervalDirichlet, {1.0}, 1, 32);
    const auto a = FlowSpec::make(FlowVariant::A_YamabeType, 3.0, 1);
    const auto b = FlowSpec::make(FlowVariant::B_L2Preserving, 3.0, 1);
    const SolverConfig cfg;
    CHECK(code_of([&] { run(a, circle, Field::constant(circle, 0.0), cfg); }) == ErrorCode::InvalidInitialData);
    CHECK(code_of([&] {
              run(a, circle, Field::sample(circle, [](double x, double) { return std::sin(x); }), cfg);
          }) == ErrorCode::InvalidInitialData);
    CHECK(code_of([&] {
              run(b, interval, Field::sample(interval, [](double x, double) { return x - 0.5; }), cfg);
          }) == ErrorCode::InvalidInitialData);
    CHECK(code_of([&] { run(b, circle, Field::constant(circle, 1.0), cfg); }) == ErrorCode::InvalidFlowSpec);
}

TEST_CASE("flow A with p = 2 converges to the normalized constant") {
    auto g = build_geometry(GeometryKind::Circle, {2.0 * pi}, 1, 256);
    const auto spec = FlowSpec::make(FlowVariant::A_YamabeType, 2.0, 1);
    SolverConfig cfg;
    cfg.t_max = 50.0;
    const auto result = run(spec, g, Field::sample(g, [](double x, double) { return 1.0 + 0.3 * std::sin(x); }), cfg);
    REQUIRE(result.outcome.status == RunStatus::Converged);
    CHECK(result.outcome.final_lambda < 1e-8);
    const double c = 1.0 / std::sqrt(2.0 * pi);
    CHECK(max_rel_diff(result.outcome.final_field.values(), Vector::Constant(g->node_count(), c)) < 1e-6);
    for (const auto& s : result.trace.samples) CHECK(std::abs(s.norm_post - 1.0) < 1e-12);
    CHECK(result.trace.samples.back().step == result.outcome.steps);
}

TEST_CASE("flow B with p = 3 reaches a steady state") {
    auto g = build_geometry(GeometryKind::IntervalDirichlet, {1.0}, 1, 512);
    const auto spec = FlowSpec::make(FlowVariant::B_L2Preserving, 3.0, 1);
    const auto result = run(spec, g, Field::sample(g, [](double x, double) { return x * (1.0 - x); }), SolverConfig{});
    REQUIRE(result.outcome.status == RunStatus::Converged);
    CHECK(result.outcome.steady_residual < 1e-6);
    CHECK(result.outcome.final_lambda > 0.0);
    for (const auto& s : result.trace.samples) CHECK(std::abs(s.norm_post - 1.0) < 1e-12);
}

TEST_CASE("supercritical flow C concentrates until the step size collapses") {
    auto g = build_geometry(GeometryKind::RadialBallDirichlet, {1.0}, 3, 400);
    const auto spec = FlowSpec::make(FlowVariant::C_LpPlus1Preserving, 7.0, 3);
    const Field bump = Field::sample(g, [](double r, double) { return std::exp(-r * r / 0.09); });
    SolverConfig cfg;
    cfg.dt_min = 1.0 / (400.0 * 400.0);
    const auto result = run(spec, g, bump, cfg);
    REQUIRE(result.outcome.status == RunStatus::BlowUp);
    REQUIRE(result.outcome.blowup.has_value());
    CHECK(result.outcome.blowup->dt_collapse);
    CHECK(result.outcome.final_field.max() > 2.0 * result.trace.samples.front().umax);

    // With the default floor the grid holds a saturated spike instead.
    cfg.dt_min = 1e-10;
    cfg.t_max = 1.0;
    const auto saturated = run(spec, g, bump, cfg);
    CHECK(saturated.outcome.status == RunStatus::HorizonReached);
}

TEST_CASE("a larger threshold factor is crossed by the blow-up check") {
    auto g = build_geometry(GeometryKind::RadialBallDirichlet, {1.0}, 3, 200);
    const auto spec = FlowSpec::make(FlowVariant::C_LpPlus1Preserving, 5.0, 3);
    SolverConfig cfg;
    cfg.blowup_umax_factor = 3.0;
    const auto result = run(spec, g, Field::sample(g, [](double r, double) { return std::exp(-r * r / 0.09); }), cfg);
    REQUIRE(result.outcome.status == RunStatus::BlowUp);
    CHECK(result.outcome.blowup->threshold_crossed);
    CHECK(result.trace.samples.back().umax > 3.0 * result.trace.samples.front().umax);
}

TEST_CASE("step size collapse without growth is an error") {
    auto g = build_geometry(GeometryKind::Circle, {2.0 * pi}, 1, 64);
    const auto spec = FlowSpec::make(FlowVariant::A_YamabeType, 3.0, 1);
    SolverConfig cfg;
    cfg.max_step_drift = 1e-300;
    cfg.dt_min = 1e-6;
    cfg.dt_initial = 1e-3;
    const Field g0 = Field::sample(g, [](double x, double) { return 1.0 + 0.3 * std::sin(x); });
    CHECK(code_of([&] { run(spec, g, g0, cfg); }) == ErrorCode::StepSizeCollapse);
}

TEST_CASE("runs are deterministic") {
    auto g = build_geometry(GeometryKind::Circle, {2.0 * pi}, 1, 64);
    const auto spec = FlowSpec::make(FlowVariant::A_YamabeType, 3.0, 1);
    SolverConfig cfg;
    cfg.t_max = 1.0;
    const Field g0 = Field::sample(g, [](double x, double) { return 1.0 + 0.3 * std::sin(x); });
    const auto r1 = run(spec, g, g0, cfg);
    const auto r2 = run(spec, g, g0, cfg);
    REQUIRE(r1.trace.samples.size() == r2.trace.samples.size());
    for (std::size_t k = 0; k < r1.trace.samples.size(); ++k) {
        CHECK(r1.trace.samples[k].lambda == r2.trace.samples[k].lambda);
        CHECK(r1.trace.samples[k].umax == r2.trace.samples[k].umax);
    }
}

TEST_CASE("detect_blowup on synthetic traces") {
    std::vector<double> t{0.0};
    for (int k = 1; k <= 200; ++k) t.push_back(1.0 - std::pow(10.0, -(k + 0.5) / 20.0));
    const SolverConfig cfg;

    CHECK_FALSE(detect_blowup(synthetic(t, [](double s) { return 2.0 - s; }), cfg).has_value());
    CHECK_FALSE(detect_blowup(synthetic(t, [](double) { return 4.0; }), cfg).has_value());

    const auto report = detect_blowup(synthetic(t, [](double s) { return 1.0 / std::sqrt(1.0 - s); }), cfg);
    REQUIRE(report.has_value());
    CHECK(report->threshold_crossed);
    CHECK(report->threshold == doctest::Approx(100.0));
    // 1 - t first drops below 1e-4 at k = 80.
    CHECK(report->sample_index == 80);
    CHECK(report->t_detect == doctest::Approx(1.0 - std::pow(10.0, -80.5 / 20.0)));
    REQUIRE(report->fit.has_value());
    CHECK(report->fit->exponent == doctest::Approx(-0.5).epsilon(0.1));
    CHECK(report->fit->t_blowup == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("growth fit recovers exponents on uniformly sampled traces") {
    for (double beta : {0.25, 0.5, 1.0}) {
        for (double T : {0.3, 2.0}) {
            std::vector<double> t;
            for (int k = 0; k < 400; ++k) t.push_back(T * k / 400.0);
            const Trace trace = synthetic(t, [&](double s) { return std::pow(T - s, -beta); });
            const auto fit = fit_blowup_growth(trace, t.size() - 1);
            REQUIRE(fit.has_value());
            CHECK(fit->exponent == doctest::Approx(-beta).epsilon(0.05));
            CHECK(fit->r2 > 0.999);
        }
    }
    const Trace tiny = synthetic({0.0, 0.1}, [](double s) { return 1.0 + s; });
    CHECK_FALSE(fit_blowup_growth(tiny, 1).has_value());
}
