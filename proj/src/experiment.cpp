#include "normflow/experiment.hpp"

#include "normflow/oracles.hpp"

#include <json.hpp>

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

namespace normflow {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string shortest(double v) {
    char buf[32];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc() ? std::string(buf, end) : format_number(v);
}

// json turns non-finite doubles into null; keep that explicit.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

Field read_field_file(const fs::path& path, const GeometryPtr& geom) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot read initial data " + path.string());
    std::string line;
    std::getline(in, line);  // header
    Vector values(geom->node_count());
    Eigen::Index i = 0;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto comma = line.find_last_of(',');
        const std::string cell = comma == std::string::npos ? line : line.substr(comma + 1);
        char* end = nullptr;
        const double v = std::strtod(cell.c_str(), &end);
        if (end == cell.c_str()) throw Error(ErrorCode::InvalidInitialData, path.string() + ": bad value `" + cell + "`");
        if (i >= values.size()) break;
        values[i++] = v;
    }
    if (i != values.size() || in.good()) {
        throw Error(ErrorCode::InvalidInitialData, path.string() + ": expected " + std::to_string(values.size()) +
                                                       " rows for this geometry");
    }
    return Field(geom, values);
}

CheckReport failed_check(const std::string& name, double tol, const Error& e) {
    auto report = make_report(name, std::numeric_limits<double>::infinity(), tol, std::nullopt);
    report.context["error_code"] = static_cast<double>(e.code());
    return report;
}

json to_json(const CheckReport& r) {
    json context = json::object();
    for (const auto& [k, v] : r.context) context[k] = number(v);
    return {{"name", r.name},
            {"pass", r.pass},
            {"violation", number(r.violation)},
            {"tolerance", number(r.tolerance)},
            {"time_index", r.time_index ? json(*r.time_index) : json(nullptr)},
            {"context", context}};
}

json to_json(const GrowthFit& f) {
    return {{"exponent", number(f.exponent)}, {"t_blowup", number(f.t_blowup)}, {"r2", number(f.r2)},
            {"samples", f.samples}};
}

json to_json(const SolverConfig& s) {
    return {{"scheme", to_string(s.scheme)},
            {"dt_initial", s.dt_initial},
            {"dt_min", s.dt_min},
            {"dt_max", s.dt_max},
            {"t_max", s.t_max},
            {"blowup_umax_factor", s.blowup_umax_factor},
            {"steady_residual_tol", s.steady_residual_tol},
            {"positivity_floor", s.positivity_floor},
            {"record_every", s.record_every},
            {"max_step_drift", s.max_step_drift},
            {"growth_interval", s.growth_interval},
            {"growth_factor", s.growth_factor},
            {"startup_steps", s.startup_steps}};
}

std::vector<std::string> active_checks(const ExperimentConfig& config) {
    return config.diagnostics.checks.empty() ? default_checks(config.variant) : config.diagnostics.checks;
}

bool has(const std::vector<std::string>& names, const char* name) {
    return std::find(names.begin(), names.end(), name) != names.end();
}

void write_snapshot(const fs::path& dir, double t, const Field& u) {
    const fs::path path = dir / ("u_" + shortest(t) + ".csv");
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    const Geometry& g = u.geometry();
    const auto& xy = g.coordinates();
    if (g.grid_axes() == 2) {
        out << "x,y,u\n";
    } else {
        out << (g.is_radial() ? "r,u\n" : "x,u\n");
    }
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        for (int a = 0; a < g.grid_axes(); ++a) out << format_number(xy(i, a)) << ',';
        out << format_number(u[i]) << '\n';
    }
    if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

std::string trace_row(const TraceSample& s) {
    std::string row;
    for (double v : {s.t, s.lambda, s.norm_post, s.umax, s.umin, s.energy, s.B, s.dt, s.dissipation, s.drift}) {
        if (!row.empty()) row += ',';
        row += format_number(v);
    }
    row += '\n';
    return row;
}

}  // namespace

Field initial_data(const ExperimentConfig& config, const GeometryPtr& geom) {
    const PresetSpec preset = parse_preset(config.initial.preset);
    const auto& ext = geom->extents();
    const double lx = ext[0];
    const double ly = ext.size() > 1 ? ext[1] : 0.0;
    const bool planar = geom->grid_axes() == 2;
    Field u = [&] {
        if (preset.name == "file") {
            const fs::path path = preset.path.is_absolute() ? preset.path : config.source_dir / preset.path;
            return read_field_file(path, geom);
        }
        if (preset.name == "constant_plus_sine") {
            const double a = preset.args[0];
            const double mode = preset.args.size() > 1 ? preset.args[1] : 1.0;
            const double k = 2.0 * M_PI * mode / lx;
            return Field::sample(geom, [=](double x, double) { return 1.0 + a * std::sin(k * x); });
        }
        if (preset.name == "parabola") {
            if (geom->is_radial()) return Field::sample(geom, [=](double r, double) { return lx * lx - r * r; });
            if (planar) return Field::sample(geom, [=](double x, double y) { return x * (lx - x) * y * (ly - y); });
            return Field::sample(geom, [=](double x, double) { return x * (lx - x); });
        }
        // gaussian_bump(width[, cx[, cy]])
        const double w = preset.args[0];
        const double cx = preset.args.size() > 1 ? preset.args[1] : (geom->is_radial() ? 0.0 : lx / 2.0);
        const double cy = preset.args.size() > 2 ? preset.args[2] : ly / 2.0;
        return Field::sample(geom, [=](double x, double y) {
            const double d2 = (x - cx) * (x - cx) + (planar ? (y - cy) * (y - cy) : 0.0);
            return std::exp(-d2 / (w * w));
        });
    }();
    if (config.initial.perturbation > 0.0) {
        std::mt19937_64 rng(config.initial.seed);
        Vector v = u.values();
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            // 53-bit uniform in [-1, 1); avoids distribution implementation differences.
            const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            v[i] *= 1.0 + config.initial.perturbation * (2.0 * unit - 1.0);
        }
        u = u.with_values(v);
    }
    return u;
}

std::vector<CheckReport> trace_checks(const ExperimentConfig& config, const Trace& trace) {
    const auto names = active_checks(config);
    const auto& d = config.diagnostics;
    std::vector<CheckReport> reports;
    auto attempt = [&](const char* name, double tol, auto&& fn) {
        if (!has(names, name)) return;
        try {
            reports.push_back(fn());
        } catch (const Error& e) {
            reports.push_back(failed_check(name, tol, e));
        }
    };
    attempt("lambda_monotone", d.tolerance, [&] { return check_lambda_monotone(trace, d.tolerance); });
    attempt("harnack", d.tolerance, [&] { return check_harnack(trace, d.tolerance); });
    attempt("lambda_integrable", d.integrable_tolerance,
            [&] { return check_lambda_integrable(trace, d.integrable_tolerance); });
    attempt("growth_bounds", d.tolerance, [&] { return check_growth_bounds(trace, d.tolerance); });
    attempt("lyapunov_B", d.tolerance, [&] { return check_lyapunov_B(trace, d.tolerance); });
    attempt("dissipation_balance", d.balance_tolerance,
            [&] { return check_dissipation_balance(trace, d.balance_tolerance); });
    attempt("trace_bounded", d.bound_factor, [&] { return check_trace_bounded(trace, d.bound_factor); });
    return reports;
}

std::optional<OracleComparison> compare_with_oracle(const ExperimentConfig& config, const Field& u, double lambda) {
    if (config.variant == FlowVariant::A_YamabeType) return std::nullopt;
    const GeometryPtr& geom = u.geometry_ptr();
    int n = 0;
    double radius = 0.0;
    if (geom->kind() == GeometryKind::IntervalDirichlet) {
        n = 1;
        radius = geom->extents()[0] / 2.0;
    } else if (geom->is_radial()) {
        n = geom->dimension();
        radius = geom->extents()[0];
    } else {
        return std::nullopt;
    }
    const FlowSpec spec = config.flow_spec();
    const RadialProfile profile = lane_emden_shoot(n, spec.p, radius);
    if (profile.status() != ProfileStatus::HitZero) return std::nullopt;
    const SteadyState oracle = steady_state_from_profile(profile, geom, spec.q);
    const Vector diff = u.values() - oracle.u.values();
    OracleComparison cmp;
    cmp.lambda_oracle = oracle.lambda;
    cmp.lambda_relative_error = std::abs(lambda - oracle.lambda) / std::abs(oracle.lambda);
    cmp.field_distance = std::sqrt(geom->integrate(diff.cwiseProduct(diff)) /
                                   geom->integrate(oracle.u.values().cwiseProduct(oracle.u.values())));
    return cmp;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const fs::path& out_dir) {
    ExperimentResult result;
    result.directory = out_dir;
    json summary;
    summary["name"] = config.name;
    summary["expected_status"] = config.expect ? json(to_string(*config.expect)) : json(nullptr);
    summary["status"] = nullptr;
    summary["checks"] = json::array();
    summary["check_status"] = json::object();
    summary["fits"] = json::object();
    summary["blowup"] = nullptr;
    summary["oracle"] = nullptr;
    summary["error"] = nullptr;

    const fs::path snapshots = out_dir / "snapshots";
    try {
        std::error_code ec;
        fs::create_directories(snapshots, ec);
        if (ec) throw Error(ErrorCode::Io, "cannot create output directory " + snapshots.string() + ": " + ec.message());
    } catch (const Error& e) {
        result.error = e.what();
        return result;
    }

    try {
        const FlowSpec spec = config.flow_spec();
        const auto& gc = config.geometry;
        const GeometryPtr geom = build_geometry(gc.kind, gc.extents, gc.n, gc.resolution);
        summary["flow"] = {{"variant", to_string(spec.variant)},
                           {"p", spec.p},
                           {"q", spec.q},
                           {"n", spec.n},
                           {"allow_subcritical", spec.allow_subcritical}};
        summary["geometry"] = {{"kind", to_string(gc.kind)}, {"extents", gc.extents}, {"resolution", gc.resolution},
                               {"n", gc.n},          {"nodes", geom->node_count()}, {"measure", geom->measure()}};
        summary["initial"] = {{"preset", config.initial.preset},
                              {"perturbation", config.initial.perturbation},
                              {"seed", config.initial.seed}};
        summary["solver"] = to_json(config.solver);

        const Field g = initial_data(config, geom);

        std::ofstream trace_out(out_dir / "trace.csv");
        if (!trace_out) throw Error(ErrorCode::Io, "cannot write " + (out_dir / "trace.csv").string());
        trace_out << kTraceHeader << '\n';
        std::size_t recorded = 0;
        const auto hook = [&](const TraceSample& s, const Field& u) {
            trace_out << trace_row(s);
            const bool snap = recorded == 0 ||
                              (config.snapshot_every > 0 && recorded % static_cast<std::size_t>(config.snapshot_every) == 0);
            if (snap) write_snapshot(snapshots, s.t, u);
            ++recorded;
        };

        std::optional<RunResult> run_result;
        try {
            run_result.emplace(run(spec, geom, g, config.solver, hook));
        } catch (...) {
            trace_out.flush();
            throw;
        }
        trace_out.flush();
        if (!trace_out) throw Error(ErrorCode::Io, "failed writing trace.csv");

        const RunOutcome& out = run_result->outcome;
        const Trace& trace = run_result->trace;
        write_snapshot(snapshots, out.t_final, out.final_field);

        result.status = out.status;
        summary["status"] = to_string(out.status);
        summary["final"] = {{"t", out.t_final},
                            {"lambda", number(out.final_lambda)},
                            {"steady_residual", number(out.steady_residual)},
                            {"steps", out.steps},
                            {"rejected_steps", out.rejected_steps},
                            {"samples", trace.samples.size()},
                            {"umax", out.final_field.max()},
                            {"umin", out.final_field.min()},
                            {"norm_q", conserved_norm(spec, *geom, out.final_field)}};

        std::vector<CheckReport> checks = trace_checks(config, trace);
        const auto names = active_checks(config);

        if (has(names, "oracle") && out.status == RunStatus::Converged) {
            const double tol = config.diagnostics.oracle_tolerance;
            try {
                if (const auto cmp = compare_with_oracle(config, out.final_field, out.final_lambda)) {
                    summary["oracle"] = {{"lambda_oracle", cmp->lambda_oracle},
                                         {"lambda_relative_error", cmp->lambda_relative_error},
                                         {"field_distance", cmp->field_distance}};
                    checks.push_back(make_report("oracle", std::max(cmp->lambda_relative_error, cmp->field_distance),
                                                 tol, std::nullopt,
                                                 {{"lambda_oracle", cmp->lambda_oracle},
                                                  {"lambda_relative_error", cmp->lambda_relative_error},
                                                  {"field_distance", cmp->field_distance}}));
                }
            } catch (const Error& e) {
                checks.push_back(failed_check("oracle", tol, e));
            }
        }

        if (has(names, "lambda_decay") && spec.variant == FlowVariant::A_YamabeType) {
            const DecayFit fit = fit_lambda_decay(trace, config.diagnostics.tail_fraction);
            summary["fits"]["lambda_decay"] = {{"c_fit", number(fit.rate)},
                                               {"r2", number(fit.r2)},
                                               {"samples", fit.samples},
                                               {"tail_fraction", config.diagnostics.tail_fraction},
                                               {"degenerate", fit.degenerate},
                                               {"note", fit.note}};
            const Eigenpair eig = principal_eigenpair(geom);
            const double c = std::pow(geom->integrate(Vector::Ones(geom->node_count())), -1.0 / spec.p);
            summary["fits"]["linearized"] = {{"mu1", eig.mu},
                                             {"two_mu1", 2.0 * eig.mu},
                                             {"constant_state", c},
                                             {"predicted_rate", 2.0 * eig.mu * std::pow(c, 2.0 - spec.p)}};
        }

        if (out.blowup) {
            const BlowupReport& b = *out.blowup;
            summary["blowup"] = {{"t_detect", b.t_detect},
                                 {"sample_index", b.sample_index},
                                 {"threshold", b.threshold},
                                 {"threshold_crossed", b.threshold_crossed},
                                 {"dt_collapse", b.dt_collapse},
                                 {"fit", b.fit ? to_json(*b.fit) : json(nullptr)}};
        }

        result.checks_passed = true;
        for (const auto& c : checks) {
            result.checks_passed = result.checks_passed && c.pass;
            summary["checks"].push_back(to_json(c));
            summary["check_status"][c.name] = c.pass ? "pass" : "fail";
        }
        switch (out.status) {
            case RunStatus::BlowUp: result.exit_code = 2; break;
            case RunStatus::PositivityLost: result.exit_code = 1; break;
            default: result.exit_code = result.checks_passed ? 0 : 1;
        }
    } catch (const std::exception& e) {
        result.error = e.what();
        result.exit_code = 1;
        summary["error"] = e.what();
    }

    summary["checks_passed"] = result.checks_passed;
    summary["exit_code"] = result.exit_code;
    std::ofstream sout(out_dir / "summary.json");
    sout << summary.dump(2) << '\n';
    if (!sout) {
        result.exit_code = 1;
        if (result.error.empty()) result.error = "cannot write " + (out_dir / "summary.json").string();
    }
    return result;
}

fs::path default_output_root() {
    const char* env = std::getenv("NORMFLOW_OUT");
    return env && *env ? fs::path(env) : fs::path("normflow_out");
}

fs::path resolve_output_dir(const ExperimentConfig& config, const std::optional<fs::path>& explicit_out) {
    if (explicit_out) return *explicit_out;
    if (config.output_directory) {
        return config.output_directory->is_absolute() ? *config.output_directory
                                                      : config.source_dir / *config.output_directory;
    }
    return default_output_root() / config.name;
}

SuiteReport run_suite(const fs::path& dir, const fs::path& out_root, unsigned jobs) {
    if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, dir.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".ini") files.push_back(entry.path());
    }
    if (files.empty()) throw Error(ErrorCode::InvalidConfig, "no *.ini configs in " + dir.string());
    std::sort(files.begin(), files.end());

    SuiteReport report;
    report.entries.resize(files.size());
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i = next++; i < files.size(); i = next++) {
            SuiteEntry& e = report.entries[i];
            e.config = files[i];
            e.name = files[i].stem().string();
            const fs::path out_dir = out_root / e.name;
            e.result.directory = out_dir;
            try {
                const ExperimentConfig cfg = load_config(files[i]);
                e.expected = cfg.expect;
                e.result = run_experiment(cfg, out_dir);
            } catch (const std::exception& ex) {
                e.malformed = true;
                e.result.error = ex.what();
                continue;
            }
            const auto& r = e.result;
            if (!e.expected) {
                e.unexpected = r.exit_code == 1;
            } else if (*e.expected == RunStatus::BlowUp) {
                e.unexpected = r.exit_code != 2;
            } else {
                e.unexpected = r.status != e.expected || r.exit_code != 0;
            }
        }
    };
    if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
    jobs = std::min<unsigned>(jobs, static_cast<unsigned>(files.size()));
    std::vector<std::thread> pool;
    for (unsigned j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    json entries = json::array();
    std::size_t unexpected = 0;
    for (const auto& e : report.entries) {
        unexpected += e.unexpected ? 1 : 0;
        entries.push_back({{"name", e.name},
                           {"config", e.config.string()},
                           {"directory", e.result.directory.string()},
                           {"malformed", e.malformed},
                           {"status", e.result.status ? json(to_string(*e.result.status)) : json(nullptr)},
                           {"expected_status", e.expected ? json(to_string(*e.expected)) : json(nullptr)},
                           {"exit_code", e.result.exit_code},
                           {"checks_passed", e.result.checks_passed},
                           {"unexpected", e.unexpected},
                           {"error", e.result.error.empty() ? json(nullptr) : json(e.result.error)}});
    }
    report.exit_code = unexpected ? 1 : 0;
    std::error_code ec;
    fs::create_directories(out_root, ec);
    std::ofstream out(out_root / "suite_report.json");
    out << json{{"experiments", entries},
                {"total", report.entries.size()},
                {"unexpected", unexpected},
                {"exit_code", report.exit_code}}
               .dump(2)
        << '\n';
    if (!out) throw Error(ErrorCode::Io, "cannot write " + (out_root / "suite_report.json").string());
    return report;
}

Trace read_trace_csv(const fs::path& path, const FlowSpec& spec, double measure) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::Io, path.string() + " is empty");
    std::vector<std::string> columns;
    {
        std::stringstream header(line);
        std::string name;
        while (std::getline(header, name, ',')) columns.push_back(name);
    }
    Trace trace{spec, measure, {}};
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        TraceSample s;
        s.step = row++;
        s.norm_pre = s.norm_post = s.umax = s.umin = s.energy = s.B = s.dt = s.dissipation = s.drift = kNaN;
        s.t = s.lambda = kNaN;
        std::stringstream cells(line);
        std::string cell;
        for (std::size_t c = 0; c < columns.size() && std::getline(cells, cell, ','); ++c) {
            const double v = std::strtod(cell.c_str(), nullptr);
            const std::string& name = columns[c];
            if (name == "t") s.t = v;
            else if (name == "lambda") s.lambda = v;
            else if (name == "norm_q") s.norm_post = v;
            else if (name == "umax") s.umax = v;
            else if (name == "umin") s.umin = v;
            else if (name == "energy") s.energy = v;
            else if (name == "B") s.B = v;
            else if (name == "dt") s.dt = v;
            else if (name == "dissipation") s.dissipation = v;
            else if (name == "drift") s.drift = v;
        }
        trace.samples.push_back(s);
    }
    return trace;
}

}  // namespace normflow
