#include "normflow/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace normflow {

namespace {

std::string join_issues(const std::vector<ConfigIssue>& issues) {
    std::ostringstream out;
    for (std::size_t i = 0; i < issues.size(); ++i) {
        if (i) out << '\n';
        if (issues[i].line > 0) out << "line " << issues[i].line << ": ";
        out << issues[i].message;
    }
    return out.str();
}

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::optional<double> to_double(const std::string& s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

template <class Int>
std::optional<Int> to_int(const std::string& s) {
    Int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

std::optional<bool> to_bool(const std::string& s) {
    if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
    if (s == "false" || s == "no" || s == "off" || s == "0") return false;
    return std::nullopt;
}

struct Entry {
    std::string value;
    int line;
};

}  // namespace

PresetSpec parse_preset(const std::string& text) {
    PresetSpec spec;
    const std::string body = trim(text);
    if (body.rfind("file:", 0) == 0) {
        spec.name = "file";
        spec.path = trim(body.substr(5));
        if (spec.path.empty()) throw Error(ErrorCode::InvalidConfig, "preset `file:` needs a path");
        return spec;
    }
    const auto open = body.find('(');
    spec.name = trim(body.substr(0, open));
    if (open != std::string::npos) {
        if (body.back() != ')') throw Error(ErrorCode::InvalidConfig, "preset `" + body + "`: missing `)`");
        for (const auto& item : split_list(body.substr(open + 1, body.size() - open - 2))) {
            const auto v = to_double(item);
            if (!v) throw Error(ErrorCode::InvalidConfig, "preset `" + body + "`: `" + item + "` is not a number");
            spec.args.push_back(*v);
        }
    }
    struct Arity {
        const char* name;
        std::size_t min, max;
    };
    static constexpr Arity arities[] = {{"constant_plus_sine", 1, 2}, {"parabola", 0, 0}, {"gaussian_bump", 1, 3}};
    for (const auto& a : arities) {
        if (spec.name != a.name) continue;
        if (spec.args.size() < a.min || spec.args.size() > a.max) {
            throw Error(ErrorCode::InvalidConfig, "preset `" + spec.name + "` takes " + std::to_string(a.min) +
                                                      (a.max != a.min ? " to " + std::to_string(a.max) : "") +
                                                      " arguments, got " + std::to_string(spec.args.size()));
        }
        if (spec.name == "gaussian_bump" && !(spec.args[0] > 0.0)) {
            throw Error(ErrorCode::InvalidConfig, "preset `gaussian_bump` needs width > 0");
        }
        return spec;
    }
    throw Error(ErrorCode::InvalidConfig, "unknown preset `" + spec.name +
                                              "` (expected constant_plus_sine, parabola, gaussian_bump or file:<path>)");
}

ConfigError::ConfigError(std::vector<ConfigIssue> issues)
    : Error(ErrorCode::InvalidConfig, join_issues(issues)), issues_(std::move(issues)) {}

const std::vector<std::string>& known_checks() {
    static const std::vector<std::string> names{"lambda_monotone",   "lambda_decay",   "harnack",
                                                "lambda_integrable", "growth_bounds",  "lyapunov_B",
                                                "dissipation_balance", "trace_bounded", "oracle"};
    return names;
}

std::vector<std::string> default_checks(FlowVariant variant) {
    switch (variant) {
        case FlowVariant::A_YamabeType:
            return {"lambda_monotone", "lambda_decay", "harnack", "lambda_integrable", "growth_bounds",
                    "dissipation_balance"};
        case FlowVariant::B_L2Preserving: return {"lyapunov_B", "dissipation_balance", "oracle"};
        case FlowVariant::C_LpPlus1Preserving: return {"dissipation_balance", "oracle"};
    }
    return {};
}

ExperimentConfig parse_config(const std::string& text) {
    std::vector<ConfigIssue> issues;
    std::map<std::string, Entry> entries;  // "section.key"
    std::map<std::string, int> section_lines;

    {
        std::istringstream in(text);
        std::string raw;
        std::string section;
        int line_no = 0;
        while (std::getline(in, raw)) {
            ++line_no;
            const auto hash = raw.find('#');
            const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') {
                    issues.push_back({line_no, "unterminated section header"});
                    continue;
                }
                section = trim(line.substr(1, line.size() - 2));
                section_lines.emplace(section, line_no);
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                issues.push_back({line_no, "expected `key = value`"});
                continue;
            }
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (section.empty()) {
                issues.push_back({line_no, "key `" + key + "` appears before any [section]"});
                continue;
            }
            const std::string full = section + "." + key;
            if (entries.count(full)) {
                issues.push_back({line_no, "duplicate key `" + full + "` (first on line " +
                                               std::to_string(entries[full].line) + ")"});
                continue;
            }
            entries[full] = {value, line_no};
        }
    }

    ExperimentConfig cfg;
    std::map<std::string, bool> used;

    auto fetch = [&](const std::string& key) -> const Entry* {
        auto it = entries.find(key);
        if (it == entries.end()) return nullptr;
        used[key] = true;
        return &it->second;
    };
    auto real = [&](const std::string& key, double& out, const std::function<bool(double)>& ok = {},
                    const char* constraint = nullptr) {
        const Entry* e = fetch(key);
        if (!e) return;
        const auto v = to_double(e->value);
        if (!v) {
            issues.push_back({e->line, "`" + key + "` expects a real number, got `" + e->value + "`"});
        } else if (ok && !ok(*v)) {
            issues.push_back({e->line, "`" + key + "` must satisfy " + constraint + ", got " + e->value});
        } else {
            out = *v;
        }
    };
    auto integer = [&](const std::string& key, int& out, int lowest) {
        const Entry* e = fetch(key);
        if (!e) return;
        const auto v = to_int<int>(e->value);
        if (!v) {
            issues.push_back({e->line, "`" + key + "` expects an integer, got `" + e->value + "`"});
        } else if (*v < lowest) {
            issues.push_back({e->line, "`" + key + "` must be >= " + std::to_string(lowest) + ", got " + e->value});
        } else {
            out = *v;
        }
    };
    auto boolean = [&](const std::string& key, bool& out) {
        const Entry* e = fetch(key);
        if (!e) return;
        const auto v = to_bool(e->value);
        if (!v) {
            issues.push_back({e->line, "`" + key + "` expects true or false, got `" + e->value + "`"});
        } else {
            out = *v;
        }
    };
    auto line_of = [&](const std::string& key) {
        auto it = entries.find(key);
        return it == entries.end() ? 0 : it->second.line;
    };
    const auto positive = [](double v) { return v > 0.0; };
    const auto nonnegative = [](double v) { return v >= 0.0; };

    // [experiment]
    if (const Entry* e = fetch("experiment.name")) cfg.name = e->value;
    if (const Entry* e = fetch("experiment.expect")) {
        cfg.expect = parse_run_status(e->value);
        if (!cfg.expect) {
            issues.push_back({e->line, "`experiment.expect` must be Converged, BlowUp, HorizonReached or "
                                       "PositivityLost, got `" + e->value + "`"});
        }
    }

    // [flow]
    if (const Entry* e = fetch("flow.variant")) {
        const auto v = parse_flow_variant(e->value);
        if (!v) {
            issues.push_back({e->line, "`flow.variant` must be A, B or C, got `" + e->value + "`"});
        } else {
            cfg.variant = *v;
        }
    } else {
        issues.push_back({0, "missing required key `flow.variant`"});
    }
    if (!entries.count("flow.p")) issues.push_back({0, "missing required key `flow.p`"});
    real("flow.p", cfg.p, [](double v) { return v > 1.0; }, "p > 1");
    boolean("flow.allow_subcritical", cfg.allow_subcritical);

    // [geometry]
    bool geometry_ok = true;
    if (const Entry* e = fetch("geometry.kind")) {
        const auto k = parse_geometry_kind(e->value);
        if (!k) {
            issues.push_back({e->line, "`geometry.kind` must be interval, circle, rectangle, torus or ball, got `" +
                                           e->value + "`"});
            geometry_ok = false;
        } else {
            cfg.geometry.kind = *k;
        }
    } else {
        issues.push_back({0, "missing required key `geometry.kind`"});
        geometry_ok = false;
    }
    const bool planar =
        cfg.geometry.kind == GeometryKind::RectangleDirichlet || cfg.geometry.kind == GeometryKind::Torus2D;
    cfg.geometry.extents = planar ? std::vector<double>{1.0, 1.0} : std::vector<double>{1.0};
    if (const Entry* e = fetch("geometry.extents")) {
        std::vector<double> values;
        for (const auto& item : split_list(e->value)) {
            const auto v = to_double(item);
            if (!v) {
                issues.push_back({e->line, "`geometry.extents` expects a comma-separated list of reals, got `" +
                                               item + "`"});
                geometry_ok = false;
            } else {
                values.push_back(*v);
            }
        }
        if (geometry_ok) cfg.geometry.extents = values;
    }
    integer("geometry.resolution", cfg.geometry.resolution, 3);
    cfg.geometry.n = planar ? 2 : 1;
    if (cfg.geometry.kind == GeometryKind::RadialBallDirichlet) {
        cfg.geometry.n = 3;
        integer("geometry.n", cfg.geometry.n, 1);
    } else if (const Entry* e = fetch("geometry.n")) {
        const auto v = to_int<int>(e->value);
        if (!v || *v != cfg.geometry.n) {
            issues.push_back({e->line, "`geometry.n` must equal the grid dimension " +
                                           std::to_string(cfg.geometry.n) + " for " +
                                           std::string(to_string(cfg.geometry.kind))});
        }
    }

    // [initial]
    if (const Entry* e = fetch("initial.preset")) {
        try {
            parse_preset(e->value);
            cfg.initial.preset = e->value;
        } catch (const Error& err) {
            issues.push_back({e->line, err.what()});
        }
    }
    real("initial.perturbation", cfg.initial.perturbation, nonnegative, ">= 0");
    if (const Entry* e = fetch("initial.seed")) {
        const auto v = to_int<std::uint64_t>(e->value);
        if (!v) {
            issues.push_back({e->line, "`initial.seed` expects a nonnegative integer, got `" + e->value + "`"});
        } else {
            cfg.initial.seed = *v;
        }
    }

    // [solver]
    if (const Entry* e = fetch("solver.scheme")) {
        const auto s = parse_scheme(e->value);
        if (!s) {
            issues.push_back({e->line, "`solver.scheme` must be explicit_euler, imex_cn or imex_be, got `" +
                                           e->value + "`"});
        } else {
            cfg.solver.scheme = *s;
        }
    }
    SolverConfig& s = cfg.solver;
    real("solver.dt_initial", s.dt_initial, positive, "> 0");
    real("solver.dt_min", s.dt_min, positive, "> 0");
    real("solver.dt_max", s.dt_max, positive, "> 0");
    real("solver.t_max", s.t_max, positive, "> 0");
    real("solver.blowup_umax_factor", s.blowup_umax_factor, [](double v) { return v > 1.0; }, "> 1");
    real("solver.steady_residual_tol", s.steady_residual_tol, nonnegative, ">= 0");
    real("solver.positivity_floor", s.positivity_floor, nonnegative, ">= 0");
    integer("solver.record_every", s.record_every, 1);
    real("solver.max_step_drift", s.max_step_drift, positive, "> 0");
    integer("solver.growth_interval", s.growth_interval, 1);
    real("solver.growth_factor", s.growth_factor, [](double v) { return v >= 1.0; }, ">= 1");
    integer("solver.startup_steps", s.startup_steps, 0);

    // [diagnostics]
    if (const Entry* e = fetch("diagnostics.checks")) {
        if (e->value != "default") {
            for (const auto& name : split_list(e->value)) {
                const auto& known = known_checks();
                if (std::find(known.begin(), known.end(), name) == known.end()) {
                    issues.push_back({e->line, "unknown check `" + name + "`"});
                } else {
                    cfg.diagnostics.checks.push_back(name);
                }
            }
        }
    }
    DiagnosticsConfig& d = cfg.diagnostics;
    real("diagnostics.tolerance", d.tolerance, nonnegative, ">= 0");
    real("diagnostics.balance_tolerance", d.balance_tolerance, nonnegative, ">= 0");
    real("diagnostics.integrable_tolerance", d.integrable_tolerance, nonnegative, ">= 0");
    real("diagnostics.tail_fraction", d.tail_fraction, [](double v) { return v > 0.0 && v <= 1.0; }, "0 < x <= 1");
    real("diagnostics.bound_factor", d.bound_factor, positive, "> 0");
    real("diagnostics.oracle_tolerance", d.oracle_tolerance, positive, "> 0");

    // [output]
    if (const Entry* e = fetch("output.directory")) cfg.output_directory = e->value;
    integer("output.snapshot_every", cfg.snapshot_every, 0);

    for (const auto& [key, entry] : entries) {
        if (!used.count(key)) issues.push_back({entry.line, "unknown key `" + key + "`"});
    }

    // Cross-field constraints, only once every field parsed cleanly.
    if (issues.empty()) {
        try {
            build_geometry(cfg.geometry.kind, cfg.geometry.extents, cfg.geometry.n, cfg.geometry.resolution);
        } catch (const Error& e) {
            issues.push_back({line_of("geometry.kind"), e.what()});
        }
        try {
            const FlowSpec spec = cfg.flow_spec();
            const auto geom = build_geometry(cfg.geometry.kind, cfg.geometry.extents, cfg.geometry.n,
                                             cfg.geometry.resolution);
            require_compatible(spec, *geom);
        } catch (const Error& e) {
            const int line = line_of("flow.p") ? line_of("flow.p") : line_of("flow.variant");
            if (issues.empty()) issues.push_back({line, e.what()});
        }
        try {
            cfg.solver.validate();
        } catch (const Error& e) {
            issues.push_back({section_lines.count("solver") ? section_lines["solver"] : 0, e.what()});
        }
    }
    if (!issues.empty()) {
        std::stable_sort(issues.begin(), issues.end(),
                         [](const ConfigIssue& a, const ConfigIssue& b) { return a.line < b.line; });
        throw ConfigError(std::move(issues));
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot read config " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    ExperimentConfig cfg;
    try {
        cfg = parse_config(buffer.str());
    } catch (const ConfigError& e) {
        std::vector<ConfigIssue> issues = e.issues();
        for (auto& issue : issues) issue.message = path.filename().string() + ": " + issue.message;
        throw ConfigError(std::move(issues));
    }
    if (cfg.name.empty()) cfg.name = path.stem().string();
    cfg.source_dir = path.parent_path();
    return cfg;
}

}  // namespace normflow
