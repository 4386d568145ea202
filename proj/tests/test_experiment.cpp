#include "normflow/experiment.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

using namespace normflow;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kExperiments = NORMFLOW_EXPERIMENTS_DIR;

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("normflow_exp_" + std::to_string(::getpid()) + "_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

json summary_of(const fs::path& dir) { return json::parse(slurp(dir / "summary.json")); }

// Small flow-B run that finishes in a few hundred steps.
constexpr const char* kSmallB = R"(
[flow]
variant = B
p = 3
[geometry]
kind = interval
resolution = 64
[initial]
preset = parabola
[solver]
t_max = 5
[output]
snapshot_every = 50
)";

int shell(const std::string& cmd) {
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("flow A reference config: exit 0, traces, snapshots and passing monotonicity") {
    const fs::path out = scratch("a_p2");
    const ExperimentConfig cfg = load_config(kExperiments / "a_p2_circle.ini");
    const ExperimentResult r = run_experiment(cfg, out);
    CHECK(r.error.empty());
    CHECK(r.exit_code == 0);
    REQUIRE(r.status);
    CHECK(*r.status == RunStatus::Converged);

    const json s = summary_of(out);
    CHECK(s["status"] == "Converged");
    CHECK(s["check_status"]["lambda_monotone"] == "pass");
    CHECK(s["exit_code"] == 0);
    CHECK(s["fits"]["lambda_decay"]["c_fit"].get<double>() == doctest::Approx(2.0).epsilon(1e-3));

    std::ifstream trace(out / "trace.csv");
    std::string header;
    std::getline(trace, header);
    CHECK(header == kTraceHeader);
    const Trace t = read_trace_csv(out / "trace.csv", cfg.flow_spec(), 2.0 * M_PI);
    REQUIRE(t.samples.size() == s["final"]["samples"].get<std::size_t>());
    for (const auto& sample : t.samples) CHECK(std::abs(sample.norm_post - 1.0) < 1e-12);

    REQUIRE(fs::exists(out / "snapshots" / "u_0.csv"));
    std::ifstream snap(out / "snapshots" / "u_0.csv");
    std::getline(snap, header);
    CHECK(header == "x,u");
    int rows = 0;
    for (std::string line; std::getline(snap, line);) ++rows;
    CHECK(rows == 256);
    // First, every 200th sample, and the final state.
    const auto count = static_cast<std::size_t>(std::distance(fs::directory_iterator(out / "snapshots"), {}));
    CHECK(count == 1 + (t.samples.size() - 1) / 200 + 1);
    fs::remove_all(out);
}

TEST_CASE("supercritical flow C reference config: exit 2 with BlowUp status") {
    const fs::path out = scratch("c_p7");
    const ExperimentResult r = run_experiment(load_config(kExperiments / "c_p7_ball.ini"), out);
    CHECK(r.exit_code == 2);
    const json s = summary_of(out);
    CHECK(s["status"] == "BlowUp");
    CHECK(s["blowup"]["dt_collapse"] == true);
    CHECK(s["oracle"].is_null());
    std::ifstream snap(out / "snapshots" / "u_0.csv");
    std::string header;
    std::getline(snap, header);
    CHECK(header == "r,u");
    fs::remove_all(out);
}

TEST_CASE("unwritable output directory gives exit 1 with an I/O message") {
    const fs::path dir = scratch("unwritable");
    std::ofstream(dir / "blocker") << "not a directory";
    const ExperimentResult r = run_experiment(parse_config(kSmallB), dir / "blocker" / "out");
    CHECK(r.exit_code == 1);
    CHECK(r.error.find("cannot create output directory") != std::string::npos);
    CHECK_FALSE(r.status.has_value());
    fs::remove_all(dir);
}

TEST_CASE("solver errors give exit 1 and a summary carrying the error") {
    const fs::path out = scratch("collapse");
    ExperimentConfig cfg = parse_config("[flow]\nvariant = A\np = 2\n[geometry]\nkind = circle\nresolution = 32\n"
                                        "[initial]\npreset = constant_plus_sine(0.3)\n");
    cfg.solver.max_step_drift = 1e-300;
    const ExperimentResult r = run_experiment(cfg, out);
    CHECK(r.exit_code == 1);
    const json s = summary_of(out);
    CHECK(s["status"].is_null());
    CHECK(s["error"].get<std::string>().size() > 0);
    CHECK(slurp(out / "trace.csv").rfind(kTraceHeader, 0) == 0);
    fs::remove_all(out);
}

TEST_CASE("failing checks give exit 1") {
    const fs::path out = scratch("failing");
    ExperimentConfig cfg = parse_config(kSmallB);
    cfg.diagnostics.balance_tolerance = 0.0;
    const ExperimentResult r = run_experiment(cfg, out);
    CHECK(r.status == RunStatus::Converged);
    CHECK_FALSE(r.checks_passed);
    CHECK(r.exit_code == 1);
    CHECK(summary_of(out)["check_status"]["dissipation_balance"] == "fail");
    fs::remove_all(out);
}

TEST_CASE("summary numbers are reproducible from trace.csv") {
    for (const char* name : {"a_p3_circle", "b_p3_interval", "c_p5_ball"}) {
        CAPTURE(name);
        const fs::path out = scratch(std::string("rt_") + name);
        const ExperimentConfig cfg = load_config(kExperiments / (std::string(name) + ".ini"));
        run_experiment(cfg, out);
        const json s = summary_of(out);
        const double measure = s["geometry"]["measure"].get<double>();
        const Trace t = read_trace_csv(out / "trace.csv", cfg.flow_spec(), measure);

        const auto checks = trace_checks(cfg, t);
        for (const auto& c : checks) {
            CAPTURE(c.name);
            const auto it = std::find_if(s["checks"].begin(), s["checks"].end(),
                                         [&](const json& j) { return j["name"] == c.name; });
            REQUIRE(it != s["checks"].end());
            CHECK((*it)["pass"] == c.pass);
            CHECK((*it)["violation"].get<double>() == c.violation);
            for (const auto& [key, value] : c.context) {
                CAPTURE(key);
                if (std::isfinite(value)) CHECK((*it)["context"][key].get<double>() == value);
            }
        }
        CHECK(s["final"]["t"].get<double>() == t.samples.back().t);
        CHECK(s["final"]["lambda"].get<double>() == t.samples.back().lambda);
        CHECK(s["final"]["umax"].get<double>() == t.samples.back().umax);

        if (cfg.variant == FlowVariant::A_YamabeType) {
            const DecayFit fit = fit_lambda_decay(t, cfg.diagnostics.tail_fraction);
            CHECK(s["fits"]["lambda_decay"]["c_fit"].get<double>() == fit.rate);
            CHECK(s["fits"]["lambda_decay"]["r2"].get<double>() == fit.r2);
        }
        if (s["status"] == "BlowUp") {
            // Collapse-detected blow-up: the fit ends at the last recorded sample.
            CHECK(s["blowup"]["dt_collapse"] == true);
            CHECK_FALSE(detect_blowup(t, cfg.solver).has_value());
            const std::size_t last = s["blowup"]["sample_index"].get<std::size_t>();
            CHECK(last == t.samples.size() - 1);
            CHECK(s["blowup"]["threshold"].get<double>() == cfg.solver.blowup_umax_factor * t.samples[0].umax);
            const auto fit = fit_blowup_growth(t, last);
            REQUIRE(fit);
            CHECK(s["blowup"]["fit"]["exponent"].get<double>() == fit->exponent);
            CHECK(s["blowup"]["fit"]["t_blowup"].get<double>() == fit->t_blowup);
        }
        fs::remove_all(out);
    }
}

TEST_CASE("identical config and seed give bit-identical traces") {
    ExperimentConfig cfg = parse_config(kSmallB);
    cfg.initial.perturbation = 0.05;
    cfg.initial.seed = 11;
    const fs::path a = scratch("det_a");
    const fs::path b = scratch("det_b");
    const fs::path c = scratch("det_c");
    run_experiment(cfg, a);
    run_experiment(cfg, b);
    CHECK(slurp(a / "trace.csv") == slurp(b / "trace.csv"));
    cfg.initial.seed = 12;
    run_experiment(cfg, c);
    CHECK(slurp(a / "trace.csv") != slurp(c / "trace.csv"));
    for (const auto& d : {a, b, c}) fs::remove_all(d);
}

TEST_CASE("suite flags a malformed config and still runs the rest") {
    const fs::path dir = scratch("suite_in");
    const fs::path out = scratch("suite_out");
    std::ofstream(dir / "good.ini") << kSmallB;
    std::ofstream(dir / "expected_converged.ini") << "[experiment]\nexpect = Converged\n" << kSmallB;
    std::ofstream(dir / "bad.ini") << "[flow]\nvariant = B\np = nope\n";
    std::ofstream(dir / "notes.txt") << "ignored";

    const SuiteReport report = run_suite(dir, out, 2);
    REQUIRE(report.entries.size() == 3);
    CHECK(report.exit_code != 0);
    for (const auto& e : report.entries) {
        CAPTURE(e.name);
        if (e.name == "bad") {
            CHECK(e.malformed);
            CHECK(e.unexpected);
            CHECK(e.result.error.find("line 3") != std::string::npos);
        } else {
            CHECK_FALSE(e.malformed);
            CHECK_FALSE(e.unexpected);
            CHECK(e.result.exit_code == 0);
            CHECK(fs::exists(out / e.name / "trace.csv"));
        }
    }
    const json rep = json::parse(slurp(out / "suite_report.json"));
    CHECK(rep["total"] == 3);
    CHECK(rep["unexpected"] == 1);

    fs::remove(dir / "bad.ini");
    CHECK(run_suite(dir, out, 1).exit_code == 0);

    std::ofstream(dir / "wrong_expectation.ini") << "[experiment]\nexpect = BlowUp\n" << kSmallB;
    CHECK(run_suite(dir, out, 1).exit_code != 0);
    fs::remove_all(dir);
    fs::remove_all(out);
}

TEST_CASE("empty suite directory is an error") {
    const fs::path dir = scratch("suite_empty");
    CHECK_THROWS_AS(run_suite(dir, dir / "out"), Error);
    fs::remove_all(dir);
}

TEST_CASE("output directory resolution") {
    ExperimentConfig cfg = parse_config(kSmallB);
    cfg.name = "exp";
    cfg.source_dir = "/configs";
    CHECK(resolve_output_dir(cfg, fs::path("/x")) == fs::path("/x"));
    ::setenv("NORMFLOW_OUT", "/env_root", 1);
    CHECK(resolve_output_dir(cfg, std::nullopt) == fs::path("/env_root/exp"));
    cfg.output_directory = "rel";
    CHECK(resolve_output_dir(cfg, std::nullopt) == fs::path("/configs/rel"));
    ::unsetenv("NORMFLOW_OUT");
    cfg.output_directory.reset();
    CHECK(resolve_output_dir(cfg, std::nullopt) == fs::path("normflow_out/exp"));
}

TEST_CASE("missing trace columns read as NaN") {
    const fs::path dir = scratch("csv");
    std::ofstream(dir / "trace.csv") << "t,lambda\n0,2\n0.5,1\n";
    const Trace t = read_trace_csv(dir / "trace.csv", FlowSpec::make(FlowVariant::A_YamabeType, 2, 1), 1.0);
    REQUIRE(t.samples.size() == 2);
    CHECK(t.samples[1].lambda == 1.0);
    CHECK(std::isnan(t.samples[1].B));
    CHECK(std::isnan(t.samples[1].dissipation));
    CHECK_THROWS_AS(check_dissipation_balance(t), Error);
    CHECK(check_lambda_monotone(t).pass);
    fs::remove_all(dir);
}

TEST_CASE("CLI exit codes") {
    const std::string cli = NORMFLOW_CLI_PATH;
    const fs::path out = scratch("cli");
    CHECK(shell(cli + " run " + (kExperiments / "a_p2_circle.ini").string() + " --out " + (out / "a").string() +
                " > /dev/null") == 0);
    CHECK(shell(cli + " run " + (kExperiments / "c_p7_ball.ini").string() + " --out " + (out / "c").string() +
                " > /dev/null") == 2);
    std::ofstream(out / "blocker") << "x";
    CHECK(shell(cli + " run " + (kExperiments / "a_p2_circle.ini").string() + " --out " +
                (out / "blocker" / "sub").string() + " > /dev/null 2>&1") == 1);
    CHECK(shell(cli + " shoot --n 3 --p 3 --R 1 --out " + (out / "profile.csv").string() + " > /dev/null") == 0);
    CHECK(slurp(out / "profile.csv").rfind("r,u\n", 0) == 0);
    CHECK(shell(cli + " eig --kind interval --extents 1 --resolution 32 > /dev/null") == 0);
    CHECK(shell(cli + " eig --kind hexagon > /dev/null 2>&1") != 0);
    CHECK(shell(cli + " suite " + out.string() + "/nothing > /dev/null 2>&1") == 1);
    CHECK(shell("NORMFLOW_OUT=" + (out / "env").string() + " " + cli + " run " +
                (kExperiments / "a_p2_circle.ini").string() + " > /dev/null") == 0);
    CHECK(fs::exists(out / "env" / "a_p2_circle" / "summary.json"));
    fs::remove_all(out);
}
