#include "normflow/experiment.hpp"
#include "normflow/oracles.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace normflow;

namespace {

int cmd_run(const fs::path& config_path, const std::optional<fs::path>& out) {
    ExperimentConfig cfg;
    try {
        cfg = load_config(config_path);
    } catch (const std::exception& e) {
        std::cerr << "normflow: " << e.what() << '\n';
        return 1;
    }
    const fs::path dir = resolve_output_dir(cfg, out);
    const ExperimentResult r = run_experiment(cfg, dir);
    if (!r.error.empty()) std::cerr << "normflow: " << r.error << '\n';
    std::cout << cfg.name << ": " << (r.status ? std::string(to_string(*r.status)) : std::string("error"))
              << (r.checks_passed ? "" : " (checks failed)") << " -> " << dir.string() << '\n';
    return r.exit_code;
}

int cmd_suite(const fs::path& dir, const std::optional<fs::path>& out, unsigned jobs) {
    const fs::path root = out ? *out : default_output_root();
    try {
        const SuiteReport report = run_suite(dir, root, jobs);
        for (const auto& e : report.entries) {
            std::string status = e.malformed ? "malformed" : e.result.status ? std::string(to_string(*e.result.status)) : "error";
            std::cout << (e.unexpected ? "UNEXPECTED " : "ok         ") << e.name << ": " << status
                      << " exit=" << e.result.exit_code << '\n';
            if (!e.result.error.empty()) std::cout << "    " << e.result.error << '\n';
        }
        std::cout << "report: " << (root / "suite_report.json").string() << '\n';
        return report.exit_code;
    } catch (const std::exception& e) {
        std::cerr << "normflow: " << e.what() << '\n';
        return 1;
    }
}

void write_csv(const fs::path& path, const char* header, const std::vector<std::pair<double, double>>& rows) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << header << '\n';
    char buf[64];
    for (const auto& [a, b] : rows) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", a, b);
        out << buf;
    }
}

int cmd_shoot(int n, double p, double R, const std::optional<fs::path>& out) {
    const RadialProfile prof = lane_emden_shoot(n, p, R);
    std::printf("status %s\nlambda %.17g\nextent %.17g\nv0 %.17g\node_residual %.3e\n",
                std::string(to_string(prof.status())).c_str(), prof.lambda(), prof.extent(), prof.values().front(),
                prof.ode_residual());
    if (out) {
        std::vector<std::pair<double, double>> rows;
        for (std::size_t i = 0; i < prof.radii().size(); ++i) rows.emplace_back(prof.radii()[i], prof.values()[i]);
        write_csv(*out, "r,u", rows);
    }
    return 0;
}

int cmd_eig(const std::string& kind_name, const std::vector<double>& extents, int resolution, int n,
            const std::optional<fs::path>& out) {
    const auto kind = parse_geometry_kind(kind_name);
    if (!kind) throw Error(ErrorCode::InvalidConfig, "unknown geometry kind `" + kind_name + "`");
    if (n == 0) n = (*kind == GeometryKind::RectangleDirichlet || *kind == GeometryKind::Torus2D) ? 2
                    : *kind == GeometryKind::RadialBallDirichlet                                ? 3
                                                                                                : 1;
    const GeometryPtr geom = build_geometry(*kind, extents, n, resolution);
    const Eigenpair eig = principal_eigenpair(geom);
    std::printf("mu1 %.17g\niterations %d\n", eig.mu, eig.iterations);
    if (out) {
        std::ofstream file(*out);
        if (!file) throw Error(ErrorCode::Io, "cannot write " + out->string());
        const auto& xy = geom->coordinates();
        file << (geom->grid_axes() == 2 ? "x,y,u" : geom->is_radial() ? "r,u" : "x,u") << '\n';
        char buf[32];
        for (Eigen::Index i = 0; i < geom->node_count(); ++i) {
            for (int a = 0; a < geom->grid_axes(); ++a) {
                std::snprintf(buf, sizeof buf, "%.17g,", xy(i, a));
                file << buf;
            }
            std::snprintf(buf, sizeof buf, "%.17g\n", eig.phi[i]);
            file << buf;
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Norm-preserving heat flow experiments"};
    app.require_subcommand(1);

    fs::path config_path;
    std::optional<fs::path> out;
    auto* run = app.add_subcommand("run", "Run one experiment config");
    run->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out, "Output directory (default: [output] directory, else $NORMFLOW_OUT/<name>)");

    fs::path suite_dir;
    unsigned jobs = 0;
    auto* suite = app.add_subcommand("suite", "Run every *.ini in a directory");
    suite->add_option("dir", suite_dir, "Config directory")->required();
    suite->add_option("--out", out, "Output root (default: $NORMFLOW_OUT or ./normflow_out)");
    suite->add_option("--jobs", jobs, "Concurrent experiments (0: hardware threads)");

    int n = 0;
    double p = 0.0;
    double R = 1.0;
    auto* shoot = app.add_subcommand("shoot", "Shoot the radial steady-state profile");
    shoot->add_option("--n", n, "Dimension")->required()->check(CLI::PositiveNumber);
    shoot->add_option("--p", p, "Exponent")->required();
    shoot->add_option("--R", R, "Target radius");
    shoot->add_option("--out", out, "Write profile nodes as r,u CSV");

    std::string kind;
    std::vector<double> extents{1.0};
    int resolution = 128;
    auto* eig = app.add_subcommand("eig", "Principal eigenpair of the discrete Laplacian");
    eig->add_option("--kind", kind, "interval | circle | rectangle | torus | ball")->required();
    eig->add_option("--extents", extents, "Lengths (or ball radius)")->delimiter(',');
    eig->add_option("--resolution", resolution, "Cells per axis");
    eig->add_option("--n", n, "Ball dimension");
    eig->add_option("--out", out, "Write the eigenvector in snapshot CSV format");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(config_path, out);
        if (*suite) return cmd_suite(suite_dir, out, jobs);
        if (*shoot) return cmd_shoot(n, p, R, out);
        if (*eig) return cmd_eig(kind, extents, resolution, n, out);
    } catch (const std::exception& e) {
        std::cerr << "normflow: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
