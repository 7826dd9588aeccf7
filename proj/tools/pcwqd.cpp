#include "pcwqd/error.hpp"
#include "pcwqd/io.hpp"
#include "pcwqd/pcw_geometry.hpp"
#include "pcwqd/pipeline.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace pcwqd;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitFit = 3;

struct Globals {
    std::uint64_t seed = 1;
    std::string config_path;
    std::string out_dir = ".";
    bool keep_going = false;
};

nlohmann::ordered_json load_config(const Globals& g) {
    if (g.config_path.empty()) return nlohmann::ordered_json::object();
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(io::read_file(g.config_path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(fmt::format("{}: {}", g.config_path, e.what()));
    }
    validate_config(j);
    return j;
}

int run(const Globals& g, ExperimentKind kind, std::map<std::string, fs::path> inputs) {
    Experiment e;
    e.kind = kind;
    e.inputs = std::move(inputs);
    e.seed = g.seed;
    e.config = load_config(g);
    e.keep_going = g.keep_going;
    const Report r = run_experiment(e);
    write_report(r, g.out_dir, to_string(kind));
    std::fputs(r.text().c_str(), stdout);
    for (const auto& err : r.errors) std::fprintf(stderr, "warning: %s\n", err.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Waveguide-QED emitter spectroscopy analysis"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "Random seed for synthesis")->capture_default_str();
    app.add_option("--config", g.config_path, "JSON config with per-module overrides")->check(CLI::ExistingFile);
    app.add_option("--out-dir", g.out_dir, "Directory for reports and generated files")->capture_default_str();
    app.add_flag("--keep-going", g.keep_going, "Record fit failures in the report instead of aborting");

    std::string kind_name;
    auto* simulate = app.add_subcommand("simulate", "Write synthetic input files for an experiment kind");
    simulate->add_option("kind", kind_name, "rt-scan | plateau-map | lifetime | iv | rc-sweep")->required();

    std::string scan_path, geometry_path;
    auto* fit_scan = app.add_subcommand("fit-scan", "Detect and fit transmission dips in a scan CSV");
    fit_scan->add_option("scan", scan_path, "frequency_hz,transmission CSV")->required()->check(CLI::ExistingFile);
    fit_scan->add_option("--geometry", geometry_path, "Geometry spec file")->check(CLI::ExistingFile);

    std::string hist_path, pair_scan;
    auto* fit_lifetime = app.add_subcommand("fit-lifetime", "Fit a decay histogram CSV");
    fit_lifetime->add_option("histogram", hist_path, "time_s,counts,irf_counts CSV")->required()->check(CLI::ExistingFile);
    fit_lifetime->add_option("--scan", pair_scan, "Scan CSV providing the paired RT linewidth")->check(CLI::ExistingFile);

    std::string iv_path;
    auto* fit_iv_cmd = app.add_subcommand("fit-iv", "Fit the diode model to an I-V CSV");
    fit_iv_cmd->add_option("iv", iv_path, "v_volts,i_amps CSV")->required()->check(CLI::ExistingFile);

    std::string rc_path;
    auto* fit_rc = app.add_subcommand("fit-rc", "Fit the RC time constant to an intensity-versus-frequency CSV");
    fit_rc->add_option("rc", rc_path, "f_ac_hz,intensity_counts_per_s CSV")->required()->check(CLI::ExistingFile);

    auto* geometry_cmd = app.add_subcommand("geometry", "Surface-distance geometry");
    geometry_cmd->require_subcommand(1);
    auto* solve = geometry_cmd->add_subcommand("solve", "Distance d whose area fraction equals the target");
    double fraction = 51.0 / 79.0;
    double d_max_nm = 0.0;
    std::string preset;
    std::string solve_geometry;
    solve->add_option("--fraction", fraction, "Target area fraction")->capture_default_str();
    solve->add_option("--geometry", solve_geometry, "Geometry spec file")->check(CLI::ExistingFile);
    solve->add_option("--preset", preset, "core | two-row | three-row");
    solve->add_option("--d-max-nm", d_max_nm, "Upper bound on d (nm)");

    std::vector<std::string> input_specs;
    auto* report = app.add_subcommand("report", "Run a full experiment (synthesized unless inputs are given)");
    report->add_option("kind", kind_name, "rt-scan | plateau-map | lifetime | iv | rc-sweep")->required();
    report->add_option("--input", input_specs, "role=path, e.g. scan=scan.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        if (simulate->parsed()) {
            const auto paths = simulate_inputs(parse_experiment_kind(kind_name), load_config(g), g.seed, g.out_dir);
            for (const auto& p : paths) std::printf("%s\n", p.string().c_str());
            return 0;
        }
        if (fit_scan->parsed()) {
            std::map<std::string, fs::path> in{{"scan", scan_path}};
            if (!geometry_path.empty()) in["geometry"] = geometry_path;
            return run(g, ExperimentKind::RtScan, in);
        }
        if (fit_lifetime->parsed()) {
            std::map<std::string, fs::path> in{{"histogram", hist_path}};
            if (!pair_scan.empty()) in["scan"] = pair_scan;
            return run(g, ExperimentKind::Lifetime, in);
        }
        if (fit_iv_cmd->parsed()) return run(g, ExperimentKind::Iv, {{"iv", iv_path}});
        if (fit_rc->parsed()) return run(g, ExperimentKind::RcSweep, {{"rc", rc_path}});
        if (solve->parsed()) {
            PcwGeometry geo;
            std::string region = "core";
            if (!solve_geometry.empty()) {
                geo = io::read_geometry(solve_geometry);
                region = solve_geometry;
            } else if (!preset.empty()) {
                bool found = false;
                for (const auto& [name, pg] : region_presets()) {
                    if (name == preset) {
                        geo = pg;
                        found = true;
                    }
                }
                if (!found) throw ValidationError(fmt::format("unknown region preset '{}'", preset));
                region = preset;
            }
            const std::optional<double> d_max = d_max_nm > 0.0 ? std::optional<double>(d_max_nm * 1e-9) : std::nullopt;
            const double d = solve_distance(geo, fraction, d_max);
            std::printf("region: %s\nrows_per_side: %d\nfraction: %.6f\ndistance: %.4f nm\n", region.c_str(),
                        geo.region.rows_per_side, fraction, d * 1e9);
            return 0;
        }
        if (report->parsed()) {
            std::map<std::string, fs::path> in;
            for (const auto& spec : input_specs) {
                const auto eq = spec.find('=');
                if (eq == std::string::npos) throw ValidationError(fmt::format("--input '{}' is not role=path", spec));
                const fs::path p = spec.substr(eq + 1);
                if (!fs::exists(p)) throw IoError("no such input file: " + p.string());
                in[spec.substr(0, eq)] = p;
            }
            return run(g, parse_experiment_kind(kind_name), in);
        }
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return kExitValidation;
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return kExitValidation;
    } catch (const FitError& e) {
        std::fprintf(stderr, "fit failure: %s\n", e.what());
        return kExitFit;
    }
    return 0;
}
