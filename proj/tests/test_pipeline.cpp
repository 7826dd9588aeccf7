#include "pcwqd/error.hpp"
#include "pcwqd/io.hpp"
#include "pcwqd/pipeline.hpp"
#include "pcwqd/synthesis.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>

using namespace pcwqd;
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("pcwqd_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

double value(const json& tree, const std::string& pointer) { return tree.at(json::json_pointer(pointer)).at("value").get<double>(); }

// Structural equality with a relative tolerance on numbers.
void compare(const json& got, const json& want, const std::string& path) {
    CAPTURE(path);
    if (want.is_number()) {
        REQUIRE(got.is_number());
        const double a = got.get<double>(), b = want.get<double>();
        CHECK(std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b)) + 1e-300);
    } else if (want.is_object()) {
        REQUIRE(got.is_object());
        REQUIRE(got.size() == want.size());
        auto gi = got.begin();
        for (auto wi = want.begin(); wi != want.end(); ++wi, ++gi) {
            CHECK(gi.key() == wi.key());
            compare(gi.value(), wi.value(), path + "/" + wi.key());
        }
    } else if (want.is_array()) {
        REQUIRE(got.is_array());
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < want.size(); ++i) compare(got[i], want[i], path + "/" + std::to_string(i));
    } else {
        CHECK(got == want);
    }
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(PCWQD_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST_CASE("scan files round trip exactly") {
    const fs::path dir = scratch("scan");
    ScanTrace tr;
    for (int i = 0; i < 50; ++i) {
        tr.axis.push_back(316e12 + 1e8 * i + 0.1234567);
        tr.values.push_back(1.0 / (1.0 + 0.37 * i));
    }
    tr.step = 1e8;
    tr.meta.gate_voltage = 0.125;
    tr.meta.optical_power = 3e-12;
    io::atomic_write(dir / "scan.csv", io::format_scan(tr));
    const ScanTrace back = io::read_scan(dir / "scan.csv");
    CHECK(back.axis == tr.axis);
    CHECK(back.values == tr.values);
    CHECK(back.meta.gate_voltage == 0.125);
    CHECK(back.meta.optical_power == 3e-12);
    CHECK_FALSE(fs::exists(dir / "scan.csv.tmp"));
}

TEST_CASE("histogram, I-V, RC, plateau and geometry files round trip") {
    const fs::path dir = scratch("files");
    DecaySpec ds;
    ds.n_bins = 300;
    const DecayHistogram h = synthesize_decay(ds);
    io::atomic_write(dir / "h.csv", io::format_histogram(h));
    const DecayHistogram hb = io::read_histogram(dir / "h.csv");
    CHECK(hb.counts == h.counts);
    CHECK(hb.irf == h.irf);
    CHECK(hb.rep_period == h.rep_period);
    CHECK(hb.bin_width() == doctest::Approx(h.bin_width()).epsilon(1e-12));

    const auto iv = synthesize_iv(DiodeParams{}, -1.0, 2.0, 31);
    io::atomic_write(dir / "iv.csv", io::format_iv(iv));
    const auto ivb = io::read_iv(dir / "iv.csv");
    REQUIRE(ivb.size() == iv.size());
    for (std::size_t i = 0; i < iv.size(); ++i) CHECK(ivb[i].i == iv[i].i);

    const auto rc = synthesize_rc(RcDrive{}, VoltageResponse::lorentzian(1e-3), 100.0, 60e6, 20, 0.01, 1);
    io::atomic_write(dir / "rc.csv", io::format_rc(rc));
    const auto rcb = io::read_rc(dir / "rc.csv");
    REQUIRE(rcb.size() == rc.size());
    for (std::size_t i = 0; i < rc.size(); ++i) CHECK(rcb[i].intensity == rc[i].intensity);

    EmitterModel m;
    m.nu0 = 5e9;
    m.gamma_tot = 1e9;
    m.beta = 0.6;
    m.v_on = 0.1;
    m.v_off = 0.12;
    m.stark_slope = 1e12;
    std::vector<double> v{0.09, 0.1, 0.11, 0.12, 0.13}, f;
    for (int i = 0; i < 100; ++i) f.push_back(2e8 * i);
    const PlateauMap map = synthesize_plateau(m, v, f, 0.0, 1);
    io::atomic_write(dir / "p.csv", io::format_plateau(map));
    const PlateauMap mb = io::read_plateau(dir / "p.csv");
    CHECK(mb.v_grid == map.v_grid);
    CHECK(mb.axis_hz == map.axis_hz);
    CHECK(mb.values == map.values);

    PcwGeometry g;
    g.a = 250e-9;
    g.r = 65e-9;
    g.region.rows_per_side = 2;
    const PcwGeometry gb = io::parse_geometry(io::format_geometry(g));
    CHECK(gb.a == doctest::Approx(g.a).epsilon(1e-15));
    CHECK(gb.r == doctest::Approx(g.r).epsilon(1e-15));
    CHECK(gb.region.rows_per_side == 2);
}

TEST_CASE("malformed inputs are validation errors") {
    const fs::path dir = scratch("bad");
    io::atomic_write(dir / "a.csv", "freq,transmission\n1,1\n2,1\n");
    CHECK_THROWS_AS(io::read_scan(dir / "a.csv"), ValidationError);
    io::atomic_write(dir / "b.csv", "frequency_hz,transmission\n1,1\n2,abc\n");
    CHECK_THROWS_AS(io::read_scan(dir / "b.csv"), ValidationError);
    io::atomic_write(dir / "c.csv", "frequency_hz,transmission\n2,1\n1,1\n");
    CHECK_THROWS_AS(io::read_scan(dir / "c.csv"), ValidationError);
    io::atomic_write(dir / "d.csv", "frequency_hz,transmission\n1,1,3\n");
    CHECK_THROWS_AS(io::read_scan(dir / "d.csv"), ValidationError);
    CHECK_THROWS_AS(io::read_scan(dir / "missing.csv"), IoError);
    CHECK_THROWS_AS(io::parse_geometry("a_nm = 248\nlattice = 3\n"), ValidationError);
    CHECK_THROWS_AS(io::parse_geometry("a_nm = 248\nr_nm = 200\n"), ValidationError);
    CHECK_THROWS_AS(io::parse_geometry("rows_per_side = 1.5\n"), ValidationError);
    CHECK(io::parse_geometry("# comment\na_nm = 240 # trailing\n").a == doctest::Approx(240e-9));
}

TEST_CASE("sha256 of known strings") {
    CHECK(io::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("config validation") {
    CHECK_NOTHROW(validate_config(json::object()));
    CHECK_NOTHROW(validate_config(json::parse(R"({"gates": {"max_chi2_red": 4}, "rc": {"law": "first_order_low_pass"}})")));
    CHECK_THROWS_AS(validate_config(json::parse(R"({"nonsense": {}})")), ValidationError);
    CHECK_THROWS_AS(validate_config(json::parse(R"({"gates": {"max_chi": 4}})")), ValidationError);
    CHECK_THROWS_AS(validate_config(json::parse(R"({"gates": {"max_chi2_red": "4"}})")), ValidationError);
    CHECK_THROWS_AS(validate_config(json::parse(R"({"rc": {"law": 3}})")), ValidationError);
    CHECK_THROWS_AS(validate_config(json::parse(R"([1, 2])")), ValidationError);
    for (const auto& [section, keys] : config_schema()) CHECK_FALSE(keys.empty());
}

TEST_CASE("experiment kinds parse") {
    for (const char* k : {"rt-scan", "plateau-map", "lifetime", "iv", "rc-sweep"}) CHECK(to_string(parse_experiment_kind(k)) == k);
    CHECK_THROWS_AS(parse_experiment_kind("scan"), ValidationError);
}

TEST_CASE("rt-scan report on a three-dip trace") {
    const fs::path dir = scratch("three");
    ScanTrace tr;
    for (int i = 0; i < 1200; ++i) tr.axis.push_back(316e12 + 50e6 * i);
    tr.step = 50e6;
    const double centres[] = {316e12 + 10e9, 316e12 + 30e9, 316e12 + 50e9};
    std::mt19937_64 rng(1);
    std::normal_distribution<double> noise(0.0, 0.003);
    for (double nu : tr.axis) {
        double v = 1.0;
        for (double c : centres) {
            EmitterModel m;
            m.gamma_tot = 500e6;
            m.beta = 0.5;
            v *= transmission(m, nu - c);
        }
        tr.values.push_back(v * (1.0 + noise(rng)));
    }
    io::atomic_write(dir / "scan.csv", io::format_scan(tr));
    Experiment e;
    e.kind = ExperimentKind::RtScan;
    e.inputs["scan"] = dir / "scan.csv";
    const Report r = run_experiment(e);
    CHECK(value(r.tree, "/results/statistics/total") == 3);
    CHECK(value(r.tree, "/results/statistics/fitted") == 3);
    const auto& dips = r.tree.at(json::json_pointer("/results/dips"));
    REQUIRE(dips.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(dips[i].at("gamma_rt").at("value").get<double>() == doctest::Approx(500e6).epsilon(0.05));
        CHECK(dips[i].at("gamma_rt").at("unit") == "Hz");
        CHECK(std::abs(dips[i].at("center").at("value").get<double>() - centres[i]) < 50e6);
    }
    CHECK(r.tree.at("provenance").at("inputs").at("scan").at("sha256") == io::sha256_hex(io::read_file(dir / "scan.csv")));
}

TEST_CASE("lifetime report pairs the decay with a dip") {
    Experiment e;
    e.kind = ExperimentKind::Lifetime;
    const Report r = run_experiment(e);
    const auto& row = r.tree.at(json::json_pointer("/results/ratio_table/0"));
    CHECK(row.at("ratio").at("value").get<double>() == doctest::Approx(1.17).epsilon(0.05 / 1.17));
    CHECK(value(r.tree, "/results/decay_fit/transform_limit") == doctest::Approx(460e6).epsilon(0.02));
}

TEST_CASE("rc-sweep report") {
    Experiment e;
    e.kind = ExperimentKind::RcSweep;
    const Report r = run_experiment(e);
    const double tau = value(r.tree, "/results/tau_fits/exponential/tau_rc");
    CHECK(tau == doctest::Approx(0.4e-6).epsilon(0.03));
    CHECK(value(r.tree, "/results/tau_fits/exponential/cutoff") == doctest::Approx(1.0 / (2.0 * M_PI * tau)));
    CHECK(value(r.tree, "/results/tau_fits/exponential/capacitance") == doctest::Approx(57.1e-12).epsilon(0.03));
    const std::string note = r.tree.at(json::json_pointer("/results/cutoff_note")).get<std::string>();
    CHECK(note.find("397.9 kHz") != std::string::npos);
    CHECK(note.find("3.98 MHz") != std::string::npos);
}

TEST_CASE("plateau report recovers the Stark slope and extent") {
    Experiment e;
    e.kind = ExperimentKind::PlateauMap;
    const Report r = run_experiment(e);
    const double slope = value(r.tree, "/results/synthesis/stark_slope");
    CHECK(value(r.tree, "/results/plateau/stark_slope") == doctest::Approx(slope).epsilon(0.01));
    const double extent = value(r.tree, "/results/synthesis/v_off") - value(r.tree, "/results/synthesis/v_on");
    CHECK(std::abs(value(r.tree, "/results/plateau/extent") - extent) <= value(r.tree, "/results/plateau/voltage_step") + 1e-12);
}

TEST_CASE("plateau map below the plateau is flat") {
    EmitterModel m;
    m.gamma_tot = 1e9;
    m.beta = 0.6;
    m.v_on = 0.5;
    m.v_off = 0.6;
    std::vector<double> v{0.1, 0.2, 0.3}, f;
    for (int i = 0; i < 50; ++i) f.push_back(-5e9 + 2e8 * i);
    const PlateauMap map = synthesize_plateau(m, v, f, 0.0, 3);
    for (double x : map.values) CHECK(x == 1.0);
    try {
        extract_plateau(map);
        FAIL("expected InsufficientSpan");
    } catch (const FitError& e) {
        CHECK(e.kind() == FitFailure::InsufficientSpan);
    }
}

TEST_CASE("population synthesis") {
    PopulationSpec spec;
    spec.count = 0;
    spec.shallow_count = 0;
    spec.diffusive_count = 0;
    const SyntheticScan empty = synthesize_scan(spec);
    CHECK(empty.truth.empty());
    for (std::size_t i = 0; i < empty.trace.size(); ++i) {
        const double lambda = 299792458.0 / empty.trace.axis[i];
        CHECK(empty.trace.values[i] > 0.0);
        if (i % 997 == 0) CHECK(empty.trace.values[i] == doctest::Approx(band_envelope(spec.band, lambda)).epsilon(0.03));
    }

    PopulationSpec s1;
    s1.seed = 42;
    const SyntheticScan a = synthesize_scan(s1), b = synthesize_scan(s1);
    CHECK(a.trace.values == b.trace.values);
    CHECK(a.truth.size() == 79);

    PopulationSpec crowded;
    crowded.count = 400;
    crowded.shallow_count = 0;
    crowded.diffusive_count = 0;
    CHECK_FALSE(synthesize_scan(crowded).warnings.empty());
}

TEST_CASE("reports are deterministic and carry units") {
    for (auto kind : {ExperimentKind::RtScan, ExperimentKind::Iv}) {
        Experiment e;
        e.kind = kind;
        e.seed = 77;
        const Report a = run_experiment(e), b = run_experiment(e);
        CHECK(a.json() == b.json());
        CHECK(a.text() == b.text());
        CHECK(a.plots == b.plots);

        const fs::path d1 = scratch("det1"), d2 = scratch("det2");
        write_report(a, d1, "r");
        write_report(b, d2, "r");
        CHECK(io::read_file(d1 / "r.json") == io::read_file(d2 / "r.json"));
        CHECK(io::read_file(d1 / "r.txt") == io::read_file(d2 / "r.txt"));

        std::function<void(const json&)> units = [&](const json& t) {
            if (t.is_object()) {
                if (t.contains("value") && t.at("value").is_number()) CHECK(t.contains("unit"));
                for (const auto& [k, v] : t.items()) units(v);
            } else if (t.is_array()) {
                for (const auto& v : t) units(v);
            }
        };
        units(a.tree.at("results"));
    }
}

TEST_CASE("golden reports per experiment kind") {
    const bool update = std::getenv("PCWQD_UPDATE_GOLDEN") != nullptr;
    for (const char* name : {"rt-scan", "plateau-map", "lifetime", "iv", "rc-sweep"}) {
        Experiment e;
        e.kind = parse_experiment_kind(name);
        e.seed = 1;
        const Report r = run_experiment(e);
        const fs::path golden = fs::path(PCWQD_GOLDEN_DIR) / (std::string(name) + ".json");
        if (update) io::atomic_write(golden, r.json());
        CAPTURE(name);
        REQUIRE(fs::exists(golden));
        const json want = json::parse(io::read_file(golden));
        CHECK(want.at("schema_version") == kReportSchemaVersion);
        compare(r.tree, want, "");
    }
}

TEST_CASE("keep-going records fit failures") {
    const fs::path dir = scratch("keep");
    io::atomic_write(dir / "iv.csv", io::format_iv(synthesize_iv(DiodeParams{}, -1.5, 0.0, 30)));
    Experiment e;
    e.kind = ExperimentKind::Iv;
    e.inputs["iv"] = dir / "iv.csv";
    CHECK_THROWS_AS(run_experiment(e), FitError);
    e.keep_going = true;
    const Report r = run_experiment(e);
    CHECK_FALSE(r.errors.empty());
}

TEST_CASE("command line exit codes") {
    const fs::path dir = scratch("cli");
    const std::string out = " --out-dir " + dir.string();
    CHECK(run_cli(out + " simulate iv") == 0);
    CHECK(fs::exists(dir / "iv.csv"));
    CHECK(run_cli(out + " fit-iv " + (dir / "iv.csv").string()) == 0);
    CHECK(fs::exists(dir / "iv.json"));
    CHECK(run_cli(out + " geometry solve --preset two-row") == 0);
    CHECK(run_cli(out + " geometry solve --preset nowhere") == 2);
    CHECK(run_cli(out + " geometry solve --fraction 0.01 --d-max-nm 20") == 3);
    io::atomic_write(dir / "bad.json", R"({"gates": {"bogus": 1}})");
    CHECK(run_cli(out + " --config " + (dir / "bad.json").string() + " report iv") == 2);
    io::atomic_write(dir / "rev.csv", io::format_iv(synthesize_iv(DiodeParams{}, -1.5, 0.0, 30)));
    CHECK(run_cli(out + " fit-iv " + (dir / "rev.csv").string()) == 3);
    CHECK(run_cli(out + " --keep-going fit-iv " + (dir / "rev.csv").string()) == 0);
    CHECK(run_cli(out + " report no-such-kind") == 2);
    CHECK(run_cli(out + " frobnicate") == 2);
}
