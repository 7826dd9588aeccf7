#include "pcwqd/diode_iv.hpp"
#include "pcwqd/error.hpp"
#include "pcwqd/lifetime_fit.hpp"
#include "pcwqd/lineshape_fit.hpp"
#include "pcwqd/pcw_geometry.hpp"
#include "pcwqd/pipeline.hpp"
#include "pcwqd/rc_switching.hpp"
#include "pcwqd/synthesis.hpp"
#include "pcwqd/wgqed_model.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <string>
#include <vector>

namespace py = pybind11;
using namespace pcwqd;

namespace {

ScanTrace make_trace(std::vector<double> axis, std::vector<double> values) {
    ScanTrace t;
    t.axis = std::move(axis);
    t.values = std::move(values);
    if (t.axis.size() > 1) t.step = (t.axis.back() - t.axis.front()) / double(t.axis.size() - 1);
    t.validate();
    return t;
}

std::vector<DipFit> fit_scan(std::vector<double> axis, std::vector<double> values, double min_prominence,
                             unsigned threads) {
    const ScanTrace t = make_trace(std::move(axis), std::move(values));
    DetectOptions opts;
    opts.min_prominence = min_prominence;
    return fit_dips(t, detect_dips(t, opts), {}, threads);
}

DecayHistogram make_histogram(std::vector<double> bin_edges, std::vector<double> counts, std::vector<double> irf,
                              double rep_period) {
    DecayHistogram h;
    h.bin_edges = std::move(bin_edges);
    h.counts = std::move(counts);
    h.irf = std::move(irf);
    h.rep_period = rep_period;
    h.validate();
    return h;
}

std::vector<IvPoint> iv_points(const std::vector<double>& v, const std::vector<double>& i) {
    if (v.size() != i.size()) throw ValidationError("voltage and current arrays differ in length");
    std::vector<IvPoint> out;
    for (std::size_t k = 0; k < v.size(); ++k) out.push_back({v[k], i[k]});
    return out;
}

std::string run(const std::string& kind, std::uint64_t seed, const std::string& config_json,
                const std::map<std::string, std::filesystem::path>& inputs, bool keep_going) {
    Experiment e;
    e.kind = parse_experiment_kind(kind);
    e.seed = seed;
    e.inputs = inputs;
    e.keep_going = keep_going;
    if (!config_json.empty()) e.config = nlohmann::ordered_json::parse(config_json);
    return run_experiment(e).json();
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.attr("__version__") = PCWQD_VERSION;

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<FitError>(m, "FitError", PyExc_RuntimeError);

    py::class_<EmitterModel>(m, "EmitterModel")
        .def(py::init<>())
        .def(py::init([](double nu0, double gamma_tot, double beta, double fano_amp, double fano_phase) {
                 EmitterModel e;
                 e.nu0 = nu0;
                 e.gamma_tot = gamma_tot;
                 e.beta = beta;
                 e.fano_amp = fano_amp;
                 e.fano_phase = fano_phase;
                 e.validate();
                 return e;
             }),
             py::arg("nu0") = 0.0, py::arg("gamma_tot") = 1e9, py::arg("beta") = 0.0, py::arg("fano_amp") = 0.0,
             py::arg("fano_phase") = 0.0)
        .def_readwrite("nu0", &EmitterModel::nu0)
        .def_readwrite("gamma_tot", &EmitterModel::gamma_tot)
        .def_readwrite("beta", &EmitterModel::beta)
        .def_readwrite("fano_amp", &EmitterModel::fano_amp)
        .def_readwrite("fano_phase", &EmitterModel::fano_phase)
        .def_readwrite("stark_slope", &EmitterModel::stark_slope)
        .def_readwrite("v_on", &EmitterModel::v_on)
        .def_readwrite("v_off", &EmitterModel::v_off);

    m.def("transmission", [](const EmitterModel& e, double detuning) {
        e.validate();
        return transmission(e, detuning);
    });
    m.def("transmission_spectrum",
          [](const EmitterModel& e, const std::vector<double>& axis) { return transmission_spectrum(e, axis).values; });

    py::class_<DipFit>(m, "DipFit")
        .def_readonly("center", &DipFit::center)
        .def_readonly("gamma_rt", &DipFit::gamma_rt)
        .def_readonly("beta_eff", &DipFit::beta_eff)
        .def_readonly("fano_amp", &DipFit::fano_amp)
        .def_readonly("fano_phase", &DipFit::fano_phase)
        .def_readonly("chi2_red", &DipFit::chi2_red)
        .def_readonly("depth", &DipFit::depth)
        .def_readonly("converged", &DipFit::converged)
        .def_property_readonly("gamma_rt_sigma", [](const DipFit& f) { return f.sigma.gamma_rt; })
        .def_property_readonly("fwhm", [](const DipFit& f) { return fwhm_symmetric(f); });

    m.def("fit_scan", &fit_scan, py::arg("axis_hz"), py::arg("values"), py::arg("min_prominence") = 0.02,
          py::arg("threads") = 0u, "Detect and fit every dip in a transmission scan.");

    py::class_<LinewidthSummary>(m, "LinewidthSummary")
        .def_readonly("total", &LinewidthSummary::total)
        .def_readonly("fitted", &LinewidthSummary::fitted)
        .def_readonly("rejected_shallow", &LinewidthSummary::rejected_shallow)
        .def_readonly("rejected_noisy", &LinewidthSummary::rejected_noisy)
        .def_readonly("min_gamma", &LinewidthSummary::min_gamma)
        .def_readonly("max_gamma", &LinewidthSummary::max_gamma)
        .def_readonly("median_gamma", &LinewidthSummary::median_gamma);
    m.def("linewidth_statistics", [](const std::vector<DipFit>& fits) { return linewidth_statistics(fits); });

    m.def(
        "synthesize_scan",
        [](std::size_t count, std::uint64_t seed) {
            PopulationSpec spec;
            spec.count = count;
            spec.seed = seed;
            if (spec.shallow_count + spec.diffusive_count > count) spec.shallow_count = spec.diffusive_count = 0;
            const SyntheticScan s = synthesize_scan(spec);
            return py::make_tuple(s.trace.axis, s.trace.values);
        },
        py::arg("count") = 79, py::arg("seed") = 1);

    py::class_<DecayFit>(m, "DecayFit")
        .def_readonly("gamma", &DecayFit::gamma)
        .def_readonly("amplitude", &DecayFit::amplitude)
        .def_readonly("t0", &DecayFit::t0)
        .def_readonly("background", &DecayFit::background)
        .def_readonly("transform_limit", &DecayFit::transform_limit)
        .def_readonly("transform_limit_sigma", &DecayFit::transform_limit_sigma)
        .def_property_readonly("lifetime", &DecayFit::lifetime);

    m.def(
        "fit_decay",
        [](std::vector<double> edges, std::vector<double> counts, std::vector<double> irf, double rep_period) {
            return fit_decay(make_histogram(std::move(edges), std::move(counts), std::move(irf), rep_period));
        },
        py::arg("bin_edges"), py::arg("counts"), py::arg("irf"), py::arg("rep_period") = 1.0 / 72.6e6);
    m.def(
        "synthesize_decay",
        [](double gamma, std::uint64_t seed) {
            DecaySpec spec;
            spec.gamma = gamma;
            spec.seed = seed;
            const DecayHistogram h = synthesize_decay(spec);
            return py::make_tuple(h.bin_edges, h.counts, h.irf);
        },
        py::arg("gamma"), py::arg("seed") = 1);
    m.def(
        "transform_ratio",
        [](double gamma_rt, double sigma_rt, double gamma_tl, double sigma_tl) {
            const Ratio r = transform_ratio(gamma_rt, sigma_rt, gamma_tl, sigma_tl);
            return py::make_tuple(r.value, r.sigma);
        },
        py::arg("gamma_rt"), py::arg("sigma_rt"), py::arg("gamma_tl"), py::arg("sigma_tl"));

    py::class_<DiodeParams>(m, "DiodeParams")
        .def(py::init<>())
        .def_readwrite("i_sat", &DiodeParams::i_sat)
        .def_readwrite("n_ideality", &DiodeParams::n_ideality)
        .def_readwrite("temperature", &DiodeParams::temperature)
        .def_readwrite("r_s", &DiodeParams::r_s)
        .def_readwrite("r_p", &DiodeParams::r_p);
    m.def("diode_current", &diode_current, py::arg("params"), py::arg("v"));
    m.def(
        "fit_iv",
        [](const std::vector<double>& v, const std::vector<double>& i) { return fit_iv(iv_points(v, i)).params; },
        py::arg("v"), py::arg("i"));

    py::class_<RcDrive>(m, "RcDrive")
        .def(py::init<>())
        .def_readwrite("v_ac", &RcDrive::v_ac)
        .def_readwrite("v_dc", &RcDrive::v_dc)
        .def_readwrite("tau_rc", &RcDrive::tau_rc)
        .def_readwrite("i0", &RcDrive::i0);
    m.def(
        "switching_intensity",
        [](const RcDrive& d, double f_ac, double width_v) {
            return eq1_intensity(d, VoltageResponse::lorentzian(width_v), f_ac);
        },
        py::arg("drive"), py::arg("f_ac"), py::arg("width_v") = 1e-3);
    m.def(
        "fit_tau_rc",
        [](const std::vector<double>& f, const std::vector<double>& intensity, const RcDrive& start, double width_v) {
            if (f.size() != intensity.size()) throw ValidationError("frequency and intensity arrays differ in length");
            std::vector<RcPoint> pts;
            for (std::size_t k = 0; k < f.size(); ++k) pts.push_back({f[k], intensity[k]});
            const TauFit t = fit_tau_rc(pts, start, VoltageResponse::lorentzian(width_v));
            return py::dict(py::arg("tau_rc") = t.tau_rc, py::arg("tau_sigma") = t.tau_sigma, py::arg("i0") = t.i0,
                            py::arg("cutoff_hz") = t.cutoff_hz);
        },
        py::arg("f_ac"), py::arg("intensity"), py::arg("start") = RcDrive{}, py::arg("width_v") = 1e-3);
    m.def("cutoff_frequency", &cutoff_frequency);
    m.def("capacitance", &capacitance, py::arg("tau_rc"), py::arg("r_s"));

    py::class_<PcwGeometry>(m, "PcwGeometry")
        .def(py::init([](double a, double r, int rows) {
                 PcwGeometry g;
                 g.a = a;
                 g.r = r;
                 g.region.rows_per_side = rows;
                 g.validate();
                 return g;
             }),
             py::arg("a") = 248e-9, py::arg("r") = 70e-9, py::arg("rows_per_side") = 1)
        .def_readonly("a", &PcwGeometry::a)
        .def_readonly("r", &PcwGeometry::r)
        .def("max_distance", &PcwGeometry::max_distance);
    m.def("region_presets", [] {
        py::dict out;
        for (const auto& [name, g] : region_presets()) out[py::str(name)] = g;
        return out;
    });
    m.def("area_fraction", &area_fraction, py::arg("geometry"), py::arg("d"));
    m.def(
        "monte_carlo_fraction",
        [](const PcwGeometry& g, double d, std::uint64_t n, std::uint64_t seed) {
            const MonteCarloFraction r = monte_carlo_fraction(g, d, n, seed);
            return py::make_tuple(r.f_hat, r.sigma);
        },
        py::arg("geometry"), py::arg("d"), py::arg("n_samples") = 1000000, py::arg("seed") = 1);
    m.def("solve_distance", &solve_distance, py::arg("geometry"), py::arg("f_target"), py::arg("d_max") = py::none());

    m.def("run_experiment", &run, py::arg("kind"), py::arg("seed") = 1, py::arg("config") = "",
          py::arg("inputs") = std::map<std::string, std::filesystem::path>{}, py::arg("keep_going") = false,
          "Run one experiment and return the JSON report.");
}
