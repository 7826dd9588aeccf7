#include "pcwqd/pipeline.hpp"

#include "pcwqd/constants.hpp"
#include "pcwqd/error.hpp"
#include "pcwqd/io.hpp"
#include "pcwqd/lifetime_fit.hpp"
#include "pcwqd/lineshape_fit.hpp"
#include "pcwqd/pcw_geometry.hpp"
#include "pcwqd/synthesis.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#ifndef PCWQD_VERSION
#define PCWQD_VERSION "0.0.0"
#endif

namespace pcwqd {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string_view to_string(ExperimentKind k) {
    switch (k) {
    case ExperimentKind::RtScan: return "rt-scan";
    case ExperimentKind::PlateauMap: return "plateau-map";
    case ExperimentKind::Lifetime: return "lifetime";
    case ExperimentKind::Iv: return "iv";
    case ExperimentKind::RcSweep: return "rc-sweep";
    }
    return "unknown";
}

ExperimentKind parse_experiment_kind(std::string_view s) {
    for (auto k : {ExperimentKind::RtScan, ExperimentKind::PlateauMap, ExperimentKind::Lifetime, ExperimentKind::Iv,
                   ExperimentKind::RcSweep}) {
        if (to_string(k) == s) return k;
    }
    throw ValidationError(fmt::format("unknown experiment kind '{}'", s));
}

const std::map<std::string, std::vector<std::string>>& config_schema() {
    static const std::map<std::string, std::vector<std::string>> schema{
        {"run", {"threads"}},
        {"detect",
         {"min_prominence", "min_width_hz", "baseline_window_hz", "smoothing", "detection_sigma", "window_widths",
          "min_window"}},
        {"gates", {"min_depth_snr", "max_chi2_red", "max_rel_sigma_gamma"}},
        {"population",
         {"count", "lambda_min_m", "lambda_max_m", "step_hz", "gamma_min_hz", "gamma_max_hz", "beta_min", "beta_max",
          "fano_amp_max", "noise", "shallow_count", "diffusive_count", "shallow_snr_min", "shallow_snr_max",
          "shallow_gamma_min_hz", "diffusion_min", "diffusion_max"}},
        {"band_edge", {"lambda_c_m", "suppression_db", "edge_width_m"}},
        {"geometry", {"a_m", "r_m", "rows_per_side", "strip_halfwidth_m", "d_max_m"}},
        {"purcell", {"gamma_hom_hz", "lambda_ref_m", "cap"}},
        {"decay",
         {"gamma_per_s", "amplitude", "t0_s", "background", "irf_sigma_s", "irf_center_s", "bin_width_s", "n_bins",
          "rep_period_s", "min_total_counts", "min_amplitude_significance"}},
        {"pairing", {"gamma_rt_hz", "beta", "noise", "step_hz"}},
        {"diode",
         {"i_sat_a", "n_ideality", "temperature_k", "r_s_ohm", "r_p_ohm", "v_min_v", "v_max_v", "n_points",
          "noise_floor_a"}},
        {"rc",
         {"v_ac_v", "v_dc_v", "tau_rc_s", "i0_counts_per_s", "width_v", "f_min_hz", "f_max_hz", "n_points", "noise",
          "r_s_ohm", "law"}},
        {"plateau",
         {"nu0_hz", "gamma_tot_hz", "beta", "stark_slope_hz_per_v", "v_on_v", "v_off_v", "v_min_v", "v_max_v",
          "v_step_v", "span_hz", "step_hz", "noise", "min_prominence"}},
    };
    return schema;
}

void validate_config(const ojson& config) {
    if (!config.is_object()) throw ValidationError("config must be a JSON object");
    const auto& schema = config_schema();
    for (const auto& [section, body] : config.items()) {
        const auto it = schema.find(section);
        if (it == schema.end()) throw ValidationError(fmt::format("config: unknown section '{}'", section));
        if (!body.is_object()) throw ValidationError(fmt::format("config: section '{}' must be an object", section));
        for (const auto& [key, value] : body.items()) {
            if (std::find(it->second.begin(), it->second.end(), key) == it->second.end()) {
                throw ValidationError(fmt::format("config: unknown key '{}.{}'", section, key));
            }
            const bool is_string_key = section == "rc" && key == "law";
            if (is_string_key ? !value.is_string() : !value.is_number()) {
                throw ValidationError(fmt::format("config: '{}.{}' must be a {}", section, key,
                                                  is_string_key ? "string" : "number"));
            }
        }
    }
}

namespace {

// ---- config access -------------------------------------------------------------------------

struct Config {
    const ojson& j;

    double num(std::string_view section, std::string_view key, double fallback) const {
        const auto s = j.find(section);
        if (s == j.end()) return fallback;
        const auto v = s->find(key);
        return v == s->end() ? fallback : v->get<double>();
    }
    std::size_t count(std::string_view section, std::string_view key, std::size_t fallback) const {
        const double v = num(section, key, double(fallback));
        if (v < 0.0 || v != std::floor(v)) {
            throw ValidationError(fmt::format("config: '{}.{}' must be a non-negative integer", section, key));
        }
        return std::size_t(v);
    }
    std::string str(std::string_view section, std::string_view key, std::string fallback) const {
        const auto s = j.find(section);
        if (s == j.end()) return fallback;
        const auto v = s->find(key);
        return v == s->end() ? fallback : v->get<std::string>();
    }
};

DetectOptions detect_options(const Config& c) {
    DetectOptions o;
    o.min_prominence = c.num("detect", "min_prominence", o.min_prominence);
    o.min_width_hz = c.num("detect", "min_width_hz", o.min_width_hz);
    o.baseline_window_hz = c.num("detect", "baseline_window_hz", o.baseline_window_hz);
    o.smoothing = c.count("detect", "smoothing", o.smoothing);
    o.detection_sigma = c.num("detect", "detection_sigma", o.detection_sigma);
    o.window_widths = c.num("detect", "window_widths", o.window_widths);
    o.min_window = std::max<std::size_t>(7, c.count("detect", "min_window", o.min_window));
    return o;
}

QualityGates gates(const Config& c) {
    QualityGates g;
    g.min_depth_snr = c.num("gates", "min_depth_snr", g.min_depth_snr);
    g.max_chi2_red = c.num("gates", "max_chi2_red", g.max_chi2_red);
    g.max_rel_sigma_gamma = c.num("gates", "max_rel_sigma_gamma", g.max_rel_sigma_gamma);
    return g;
}

BandEdgeModel band_edge(const Config& c) {
    BandEdgeModel b;
    b.lambda_c = c.num("band_edge", "lambda_c_m", b.lambda_c);
    b.suppression_db = c.num("band_edge", "suppression_db", b.suppression_db);
    b.edge_width = c.num("band_edge", "edge_width_m", b.edge_width);
    b.validate();
    return b;
}

PopulationSpec population(const Config& c, std::uint64_t seed) {
    PopulationSpec p;
    p.count = c.count("population", "count", p.count);
    p.lambda_min = c.num("population", "lambda_min_m", p.lambda_min);
    p.lambda_max = c.num("population", "lambda_max_m", p.lambda_max);
    p.step_hz = c.num("population", "step_hz", p.step_hz);
    p.gamma_min = c.num("population", "gamma_min_hz", p.gamma_min);
    p.gamma_max = c.num("population", "gamma_max_hz", p.gamma_max);
    p.beta_min = c.num("population", "beta_min", p.beta_min);
    p.beta_max = c.num("population", "beta_max", p.beta_max);
    p.fano_amp_max = c.num("population", "fano_amp_max", p.fano_amp_max);
    p.noise = c.num("population", "noise", p.noise);
    p.shallow_count = c.count("population", "shallow_count", p.shallow_count);
    p.diffusive_count = c.count("population", "diffusive_count", p.diffusive_count);
    p.shallow_snr_min = c.num("population", "shallow_snr_min", p.shallow_snr_min);
    p.shallow_snr_max = c.num("population", "shallow_snr_max", p.shallow_snr_max);
    p.shallow_gamma_min = c.num("population", "shallow_gamma_min_hz", p.shallow_gamma_min);
    p.diffusion_min = c.num("population", "diffusion_min", p.diffusion_min);
    p.diffusion_max = c.num("population", "diffusion_max", p.diffusion_max);
    p.band = band_edge(c);
    p.seed = seed;
    p.validate();
    return p;
}

PcwGeometry geometry(const Config& c, const Experiment& e) {
    PcwGeometry g;
    if (const auto it = e.inputs.find("geometry"); it != e.inputs.end()) g = io::read_geometry(it->second);
    g.a = c.num("geometry", "a_m", g.a);
    g.r = c.num("geometry", "r_m", g.r);
    g.region.rows_per_side = int(c.count("geometry", "rows_per_side", std::size_t(g.region.rows_per_side)));
    g.region.strip_halfwidth = c.num("geometry", "strip_halfwidth_m", g.region.strip_halfwidth);
    g.validate();
    return g;
}

DecaySpec decay_spec(const Config& c, std::uint64_t seed) {
    DecaySpec d;
    d.gamma = c.num("decay", "gamma_per_s", d.gamma);
    d.amplitude = c.num("decay", "amplitude", d.amplitude);
    d.t0 = c.num("decay", "t0_s", d.t0);
    d.background = c.num("decay", "background", d.background);
    d.irf_sigma = c.num("decay", "irf_sigma_s", d.irf_sigma);
    d.irf_center = c.num("decay", "irf_center_s", d.irf_center);
    d.bin_width = c.num("decay", "bin_width_s", d.bin_width);
    d.n_bins = c.count("decay", "n_bins", d.n_bins);
    d.rep_period = c.num("decay", "rep_period_s", d.rep_period);
    d.seed = seed;
    return d;
}

DiodeParams diode_params(const Config& c) {
    DiodeParams p;
    p.i_sat = c.num("diode", "i_sat_a", p.i_sat);
    p.n_ideality = c.num("diode", "n_ideality", p.n_ideality);
    p.temperature = c.num("diode", "temperature_k", p.temperature);
    p.r_s = c.num("diode", "r_s_ohm", p.r_s);
    p.r_p = c.num("diode", "r_p_ohm", p.r_p);
    p.validate();
    return p;
}

AttenuationLaw parse_law(const std::string& s) {
    if (s == "exponential") return AttenuationLaw::Exponential;
    if (s == "first_order_low_pass") return AttenuationLaw::FirstOrderLowPass;
    throw ValidationError(fmt::format("config: unknown attenuation law '{}'", s));
}

RcDrive rc_drive(const Config& c) {
    RcDrive d;
    d.v_ac = c.num("rc", "v_ac_v", d.v_ac);
    d.v_dc = c.num("rc", "v_dc_v", d.v_dc);
    d.tau_rc = c.num("rc", "tau_rc_s", d.tau_rc);
    d.i0 = c.num("rc", "i0_counts_per_s", 1e4);
    d.law = parse_law(c.str("rc", "law", "exponential"));
    d.validate();
    return d;
}

struct PlateauSetup {
    EmitterModel emitter;
    std::vector<double> v_grid, axis;
    double noise;
};

PlateauSetup plateau_setup(const Config& c) {
    PlateauSetup s;
    EmitterModel& m = s.emitter;
    m.nu0 = c.num("plateau", "nu0_hz", constants::wavelength_to_frequency(947e-9));
    m.gamma_tot = c.num("plateau", "gamma_tot_hz", 500e6);
    m.beta = c.num("plateau", "beta", 0.6);
    m.stark_slope = c.num("plateau", "stark_slope_hz_per_v", 1e12);
    m.v_on = c.num("plateau", "v_on_v", 0.10);
    m.v_off = c.num("plateau", "v_off_v", 0.14);
    m.validate();
    const double v_min = c.num("plateau", "v_min_v", 0.08);
    const double v_max = c.num("plateau", "v_max_v", 0.16);
    const double v_step = c.num("plateau", "v_step_v", 1e-3);
    if (!(v_step > 0.0 && v_max > v_min)) throw ValidationError("config: plateau voltage grid is empty");
    for (std::size_t k = 0;; ++k) {
        const double v = v_min + double(k) * v_step;
        if (v > v_max + 1e-9 * v_step) break;
        s.v_grid.push_back(v);
    }
    const double shift = m.stark_slope * (m.v_off - m.v_on);
    const double span = c.num("plateau", "span_hz", std::abs(shift) + 20.0 * m.gamma_tot);
    const double step = c.num("plateau", "step_hz", 100e6);
    if (!(step > 0.0 && span > step)) throw ValidationError("config: plateau frequency grid is empty");
    const double lo = m.nu0 + std::min(0.0, shift) - 0.5 * (span - std::abs(shift));
    const auto n = std::size_t(span / step) + 1;
    for (std::size_t i = 0; i < n; ++i) s.axis.push_back(lo + double(i) * step);
    s.noise = c.num("plateau", "noise", 0.005);
    return s;
}

std::vector<RcPoint> rc_synth(const Config& c, std::uint64_t seed) {
    return synthesize_rc(rc_drive(c), VoltageResponse::lorentzian(c.num("rc", "width_v", 1e-3)),
                         c.num("rc", "f_min_hz", 100.0), c.num("rc", "f_max_hz", 60e6), c.count("rc", "n_points", 61),
                         c.num("rc", "noise", 0.01), seed);
}

std::vector<IvPoint> iv_synth(const Config& c) {
    return synthesize_iv(diode_params(c), c.num("diode", "v_min_v", -1.5), c.num("diode", "v_max_v", 2.0),
                         c.count("diode", "n_points", 176));
}

// ---- report helpers ------------------------------------------------------------------------

ojson q(double v, std::string_view unit) {
    ojson o = ojson::object();
    if (std::isfinite(v)) {
        o["value"] = v;
    } else {
        o["value"] = nullptr;
    }
    o["unit"] = std::string(unit);
    return o;
}

ojson qs(double v, double sigma, std::string_view unit) {
    ojson o = q(v, unit);
    o["sigma"] = std::isfinite(sigma) ? ojson(sigma) : ojson(nullptr);
    return o;
}

ojson count_q(std::size_t n) { return q(double(n), "1"); }

std::string num(double v) { return fmt::format("{:.10g}", v); }

std::string plot_file(std::string_view x, std::string_view y, std::string_view yerr,
                      const std::function<void(std::string&)>& rows) {
    std::string out = fmt::format("# x: {}\n# y: {}\n", x, y);
    if (!yerr.empty()) out += fmt::format("# yerr: {}\n", yerr);
    rows(out);
    return out;
}

bool is_leaf(const ojson& j) { return j.is_object() && j.contains("unit") && j.contains("value"); }

std::string leaf_text(const ojson& j) {
    std::string s = j["value"].is_null() ? std::string("nan") : num(j["value"].get<double>());
    if (j.contains("sigma")) s += " +/- " + (j["sigma"].is_null() ? std::string("nan") : num(j["sigma"].get<double>()));
    const std::string unit = j["unit"].get<std::string>();
    if (unit != "1") s += " " + unit;
    return s;
}

void render(const ojson& j, int depth, std::string& out) {
    const std::string pad(std::size_t(2 * depth), ' ');
    auto scalar = [](const ojson& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (j.is_object()) {
        for (const auto& [k, v] : j.items()) {
            if (is_leaf(v)) {
                out += pad + k + ": " + leaf_text(v) + "\n";
            } else if (v.is_object() || v.is_array()) {
                out += pad + k + "\n";
                render(v, depth + 1, out);
            } else {
                out += pad + k + ": " + scalar(v) + "\n";
            }
        }
    } else if (j.is_array()) {
        std::size_t i = 0;
        for (const auto& v : j) {
            if (is_leaf(v)) {
                out += pad + fmt::format("[{}]: ", i) + leaf_text(v) + "\n";
            } else if (v.is_object() || v.is_array()) {
                out += pad + fmt::format("[{}]\n", i);
                render(v, depth + 1, out);
            } else {
                out += pad + fmt::format("[{}]: ", i) + scalar(v) + "\n";
            }
            ++i;
        }
    }
}

// Runs `body`; with keep_going, a fit failure is recorded under `section` instead of thrown.
void guarded(Report& r, bool keep_going, std::string_view section, const std::function<void()>& body) {
    try {
        body();
    } catch (const FitError& err) {
        if (!keep_going) throw;
        r.errors.push_back(fmt::format("{}: {}", section, err.what()));
    }
}

ojson dip_json(const DipFit& f, DipVerdict v) {
    ojson d = ojson::object();
    d["center"] = qs(f.center, f.sigma.center, "Hz");
    d["wavelength"] = q(constants::frequency_to_wavelength(f.center), "m");
    d["gamma_rt"] = qs(f.gamma_rt, f.sigma.gamma_rt, "Hz");
    d["beta_eff"] = qs(f.beta_eff, f.sigma.beta_eff, "1");
    d["fano_amp"] = qs(f.fano_amp, f.sigma.fano_amp, "1");
    d["fano_phase"] = qs(f.fano_phase, f.sigma.fano_phase, "rad");
    d["baseline_slope"] = qs(f.baseline_slope, f.sigma.baseline_slope, "1/Hz");
    d["depth"] = q(f.depth, "1");
    d["noise_rms"] = q(f.noise_rms, "1");
    d["chi2_red"] = q(f.chi2_red, "1");
    d["n_points"] = count_q(f.n_points);
    d["iterations"] = count_q(std::size_t(f.iterations));
    d["status"] = std::string(to_string(f.status));
    d["verdict"] = std::string(to_string(v));
    return d;
}

std::string trace_plot(const ScanTrace& t) {
    return plot_file("frequency_hz", "transmission", "", [&](std::string& out) {
        for (std::size_t i = 0; i < t.size(); ++i) out += num(t.axis[i]) + " " + num(t.values[i]) + "\n";
    });
}

// ---- experiment kinds ----------------------------------------------------------------------

struct Context {
    const Experiment& e;
    Config c;
    Report& r;
    ojson& results;

    const fs::path* input(const std::string& role) const {
        const auto it = e.inputs.find(role);
        return it == e.inputs.end() ? nullptr : &it->second;
    }
    unsigned threads() const { return unsigned(c.count("run", "threads", 0)); }
};

void run_rt_scan(Context& ctx) {
    ScanTrace trace;
    if (const fs::path* p = ctx.input("scan")) {
        trace = io::read_scan(*p);
    } else {
        const SyntheticScan syn = synthesize_scan(population(ctx.c, ctx.e.seed));
        trace = syn.trace;
        ojson s = ojson::object();
        std::size_t clean = 0, shallow = 0, diffusive = 0;
        for (const auto& t : syn.truth) {
            clean += t.cls == EmitterClass::Clean;
            shallow += t.cls == EmitterClass::Shallow;
            diffusive += t.cls == EmitterClass::Diffusive;
        }
        s["emitters"] = count_q(syn.truth.size());
        s["clean"] = count_q(clean);
        s["shallow"] = count_q(shallow);
        s["diffusive"] = count_q(diffusive);
        s["samples"] = count_q(trace.size());
        s["warnings"] = syn.warnings;
        ctx.results["synthesis"] = s;
        ctx.r.plots["truth.csv"] = io::format_truth(syn.truth);
    }

    const auto cands = detect_dips(trace, detect_options(ctx.c));
    const auto fits = fit_dips(trace, cands, {}, ctx.threads());
    const QualityGates g = gates(ctx.c);
    const LinewidthSummary st = linewidth_statistics(fits, g);

    ojson gj = ojson::object();
    gj["min_depth_snr"] = q(g.min_depth_snr, "1");
    gj["max_chi2_red"] = q(g.max_chi2_red, "1");
    gj["max_rel_sigma_gamma"] = q(g.max_rel_sigma_gamma, "1");
    ctx.results["gates"] = gj;

    ojson sj = ojson::object();
    sj["total"] = count_q(st.total);
    sj["fitted"] = count_q(st.fitted);
    sj["rejected_shallow"] = count_q(st.rejected_shallow);
    sj["rejected_noisy"] = count_q(st.rejected_noisy);
    sj["fitted_fraction"] = q(st.fitted_fraction(), "1");
    sj["min_gamma_rt"] = q(st.min_gamma, "Hz");
    sj["median_gamma_rt"] = q(st.median_gamma, "Hz");
    sj["max_gamma_rt"] = q(st.max_gamma, "Hz");
    ctx.results["statistics"] = sj;

    ojson dips = ojson::array();
    for (std::size_t i = 0; i < fits.size(); ++i) dips.push_back(dip_json(fits[i], st.verdicts[i]));
    ctx.results["dips"] = dips;

    ctx.r.plots["trace.dat"] = trace_plot(trace);
    ctx.r.plots["linewidths.dat"] = plot_file("wavelength_m", "gamma_rt_hz", "gamma_rt_sigma_hz", [&](std::string& out) {
        for (std::size_t i = 0; i < fits.size(); ++i) {
            if (st.verdicts[i] != DipVerdict::Accepted) continue;
            out += num(constants::frequency_to_wavelength(fits[i].center)) + " " + num(fits[i].gamma_rt) + " " +
                   num(fits[i].sigma.gamma_rt) + "\n";
        }
    });

    // Purcell envelope over the scanned wavelengths.
    const BandEdgeModel band = band_edge(ctx.c);
    const double lambda_ref = ctx.c.num("purcell", "lambda_ref_m", 944e-9);
    const PurcellEnvelope env = PurcellEnvelope::normalized_at(ctx.c.num("purcell", "gamma_hom_hz", 230e6),
                                                               band.lambda_c, lambda_ref, ctx.c.num("purcell", "cap", 7.3));
    ojson pj = ojson::object();
    pj["gamma_hom"] = q(env.gamma_hom, "Hz");
    pj["lambda_c"] = q(env.lambda_c, "m");
    pj["lambda_ref"] = q(lambda_ref, "m");
    pj["scale"] = q(env.scale, "1");
    pj["cap"] = q(env.cap, "1");
    ctx.results["purcell_envelope"] = pj;
    const double l_lo = constants::frequency_to_wavelength(trace.axis.back());
    const double l_hi = std::min(constants::frequency_to_wavelength(trace.axis.front()), env.lambda_c * (1.0 - 1e-7));
    ctx.r.plots["envelope.dat"] = plot_file("wavelength_m", "max_gamma_hz", "", [&](std::string& out) {
        for (int i = 0; i <= 400; ++i) {
            const double l = l_lo + (l_hi - l_lo) * i / 400.0;
            out += num(l) + " " + num(purcell_envelope(env, l)) + "\n";
        }
    });

    // Surface-distance estimate from the accepted fraction.
    const PcwGeometry geo = geometry(ctx.c, ctx.e);
    ojson geoj = ojson::object();
    geoj["lattice_constant"] = q(geo.a, "m");
    geoj["hole_radius"] = q(geo.r, "m");
    geoj["rows_per_side"] = q(double(geo.region.rows_per_side), "1");
    geoj["region_half_height"] = q(geo.half_height(), "m");
    geoj["fraction_target"] = q(st.fitted_fraction(), "1");
    guarded(ctx.r, ctx.e.keep_going, "geometry", [&] {
        if (!(st.fitted_fraction() > 0.0)) throw FitError(FitFailure::Unreachable, "no accepted dips, fraction is zero");
        const auto d_max_cfg = ctx.c.num("geometry", "d_max_m", 0.0);
        const std::optional<double> d_max = d_max_cfg > 0.0 ? std::optional<double>(d_max_cfg) : std::nullopt;
        geoj["distance"] = q(solve_distance(geo, st.fitted_fraction(), d_max), "m");
    });
    ctx.results["geometry"] = geoj;
}

DipFit pairing_dip(Context& ctx, ojson& pair) {
    if (const fs::path* p = ctx.input("scan")) {
        const ScanTrace t = io::read_scan(*p);
        const auto cands = detect_dips(t, detect_options(ctx.c));
        const auto fits = fit_dips(t, cands, {}, ctx.threads());
        const LinewidthSummary st = linewidth_statistics(fits, gates(ctx.c));
        const DipFit* best = nullptr;
        for (std::size_t i = 0; i < fits.size(); ++i) {
            if (st.verdicts[i] == DipVerdict::Accepted && (!best || fits[i].depth > best->depth)) best = &fits[i];
        }
        if (!best) throw FitError(FitFailure::Unidentifiable, "no accepted dip in the paired scan");
        pair["source"] = "scan";
        return *best;
    }
    EmitterModel m;
    m.nu0 = constants::wavelength_to_frequency(947e-9);
    m.gamma_tot = ctx.c.num("pairing", "gamma_rt_hz", 538e6);
    m.beta = ctx.c.num("pairing", "beta", 0.6);
    m.validate();
    const double step = ctx.c.num("pairing", "step_hz", 20e6);
    const double noise = ctx.c.num("pairing", "noise", 0.005);
    std::vector<double> axis;
    for (double nu = m.nu0 - 15.0 * m.gamma_tot; nu <= m.nu0 + 15.0 * m.gamma_tot; nu += step) axis.push_back(nu);
    ScanTrace t = transmission_spectrum(m, axis);
    std::mt19937_64 rng(ctx.e.seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> gauss(0.0, noise);
    for (double& v : t.values) v = std::max(0.0, v * (1.0 + gauss(rng)));
    DetectOptions det = detect_options(ctx.c);
    det.baseline_window_hz = std::max(det.baseline_window_hz, 2.0 * (axis.back() - axis.front()));
    const auto cands = detect_dips(t, det);
    if (cands.empty()) throw FitError(FitFailure::Unidentifiable, "synthetic pairing dip was not detected");
    const auto best = std::max_element(cands.begin(), cands.end(),
                                       [](const auto& a, const auto& b) { return a.prominence < b.prominence; });
    pair["source"] = "synthetic";
    pair["true_gamma_rt"] = q(m.gamma_tot, "Hz");
    return fit_dip(t, *best);
}

void run_lifetime(Context& ctx) {
    DecayHistogram h;
    if (const fs::path* p = ctx.input("histogram")) {
        h = io::read_histogram(*p);
    } else {
        const DecaySpec spec = decay_spec(ctx.c, ctx.e.seed);
        h = synthesize_decay(spec);
        ojson s = ojson::object();
        s["gamma"] = q(spec.gamma, "1/s");
        s["amplitude"] = q(spec.amplitude, "counts");
        s["background"] = q(spec.background, "counts");
        s["irf_sigma"] = q(spec.irf_sigma, "s");
        s["bin_width"] = q(spec.bin_width, "s");
        ctx.results["synthesis"] = s;
    }
    DecayFitOptions opts;
    opts.min_total_counts = ctx.c.num("decay", "min_total_counts", opts.min_total_counts);
    opts.min_amplitude_significance =
        ctx.c.num("decay", "min_amplitude_significance", opts.min_amplitude_significance);

    ojson hj = ojson::object();
    hj["bins"] = count_q(h.size());
    hj["bin_width"] = q(h.bin_width(), "s");
    hj["total_counts"] = q(h.total_counts(), "counts");
    hj["rep_period"] = q(h.rep_period, "s");
    ctx.results["histogram"] = hj;
    ctx.r.plots["decay.dat"] = plot_file("time_s", "counts", "", [&](std::string& out) {
        for (std::size_t i = 0; i < h.size(); ++i) out += num(h.bin_edges[i]) + " " + num(h.counts[i]) + "\n";
    });

    auto decay_json = [](const DecayFit& f) {
        ojson d = ojson::object();
        d["gamma"] = qs(f.gamma, f.sigma.gamma, "1/s");
        d["lifetime"] = qs(f.lifetime(), f.sigma.gamma / (f.gamma * f.gamma), "s");
        d["transform_limit"] = qs(f.transform_limit, f.transform_limit_sigma, "Hz");
        d["amplitude"] = qs(f.amplitude, f.sigma.amplitude, "counts");
        d["t0"] = qs(f.t0, f.sigma.t0, "s");
        d["background"] = qs(f.background, f.sigma.background, "counts");
        d["deviance"] = q(f.deviance, "1");
        d["iterations"] = count_q(std::size_t(f.iterations));
        return d;
    };

    std::optional<DecayFit> mle;
    guarded(ctx.r, ctx.e.keep_going, "lifetime", [&] {
        mle = fit_decay(h, opts);
        ctx.results["decay_fit"] = decay_json(*mle);
        const auto model = convolve_model(mle->gamma, mle->amplitude, mle->t0, mle->background, h);
        ctx.r.plots["decay_model.dat"] = plot_file("time_s", "expected_counts", "", [&](std::string& out) {
            for (std::size_t i = 0; i < h.size(); ++i) out += num(h.bin_edges[i]) + " " + num(model[i]) + "\n";
        });
    });
    guarded(ctx.r, ctx.e.keep_going, "lifetime_least_squares",
            [&] { ctx.results["decay_fit_least_squares"] = decay_json(fit_decay_least_squares(h, opts)); });

    if (!mle) return;
    guarded(ctx.r, ctx.e.keep_going, "pairing", [&] {
        ojson pair = ojson::object();
        const DipFit dip = pairing_dip(ctx, pair);
        const Ratio ratio = transform_ratio(dip, *mle);
        pair["gamma_rt"] = qs(dip.gamma_rt, dip.sigma.gamma_rt, "Hz");
        pair["transform_limit"] = qs(mle->transform_limit, mle->transform_limit_sigma, "Hz");
        pair["ratio"] = qs(ratio.value, ratio.sigma, "1");
        ctx.results["ratio_table"] = ojson::array({pair});
    });
}

void run_iv(Context& ctx) {
    std::vector<IvPoint> data;
    if (const fs::path* p = ctx.input("iv")) {
        data = io::read_iv(*p);
    } else {
        data = iv_synth(ctx.c);
        const DiodeParams t = diode_params(ctx.c);
        ojson s = ojson::object();
        s["r_s"] = q(t.r_s, "ohm");
        s["r_p"] = q(t.r_p, "ohm");
        s["n_vt"] = q(t.n_vt(), "V");
        s["i_sat"] = q(t.i_sat, "A");
        ctx.results["synthesis"] = s;
    }
    ctx.r.plots["iv.dat"] = plot_file("v_volts", "i_amps", "", [&](std::string& out) {
        for (const auto& p : data) out += num(p.v) + " " + num(p.i) + "\n";
    });
    IvFitOptions opts;
    opts.temperature = ctx.c.num("diode", "temperature_k", opts.temperature);
    opts.noise_floor = ctx.c.num("diode", "noise_floor_a", opts.noise_floor);
    guarded(ctx.r, ctx.e.keep_going, "iv", [&] {
        const DiodeFit f = fit_iv(data, {}, opts);
        ojson d = ojson::object();
        d["i_sat"] = qs(f.params.i_sat, f.sigma.i_sat, "A");
        d["n_ideality"] = qs(f.params.n_ideality, f.sigma.n_ideality, "1");
        d["n_vt"] = q(f.params.n_vt(), "V");
        d["temperature"] = q(f.params.temperature, "K");
        d["r_s"] = qs(f.params.r_s, f.sigma.r_s, "ohm");
        d["r_p"] = qs(f.params.r_p, f.sigma.r_p, "ohm");
        d["current_at_minus_1v"] = q(diode_current(f.params, -1.0), "A");
        d["rms_residual"] = q(f.rms_residual, "1");
        d["iterations"] = count_q(std::size_t(f.iterations));
        ctx.results["diode_fit"] = d;
        ctx.r.plots["iv_model.dat"] = plot_file("v_volts", "i_amps", "", [&](std::string& out) {
            for (const auto& p : data) out += num(p.v) + " " + num(diode_current(f.params, p.v)) + "\n";
        });
    });
}

void run_rc(Context& ctx) {
    std::vector<RcPoint> data;
    if (const fs::path* p = ctx.input("rc")) {
        data = io::read_rc(*p);
    } else {
        data = rc_synth(ctx.c, ctx.e.seed);
        const RcDrive d = rc_drive(ctx.c);
        ojson s = ojson::object();
        s["tau_rc"] = q(d.tau_rc, "s");
        s["law"] = std::string(to_string(d.law));
        s["noise"] = q(ctx.c.num("rc", "noise", 0.01), "1");
        ctx.results["synthesis"] = s;
    }
    ctx.r.plots["rc.dat"] = plot_file("f_ac_hz", "intensity_counts_per_s", "", [&](std::string& out) {
        for (const auto& p : data) out += num(p.f_ac) + " " + num(p.intensity) + "\n";
    });
    const VoltageResponse s = VoltageResponse::lorentzian(ctx.c.num("rc", "width_v", 1e-3));
    const double r_s = ctx.c.num("rc", "r_s_ohm", 7e3);
    RcDrive d0;
    d0.v_ac = ctx.c.num("rc", "v_ac_v", d0.v_ac);
    d0.v_dc = ctx.c.num("rc", "v_dc_v", d0.v_dc);
    d0.i0 = 0.0;
    for (const auto& p : data) d0.i0 = std::max(d0.i0, p.intensity);

    ojson fits = ojson::object();
    for (auto law : {AttenuationLaw::Exponential, AttenuationLaw::FirstOrderLowPass}) {
        guarded(ctx.r, ctx.e.keep_going, fmt::format("rc/{}", to_string(law)), [&] {
            RcDrive d = d0;
            d.law = law;
            const TauFit f = fit_tau_rc(data, d, s);
            ojson j = ojson::object();
            j["tau_rc"] = qs(f.tau_rc, f.tau_sigma, "s");
            j["i0"] = qs(f.i0, f.i0_sigma, "counts/s");
            j["cutoff"] = q(f.cutoff_hz, "Hz");
            j["series_resistance"] = q(r_s, "ohm");
            j["capacitance"] = q(capacitance(f.tau_rc, r_s), "F");
            j["rms_relative_residual"] = q(f.rms_relative_residual, "1");
            j["iterations"] = count_q(std::size_t(f.iterations));
            fits[std::string(to_string(law))] = j;
            d.tau_rc = f.tau_rc;
            d.i0 = f.i0;
            ctx.r.plots[fmt::format("rc_model_{}.dat", to_string(law))] =
                plot_file("f_ac_hz", "intensity_counts_per_s", "", [&](std::string& out) {
                    for (const auto& p : data) out += num(p.f_ac) + " " + num(eq1_intensity(d, s, p.f_ac)) + "\n";
                });
        });
    }
    ctx.results["tau_fits"] = fits;
    ctx.results["cutoff_note"] =
        "cutoff = 1/(2 pi tau_rc); tau_rc = 0.4 us gives 397.9 kHz, whereas a 3.98 MHz cutoff corresponds to "
        "tau_rc = 40 ns";
}

void run_plateau(Context& ctx) {
    PlateauMap map;
    std::optional<PlateauSetup> setup;
    if (const fs::path* p = ctx.input("plateau")) {
        map = io::read_plateau(*p);
    } else {
        setup = plateau_setup(ctx.c);
        map = synthesize_plateau(setup->emitter, setup->v_grid, setup->axis, setup->noise, ctx.e.seed);
        ojson s = ojson::object();
        s["v_on"] = q(setup->emitter.v_on, "V");
        s["v_off"] = q(setup->emitter.v_off, "V");
        s["stark_slope"] = q(setup->emitter.stark_slope, "Hz/V");
        ctx.results["synthesis"] = s;
    }
    const double v_step =
        map.v_grid.size() > 1 ? (map.v_grid.back() - map.v_grid.front()) / double(map.v_grid.size() - 1) : 0.0;
    guarded(ctx.r, ctx.e.keep_going, "plateau", [&] {
        const PlateauEstimate est = extract_plateau(map, ctx.c.num("plateau", "min_prominence", 0.05));
        ojson j = ojson::object();
        j["v_on"] = q(est.v_on, "V");
        j["v_off"] = q(est.v_off, "V");
        j["extent"] = q(est.v_off - est.v_on, "V");
        j["voltage_step"] = q(v_step, "V");
        j["stark_slope"] = q(est.slope, "Hz/V");
        j["resonance_at_v_on"] = q(est.intercept, "Hz");
        j["rows_with_dip"] = count_q(est.rows);
        ctx.results["plateau"] = j;
        ctx.r.plots["ridge.dat"] = plot_file("gate_voltage_v", "resonance_hz", "", [&](std::string& out) {
            for (double v : map.v_grid) {
                if (v < est.v_on || v > est.v_off) continue;
                out += num(v) + " " + num(est.intercept + est.slope * (v - est.v_on)) + "\n";
            }
        });
    });
}

} // namespace

std::string Report::text() const {
    std::string out;
    render(tree, 0, out);
    return out;
}

std::string Report::json() const { return tree.dump(2) + "\n"; }

Report run_experiment(const Experiment& e) {
    validate_config(e.config);
    Report r;
    r.tree["schema_version"] = kReportSchemaVersion;
    r.tree["kind"] = std::string(to_string(e.kind));

    ojson prov = ojson::object();
    prov["version"] = PCWQD_VERSION;
    prov["seed"] = std::to_string(e.seed);
    prov["config_sha256"] = io::sha256_hex(e.config.dump());
    ojson inputs = ojson::object();
    for (const auto& [role, path] : e.inputs) {
        ojson in = ojson::object();
        in["path"] = path.filename().string();
        in["sha256"] = io::sha256_hex(io::read_file(path));
        inputs[role] = in;
    }
    prov["inputs"] = inputs;
    r.tree["provenance"] = prov;

    ojson results = ojson::object();
    Context ctx{e, Config{e.config}, r, results};
    switch (e.kind) {
    case ExperimentKind::RtScan: run_rt_scan(ctx); break;
    case ExperimentKind::PlateauMap: run_plateau(ctx); break;
    case ExperimentKind::Lifetime: run_lifetime(ctx); break;
    case ExperimentKind::Iv: run_iv(ctx); break;
    case ExperimentKind::RcSweep: run_rc(ctx); break;
    }
    r.tree["results"] = results;
    r.tree["errors"] = r.errors;
    return r;
}

void write_report(const Report& r, const fs::path& out_dir, std::string_view stem) {
    io::atomic_write(out_dir / (std::string(stem) + ".txt"), r.text());
    io::atomic_write(out_dir / (std::string(stem) + ".json"), r.json());
    for (const auto& [name, content] : r.plots) io::atomic_write(out_dir / "plots" / name, content);
}

std::vector<fs::path> simulate_inputs(ExperimentKind kind, const ojson& config, std::uint64_t seed,
                                      const fs::path& out_dir) {
    validate_config(config);
    const Config c{config};
    std::vector<fs::path> written;
    auto put = [&](const std::string& name, const std::string& content) {
        io::atomic_write(out_dir / name, content);
        written.push_back(out_dir / name);
    };
    switch (kind) {
    case ExperimentKind::RtScan: {
        const SyntheticScan syn = synthesize_scan(population(c, seed));
        put("scan.csv", io::format_scan(syn.trace));
        put("truth.csv", io::format_truth(syn.truth));
        break;
    }
    case ExperimentKind::PlateauMap: {
        const PlateauSetup s = plateau_setup(c);
        put("plateau.csv", io::format_plateau(synthesize_plateau(s.emitter, s.v_grid, s.axis, s.noise, seed)));
        break;
    }
    case ExperimentKind::Lifetime: put("histogram.csv", io::format_histogram(synthesize_decay(decay_spec(c, seed)))); break;
    case ExperimentKind::Iv: put("iv.csv", io::format_iv(iv_synth(c))); break;
    case ExperimentKind::RcSweep: put("rc.csv", io::format_rc(rc_synth(c, seed))); break;
    }
    return written;
}

} // namespace pcwqd
