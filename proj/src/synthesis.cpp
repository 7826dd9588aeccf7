#include "pcwqd/synthesis.hpp"

#include "pcwqd/constants.hpp"
#include "pcwqd/error.hpp"
#include "pcwqd/lineshape_fit.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace pcwqd {

void PopulationSpec::validate() const {
    if (!(lambda_min > 0.0 && lambda_max > lambda_min)) throw ValidationError("population span must be positive");
    if (!(step_hz > 0.0)) throw ValidationError("population step must be positive");
    if (!(gamma_min > 0.0 && gamma_max >= gamma_min)) throw ValidationError("invalid linewidth range");
    if (!(beta_min >= 0.0 && beta_max <= 1.0 && beta_max >= beta_min)) throw ValidationError("invalid beta range");
    if (!(fano_amp_max >= 0.0)) throw ValidationError("fano_amp_max must be non-negative");
    if (!(noise >= 0.0)) throw ValidationError("noise level must be non-negative");
    if (shallow_count + diffusive_count > count) throw ValidationError("class counts exceed the population size");
    if (!(shallow_snr_min > 0.0 && shallow_snr_max >= shallow_snr_min)) throw ValidationError("invalid shallow depth range");
    if (!(diffusion_min >= 0.0 && diffusion_max >= diffusion_min)) throw ValidationError("invalid diffusion range");
    band.validate();
}

std::string_view to_string(EmitterClass c) {
    switch (c) {
    case EmitterClass::Clean: return "clean";
    case EmitterClass::Shallow: return "shallow";
    case EmitterClass::Diffusive: return "diffusive";
    }
    return "unknown";
}

namespace {

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
    if (hi <= lo) return lo;
    return std::exp(std::uniform_real_distribution<double>(std::log(lo), std::log(hi))(rng));
}

// Emitter transmission normalised to its own far-detuned level, so a Fano background only
// reshapes the dip locally.
double local_transmission(const EmitterModel& m, double detuning) {
    const double far = std::norm(1.0 + std::polar(m.fano_amp, m.fano_phase));
    return transmission(m, detuning) / far;
}

} // namespace

SyntheticScan synthesize_scan(const PopulationSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const double nu_lo = constants::wavelength_to_frequency(spec.lambda_max);
    const double nu_hi = constants::wavelength_to_frequency(spec.lambda_min);
    const auto n = std::size_t(std::floor((nu_hi - nu_lo) / spec.step_hz)) + 1;

    SyntheticScan out;
    out.trace.step = spec.step_hz;
    out.trace.axis.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.trace.axis[i] = nu_lo + double(i) * spec.step_hz;

    std::vector<EmitterClass> classes(spec.count, EmitterClass::Clean);
    std::fill_n(classes.begin(), spec.shallow_count, EmitterClass::Shallow);
    std::fill_n(classes.begin() + std::ptrdiff_t(spec.shallow_count), spec.diffusive_count, EmitterClass::Diffusive);
    std::shuffle(classes.begin(), classes.end(), rng);

    const double bin = (nu_hi - nu_lo) / double(std::max<std::size_t>(spec.count, 1));
    for (std::size_t k = 0; k < spec.count; ++k) {
        EmitterTruth e;
        e.cls = classes[k];
        EmitterModel& m = e.model;
        m.nu0 = nu_lo + bin * (double(k) + 0.5 + 0.4 * (unit(rng) - 0.5));
        switch (e.cls) {
        case EmitterClass::Clean:
            m.gamma_tot = log_uniform(rng, spec.gamma_min, spec.gamma_max);
            m.beta = spec.beta_min + (spec.beta_max - spec.beta_min) * unit(rng);
            m.fano_amp = spec.fano_amp_max * unit(rng);
            m.fano_phase = 2.0 * std::numbers::pi * unit(rng);
            break;
        case EmitterClass::Shallow: {
            m.gamma_tot = log_uniform(rng, std::max(spec.gamma_min, spec.shallow_gamma_min), spec.gamma_max);
            const double snr = spec.shallow_snr_min + (spec.shallow_snr_max - spec.shallow_snr_min) * unit(rng);
            const double depth = std::min(snr * spec.noise, 1.0);
            m.beta = 1.0 - std::sqrt(1.0 - depth);
            break;
        }
        case EmitterClass::Diffusive:
            m.gamma_tot = log_uniform(rng, spec.gamma_min, spec.gamma_max);
            m.beta = std::max(0.5, spec.beta_min) + (spec.beta_max - std::max(0.5, spec.beta_min)) * unit(rng);
            m.fano_amp = spec.fano_amp_max * unit(rng);
            m.fano_phase = 2.0 * std::numbers::pi * unit(rng);
            e.diffusion_hz = m.gamma_tot * (spec.diffusion_min + (spec.diffusion_max - spec.diffusion_min) * unit(rng));
            break;
        }
        out.truth.push_back(e);
    }

    double gmax = 0.0;
    for (const auto& e : out.truth) gmax = std::max(gmax, e.model.gamma_tot);
    for (std::size_t k = 1; k < out.truth.size(); ++k) {
        const double gap = out.truth[k].model.nu0 - out.truth[k - 1].model.nu0;
        if (gap < 3.0 * gmax) {
            out.warnings.push_back(fmt::format("emitters {} and {} are {:.3f} GHz apart, below 3x the largest linewidth",
                                               k - 1, k, gap * 1e-9));
        }
    }

    out.trace.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double nu = out.trace.axis[i];
        double v = band_envelope(spec.band, constants::frequency_to_wavelength(nu));
        for (const auto& e : out.truth) {
            const double jitter = e.diffusion_hz > 0.0 ? e.diffusion_hz * gauss(rng) : 0.0;
            const double det = nu - e.model.nu0 - jitter;
            // Beyond 2000 linewidths the dip is below 1e-6 and not worth evaluating.
            if (std::abs(det) > 2000.0 * e.model.gamma_tot) continue;
            v *= local_transmission(e.model, det);
        }
        v *= 1.0 + spec.noise * gauss(rng);
        out.trace.values[i] = std::max(v, 0.0);
    }
    out.trace.validate();
    return out;
}

ScanTrace PlateauMap::row(std::size_t iv) const {
    ScanTrace t;
    t.axis = axis_hz;
    t.values.assign(values.begin() + std::ptrdiff_t(iv * axis_hz.size()),
                    values.begin() + std::ptrdiff_t((iv + 1) * axis_hz.size()));
    if (axis_hz.size() > 1) t.step = (axis_hz.back() - axis_hz.front()) / double(axis_hz.size() - 1);
    t.meta.gate_voltage = v_grid[iv];
    return t;
}

namespace {

void require_increasing(std::span<const double> g, const char* what) {
    if (g.empty()) throw ValidationError(fmt::format("{} grid is empty", what));
    for (std::size_t i = 1; i < g.size(); ++i) {
        if (!(g[i] > g[i - 1])) throw ValidationError(fmt::format("{} grid must be strictly increasing", what));
    }
}

} // namespace

PlateauMap synthesize_plateau(const EmitterModel& m, std::span<const double> v_grid, std::span<const double> axis_hz,
                              double noise, std::uint64_t seed) {
    m.validate();
    require_increasing(v_grid, "voltage");
    require_increasing(axis_hz, "frequency");
    if (!(noise >= 0.0)) throw ValidationError("noise level must be non-negative");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    PlateauMap map;
    map.v_grid.assign(v_grid.begin(), v_grid.end());
    map.axis_hz.assign(axis_hz.begin(), axis_hz.end());
    map.values.reserve(v_grid.size() * axis_hz.size());
    for (double v : v_grid) {
        const auto nu_res = stark_resonance(m, v);
        for (double nu : axis_hz) {
            double t = nu_res ? local_transmission(m, nu - *nu_res) : 1.0;
            t *= 1.0 + noise * gauss(rng);
            map.values.push_back(std::max(t, 0.0));
        }
    }
    return map;
}

PlateauEstimate extract_plateau(const PlateauMap& map, double min_prominence) {
    std::vector<double> vs, centers;
    DetectOptions det;
    det.min_prominence = min_prominence;
    for (std::size_t iv = 0; iv < map.v_grid.size(); ++iv) {
        const ScanTrace row = map.row(iv);
        const auto cands = detect_dips(row, det);
        if (cands.empty()) continue;
        const auto best = std::max_element(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
            return a.prominence < b.prominence;
        });
        const DipFit fit = fit_dip(row, *best);
        if (!fit.converged) continue;
        vs.push_back(map.v_grid[iv]);
        centers.push_back(fit.center);
    }
    if (vs.size() < 2) throw FitError(FitFailure::InsufficientSpan, "fewer than two gate voltages show a dip");

    PlateauEstimate est;
    est.rows = vs.size();
    est.v_on = vs.front();
    est.v_off = vs.back();
    const double n = double(vs.size());
    const double mv = std::accumulate(vs.begin(), vs.end(), 0.0) / n;
    const double mc = std::accumulate(centers.begin(), centers.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < vs.size(); ++i) {
        sxx += (vs[i] - mv) * (vs[i] - mv);
        sxy += (vs[i] - mv) * (centers[i] - mc);
    }
    est.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    est.intercept = mc + est.slope * (est.v_on - mv);
    return est;
}

DecayHistogram synthesize_decay(const DecaySpec& spec) {
    if (!(spec.bin_width > 0.0) || spec.n_bins < 2) throw ValidationError("decay grid needs a positive bin width");
    if (!(spec.irf_sigma > 0.0)) throw ValidationError("IRF width must be positive");
    DecayHistogram h;
    h.rep_period = spec.rep_period;
    h.bin_edges.resize(spec.n_bins + 1);
    for (std::size_t i = 0; i <= spec.n_bins; ++i) h.bin_edges[i] = double(i) * spec.bin_width;
    h.irf.resize(spec.n_bins);
    // Bin-integrated Gaussian.
    for (std::size_t i = 0; i < spec.n_bins; ++i) {
        const double a = (h.bin_edges[i] - spec.irf_center) / (std::sqrt(2.0) * spec.irf_sigma);
        const double b = (h.bin_edges[i + 1] - spec.irf_center) / (std::sqrt(2.0) * spec.irf_sigma);
        h.irf[i] = 0.5 * (std::erf(b) - std::erf(a));
    }
    h.counts.assign(spec.n_bins, 0.0);
    const std::vector<double> mu = convolve_model(spec.gamma, spec.amplitude, spec.t0, spec.background, h);
    std::mt19937_64 rng(spec.seed);
    for (std::size_t i = 0; i < spec.n_bins; ++i) {
        h.counts[i] = mu[i] > 0.0 ? double(std::poisson_distribution<long long>(mu[i])(rng)) : 0.0;
    }
    return h;
}

std::vector<IvPoint> synthesize_iv(const DiodeParams& p, double v_min, double v_max, std::size_t n) {
    if (n < 2 || !(v_max > v_min)) throw ValidationError("I-V grid needs at least two increasing voltages");
    std::vector<IvPoint> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double v = v_min + (v_max - v_min) * double(i) / double(n - 1);
        out.push_back({v, diode_current(p, v)});
    }
    return out;
}

std::vector<RcPoint> synthesize_rc(const RcDrive& d, const VoltageResponse& s, double f_min, double f_max,
                                   std::size_t n, double noise, std::uint64_t seed) {
    if (n < 2 || !(f_min > 0.0 && f_max > f_min)) throw ValidationError("RC grid needs 0 < f_min < f_max");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<RcPoint> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double f = f_min * std::pow(f_max / f_min, double(i) / double(n - 1));
        out.push_back({f, eq1_intensity(d, s, f) * (1.0 + noise * gauss(rng))});
    }
    return out;
}

} // namespace pcwqd
