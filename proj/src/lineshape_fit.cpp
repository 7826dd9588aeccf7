#include "pcwqd/lineshape_fit.hpp"

#include "pcwqd/error.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <future>
#include <numbers>
#include <numeric>
#include <thread>

namespace pcwqd {

namespace {

constexpr double kFreqScale = 1e9; // fit works in GHz

std::vector<double> running_median(std::span<const double> v, std::size_t half) {
    std::vector<double> out(v.size());
    std::vector<double> buf;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::size_t lo = i > half ? i - half : 0;
        const std::size_t hi = std::min(v.size(), i + half + 1);
        buf.assign(v.begin() + lo, v.begin() + hi);
        auto mid = buf.begin() + buf.size() / 2;
        std::nth_element(buf.begin(), mid, buf.end());
        out[i] = *mid;
    }
    return out;
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    auto mid = v.begin() + v.size() / 2;
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2) return *mid;
    const double upper = *mid;
    const double lower = *std::max_element(v.begin(), mid);
    return 0.5 * (lower + upper);
}

// Half-depth width around `imin` by linear interpolation on the deficit profile.
double half_depth_width(std::span<const double> axis, std::span<const double> deficit, std::size_t imin,
                        std::size_t lo, std::size_t hi) {
    const double half = 0.5 * deficit[imin];
    double left = axis[imin], right = axis[imin];
    std::size_t i = imin;
    while (i > lo && deficit[i - 1] > half) --i;
    if (i > lo) {
        const double d0 = deficit[i - 1], d1 = deficit[i];
        left = axis[i - 1] + (half - d0) / (d1 - d0) * (axis[i] - axis[i - 1]);
    } else {
        left = axis[lo];
    }
    std::size_t j = imin;
    while (j + 1 < hi && deficit[j + 1] > half) ++j;
    if (j + 1 < hi) {
        const double d0 = deficit[j], d1 = deficit[j + 1];
        right = axis[j] + (d0 - half) / (d0 - d1) * (axis[j + 1] - axis[j]);
    } else {
        right = axis[hi - 1];
    }
    return std::max(right - left, 0.0);
}

struct Run {
    std::size_t first;
    std::size_t last; // inclusive
};

} // namespace

std::string_view to_string(DipFitStatus s) {
    switch (s) {
    case DipFitStatus::Converged: return "converged";
    case DipFitStatus::NonConvergence: return "non_convergence";
    case DipFitStatus::IllConditioned: return "ill_conditioned";
    }
    return "unknown";
}

std::string_view to_string(DipVerdict v) {
    switch (v) {
    case DipVerdict::Accepted: return "accepted";
    case DipVerdict::Shallow: return "shallow";
    case DipVerdict::Noisy: return "noisy";
    }
    return "unknown";
}

double robust_noise(std::span<const double> values) {
    if (values.size() < 3) return 0.0;
    std::vector<double> diffs;
    diffs.reserve(values.size() - 1);
    for (std::size_t i = 1; i < values.size(); ++i) diffs.push_back(std::abs(values[i] - values[i - 1]));
    // MAD of a difference of two iid normals: sigma * sqrt(2) * 0.6745.
    return median_of(std::move(diffs)) / (0.6744897501960817 * std::sqrt(2.0));
}

std::vector<DipCandidate> detect_dips(const ScanTrace& trace, const DetectOptions& opts) {
    trace.validate();
    const std::size_t n = trace.size();
    if (n < opts.min_window) return {};

    const double step = trace.step > 0.0 ? trace.step : (trace.axis.back() - trace.axis.front()) / double(n - 1);
    const auto half_base = std::max<std::size_t>(
        3, std::min<std::size_t>(n / 2, std::size_t(opts.baseline_window_hz / step / 2.0)));
    const std::vector<double> baseline = running_median(trace.values, half_base);

    std::vector<double> rel(n), deficit(n);
    for (std::size_t i = 0; i < n; ++i) {
        rel[i] = baseline[i] > 0.0 ? trace.values[i] / baseline[i] : 0.0;
        deficit[i] = 1.0 - rel[i];
    }
    const double noise = robust_noise(rel);

    const std::size_t k = std::max<std::size_t>(1, opts.smoothing | 1u);
    const std::size_t hk = k / 2;
    std::vector<double> smooth(n, 0.0);
    {
        double acc = 0.0;
        std::vector<double> prefix(n + 1, 0.0);
        for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = (acc += deficit[i]);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t lo = i > hk ? i - hk : 0;
            const std::size_t hi = std::min(n, i + hk + 1);
            smooth[i] = (prefix[hi] - prefix[lo]) / double(hi - lo);
        }
    }
    const double threshold =
        std::max(0.5 * opts.min_prominence, opts.detection_sigma * noise / std::sqrt(double(k)));

    std::vector<Run> runs;
    for (std::size_t i = 0; i < n; ++i) {
        if (smooth[i] <= threshold) continue;
        if (!runs.empty() && i - runs.back().last <= k) {
            runs.back().last = i;
        } else {
            runs.push_back({i, i});
        }
    }

    std::vector<DipCandidate> found;
    for (const Run& run : runs) {
        const std::size_t lo = run.first > hk ? run.first - hk : 0;
        const std::size_t hi = std::min(n, run.last + hk + 1);
        const auto imin = std::size_t(std::min_element(rel.begin() + lo, rel.begin() + hi) - rel.begin());
        const double prominence = deficit[imin];
        if (!(prominence > 0.0) || prominence < opts.min_prominence) continue;

        const double width = std::max(half_depth_width(trace.axis, deficit, imin, 0, n), step);
        if (width < opts.min_width_hz) continue;

        const auto half_win = std::max<std::size_t>(
            opts.min_window / 2, std::size_t(std::ceil(opts.window_widths * width / step)));
        DipCandidate c;
        c.begin = imin > half_win ? imin - half_win : 0;
        c.end = std::min(n, imin + half_win + 1);
        // Near the trace ends, grow the window inward to the minimum length.
        while (c.end - c.begin < opts.min_window && (c.begin > 0 || c.end < n)) {
            if (c.begin > 0) --c.begin;
            if (c.end < n && c.end - c.begin < opts.min_window) ++c.end;
        }
        c.min_index = imin;
        c.prominence = prominence;
        c.width_hz = width;
        c.baseline = baseline[imin];
        c.noise_rms = noise;
        found.push_back(c);
    }

    // Resolve overlaps: split at the local maximum between neighbours; drop the shallower
    // dip when its share of the window falls below the minimum length.
    std::vector<DipCandidate> out;
    for (DipCandidate& c : found) {
        if (out.empty() || out.back().end <= c.begin) {
            out.push_back(c);
            continue;
        }
        DipCandidate& prev = out.back();
        const auto peak = std::size_t(
            std::max_element(rel.begin() + prev.min_index, rel.begin() + c.min_index + 1) - rel.begin());
        DipCandidate left = prev, right = c;
        left.end = std::min(left.end, peak + 1);
        right.begin = std::max(right.begin, peak + 1);
        const bool left_ok = left.length() >= opts.min_window && left.min_index < left.end;
        const bool right_ok = right.length() >= opts.min_window && right.min_index >= right.begin;
        if (left_ok && right_ok) {
            prev = left;
            out.push_back(right);
        } else if (prev.prominence < c.prominence) {
            prev = c;
        }
    }
    return out;
}

EmitterModel DipFit::emitter() const {
    EmitterModel m;
    m.nu0 = center;
    m.gamma_tot = gamma_rt;
    m.beta = std::clamp(beta_eff, 0.0, 1.0);
    m.fano_amp = fano_amp;
    m.fano_phase = fano_phase;
    return m;
}

namespace {

// Parameter layout: [center offset (GHz), gamma (GHz), beta, bx, by, tilt (1/GHz)].
struct DipModel {
    std::span<const double> u;    // (nu - ref) / scale
    std::span<const double> data; // baseline-normalized transmission
    bool with_tilt;

    void operator()(const lsq::Vector& p, lsq::Vector& r, lsq::Matrix* jac) const {
        using namespace std::complex_literals;
        const double c = p[0], g = p[1], beta = p[2];
        const std::complex<double> bg(p[3], p[4]);
        const double tilt = with_tilt ? p[5] : 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double x = 2.0 * (u[i] - c) / g;
            const std::complex<double> lor = 1.0 / (1.0 - 1i * x);
            const std::complex<double> t = 1.0 + bg - beta * lor;
            const double t2 = std::norm(t);
            const double s = 1.0 + tilt * u[i];
            const auto ii = Eigen::Index(i);
            r[ii] = s * t2 - data[i];
            if (!jac) continue;
            const std::complex<double> tc = std::conj(t);
            const std::complex<double> dt_dx = -1i * beta * lor * lor;
            const double dT_dx = 2.0 * std::real(tc * dt_dx);
            (*jac)(ii, 0) = s * dT_dx * (-2.0 / g);
            (*jac)(ii, 1) = s * dT_dx * (-x / g);
            (*jac)(ii, 2) = s * 2.0 * std::real(tc * (-lor));
            (*jac)(ii, 3) = s * 2.0 * t.real();
            (*jac)(ii, 4) = s * 2.0 * t.imag();
            if (with_tilt) (*jac)(ii, 5) = u[i] * t2;
        }
    }
};

std::optional<lsq::Vector> mirrored_branch(const lsq::Vector& p) {
    const double beta = p[2], cr = 1.0 + p[3], ci = p[4];
    if (!(beta > 0.0)) return std::nullopt;
    const double m = beta * beta - 2.0 * beta * cr;
    const double q = cr * cr + ci * ci;
    const double b2sq = 2.0 * m + 4.0 * q - beta * beta;
    if (!(b2sq > 0.0)) return std::nullopt;
    const double b2 = std::sqrt(b2sq);
    lsq::Vector out = p;
    out[2] = b2;
    out[3] = (b2sq - m) / (2.0 * b2) - 1.0;
    out[4] = beta * ci / b2;
    return out;
}

} // namespace

DipFit fit_dip(const ScanTrace& trace, const DipCandidate& candidate, const std::optional<DipFit>& init,
               const DipFitOptions& opts) {
    if (candidate.end > trace.size() || candidate.begin >= candidate.end) {
        throw ValidationError("fit_dip: candidate window outside the trace");
    }
    const std::size_t n = candidate.length();
    const std::size_t np = opts.fit_baseline_slope ? 6 : 5;
    if (n <= np) throw ValidationError("fit_dip: window shorter than the parameter count");

    const double base = candidate.baseline > 0.0 ? candidate.baseline : 1.0;
    const std::size_t imin_global = std::clamp(candidate.min_index, candidate.begin, candidate.end - 1);
    const double ref = trace.axis[imin_global];

    std::vector<double> u(n), data(n), deficit(n);
    for (std::size_t i = 0; i < n; ++i) {
        u[i] = (trace.axis[candidate.begin + i] - ref) / kFreqScale;
        data[i] = trace.values[candidate.begin + i] / base;
        deficit[i] = 1.0 - data[i];
    }
    const auto imin = std::size_t(std::min_element(data.begin(), data.end()) - data.begin());
    const double span = u.back() - u.front();
    const double du = span / double(n - 1);

    lsq::Vector p0(np);
    if (init) {
        p0[0] = (init->center - ref) / kFreqScale;
        p0[1] = init->gamma_rt / kFreqScale;
        const std::complex<double> k = (1.0 + std::polar(init->fano_amp, init->fano_phase)) / std::sqrt(base);
        p0[2] = std::clamp(init->beta_eff / std::sqrt(base), 0.01, 0.99);
        p0[3] = k.real() - 1.0;
        p0[4] = k.imag();
        if (np == 6) p0[5] = init->baseline_slope * kFreqScale;
    } else {
        const double tmin = std::clamp(data[imin], 1e-4, 1.0);
        double width = half_depth_width(u, deficit, imin, 0, n);
        width = std::clamp(width, 0.5 * du, span);
        // Deficit-weighted skew about the minimum sets the sign of the quadrature background.
        double skew = 0.0;
        for (std::size_t i = 0; i < n; ++i) skew += std::max(deficit[i], 0.0) * (u[i] - u[imin]);
        p0[0] = u[imin];
        p0[1] = width;
        p0[2] = std::clamp(1.0 - std::sqrt(tmin), 0.01, 0.99);
        p0[3] = 0.0;
        p0[4] = skew > 0.0 ? 0.01 : (skew < 0.0 ? -0.01 : 0.0);
        if (np == 6) p0[5] = 0.0;
    }

    const DipModel model{u, data, opts.fit_baseline_slope};
    const double umin = u.front(), umax = u.back();
    auto in_domain = [&](const lsq::Vector& p) {
        return p[1] > 1e-6 * du && p[1] < 20.0 * span && p[2] >= 0.0 && p[2] <= 2.0 && p[0] >= umin &&
               p[0] <= umax;
    };
    lsq::Result res = lsq::minimize(model, p0, Eigen::Index(n), opts.solver, in_domain);
    // |1 + b - beta L|^2 fixes |1+b|^2, beta^2 - 2 beta Re(1+b) and beta Im(b), which leaves
    // two exact solutions. Report the one with the smaller beta.
    if (const auto mirror = mirrored_branch(res.params); mirror && (*mirror)[2] < res.params[2]) {
        lsq::Result alt = lsq::minimize(model, *mirror, Eigen::Index(n), opts.solver, in_domain);
        if (alt.status == lsq::Status::Converged && alt.cost <= res.cost * (1.0 + 1e-6) + 1e-30) res = std::move(alt);
    }

    DipFit fit;
    const lsq::Vector& p = res.params;
    // The window is fitted in units of the local baseline; beta and the background are reported
    // in the absolute units of the trace.
    const double sb = std::sqrt(base);
    const std::complex<double> k = sb * std::complex<double>(1.0 + p[3], p[4]);
    const std::complex<double> bg = k - 1.0;
    fit.center = ref + p[0] * kFreqScale;
    fit.gamma_rt = p[1] * kFreqScale;
    fit.beta_eff = sb * p[2];
    fit.fano_amp = std::abs(bg);
    fit.fano_phase = std::arg(bg);
    fit.baseline_slope = np == 6 ? p[5] / kFreqScale : 0.0;
    fit.baseline = base;
    fit.n_points = n;
    fit.iterations = res.iterations;

    const lsq::Matrix cov = res.covariance();
    auto sd = [&](Eigen::Index k) { return std::sqrt(std::max(cov(k, k), 0.0)); };
    fit.sigma.center = sd(0) * kFreqScale;
    fit.sigma.gamma_rt = sd(1) * kFreqScale;
    fit.sigma.beta_eff = sb * sd(2);
    const Eigen::Matrix2d cb = base * cov.block<2, 2>(3, 3);
    if (fit.fano_amp > 0.0) {
        const double f = fit.fano_amp;
        Eigen::Vector2d ga(bg.real() / f, bg.imag() / f);
        Eigen::Vector2d gp(-bg.imag() / (f * f), bg.real() / (f * f));
        fit.sigma.fano_amp = std::sqrt(std::max(ga.dot(cb * ga), 0.0));
        fit.sigma.fano_phase = std::sqrt(std::max(gp.dot(cb * gp), 0.0));
    } else {
        fit.sigma.fano_amp = std::sqrt(std::max(0.5 * cb.trace(), 0.0));
        fit.sigma.fano_phase = std::numbers::pi;
    }
    fit.sigma.baseline_slope = np == 6 ? sd(5) / kFreqScale : 0.0;

    const double noise = candidate.noise_rms > 0.0 ? candidate.noise_rms : robust_noise(data);
    fit.noise_rms = noise;
    const double dof = double(n - np);
    fit.chi2_red = res.cost / dof / std::max(noise * noise, 1e-24);

    // Depth of the fitted curve (tilt excluded) below its far-detuned level, in baseline units.
    {
        EmitterModel em = fit.emitter();
        em.beta = std::clamp(p[2], 0.0, 1.0);
        em.fano_amp = std::hypot(p[3], p[4]);
        em.fano_phase = std::atan2(p[4], p[3]);
        const double far = std::norm(1.0 + std::polar(em.fano_amp, em.fano_phase));
        double tmin = far;
        const int samples = 2001;
        for (int i = 0; i < samples; ++i) {
            const double nu = trace.axis[candidate.begin] +
                              (trace.axis[candidate.end - 1] - trace.axis[candidate.begin]) * i / (samples - 1);
            tmin = std::min(tmin, transmission(em, nu - em.nu0));
        }
        fit.depth = far - tmin;
    }

    switch (res.status) {
    case lsq::Status::Converged: fit.status = DipFitStatus::Converged; break;
    case lsq::Status::MaxIterations: fit.status = DipFitStatus::NonConvergence; break;
    case lsq::Status::IllConditioned: fit.status = DipFitStatus::IllConditioned; break;
    }
    fit.converged = fit.status == DipFitStatus::Converged;
    return fit;
}

std::vector<DipFit> fit_dips(const ScanTrace& trace, std::span<const DipCandidate> candidates,
                             const DipFitOptions& opts, unsigned threads) {
    std::vector<DipFit> fits(candidates.size());
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, unsigned(std::max<std::size_t>(candidates.size(), 1)));

    auto work = [&](std::size_t first, std::size_t stride) {
        for (std::size_t i = first; i < candidates.size(); i += stride) {
            fits[i] = fit_dip(trace, candidates[i], std::nullopt, opts);
        }
    };
    if (threads <= 1) {
        work(0, 1);
    } else {
        std::vector<std::future<void>> jobs;
        for (unsigned t = 0; t < threads; ++t) jobs.push_back(std::async(std::launch::async, work, t, threads));
        for (auto& j : jobs) j.get();
    }
    std::stable_sort(fits.begin(), fits.end(), [](const DipFit& a, const DipFit& b) { return a.center < b.center; });
    return fits;
}

double fwhm_symmetric(const DipFit& fit) { return fit.gamma_rt; }

DipVerdict classify(const DipFit& fit, const QualityGates& gates) {
    if (fit.depth < gates.min_depth_snr * fit.noise_rms) return DipVerdict::Shallow;
    if (!fit.converged || fit.chi2_red > gates.max_chi2_red ||
        !(fit.sigma.gamma_rt <= gates.max_rel_sigma_gamma * fit.gamma_rt)) {
        return DipVerdict::Noisy;
    }
    return DipVerdict::Accepted;
}

LinewidthSummary linewidth_statistics(std::span<const DipFit> fits, const QualityGates& gates) {
    LinewidthSummary s;
    s.total = fits.size();
    std::vector<double> accepted;
    for (const DipFit& f : fits) {
        const DipVerdict v = classify(f, gates);
        s.verdicts.push_back(v);
        switch (v) {
        case DipVerdict::Accepted: ++s.fitted; accepted.push_back(f.gamma_rt); break;
        case DipVerdict::Shallow: ++s.rejected_shallow; break;
        case DipVerdict::Noisy: ++s.rejected_noisy; break;
        }
    }
    if (!accepted.empty()) {
        s.min_gamma = *std::min_element(accepted.begin(), accepted.end());
        s.max_gamma = *std::max_element(accepted.begin(), accepted.end());
        s.median_gamma = median_of(accepted);
    }
    return s;
}

} // namespace pcwqd
