#include "pcwqd/lifetime_fit.hpp"

#include "pcwqd/constants.hpp"
#include "pcwqd/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

namespace pcwqd {

double DecayHistogram::total_counts() const { return std::accumulate(counts.begin(), counts.end(), 0.0); }

void DecayHistogram::validate() const {
    if (bin_edges.size() < 3) throw ValidationError("decay histogram needs at least two bins");
    if (counts.size() + 1 != bin_edges.size() || irf.size() != counts.size()) {
        throw ValidationError("decay histogram: edges/counts/irf sizes inconsistent");
    }
    const double w = bin_width();
    if (!(w > 0.0)) throw ValidationError("decay histogram: bin edges must increase");
    for (std::size_t i = 1; i < bin_edges.size(); ++i) {
        if (std::abs((bin_edges[i] - bin_edges[i - 1]) - w) > 1e-6 * w) {
            throw ValidationError("decay histogram: bins are not uniform");
        }
    }
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (!(counts[i] >= 0.0) || !(irf[i] >= 0.0)) throw ValidationError("decay histogram: negative counts");
    }
    if (!(std::accumulate(irf.begin(), irf.end(), 0.0) > 0.0)) throw ValidationError("decay histogram: empty IRF");
    if (!(rep_period > 0.0)) throw ValidationError("decay histogram: rep_period must be positive");
    if (bin_edges.back() - bin_edges.front() > rep_period * (1.0 + 1e-9)) {
        throw ValidationError("decay histogram: span exceeds the repetition period");
    }
}

namespace {

// Integral over [a, b] of w(tau) * gamma * h(tau), w linear with w(a) = wa, w(b) = wb, and
// h the periodic exponential exp(-gamma (tau mod T)) / (1 - exp(-gamma T)).
double linear_times_periodic_exp(double a, double b, double wa, double wb, double gamma, double period) {
    if (!(b > a)) return 0.0;
    const double slope = (wb - wa) / (b - a);
    const double norm = -std::expm1(-gamma * period);
    double total = 0.0;
    double lo = a;
    for (double k = std::floor(a / period); lo < b; k += 1.0) {
        const double seg_start = k * period;
        const double hi = std::min(b, seg_start + period);
        if (hi <= lo) continue;
        const double sp = lo - seg_start;
        const double sq = hi - seg_start;
        // weight in the local coordinate sigma = tau - kT: amp + slope * sigma
        const double amp = wa + slope * (seg_start - a);
        auto prim = [&](double s) { return -std::exp(-gamma * s) * (amp + slope * s + slope / gamma); };
        total += prim(sq) - prim(sp);
        lo = hi;
    }
    return total / norm;
}

// Fraction of counts from a source bin landing in a target bin whose start is offset by c + t0.
double bin_kernel(double c, double width, double gamma, double period) {
    return linear_times_periodic_exp(c - width, c, 0.0, 1.0, gamma, period) +
           linear_times_periodic_exp(c, c + width, 1.0, 0.0, gamma, period);
}

struct DecayProblem {
    const DecayHistogram& hist;
    std::vector<double> irf_norm;

    explicit DecayProblem(const DecayHistogram& h) : hist(h) {
        const double s = std::accumulate(h.irf.begin(), h.irf.end(), 0.0);
        irf_norm.reserve(h.irf.size());
        for (double v : h.irf) irf_norm.push_back(v / s);
    }

    void model(double gamma, double amplitude, double t0, double background, std::vector<double>& out) const {
        const std::size_t n = hist.size();
        const double w = hist.bin_width();
        std::vector<double> kernel(2 * n - 1);
        for (std::size_t m = 0; m < kernel.size(); ++m) {
            const double lag = double(m) - double(n - 1);
            kernel[m] = bin_kernel(lag * w - t0, w, gamma, hist.rep_period);
        }
        out.assign(n, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            const double src = irf_norm[j];
            if (src == 0.0) continue;
            const double* kj = kernel.data() + (n - 1) - j;
            for (std::size_t i = 0; i < n; ++i) out[i] += src * kj[i];
        }
        for (double& v : out) v = amplitude * v + background;
    }
};

constexpr double kTimeScale = 1e-9; // t0 fitted in ns

struct Start {
    double gamma, amplitude, background;
};

Start initial_guess(const DecayHistogram& hist) {
    const std::size_t n = hist.size();
    std::vector<double> sorted = hist.counts;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t q = std::max<std::size_t>(1, n / 5);
    const double bg = std::accumulate(sorted.begin(), sorted.begin() + q, 0.0) / double(q);

    double sig = 0.0, sig_t = 0.0, irf = 0.0, irf_t = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = 0.5 * (hist.bin_edges[i] + hist.bin_edges[i + 1]);
        const double s = std::max(hist.counts[i] - bg, 0.0);
        sig += s;
        sig_t += s * t;
        irf += hist.irf[i];
        irf_t += hist.irf[i] * t;
    }
    double tau = sig > 0.0 ? sig_t / sig - irf_t / irf : hist.bin_width();
    tau = std::clamp(tau, 0.25 * hist.bin_width(), 0.5 * hist.rep_period);
    return {1.0 / tau, std::max(sig, 1.0), bg};
}

enum class Objective { PoissonLikelihood, LeastSquares };

// Negative Poisson log-likelihood up to a data-only constant; +inf outside the model domain.
double poisson_nll(const std::vector<double>& mu, const std::vector<double>& counts) {
    double nll = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        if (!(mu[i] > 0.0)) {
            if (counts[i] > 0.0 || mu[i] < 0.0) return std::numeric_limits<double>::infinity();
            continue;
        }
        nll += mu[i] - counts[i] * std::log(mu[i]);
    }
    return nll;
}

// Damped Fisher scoring on the Poisson likelihood: the Levenberg-Marquardt loop with the
// Fisher information in place of J^T J.
struct PoissonResult {
    lsq::Vector params;
    int iterations = 0;
    bool converged = false;
};

PoissonResult poisson_mle(const std::function<void(const lsq::Vector&, std::vector<double>&)>& model,
                          const std::vector<double>& counts, lsq::Vector p, const lsq::Vector& rel_step,
                          const std::function<bool(const lsq::Vector&)>& in_domain, const lsq::Options& opts) {
    const auto n = Eigen::Index(counts.size());
    std::vector<double> mu;
    auto as_vector = [&](const lsq::Vector& q, lsq::Vector& out) {
        model(q, mu);
        for (Eigen::Index i = 0; i < n; ++i) out[i] = mu[std::size_t(i)];
    };
    model(p, mu);
    double nll = poisson_nll(mu, counts);
    double damping = opts.initial_damping;
    PoissonResult out;
    for (out.iterations = 0; out.iterations < opts.max_iterations; ++out.iterations) {
        model(p, mu);
        const lsq::Matrix jac = lsq::numeric_jacobian(as_vector, p, n, rel_step);
        lsq::Vector w(n), resid(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double m = std::max(mu[std::size_t(i)], 1e-300);
            w[i] = 1.0 / m;
            resid[i] = 1.0 - counts[std::size_t(i)] / m;
        }
        const lsq::Vector grad = jac.transpose() * resid;
        const lsq::Matrix info = jac.transpose() * w.asDiagonal() * jac;
        const lsq::Vector scale = info.diagonal().cwiseMax(1e-300);
        if (grad.cwiseAbs().cwiseQuotient(scale.cwiseSqrt()).maxCoeff() < 1e-10) {
            out.converged = true;
            break;
        }
        bool accepted = false;
        bool stalled = false;
        while (!accepted && damping <= opts.max_damping) {
            lsq::Matrix a = info;
            a.diagonal() += damping * scale;
            const lsq::Vector step = a.ldlt().solve(-grad);
            const lsq::Vector trial = p + step;
            if (!step.allFinite() || (in_domain && !in_domain(trial))) {
                damping *= 10.0;
                continue;
            }
            std::vector<double> mu_t;
            model(trial, mu_t);
            const double nll_t = poisson_nll(mu_t, counts);
            if (nll_t < nll) {
                const bool tiny = std::abs(nll - nll_t) <= 1e-13 * std::max(std::abs(nll), 1.0);
                p = trial;
                nll = nll_t;
                damping = std::max(damping / 10.0, 1e-12);
                accepted = true;
                stalled = tiny;
            } else {
                damping *= 10.0;
            }
        }
        if (!accepted || stalled) {
            out.converged = true;
            break;
        }
    }
    out.params = p;
    return out;
}

DecayFit run_fit(const DecayHistogram& hist, const DecayFitOptions& opts, Objective objective) {
    hist.validate();
    const double total = hist.total_counts();
    if (total < opts.min_total_counts) {
        throw FitError(FitFailure::InsufficientCounts,
                       "decay histogram holds " + std::to_string(total) + " counts");
    }
    const DecayProblem problem(hist);
    const Start s = initial_guess(hist);
    const auto n = Eigen::Index(hist.size());

    // p = [ln gamma, t0 (ns), amplitude, background]
    lsq::Vector p0(4);
    p0 << std::log(s.gamma), 0.0, s.amplitude, std::max(s.background, 1e-3);
    lsq::Vector rel(4);
    rel << 1e-6, 1e-5, 1e-6, 1e-6;

    auto model = [&](const lsq::Vector& p, std::vector<double>& mu) {
        problem.model(std::exp(p[0]), p[2], p[1] * kTimeScale, p[3], mu);
    };
    auto model_vec = [&](const lsq::Vector& p, lsq::Vector& out) {
        std::vector<double> mu;
        model(p, mu);
        for (Eigen::Index i = 0; i < n; ++i) out[i] = mu[std::size_t(i)];
    };
    auto in_domain = [&](const lsq::Vector& p) {
        return p[2] > 0.0 && p[3] >= 0.0 && std::abs(p[1] * kTimeScale) < hist.rep_period &&
               std::exp(p[0]) * hist.bin_width() < 1e6 && std::exp(p[0]) * hist.rep_period > 1e-3;
    };

    lsq::Vector params;
    int iterations = 0;
    double residual_variance = 1.0;
    if (objective == Objective::PoissonLikelihood) {
        const PoissonResult res = poisson_mle(model, hist.counts, p0, rel, in_domain, opts.solver);
        if (!res.converged) throw FitError(FitFailure::NonConvergence, "decay fit hit the iteration cap");
        params = res.params;
        iterations = res.iterations;
    } else {
        auto residuals = [&](const lsq::Vector& p, lsq::Vector& r) {
            model_vec(p, r);
            for (Eigen::Index i = 0; i < n; ++i) r[i] -= hist.counts[std::size_t(i)];
        };
        lsq::Options solver = opts.solver;
        solver.rcond_limit = 0.0;
        const lsq::Result res =
            lsq::minimize(lsq::with_numeric_jacobian(residuals, rel), p0, n, solver, in_domain);
        if (res.status == lsq::Status::MaxIterations) {
            throw FitError(FitFailure::NonConvergence, "decay fit hit the iteration cap");
        }
        params = res.params;
        iterations = res.iterations;
        residual_variance = std::max(res.residual_variance(), 1e-300);
    }

    DecayFit fit;
    fit.gamma = std::exp(params[0]);
    fit.t0 = params[1] * kTimeScale;
    fit.amplitude = params[2];
    fit.background = params[3];
    fit.iterations = iterations;

    lsq::Vector mu_hat(n);
    model_vec(params, mu_hat);
    {
        double dev = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double m = std::max(mu_hat[i], 1e-300);
            const double c = hist.counts[std::size_t(i)];
            dev += 2.0 * (m - c + (c > 0.0 ? c * std::log(c / m) : 0.0));
        }
        fit.deviance = dev;
    }

    // Fisher information of the Poisson model; Gauss-Newton covariance for least squares.
    const lsq::Matrix jm = lsq::numeric_jacobian(model_vec, params, n, rel);
    lsq::Matrix info(4, 4);
    if (objective == Objective::PoissonLikelihood) {
        info = jm.transpose() * mu_hat.cwiseMax(1e-12).cwiseInverse().asDiagonal() * jm;
    } else {
        info = jm.transpose() * jm / residual_variance;
    }
    Eigen::SelfAdjointEigenSolver<lsq::Matrix> eig(info);
    const lsq::Vector ev = eig.eigenvalues();
    const double evmax = ev.maxCoeff();
    lsq::Vector inv = lsq::Vector::Zero(4);
    for (int i = 0; i < 4; ++i) inv[i] = ev[i] > evmax * 1e-14 ? 1.0 / ev[i] : 0.0;
    const lsq::Matrix cov = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
    auto sd = [&](int k) { return std::sqrt(std::max(cov(k, k), 0.0)); };
    fit.sigma.gamma = fit.gamma * sd(0);
    fit.sigma.t0 = sd(1) * kTimeScale;
    fit.sigma.amplitude = sd(2);
    fit.sigma.background = sd(3);

    if (!(ev.minCoeff() > evmax * 1e-14) ||
        !(fit.amplitude > opts.min_amplitude_significance * fit.sigma.amplitude)) {
        throw FitError(FitFailure::Unidentifiable, "no decay signal above the background");
    }
    fit.transform_limit = fit.gamma / constants::kTwoPi;
    fit.transform_limit_sigma = fit.sigma.gamma / constants::kTwoPi;
    return fit;
}

} // namespace

std::vector<double> convolve_model(double gamma, double amplitude, double t0, double background,
                                   const DecayHistogram& hist) {
    if (!(gamma > 0.0)) throw ValidationError("convolve_model: gamma must be positive");
    hist.validate();
    std::vector<double> out;
    DecayProblem(hist).model(gamma, amplitude, t0, background, out);
    return out;
}

DecayFit fit_decay(const DecayHistogram& hist, const DecayFitOptions& opts) {
    return run_fit(hist, opts, Objective::PoissonLikelihood);
}

DecayFit fit_decay_least_squares(const DecayHistogram& hist, const DecayFitOptions& opts) {
    return run_fit(hist, opts, Objective::LeastSquares);
}

Ratio transform_ratio(double gamma_rt, double sigma_rt, double gamma_tl, double sigma_tl) {
    if (!(gamma_rt > 0.0) || !(gamma_tl > 0.0)) throw ValidationError("transform_ratio: linewidths must be positive");
    Ratio r;
    r.value = gamma_rt / gamma_tl;
    r.sigma = r.value * std::hypot(sigma_rt / gamma_rt, sigma_tl / gamma_tl);
    return r;
}

Ratio transform_ratio(const DipFit& dip, const DecayFit& decay) {
    return transform_ratio(fwhm_symmetric(dip), dip.sigma.gamma_rt, decay.transform_limit,
                           decay.transform_limit_sigma);
}

} // namespace pcwqd
