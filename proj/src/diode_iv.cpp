#include "pcwqd/diode_iv.hpp"

#include "pcwqd/constants.hpp"
#include "pcwqd/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace pcwqd {

double DiodeParams::n_vt() const { return n_ideality * constants::thermal_voltage(temperature); }

void DiodeParams::validate() const {
    if (!(i_sat > 0.0 && n_ideality > 0.0 && temperature > 0.0 && r_s > 0.0 && r_p > 0.0)) {
        throw ValidationError("diode parameters must all be positive");
    }
    if (!(r_p > r_s)) throw ValidationError("diode parallel resistance must exceed the series resistance");
}

namespace {

// Junction current at junction voltage x: i_sat (e^{x/nVt} - 1) + x / r_p.
struct Junction {
    double log_isat, isat, nvt, r_p;

    double current(double x) const {
        const double e = x / nvt;
        const double diode = e < 1.0 ? isat * std::expm1(e) : std::exp(log_isat + e) - isat;
        return diode + x / r_p;
    }
    double slope(double x) const { return std::exp(log_isat + x / nvt) / nvt + 1.0 / r_p; }
};

double solve_junction(const DiodeParams& p, const Junction& j, double v) {
    // g(x) = x + r_s f(x) - v is strictly increasing; the root lies between 0 and v.
    double lo = std::min(v, 0.0);
    double hi = std::max(v, 0.0);
    if (v > 0.0) {
        // r_s i_sat (e^{x/nVt} - 1) <= v bounds the exponent.
        hi = std::min(hi, j.nvt * (std::log(v / p.r_s + j.isat) - j.log_isat));
    }
    auto g = [&](double x) { return x + p.r_s * j.current(x) - v; };
    if (g(lo) >= 0.0) return lo;
    if (g(hi) <= 0.0) return hi;

    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 400; ++it) {
        const double gx = g(x);
        if (gx == 0.0) return x;
        if (gx < 0.0) lo = x; else hi = x;
        if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(lo), std::abs(hi))) {
            return 0.5 * (lo + hi);
        }
        double next = x - gx / (1.0 + p.r_s * j.slope(x));
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (next == x) return x;
        x = next;
    }
    throw FitError(FitFailure::NonConvergence, "diode_current: junction solve did not converge");
}

Junction junction_of(const DiodeParams& p) { return {std::log(p.i_sat), p.i_sat, p.n_vt(), p.r_p}; }

} // namespace

double diode_current(const DiodeParams& p, double v) {
    p.validate();
    const Junction j = junction_of(p);
    return j.current(solve_junction(p, j, v));
}

double diode_residual(const DiodeParams& p, double v, double current) {
    const Junction j = junction_of(p);
    return std::abs(current - j.current(v - current * p.r_s));
}

namespace {

struct LinearFit {
    double slope = 0.0, intercept = 0.0;
    bool ok = false;
};

LinearFit linear_regression(const std::vector<double>& x, const std::vector<double>& y) {
    LinearFit out;
    const std::size_t n = x.size();
    if (n < 2) return out;
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= double(n);
    my /= double(n);
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx <= 0.0) return out;
    out.slope = sxy / sxx;
    out.intercept = my - out.slope * mx;
    out.ok = true;
    return out;
}

DiodeParams initial_params(std::span<const IvPoint> data, const IvFitOptions& opts) {
    DiodeParams p;
    p.temperature = opts.temperature;

    std::vector<double> rv, ri;
    for (const IvPoint& d : data) {
        if (d.v < 0.0) {
            rv.push_back(d.v);
            ri.push_back(d.i);
        }
    }
    const LinearFit rev = linear_regression(rv, ri);
    p.r_p = rev.ok && rev.slope > 0.0 ? 1.0 / rev.slope : 1e12;

    std::vector<IvPoint> fwd(data.begin(), data.end());
    std::sort(fwd.begin(), fwd.end(), [](const IvPoint& a, const IvPoint& b) { return a.v < b.v; });
    const IvPoint& top = fwd.back();
    const IvPoint& next = fwd[fwd.size() - 2];
    const double di = top.i - next.i;
    p.r_s = di > 0.0 ? std::max((top.v - next.v) / di, 1.0) : 1e3;
    p.r_s = std::min(p.r_s, 0.1 * p.r_p);

    // Exponential region: well above leakage and well below the series-limited top current.
    const double leak = rev.ok ? std::abs(rev.intercept + rev.slope * rv.front()) : opts.noise_floor;
    std::vector<double> xv, yv;
    for (const IvPoint& d : fwd) {
        const double vj = d.v - d.i * p.r_s;
        const double idiode = d.i - vj / p.r_p;
        if (d.v > 0.0 && idiode > std::max(100.0 * leak, 100.0 * opts.noise_floor) && d.i < 0.1 * top.i) {
            xv.push_back(vj);
            yv.push_back(std::log(idiode));
        }
    }
    const LinearFit expo = linear_regression(xv, yv);
    double nvt = 0.03;
    double log_isat;
    if (expo.ok && expo.slope > 0.0) {
        nvt = 1.0 / expo.slope;
        log_isat = expo.intercept;
    } else {
        const double vj = top.v - top.i * p.r_s;
        log_isat = std::log(std::max(top.i, opts.noise_floor)) - vj / nvt;
    }
    p.n_ideality = nvt / constants::thermal_voltage(p.temperature);
    p.i_sat = std::exp(std::max(log_isat, -700.0));
    return p;
}

} // namespace

DiodeFit fit_iv(std::span<const IvPoint> data, const std::optional<DiodeParams>& init, const IvFitOptions& opts) {
    if (!(opts.noise_floor > 0.0)) throw ValidationError("fit_iv: noise floor must be positive");
    std::size_t reverse = 0, forward = 0;
    double max_reverse_leak = 0.0;
    for (const IvPoint& d : data) {
        if (d.v < 0.0) {
            ++reverse;
            max_reverse_leak = std::max(max_reverse_leak, std::abs(d.i));
        }
    }
    const double conduction = std::max(100.0 * max_reverse_leak, 1000.0 * opts.noise_floor);
    for (const IvPoint& d : data) {
        if (d.v > 0.0 && d.i > conduction) ++forward;
    }
    if (reverse < 2 || forward < 3) {
        throw FitError(FitFailure::InsufficientSpan, "I-V data must cover the reverse branch and forward conduction");
    }

    DiodeParams p0 = init ? *init : initial_params(data, opts);
    p0.temperature = opts.temperature;
    const double vt = constants::thermal_voltage(opts.temperature);

    auto unpack = [&](const lsq::Vector& q) {
        DiodeParams p;
        p.temperature = opts.temperature;
        p.i_sat = std::exp(q[0]);
        p.n_ideality = std::exp(q[1]) / vt;
        p.r_s = std::exp(q[2]);
        p.r_p = std::exp(q[3]);
        return p;
    };
    auto residuals = [&](const lsq::Vector& q, lsq::Vector& r) {
        const DiodeParams p = unpack(q);
        const Junction j = junction_of(p);
        for (std::size_t k = 0; k < data.size(); ++k) {
            const double model = j.current(solve_junction(p, j, data[k].v));
            r[Eigen::Index(k)] = std::asinh(model / opts.noise_floor) - std::asinh(data[k].i / opts.noise_floor);
        }
    };
    lsq::Vector q0(4);
    q0 << std::log(p0.i_sat), std::log(p0.n_vt()), std::log(p0.r_s), std::log(p0.r_p);
    lsq::Vector rel = lsq::Vector::Constant(4, 1e-7);
    auto in_domain = [](const lsq::Vector& q) {
        return q[0] > -700.0 && q[0] < 0.0 && q[1] > -20.0 && q[1] < 5.0 && q[2] > -5.0 && q[2] < 40.0 &&
               q[3] > q[2] && q[3] < 60.0;
    };
    const lsq::Result res =
        lsq::minimize(lsq::with_numeric_jacobian(residuals, rel), q0, Eigen::Index(data.size()), opts.solver, in_domain);
    if (res.status == lsq::Status::MaxIterations) {
        throw FitError(FitFailure::NonConvergence, "fit_iv hit the iteration cap");
    }

    DiodeFit fit;
    fit.params = unpack(res.params);
    fit.iterations = res.iterations;
    fit.rms_residual = std::sqrt(res.cost / double(data.size()));
    const lsq::Matrix cov = res.covariance();
    auto sd = [&](int k) { return std::sqrt(std::max(cov(k, k), 0.0)); };
    fit.sigma.temperature = 0.0;
    fit.sigma.i_sat = fit.params.i_sat * sd(0);
    fit.sigma.n_ideality = fit.params.n_ideality * sd(1);
    fit.sigma.r_s = fit.params.r_s * sd(2);
    fit.sigma.r_p = fit.params.r_p * sd(3);
    return fit;
}

} // namespace pcwqd
