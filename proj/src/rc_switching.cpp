#include "pcwqd/rc_switching.hpp"

#include "pcwqd/constants.hpp"
#include "pcwqd/error.hpp"
#include "pcwqd/least_squares.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace pcwqd {

VoltageResponse VoltageResponse::lorentzian(double width_v) {
    if (!(width_v > 0.0)) throw ValidationError("Lorentzian response width must be positive");
    VoltageResponse s;
    s.kind_ = Kind::Lorentzian;
    s.width_ = width_v;
    return s;
}

VoltageResponse VoltageResponse::flat() {
    VoltageResponse s;
    s.kind_ = Kind::Flat;
    s.width_ = std::numeric_limits<double>::infinity();
    return s;
}

VoltageResponse VoltageResponse::tabulated(std::vector<double> offsets_v, std::vector<double> response) {
    if (offsets_v.size() != response.size() || offsets_v.size() < 2) {
        throw ValidationError("tabulated response needs matching tables of at least two points");
    }
    for (std::size_t i = 1; i < offsets_v.size(); ++i) {
        if (!(offsets_v[i] > offsets_v[i - 1])) throw ValidationError("tabulated response offsets must increase");
    }
    const double peak = *std::max_element(response.begin(), response.end());
    if (!(peak > 0.0)) throw ValidationError("tabulated response must have a positive peak");
    for (double& v : response) {
        if (v < 0.0) throw ValidationError("tabulated response must be non-negative");
        v /= peak;
    }
    VoltageResponse s;
    s.kind_ = Kind::Tabulated;
    // Width: FWHM of the normalized table, used only for the small-amplitude shortcut.
    double lo = offsets_v.back(), hi = offsets_v.front();
    for (std::size_t i = 0; i < offsets_v.size(); ++i) {
        if (response[i] >= 0.5) {
            lo = std::min(lo, offsets_v[i]);
            hi = std::max(hi, offsets_v[i]);
        }
    }
    s.width_ = std::max(hi - lo, offsets_v[1] - offsets_v[0]);
    s.table_v_ = std::move(offsets_v);
    s.table_s_ = std::move(response);
    return s;
}

double VoltageResponse::operator()(double dv) const {
    switch (kind_) {
    case Kind::Flat: return 1.0;
    case Kind::Lorentzian: {
        const double x = 2.0 * dv / width_;
        return 1.0 / (1.0 + x * x);
    }
    case Kind::Tabulated: {
        if (dv < table_v_.front() || dv > table_v_.back()) return 0.0;
        const auto it = std::upper_bound(table_v_.begin(), table_v_.end(), dv);
        if (it == table_v_.end()) return table_s_.back();
        const std::size_t i = std::size_t(it - table_v_.begin());
        const double t = (dv - table_v_[i - 1]) / (table_v_[i] - table_v_[i - 1]);
        return table_s_[i - 1] + t * (table_s_[i] - table_s_[i - 1]);
    }
    }
    return 0.0;
}

std::vector<double> VoltageResponse::breakpoints(double lo, double hi) const {
    std::vector<double> out;
    if (kind_ == Kind::Lorentzian) {
        // Geometric nodes keep every panel within a few widths of smooth behaviour.
        if (lo < 0.0 && hi > 0.0) out.push_back(0.0);
        for (double x = 0.5 * width_; x < std::max(-lo, hi); x *= 2.0) {
            if (-x > lo && -x < hi) out.push_back(-x);
            if (x > lo && x < hi) out.push_back(x);
        }
        std::sort(out.begin(), out.end());
    }
    if (kind_ == Kind::Tabulated) {
        for (double v : table_v_) {
            if (v > lo && v < hi) out.push_back(v);
        }
    }
    return out;
}

std::string_view to_string(AttenuationLaw law) {
    return law == AttenuationLaw::Exponential ? "exponential" : "first_order_low_pass";
}

void RcDrive::validate() const {
    if (!(v_ac > 0.0)) throw ValidationError("v_ac must be positive");
    if (!(tau_rc > 0.0)) throw ValidationError("tau_rc must be positive");
    if (!(i0 >= 0.0)) throw ValidationError("i0 must be non-negative");
}

double attenuated_amplitude(const RcDrive& d, double f_ac) {
    if (!(f_ac >= 0.0)) throw ValidationError("drive frequency must be non-negative");
    const double x = constants::kTwoPi * f_ac * d.tau_rc;
    const double half = 0.5 * d.v_ac;
    return d.law == AttenuationLaw::Exponential ? half * std::exp(-x) : half / std::sqrt(1.0 + x * x);
}

double eq1_intensity(const RcDrive& d, const VoltageResponse& s, double f_ac) {
    d.validate();
    const double amp = attenuated_amplitude(d, f_ac);
    if (amp <= 1e-6 * s.width_v()) return d.i0 * s(0.0);

    std::vector<double> nodes{-amp};
    for (double b : s.breakpoints(-amp, amp)) nodes.push_back(b);
    nodes.push_back(amp);

    // Two Kronrod orders per panel; their difference is the error estimate (the built-in
    // estimate is dominated by a pessimistic round-off floor on short panels).
    using boost::math::quadrature::gauss_kronrod;
    auto f = [&](double v) { return s(v); };
    double integral = 0.0, error = 0.0;
    for (std::size_t i = 1; i < nodes.size(); ++i) {
        const double lo = nodes[i - 1], hi = nodes[i];
        const double i15 = gauss_kronrod<double, 15>::integrate(f, lo, hi, 6, 1e-11);
        const double i31 = gauss_kronrod<double, 31>::integrate(f, lo, hi, 6, 1e-11);
        integral += i31;
        error += std::abs(i31 - i15);
    }
    if (!(error <= 1e-8 * std::abs(integral)) && error > 1e-300) {
        throw FitError(FitFailure::QuadratureFailure, "window integral missed its tolerance");
    }
    return d.i0 * integral / (2.0 * amp);
}

double time_domain_oracle(const RcDrive& d, const VoltageResponse& s, double f_ac, DwellKernel kernel,
                          std::size_t n_steps) {
    d.validate();
    if (n_steps < 1000) throw ValidationError("time_domain_oracle needs at least 1000 steps");
    const double x = constants::kTwoPi * f_ac * d.tau_rc;
    const double amp = 0.5 * d.v_ac * (d.law == AttenuationLaw::Exponential ? std::exp(-x) : 1.0 / std::sqrt(1.0 + x * x));

    auto wave = [&](double phase) {
        if (kernel == DwellKernel::Sinusoid) return std::sin(constants::kTwoPi * phase);
        return phase < 0.5 ? 4.0 * phase - 1.0 : 3.0 - 4.0 * phase;
    };
    auto sample = [&](std::size_t k) { return s(amp * wave(double(k) / double(n_steps))); };
    double acc = 0.5 * (sample(0) + sample(n_steps));
    for (std::size_t k = 1; k < n_steps; ++k) acc += sample(k);
    return d.i0 * acc / double(n_steps);
}

double cutoff_frequency(double tau_rc) {
    if (!(tau_rc > 0.0)) throw ValidationError("tau_rc must be positive");
    return 1.0 / (constants::kTwoPi * tau_rc);
}

double capacitance(double tau_rc, double r_s) {
    if (!(tau_rc >= 0.0) || !(r_s > 0.0)) throw ValidationError("capacitance needs tau >= 0 and r_s > 0");
    return tau_rc / r_s;
}

TauFit fit_tau_rc(std::span<const RcPoint> data, const RcDrive& d0, const VoltageResponse& s, bool fit_i0) {
    d0.validate();
    if (data.size() < 4) throw FitError(FitFailure::InsufficientSpan, "need at least four frequency points");
    double imin = std::numeric_limits<double>::infinity(), imax = 0.0;
    for (const RcPoint& p : data) {
        if (!(p.intensity > 0.0) || !(p.f_ac >= 0.0)) throw ValidationError("fit_tau_rc: invalid data point");
        imin = std::min(imin, p.intensity);
        imax = std::max(imax, p.intensity);
    }
    if ((imax - imin) < 0.05 * imax) {
        throw FitError(FitFailure::InsufficientSpan, "intensity shows no modulation transition");
    }

    const double i0_start = d0.i0 > 0.0 ? d0.i0 : imax;
    auto cost_at = [&](double tau, double i0) {
        RcDrive d = d0;
        d.tau_rc = tau;
        d.i0 = i0;
        double c = 0.0;
        for (const RcPoint& p : data) {
            const double r = eq1_intensity(d, s, p.f_ac) / p.intensity - 1.0;
            c += r * r;
        }
        return c;
    };
    // Coarse log grid seeds the local fit so a poor tau guess cannot trap it on a plateau.
    double best_tau = d0.tau_rc, best_cost = cost_at(d0.tau_rc, i0_start);
    for (int k = 0; k <= 120; ++k) {
        const double tau = std::pow(10.0, -10.0 + 8.0 * k / 120.0);
        const double c = cost_at(tau, i0_start);
        if (c < best_cost) {
            best_cost = c;
            best_tau = tau;
        }
    }

    const Eigen::Index np = fit_i0 ? 2 : 1;
    auto residuals = [&](const lsq::Vector& q, lsq::Vector& r) {
        RcDrive d = d0;
        d.tau_rc = std::exp(q[0]);
        d.i0 = fit_i0 ? q[1] * i0_start : i0_start;
        for (std::size_t k = 0; k < data.size(); ++k) {
            r[Eigen::Index(k)] = eq1_intensity(d, s, data[k].f_ac) / data[k].intensity - 1.0;
        }
    };
    lsq::Vector q0(np);
    q0[0] = std::log(best_tau);
    if (fit_i0) q0[1] = 1.0;
    const lsq::Vector rel = lsq::Vector::Constant(np, 1e-7);
    auto in_domain = [&](const lsq::Vector& q) { return q[0] > -40.0 && q[0] < 10.0 && (!fit_i0 || q[1] > 0.0); };
    const lsq::Result res =
        lsq::minimize(lsq::with_numeric_jacobian(residuals, rel), q0, Eigen::Index(data.size()), {}, in_domain);
    if (res.status == lsq::Status::MaxIterations) throw FitError(FitFailure::NonConvergence, "fit_tau_rc hit the iteration cap");

    TauFit fit;
    fit.law = d0.law;
    fit.tau_rc = std::exp(res.params[0]);
    fit.i0 = fit_i0 ? res.params[1] * i0_start : i0_start;
    const lsq::Matrix cov = res.covariance();
    fit.tau_sigma = fit.tau_rc * std::sqrt(std::max(cov(0, 0), 0.0));
    fit.i0_sigma = fit_i0 ? i0_start * std::sqrt(std::max(cov(1, 1), 0.0)) : 0.0;
    fit.cutoff_hz = cutoff_frequency(fit.tau_rc);
    fit.rms_relative_residual = std::sqrt(res.cost / double(data.size()));
    fit.iterations = res.iterations;
    if (res.status == lsq::Status::IllConditioned || !(fit.tau_sigma < 0.5 * fit.tau_rc)) {
        throw FitError(FitFailure::InsufficientSpan, "frequency sweep does not constrain tau_rc");
    }
    return fit;
}

} // namespace pcwqd
