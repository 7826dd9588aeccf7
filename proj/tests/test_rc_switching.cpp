#include "oracles.hpp"

#include "pcwqd/error.hpp"
#include "pcwqd/rc_switching.hpp"
#include "pcwqd/synthesis.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

using namespace pcwqd;

namespace {

std::vector<double> log_grid(double lo, double hi, int n) {
    std::vector<double> out;
    for (int i = 0; i < n; ++i) out.push_back(lo * std::pow(hi / lo, double(i) / (n - 1)));
    return out;
}

} // namespace

TEST_CASE("attenuated amplitude") {
    const RcDrive d;
    CHECK(attenuated_amplitude(d, 0.0) == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(attenuated_amplitude(d, cutoff_frequency(d.tau_rc)) == doctest::Approx(18.39e-3).epsilon(1e-3));
    CHECK(attenuated_amplitude(d, 1e12) == 0.0);
    RcDrive lp = d;
    lp.law = AttenuationLaw::FirstOrderLowPass;
    CHECK(attenuated_amplitude(lp, cutoff_frequency(d.tau_rc)) == doctest::Approx(0.05 / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("cutoff frequency and capacitance") {
    CHECK(cutoff_frequency(0.4e-6) == doctest::Approx(397.9e3).epsilon(1e-4));
    CHECK(cutoff_frequency(40e-9) == doctest::Approx(3.98e6).epsilon(1e-3));
    CHECK(capacitance(0.4e-6, 7e3) == doctest::Approx(57.1e-12).epsilon(1e-3));
    CHECK(capacitance(0.28e-6, 7e3) == doctest::Approx(40e-12).epsilon(1e-9));
    CHECK(capacitance(0.0, 7e3) == 0.0);
}

TEST_CASE("window integral of a 1 mV Lorentzian at 50 mV amplitude") {
    RcDrive d;
    d.i0 = 1.0;
    const auto s = VoltageResponse::lorentzian(1e-3);
    const double got = eq1_intensity(d, s, 0.0);
    CHECK(got == doctest::Approx(oracle::lorentzian_window_mean(0.05, 1e-3)).epsilon(1e-10));
    CHECK(std::abs(got - 0.0156) < 1e-4);
}

TEST_CASE("intensity saturates to the unmodulated value") {
    RcDrive d;
    d.i0 = 2500.0;
    const auto s = VoltageResponse::lorentzian(1e-3);
    CHECK(eq1_intensity(d, s, 1e9) == 2500.0);
    // A at exactly the 1e-6 width threshold
    const double f = std::log(d.v_ac / 2.0 / 1e-9) / (2.0 * std::numbers::pi * d.tau_rc);
    CHECK(eq1_intensity(d, s, f * 1.0000001) == 2500.0);
}

TEST_CASE("flat response gives i0 at every frequency") {
    RcDrive d;
    d.i0 = 123.0;
    for (double f : log_grid(1.0, 1e9, 25)) CHECK(eq1_intensity(d, VoltageResponse::flat(), f) == doctest::Approx(123.0).epsilon(1e-12));
}

TEST_CASE("intensity rises monotonically with frequency and stays within bounds") {
    RcDrive d;
    d.i0 = 1.0;
    const auto s = VoltageResponse::lorentzian(1e-3);
    const double floor = eq1_intensity(d, s, 0.0);
    double prev = 0.0;
    for (double f : log_grid(10.0, 1e8, 400)) {
        const double v = eq1_intensity(d, s, f);
        CHECK(v >= prev);
        CHECK(v >= floor * (1.0 - 1e-12));
        CHECK(v <= 1.0);
        prev = v;
    }
}

TEST_CASE("uniform-kernel oracle agrees with the window integral") {
    RcDrive d;
    d.i0 = 1.0;
    const auto s = VoltageResponse::lorentzian(1e-3);
    for (double f : log_grid(100.0, 60e6, 30)) {
        const double a = eq1_intensity(d, s, f);
        const double b = time_domain_oracle(d, s, f, DwellKernel::Uniform, 1000000);
        CAPTURE(f);
        CHECK(std::abs(a / b - 1.0) < 1e-6);
    }
}

TEST_CASE("sinusoidal sweep spends less time on resonance") {
    RcDrive d;
    d.i0 = 1.0;
    const auto s = VoltageResponse::lorentzian(1e-3);
    const double u = time_domain_oracle(d, s, 0.0, DwellKernel::Uniform, 1000000);
    const double sn = time_domain_oracle(d, s, 0.0, DwellKernel::Sinusoid, 1000000);
    CHECK(sn == doctest::Approx(oracle::lorentzian_sine_mean(0.05, 1e-3)).epsilon(1e-9));
    CHECK(sn / u == doctest::Approx(0.640666416906).epsilon(1e-9));
    CHECK(sn < u);

    RcDrive still = d;
    still.v_ac = 0.0;
    CHECK_THROWS_AS(time_domain_oracle(still, s, 0.0, DwellKernel::Uniform, 1000), ValidationError);
    CHECK_THROWS_AS(time_domain_oracle(d, s, 0.0, DwellKernel::Uniform, 999), ValidationError);
}

TEST_CASE("tabulated response") {
    const auto s = VoltageResponse::tabulated({-2e-3, 0.0, 2e-3}, {0.0, 4.0, 0.0});
    CHECK(s(0.0) == doctest::Approx(1.0));
    CHECK(s(1e-3) == doctest::Approx(0.5));
    CHECK(s(-3e-3) == 0.0);
    RcDrive d;
    d.i0 = 1.0;
    d.v_ac = 4e-3;
    CHECK(eq1_intensity(d, s, 0.0) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK_THROWS_AS(VoltageResponse::tabulated({0.0, -1.0}, {1.0, 1.0}), ValidationError);
}

TEST_CASE("tau fit recovers 0.4 us from a noisy sweep") {
    RcDrive d;
    d.i0 = 1e4;
    const auto s = VoltageResponse::lorentzian(1e-3);
    const auto data = synthesize_rc(d, s, 100.0, 60e6, 60, 0.01, 3);
    RcDrive d0 = d;
    d0.tau_rc = 1e-6;
    d0.i0 = 5e3;
    const TauFit f = fit_tau_rc(data, d0, s);
    CHECK(f.tau_rc == doctest::Approx(0.4e-6).epsilon(0.03));
    CHECK(f.cutoff_hz == doctest::Approx(cutoff_frequency(f.tau_rc)));
    CHECK(f.tau_sigma > 0.0);
}

TEST_CASE("tau fit round trips random time constants") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto s = VoltageResponse::lorentzian(1e-3);
    for (int k = 0; k < 20; ++k) {
        RcDrive d;
        d.i0 = 1e4;
        d.tau_rc = 10e-9 * std::pow(1000.0, u(rng));
        const auto data = synthesize_rc(d, s, 100.0, 1e8, 80, 0.01, 100 + std::uint64_t(k));
        RcDrive d0 = d;
        d0.tau_rc = d.tau_rc * (0.5 + u(rng));
        d0.i0 = 8e3;
        CAPTURE(d.tau_rc);
        CHECK(fit_tau_rc(data, d0, s).tau_rc == doctest::Approx(d.tau_rc).epsilon(0.03));
    }
}

TEST_CASE("tau fit at 40 ns reports a 3.98 MHz cutoff") {
    RcDrive d;
    d.i0 = 1e4;
    d.tau_rc = 40e-9;
    const auto s = VoltageResponse::lorentzian(1e-3);
    const auto data = synthesize_rc(d, s, 1e3, 1e9, 70, 0.01, 6);
    const TauFit f = fit_tau_rc(data, d, s);
    CHECK(f.cutoff_hz == doctest::Approx(3.98e6).epsilon(0.03));
}

TEST_CASE("flat sweep has no resolvable transition") {
    std::vector<RcPoint> flat;
    for (double f : log_grid(100.0, 60e6, 40)) flat.push_back({f, 1000.0});
    try {
        fit_tau_rc(flat, RcDrive{}, VoltageResponse::lorentzian(1e-3));
        FAIL("expected InsufficientSpan");
    } catch (const FitError& e) {
        CHECK(e.kind() == FitFailure::InsufficientSpan);
    }
}
