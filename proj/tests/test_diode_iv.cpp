#include "pcwqd/diode_iv.hpp"
#include "pcwqd/error.hpp"
#include "pcwqd/synthesis.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace pcwqd;

TEST_CASE("no current at zero bias") { CHECK(diode_current(DiodeParams{}, 0.0) == 0.0); }

TEST_CASE("reverse branch is set by the parallel resistance") {
    const DiodeParams p;
    const double i = diode_current(p, -1.0);
    CHECK(i == doctest::Approx(-0.1e-9).epsilon(0.01));
    CHECK(i == doctest::Approx(-1.0 / (p.r_p + p.r_s) - p.i_sat).epsilon(1e-9));
}

TEST_CASE("current is strictly increasing and finite at 1.6 K") {
    const DiodeParams p;
    double prev = -1e300;
    for (int k = 0; k <= 4000; ++k) {
        const double v = -3.0 + 6.0 * k / 4000.0;
        const double i = diode_current(p, v);
        CHECK(std::isfinite(i));
        CHECK(i > prev);
        prev = i;
    }
}

TEST_CASE("implicit solution residual") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 200; ++k) {
        DiodeParams p;
        p.i_sat = std::pow(10.0, -20.0 + 5.0 * u(rng));
        p.n_ideality = 50.0 + 400.0 * u(rng);
        p.r_s = 1e3 + 2e4 * u(rng);
        p.r_p = std::pow(10.0, 8.0 + 4.0 * u(rng));
        const double v = -2.0 + 5.0 * u(rng);
        const double i = diode_current(p, v);
        CHECK(diode_residual(p, v, i) <= 1e-10 * std::max(std::abs(i), p.i_sat));
    }
}

TEST_CASE("deep forward bias approaches the series-resistance asymptote") {
    const DiodeParams p;
    const double v1 = 3.0, v2 = 3.5;
    const double slope = (diode_current(p, v2) - diode_current(p, v1)) / (v2 - v1);
    CHECK(slope == doctest::Approx(1.0 / 7e3).epsilon(0.01));
    const double v_knee = v2 - diode_current(p, v2) * p.r_s;
    CHECK(v_knee > 0.3);
    CHECK(v_knee < 1.2);
}

TEST_CASE("reverse saturation without leakage") {
    DiodeParams p;
    p.i_sat = 1e-12;
    p.n_ideality = 1.0;
    p.temperature = 300.0;
    p.r_p = 1e30;
    CHECK(diode_current(p, -5.0) == doctest::Approx(-p.i_sat).epsilon(1e-9));
}

TEST_CASE("fit recovers series and parallel resistance") {
    const DiodeParams truth;
    const auto data = synthesize_iv(truth, -1.5, 2.0, 141);
    const DiodeFit f = fit_iv(data);
    CHECK(f.params.r_s == doctest::Approx(7e3).epsilon(0.02));
    CHECK(f.params.r_p == doctest::Approx(10e9).epsilon(0.02));
    CHECK(f.params.temperature == 1.6);
}

TEST_CASE("fit round trips random diodes") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 10; ++k) {
        DiodeParams p;
        p.i_sat = std::pow(10.0, -20.0 + 3.0 * u(rng));
        p.n_ideality = 150.0 + 200.0 * u(rng);
        p.r_s = 3e3 + 1.2e4 * u(rng);
        p.r_p = std::pow(10.0, 9.0 + 2.0 * u(rng));
        const auto data = synthesize_iv(p, -1.5, 2.5, 161);
        const DiodeFit f = fit_iv(data);
        CAPTURE(k);
        CHECK(f.params.r_s == doctest::Approx(p.r_s).epsilon(0.02));
        CHECK(f.params.r_p == doctest::Approx(p.r_p).epsilon(0.02));
    }
}

TEST_CASE("turn-on near 0.7 V with a 7 kOhm series slope") {
    DiodeParams p;
    p.i_sat = 1e-19;
    p.n_ideality = 217.0;
    // Current reaches 100 nA close to 0.7 V.
    double v = 0.0;
    while (diode_current(p, v) < 1e-7) v += 1e-3;
    CHECK(v > 0.6);
    CHECK(v < 0.9);

    auto data = synthesize_iv(p, -1.0, 2.0, 121);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> noise(0.0, 0.01);
    for (auto& d : data) d.i *= 1.0 + noise(rng);
    CHECK(fit_iv(data).params.r_s == doctest::Approx(7e3).epsilon(0.1));
}

TEST_CASE("reverse branch alone cannot identify the diode") {
    const auto data = synthesize_iv(DiodeParams{}, -1.5, 0.0, 41);
    try {
        fit_iv(data);
        FAIL("expected InsufficientSpan");
    } catch (const FitError& e) {
        CHECK(e.kind() == FitFailure::InsufficientSpan);
    }
}

TEST_CASE("parameter validation") {
    DiodeParams p;
    p.r_s = 0.0;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p = DiodeParams{};
    p.r_p = 1e3;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    CHECK(DiodeParams{}.n_vt() == doctest::Approx(217.0 * 1.380649e-23 * 1.6 / 1.602176634e-19).epsilon(1e-12));
}
