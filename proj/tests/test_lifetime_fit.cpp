#include "oracles.hpp"

#include "pcwqd/error.hpp"
#include "pcwqd/lifetime_fit.hpp"
#include "pcwqd/synthesis.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

using namespace pcwqd;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

DecayHistogram empty_histogram(double width, std::size_t n, std::vector<double> irf) {
    DecayHistogram h;
    for (std::size_t i = 0; i <= n; ++i) h.bin_edges.push_back(width * double(i));
    h.counts.assign(n, 0.0);
    h.irf = std::move(irf);
    return h;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

} // namespace

TEST_CASE("convolution with a Gaussian IRF matches the exponentially modified Gaussian") {
    const double gamma = kTwoPi * 460e6, mu = 0.6e-9, sigma = 50e-12, w = 0.25e-12;
    const std::size_t n = 16000;
    const DecayHistogram h = empty_histogram(w, n, oracle::gaussian_irf(mu, sigma, w, n));
    const std::vector<double> model = convolve_model(gamma, 1.0, 0.0, 0.0, h);
    double peak = 0.0, err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double want = oracle::emg_cdf(w * double(i + 1), gamma, mu, sigma) - oracle::emg_cdf(w * double(i), gamma, mu, sigma);
        peak = std::max(peak, want);
        err = std::max(err, std::abs(model[i] - want));
    }
    CHECK(err / peak < 1e-6);
}

TEST_CASE("EMG agreement improves quadratically with the bin width") {
    const double gamma = kTwoPi * 460e6, mu = 0.6e-9, sigma = 50e-12;
    std::vector<double> errs;
    for (double w : {2e-12, 1e-12}) {
        const auto n = std::size_t(std::lround(4e-9 / w));
        const DecayHistogram h = empty_histogram(w, n, oracle::gaussian_irf(mu, sigma, w, n));
        const std::vector<double> model = convolve_model(gamma, 1.0, 0.0, 0.0, h);
        double peak = 0.0, err = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double want = oracle::emg_cdf(w * double(i + 1), gamma, mu, sigma) - oracle::emg_cdf(w * double(i), gamma, mu, sigma);
            peak = std::max(peak, want);
            err = std::max(err, std::abs(model[i] - want));
        }
        errs.push_back(err / peak);
    }
    CHECK(errs[0] / errs[1] == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("single-bin IRF gives a pure exponential tail") {
    const double gamma = kTwoPi * 300e6, w = 8e-12;
    std::vector<double> irf(500, 0.0);
    irf[40] = 1.0;
    const DecayHistogram h = empty_histogram(w, 500, irf);
    const auto m = convolve_model(gamma, 1e4, 0.0, 0.0, h);
    // Before the onset only the tail of the previous pulse remains.
    for (std::size_t i = 0; i < 40; ++i) CHECK(m[i] < 1e-10 * m[41]);
    for (std::size_t i = 42; i < 300; ++i) CHECK(m[i + 1] / m[i] == doctest::Approx(std::exp(-gamma * w)).epsilon(1e-10));

    // Shifting the onset by whole bins shifts the model.
    const auto shifted = convolve_model(gamma, 1e4, 5.0 * w, 0.0, h);
    for (std::size_t i = 0; i + 5 < 400; ++i) CHECK(shifted[i + 5] == doctest::Approx(m[i]).epsilon(1e-9).scale(m[41]));
}

TEST_CASE("a very fast decay reproduces the IRF shape") {
    const double w = 4e-12;
    const std::vector<double> irf = oracle::gaussian_irf(0.4e-9, 40e-12, w, 400);
    const DecayHistogram h = empty_histogram(w, 400, irf);
    const auto m = convolve_model(1e16, 1.0, 0.0, 0.0, h);
    double total = 0.0;
    for (double v : irf) total += v;
    for (std::size_t i = 0; i < 400; ++i) CHECK(std::abs(m[i] - irf[i] / total) < 1e-3 * irf[100]);
}

TEST_CASE("convolution is linear in amplitude and offset by the background") {
    const DecayHistogram h = empty_histogram(4e-12, 800, oracle::gaussian_irf(0.5e-9, 30e-12, 4e-12, 800));
    const double gamma = kTwoPi * 460e6;
    const auto a = convolve_model(gamma, 1e3, 20e-12, 0.0, h);
    const auto b = convolve_model(gamma, 3e3, 20e-12, 0.0, h);
    const auto c = convolve_model(gamma, 1e3, 20e-12, 2.5, h);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(b[i] == doctest::Approx(3.0 * a[i]).epsilon(1e-12));
        CHECK(c[i] == doctest::Approx(a[i] + 2.5).epsilon(1e-12));
    }
}

TEST_CASE("decay fit round trips the transform-limited linewidth") {
    for (double tl : {460e6, 230e6}) {
        DecaySpec spec;
        spec.gamma = kTwoPi * tl;
        spec.seed = 4;
        const DecayFit f = fit_decay(synthesize_decay(spec));
        CAPTURE(tl);
        CHECK(f.transform_limit == doctest::Approx(tl).epsilon(0.02));
        CHECK(f.gamma > 0.0);
        CHECK(f.transform_limit == f.gamma / kTwoPi);
    }
}

TEST_CASE("decay fit is insensitive to the IRF width") {
    for (double sigma : {10e-12, 30e-12, 60e-12, 120e-12}) {
        DecaySpec spec;
        spec.irf_sigma = sigma;
        spec.seed = 8;
        CAPTURE(sigma);
        CHECK(fit_decay(synthesize_decay(spec)).transform_limit == doctest::Approx(460e6).epsilon(0.02));
    }
}

TEST_CASE("decay fit round trips random rates, offsets and backgrounds") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 10; ++k) {
        DecaySpec spec;
        spec.gamma = kTwoPi * (150e6 + 850e6 * u(rng));
        spec.t0 = 100e-12 * (u(rng) - 0.5);
        spec.background = 5.0 * u(rng);
        spec.amplitude = 2e5;
        spec.seed = 100 + std::uint64_t(k);
        const DecayFit f = fit_decay(synthesize_decay(spec));
        CAPTURE(k);
        CHECK(f.gamma == doctest::Approx(spec.gamma).epsilon(0.02));
    }
}

TEST_CASE("background-only and sparse histograms are rejected") {
    DecaySpec spec;
    spec.amplitude = 0.0;
    spec.background = 2.0;
    const DecayHistogram bg = synthesize_decay(spec);
    REQUIRE(bg.total_counts() > 1000.0);
    CHECK_THROWS_AS(fit_decay(bg), FitError);

    DecaySpec sparse;
    sparse.amplitude = 300.0;
    sparse.background = 0.0;
    try {
        fit_decay(synthesize_decay(sparse));
        FAIL("expected InsufficientCounts");
    } catch (const FitError& e) {
        CHECK(e.kind() == FitFailure::InsufficientCounts);
    }
}

TEST_CASE("histogram validation") {
    DecayHistogram h = empty_histogram(4e-12, 10, std::vector<double>(10, 1.0));
    CHECK_NOTHROW(h.validate());
    DecayHistogram bad = h;
    bad.bin_edges[3] += 1e-12;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = h;
    bad.counts[2] = -1.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = h;
    bad.rep_period = 10e-12;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = h;
    bad.irf.assign(10, 0.0);
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("transform limit times lifetime is one over two pi") {
    DecaySpec spec;
    spec.seed = 12;
    const DecayFit f = fit_decay(synthesize_decay(spec));
    CHECK(f.transform_limit * kTwoPi * f.lifetime() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("transform ratio") {
    const Ratio r = transform_ratio(538e6, 0.0, 460e6, 0.0);
    CHECK(r.value == doctest::Approx(1.17).epsilon(0.001));
    CHECK(transform_ratio(460e6, 1e6, 460e6, 1e6).value == 1.0);
    const Ratio two = transform_ratio(920e6, 0.05 * 920e6, 460e6, 0.05 * 460e6);
    CHECK(two.value == doctest::Approx(2.0));
    CHECK(two.sigma == doctest::Approx(0.1414).epsilon(1e-3));
    CHECK_THROWS_AS(transform_ratio(0.0, 0.0, 460e6, 0.0), ValidationError);
}

TEST_CASE("Poisson likelihood is less biased than least squares at low counts") {
    std::vector<double> mle, lsq;
    for (std::uint64_t s = 1; s <= 500; ++s) {
        DecaySpec spec;
        spec.amplitude = 1100.0;
        spec.background = 0.0;
        spec.bin_width = 64e-12;
        spec.n_bins = 94;
        spec.seed = s;
        const DecayHistogram h = synthesize_decay(spec);
        try {
            const double a = fit_decay(h).gamma / spec.gamma - 1.0;
            const double b = fit_decay_least_squares(h).gamma / spec.gamma - 1.0;
            mle.push_back(a);
            lsq.push_back(b);
        } catch (const FitError&) {
        }
    }
    REQUIRE(mle.size() >= 450);
    CHECK(std::abs(median(mle)) < 0.5 * std::abs(median(lsq)));
}
