#pragma once

// Test-only reference implementations. None of these call into the library.

#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

// |1 - beta / (1 - 2i d / gamma)|^2 without any background.
inline double bare_transmission(double beta, double gamma, double d) {
    const std::complex<double> t = 1.0 - beta / std::complex<double>(1.0, -2.0 * d / gamma);
    return std::norm(t);
}

// FWHM of a symmetric dip T(d) with its minimum at d = 0 and far level t_far, by bisection on each flank.
inline double numeric_fwhm(const std::function<double(double)>& T, double t_far, double scale) {
    const double half = 0.5 * (t_far + T(0.0));
    auto edge = [&](double sign) {
        double lo = 0.0, hi = scale;
        while ((T(sign * hi) - half) < 0.0) hi *= 2.0;
        for (int i = 0; i < 200; ++i) {
            const double mid = 0.5 * (lo + hi);
            if (T(sign * mid) < half) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return 0.5 * (lo + hi);
    };
    return edge(1.0) + edge(-1.0);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// CDF of an exponential decay (rate gamma, onset at 0) convolved with a Gaussian of mean mu, width sigma.
inline double emg_cdf(double t, double gamma, double mu, double sigma) {
    const double z = (t - mu) / sigma;
    const double expo = -gamma * (t - mu) + 0.5 * gamma * gamma * sigma * sigma;
    // Guard the product exp(large) * Phi(very negative) in the far left tail.
    if (expo > 700.0) return normal_cdf(z);
    return normal_cdf(z) - std::exp(expo) * normal_cdf(z - gamma * sigma);
}

// Gaussian IRF integrated over uniform bins starting at t = 0.
inline std::vector<double> gaussian_irf(double mu, double sigma, double width, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = normal_cdf((double(i + 1) * width - mu) / sigma) - normal_cdf((double(i) * width - mu) / sigma);
    }
    return out;
}

// Mean of a peak-normalized Lorentzian of FWHM w over the window [-A, A].
inline double lorentzian_window_mean(double A, double w) {
    const double h = 0.5 * w;
    return h * std::atan(A / h) / A;
}

// Mean of the same Lorentzian under a sinusoidal sweep of amplitude A (arcsine dwell density).
inline double lorentzian_sine_mean(double A, double w) {
    const double h = 0.5 * w;
    return h / std::sqrt(h * h + A * A);
}

// Fraction of material in a W1 strip that lies farther than d from every hole edge, counted on an
// nx x ny midpoint grid. Rows k >= 1 sit at +-k sqrt(3)/2 a with odd rows shifted by a/2.
inline double grid_area_fraction(double a, double r, int rows, double d, int nx, int ny) {
    const double rs = std::sqrt(3.0) / 2.0 * a;
    const double h = rows * rs;
    long material = 0, far = 0;
    for (int iy = 0; iy < ny; ++iy) {
        const double y = -h + (iy + 0.5) * 2.0 * h / ny;
        for (int ix = 0; ix < nx; ++ix) {
            const double x = (ix + 0.5) * a / nx;
            double best = 1e300;
            for (int k = -(rows + 2); k <= rows + 2; ++k) {
                if (k == 0) continue;
                const double cy = k * rs;
                const double shift = (std::abs(k) % 2) ? 0.5 * a : 0.0;
                for (int j = -2; j <= 2; ++j) {
                    const double cx = j * a + shift;
                    best = std::min(best, std::hypot(x - cx, y - cy));
                }
            }
            if (best <= r) continue;
            ++material;
            if (best > r + d) ++far;
        }
    }
    return double(far) / double(material);
}

} // namespace oracle
