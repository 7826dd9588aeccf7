#pragma once

#include "pcwqd/least_squares.hpp"

#include <optional>
#include <span>

namespace pcwqd {

/// Ideal diode in series with r_s and shunted by r_p across the junction.
///
/// At cryogenic temperature n and T are degenerate; fits vary n at fixed temperature.
struct DiodeParams {
    double i_sat = 1e-19;       // A
    double n_ideality = 217.0;
    double temperature = 1.6;   // K
    double r_s = 7e3;           // ohm
    double r_p = 10e9;          // ohm

    double n_vt() const; // n k_B T / q, V
    void validate() const;
};

/// Current through the device at applied voltage v (A).
///
/// Solves I = i_sat (exp((v - I r_s) / (n V_T)) - 1) + (v - I r_s) / r_p for I; the exponential is
/// evaluated in the log domain inside a bracket where it cannot overflow.
double diode_current(const DiodeParams& p, double v);

/// |I - f(v - I r_s)| for a candidate current; used to check the implicit solution.
double diode_residual(const DiodeParams& p, double v, double current);

struct IvPoint {
    double v = 0.0; // V
    double i = 0.0; // A
};

struct IvFitOptions {
    /// Source-meter noise floor (A): residuals are logarithmic above it and linear below it.
    double noise_floor = 1e-12;
    double temperature = 1.6;
    lsq::Options solver;
};

struct DiodeFit {
    DiodeParams params;
    DiodeParams sigma; // 1-sigma uncertainties, same fields (temperature unused)
    double rms_residual = 0.0;
    int iterations = 0;
};

/// Throws FitError(InsufficientSpan) unless the data cover both the reverse and forward branches.
DiodeFit fit_iv(std::span<const IvPoint> data, const std::optional<DiodeParams>& init = {},
                const IvFitOptions& opts = {});

} // namespace pcwqd
