#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace pcwqd {

/// Peak-normalized fluorescence response S(V - V_DC) of an emitter versus gate voltage.
class VoltageResponse {
public:
    enum class Kind { Lorentzian, Flat, Tabulated };

    /// Lorentzian with the given FWHM (V).
    static VoltageResponse lorentzian(double width_v);
    /// S = 1 everywhere.
    static VoltageResponse flat();
    /// Piecewise-linear table (offset V, response); normalized to unit peak, zero outside the table.
    static VoltageResponse tabulated(std::vector<double> offsets_v, std::vector<double> response);

    double operator()(double dv) const;

    Kind kind() const { return kind_; }
    double width_v() const { return width_; }
    /// Interior points where S is not smooth (table nodes, the Lorentzian peak).
    std::vector<double> breakpoints(double lo, double hi) const;

private:
    Kind kind_ = Kind::Lorentzian;
    double width_ = 1e-3;
    std::vector<double> table_v_;
    std::vector<double> table_s_;
};

enum class AttenuationLaw {
    Exponential,      // (V_AC / 2) exp(-2 pi f tau)
    FirstOrderLowPass // (V_AC / 2) / sqrt(1 + (2 pi f tau)^2)
};

std::string_view to_string(AttenuationLaw law);

struct RcDrive {
    double v_ac = 0.1;     // peak-to-peak, V
    double v_dc = 0.0;     // V
    double tau_rc = 0.4e-6; // s
    double i0 = 1.0;       // unmodulated intensity, counts/s
    AttenuationLaw law = AttenuationLaw::Exponential;

    void validate() const;
};

/// Half-amplitude of the gate modulation seen by the emitter at drive frequency f_ac (V).
double attenuated_amplitude(const RcDrive& d, double f_ac);

/// Cycle-averaged intensity: i0 times the mean of S over [-A, A], A = attenuated_amplitude.
///
/// The window average (integral divided by 2A) tends to i0 S(0) as A -> 0. Returns exactly i0 S(0)
/// once A <= 1e-6 of the response width. Throws FitError(QuadratureFailure) if the adaptive
/// Gauss-Kronrod estimate misses a 1e-8 relative tolerance.
double eq1_intensity(const RcDrive& d, const VoltageResponse& s, double f_ac);

enum class DwellKernel {
    Uniform,  // triangle-wave sweep: flat dwell density
    Sinusoid, // sine sweep: arcsine dwell density
};

/// Brute-force cycle average of i0 S(V(t) - V_DC) with V(t) = V_DC + A w(t), trapezoidal over
/// one period with n_steps intervals (n_steps >= 1000).
double time_domain_oracle(const RcDrive& d, const VoltageResponse& s, double f_ac, DwellKernel kernel,
                          std::size_t n_steps);

struct RcPoint {
    double f_ac = 0.0;      // Hz
    double intensity = 0.0; // counts/s
};

struct TauFit {
    double tau_rc = 0.0; // s
    double tau_sigma = 0.0;
    double i0 = 0.0;
    double i0_sigma = 0.0;
    double cutoff_hz = 0.0; // 1 / (2 pi tau)
    double rms_relative_residual = 0.0;
    AttenuationLaw law = AttenuationLaw::Exponential;
    int iterations = 0;
};

/// Least-squares fit of tau_rc (and i0) to intensity-versus-frequency data, relative residuals.
/// Throws FitError(InsufficientSpan) for data without a resolvable transition.
TauFit fit_tau_rc(std::span<const RcPoint> data, const RcDrive& d0, const VoltageResponse& s, bool fit_i0 = true);

double cutoff_frequency(double tau_rc);

/// C = tau_rc / r_s (F).
double capacitance(double tau_rc, double r_s);

} // namespace pcwqd
