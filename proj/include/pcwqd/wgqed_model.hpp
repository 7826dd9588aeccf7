#pragma once

#include <complex>
#include <optional>
#include <span>
#include <vector>

namespace pcwqd {

/// Physical parameters of one emitter coupled to a single-mode waveguide.
///
/// The transmission amplitude is t(d) = 1 - beta / (1 - 2i d / gamma_tot) + fano_amp e^{i fano_phase},
/// with d the laser detuning from nu0. For fano_amp = 0 the dip 1 - |t|^2 is a Lorentzian whose
/// FWHM equals gamma_tot for every beta.
struct EmitterModel {
    double nu0 = 0.0;         // Hz
    double gamma_tot = 1e9;   // Hz, FWHM
    double beta = 0.0;        // waveguide coupling fraction, [0, 1]
    double fano_amp = 0.0;    // coherent background amplitude, >= 0
    double fano_phase = 0.0;  // rad
    double stark_slope = 0.0; // Hz/V
    double v_on = 0.0;        // plateau start, V
    double v_off = 1.0;       // plateau end, V

    /// Throws ValidationError when an invariant is violated.
    void validate() const;
};

/// Band-edge transmission of the photonic-crystal waveguide.
struct BandEdgeModel {
    double lambda_c = 950.2e-9;  // m
    double suppression_db = 20.0;
    double edge_width = 0.1e-9;  // m

    void validate() const;
    double floor() const;
};

struct ScanMeta {
    double gate_voltage = 0.0;  // V
    double optical_power = 0.0; // W
};

/// Frequency-ordered samples of normalized transmission (or counts).
struct ScanTrace {
    std::vector<double> axis;   // Hz, strictly increasing
    std::vector<double> values; // >= 0
    double step = 0.0;          // Hz
    ScanMeta meta;

    std::size_t size() const { return axis.size(); }
    void validate() const;
};

std::complex<double> transmission_amplitude(const EmitterModel& m, double detuning_hz);

inline double transmission(const EmitterModel& m, double detuning_hz) {
    return std::norm(transmission_amplitude(m, detuning_hz));
}

/// |t|^2 sampled on an absolute frequency axis. Throws on an empty or non-monotonic axis.
ScanTrace transmission_spectrum(const EmitterModel& m, std::span<const double> axis_hz);

/// Band-edge transmission factor in [0, 1].
///
/// A logistic step rescaled to be exactly 1 at lambda_c - edge_width and exactly the
/// suppression floor at lambda_c + edge_width, clamped outside that interval.
double band_envelope(const BandEdgeModel& b, double lambda_m);

/// Resonance frequency at a gate voltage, or nullopt outside the charge plateau.
std::optional<double> stark_resonance(const EmitterModel& m, double v_gate);

} // namespace pcwqd
