#include "pcwqd/wgqed_model.hpp"

#include "pcwqd/error.hpp"

#include <cmath>
#include <string>

namespace pcwqd {

namespace {

constexpr double kEdgeSteepness = 6.0;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace

void EmitterModel::validate() const {
    if (!(beta >= 0.0 && beta <= 1.0)) throw ValidationError("beta must lie in [0, 1]");
    if (!(gamma_tot > 0.0)) throw ValidationError("gamma_tot must be positive");
    if (!(fano_amp >= 0.0)) throw ValidationError("fano_amp must be non-negative");
    if (!(v_on < v_off)) throw ValidationError("plateau requires v_on < v_off");
}

void BandEdgeModel::validate() const {
    if (!(lambda_c > 0.0)) throw ValidationError("lambda_c must be positive");
    if (!(suppression_db >= 20.0)) throw ValidationError("suppression_db must be at least 20 dB");
    if (!(edge_width > 0.0)) throw ValidationError("edge_width must be positive");
}

double BandEdgeModel::floor() const { return std::pow(10.0, -suppression_db / 10.0); }

void ScanTrace::validate() const {
    if (axis.size() != values.size()) throw ValidationError("scan axis and values differ in length");
    for (std::size_t i = 1; i < axis.size(); ++i) {
        if (!(axis[i] > axis[i - 1])) {
            throw ValidationError("scan axis not strictly increasing at index " + std::to_string(i));
        }
    }
    for (double v : values) {
        if (!(v >= 0.0)) throw ValidationError("scan values must be non-negative");
    }
}

std::complex<double> transmission_amplitude(const EmitterModel& m, double detuning_hz) {
    using namespace std::complex_literals;
    const double x = 2.0 * detuning_hz / m.gamma_tot;
    return 1.0 - m.beta / (1.0 - 1i * x) + std::polar(m.fano_amp, m.fano_phase);
}

ScanTrace transmission_spectrum(const EmitterModel& m, std::span<const double> axis_hz) {
    if (axis_hz.empty()) throw ValidationError("transmission_spectrum: empty axis");
    ScanTrace out;
    out.axis.assign(axis_hz.begin(), axis_hz.end());
    out.values.reserve(axis_hz.size());
    for (double nu : axis_hz) out.values.push_back(transmission(m, nu - m.nu0));
    if (out.axis.size() > 1) out.step = (out.axis.back() - out.axis.front()) / double(out.axis.size() - 1);
    out.validate();
    return out;
}

double band_envelope(const BandEdgeModel& b, double lambda_m) {
    if (!(lambda_m > 0.0)) throw ValidationError("band_envelope: wavelength must be positive");
    const double s = (lambda_m - b.lambda_c) / b.edge_width;
    double g;
    if (s <= -1.0) {
        g = 0.0;
    } else if (s >= 1.0) {
        g = 1.0;
    } else {
        const double lo = logistic(-kEdgeSteepness);
        const double hi = logistic(kEdgeSteepness);
        g = (logistic(kEdgeSteepness * s) - lo) / (hi - lo);
    }
    return 1.0 - (1.0 - b.floor()) * g;
}

std::optional<double> stark_resonance(const EmitterModel& m, double v_gate) {
    if (v_gate < m.v_on || v_gate > m.v_off) return std::nullopt;
    return m.nu0 + m.stark_slope * (v_gate - m.v_on);
}

} // namespace pcwqd
