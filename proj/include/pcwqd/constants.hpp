#pragma once

#include <numbers>

namespace pcwqd::constants {

inline constexpr double kBoltzmann = 1.380649e-23;      // J/K
inline constexpr double kElementaryCharge = 1.602176634e-19; // C
inline constexpr double kSpeedOfLight = 299792458.0;     // m/s
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Thermal voltage k_B T / q in volts.
constexpr double thermal_voltage(double temperature_k) {
    return kBoltzmann * temperature_k / kElementaryCharge;
}

constexpr double wavelength_to_frequency(double lambda_m) { return kSpeedOfLight / lambda_m; }
constexpr double frequency_to_wavelength(double nu_hz) { return kSpeedOfLight / nu_hz; }

} // namespace pcwqd::constants
