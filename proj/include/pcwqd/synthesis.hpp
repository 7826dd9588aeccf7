#pragma once

#include "pcwqd/diode_iv.hpp"
#include "pcwqd/lifetime_fit.hpp"
#include "pcwqd/rc_switching.hpp"
#include "pcwqd/wgqed_model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pcwqd {

/// Emitter population drawn for a synthetic transmission scan.
///
/// Emitters are placed one per equal-width frequency bin (jittered inside the central part of
/// the bin) so that neighbours stay well separated. A fixed share is made deliberately shallow
/// (depth of a few noise units) and another share spectrally diffusive (centre wandering from
/// sample to sample); the rest are clean Fano dips.
struct PopulationSpec {
    std::size_t count = 79;
    double lambda_min = 944e-9; // m
    double lambda_max = 950e-9; // m
    double step_hz = 100e6;
    double gamma_min = 120e6; // Hz
    double gamma_max = 1660e6;
    double beta_min = 0.2;
    double beta_max = 0.9;
    double fano_amp_max = 0.1;
    double noise = 0.005; // relative, multiplicative Gaussian
    std::size_t shallow_count = 14;
    std::size_t diffusive_count = 14;
    double shallow_snr_min = 3.0; // depth / noise of shallow emitters
    double shallow_snr_max = 4.2;
    double shallow_gamma_min = 500e6;
    double diffusion_min = 1.0; // centre jitter in units of gamma_tot
    double diffusion_max = 2.0;
    BandEdgeModel band;
    std::uint64_t seed = 1;

    void validate() const;
};

enum class EmitterClass { Clean, Shallow, Diffusive };
std::string_view to_string(EmitterClass c);

struct EmitterTruth {
    EmitterModel model;
    EmitterClass cls = EmitterClass::Clean;
    double diffusion_hz = 0.0; // rms centre jitter
};

struct SyntheticScan {
    ScanTrace trace;
    std::vector<EmitterTruth> truth; // ordered by nu0
    std::vector<std::string> warnings;
};

SyntheticScan synthesize_scan(const PopulationSpec& spec);

/// Transmission versus gate voltage (rows) and laser frequency (columns).
struct PlateauMap {
    std::vector<double> v_grid;  // V
    std::vector<double> axis_hz; // Hz
    std::vector<double> values;  // row-major, v_grid.size() x axis_hz.size()

    double at(std::size_t iv, std::size_t jf) const { return values[iv * axis_hz.size() + jf]; }
    ScanTrace row(std::size_t iv) const;
};

PlateauMap synthesize_plateau(const EmitterModel& m, std::span<const double> v_grid, std::span<const double> axis_hz,
                              double noise, std::uint64_t seed);

struct PlateauEstimate {
    double v_on = 0.0;   // V, first row with a resolved dip
    double v_off = 0.0;  // V, last row with a resolved dip
    double slope = 0.0;  // Hz/V, ridge regression
    double intercept = 0.0; // Hz at v_on
    std::size_t rows = 0;
};

/// Re-extracts the Stark ridge from a map. Throws FitError(InsufficientSpan) with fewer than
/// two rows showing a dip.
PlateauEstimate extract_plateau(const PlateauMap& map, double min_prominence = 0.05);

struct DecaySpec {
    double gamma = 2.0 * 3.141592653589793 * 460e6; // 1/s
    double amplitude = 2e5;  // decay counts per period
    double t0 = 0.0;         // s
    double background = 1.0; // counts per bin
    double irf_sigma = 30e-12; // s, Gaussian IRF
    double irf_center = 0.5e-9; // s
    double bin_width = 4e-12;   // s
    std::size_t n_bins = 1500;
    double rep_period = 1.0 / 72.6e6;
    std::uint64_t seed = 1;
};

/// Poisson-sampled histogram of the periodic decay model with a Gaussian IRF.
DecayHistogram synthesize_decay(const DecaySpec& spec);

/// Noiseless I-V samples on a uniform voltage grid.
std::vector<IvPoint> synthesize_iv(const DiodeParams& p, double v_min, double v_max, std::size_t n);

/// eq1_intensity on a log-spaced frequency grid with relative Gaussian noise.
std::vector<RcPoint> synthesize_rc(const RcDrive& d, const VoltageResponse& s, double f_min, double f_max,
                                   std::size_t n, double noise, std::uint64_t seed);

} // namespace pcwqd
