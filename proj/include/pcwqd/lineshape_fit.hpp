#pragma once

#include "pcwqd/least_squares.hpp"
#include "pcwqd/wgqed_model.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace pcwqd {

/// A located transmission dip: a half-open index window [begin, end) into a ScanTrace.
struct DipCandidate {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t min_index = 0;
    double prominence = 0.0; // depth relative to the local baseline
    double width_hz = 0.0;   // half-depth width estimate
    double baseline = 1.0;   // local baseline level at the dip
    double noise_rms = 0.0;  // relative noise of the baseline-normalized trace

    std::size_t length() const { return end - begin; }
};

struct DetectOptions {
    double min_prominence = 0.02;
    double min_width_hz = 0.0;
    /// Running-median span used as the local baseline.
    double baseline_window_hz = 20e9;
    /// Moving-average length (samples) for the detection statistic.
    std::size_t smoothing = 5;
    /// Detection threshold in units of the smoothed noise.
    double detection_sigma = 4.0;
    /// Fit window half-width in units of the width estimate.
    double window_widths = 4.0;
    std::size_t min_window = 7;
};

std::vector<DipCandidate> detect_dips(const ScanTrace& trace, const DetectOptions& opts);

inline std::vector<DipCandidate> detect_dips(const ScanTrace& trace, double min_prominence, double min_width_hz) {
    DetectOptions opts;
    opts.min_prominence = min_prominence;
    opts.min_width_hz = min_width_hz;
    return detect_dips(trace, opts);
}

/// Robust relative noise estimate from first differences (MAD based).
double robust_noise(std::span<const double> values);

enum class DipFitStatus { Converged, NonConvergence, IllConditioned };

std::string_view to_string(DipFitStatus s);

struct DipSigma {
    double center = 0.0;
    double gamma_rt = 0.0;
    double beta_eff = 0.0;
    double fano_amp = 0.0;
    double fano_phase = 0.0;
    double baseline_slope = 0.0;
};

/// Result of fitting one dip. gamma_rt is the FWHM with the Fano background omitted.
/// beta_eff and the Fano background are in the absolute units of the trace; depth and
/// noise_rms are relative to the local baseline.
struct DipFit {
    double center = 0.0;   // Hz
    double gamma_rt = 0.0; // Hz
    double beta_eff = 0.0;
    double fano_amp = 0.0;
    double fano_phase = 0.0;      // rad
    double baseline_slope = 0.0;  // 1/Hz, relative tilt of the local baseline
    double baseline = 1.0;        // normalization applied to the window
    DipSigma sigma;
    double chi2_red = 0.0;
    double depth = 0.0;     // fitted dip depth below the far-detuned level
    double noise_rms = 0.0; // relative noise used for chi2_red and the shallow gate
    std::size_t n_points = 0;
    int iterations = 0;
    DipFitStatus status = DipFitStatus::NonConvergence;
    bool converged = false;

    /// The emitter lineshape implied by this fit (baseline tilt excluded).
    EmitterModel emitter() const;
};

struct DipFitOptions {
    bool fit_baseline_slope = true;
    lsq::Options solver;
};

/// Fits the waveguide-QED Fano lineshape to one candidate window.
///
/// Failures are reported in the status field rather than thrown.
DipFit fit_dip(const ScanTrace& trace, const DipCandidate& candidate, const std::optional<DipFit>& init = {},
               const DipFitOptions& opts = {});

/// Fits every candidate; result ordered by fitted center. Runs on `threads` workers (0 = hardware).
std::vector<DipFit> fit_dips(const ScanTrace& trace, std::span<const DipCandidate> candidates,
                             const DipFitOptions& opts = {}, unsigned threads = 0);

/// FWHM of the fitted lineshape with the Fano background removed; equals the fitted Gamma_tot.
double fwhm_symmetric(const DipFit& fit);

/// Rejection gates. Defaults: depth < 5 x noise is shallow; chi2_red > 5 or sigma(Gamma)/Gamma > 0.5 is noisy.
struct QualityGates {
    double min_depth_snr = 5.0;
    double max_chi2_red = 5.0;
    double max_rel_sigma_gamma = 0.5;
};

enum class DipVerdict { Accepted, Shallow, Noisy };

std::string_view to_string(DipVerdict v);

DipVerdict classify(const DipFit& fit, const QualityGates& gates);

struct LinewidthSummary {
    std::size_t total = 0;
    std::size_t fitted = 0;
    std::size_t rejected_shallow = 0;
    std::size_t rejected_noisy = 0;
    double min_gamma = 0.0;    // Hz, over accepted fits
    double max_gamma = 0.0;    // Hz
    double median_gamma = 0.0; // Hz
    std::vector<DipVerdict> verdicts; // parallel to the input fits

    double fitted_fraction() const { return total ? double(fitted) / double(total) : 0.0; }
};

LinewidthSummary linewidth_statistics(std::span<const DipFit> fits, const QualityGates& gates = {});

} // namespace pcwqd
