#pragma once

#include "pcwqd/lineshape_fit.hpp"

#include <vector>

namespace pcwqd {

/// Time-binned photon counts with the instrument response on the same grid.
struct DecayHistogram {
    std::vector<double> bin_edges; // s, uniform
    std::vector<double> counts;
    std::vector<double> irf;       // counts per bin, normalized internally
    double rep_period = 1.0 / 72.6e6; // s

    std::size_t size() const { return counts.size(); }
    double bin_width() const { return bin_edges.size() > 1 ? bin_edges[1] - bin_edges[0] : 0.0; }
    double total_counts() const;
    void validate() const;
};

struct DecaySigma {
    double gamma = 0.0;
    double amplitude = 0.0;
    double t0 = 0.0;
    double background = 0.0;
};

/// Fitted single-exponential decay. transform_limit is gamma / 2 pi and, with non-radiative
/// decay neglected, a lower bound on the homogeneous linewidth.
struct DecayFit {
    double gamma = 0.0;      // 1/s
    double amplitude = 0.0;  // decay counts per repetition period
    double t0 = 0.0;         // s, delay of the decay onset relative to the IRF
    double background = 0.0; // counts per bin
    DecaySigma sigma;
    double transform_limit = 0.0;       // Hz
    double transform_limit_sigma = 0.0; // Hz
    double deviance = 0.0;
    int iterations = 0;

    double lifetime() const { return 1.0 / gamma; }
};

/// Expected counts per bin: amplitude * (periodic exponential onset at t0, convolved with the
/// normalized IRF), integrated exactly over every bin, plus a flat background.
///
/// The IRF is taken as piecewise constant within each bin; photon arrivals from earlier
/// excitation pulses wrap with period rep_period.
std::vector<double> convolve_model(double gamma, double amplitude, double t0, double background,
                                   const DecayHistogram& hist);

struct DecayFitOptions {
    double min_total_counts = 1000.0;
    /// Signal amplitude must exceed this many standard errors for gamma to count as identified.
    double min_amplitude_significance = 3.0;
    lsq::Options solver;
};

/// Poisson maximum-likelihood fit. Throws FitError (InsufficientCounts, Unidentifiable, NonConvergence).
DecayFit fit_decay(const DecayHistogram& hist, const DecayFitOptions& opts = {});

/// Unweighted least-squares fit of the same model, kept as a comparison estimator.
DecayFit fit_decay_least_squares(const DecayHistogram& hist, const DecayFitOptions& opts = {});

struct Ratio {
    double value = 0.0;
    double sigma = 0.0;
};

/// Gamma_RT / Gamma with first-order (quadrature) uncertainty propagation.
Ratio transform_ratio(double gamma_rt, double sigma_rt, double gamma_tl, double sigma_tl);
Ratio transform_ratio(const DipFit& dip, const DecayFit& decay);

} // namespace pcwqd
