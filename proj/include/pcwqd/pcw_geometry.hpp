#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pcwqd {

/// Analysis strip centred on the missing row of a W1 waveguide.
///
/// The strip spans one lattice period along the guide and +-half_height across it. With
/// strip_halfwidth = 0 the half-height is rows_per_side row spacings, i.e. the strip ends on
/// the centres of the outermost included hole rows.
struct AnalysisRegion {
    int rows_per_side = 1;
    double strip_halfwidth = 0.0; // m, overrides rows_per_side when positive
};

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

/// Triangular-lattice photonic-crystal waveguide with one missing row along x.
struct PcwGeometry {
    double a = 248e-9; // lattice constant, m
    double r = 70e-9;  // hole radius, m
    AnalysisRegion region;

    void validate() const;
    double row_spacing() const; // sqrt(3)/2 a
    double half_height() const;
    double region_area() const;
    /// Hole centres, including periodic images, whose disks of radius `reach` can touch the region.
    std::vector<Point2> hole_centers(double reach) const;
    /// Largest distance from any hole edge attained inside the region (m).
    double max_distance() const;
};

/// Named analysis regions: "core" (first rows), "two-row", "three-row".
std::vector<std::pair<std::string, PcwGeometry>> region_presets(double a = 248e-9, double r = 70e-9);

/// Fraction of material area in the region farther than d from every hole edge.
///
/// Closed form (clipped disk areas) while the exclusion disks r + d are pairwise disjoint;
/// otherwise the union of clipped disks is integrated column by column.
double area_fraction(const PcwGeometry& g, double d);

struct MonteCarloFraction {
    double f_hat = 0.0;
    double sigma = 0.0; // binomial standard error
    std::uint64_t n_material = 0;
    std::uint64_t n_qualifying = 0;
};

/// Rejection-sampling estimate of area_fraction with n_samples accepted material points.
/// Batches use their own seed streams, so the result does not depend on `workers`.
MonteCarloFraction monte_carlo_fraction(const PcwGeometry& g, double d, std::uint64_t n_samples, std::uint64_t seed,
                                        unsigned workers = 1);

/// Distance d with area_fraction(g, d) = f_target, by bisection over [0, d_max].
/// Throws FitError(Unreachable) when f_target lies below area_fraction(g, d_max).
double solve_distance(const PcwGeometry& g, double f_target, std::optional<double> d_max = std::nullopt);

/// Simplified band-edge envelope of the largest Purcell-enhanced linewidth.
struct PurcellEnvelope {
    double gamma_hom = 230e6; // Hz
    double lambda_c = 950.2e-9; // m
    double scale = 1.0;
    double cap = 7.3;

    /// Envelope with `scale` chosen so that it equals gamma_hom at lambda_ref.
    static PurcellEnvelope normalized_at(double gamma_hom, double lambda_c, double lambda_ref, double cap);
};

/// gamma_hom * min(cap, scale / sqrt((lambda_c - lambda) / lambda_c)); lambda must be below lambda_c.
double purcell_envelope(const PurcellEnvelope& p, double lambda);

} // namespace pcwqd
