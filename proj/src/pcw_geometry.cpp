#include "pcwqd/pcw_geometry.hpp"

#include "pcwqd/error.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <future>
#include <numbers>
#include <random>

namespace pcwqd {

namespace {

struct Rect {
    double x0, x1, y0, y1;
    double area() const { return (x1 - x0) * (y1 - y0); }
};

Rect region_rect(const PcwGeometry& g) {
    const double h = g.half_height();
    return {0.0, g.a, -h, h};
}

// Antiderivative of sqrt(R^2 - u^2).
double chord_primitive(double u, double radius) {
    const double uc = std::clamp(u, -radius, radius);
    return 0.5 * (uc * std::sqrt(std::max(radius * radius - uc * uc, 0.0)) +
                  radius * radius * std::asin(uc / radius));
}

// Exact area of a disk intersected with an axis-aligned rectangle.
double disk_rect_area(Point2 c, double radius, const Rect& rect) {
    const double xa = std::max(rect.x0, c.x - radius);
    const double xb = std::min(rect.x1, c.x + radius);
    if (!(xb > xa)) return 0.0;

    std::vector<double> cuts{xa, xb};
    for (double y : {rect.y0, rect.y1}) {
        const double dy = y - c.y;
        if (std::abs(dy) < radius) {
            const double dx = std::sqrt(radius * radius - dy * dy);
            for (double x : {c.x - dx, c.x + dx}) {
                if (x > xa && x < xb) cuts.push_back(x);
            }
        }
    }
    std::sort(cuts.begin(), cuts.end());

    double area = 0.0;
    for (std::size_t i = 1; i < cuts.size(); ++i) {
        const double p = cuts[i - 1], q = cuts[i];
        if (!(q > p)) continue;
        const double xm = 0.5 * (p + q);
        const double sm = std::sqrt(std::max(radius * radius - (xm - c.x) * (xm - c.x), 0.0));
        const bool top_clipped = c.y + sm > rect.y1;
        const bool bottom_clipped = c.y - sm < rect.y0;
        const double top_mid = top_clipped ? rect.y1 : c.y + sm;
        const double bottom_mid = bottom_clipped ? rect.y0 : c.y - sm;
        if (!(top_mid > bottom_mid)) continue;
        const double chord = chord_primitive(q - c.x, radius) - chord_primitive(p - c.x, radius);
        const double top = top_clipped ? rect.y1 * (q - p) : c.y * (q - p) + chord;
        const double bottom = bottom_clipped ? rect.y0 * (q - p) : c.y * (q - p) - chord;
        area += top - bottom;
    }
    return area;
}

// Length of the union of the clipped vertical chords of all disks at abscissa x.
double union_length(double x, const std::vector<Point2>& centers, double radius, const Rect& rect) {
    std::vector<std::pair<double, double>> spans;
    for (const Point2& c : centers) {
        const double dx = x - c.x;
        if (std::abs(dx) >= radius) continue;
        const double s = std::sqrt(radius * radius - dx * dx);
        const double lo = std::max(rect.y0, c.y - s);
        const double hi = std::min(rect.y1, c.y + s);
        if (hi > lo) spans.emplace_back(lo, hi);
    }
    if (spans.empty()) return 0.0;
    std::sort(spans.begin(), spans.end());
    double total = 0.0;
    double cur_lo = spans[0].first, cur_hi = spans[0].second;
    for (std::size_t i = 1; i < spans.size(); ++i) {
        if (spans[i].first > cur_hi) {
            total += cur_hi - cur_lo;
            cur_lo = spans[i].first;
            cur_hi = spans[i].second;
        } else {
            cur_hi = std::max(cur_hi, spans[i].second);
        }
    }
    return total + (cur_hi - cur_lo);
}

double union_area(const std::vector<Point2>& centers, double radius, const Rect& rect) {
    std::vector<double> cuts{rect.x0, rect.x1};
    auto add = [&](double x) {
        if (x > rect.x0 && x < rect.x1) cuts.push_back(x);
    };
    for (std::size_t i = 0; i < centers.size(); ++i) {
        const Point2& c = centers[i];
        add(c.x - radius);
        add(c.x + radius);
        for (double y : {rect.y0, rect.y1}) {
            const double dy = y - c.y;
            if (std::abs(dy) < radius) {
                const double dx = std::sqrt(radius * radius - dy * dy);
                add(c.x - dx);
                add(c.x + dx);
            }
        }
        for (std::size_t j = i + 1; j < centers.size(); ++j) {
            const double ex = centers[j].x - c.x, ey = centers[j].y - c.y;
            const double dist = std::hypot(ex, ey);
            if (dist <= 0.0 || dist >= 2.0 * radius) continue;
            const double h = std::sqrt(radius * radius - 0.25 * dist * dist);
            const double mx = c.x + 0.5 * ex;
            add(mx - h * ey / dist);
            add(mx + h * ey / dist);
        }
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    boost::math::quadrature::tanh_sinh<double> integrator;
    double area = 0.0;
    for (std::size_t i = 1; i < cuts.size(); ++i) {
        area += integrator.integrate([&](double x) { return union_length(x, centers, radius, rect); }, cuts[i - 1],
                                     cuts[i], 1e-12);
    }
    return area;
}

double clipped_disk_sum(const std::vector<Point2>& centers, double radius, const Rect& rect) {
    double sum = 0.0;
    for (const Point2& c : centers) sum += disk_rect_area(c, radius, rect);
    return sum;
}

double distance_to_nearest(Point2 p, const std::vector<Point2>& centers) {
    double best = std::numeric_limits<double>::infinity();
    for (const Point2& c : centers) best = std::min(best, (p.x - c.x) * (p.x - c.x) + (p.y - c.y) * (p.y - c.y));
    return std::sqrt(best);
}

} // namespace

void PcwGeometry::validate() const {
    if (!(a > 0.0) || !(r > 0.0)) throw ValidationError("lattice constant and hole radius must be positive");
    if (!(r < 0.5 * a)) throw ValidationError("hole radius must be below half the lattice constant");
    if (region.strip_halfwidth < 0.0) throw ValidationError("strip half-width must be non-negative");
    if (!(region.strip_halfwidth > 0.0) && region.rows_per_side < 1) {
        throw ValidationError("analysis region needs at least one hole row per side");
    }
}

double PcwGeometry::row_spacing() const { return 0.5 * std::sqrt(3.0) * a; }

double PcwGeometry::half_height() const {
    return region.strip_halfwidth > 0.0 ? region.strip_halfwidth : region.rows_per_side * row_spacing();
}

double PcwGeometry::region_area() const { return a * 2.0 * half_height(); }

std::vector<Point2> PcwGeometry::hole_centers(double reach) const {
    std::vector<Point2> out;
    const double h = half_height();
    const double rs = row_spacing();
    const int kmax = int(std::ceil((h + reach) / rs));
    for (int k = 1; k <= kmax; ++k) {
        const double y = k * rs;
        if (y - reach >= h) continue;
        const double offset = (k % 2) ? 0.5 * a : 0.0;
        const int mlo = int(std::floor((-reach - offset) / a));
        const int mhi = int(std::ceil((a + reach - offset) / a));
        for (int m = mlo; m <= mhi; ++m) {
            const double x = offset + m * a;
            if (x + reach <= 0.0 || x - reach >= a) continue;
            out.push_back({x, y});
            out.push_back({x, -y});
        }
    }
    return out;
}

double PcwGeometry::max_distance() const {
    validate();
    const Rect rect = region_rect(*this);
    const double reach = std::hypot(a, 2.0 * half_height());
    const std::vector<Point2> centers = hole_centers(reach);
    const int nx = 200;
    const int ny = std::max(2, int(200 * rect.y1 / a));
    Point2 best{0.0, 0.0};
    double best_d = -1.0;
    for (int i = 0; i <= nx; ++i) {
        for (int j = 0; j <= 2 * ny; ++j) {
            const Point2 p{rect.x0 + (rect.x1 - rect.x0) * i / nx, rect.y0 + (rect.y1 - rect.y0) * j / (2 * ny)};
            const double dist = distance_to_nearest(p, centers);
            if (dist > best_d) {
                best_d = dist;
                best = p;
            }
        }
    }
    // Pattern search refinement, kept inside the region.
    for (double step = a / nx; step > 1e-6 * a; step *= 0.5) {
        bool moved = true;
        while (moved) {
            moved = false;
            for (auto [dx, dy] : {std::pair{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}, {0.0, -1.0}}) {
                const Point2 q{std::clamp(best.x + dx * step, rect.x0, rect.x1),
                               std::clamp(best.y + dy * step, rect.y0, rect.y1)};
                const double dist = distance_to_nearest(q, centers);
                if (dist > best_d) {
                    best_d = dist;
                    best = q;
                    moved = true;
                }
            }
        }
    }
    return std::max(best_d - r, 0.0);
}

std::vector<std::pair<std::string, PcwGeometry>> region_presets(double a, double r) {
    std::vector<std::pair<std::string, PcwGeometry>> out;
    const char* names[] = {"core", "two-row", "three-row"};
    for (int rows = 1; rows <= 3; ++rows) {
        PcwGeometry g;
        g.a = a;
        g.r = r;
        g.region.rows_per_side = rows;
        out.emplace_back(names[rows - 1], g);
    }
    return out;
}

double area_fraction(const PcwGeometry& g, double d) {
    g.validate();
    if (!(d >= 0.0)) throw ValidationError("area_fraction: distance must be non-negative");
    const Rect rect = region_rect(g);
    const double reach = g.r + d;

    const std::vector<Point2> holes = g.hole_centers(g.r);
    const double material = rect.area() - clipped_disk_sum(holes, g.r, rect);

    const std::vector<Point2> excl = g.hole_centers(reach);
    // Nearest-neighbour hole spacing in the lattice is a.
    const bool disjoint = 2.0 * reach < g.a;
    const double excluded = disjoint ? clipped_disk_sum(excl, reach, rect) : union_area(excl, reach, rect);
    const double left = rect.area() - excluded;
    // Below the resolution of the union integral.
    if (left < 1e-12 * rect.area()) return 0.0;
    return std::clamp(left / material, 0.0, 1.0);
}

MonteCarloFraction monte_carlo_fraction(const PcwGeometry& g, double d, std::uint64_t n_samples, std::uint64_t seed,
                                        unsigned workers) {
    g.validate();
    if (!(d >= 0.0)) throw ValidationError("monte_carlo_fraction: distance must be non-negative");
    if (n_samples < 10000) throw ValidationError("monte_carlo_fraction needs at least 1e4 samples");
    const Rect rect = region_rect(g);
    const std::vector<Point2> centers = g.hole_centers(g.r + d);
    const double r2 = g.r * g.r;
    const double q2 = (g.r + d) * (g.r + d);

    constexpr std::uint64_t kBatch = 1u << 16;
    const std::uint64_t n_batches = (n_samples + kBatch - 1) / kBatch;

    auto run_batch = [&](std::uint64_t b) {
        std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(b), std::uint32_t(b >> 32)};
        std::mt19937_64 rng(seq);
        std::uniform_real_distribution<double> ux(rect.x0, rect.x1), uy(rect.y0, rect.y1);
        const std::uint64_t want = std::min(kBatch, n_samples - b * kBatch);
        std::uint64_t accepted = 0, qualifying = 0;
        while (accepted < want) {
            const Point2 p{ux(rng), uy(rng)};
            double best = std::numeric_limits<double>::infinity();
            for (const Point2& c : centers) best = std::min(best, (p.x - c.x) * (p.x - c.x) + (p.y - c.y) * (p.y - c.y));
            if (!(best > r2)) continue;
            ++accepted;
            if (best > q2) ++qualifying;
        }
        return qualifying;
    };

    workers = std::max(1u, workers);
    std::vector<std::uint64_t> per_batch(n_batches, 0);
    auto work = [&](unsigned w) {
        for (std::uint64_t b = w; b < n_batches; b += workers) per_batch[b] = run_batch(b);
    };
    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::future<void>> jobs;
        for (unsigned w = 0; w < workers; ++w) jobs.push_back(std::async(std::launch::async, work, w));
        for (auto& j : jobs) j.get();
    }

    MonteCarloFraction out;
    out.n_material = n_samples;
    for (std::uint64_t q : per_batch) out.n_qualifying += q;
    out.f_hat = double(out.n_qualifying) / double(out.n_material);
    out.sigma = std::sqrt(out.f_hat * (1.0 - out.f_hat) / double(out.n_material));
    return out;
}

double solve_distance(const PcwGeometry& g, double f_target, std::optional<double> d_max) {
    g.validate();
    if (!(f_target > 0.0 && f_target <= 1.0)) throw ValidationError("solve_distance: target fraction must lie in (0, 1]");
    if (f_target == 1.0) return 0.0;
    double hi = d_max ? *d_max : g.max_distance();
    if (!(hi > 0.0)) throw ValidationError("solve_distance: distance bound must be positive");
    if (area_fraction(g, hi) > f_target) {
        throw FitError(FitFailure::Unreachable, "target fraction lies below the fraction attainable at d_max");
    }
    double lo = 0.0;
    for (int it = 0; it < 200 && hi - lo > 1e-9 * g.a * 1e-3; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (area_fraction(g, mid) > f_target) lo = mid; else hi = mid;
    }
    const double d = 0.5 * (lo + hi);
    if (std::abs(area_fraction(g, d) - f_target) > 1e-6) {
        throw FitError(FitFailure::NonConvergence, "solve_distance: bisection did not reach the target");
    }
    return d;
}

PurcellEnvelope PurcellEnvelope::normalized_at(double gamma_hom, double lambda_c, double lambda_ref, double cap) {
    if (!(lambda_ref < lambda_c)) throw ValidationError("reference wavelength must lie below the cutoff");
    PurcellEnvelope p;
    p.gamma_hom = gamma_hom;
    p.lambda_c = lambda_c;
    p.scale = std::sqrt((lambda_c - lambda_ref) / lambda_c);
    p.cap = cap;
    return p;
}

double purcell_envelope(const PurcellEnvelope& p, double lambda) {
    if (!(p.gamma_hom > 0.0 && p.lambda_c > 0.0 && p.scale > 0.0 && p.cap > 0.0)) {
        throw ValidationError("Purcell envelope parameters must be positive");
    }
    if (!(lambda < p.lambda_c)) throw ValidationError("Purcell envelope is defined below the cutoff only");
    const double detune = (p.lambda_c - lambda) / p.lambda_c;
    return p.gamma_hom * std::min(p.cap, p.scale / std::sqrt(detune));
}

} // namespace pcwqd
