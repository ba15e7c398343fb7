#ifndef SIFOTL_STATS_HPP
#define SIFOTL_STATS_HPP

#include <sifotl/errors.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

namespace sifotl::stats {

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

/// Regularized upper incomplete gamma Q(a, x) = Γ(a, x) / Γ(a).
/// Series expansion below a + 1, Lentz continued fraction above.
inline double regularized_gamma_q(double a, double x) {
    if (!(a > 0.0)) throw ValidationError("regularized_gamma_q: a must be positive");
    if (x <= 0.0) return 1.0;
    constexpr int max_iter = 500;
    constexpr double eps = 1e-16;
    const double log_prefix = -x + a * std::log(x) - std::lgamma(a);

    if (x < a + 1.0) {
        double term = 1.0 / a;
        double sum = term;
        for (int n = 1; n < max_iter; ++n) {
            term *= x / (a + n);
            sum += term;
            if (std::abs(term) < std::abs(sum) * eps) break;
        }
        return std::clamp(1.0 - sum * std::exp(log_prefix), 0.0, 1.0);
    }

    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < max_iter; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < eps) break;
    }
    return std::clamp(std::exp(log_prefix) * h, 0.0, 1.0);
}

/// Upper tail of the χ² distribution with `dof` degrees of freedom.
inline double chi_square_sf(double stat, double dof) {
    if (!(stat > 0.0)) return 1.0;
    return regularized_gamma_q(0.5 * dof, 0.5 * stat);
}

// ---------------------------------------------------------------------------
// Binning
// ---------------------------------------------------------------------------

/// Quantile bins over the non-missing values of a column. Slicing uses the
/// interior cut points: bin 0 is (-inf, cuts[0]), bin j is [cuts[j-1], cuts[j]),
/// the last bin is [cuts.back(), +inf).
struct NumericBins {
    double min = 0.0;
    double max = 0.0;
    std::vector<double> cuts;

    std::size_t count() const { return cuts.size() + 1; }

    /// {min, cuts..., max}
    std::vector<double> edges() const {
        std::vector<double> out{min};
        out.insert(out.end(), cuts.begin(), cuts.end());
        out.push_back(max);
        return out;
    }

    std::size_t bin_of(double v) const {
        return static_cast<std::size_t>(std::upper_bound(cuts.begin(), cuts.end(), v) - cuts.begin());
    }
};

/// Linear-interpolation quantile (Hyndman-Fan type 7) of sorted data.
inline double quantile_sorted(std::span<const double> sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

/// NaN entries are treated as missing. When the column has no more distinct
/// values than `n_bins`, every distinct value gets its own bin.
inline NumericBins bin_numeric(std::span<const double> column, std::size_t n_bins) {
    if (n_bins == 0) throw ValidationError("bin_numeric: n_bins must be positive");
    std::vector<double> v;
    v.reserve(column.size());
    for (double x : column)
        if (!std::isnan(x)) v.push_back(x);
    if (v.empty()) throw ValidationError("bin_numeric: all values missing");
    std::sort(v.begin(), v.end());

    NumericBins bins;
    bins.min = v.front();
    bins.max = v.back();

    std::vector<double> distinct(v);
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() <= n_bins) {
        bins.cuts.assign(distinct.begin() + 1, distinct.end());
        return bins;
    }
    for (std::size_t i = 1; i < n_bins; ++i) {
        const double e = quantile_sorted(v, static_cast<double>(i) / static_cast<double>(n_bins));
        if (e <= bins.min) continue;
        if (!bins.cuts.empty() && e <= bins.cuts.back()) continue;
        bins.cuts.push_back(e);
    }
    return bins;
}

// ---------------------------------------------------------------------------
// Tests and effect sizes
// ---------------------------------------------------------------------------

struct ChiSquareResult {
    double stat = 0.0;
    double p_value = 1.0;
    bool degenerate = false;
};

/// Pearson χ² (no continuity correction) for a 2×2 table
///   [[in∧y1, in∧y0], [out∧y1, out∧y0]].
inline ChiSquareResult chi_square_2x2(double a, double b, double c, double d) {
    const double n = a + b + c + d;
    const double r1 = a + b, r2 = c + d, c1 = a + c, c2 = b + d;
    if (!(n > 0.0) || r1 <= 0.0 || r2 <= 0.0 || c1 <= 0.0 || c2 <= 0.0) return {0.0, 1.0, true};
    const double diff = a * d - b * c;
    const double stat = n * diff * diff / (r1 * r2 * c1 * c2);
    return {stat, chi_square_sf(stat, 1.0), false};
}

inline ChiSquareResult chi_square_test(std::span<const std::uint8_t> slice_mask, std::span<const std::uint8_t> target) {
    if (slice_mask.size() != target.size()) throw ValidationError("chi_square_test: length mismatch");
    double a = 0, b = 0, c = 0, d = 0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const bool in = slice_mask[i] != 0;
        const bool y = target[i] != 0;
        if (in) (y ? a : b) += 1.0;
        else (y ? c : d) += 1.0;
    }
    return chi_square_2x2(a, b, c, d);
}

inline double cramers_v(double stat, double n, std::size_t rows, std::size_t cols) {
    if (!(n > 0.0)) throw ValidationError("cramers_v: n must be positive");
    const std::size_t k = std::min(rows, cols);
    if (k < 2 || !(stat > 0.0)) return 0.0;
    return std::clamp(std::sqrt(stat / (n * static_cast<double>(k - 1))), 0.0, 1.0);
}

struct CorrelationResult {
    double value = 0.0;
    bool degenerate = false;
};

/// r_pb = (M1 − M0) / s · sqrt(n1·n0 / n²), s the population standard
/// deviation. Rows whose numeric value is NaN are skipped.
inline CorrelationResult point_biserial(std::span<const std::uint8_t> binary, std::span<const double> numeric) {
    if (binary.size() != numeric.size()) throw ValidationError("point_biserial: length mismatch");
    double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
    for (std::size_t i = 0; i < binary.size(); ++i) {
        if (std::isnan(numeric[i])) continue;
        if (binary[i]) {
            n1 += 1;
            s1 += numeric[i];
        } else {
            n0 += 1;
            s0 += numeric[i];
        }
    }
    const double n = n0 + n1;
    if (n0 == 0 || n1 == 0) return {0.0, true};
    const double mean = (s0 + s1) / n;
    double ss = 0.0;
    for (std::size_t i = 0; i < binary.size(); ++i) {
        if (std::isnan(numeric[i])) continue;
        const double dev = numeric[i] - mean;
        ss += dev * dev;
    }
    const double sd = std::sqrt(ss / n);
    if (!(sd > 0.0) || sd < 1e-300) return {0.0, true};
    const double m1 = s1 / n1, m0 = s0 / n0;
    const double r = (m1 - m0) / sd * std::sqrt(n1 * n0 / (n * n));
    return {std::clamp(r, -1.0, 1.0), false};
}

/// Benjamini–Hochberg step-up q-values, returned in input order.
inline std::vector<double> bh_fdr(std::span<const double> p_values) {
    const std::size_t m = p_values.size();
    if (m == 0) throw ValidationError("bh_fdr: empty p-value list");
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });

    std::vector<double> q(m);
    double running = 1.0;
    for (std::size_t rank = m; rank >= 1; --rank) {
        const std::size_t i = order[rank - 1];
        const double adjusted = p_values[i] * static_cast<double>(m) / static_cast<double>(rank);
        running = std::min(running, adjusted);
        q[i] = std::clamp(running, 0.0, 1.0);
    }
    return q;
}

/// Plain Pearson correlation; NaN when either side has zero variance.
inline double pearson(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n != y.size() || n < 2) return std::numeric_limits<double>::quiet_NaN();
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

} // namespace sifotl::stats

#endif // SIFOTL_STATS_HPP
