#pragma once

// Test-only numerical oracles. These deliberately avoid the library's own
// special-function and CDF code paths so that derived expectations stay
// independent of what they check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "cbmm/types.hpp"

namespace oracle {

using Fn = std::function<double(double)>;

namespace detail {

inline double simpson_rec(const Fn& f, double a, double b, double fa, double fm, double fb,
                          double whole, double eps, int depth, long& budget) {
    if (--budget < 0) throw std::runtime_error("oracle::integrate: evaluation budget exceeded");
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::fabs(delta) <= 15.0 * eps) return left + right + delta / 15.0;
    return simpson_rec(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1, budget) +
           simpson_rec(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1, budget);
}

}  // namespace detail

// Adaptive Simpson quadrature on a finite interval. `eps` is an absolute
// tolerance, so integrands should be normalized to O(1) scale.
inline double integrate(const Fn& f, double a, double b, double eps = 1e-10, int depth = 40) {
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    long budget = 4000000;
    return detail::simpson_rec(f, a, b, fa, fm, fb, whole, eps, depth, budget);
}

// Integral over (lo, hi) where either end may be infinite, via a tangent
// substitution that compactifies the unbounded directions.
inline double integrate_support(const Fn& f, double lo, double hi, double eps = 1e-10) {
    const bool lo_inf = std::isinf(lo);
    const bool hi_inf = std::isinf(hi);
    if (!lo_inf && !hi_inf) {
        const double tiny = 1e-12 * (hi - lo);
        return integrate(f, lo + tiny, hi - tiny, eps);
    }
    if (lo_inf && hi_inf) {
        auto g = [&](double t) {
            const double c = std::cos(t);
            const double y = std::tan(t);
            return f(y) / (c * c);
        };
        const double half_pi = 1.5707963267948966;
        return integrate(g, -half_pi + 1e-9, half_pi - 1e-9, eps);
    }
    if (!lo_inf) {
        auto g = [&](double t) {
            const double c = std::cos(t);
            const double y = lo + std::tan(t);
            return f(y) / (c * c);
        };
        const double half_pi = 1.5707963267948966;
        return integrate(g, 1e-12, half_pi - 1e-9, eps);
    }
    auto g = [&](double t) {
        const double c = std::cos(t);
        const double y = hi - std::tan(t);
        return f(y) / (c * c);
    };
    const double half_pi = 1.5707963267948966;
    return integrate(g, 1e-12, half_pi - 1e-9, eps);
}

// Central difference derivative.
inline double central_diff(const Fn& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Mixed second partial d2F/(dx dy) by central differences.
inline double mixed_partial(const std::function<double(double, double)>& f, double x, double y,
                            double h) {
    return (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h)) /
           (4.0 * h * h);
}

// Brute-force mean silhouette, written directly from the definition.
inline double silhouette(std::span<const cbmm::Point2> pts, std::span<const int> labels) {
    const std::size_t n = pts.size();
    int k = 0;
    for (int z : labels) k = std::max(k, z + 1);
    std::vector<std::size_t> size(k, 0);
    for (int z : labels) ++size[z];
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (size[labels[i]] == 1) continue;
        std::vector<double> mean_d(k, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double dx = pts[i].x1 - pts[j].x1;
            const double dy = pts[i].x2 - pts[j].x2;
            mean_d[labels[j]] += std::sqrt(dx * dx + dy * dy);
        }
        for (int c = 0; c < k; ++c) {
            const std::size_t denom = (c == labels[i]) ? size[c] - 1 : size[c];
            if (denom > 0) mean_d[c] /= static_cast<double>(denom);
        }
        const double a = mean_d[labels[i]];
        double b = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c)
            if (c != labels[i] && size[c] > 0) b = std::min(b, mean_d[c]);
        const double m = std::max(a, b);
        total += m > 0.0 ? (b - a) / m : 0.0;
    }
    return total / static_cast<double>(n);
}

// Brute-force minimum error ratio over all label permutations (small K).
inline double error_ratio_bruteforce(std::span<const int> pred, std::span<const int> truth) {
    int k = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) k = std::max({k, pred[i] + 1, truth[i] + 1});
    std::vector<int> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    std::size_t best = 0;
    do {
        std::size_t match = 0;
        for (std::size_t i = 0; i < pred.size(); ++i)
            if (perm[pred[i]] == truth[i]) ++match;
        best = std::max(best, match);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return 1.0 - static_cast<double>(best) / static_cast<double>(pred.size());
}

}  // namespace oracle
