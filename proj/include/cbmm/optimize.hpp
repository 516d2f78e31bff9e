#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace cbmm {

struct NelderMeadOptions {
    int max_evals = 2000;
    double ftol = 1e-10;  // relative spread of simplex values
    double xtol = 1e-9;   // absolute spread of simplex vertices
};

struct NelderMeadResult {
    std::vector<double> x;
    double fx = std::numeric_limits<double>::infinity();
    int evals = 0;
    bool converged = false;
};

// Downhill simplex minimisation. `step` sets the initial simplex edge per
// coordinate. Infinite objective values are tolerated (treated as very bad),
// which lets callers express hard constraints as +inf.
inline NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                    const std::vector<double>& x0, const std::vector<double>& step,
                                    const NelderMeadOptions& opt = {}) {
    const std::size_t n = x0.size();
    const double alpha = 1.0, gamma = 2.0, rho = 0.5, sigma = 0.5;

    std::vector<std::vector<double>> x(n + 1, x0);
    for (std::size_t i = 0; i < n; ++i) x[i + 1][i] += step[i];

    NelderMeadResult res;
    std::vector<double> fx(n + 1);
    for (std::size_t j = 0; j <= n; ++j) {
        fx[j] = f(x[j]);
        ++res.evals;
    }

    std::vector<std::size_t> order(n + 1);
    std::vector<double> centroid(n), xr(n), xe(n), xc(n);

    while (res.evals < opt.max_evals) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return fx[a] < fx[b]; });
        {
            std::vector<std::vector<double>> xs(n + 1);
            std::vector<double> fs(n + 1);
            for (std::size_t j = 0; j <= n; ++j) {
                xs[j] = x[order[j]];
                fs[j] = fx[order[j]];
            }
            x.swap(xs);
            fx.swap(fs);
        }

        const double fbest = fx[0], fworst = fx[n];
        double xspread = 0.0;
        for (std::size_t j = 1; j <= n; ++j)
            for (std::size_t i = 0; i < n; ++i)
                xspread = std::max(xspread, std::fabs(x[j][i] - x[0][i]));
        if (std::isfinite(fworst) &&
            (fworst - fbest) <= opt.ftol * (1.0 + std::fabs(fbest) + std::fabs(fworst)) &&
            xspread <= opt.xtol) {
            res.converged = true;
            break;
        }

        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += x[j][i];
            centroid[i] = s / static_cast<double>(n);
        }

        for (std::size_t i = 0; i < n; ++i) xr[i] = centroid[i] + alpha * (centroid[i] - x[n][i]);
        const double fr = f(xr);
        ++res.evals;

        if (fr < fx[0]) {
            for (std::size_t i = 0; i < n; ++i) xe[i] = centroid[i] + gamma * (xr[i] - centroid[i]);
            const double fe = f(xe);
            ++res.evals;
            if (fe < fr) {
                x[n] = xe;
                fx[n] = fe;
            } else {
                x[n] = xr;
                fx[n] = fr;
            }
        } else if (fr < fx[n - 1]) {
            x[n] = xr;
            fx[n] = fr;
        } else {
            const bool outside = fr < fx[n];
            const std::vector<double>& base = outside ? xr : x[n];
            for (std::size_t i = 0; i < n; ++i) xc[i] = centroid[i] + rho * (base[i] - centroid[i]);
            const double fc = f(xc);
            ++res.evals;
            if (fc < (outside ? fr : fx[n])) {
                x[n] = xc;
                fx[n] = fc;
            } else {
                for (std::size_t j = 1; j <= n; ++j) {
                    for (std::size_t i = 0; i < n; ++i)
                        x[j][i] = x[0][i] + sigma * (x[j][i] - x[0][i]);
                    fx[j] = f(x[j]);
                    ++res.evals;
                }
            }
        }
    }

    std::size_t best = 0;
    for (std::size_t j = 1; j <= n; ++j)
        if (fx[j] < fx[best]) best = j;
    res.x = x[best];
    res.fx = fx[best];
    return res;
}

struct BrentResult {
    double x = 0.0;
    double fx = std::numeric_limits<double>::infinity();
    int iters = 0;
    bool converged = false;
};

// Brent minimisation of a unimodal scalar function on [a, b].
inline BrentResult brent_minimize(const std::function<double(double)>& f, double a, double b,
                                  double tol = 1e-10, int max_iter = 200) {
    const double golden = 0.3819660112501051;
    double x = a + golden * (b - a);
    double w = x, v = x;
    double fx = f(x), fw = fx, fv = fx;
    double d = 0.0, e = 0.0;

    BrentResult res;
    for (int iter = 0; iter < max_iter; ++iter) {
        res.iters = iter + 1;
        const double xm = 0.5 * (a + b);
        const double tol1 = tol * std::fabs(x) + 1e-12;
        const double tol2 = 2.0 * tol1;
        if (std::fabs(x - xm) <= tol2 - 0.5 * (b - a)) {
            res.converged = true;
            break;
        }
        bool use_golden = true;
        if (std::fabs(e) > tol1) {
            const double r = (x - w) * (fx - fv);
            double q = (x - v) * (fx - fw);
            double p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if (q > 0.0) p = -p;
            q = std::fabs(q);
            const double etemp = e;
            e = d;
            if (std::fabs(p) < std::fabs(0.5 * q * etemp) && p > q * (a - x) && p < q * (b - x)) {
                d = p / q;
                const double u = x + d;
                if (u - a < tol2 || b - u < tol2) d = (xm - x >= 0.0 ? tol1 : -tol1);
                use_golden = false;
            }
        }
        if (use_golden) {
            e = (x >= xm ? a - x : b - x);
            d = golden * e;
        }
        const double u = (std::fabs(d) >= tol1) ? x + d : x + (d >= 0.0 ? tol1 : -tol1);
        const double fu = f(u);
        if (fu <= fx) {
            if (u >= x)
                a = x;
            else
                b = x;
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if (u < x)
                a = u;
            else
                b = u;
            if (fu <= fw || w == x) {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if (fu <= fv || v == x || v == w) {
                v = u;
                fv = fu;
            }
        }
    }
    res.x = x;
    res.fx = fx;
    return res;
}

// Root of g(x) = target for g monotone increasing on [lo, hi], by bisection.
inline double bisect_increasing(const std::function<double(double)>& g, double lo, double hi,
                                double target, double xtol = 1e-10, int max_iter = 200) {
    double flo = g(lo) - target;
    if (flo >= 0.0) return lo;
    double fhi = g(hi) - target;
    if (fhi <= 0.0) return hi;
    for (int i = 0; i < max_iter && (hi - lo) > xtol; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double fm = g(mid) - target;
        if (fm < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace cbmm
