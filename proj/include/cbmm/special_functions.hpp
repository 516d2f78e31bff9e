#pragma once

#include <cmath>
#include <cstdlib>
#include <limits>

#include "cbmm/errors.hpp"

namespace cbmm {

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kLnSqrt2Pi = 0.91893853320467274178032973640562;  // ln sqrt(2*pi)
inline constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;

inline double sq(double x) { return x * x; }

// ---------------------------------------------------------------------------
// Univariate normal
// ---------------------------------------------------------------------------

inline double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

// Inverse standard normal CDF. Acklam's rational approximation polished by one
// Halley step against erfc, accurate to full double precision on (0,1).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: p must lie in (0,1)");

    static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                    -2.759285104469687e+02, 1.383577518672690e+02,
                                    -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                    -1.556989798598866e+02, 6.680131188771972e+01,
                                    -1.328068155288572e+01};
    static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                    -2.400758277161838e+00, -2.549732539343734e+00,
                                    4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                    2.445134137142996e+00, 3.754408661907416e+00};

    const double plow = 0.02425;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    const double e = normal_cdf(x) - p;
    const double u = e / normal_pdf(x);
    x -= u / (1.0 + 0.5 * x * u);
    return x;
}

// ---------------------------------------------------------------------------
// Incomplete gamma / beta
// ---------------------------------------------------------------------------

namespace detail {

inline double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < 600; ++i) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * 1e-17) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

inline double gamma_q_cf(double a, double x) {
    constexpr double fpmin = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / fpmin;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 600; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = b + an / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-16) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

inline double beta_cf(double a, double b, double x) {
    constexpr double eps = 1e-16;
    constexpr double fpmin = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 500; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

}  // namespace detail

// Regularized lower incomplete gamma P(a, x).
inline double gamma_p(double a, double x) {
    if (!(a > 0.0)) throw DomainError("gamma_p: a must be positive");
    if (x < 0.0) throw DomainError("gamma_p: x must be non-negative");
    if (x == 0.0) return 0.0;
    if (x < a + 1.0) return detail::gamma_p_series(a, x);
    return 1.0 - detail::gamma_q_cf(a, x);
}

inline double log_beta(double a, double b) {
    return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// Regularized incomplete beta I_x(a, b).
inline double inc_beta(double x, double a, double b) {
    if (!(a > 0.0 && b > 0.0)) throw DomainError("inc_beta: shape parameters must be positive");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double lfront = a * std::log(x) + b * std::log1p(-x) - log_beta(a, b);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return std::exp(lfront) * detail::beta_cf(a, b, x) / a;
    }
    return 1.0 - std::exp(lfront) * detail::beta_cf(b, a, 1.0 - x) / b;
}

// ---------------------------------------------------------------------------
// Bivariate normal
// ---------------------------------------------------------------------------

namespace detail {

// Genz's transformation of Drezner-Wesolowsky: P(X > h, Y > k) for standard
// bivariate normal with correlation r. Absolute accuracy around 5e-16.
inline double bvn_upper(double h, double k, double r) {
    static constexpr double w6[3] = {0.1713244923791705, 0.3607615730481384,
                                     0.4679139345726904};
    static constexpr double x6[3] = {0.9324695142031522, 0.6612093864662647,
                                     0.2386191860831970};
    static constexpr double w12[6] = {0.04717533638651177, 0.1069393259953183,
                                      0.1600783285433464,  0.2031674267230659,
                                      0.2334925365383547,  0.2491470458134029};
    static constexpr double x12[6] = {0.9815606342467191, 0.9041172563704750,
                                      0.7699026741943050, 0.5873179542866171,
                                      0.3678314989981802, 0.1252334085114692};
    static constexpr double w20[10] = {0.01761400713915212, 0.04060142980038694,
                                       0.06267204833410906, 0.08327674157670475,
                                       0.1019301198172404,  0.1181945319615184,
                                       0.1316886384491766,  0.1420961093183821,
                                       0.1491729864726037,  0.1527533871307259};
    static constexpr double x20[10] = {0.9931285991850949,  0.9639719272779138,
                                       0.9122344282513259,  0.8391169718222188,
                                       0.7463319064601508,  0.6360536807265150,
                                       0.5108670019508271,  0.3737060887154196,
                                       0.2277858511416451,  0.07652652113349733};

    const double* w = w20;
    const double* x = x20;
    int ng = 10;
    if (std::fabs(r) < 0.3) {
        w = w6;
        x = x6;
        ng = 3;
    } else if (std::fabs(r) < 0.75) {
        w = w12;
        x = x12;
        ng = 6;
    }

    double bvn = 0.0;
    double hk = h * k;
    if (std::fabs(r) < 0.925) {
        const double hs = (h * h + k * k) / 2.0;
        const double asr = std::asin(r);
        for (int i = 0; i < ng; ++i) {
            for (int is = -1; is <= 1; is += 2) {
                const double sn = std::sin(asr * (is * x[i] + 1.0) / 2.0);
                bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
            }
        }
        bvn = bvn * asr / (4.0 * kPi) + normal_cdf(-h) * normal_cdf(-k);
    } else {
        double kk = k;
        if (r < 0.0) {
            kk = -kk;
            hk = -hk;
        }
        if (std::fabs(r) < 1.0) {
            const double as = (1.0 - r) * (1.0 + r);
            double a = std::sqrt(as);
            const double bs = sq(h - kk);
            const double cc = (4.0 - hk) / 8.0;
            const double dd = (12.0 - hk) / 16.0;
            double asr = -(bs / as + hk) / 2.0;
            if (asr > -100.0) {
                bvn = a * std::exp(asr) *
                      (1.0 - cc * (bs - as) * (1.0 - dd * bs / 5.0) / 3.0 + cc * dd * as * as / 5.0);
            }
            if (-hk < 100.0) {
                const double bb = std::sqrt(bs);
                const double sp = std::sqrt(2.0 * kPi) * normal_cdf(-bb / a);
                bvn -= std::exp(-hk / 2.0) * sp * bb * (1.0 - cc * bs * (1.0 - dd * bs / 5.0) / 3.0);
            }
            a /= 2.0;
            for (int i = 0; i < ng; ++i) {
                for (int is = -1; is <= 1; is += 2) {
                    const double xs = sq(a * (is * x[i] + 1.0));
                    const double rs = std::sqrt(1.0 - xs);
                    asr = -(bs / xs + hk) / 2.0;
                    if (asr > -100.0) {
                        const double sp = 1.0 + cc * xs * (1.0 + dd * xs);
                        const double ep = std::exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs;
                        bvn += a * w[i] * std::exp(asr) * (ep - sp);
                    }
                }
            }
            bvn = -bvn / (2.0 * kPi);
        }
        if (r > 0.0) {
            bvn += normal_cdf(-std::max(h, kk));
        } else {
            bvn = -bvn;
            if (kk > h) bvn += normal_cdf(kk) - normal_cdf(h);
        }
    }
    return bvn;
}

}  // namespace detail

// P(X <= h, Y <= k) for a standard bivariate normal with correlation rho.
inline double bivariate_normal_cdf(double h, double k, double rho) {
    if (!(rho > -1.0 && rho < 1.0)) throw DomainError("bivariate_normal_cdf: |rho| must be < 1");
    if (std::isinf(h) || std::isinf(k)) {
        if (h < 0.0 || k < 0.0) return 0.0;
        if (std::isinf(h) && std::isinf(k)) return 1.0;
        return std::isinf(h) ? normal_cdf(k) : normal_cdf(h);
    }
    double p = detail::bvn_upper(-h, -k, rho);
    if (p < 0.0) p = 0.0;
    if (p > 1.0) p = 1.0;
    return p;
}

}  // namespace cbmm
