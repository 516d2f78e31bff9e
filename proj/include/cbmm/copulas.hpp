#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cbmm/errors.hpp"
#include "cbmm/marginals.hpp"
#include "cbmm/optimize.hpp"
#include "cbmm/rng.hpp"
#include "cbmm/special_functions.hpp"
#include "cbmm/types.hpp"

namespace cbmm {

enum class CopulaFamily { Gaussian, Gumbel, Clayton, FGM, Arch12, Arch14, Product };

inline constexpr std::array<CopulaFamily, 7> kAllCopulaFamilies = {
    CopulaFamily::Gaussian, CopulaFamily::Gumbel, CopulaFamily::Clayton, CopulaFamily::FGM,
    CopulaFamily::Arch12,   CopulaFamily::Arch14, CopulaFamily::Product};

inline const char* to_string(CopulaFamily f) {
    switch (f) {
        case CopulaFamily::Gaussian: return "Gaussian";
        case CopulaFamily::Gumbel: return "Gumbel";
        case CopulaFamily::Clayton: return "Clayton";
        case CopulaFamily::FGM: return "FGM";
        case CopulaFamily::Arch12: return "Arch12";
        case CopulaFamily::Arch14: return "Arch14";
        case CopulaFamily::Product: return "Product";
    }
    return "?";
}

inline CopulaFamily copula_family_from_string(std::string_view s) {
    for (CopulaFamily f : kAllCopulaFamilies)
        if (s == to_string(f)) return f;
    if (s == "gaussian" || s == "normal") return CopulaFamily::Gaussian;
    if (s == "gumbel" || s == "gumble") return CopulaFamily::Gumbel;  // tolerate the common misspelling
    if (s == "clayton") return CopulaFamily::Clayton;
    if (s == "fgm") return CopulaFamily::FGM;
    if (s == "arch12") return CopulaFamily::Arch12;
    if (s == "arch14") return CopulaFamily::Arch14;
    if (s == "product" || s == "independence") return CopulaFamily::Product;
    throw DomainError("unknown copula family: " + std::string(s));
}

inline int free_param_count(CopulaFamily f) { return f == CopulaFamily::Product ? 0 : 1; }

// Admissible range of the dependence parameter.
inline std::pair<double, double> alpha_domain(CopulaFamily f) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    switch (f) {
        case CopulaFamily::Gaussian: return {-1.0, 1.0};  // open
        case CopulaFamily::Gumbel: return {1.0, inf};
        case CopulaFamily::Clayton: return {0.0, inf};
        case CopulaFamily::FGM: return {-1.0, 1.0};  // closed
        case CopulaFamily::Arch12: return {1.0, inf};
        case CopulaFamily::Arch14: return {1.0, inf};
        case CopulaFamily::Product: return {0.0, 0.0};
    }
    return {0.0, 0.0};
}

struct CopulaSpec {
    CopulaFamily family = CopulaFamily::Product;
    std::optional<double> alpha;

    static CopulaSpec product() { return {CopulaFamily::Product, std::nullopt}; }
    static CopulaSpec make(CopulaFamily f, double a) { return {f, a}; }

    void validate() const {
        if (family == CopulaFamily::Product) {
            if (alpha) throw DomainError("Product copula takes no parameter");
            return;
        }
        if (!alpha) throw DomainError(std::string(to_string(family)) + " copula requires alpha");
        const double a = *alpha;
        if (!std::isfinite(a)) throw DomainError("copula: alpha must be finite");
        switch (family) {
            case CopulaFamily::Gaussian:
                if (!(a > -1.0 && a < 1.0)) throw DomainError("Gaussian copula: alpha in (-1,1)");
                break;
            case CopulaFamily::FGM:
                if (!(a >= -1.0 && a <= 1.0)) throw DomainError("FGM copula: alpha in [-1,1]");
                break;
            case CopulaFamily::Clayton:
                if (!(a >= 0.0)) throw DomainError("Clayton copula: alpha >= 0");
                break;
            case CopulaFamily::Gumbel:
            case CopulaFamily::Arch12:
            case CopulaFamily::Arch14:
                if (!(a >= 1.0))
                    throw DomainError(std::string(to_string(family)) + " copula: alpha >= 1");
                break;
            default: break;
        }
    }
};

// A rank-transformed observation, strictly inside the unit square.
struct PseudoSample {
    double u1 = 0.5;
    double u2 = 0.5;
};

namespace detail {

constexpr double kAlphaIndepEps = 1e-9;  // Clayton below this is treated as independence

inline double log1p_w(double ln_w) {
    // ln(1 + e^{ln_w}), robust for any magnitude of ln_w
    return ln_w > 36.0 ? ln_w : std::log1p(std::exp(ln_w));
}

// ln(e^a + e^b - 1) for a, b >= 0, accurate down to a, b ~ 1e-300.
inline double log_sum_exp_m1(double a, double b) {
    const double m = std::max(a, b);
    if (m < 1.0) return std::log1p(std::expm1(a) + std::expm1(b));
    return m + std::log(std::exp(a - m) + std::exp(b - m) - std::exp(-m));
}

// ln(e^a + e^b) for arbitrary a, b.
inline double log_add_exp(double a, double b) {
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(std::min(a, b) - m));
}

struct GumbelTerms {
    double ln_s, ln_w;  // S = (-ln u1)^a + (-ln u2)^a, W = S^{1/a}
};

inline GumbelTerms gumbel_terms(double alpha, double u1, double u2) {
    const double lt1 = std::log(-std::log(u1));
    const double lt2 = std::log(-std::log(u2));
    GumbelTerms t;
    t.ln_s = log_add_exp(alpha * lt1, alpha * lt2);
    t.ln_w = t.ln_s / alpha;
    return t;
}

}  // namespace detail

inline double copula_cdf(const CopulaSpec& spec, double u1, double u2) {
    spec.validate();
    if (!(u1 >= 0.0 && u1 <= 1.0 && u2 >= 0.0 && u2 <= 1.0))
        throw DomainError("copula_cdf: arguments must lie in [0,1]");
    if (u1 == 0.0 || u2 == 0.0) return 0.0;
    if (u1 == 1.0) return u2;
    if (u2 == 1.0) return u1;

    switch (spec.family) {
        case CopulaFamily::Product:
            return u1 * u2;
        case CopulaFamily::Gaussian: {
            const double a = *spec.alpha;
            return bivariate_normal_cdf(normal_quantile(u1), normal_quantile(u2), a);
        }
        case CopulaFamily::FGM: {
            const double a = *spec.alpha;
            return u1 * u2 * (1.0 + a * (1.0 - u1) * (1.0 - u2));
        }
        case CopulaFamily::Clayton: {
            const double a = *spec.alpha;
            if (a < detail::kAlphaIndepEps) return u1 * u2;
            const double ln_s = detail::log_sum_exp_m1(-a * std::log(u1), -a * std::log(u2));
            return std::exp(-ln_s / a);
        }
        case CopulaFamily::Gumbel: {
            const auto t = detail::gumbel_terms(*spec.alpha, u1, u2);
            return std::exp(-std::exp(std::min(t.ln_w, 700.0)));
        }
        case CopulaFamily::Arch12: {
            const double a = *spec.alpha;
            const double lg1 = std::log(1.0 / u1 - 1.0), lg2 = std::log(1.0 / u2 - 1.0);
            const double ln_w = detail::log_add_exp(a * lg1, a * lg2) / a;
            return std::exp(-detail::log1p_w(ln_w));
        }
        case CopulaFamily::Arch14: {
            const double a = *spec.alpha;
            const double lg1 = std::log(std::expm1(-std::log(u1) / a));
            const double lg2 = std::log(std::expm1(-std::log(u2) / a));
            const double ln_w = detail::log_add_exp(a * lg1, a * lg2) / a;
            return std::exp(-a * detail::log1p_w(ln_w));
        }
    }
    return 0.0;
}

inline double copula_log_pdf(const CopulaSpec& spec, double u1, double u2) {
    spec.validate();
    if (!(u1 > 0.0 && u1 < 1.0 && u2 > 0.0 && u2 < 1.0))
        throw DomainError("copula_pdf: arguments must lie strictly inside (0,1)");

    switch (spec.family) {
        case CopulaFamily::Product:
            return 0.0;
        case CopulaFamily::Gaussian: {
            const double a = *spec.alpha;
            const double x1 = normal_quantile(u1), x2 = normal_quantile(u2);
            const double om = 1.0 - a * a;
            return -0.5 * std::log(om) -
                   (a * a * (x1 * x1 + x2 * x2) - 2.0 * a * x1 * x2) / (2.0 * om);
        }
        case CopulaFamily::FGM: {
            const double a = *spec.alpha;
            const double c = 1.0 + a * (1.0 - 2.0 * u1) * (1.0 - 2.0 * u2);
            return c > 0.0 ? std::log(c) : -std::numeric_limits<double>::infinity();
        }
        case CopulaFamily::Clayton: {
            const double a = *spec.alpha;
            if (a < detail::kAlphaIndepEps) return 0.0;
            const double lu1 = std::log(u1), lu2 = std::log(u2);
            const double ln_s = detail::log_sum_exp_m1(-a * lu1, -a * lu2);
            return std::log1p(a) - (1.0 + a) * (lu1 + lu2) - (1.0 / a + 2.0) * ln_s;
        }
        case CopulaFamily::Gumbel: {
            const double a = *spec.alpha;
            const double lt1 = std::log(-std::log(u1)), lt2 = std::log(-std::log(u2));
            const double ln_s = detail::log_add_exp(a * lt1, a * lt2);
            const double ln_w = ln_s / a;
            const double w = std::exp(std::min(ln_w, 700.0));
            // ln(W + a - 1), stable for both tiny and huge W
            const double ln_tail =
                ln_w > 30.0 ? ln_w + std::log1p((a - 1.0) * std::exp(-ln_w))
                            : std::log(w + a - 1.0);
            return -w + (a - 1.0) * (lt1 + lt2) - std::log(u1) - std::log(u2) +
                   (1.0 / a - 2.0) * ln_s + ln_tail;
        }
        case CopulaFamily::Arch12: {
            const double a = *spec.alpha;
            const double lg1 = std::log(1.0 / u1 - 1.0), lg2 = std::log(1.0 / u2 - 1.0);
            const double ln_s = detail::log_add_exp(a * lg1, a * lg2);
            const double ln_w = ln_s / a;
            const double w = std::exp(std::min(ln_w, 700.0));
            const double ln_tail = ln_w > 30.0
                                       ? ln_w + std::log((a + 1.0) + (a - 1.0) * std::exp(-ln_w))
                                       : std::log((a + 1.0) * w + (a - 1.0));
            return (a - 1.0) * (lg1 + lg2) - 2.0 * (std::log(u1) + std::log(u2)) +
                   (1.0 / a - 2.0) * ln_s - 3.0 * detail::log1p_w(ln_w) + ln_tail;
        }
        case CopulaFamily::Arch14: {
            const double a = *spec.alpha;
            const double lg1 = std::log(std::expm1(-std::log(u1) / a));
            const double lg2 = std::log(std::expm1(-std::log(u2) / a));
            const double ln_s = detail::log_add_exp(a * lg1, a * lg2);
            const double ln_w = ln_s / a;
            const double w = std::exp(std::min(ln_w, 700.0));
            const double ln_tail = ln_w > 30.0
                                       ? ln_w + std::log(2.0 * a + (a - 1.0) * std::exp(-ln_w))
                                       : std::log(2.0 * a * w + (a - 1.0));
            return (a - 1.0) * (lg1 + lg2) - (1.0 / a + 1.0) * (std::log(u1) + std::log(u2)) +
                   (1.0 / a - 2.0) * ln_s - (a + 2.0) * detail::log1p_w(ln_w) + ln_tail -
                   std::log(a);
        }
    }
    return -std::numeric_limits<double>::infinity();
}

inline double copula_pdf(const CopulaSpec& spec, double u1, double u2) {
    return std::exp(copula_log_pdf(spec, u1, u2));
}

namespace detail {

// Conditional CDF P(U2 <= u2 | U1 = u1), used by the conditional sampler.
inline double copula_conditional_cdf(const CopulaSpec& spec, double u2, double u1) {
    switch (spec.family) {
        case CopulaFamily::Product:
            return u2;
        case CopulaFamily::Gaussian: {
            const double a = *spec.alpha;
            return normal_cdf((normal_quantile(u2) - a * normal_quantile(u1)) /
                              std::sqrt(1.0 - a * a));
        }
        case CopulaFamily::FGM: {
            const double a = *spec.alpha;
            return u2 * (1.0 + a * (1.0 - 2.0 * u1) * (1.0 - u2));
        }
        case CopulaFamily::Clayton: {
            const double a = *spec.alpha;
            if (a < kAlphaIndepEps) return u2;
            const double lu1 = std::log(u1), lu2 = std::log(u2);
            const double ln_s = log_sum_exp_m1(-a * lu1, -a * lu2);
            return std::exp(-(a + 1.0) * lu1 - (1.0 / a + 1.0) * ln_s);
        }
        case CopulaFamily::Gumbel: {
            const double a = *spec.alpha;
            const double lt1 = std::log(-std::log(u1)), lt2 = std::log(-std::log(u2));
            const double ln_s = log_add_exp(a * lt1, a * lt2);
            const double w = std::exp(std::min(ln_s / a, 700.0));
            return std::exp(-w + (1.0 / a - 1.0) * ln_s + (a - 1.0) * lt1 - std::log(u1));
        }
        case CopulaFamily::Arch12: {
            const double a = *spec.alpha;
            const double lg1 = std::log(1.0 / u1 - 1.0), lg2 = std::log(1.0 / u2 - 1.0);
            const double ln_s = log_add_exp(a * lg1, a * lg2);
            const double ln_w = ln_s / a;
            return std::exp(-2.0 * log1p_w(ln_w) + (1.0 / a - 1.0) * ln_s + (a - 1.0) * lg1 -
                            2.0 * std::log(u1));
        }
        case CopulaFamily::Arch14: {
            const double a = *spec.alpha;
            const double lg1 = std::log(std::expm1(-std::log(u1) / a));
            const double lg2 = std::log(std::expm1(-std::log(u2) / a));
            const double ln_s = log_add_exp(a * lg1, a * lg2);
            const double ln_w = ln_s / a;
            return std::exp(-(a + 1.0) * log1p_w(ln_w) + (1.0 / a - 1.0) * ln_s +
                            (a - 1.0) * lg1 - (1.0 / a + 1.0) * std::log(u1));
        }
    }
    return u2;
}

inline double invert_conditional(const CopulaSpec& spec, double p, double u1) {
    switch (spec.family) {
        case CopulaFamily::Product:
            return p;
        case CopulaFamily::Gaussian: {
            const double a = *spec.alpha;
            return normal_cdf(a * normal_quantile(u1) +
                              std::sqrt(1.0 - a * a) * normal_quantile(p));
        }
        case CopulaFamily::Clayton: {
            const double a = *spec.alpha;
            if (a < kAlphaIndepEps) return p;
            // closed-form inverse, evaluated in logs to survive extreme alpha
            const double t = std::log(std::pow(p, -a / (1.0 + a)) - 1.0) - a * std::log(u1);
            return std::exp(-softplus(t) / a);
        }
        case CopulaFamily::FGM: {
            const double a = *spec.alpha * (1.0 - 2.0 * u1);
            if (std::fabs(a) < 1e-12) return p;
            const double b = 1.0 + a;
            const double disc = std::sqrt(std::max(b * b - 4.0 * a * p, 0.0));
            return 2.0 * p / (b + disc);  // stable quadratic root in [0,1]
        }
        default: {
            auto g = [&](double u2) { return copula_conditional_cdf(spec, u2, u1); };
            return bisect_increasing(g, 1e-15, 1.0 - 1e-15, p, 1e-10);
        }
    }
}

}  // namespace detail

inline std::vector<PseudoSample> copula_sample(const CopulaSpec& spec, std::size_t n, Rng& rng) {
    spec.validate();
    if (n < 1) throw DomainError("copula_sample: n must be >= 1");
    std::vector<PseudoSample> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u1 = uniform01(rng);
        const double p = uniform01(rng);
        out[i] = {u1, detail::invert_conditional(spec, p, u1)};
    }
    return out;
}

// Coordinate-wise empirical CDF ranks (midranks for ties), rescaled by
// Q/(Q+1) so every coordinate is strictly inside (0,1). Weights are point
// multiplicities: the weighted ranks of unique points equal the plain ranks
// of the expanded multiset.
inline std::vector<PseudoSample> pseudo_observations(std::span<const Point2> samples,
                                                     std::span<const double> weights = {}) {
    const std::size_t q = samples.size();
    if (!weights.empty() && weights.size() != q)
        throw DomainError("pseudo_observations: weight/sample size mismatch");
    double total = 0.0;
    if (weights.empty())
        total = static_cast<double>(q);
    else
        for (double w : weights) total += w;
    if (total < 2.0) throw InsufficientDataError("pseudo_observations: need at least 2 points");

    std::vector<PseudoSample> out(q);
    std::vector<std::size_t> idx(q);
    std::vector<double> vals(q);
    for (int dim = 0; dim < 2; ++dim) {
        for (std::size_t i = 0; i < q; ++i)
            vals[i] = dim == 0 ? samples[i].x1 : samples[i].x2;
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::sort(idx.begin(), idx.end(),
                  [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
        std::size_t i = 0;
        double cum = 0.0;
        while (i < q) {
            std::size_t j = i;
            double block = weights.empty() ? 1.0 : weights[idx[i]];
            while (j + 1 < q && vals[idx[j + 1]] == vals[idx[i]]) {
                ++j;
                block += weights.empty() ? 1.0 : weights[idx[j]];
            }
            const double midrank = cum + 0.5 * (block + 1.0);  // 1-based midrank
            const double u = midrank / (total + 1.0);
            for (std::size_t m = i; m <= j; ++m) {
                if (dim == 0)
                    out[idx[m]].u1 = u;
                else
                    out[idx[m]].u2 = u;
            }
            cum += block;
            i = j + 1;
        }
    }
    return out;
}

// Parametric pseudo-observations (the IFM variant): marginal CDFs of the
// samples under fitted margins, clamped to the open unit interval.
inline std::vector<PseudoSample> parametric_pseudo_observations(std::span<const Point2> samples,
                                                                const MarginalSpec& m1,
                                                                const MarginalSpec& m2) {
    std::vector<PseudoSample> out(samples.size());
    constexpr double eps = 1e-10;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        out[i].u1 = std::clamp(marginal_cdf(m1, samples[i].x1), eps, 1.0 - eps);
        out[i].u2 = std::clamp(marginal_cdf(m2, samples[i].x2), eps, 1.0 - eps);
    }
    return out;
}

struct CopulaFit {
    CopulaSpec spec;
    double log_lik = 0.0;
    bool at_boundary = false;
};

namespace detail {

inline double pseudo_nll(const CopulaSpec& spec, std::span<const PseudoSample> ps,
                         std::span<const double> w) {
    double nll = 0.0;
    for (std::size_t i = 0; i < ps.size(); ++i)
        nll -= (w.empty() ? 1.0 : w[i]) * copula_log_pdf(spec, ps[i].u1, ps[i].u2);
    return nll;
}

}  // namespace detail

// Pseudo-maximum-likelihood estimate of the dependence parameter: a coarse
// scan over the (transformed) domain followed by Brent refinement. A warm
// alpha narrows the scan to a neighbourhood of the previous optimum.
inline CopulaFit copula_fit_pml_detailed(CopulaFamily family, std::span<const PseudoSample> pseudo,
                                         const std::optional<double>& warm_alpha = {},
                                         std::span<const double> weights = {}) {
    if (pseudo.empty()) throw InsufficientDataError("copula_fit_pml: empty pseudo-sample");
    if (!weights.empty() && weights.size() != pseudo.size())
        throw DomainError("copula_fit_pml: weight/sample size mismatch");
    for (const auto& p : pseudo)
        if (!(p.u1 > 0.0 && p.u1 < 1.0 && p.u2 > 0.0 && p.u2 < 1.0))
            throw DomainError("copula_fit_pml: pseudo-observations must be strictly interior");

    if (family == CopulaFamily::Product) return {CopulaSpec::product(), 0.0, false};

    // transformed coordinate w -> alpha and its admissible interval
    std::function<double(double)> to_alpha;
    double wlo, whi;
    constexpr double alpha_cap = 200.0;
    switch (family) {
        case CopulaFamily::Gaussian:
            to_alpha = [](double w) { return w; };
            wlo = -1.0 + 1e-6;
            whi = 1.0 - 1e-6;
            break;
        case CopulaFamily::FGM:
            to_alpha = [](double w) { return w; };
            wlo = -1.0;
            whi = 1.0;
            break;
        case CopulaFamily::Clayton:
            to_alpha = [](double w) { return std::expm1(w); };
            wlo = 0.0;
            whi = std::log1p(alpha_cap);
            break;
        default:  // Gumbel, Arch12, Arch14: alpha = exp(w) >= 1
            to_alpha = [](double w) { return std::exp(w); };
            wlo = 0.0;
            whi = std::log(alpha_cap);
            break;
    }

    auto nll_w = [&](double w) {
        return detail::pseudo_nll(CopulaSpec::make(family, to_alpha(w)), pseudo, weights);
    };

    // invert the transform for the warm start, if one is usable
    std::optional<double> warm_w;
    if (warm_alpha) {
        double w = *warm_alpha;
        if (family == CopulaFamily::Clayton) w = std::log1p(*warm_alpha);
        if (family == CopulaFamily::Gumbel || family == CopulaFamily::Arch12 ||
            family == CopulaFamily::Arch14)
            w = std::log(*warm_alpha);
        if (w >= wlo && w <= whi) warm_w = w;
    }

    double a, b, best_w;
    double best_f;
    if (warm_w) {
        const double r = 0.15 * (whi - wlo);
        a = std::max(wlo, *warm_w - r);
        b = std::min(whi, *warm_w + r);
        best_w = *warm_w;
        best_f = nll_w(best_w);
    } else {
        constexpr int kScan = 17;
        int best_i = 0;
        best_f = std::numeric_limits<double>::infinity();
        std::array<double, kScan> ws{};
        for (int i = 0; i < kScan; ++i) {
            ws[i] = wlo + (whi - wlo) * static_cast<double>(i) / (kScan - 1);
            const double f = nll_w(ws[i]);
            if (f < best_f) {
                best_f = f;
                best_i = i;
            }
        }
        a = ws[std::max(best_i - 1, 0)];
        b = ws[std::min(best_i + 1, kScan - 1)];
        best_w = ws[best_i];
    }
    auto br = brent_minimize(nll_w, a, b, 1e-9, 200);
    // a warm bracket can pin the optimum to its edge; fall back to the scan
    if (warm_w && (br.x - a < 1e-6 * (b - a) || b - br.x < 1e-6 * (b - a)) &&
        (a > wlo + 1e-12 || b < whi - 1e-12)) {
        return copula_fit_pml_detailed(family, pseudo, std::nullopt, weights);
    }

    double w = br.fx <= best_f ? br.x : best_w;
    const double fw = std::min(br.fx, best_f);
    if (!std::isfinite(fw))
        throw FitFailure(std::string("copula_fit_pml: no finite likelihood for ") +
                         to_string(family));

    bool boundary = false;
    const double w_edge_tol = 1e-5 * (1.0 + std::fabs(whi - wlo));
    if (w - wlo < w_edge_tol) {
        w = wlo;
        boundary = true;
    } else if (whi - w < w_edge_tol) {
        w = whi;
        boundary = true;
    }
    const CopulaSpec spec = CopulaSpec::make(family, to_alpha(w));
    return {spec, -detail::pseudo_nll(spec, pseudo, weights), boundary};
}

inline CopulaSpec copula_fit_pml(CopulaFamily family, std::span<const PseudoSample> pseudo) {
    return copula_fit_pml_detailed(family, pseudo).spec;
}

}  // namespace cbmm
