#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cbmm/errors.hpp"
#include "cbmm/optimize.hpp"
#include "cbmm/rng.hpp"
#include "cbmm/special_functions.hpp"

namespace cbmm {

enum class MarginalFamily { Gaussian, Gamma, Beta, BetaPrime, Fisk, Laplace, StudentT };

inline constexpr std::array<MarginalFamily, 7> kAllMarginalFamilies = {
    MarginalFamily::Gaussian, MarginalFamily::Gamma,   MarginalFamily::Beta,
    MarginalFamily::BetaPrime, MarginalFamily::Fisk,   MarginalFamily::Laplace,
    MarginalFamily::StudentT};

inline const char* to_string(MarginalFamily f) {
    switch (f) {
        case MarginalFamily::Gaussian: return "Gaussian";
        case MarginalFamily::Gamma: return "Gamma";
        case MarginalFamily::Beta: return "Beta";
        case MarginalFamily::BetaPrime: return "BetaPrime";
        case MarginalFamily::Fisk: return "Fisk";
        case MarginalFamily::Laplace: return "Laplace";
        case MarginalFamily::StudentT: return "StudentT";
    }
    return "?";
}

inline MarginalFamily marginal_family_from_string(std::string_view s) {
    for (MarginalFamily f : kAllMarginalFamilies)
        if (s == to_string(f)) return f;
    // accept a few aliases used in lists and on the command line
    if (s == "T" || s == "t" || s == "studentt" || s == "student_t") return MarginalFamily::StudentT;
    if (s == "gaussian" || s == "normal") return MarginalFamily::Gaussian;
    if (s == "gamma") return MarginalFamily::Gamma;
    if (s == "beta") return MarginalFamily::Beta;
    if (s == "betaprime" || s == "beta_prime") return MarginalFamily::BetaPrime;
    if (s == "fisk" || s == "loglogistic") return MarginalFamily::Fisk;
    if (s == "laplace") return MarginalFamily::Laplace;
    throw DomainError("unknown marginal family: " + std::string(s));
}

// Number of shape parameters on top of loc/scale.
inline int shape_count(MarginalFamily f) {
    switch (f) {
        case MarginalFamily::Gaussian:
        case MarginalFamily::Laplace: return 0;
        case MarginalFamily::Gamma:
        case MarginalFamily::Fisk:
        case MarginalFamily::StudentT: return 1;
        case MarginalFamily::Beta:
        case MarginalFamily::BetaPrime: return 2;
    }
    return 0;
}

// Free parameters of the family (shapes + loc + scale), e.g. for BIC.
inline int free_param_count(MarginalFamily f) { return shape_count(f) + 2; }

// One univariate distribution: a standardized family shifted by loc and scale.
struct MarginalSpec {
    MarginalFamily family = MarginalFamily::Gaussian;
    std::optional<double> shape1;
    std::optional<double> shape2;
    double loc = 0.0;
    double scale = 1.0;

    static MarginalSpec gaussian(double loc, double scale) {
        return {MarginalFamily::Gaussian, std::nullopt, std::nullopt, loc, scale};
    }
    static MarginalSpec gamma(double shape, double loc, double scale) {
        return {MarginalFamily::Gamma, shape, std::nullopt, loc, scale};
    }
    static MarginalSpec beta(double a, double b, double loc, double scale) {
        return {MarginalFamily::Beta, a, b, loc, scale};
    }
    static MarginalSpec beta_prime(double a, double b, double loc, double scale) {
        return {MarginalFamily::BetaPrime, a, b, loc, scale};
    }
    static MarginalSpec fisk(double shape, double loc, double scale) {
        return {MarginalFamily::Fisk, shape, std::nullopt, loc, scale};
    }
    static MarginalSpec laplace(double loc, double scale) {
        return {MarginalFamily::Laplace, std::nullopt, std::nullopt, loc, scale};
    }
    static MarginalSpec student_t(double dof, double loc, double scale) {
        return {MarginalFamily::StudentT, dof, std::nullopt, loc, scale};
    }

    void validate() const {
        if (!(std::isfinite(loc))) throw DomainError("marginal: loc must be finite");
        if (!(scale > 0.0) || !std::isfinite(scale))
            throw DomainError("marginal: scale must be positive and finite");
        const int ns = cbmm::shape_count(family);
        if (ns == 0 && (shape1 || shape2))
            throw DomainError(std::string(to_string(family)) + " takes no shape parameter");
        if (ns >= 1) {
            if (!shape1) throw DomainError(std::string(to_string(family)) + " requires shape1");
            if (!(*shape1 > 0.0) || !std::isfinite(*shape1))
                throw DomainError(std::string(to_string(family)) + ": shape1 must be positive");
        }
        if (ns == 1 && shape2)
            throw DomainError(std::string(to_string(family)) + " takes a single shape parameter");
        if (ns == 2) {
            if (!shape2) throw DomainError(std::string(to_string(family)) + " requires shape2");
            if (!(*shape2 > 0.0) || !std::isfinite(*shape2))
                throw DomainError(std::string(to_string(family)) + ": shape2 must be positive");
        }
    }
};

inline double support_lower(const MarginalSpec& s) {
    switch (s.family) {
        case MarginalFamily::Gamma:
        case MarginalFamily::BetaPrime:
        case MarginalFamily::Fisk:
        case MarginalFamily::Beta: return s.loc;
        default: return -std::numeric_limits<double>::infinity();
    }
}

inline double support_upper(const MarginalSpec& s) {
    if (s.family == MarginalFamily::Beta) return s.loc + s.scale;
    return std::numeric_limits<double>::infinity();
}

namespace detail {

inline double softplus(double t) {
    return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

// log pdf of the standardized (loc=0, scale=1) family at z; -inf off support.
inline double std_log_pdf(const MarginalSpec& s, double z) {
    constexpr double ninf = -std::numeric_limits<double>::infinity();
    switch (s.family) {
        case MarginalFamily::Gaussian:
            return -0.5 * z * z - kLnSqrt2Pi;
        case MarginalFamily::Gamma: {
            if (z <= 0.0) return ninf;
            const double t1 = *s.shape1;
            return (t1 - 1.0) * std::log(z) - z - std::lgamma(t1);
        }
        case MarginalFamily::Beta: {
            if (z <= 0.0 || z >= 1.0) return ninf;
            const double a = *s.shape1, b = *s.shape2;
            return (a - 1.0) * std::log(z) + (b - 1.0) * std::log1p(-z) - log_beta(a, b);
        }
        case MarginalFamily::BetaPrime: {
            if (z <= 0.0) return ninf;
            const double a = *s.shape1, b = *s.shape2;
            return (a - 1.0) * std::log(z) - (a + b) * std::log1p(z) - log_beta(a, b);
        }
        case MarginalFamily::Fisk: {
            if (z <= 0.0) return ninf;
            const double t1 = *s.shape1;
            const double lz = std::log(z);
            return std::log(t1) + (t1 - 1.0) * lz - 2.0 * softplus(t1 * lz);
        }
        case MarginalFamily::Laplace:
            return -std::fabs(z) - 0.6931471805599453094;
        case MarginalFamily::StudentT: {
            const double v = *s.shape1;
            return std::lgamma(0.5 * (v + 1.0)) - std::lgamma(0.5 * v) - 0.5 * std::log(kPi * v) -
                   0.5 * (v + 1.0) * std::log1p(z * z / v);
        }
    }
    return ninf;
}

inline double std_cdf(const MarginalSpec& s, double z) {
    switch (s.family) {
        case MarginalFamily::Gaussian:
            return normal_cdf(z);
        case MarginalFamily::Gamma:
            return z <= 0.0 ? 0.0 : gamma_p(*s.shape1, z);
        case MarginalFamily::Beta:
            return inc_beta(z, *s.shape1, *s.shape2);
        case MarginalFamily::BetaPrime:
            return z <= 0.0 ? 0.0 : inc_beta(z / (1.0 + z), *s.shape1, *s.shape2);
        case MarginalFamily::Fisk: {
            if (z <= 0.0) return 0.0;
            const double t = *s.shape1 * std::log(z);
            return 1.0 / (1.0 + std::exp(-t));
        }
        case MarginalFamily::Laplace:
            return z < 0.0 ? 0.5 * std::exp(z) : 1.0 - 0.5 * std::exp(-z);
        case MarginalFamily::StudentT: {
            const double v = *s.shape1;
            const double ib = inc_beta(v / (v + z * z), 0.5 * v, 0.5);
            return z >= 0.0 ? 1.0 - 0.5 * ib : 0.5 * ib;
        }
    }
    return 0.0;
}

// Safeguarded Newton inversion of the standardized CDF.
inline double std_quantile_newton(const MarginalSpec& s, double p, double x0, double lo,
                                  double hi) {
    // tighten infinite bracket ends by doubling away from x0
    if (std::isinf(lo)) {
        double step = std::max(1.0, std::fabs(x0));
        lo = x0 - step;
        while (std_cdf(s, lo) > p) {
            step *= 2.0;
            lo = x0 - step;
        }
    }
    if (std::isinf(hi)) {
        double step = std::max(1.0, std::fabs(x0));
        hi = x0 + step;
        while (std_cdf(s, hi) < p) {
            step *= 2.0;
            hi = x0 + step;
        }
    }
    double x = x0;
    if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);
    for (int it = 0; it < 100; ++it) {
        const double err = std_cdf(s, x) - p;
        if (err > 0.0)
            hi = x;
        else
            lo = x;
        if (std::fabs(err) < 1e-14 || (hi - lo) < 1e-15 * std::max(1.0, std::fabs(x))) break;
        const double dens = std::exp(std_log_pdf(s, x));
        double xn = (dens > 0.0) ? x - err / dens : x;
        if (!(xn > lo && xn < hi) || !std::isfinite(xn)) xn = 0.5 * (lo + hi);
        x = xn;
    }
    return x;
}

inline double std_quantile(const MarginalSpec& s, double p) {
    switch (s.family) {
        case MarginalFamily::Gaussian:
            return normal_quantile(p);
        case MarginalFamily::Laplace:
            return p < 0.5 ? std::log(2.0 * p) : -std::log(2.0 * (1.0 - p));
        case MarginalFamily::Fisk:
            return std::pow(p / (1.0 - p), 1.0 / *s.shape1);
        case MarginalFamily::Gamma: {
            const double a = *s.shape1;
            const double z = normal_quantile(p);
            const double c = 1.0 - 1.0 / (9.0 * a) + z / (3.0 * std::sqrt(a));
            double x0 = a * c * c * c;  // Wilson-Hilferty
            if (!(x0 > 0.0)) x0 = a * std::exp(z / std::sqrt(a));
            return std_quantile_newton(s, p, x0, 0.0, std::numeric_limits<double>::infinity());
        }
        case MarginalFamily::Beta: {
            const double a = *s.shape1, b = *s.shape2;
            const double m = a / (a + b);
            const double sd = std::sqrt(m * (1.0 - m) / (a + b + 1.0));
            double x0 = std::clamp(m + sd * normal_quantile(p), 1e-9, 1.0 - 1e-9);
            return std_quantile_newton(s, p, x0, 0.0, 1.0);
        }
        case MarginalFamily::BetaPrime: {
            MarginalSpec beta_spec = MarginalSpec::beta(*s.shape1, *s.shape2, 0.0, 1.0);
            const double q = std_quantile(beta_spec, p);
            return q / (1.0 - q);
        }
        case MarginalFamily::StudentT: {
            const double v = *s.shape1;
            double x0 = normal_quantile(p);
            if (v > 2.0) x0 *= std::sqrt(v / (v - 2.0));
            return std_quantile_newton(s, p, x0, -std::numeric_limits<double>::infinity(),
                                       std::numeric_limits<double>::infinity());
        }
    }
    return 0.0;
}

}  // namespace detail

inline double marginal_log_pdf(const MarginalSpec& spec, double y) {
    spec.validate();
    return detail::std_log_pdf(spec, (y - spec.loc) / spec.scale) - std::log(spec.scale);
}

inline double marginal_pdf(const MarginalSpec& spec, double y) {
    return std::exp(marginal_log_pdf(spec, y));
}

inline double marginal_cdf(const MarginalSpec& spec, double y) {
    spec.validate();
    const double f = detail::std_cdf(spec, (y - spec.loc) / spec.scale);
    return std::clamp(f, 0.0, 1.0);
}

inline double marginal_quantile(const MarginalSpec& spec, double p) {
    spec.validate();
    if (!(p > 0.0 && p < 1.0)) throw DomainError("marginal_quantile: p must lie in (0,1)");
    return spec.loc + spec.scale * detail::std_quantile(spec, p);
}

inline std::vector<double> marginal_sample(const MarginalSpec& spec, std::size_t n, Rng& rng) {
    spec.validate();
    if (n < 1) throw DomainError("marginal_sample: n must be >= 1");
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = spec.loc + spec.scale * detail::std_quantile(spec, uniform01(rng));
    return out;
}

struct MarginalFit {
    MarginalSpec spec;
    double log_lik = 0.0;
    bool converged = true;
};

namespace detail {

struct SampleStats {
    double min, max, range, mean, sd, median, q25, q75;
    double total_weight;
};

// Moments and quantiles of a (possibly weighted) sample. Weights act as
// multiplicities: an empty span means unit weight throughout.
inline SampleStats sample_stats(std::span<const double> y, std::span<const double> w = {}) {
    SampleStats st{};
    const std::size_t n = y.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return y[a] < y[b]; });
    auto wt = [&](std::size_t i) { return w.empty() ? 1.0 : w[i]; };

    st.min = y[idx.front()];
    st.max = y[idx.back()];
    st.range = st.max - st.min;
    double total = 0.0, s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        total += wt(i);
        s += wt(i) * y[i];
    }
    st.total_weight = total;
    st.mean = s / total;
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += wt(i) * sq(y[i] - st.mean);
    st.sd = std::sqrt(ss / total);

    auto quantile = [&](double q) {
        const double target = q * total;
        double cum = 0.0;
        for (std::size_t i : idx) {
            cum += wt(i);
            if (cum >= target) return y[i];
        }
        return y[idx.back()];
    };
    st.median = quantile(0.5);
    st.q25 = quantile(0.25);
    st.q75 = quantile(0.75);
    return st;
}

inline double clampd(double v, double lo, double hi) { return std::clamp(v, lo, hi); }

// Negative log-likelihood functions. Per-parameter constants are hoisted out
// of the data loop; each keeps to one or two transcendentals per point.
// Weights act as point multiplicities (empty span = unit weights), which is
// how fused subgroups with repeated points are evaluated without re-walking
// the duplicates.

inline double nll_gamma(double t1, double loc, double scale, std::span<const double> y,
                        std::span<const double> w) {
    double total = 0.0, sum_log = 0.0, sum_lin = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - loc;
        if (!(d > 0.0)) return std::numeric_limits<double>::infinity();
        const double wi = w.empty() ? 1.0 : w[i];
        total += wi;
        sum_log += wi * std::log(d);
        sum_lin += wi * d;
    }
    const double ls = std::log(scale);
    return total * (std::lgamma(t1) + ls) - (t1 - 1.0) * (sum_log - total * ls) + sum_lin / scale;
}

inline double nll_beta(double a, double b, double loc, double scale, std::span<const double> y,
                       std::span<const double> w) {
    double total = 0.0, sl = 0.0, sl1 = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double z = (y[i] - loc) / scale;
        if (!(z > 0.0 && z < 1.0)) return std::numeric_limits<double>::infinity();
        const double wi = w.empty() ? 1.0 : w[i];
        total += wi;
        sl += wi * std::log(z);
        sl1 += wi * std::log1p(-z);
    }
    return total * (log_beta(a, b) + std::log(scale)) - (a - 1.0) * sl - (b - 1.0) * sl1;
}

inline double nll_beta_prime(double a, double b, double loc, double scale,
                             std::span<const double> y, std::span<const double> w) {
    double total = 0.0, sl = 0.0, sl1 = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double z = (y[i] - loc) / scale;
        if (!(z > 0.0)) return std::numeric_limits<double>::infinity();
        const double wi = w.empty() ? 1.0 : w[i];
        total += wi;
        sl += wi * std::log(z);
        sl1 += wi * std::log1p(z);
    }
    return total * (log_beta(a, b) + std::log(scale)) - (a - 1.0) * sl + (a + b) * sl1;
}

inline double nll_fisk(double t1, double loc, double scale, std::span<const double> y,
                       std::span<const double> w) {
    double total = 0.0, sl = 0.0, ssp = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double z = (y[i] - loc) / scale;
        if (!(z > 0.0)) return std::numeric_limits<double>::infinity();
        const double wi = w.empty() ? 1.0 : w[i];
        const double lz = std::log(z);
        total += wi;
        sl += wi * lz;
        ssp += wi * softplus(t1 * lz);
    }
    return total * (std::log(scale) - std::log(t1)) - (t1 - 1.0) * sl + 2.0 * ssp;
}

inline double nll_student_t(double v, double loc, double scale, std::span<const double> y,
                            std::span<const double> w) {
    double total = 0.0, s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double z = (y[i] - loc) / scale;
        const double wi = w.empty() ? 1.0 : w[i];
        total += wi;
        s += wi * std::log1p(z * z / v);
    }
    const double c = -std::lgamma(0.5 * (v + 1.0)) + std::lgamma(0.5 * v) +
                     0.5 * std::log(kPi * v) + std::log(scale);
    return total * c + 0.5 * (v + 1.0) * s;
}

struct NumericFitPlan {
    std::vector<double> w0;     // initial point in transformed space
    std::vector<double> steps;  // initial simplex edges
    std::function<MarginalSpec(const std::vector<double>&)> unpack;
    std::function<double(const std::vector<double>&)> objective;

    // w0 from a previous fit of the same family, when its support still
    // covers the data; shrinks the simplex accordingly
    void apply_warm_start(const MarginalSpec& warm, double ymin, double ymax, double margin) {
        std::vector<double> w;
        const double gap = ymin - margin - warm.loc;
        switch (warm.family) {
            case MarginalFamily::Gamma:
            case MarginalFamily::Fisk:
                if (gap <= 0.0) return;
                w = {std::log(*warm.shape1), std::log(gap), std::log(warm.scale)};
                break;
            case MarginalFamily::StudentT:
                w = {std::log(*warm.shape1), warm.loc, std::log(warm.scale)};
                break;
            case MarginalFamily::BetaPrime:
                if (gap <= 0.0) return;
                w = {std::log(*warm.shape1), std::log(*warm.shape2), std::log(gap),
                     std::log(warm.scale)};
                break;
            case MarginalFamily::Beta: {
                const double slack = warm.scale - (ymax + margin - warm.loc);
                if (gap <= 0.0 || slack <= 0.0) return;
                w = {std::log(*warm.shape1), std::log(*warm.shape2), std::log(gap),
                     std::log(slack)};
                break;
            }
            default:
                return;
        }
        w0 = std::move(w);
        for (double& s : steps) s *= 0.25;
    }
};

inline NumericFitPlan make_fit_plan(MarginalFamily family, std::span<const double> y,
                                    std::span<const double> wts, const SampleStats& st) {
    NumericFitPlan plan;
    const double margin = std::max(1e-9 * st.range, 1e-300);
    const double ymin = st.min, ymax = st.max;
    const double sd = std::max(st.sd, 1e-12);
    const double cap_w = std::log(1e6);

    switch (family) {
        case MarginalFamily::Gamma: {
            const double gap0 = std::max(0.5 * sd, 16.0 * margin);
            const double loc0 = ymin - gap0;
            const double m = st.mean - loc0;
            const double v = sq(sd);
            plan.w0 = {std::log(clampd(m * m / v, 0.05, 1e4)), std::log(gap0),
                       std::log(clampd(v / m, 1e-8, 1e8))};
            plan.steps = {0.5, 0.8, 0.5};
            plan.unpack = [ymin, margin, cap_w](const std::vector<double>& w) {
                return MarginalSpec::gamma(std::exp(std::min(w[0], cap_w)),
                                           ymin - margin - std::exp(std::clamp(w[1], -700.0, 700.0)),
                                           std::exp(std::clamp(w[2], -700.0, 700.0)));
            };
            plan.objective = [y, wts, unpack = plan.unpack](const std::vector<double>& w) {
                const MarginalSpec s = unpack(w);
                return nll_gamma(*s.shape1, s.loc, s.scale, y, wts);
            };
            break;
        }
        case MarginalFamily::Fisk: {
            const double gap0 = std::max(0.5 * sd, 16.0 * margin);
            const double loc0 = ymin - gap0;
            const double med = st.median - loc0;
            const double ratio = (st.q75 - loc0) / std::max(st.q25 - loc0, 1e-12);
            const double t0 = clampd(std::log(9.0) / std::log(std::max(ratio, 1.0 + 1e-6)), 0.3, 100.0);
            plan.w0 = {std::log(t0), std::log(gap0), std::log(std::max(med, 1e-8))};
            plan.steps = {0.5, 0.8, 0.5};
            plan.unpack = [ymin, margin, cap_w](const std::vector<double>& w) {
                return MarginalSpec::fisk(std::exp(std::min(w[0], cap_w)),
                                          ymin - margin - std::exp(std::clamp(w[1], -700.0, 700.0)),
                                          std::exp(std::clamp(w[2], -700.0, 700.0)));
            };
            plan.objective = [y, wts, unpack = plan.unpack](const std::vector<double>& w) {
                const MarginalSpec s = unpack(w);
                return nll_fisk(*s.shape1, s.loc, s.scale, y, wts);
            };
            break;
        }
        case MarginalFamily::StudentT: {
            const double iqr = st.q75 - st.q25;
            const double scale0 = std::max(iqr > 0.0 ? iqr / 1.349 : sd, 1e-12);
            plan.w0 = {std::log(6.0), st.median, std::log(scale0)};
            plan.steps = {0.8, 0.3 * sd, 0.4};
            plan.unpack = [cap_w](const std::vector<double>& w) {
                return MarginalSpec::student_t(std::exp(std::min(w[0], cap_w)), w[1],
                                               std::exp(std::clamp(w[2], -700.0, 700.0)));
            };
            plan.objective = [y, wts, unpack = plan.unpack](const std::vector<double>& w) {
                const MarginalSpec s = unpack(w);
                return nll_student_t(*s.shape1, s.loc, s.scale, y, wts);
            };
            break;
        }
        case MarginalFamily::Beta: {
            const double pad = std::max(0.05 * st.range, 32.0 * margin);
            const double loc0 = ymin - pad;
            const double scale0 = st.range + 2.0 * pad;
            const double m = (st.mean - loc0) / scale0;
            const double v = std::max(sq(sd / scale0), 1e-12);
            const double nu = std::max(m * (1.0 - m) / v - 1.0, 0.2);
            plan.w0 = {std::log(clampd(m * nu, 0.05, 1e4)), std::log(clampd((1.0 - m) * nu, 0.05, 1e4)),
                       std::log(pad - margin), std::log(pad - margin)};
            plan.steps = {0.5, 0.5, 0.8, 0.8};
            plan.unpack = [ymin, ymax, margin, cap_w](const std::vector<double>& w) {
                const double loc = ymin - margin - std::exp(std::clamp(w[2], -700.0, 700.0));
                const double scale =
                    (ymax + margin - loc) + std::exp(std::clamp(w[3], -700.0, 700.0));
                return MarginalSpec::beta(std::exp(std::min(w[0], cap_w)),
                                          std::exp(std::min(w[1], cap_w)), loc, scale);
            };
            plan.objective = [y, wts, unpack = plan.unpack](const std::vector<double>& w) {
                const MarginalSpec s = unpack(w);
                return nll_beta(*s.shape1, *s.shape2, s.loc, s.scale, y, wts);
            };
            break;
        }
        case MarginalFamily::BetaPrime: {
            const double gap0 = std::max(0.5 * sd, 16.0 * margin);
            const double loc0 = ymin - gap0;
            plan.w0 = {std::log(2.0), std::log(3.0), std::log(gap0),
                       std::log(std::max(st.mean - loc0, 1e-8))};
            plan.steps = {0.5, 0.5, 0.8, 0.5};
            plan.unpack = [ymin, margin, cap_w](const std::vector<double>& w) {
                return MarginalSpec::beta_prime(
                    std::exp(std::min(w[0], cap_w)), std::exp(std::min(w[1], cap_w)),
                    ymin - margin - std::exp(std::clamp(w[2], -700.0, 700.0)),
                    std::exp(std::clamp(w[3], -700.0, 700.0)));
            };
            plan.objective = [y, wts, unpack = plan.unpack](const std::vector<double>& w) {
                const MarginalSpec s = unpack(w);
                return nll_beta_prime(*s.shape1, *s.shape2, s.loc, s.scale, y, wts);
            };
            break;
        }
        default:
            throw DomainError("make_fit_plan: family has a closed-form estimator");
    }
    return plan;
}

}  // namespace detail

// Maximum-likelihood fit of one family. Closed-form for Gaussian and Laplace,
// simplex search over transformed parameters otherwise. A warm spec of the
// same family (e.g. last iteration's fit) seeds the search when feasible.
// Weights are point multiplicities; the weighted fit of unique points equals
// the plain fit of the expanded multiset.
inline MarginalFit marginal_fit_mle_detailed(MarginalFamily family, std::span<const double> samples,
                                             const std::optional<MarginalSpec>& warm = {},
                                             std::span<const double> weights = {}) {
    if (!weights.empty() && weights.size() != samples.size())
        throw DomainError("marginal_fit_mle: weight/sample size mismatch");
    if (samples.empty()) throw InsufficientDataError("marginal_fit_mle: empty sample");
    const auto st = detail::sample_stats(samples, weights);
    if (st.total_weight < 3.0)
        throw InsufficientDataError("marginal_fit_mle: need at least 3 observations");
    if (!(st.range > 0.0)) throw DegenerateDataError("marginal_fit_mle: all observations identical");

    auto log_lik_of = [&](const MarginalSpec& s) {
        double ll = 0.0;
        for (std::size_t i = 0; i < samples.size(); ++i)
            ll += (weights.empty() ? 1.0 : weights[i]) * marginal_log_pdf(s, samples[i]);
        return ll;
    };

    if (family == MarginalFamily::Gaussian) {
        const MarginalSpec s = MarginalSpec::gaussian(st.mean, st.sd);
        return {s, log_lik_of(s), true};
    }
    if (family == MarginalFamily::Laplace) {
        double mad = 0.0;
        for (std::size_t i = 0; i < samples.size(); ++i)
            mad += (weights.empty() ? 1.0 : weights[i]) * std::fabs(samples[i] - st.median);
        mad /= st.total_weight;
        const MarginalSpec s = MarginalSpec::laplace(st.median, std::max(mad, 1e-12));
        return {s, log_lik_of(s), true};
    }

    auto plan = detail::make_fit_plan(family, samples, weights, st);
    if (warm && warm->family == family)
        plan.apply_warm_start(*warm, st.min, st.max, std::max(1e-9 * st.range, 1e-300));
    NelderMeadOptions opt;
    opt.max_evals = 300 * static_cast<int>(plan.w0.size());
    opt.ftol = 1e-10;
    opt.xtol = 1e-7;
    auto res = nelder_mead(plan.objective, plan.w0, plan.steps, opt);
    if (!res.converged) {
        std::vector<double> half_steps(plan.steps);
        for (double& s : half_steps) s *= 0.25;
        auto res2 = nelder_mead(plan.objective, res.x, half_steps, opt);
        if (res2.fx <= res.fx) res = res2;
    }
    const MarginalSpec best = plan.unpack(res.x);
    if (!std::isfinite(res.fx))
        throw FitFailure(std::string("marginal_fit_mle: no finite likelihood for ") +
                         to_string(family));
    return {best, -res.fx, res.converged};
}

inline MarginalSpec marginal_fit_mle(MarginalFamily family, std::span<const double> samples) {
    return marginal_fit_mle_detailed(family, samples).spec;
}

}  // namespace cbmm
