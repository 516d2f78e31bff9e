#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "cbmm/copulas.hpp"
#include "cbmm/errors.hpp"
#include "cbmm/marginals.hpp"
#include "cbmm/rng.hpp"
#include "cbmm/types.hpp"

namespace cbmm {

// One mixture component: a copula linking two shifted marginals.
struct Component {
    double weight = 1.0;
    std::array<MarginalSpec, 2> marginals;
    CopulaSpec copula;

    void validate() const {
        if (!(weight > 0.0 && weight < 1.0) && weight != 1.0)
            throw DomainError("component: weight must lie in (0,1]");
        marginals[0].validate();
        marginals[1].validate();
        copula.validate();
    }
};

struct Cbmm {
    std::vector<Component> components;

    std::size_t k() const { return components.size(); }

    void validate() const {
        if (components.empty()) throw DomainError("cbmm: needs at least one component");
        double total = 0.0;
        for (const auto& c : components) {
            c.validate();
            total += c.weight;
        }
        if (std::fabs(total - 1.0) > 1e-9) throw DomainError("cbmm: weights must sum to 1");
    }

    int free_param_count() const {
        int p = static_cast<int>(components.size()) - 1;
        for (const auto& c : components) {
            p += cbmm::free_param_count(c.marginals[0].family);
            p += cbmm::free_param_count(c.marginals[1].family);
            p += cbmm::free_param_count(c.copula.family);
        }
        return p;
    }
};

struct LabeledSample {
    Point2 x;
    int z = 0;  // 0-based component index
};

namespace detail {

// CDF values clamped into the open unit interval for copula density input.
inline double interior_u(double f) {
    constexpr double lo = 1e-300;
    const double hi = 1.0 - 1.1102230246251565e-16;  // largest double below 1
    return std::clamp(f, lo, hi);
}

}  // namespace detail

inline double component_log_density(const Component& comp, Point2 x) {
    const double lp1 = marginal_log_pdf(comp.marginals[0], x.x1);
    if (!(lp1 > -std::numeric_limits<double>::infinity()))
        return -std::numeric_limits<double>::infinity();
    const double lp2 = marginal_log_pdf(comp.marginals[1], x.x2);
    if (!(lp2 > -std::numeric_limits<double>::infinity()))
        return -std::numeric_limits<double>::infinity();
    const double u1 = detail::interior_u(marginal_cdf(comp.marginals[0], x.x1));
    const double u2 = detail::interior_u(marginal_cdf(comp.marginals[1], x.x2));
    return copula_log_pdf(comp.copula, u1, u2) + lp1 + lp2;
}

inline double component_density(const Component& comp, Point2 x) {
    return std::exp(component_log_density(comp, x));
}

inline double mixture_log_density(const Cbmm& model, Point2 x) {
    double m = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(model.k());
    for (std::size_t i = 0; i < model.k(); ++i) {
        terms[i] = std::log(model.components[i].weight) +
                   component_log_density(model.components[i], x);
        m = std::max(m, terms[i]);
    }
    if (!(m > -std::numeric_limits<double>::infinity())) return m;
    double s = 0.0;
    for (double t : terms) s += std::exp(t - m);
    return m + std::log(s);
}

inline double mixture_density(const Cbmm& model, Point2 x) {
    return std::exp(mixture_log_density(model, x));
}

inline double mixture_cdf(const Cbmm& model, Point2 x) {
    double f = 0.0;
    for (const auto& c : model.components) {
        const double f1 = marginal_cdf(c.marginals[0], x.x1);
        const double f2 = marginal_cdf(c.marginals[1], x.x2);
        f += c.weight * copula_cdf(c.copula, f1, f2);
    }
    return std::clamp(f, 0.0, 1.0);
}

// Posterior responsibilities p(z = k | x); throws if the density vanishes.
inline std::vector<double> posterior(const Cbmm& model, Point2 x) {
    std::vector<double> lt(model.k());
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < model.k(); ++i) {
        lt[i] =
            std::log(model.components[i].weight) + component_log_density(model.components[i], x);
        m = std::max(m, lt[i]);
    }
    if (!(m > -std::numeric_limits<double>::infinity())) throw UndefinedPosteriorError();
    double s = 0.0;
    for (std::size_t i = 0; i < model.k(); ++i) {
        lt[i] = std::exp(lt[i] - m);
        s += lt[i];
    }
    for (double& v : lt) v /= s;
    return lt;
}

// Ancestral sampling: component index, then a copula pseudo-pair pushed
// through the marginal quantile functions. Three uniforms per draw.
inline std::vector<LabeledSample> simulate(const Cbmm& model, std::size_t n, Rng& rng) {
    model.validate();
    if (n < 1) throw DomainError("simulate: n must be >= 1");

    std::vector<double> cum(model.k());
    double acc = 0.0;
    for (std::size_t i = 0; i < model.k(); ++i) {
        acc += model.components[i].weight;
        cum[i] = acc;
    }
    cum.back() = 1.0;

    std::vector<LabeledSample> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double uz = uniform01(rng);
        std::size_t z = 0;
        while (z + 1 < model.k() && uz > cum[z]) ++z;
        const auto& c = model.components[z];
        const double u1 = uniform01(rng);
        const double p = uniform01(rng);
        const double u2 = detail::invert_conditional(c.copula, p, u1);
        out[i].x = {marginal_quantile(c.marginals[0], u1),
                    marginal_quantile(c.marginals[1], detail::interior_u(u2))};
        out[i].z = static_cast<int>(z);
    }
    return out;
}

// Sum of log mixture densities; -inf if any point has zero density.
inline double log_likelihood(const Cbmm& model, std::span<const Point2> data) {
    double ll = 0.0;
    for (const auto& x : data) {
        const double l = mixture_log_density(model, x);
        if (!(l > -std::numeric_limits<double>::infinity()))
            return -std::numeric_limits<double>::infinity();
        ll += l;
    }
    return ll;
}

}  // namespace cbmm
