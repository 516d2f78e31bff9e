#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "cbmm/errors.hpp"
#include "cbmm/mixture.hpp"
#include "cbmm/rng.hpp"
#include "cbmm/types.hpp"

namespace cbmm {

struct GmmComponent {
    double weight = 1.0;
    std::array<double, 2> mean{0.0, 0.0};
    std::array<std::array<double, 2>, 2> cov{{{1.0, 0.0}, {0.0, 1.0}}};
};

struct GmmModel {
    std::vector<GmmComponent> components;

    std::size_t k() const { return components.size(); }

    void validate() const {
        if (components.empty()) throw DomainError("gmm: needs at least one component");
        double total = 0.0;
        for (const auto& c : components) {
            total += c.weight;
            const double det = c.cov[0][0] * c.cov[1][1] - c.cov[0][1] * c.cov[1][0];
            if (!(c.cov[0][0] > 0.0) || !(det > 0.0))
                throw DomainError("gmm: covariance must be positive definite");
            if (std::fabs(c.cov[0][1] - c.cov[1][0]) > 1e-12)
                throw DomainError("gmm: covariance must be symmetric");
        }
        if (std::fabs(total - 1.0) > 1e-9) throw DomainError("gmm: weights must sum to 1");
    }

    // K-1 weights plus, per component, 2 means and 3 covariance entries.
    int free_param_count() const {
        const int k = static_cast<int>(components.size());
        return (k - 1) + 5 * k;
    }
};

inline double gmm_component_log_density(const GmmComponent& c, Point2 x) {
    const double det = c.cov[0][0] * c.cov[1][1] - c.cov[0][1] * c.cov[1][0];
    const double dx = x.x1 - c.mean[0];
    const double dy = x.x2 - c.mean[1];
    const double q = (c.cov[1][1] * dx * dx - 2.0 * c.cov[0][1] * dx * dy + c.cov[0][0] * dy * dy) / det;
    return -std::log(2.0 * kPi) - 0.5 * std::log(det) - 0.5 * q;
}

inline double gmm_log_density(const GmmModel& m, Point2 x) {
    double mx = -std::numeric_limits<double>::infinity();
    std::vector<double> lt(m.k());
    for (std::size_t i = 0; i < m.k(); ++i) {
        lt[i] = std::log(m.components[i].weight) + gmm_component_log_density(m.components[i], x);
        mx = std::max(mx, lt[i]);
    }
    double s = 0.0;
    for (double t : lt) s += std::exp(t - mx);
    return mx + std::log(s);
}

inline double log_likelihood(const GmmModel& m, std::span<const Point2> data) {
    double ll = 0.0;
    for (const auto& x : data) ll += gmm_log_density(m, x);
    return ll;
}

struct KMeansResult {
    Labels labels;
    std::vector<Point2> centroids;
    int iterations = 0;
    std::vector<double> wcss_trace;  // within-cluster sum of squares per Lloyd step
};

// Lloyd's algorithm with k-means++ seeding; runs to an assignment fixpoint
// (or 300 iterations). Empty clusters are re-seeded at the farthest point.
inline KMeansResult kmeans(std::span<const Point2> data, int k, std::uint64_t seed) {
    const std::size_t n = data.size();
    if (k < 1) throw DomainError("kmeans: K must be >= 1");
    if (n < static_cast<std::size_t>(k)) throw DomainError("kmeans: fewer points than clusters");

    Rng rng(seed);
    std::vector<Point2> centroids;
    centroids.reserve(k);
    centroids.push_back(data[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n))]);

    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    auto dist2 = [](Point2 a, Point2 b) {
        return (a.x1 - b.x1) * (a.x1 - b.x1) + (a.x2 - b.x2) * (a.x2 - b.x2);
    };
    while (static_cast<int>(centroids.size()) < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], dist2(data[i], centroids.back()));
            total += d2[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            const double r = uniform01(rng) * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        }
        centroids.push_back(data[pick]);
    }

    KMeansResult res;
    res.labels.assign(n, 0);
    for (int iter = 0; iter < 300; ++iter) {
        res.iterations = iter + 1;
        bool changed = false;
        double wcss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double bd = dist2(data[i], centroids[0]);
            for (int c = 1; c < k; ++c) {
                const double d = dist2(data[i], centroids[c]);
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            if (best != res.labels[i]) {
                res.labels[i] = best;
                changed = true;
            }
            wcss += bd;
        }
        res.wcss_trace.push_back(wcss);
        std::vector<Point2> sums(k, Point2{0.0, 0.0});
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            sums[res.labels[i]].x1 += data[i].x1;
            sums[res.labels[i]].x2 += data[i].x2;
            ++counts[res.labels[i]];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // farthest point from its current centroid becomes the new seed
                std::size_t far = 0;
                double fd = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double d = dist2(data[i], centroids[res.labels[i]]);
                    if (d > fd) {
                        fd = d;
                        far = i;
                    }
                }
                centroids[c] = data[far];
                res.labels[far] = c;
                changed = true;
            } else {
                centroids[c] = {sums[c].x1 / static_cast<double>(counts[c]),
                                sums[c].x2 / static_cast<double>(counts[c])};
            }
        }
        if (!changed) break;
    }
    res.centroids = centroids;
    return res;
}

struct GmmFit {
    GmmModel model;
    std::vector<double> loglik_trace;
    bool ridged = false;
};

namespace detail {

inline void ridge_if_needed(GmmComponent& c, bool& flagged) {
    const double det = c.cov[0][0] * c.cov[1][1] - c.cov[0][1] * c.cov[1][0];
    if (c.cov[0][0] > 0.0 && c.cov[1][1] > 0.0 && det > 1e-12 * c.cov[0][0] * c.cov[1][1]) return;
    const double ridge = 1e-6 * (c.cov[0][0] + c.cov[1][1]) / 2.0 + 1e-12;
    c.cov[0][0] += ridge;
    c.cov[1][1] += ridge;
    flagged = true;
}

}  // namespace detail

// EM for a bivariate GMM with full covariances, initialized from k-means.
inline GmmFit gmm_em_fit(std::span<const Point2> data, int k, std::uint64_t seed,
                         int iter_max = 100) {
    const std::size_t n = data.size();
    if (k < 1) throw DomainError("gmm_em_fit: K must be >= 1");
    if (n < static_cast<std::size_t>(3 * k))
        throw InsufficientDataError("gmm_em_fit: need at least 3 points per component");

    const auto km = kmeans(data, k, seed);
    GmmFit fit;
    fit.model.components.resize(k);
    {
        std::vector<std::size_t> counts(k, 0);
        for (int z : km.labels) ++counts[z];
        for (int c = 0; c < k; ++c) {
            auto& gc = fit.model.components[c];
            gc.weight = std::max(static_cast<double>(counts[c]), 1.0) / static_cast<double>(n);
            double sx = 0.0, sy = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (km.labels[i] != c) continue;
                sx += data[i].x1;
                sy += data[i].x2;
            }
            const double cnt = std::max(static_cast<double>(counts[c]), 1.0);
            gc.mean = {sx / cnt, sy / cnt};
            double s11 = 0.0, s22 = 0.0, s12 = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (km.labels[i] != c) continue;
                const double dx = data[i].x1 - gc.mean[0];
                const double dy = data[i].x2 - gc.mean[1];
                s11 += dx * dx;
                s22 += dy * dy;
                s12 += dx * dy;
            }
            gc.cov = {{{s11 / cnt, s12 / cnt}, {s12 / cnt, s22 / cnt}}};
            detail::ridge_if_needed(gc, fit.ridged);
        }
        double wsum = 0.0;
        for (const auto& c : fit.model.components) wsum += c.weight;
        for (auto& c : fit.model.components) c.weight /= wsum;
    }

    std::vector<double> resp(n * static_cast<std::size_t>(k));
    for (int iter = 0; iter < iter_max; ++iter) {
        // E-step
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const double t = std::log(fit.model.components[c].weight) +
                                 gmm_component_log_density(fit.model.components[c], data[i]);
                resp[i * k + c] = t;
                mx = std::max(mx, t);
            }
            double s = 0.0;
            for (int c = 0; c < k; ++c) s += std::exp(resp[i * k + c] - mx);
            const double lse = mx + std::log(s);
            ll += lse;
            for (int c = 0; c < k; ++c) resp[i * k + c] = std::exp(resp[i * k + c] - lse);
        }
        fit.loglik_trace.push_back(ll);

        // M-step
        for (int c = 0; c < k; ++c) {
            double nk = 0.0, sx = 0.0, sy = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double r = resp[i * k + c];
                nk += r;
                sx += r * data[i].x1;
                sy += r * data[i].x2;
            }
            auto& gc = fit.model.components[c];
            gc.weight = nk / static_cast<double>(n);
            if (nk < 1e-10) {
                detail::ridge_if_needed(gc, fit.ridged);
                continue;
            }
            gc.mean = {sx / nk, sy / nk};
            double s11 = 0.0, s22 = 0.0, s12 = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double r = resp[i * k + c];
                const double dx = data[i].x1 - gc.mean[0];
                const double dy = data[i].x2 - gc.mean[1];
                s11 += r * dx * dx;
                s22 += r * dy * dy;
                s12 += r * dx * dy;
            }
            gc.cov = {{{s11 / nk, s12 / nk}, {s12 / nk, s22 / nk}}};
            detail::ridge_if_needed(gc, fit.ridged);
        }
        double wsum = 0.0;
        for (const auto& c : fit.model.components) wsum += c.weight;
        for (auto& c : fit.model.components) c.weight /= wsum;
    }
    fit.loglik_trace.push_back(log_likelihood(fit.model, data));
    return fit;
}

inline double bic(const GmmModel& model, std::span<const Point2> data) {
    return -2.0 * log_likelihood(model, data) +
           static_cast<double>(model.free_param_count()) *
               std::log(static_cast<double>(data.size()));
}

inline double bic(const Cbmm& model, std::span<const Point2> data) {
    return -2.0 * log_likelihood(model, data) +
           static_cast<double>(model.free_param_count()) *
               std::log(static_cast<double>(data.size()));
}

// Repeated-run BIC vote over candidate component counts ("a dozen" runs by
// default). Ties resolve to the smaller K.
inline int select_k_bic(std::span<const Point2> data, std::span<const int> k_range, int runs = 12,
                        std::uint64_t seed = 0, int iter_max = 100) {
    if (runs < 1) throw DomainError("select_k_bic: runs must be >= 1");
    if (k_range.empty()) throw DomainError("select_k_bic: empty K range");
    std::map<int, int> votes;
    for (int r = 0; r < runs; ++r) {
        int best_k = k_range[0];
        double best_bic = std::numeric_limits<double>::infinity();
        for (int k : k_range) {
            const auto fit = gmm_em_fit(data, k, derive_seed(seed, static_cast<std::uint64_t>(r)),
                                        iter_max);
            const double b = bic(fit.model, data);
            if (b < best_bic || (b == best_bic && k < best_k)) {
                best_bic = b;
                best_k = k;
            }
        }
        ++votes[best_k];
    }
    int modal_k = 0, modal_count = -1;
    for (const auto& [kk, cnt] : votes) {
        if (cnt > modal_count) {  // map iterates ascending, so ties keep smaller K
            modal_count = cnt;
            modal_k = kk;
        }
    }
    return modal_k;
}

// A Gaussian-marginal, Gaussian-copula CBMM with identical density.
inline Cbmm gmm_to_cbmm(const GmmModel& gmm) {
    gmm.validate();
    Cbmm out;
    out.components.reserve(gmm.k());
    for (const auto& c : gmm.components) {
        const double s1 = std::sqrt(c.cov[0][0]);
        const double s2 = std::sqrt(c.cov[1][1]);
        const double rho = std::clamp(c.cov[0][1] / (s1 * s2), -0.999999, 0.999999);
        Component comp;
        comp.weight = c.weight;
        comp.marginals = {MarginalSpec::gaussian(c.mean[0], s1),
                          MarginalSpec::gaussian(c.mean[1], s2)};
        comp.copula = rho == 0.0 ? CopulaSpec::make(CopulaFamily::Gaussian, 0.0)
                                 : CopulaSpec::make(CopulaFamily::Gaussian, rho);
        out.components.push_back(comp);
    }
    return out;
}

}  // namespace cbmm
