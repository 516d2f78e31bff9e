#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cbmm/baselines.hpp"
#include "cbmm/copulas.hpp"
#include "cbmm/errors.hpp"
#include "cbmm/marginals.hpp"
#include "cbmm/metrics.hpp"
#include "cbmm/mixture.hpp"
#include "cbmm/rng.hpp"
#include "cbmm/types.hpp"

namespace cbmm {

// Distances within eps = c / sqrt(Q) of the minimum are statistically
// indistinguishable at sample size Q; such ties are resolved by BIC, i.e.
// a candidate needs a log-likelihood edge of ln(Q)/2 per extra parameter.
// This keeps limit cases (e.g. huge-shape Gamma fits on Gaussian data) from
// winning by noise while leaving genuinely better-fitting families alone.
inline constexpr double kSelectionTieBreak = 0.5;

enum class InitMethod { KMeans, GmmEm, Provided };

inline const char* to_string(InitMethod m) {
    switch (m) {
        case InitMethod::KMeans: return "kmeans";
        case InitMethod::GmmEm: return "gmm";
        case InitMethod::Provided: return "provided";
    }
    return "?";
}

// Default candidate lists, in the order the experiments use them.
inline std::vector<MarginalFamily> default_marginal_candidates() {
    return {MarginalFamily::Gamma,   MarginalFamily::Fisk, MarginalFamily::Gaussian,
            MarginalFamily::StudentT, MarginalFamily::Laplace, MarginalFamily::Beta,
            MarginalFamily::BetaPrime};
}
inline std::vector<CopulaFamily> default_copula_candidates() {
    return {CopulaFamily::Gumbel, CopulaFamily::Gaussian, CopulaFamily::Clayton,
            CopulaFamily::FGM,    CopulaFamily::Arch12,   CopulaFamily::Arch14,
            CopulaFamily::Product};
}

struct GiceConfig {
    int k = 2;
    int realizations = 10;  // T: label draws fused per iteration
    int iter_max = 100;
    std::vector<MarginalFamily> marginal_candidates = default_marginal_candidates();
    std::vector<CopulaFamily> copula_candidates = default_copula_candidates();
    InitMethod init = InitMethod::GmmEm;
    std::optional<Cbmm> init_model;
    std::uint64_t seed = 0;
    int min_subgroup = 20;
    bool early_stop = false;
    bool parametric_pseudo = false;     // IFM pseudo-observations instead of ranks
    double tie_break = kSelectionTieBreak;  // c in the eps = c/sqrt(Q) selection tie rule

    void validate() const {
        if (k < 1) throw DomainError("gice: K must be >= 1");
        if (realizations < 1) throw DomainError("gice: T must be >= 1");
        if (iter_max < 1) throw DomainError("gice: iterMax must be >= 1");
        if (marginal_candidates.empty()) throw DomainError("gice: empty marginal candidate list");
        if (copula_candidates.empty()) throw DomainError("gice: empty copula candidate list");
        if (min_subgroup < 3) throw DomainError("gice: min_subgroup must be >= 3");
        if (init == InitMethod::Provided) {
            if (!init_model) throw DomainError("gice: init=provided requires a model");
            init_model->validate();
            if (static_cast<int>(init_model->k()) != k)
                throw DomainError("gice: provided model has wrong component count");
        }
    }
};

// T independent draws of all N hidden labels.
struct LabelRealizations {
    int t_count = 0;
    std::size_t n = 0;
    std::vector<int> labels;  // labels[t * n + i]

    int at(int t, std::size_t i) const { return labels[static_cast<std::size_t>(t) * n + i]; }
};

struct IterationRecord {
    int iteration = 0;  // 0 is the initialization
    Cbmm model;
    double kolmogorov = 1.0;
    std::optional<double> error_ratio;
    std::vector<int> reseeded;  // components re-seeded during this iteration
};

struct FitTrace {
    IterationRecord initial;
    std::vector<IterationRecord> iterations;
    std::size_t zero_density_points = 0;  // posterior fallbacks across all iterations
};

struct GiceResult {
    Cbmm model;
    FitTrace trace;
};

// A component's fused subgroup stayed under the floor for 3 consecutive
// iterations; carries whatever trace was accumulated.
class CollapseError : public std::runtime_error {
  public:
    CollapseError(int comp, FitTrace t)
        : std::runtime_error("gice: component " + std::to_string(comp + 1) +
                             " collapsed (subgroup under floor for 3 consecutive iterations)"),
          component(comp),
          trace(std::move(t)) {}

    int component;
    FitTrace trace;
};

// Every candidate family failed to fit; message lists per-family causes.
class SelectionFailure : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<double> posterior_matrix(const Cbmm& model, std::span<const Point2> data,
                                            std::size_t* zero_count) {
    const std::size_t n = data.size();
    const std::size_t k = model.k();
    std::vector<double> post(n * k);
    std::vector<double> lt(k);
    for (std::size_t i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            lt[c] = std::log(model.components[c].weight) +
                    component_log_density(model.components[c], data[i]);
            mx = std::max(mx, lt[c]);
        }
        if (!(mx > -std::numeric_limits<double>::infinity())) {
            if (zero_count == nullptr) throw UndefinedPosteriorError(i);
            ++*zero_count;
            for (std::size_t c = 0; c < k; ++c)
                post[i * k + c] = 1.0 / static_cast<double>(k);
            continue;
        }
        double s = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            lt[c] = std::exp(lt[c] - mx);
            s += lt[c];
        }
        for (std::size_t c = 0; c < k; ++c) post[i * k + c] = lt[c] / s;
    }
    return post;
}

inline LabelRealizations draw_labels(std::span<const double> post, std::size_t n, std::size_t k,
                                     int t_count, Rng& rng) {
    LabelRealizations lr;
    lr.t_count = t_count;
    lr.n = n;
    lr.labels.resize(static_cast<std::size_t>(t_count) * n);
    for (int t = 0; t < t_count; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            const double u = uniform01(rng);
            double acc = 0.0;
            std::size_t z = k - 1;
            for (std::size_t c = 0; c < k; ++c) {
                acc += post[i * k + c];
                if (u <= acc) {
                    z = c;
                    break;
                }
            }
            lr.labels[static_cast<std::size_t>(t) * n + i] = static_cast<int>(z);
        }
    }
    return lr;
}

inline Labels map_labels(const Cbmm& model, std::span<const Point2> data) {
    Labels out(data.size(), 0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < model.k(); ++c) {
            const double t = std::log(model.components[c].weight) +
                             component_log_density(model.components[c], data[i]);
            if (t > best) {
                best = t;
                out[i] = static_cast<int>(c);
            }
        }
    }
    return out;
}

}  // namespace detail

// Draw T label realizations from the current posteriors. Throws (with the
// point index) if any point has zero mixture density.
inline LabelRealizations simulate_labels(const Cbmm& model, std::span<const Point2> data,
                                         int t_count, Rng& rng) {
    if (t_count < 1) throw DomainError("simulate_labels: T must be >= 1");
    const auto post = detail::posterior_matrix(model, data, nullptr);
    return detail::draw_labels(post, data.size(), model.k(), t_count, rng);
}

// Fuse the T per-realization subsets for component k; points repeat up to T times.
inline std::vector<Point2> gather_subgroup(std::span<const Point2> data,
                                           const LabelRealizations& lr, int k) {
    std::vector<Point2> out;
    for (int t = 0; t < lr.t_count; ++t)
        for (std::size_t i = 0; i < lr.n; ++i)
            if (lr.at(t, i) == k) out.push_back(data[i]);
    return out;
}

// The same fused multiset in compressed form: each distinct data index once,
// with its multiplicity across realizations as a weight.
struct WeightedSubgroup {
    std::vector<Point2> points;
    std::vector<double> weights;
};

inline WeightedSubgroup gather_subgroup_weighted(std::span<const Point2> data,
                                                 const LabelRealizations& lr, int k) {
    std::vector<int> mult(lr.n, 0);
    for (int t = 0; t < lr.t_count; ++t)
        for (std::size_t i = 0; i < lr.n; ++i)
            if (lr.at(t, i) == k) ++mult[i];
    WeightedSubgroup out;
    for (std::size_t i = 0; i < lr.n; ++i) {
        if (mult[i] == 0) continue;
        out.points.push_back(data[i]);
        out.weights.push_back(static_cast<double>(mult[i]));
    }
    return out;
}

inline double update_weight(const LabelRealizations& lr, int k) {
    std::size_t count = 0;
    for (int z : lr.labels)
        if (z == k) ++count;
    return static_cast<double>(count) /
           static_cast<double>(lr.labels.size());
}

struct ScoredMarginal {
    MarginalFamily family;
    std::optional<MarginalSpec> spec;
    double kolmogorov = std::numeric_limits<double>::infinity();
    double log_lik = -std::numeric_limits<double>::infinity();
    std::string error;
};

struct MarginalSelection {
    MarginalSpec spec;
    double kolmogorov = 1.0;
    double tie_break_eps = 0.0;
    std::vector<ScoredMarginal> candidates;
};

// Fit every candidate family by maximum likelihood, then keep the fit with
// the smallest Kolmogorov distance to the empirical CDF. `warm`, when given,
// aligns with `candidates` and seeds each fit from a previous solution.
inline MarginalSelection select_marginal_detailed(
    std::span<const double> samples, std::span<const MarginalFamily> candidates,
    const std::vector<std::optional<MarginalSpec>>* warm = nullptr,
    std::span<const double> weights = {}, double tie_break_c = kSelectionTieBreak) {
    if (candidates.empty()) throw DomainError("select_marginal: empty candidate list");
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return samples[a] < samples[b]; });
    std::vector<double> sorted(samples.size());
    std::vector<double> sorted_w;
    for (std::size_t i = 0; i < samples.size(); ++i) sorted[i] = samples[order[i]];
    if (!weights.empty()) {
        sorted_w.resize(weights.size());
        for (std::size_t i = 0; i < weights.size(); ++i) sorted_w[i] = weights[order[i]];
    }

    MarginalSelection sel;
    sel.candidates.reserve(candidates.size());
    double total_w = 0.0;
    if (weights.empty())
        total_w = static_cast<double>(samples.size());
    else
        for (double w : weights) total_w += w;
    sel.tie_break_eps = total_w > 0.0 ? tie_break_c / std::sqrt(total_w) : 0.0;

    bool any = false;
    double ks_min = std::numeric_limits<double>::infinity();
    for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
        const MarginalFamily fam = candidates[ci];
        ScoredMarginal sc;
        sc.family = fam;
        try {
            const std::optional<MarginalSpec> w =
                (warm && ci < warm->size()) ? (*warm)[ci] : std::nullopt;
            const auto fit = marginal_fit_mle_detailed(fam, samples, w, weights);
            sc.spec = fit.spec;
            sc.log_lik = fit.log_lik;
            sc.kolmogorov = kolmogorov_distance_1d(
                sorted, [&](double y) { return marginal_cdf(fit.spec, y); }, sorted_w);
            ks_min = std::min(ks_min, sc.kolmogorov);
            any = true;
        } catch (const std::exception& e) {
            sc.error = e.what();
        }
        sel.candidates.push_back(std::move(sc));
    }
    if (!any) {
        std::string msg = "select_marginal: all candidate fits failed:";
        for (const auto& sc : sel.candidates)
            msg += std::string(" [") + to_string(sc.family) + ": " + sc.error + "]";
        throw SelectionFailure(msg);
    }
    const double penalty = 0.5 * std::log(std::max(total_w, 2.0));
    const ScoredMarginal* best = nullptr;
    auto bic_of = [&](const ScoredMarginal& sc) {
        return -sc.log_lik + penalty * free_param_count(sc.family);
    };
    for (const auto& sc : sel.candidates) {
        if (!sc.spec || sc.kolmogorov > ks_min + sel.tie_break_eps) continue;
        if (best == nullptr || bic_of(sc) < bic_of(*best)) best = &sc;
    }
    sel.spec = *best->spec;
    sel.kolmogorov = best->kolmogorov;
    return sel;
}

inline MarginalSpec select_marginal(std::span<const double> samples,
                                    std::span<const MarginalFamily> candidates) {
    return select_marginal_detailed(samples, candidates).spec;
}

struct ScoredCopula {
    CopulaFamily family;
    std::optional<CopulaSpec> spec;
    double kolmogorov = std::numeric_limits<double>::infinity();
    double log_lik = -std::numeric_limits<double>::infinity();
    std::string error;
};

struct CopulaSelection {
    CopulaSpec spec;
    double kolmogorov = 1.0;
    double tie_break_eps = 0.0;
    std::vector<ScoredCopula> candidates;
};

// PML-fit every candidate copula on the pseudo-observations, then keep the
// one whose CDF is closest (sup at sample points) to the empirical copula.
inline CopulaSelection select_copula_detailed(std::span<const Point2> samples,
                                              std::span<const CopulaFamily> candidates,
                                              const std::array<MarginalSpec, 2>* ifm = nullptr,
                                              const std::vector<std::optional<double>>* warm = nullptr,
                                              std::span<const double> weights = {},
                                              double tie_break_c = kSelectionTieBreak) {
    if (candidates.empty()) throw DomainError("select_copula: empty candidate list");
    const auto pseudo = ifm == nullptr
                            ? pseudo_observations(samples, weights)
                            : parametric_pseudo_observations(samples, (*ifm)[0], (*ifm)[1]);
    std::vector<Point2> upoints(pseudo.size());
    for (std::size_t i = 0; i < pseudo.size(); ++i) upoints[i] = {pseudo[i].u1, pseudo[i].u2};

    CopulaSelection sel;
    sel.candidates.reserve(candidates.size());
    double total_w = 0.0;
    if (weights.empty())
        total_w = static_cast<double>(samples.size());
    else
        for (double w : weights) total_w += w;
    sel.tie_break_eps = total_w > 0.0 ? tie_break_c / std::sqrt(total_w) : 0.0;

    bool any = false;
    double ks_min = std::numeric_limits<double>::infinity();
    for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
        const CopulaFamily fam = candidates[ci];
        ScoredCopula sc;
        sc.family = fam;
        try {
            const std::optional<double> w =
                (warm && ci < warm->size()) ? (*warm)[ci] : std::nullopt;
            const auto fit = copula_fit_pml_detailed(fam, pseudo, w, weights);
            sc.spec = fit.spec;
            sc.log_lik = fit.log_lik;
            sc.kolmogorov = kolmogorov_distance_2d(
                upoints, [&](Point2 u) { return copula_cdf(fit.spec, u.x1, u.x2); }, weights);
            ks_min = std::min(ks_min, sc.kolmogorov);
            any = true;
        } catch (const std::exception& e) {
            sc.error = e.what();
        }
        sel.candidates.push_back(std::move(sc));
    }
    if (!any) {
        std::string msg = "select_copula: all candidate fits failed:";
        for (const auto& sc : sel.candidates)
            msg += std::string(" [") + to_string(sc.family) + ": " + sc.error + "]";
        throw SelectionFailure(msg);
    }
    const double penalty = 0.5 * std::log(std::max(total_w, 2.0));
    const ScoredCopula* best = nullptr;
    auto bic_of = [&](const ScoredCopula& sc) {
        return -sc.log_lik + penalty * free_param_count(sc.family);
    };
    for (const auto& sc : sel.candidates) {
        if (!sc.spec || sc.kolmogorov > ks_min + sel.tie_break_eps) continue;
        if (best == nullptr || bic_of(sc) < bic_of(*best)) best = &sc;
    }
    sel.spec = *best->spec;
    sel.kolmogorov = best->kolmogorov;
    return sel;
}

inline CopulaSpec select_copula(std::span<const Point2> samples,
                                std::span<const CopulaFamily> candidates) {
    return select_copula_detailed(samples, candidates).spec;
}

// Kolmogorov distance between the empirical joint CDF and the model CDF,
// evaluated at the sample points.
inline double convergence_index(const Cbmm& model, std::span<const Point2> data) {
    if (data.size() < 2) throw InsufficientDataError("convergence_index: need at least 2 points");
    return kolmogorov_distance_2d(data, [&](Point2 x) { return mixture_cdf(model, x); });
}

namespace detail {

// Largest |parameter| change between two models with identical forms.
struct ModelDelta {
    bool same_forms = true;
    double max_param_change = 0.0;
};

inline ModelDelta model_delta(const Cbmm& a, const Cbmm& b) {
    ModelDelta d;
    if (a.k() != b.k()) {
        d.same_forms = false;
        return d;
    }
    auto upd = [&](double x, double y) { d.max_param_change = std::max(d.max_param_change, std::fabs(x - y)); };
    for (std::size_t i = 0; i < a.k(); ++i) {
        const auto& ca = a.components[i];
        const auto& cb = b.components[i];
        upd(ca.weight, cb.weight);
        for (int m = 0; m < 2; ++m) {
            if (ca.marginals[m].family != cb.marginals[m].family) {
                d.same_forms = false;
                return d;
            }
            upd(ca.marginals[m].loc, cb.marginals[m].loc);
            upd(ca.marginals[m].scale, cb.marginals[m].scale);
            if (ca.marginals[m].shape1) upd(*ca.marginals[m].shape1, *cb.marginals[m].shape1);
            if (ca.marginals[m].shape2) upd(*ca.marginals[m].shape2, *cb.marginals[m].shape2);
        }
        if (ca.copula.family != cb.copula.family) {
            d.same_forms = false;
            return d;
        }
        if (ca.copula.alpha) upd(*ca.copula.alpha, *cb.copula.alpha);
    }
    return d;
}

inline Cbmm kmeans_initial_model(std::span<const Point2> data, const GiceConfig& cfg,
                                 std::uint64_t seed) {
    const auto km = kmeans(data, cfg.k, seed);
    const std::size_t n = data.size();

    LabelRealizations lr;
    lr.t_count = 1;
    lr.n = n;
    lr.labels = km.labels;

    // The hard k-means clusters are truncated at the cut boundaries; fitting
    // a bounded-support family to them places a support edge through the
    // neighbouring cluster, which freezes the initial partition (points on
    // the far side get posterior zero and the labels can never move). The
    // initial pass therefore selects among the full-support candidates only;
    // iteration 1 re-selects from the complete list under soft labels.
    std::vector<MarginalFamily> init_candidates;
    for (MarginalFamily f : cfg.marginal_candidates)
        if (f == MarginalFamily::Gaussian || f == MarginalFamily::Laplace ||
            f == MarginalFamily::StudentT)
            init_candidates.push_back(f);
    if (init_candidates.empty()) init_candidates.push_back(MarginalFamily::Gaussian);

    Cbmm model;
    model.components.resize(cfg.k);
    for (int c = 0; c < cfg.k; ++c) {
        auto subgroup = gather_subgroup(data, lr, c);
        // pad undersized clusters with the nearest outside points, for the
        // initial fit only (weights stay the counting estimate)
        if (subgroup.size() < static_cast<std::size_t>(cfg.min_subgroup)) {
            std::vector<std::size_t> outside;
            for (std::size_t i = 0; i < n; ++i)
                if (km.labels[i] != c) outside.push_back(i);
            std::stable_sort(outside.begin(), outside.end(), [&](std::size_t a, std::size_t b) {
                auto d2 = [&](std::size_t i) {
                    return sq(data[i].x1 - km.centroids[c].x1) +
                           sq(data[i].x2 - km.centroids[c].x2);
                };
                return d2(a) < d2(b);
            });
            for (std::size_t i = 0;
                 i < outside.size() && subgroup.size() < static_cast<std::size_t>(cfg.min_subgroup);
                 ++i)
                subgroup.push_back(data[outside[i]]);
        }
        auto& comp = model.components[c];
        comp.weight = update_weight(lr, c);
        std::vector<double> coord(subgroup.size());
        for (int d = 0; d < 2; ++d) {
            for (std::size_t i = 0; i < subgroup.size(); ++i)
                coord[i] = d == 0 ? subgroup[i].x1 : subgroup[i].x2;
            comp.marginals[d] = select_marginal(coord, init_candidates);
        }
        const std::array<MarginalSpec, 2> ifm{comp.marginals[0], comp.marginals[1]};
        comp.copula = select_copula_detailed(subgroup, cfg.copula_candidates,
                                             cfg.parametric_pseudo ? &ifm : nullptr)
                          .spec;
    }
    return model;
}

inline Cbmm gmm_initial_model(std::span<const Point2> data, const GiceConfig& cfg,
                              std::uint64_t seed) {
    auto fit = gmm_em_fit(data, cfg.k, seed, 100);
    // floor vanished weights so the converted model stays valid
    double wsum = 0.0;
    for (auto& c : fit.model.components) {
        c.weight = std::max(c.weight, 1e-9);
        wsum += c.weight;
    }
    for (auto& c : fit.model.components) c.weight /= wsum;
    return gmm_to_cbmm(fit.model);
}

}  // namespace detail

// Iterative conditional estimation with per-iteration re-selection of the
// marginal and copula forms of every component.
inline GiceResult gice_fit(std::span<const Point2> data, const GiceConfig& config,
                           std::span<const int> true_labels = {}) {
    config.validate();
    const std::size_t n = data.size();
    if (n < static_cast<std::size_t>(config.k) * static_cast<std::size_t>(config.min_subgroup))
        throw InsufficientDataError("gice_fit: fewer than K * min_subgroup points");
    if (!true_labels.empty() && true_labels.size() != n)
        throw DomainError("gice_fit: true label count does not match data");

    Cbmm model;
    switch (config.init) {
        case InitMethod::Provided: model = *config.init_model; break;
        case InitMethod::KMeans:
            model = detail::kmeans_initial_model(data, config, derive_seed(config.seed, 1));
            break;
        case InitMethod::GmmEm:
            model = detail::gmm_initial_model(data, config, derive_seed(config.seed, 1));
            break;
    }

    FitTrace trace;
    auto record_of = [&](int iteration, const Cbmm& m, std::vector<int> reseeded) {
        IterationRecord rec;
        rec.iteration = iteration;
        rec.model = m;
        rec.kolmogorov = convergence_index(m, data);
        if (!true_labels.empty())
            rec.error_ratio = error_ratio(detail::map_labels(m, data), true_labels);
        rec.reseeded = std::move(reseeded);
        return rec;
    };
    trace.initial = record_of(0, model, {});

    Rng rng(derive_seed(config.seed, 2));
    std::vector<int> reseed_streak(config.k, 0);
    Cbmm best_model = model;
    double best_index = trace.initial.kolmogorov;
    int stable_iters = 0;

    // per-(component, dimension) candidate fits from the previous iteration,
    // used to warm-start the numerical estimators
    std::vector<std::array<std::vector<std::optional<MarginalSpec>>, 2>> warm_marginals(config.k);
    std::vector<std::vector<std::optional<double>>> warm_alphas(config.k);

    std::vector<double> coord;
    for (int iter = 1; iter <= config.iter_max; ++iter) {
        const auto post = detail::posterior_matrix(model, data, &trace.zero_density_points);
        auto lr = detail::draw_labels(post, n, model.k(), config.realizations, rng);

        // a subgroup is unusable when starved or coordinate-degenerate
        auto subgroup_ok = [&](int c) {
            std::size_t count = 0;
            double lo1 = 0, hi1 = 0, lo2 = 0, hi2 = 0;
            for (int t = 0; t < lr.t_count; ++t) {
                for (std::size_t i = 0; i < n; ++i) {
                    if (lr.at(t, i) != c) continue;
                    const Point2& p = data[i];
                    if (count == 0) {
                        lo1 = hi1 = p.x1;
                        lo2 = hi2 = p.x2;
                    } else {
                        lo1 = std::min(lo1, p.x1);
                        hi1 = std::max(hi1, p.x1);
                        lo2 = std::min(lo2, p.x2);
                        hi2 = std::max(hi2, p.x2);
                    }
                    ++count;
                }
            }
            return count >= static_cast<std::size_t>(config.min_subgroup) && hi1 > lo1 &&
                   hi2 > lo2;
        };

        // Re-seed failing components from the worst-fit points, repeating the
        // scan until stable: a re-seed can steal points from a component that
        // was already checked. Each point is stolen at most once, so the
        // number of passes is bounded.
        std::vector<int> reseeded;
        std::vector<char> struck(config.k, 0);
        std::vector<char> taken(n, 0);
        std::vector<std::size_t> density_order(n);
        std::iota(density_order.begin(), density_order.end(), std::size_t{0});
        std::stable_sort(density_order.begin(), density_order.end(),
                         [&](std::size_t a, std::size_t b) {
                             return mixture_log_density(model, data[a]) <
                                    mixture_log_density(model, data[b]);
                         });
        bool changed = true;
        while (changed) {
            changed = false;
            for (int c = 0; c < config.k; ++c) {
                if (subgroup_ok(c)) continue;
                if (!struck[c]) {
                    struck[c] = 1;
                    if (++reseed_streak[c] >= 3) throw CollapseError(c, std::move(trace));
                    reseeded.push_back(c);
                }
                int assigned = 0;
                for (std::size_t i = 0; i < n && assigned < config.min_subgroup; ++i) {
                    const std::size_t p = density_order[i];
                    if (taken[p]) continue;
                    taken[p] = 1;
                    for (int t = 0; t < lr.t_count; ++t)
                        lr.labels[static_cast<std::size_t>(t) * n + p] = c;
                    ++assigned;
                }
                if (assigned == 0 || !subgroup_ok(c))
                    throw CollapseError(c, std::move(trace));  // unrescuable
                changed = true;
            }
        }
        for (int c = 0; c < config.k; ++c)
            if (!struck[c]) reseed_streak[c] = 0;

        std::vector<std::size_t> counts(config.k, 0);
        for (int z : lr.labels) ++counts[z];

        Cbmm next;
        next.components.resize(config.k);
        for (int c = 0; c < config.k; ++c) {
            auto& comp = next.components[c];
            comp.weight = static_cast<double>(counts[c]) / static_cast<double>(lr.labels.size());
            const auto subgroup = gather_subgroup_weighted(data, lr, c);
            coord.resize(subgroup.points.size());
            for (int d = 0; d < 2; ++d) {
                for (std::size_t i = 0; i < subgroup.points.size(); ++i)
                    coord[i] = d == 0 ? subgroup.points[i].x1 : subgroup.points[i].x2;
                auto sel = select_marginal_detailed(coord, config.marginal_candidates,
                                                    &warm_marginals[c][d], subgroup.weights,
                                                    config.tie_break);
                comp.marginals[d] = sel.spec;
                warm_marginals[c][d].assign(config.marginal_candidates.size(), std::nullopt);
                for (std::size_t ci = 0; ci < sel.candidates.size(); ++ci)
                    warm_marginals[c][d][ci] = sel.candidates[ci].spec;
            }
            const std::array<MarginalSpec, 2> ifm{comp.marginals[0], comp.marginals[1]};
            auto csel = select_copula_detailed(subgroup.points, config.copula_candidates,
                                               config.parametric_pseudo ? &ifm : nullptr,
                                               &warm_alphas[c], subgroup.weights,
                                               config.tie_break);
            comp.copula = csel.spec;
            warm_alphas[c].assign(config.copula_candidates.size(), std::nullopt);
            for (std::size_t ci = 0; ci < csel.candidates.size(); ++ci)
                if (csel.candidates[ci].spec) warm_alphas[c][ci] = csel.candidates[ci].spec->alpha;
        }

        auto rec = record_of(iter, next, std::move(reseeded));
        if (config.early_stop) {
            const auto delta = detail::model_delta(model, next);
            stable_iters =
                (delta.same_forms && delta.max_param_change < 1e-4) ? stable_iters + 1 : 0;
        }
        model = std::move(next);
        if (rec.kolmogorov < best_index) {
            best_index = rec.kolmogorov;
            best_model = model;
        }
        trace.iterations.push_back(std::move(rec));
        if (config.early_stop && stable_iters >= 5) break;
    }

    return {best_model, std::move(trace)};
}

}  // namespace cbmm
