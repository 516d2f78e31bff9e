#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "cbmm/gice.hpp"
#include "oracles.hpp"

using namespace cbmm;

namespace {

Cbmm non_gaussian_model() {
    Cbmm m;
    Component c1;
    c1.weight = 0.4;
    c1.marginals = {MarginalSpec::student_t(2.0, 2.0, 0.7), MarginalSpec::fisk(4.0, 0.0, 3.0)};
    c1.copula = CopulaSpec::make(CopulaFamily::FGM, 1.0);
    Component c2;
    c2.weight = 0.6;
    c2.marginals = {MarginalSpec::laplace(3.5, 0.8), MarginalSpec::gamma(10.0, -4.0, 0.5)};
    c2.copula = CopulaSpec::make(CopulaFamily::Arch14, 3.0);
    m.components = {c1, c2};
    return m;
}

Cbmm twin_gaussian(double w1) {
    Cbmm m;
    Component c;
    c.weight = w1;
    c.marginals = {MarginalSpec::gaussian(0.0, 1.0), MarginalSpec::gaussian(0.0, 1.0)};
    c.copula = CopulaSpec::product();
    Component c2 = c;
    c2.weight = 1.0 - w1;
    m.components = {c, c2};
    return m;
}

std::vector<MarginalFamily> all_marginals() {
    return {kAllMarginalFamilies.begin(), kAllMarginalFamilies.end()};
}
std::vector<CopulaFamily> all_copulas() {
    return {kAllCopulaFamilies.begin(), kAllCopulaFamilies.end()};
}

}  // namespace

TEST_CASE("simulate_labels basics") {
    // effectively-degenerate posterior: one far-dominant component
    Cbmm m;
    Component a;
    a.weight = 0.999999999;
    a.marginals = {MarginalSpec::gaussian(0.0, 1.0), MarginalSpec::gaussian(0.0, 1.0)};
    a.copula = CopulaSpec::product();
    Component b = a;
    b.weight = 1.0 - a.weight;
    b.marginals = {MarginalSpec::gaussian(500.0, 0.01), MarginalSpec::gaussian(500.0, 0.01)};
    m.components = {a, b};
    std::vector<Point2> near_origin(50, Point2{0.1, -0.2});
    Rng rng(1);
    const auto lr = simulate_labels(m, near_origin, 4, rng);
    for (int z : lr.labels) CHECK(z == 0);

    // symmetric posterior: label-0 fraction concentrates at 1/2
    const auto twin = twin_gaussian(0.5);
    std::vector<Point2> pts(1000, Point2{0.3, 0.4});
    Rng r2(7);
    const auto lr2 = simulate_labels(twin, pts, 100, r2);  // 1e5 draws
    std::size_t c0 = 0;
    for (int z : lr2.labels)
        if (z == 0) ++c0;
    CHECK(std::fabs(static_cast<double>(c0) / static_cast<double>(lr2.labels.size()) - 0.5) <
          0.005);

    Rng ra(3), rb(3);
    CHECK(simulate_labels(twin, pts, 3, ra).labels == simulate_labels(twin, pts, 3, rb).labels);

    // zero-density point reports its index
    const auto pm = non_gaussian_model();
    std::vector<Point2> bad = {{2.0, 3.0}, {0.0, -5.0}};
    Rng rc(1);
    try {
        simulate_labels(pm, bad, 1, rc);
        FAIL("expected UndefinedPosteriorError");
    } catch (const UndefinedPosteriorError& e) {
        CHECK(e.point_index == 1);
    }
}

TEST_CASE("gather_subgroup and update_weight") {
    const std::vector<Point2> data = {{0, 0}, {1, 1}, {2, 2}, {3, 3}};
    LabelRealizations lr;
    lr.t_count = 2;
    lr.n = 4;
    lr.labels = {0, 0, 1, 1, 0, 0, 1, 1};  // identical realizations

    const auto g0 = gather_subgroup(data, lr, 0);
    REQUIRE(g0.size() == 4);  // each selected point duplicated twice
    CHECK(g0[0].x1 == g0[2].x1);
    CHECK(update_weight(lr, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(update_weight(lr, 1) == doctest::Approx(0.5).epsilon(1e-15));

    LabelRealizations all1;
    all1.t_count = 3;
    all1.n = 4;
    all1.labels.assign(12, 1);
    CHECK(gather_subgroup(data, all1, 1).size() == 12);
    CHECK(update_weight(all1, 1) == 1.0);
    CHECK(gather_subgroup(data, all1, 0).empty());

    // random realizations: counting oracle + conservation over components
    Rng rng(5);
    LabelRealizations rnd;
    rnd.t_count = 5;
    rnd.n = 4;
    for (int i = 0; i < 20; ++i) rnd.labels.push_back(static_cast<int>(uniform01(rng) * 3));
    std::size_t total = 0;
    double wsum = 0.0;
    for (int k = 0; k < 3; ++k) {
        std::size_t count = 0;
        for (int z : rnd.labels)
            if (z == k) ++count;
        CHECK(gather_subgroup(data, rnd, k).size() == count);
        total += gather_subgroup(data, rnd, k).size();
        wsum += update_weight(rnd, k);

        // compressed form carries the same multiset
        const auto ws = gather_subgroup_weighted(data, rnd, k);
        double wtotal = 0.0;
        for (double w : ws.weights) wtotal += w;
        CHECK(wtotal == static_cast<double>(count));
    }
    CHECK(total == rnd.labels.size());
    CHECK(wsum == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("weighted selection equals multiset selection") {
    const auto pm = non_gaussian_model();
    Rng rng(31);
    const auto s = simulate(pm, 300, rng);
    std::vector<Point2> data(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) data[i] = s[i].x;
    Rng r2(32);
    const auto lr = simulate_labels(pm, data, 3, r2);

    const auto multiset = gather_subgroup(data, lr, 0);
    const auto packed = gather_subgroup_weighted(data, lr, 0);

    std::vector<double> coord_m(multiset.size()), coord_w(packed.points.size());
    for (std::size_t i = 0; i < multiset.size(); ++i) coord_m[i] = multiset[i].x1;
    for (std::size_t i = 0; i < packed.points.size(); ++i) coord_w[i] = packed.points[i].x1;

    const auto cands = all_marginals();
    const auto sel_m = select_marginal_detailed(coord_m, cands);
    const auto sel_w = select_marginal_detailed(coord_w, cands, nullptr, packed.weights);
    CHECK(sel_m.spec.family == sel_w.spec.family);
    CHECK(sel_m.kolmogorov == doctest::Approx(sel_w.kolmogorov).epsilon(1e-6));

    const auto ccands = all_copulas();
    const auto csel_m = select_copula_detailed(multiset, ccands);
    const auto csel_w = select_copula_detailed(packed.points, ccands, nullptr, nullptr,
                                               packed.weights);
    CHECK(csel_m.spec.family == csel_w.spec.family);
    CHECK(csel_m.kolmogorov == doctest::Approx(csel_w.kolmogorov).epsilon(1e-6));
}

TEST_CASE("select_marginal on known data") {
    // singleton candidate list returns that family's MLE
    Rng rng(11);
    const auto y = marginal_sample(MarginalSpec::gamma(3.0, 1.0, 2.0), 500, rng);
    const std::vector<MarginalFamily> single = {MarginalFamily::Gaussian};
    const auto s = select_marginal(y, single);
    const auto direct = marginal_fit_mle(MarginalFamily::Gaussian, y);
    CHECK(s.family == MarginalFamily::Gaussian);
    CHECK(s.loc == doctest::Approx(direct.loc).epsilon(1e-12));
    CHECK(s.scale == doctest::Approx(direct.scale).epsilon(1e-12));

    // Laplace data: the full list picks Laplace with parameters near truth
    Rng r2(12);
    const auto yl = marginal_sample(MarginalSpec::laplace(3.5, 0.8), 100000, r2);
    const auto sel = select_marginal_detailed(yl, all_marginals());
    CHECK(sel.spec.family == MarginalFamily::Laplace);
    CHECK(std::fabs(sel.spec.loc - 3.5) < 0.1);
    CHECK(std::fabs(sel.spec.scale - 0.8) < 0.06);

    // optimality: the winner attains the minimum distance among fitted
    // candidates, up to the tie-break tolerance
    for (const auto& sc : sel.candidates)
        if (sc.spec) CHECK(sel.kolmogorov <= sc.kolmogorov + sel.tie_break_eps + 1e-15);

    // Gaussian data: Gaussian itself or Student-t with a large dof wins
    Rng r3(13);
    const auto yg = marginal_sample(MarginalSpec::gaussian(1.0, 2.0), 100000, r3);
    const auto selg = select_marginal(yg, all_marginals());
    const bool ok = selg.family == MarginalFamily::Gaussian ||
                    (selg.family == MarginalFamily::StudentT && *selg.shape1 > 10.0);
    CHECK(ok);
}

TEST_CASE("select_copula on known data") {
    const std::vector<CopulaFamily> single = {CopulaFamily::Product};
    std::vector<Point2> few = {{0.1, 0.4}, {0.9, 0.2}, {0.5, 0.6}};
    CHECK(select_copula(few, single).family == CopulaFamily::Product);

    // FGM(1) data
    Rng rng(21);
    const auto cs = copula_sample(CopulaSpec::make(CopulaFamily::FGM, 1.0), 100000, rng);
    std::vector<Point2> pts(cs.size());
    for (std::size_t i = 0; i < cs.size(); ++i) pts[i] = {cs[i].u1, cs[i].u2};
    const auto sel = select_copula_detailed(pts, all_copulas());
    CHECK(sel.spec.family == CopulaFamily::FGM);
    CHECK(std::fabs(*sel.spec.alpha - 1.0) < 0.15);
    for (const auto& sc : sel.candidates)
        if (sc.spec) CHECK(sel.kolmogorov <= sc.kolmogorov + sel.tie_break_eps + 1e-15);

    // independent samples: winner's distance within 0.01 of the Product's
    Rng r2(22);
    const auto ind = copula_sample(CopulaSpec::product(), 100000, r2);
    std::vector<Point2> ipts(ind.size());
    for (std::size_t i = 0; i < ind.size(); ++i) ipts[i] = {ind[i].u1, ind[i].u2};
    const auto isel = select_copula_detailed(ipts, all_copulas());
    double product_ks = 0.0;
    for (const auto& sc : isel.candidates)
        if (sc.family == CopulaFamily::Product) product_ks = sc.kolmogorov;
    CHECK(std::fabs(isel.kolmogorov - product_ks) < 0.01);
}

TEST_CASE("convergence index") {
    const auto pm = non_gaussian_model();
    Rng rng(41);
    const auto s = simulate(pm, 100000, rng);
    std::vector<Point2> pts(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) pts[i] = s[i].x;
    CHECK(convergence_index(pm, pts) < 0.01);

    // a grossly misplaced single component
    Cbmm off;
    Component c;
    c.weight = 1.0;
    c.marginals = {MarginalSpec::gaussian(1000.0, 0.5), MarginalSpec::gaussian(1000.0, 0.5)};
    c.copula = CopulaSpec::product();
    off.components = {c};
    CHECK(convergence_index(off, pts) > 0.5);
    CHECK_THROWS_AS(convergence_index(pm, std::vector<Point2>{{1.0, 1.0}}),
                    InsufficientDataError);
}

TEST_CASE("gice recovers a single-component model") {
    Cbmm gen;
    Component c;
    c.weight = 1.0;
    c.marginals = {MarginalSpec::laplace(3.5, 0.8), MarginalSpec::gamma(10.0, -4.0, 0.5)};
    c.copula = CopulaSpec::make(CopulaFamily::Arch14, 3.0);
    gen.components = {c};
    Rng rng(51);
    const auto s = simulate(gen, 4000, rng);
    std::vector<Point2> pts(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) pts[i] = s[i].x;

    GiceConfig cfg;
    cfg.k = 1;
    cfg.realizations = 1;
    cfg.iter_max = 3;
    cfg.init = InitMethod::KMeans;
    cfg.seed = 5;
    const auto res = gice_fit(pts, cfg);
    const auto& fitted = res.model.components[0];
    CHECK(fitted.weight == doctest::Approx(1.0));
    CHECK(fitted.marginals[0].family == MarginalFamily::Laplace);
    CHECK(std::fabs(fitted.marginals[0].loc - 3.5) < 0.1);
    CHECK(std::fabs(fitted.marginals[0].scale - 0.8) < 0.1);
    CHECK(fitted.copula.family == CopulaFamily::Arch14);
    CHECK(std::fabs(*fitted.copula.alpha - 3.0) < 0.45);
}

TEST_CASE("gice is deterministic and conserves weights") {
    const auto pm = non_gaussian_model();
    Rng rng(61);
    const auto s = simulate(pm, 600, rng);
    std::vector<Point2> pts(s.size());
    std::vector<int> truth(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        pts[i] = s[i].x;
        truth[i] = s[i].z;
    }

    GiceConfig cfg;
    cfg.k = 2;
    cfg.realizations = 2;
    cfg.iter_max = 6;
    cfg.init = InitMethod::KMeans;
    cfg.seed = 99;
    const auto r1 = gice_fit(pts, cfg, truth);
    const auto r2 = gice_fit(pts, cfg, truth);

    REQUIRE(r1.trace.iterations.size() == r2.trace.iterations.size());
    for (std::size_t i = 0; i < r1.trace.iterations.size(); ++i) {
        CHECK(r1.trace.iterations[i].kolmogorov == r2.trace.iterations[i].kolmogorov);
        CHECK(*r1.trace.iterations[i].error_ratio == *r2.trace.iterations[i].error_ratio);
        double wsum = 0.0;
        for (const auto& c : r1.trace.iterations[i].model.components) wsum += c.weight;
        CHECK(std::fabs(wsum - 1.0) < 1e-12);
    }
    for (std::size_t c = 0; c < r1.model.k(); ++c) {
        CHECK(r1.model.components[c].weight == r2.model.components[c].weight);
        CHECK(r1.model.components[c].marginals[0].loc == r2.model.components[c].marginals[0].loc);
    }
    // error-ratio tracing only when truth is supplied
    const auto r3 = gice_fit(pts, cfg);
    CHECK(!r3.trace.initial.error_ratio.has_value());
}

TEST_CASE("gice restricted to gaussian forms matches the em baseline") {
    Cbmm gen;
    {
        Component c1;
        c1.weight = 0.4;
        c1.marginals = {MarginalSpec::gaussian(0.0, 1.0), MarginalSpec::gaussian(2.0, 0.5)};
        c1.copula = CopulaSpec::make(CopulaFamily::Gaussian, 0.3);
        Component c2;
        c2.weight = 0.6;
        c2.marginals = {MarginalSpec::gaussian(3.5, 1.5), MarginalSpec::gaussian(2.5, 2.0)};
        c2.copula = CopulaSpec::make(CopulaFamily::Gaussian, 0.7);
        gen.components = {c1, c2};
    }
    Rng rng(71);
    const auto s = simulate(gen, 2000, rng);
    std::vector<Point2> pts(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) pts[i] = s[i].x;

    GiceConfig cfg;
    cfg.k = 2;
    cfg.realizations = 10;
    cfg.iter_max = 25;
    cfg.marginal_candidates = {MarginalFamily::Gaussian};
    cfg.copula_candidates = {CopulaFamily::Gaussian};
    cfg.init = InitMethod::GmmEm;
    cfg.seed = 3;
    const auto res = gice_fit(pts, cfg);
    for (const auto& c : res.model.components) {
        CHECK(c.marginals[0].family == MarginalFamily::Gaussian);
        CHECK(c.copula.family == CopulaFamily::Gaussian);
    }
    const auto em = gmm_em_fit(pts, 2, 3, 100);
    const double ll_gice = log_likelihood(res.model, pts);
    const double ll_em = log_likelihood(em.model, pts);
    CHECK(std::fabs(ll_gice - ll_em) / std::fabs(ll_em) < 0.01);
}

TEST_CASE("starved components are re-seeded") {
    // provided init with one component placed far from all data
    Cbmm init = twin_gaussian(0.5);
    init.components[1].marginals = {MarginalSpec::gaussian(1000.0, 0.01),
                                    MarginalSpec::gaussian(1000.0, 0.01)};
    Rng rng(81);
    std::vector<Point2> pts;
    for (int i = 0; i < 200; ++i)
        pts.push_back({normal_quantile(uniform01(rng)), normal_quantile(uniform01(rng))});

    GiceConfig cfg;
    cfg.k = 2;
    cfg.realizations = 2;
    cfg.iter_max = 3;
    cfg.init = InitMethod::Provided;
    cfg.init_model = init;
    cfg.seed = 17;
    const auto res = gice_fit(pts, cfg);
    REQUIRE(!res.trace.iterations.empty());
    CHECK(res.trace.iterations[0].reseeded == std::vector<int>{1});
}

TEST_CASE("unrescuable subgroups raise a collapse error") {
    // 40 copies of two distinct points: every subgroup is degenerate
    std::vector<Point2> pts;
    for (int i = 0; i < 20; ++i) {
        pts.push_back({0.0, 0.0});
        pts.push_back({1.0, 1.0});
    }
    GiceConfig cfg;
    cfg.k = 2;
    cfg.realizations = 1;
    cfg.iter_max = 5;
    cfg.init = InitMethod::Provided;
    cfg.init_model = twin_gaussian(0.5);
    cfg.seed = 2;
    try {
        gice_fit(pts, cfg);
        FAIL("expected CollapseError");
    } catch (const CollapseError& e) {
        CHECK(e.component >= 0);
        CHECK(e.trace.initial.kolmogorov >= 0.0);  // partial trace is attached
    }
}

TEST_CASE("gice improves the fit on non-gaussian data") {
    const auto pm = non_gaussian_model();
    Rng rng(91);
    const auto s = simulate(pm, 2000, rng);
    std::vector<Point2> pts(s.size());
    std::vector<int> truth(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        pts[i] = s[i].x;
        truth[i] = s[i].z;
    }
    GiceConfig cfg;
    cfg.k = 2;
    cfg.realizations = 2;
    cfg.iter_max = 15;
    cfg.init = InitMethod::GmmEm;
    cfg.seed = 7;
    const auto res = gice_fit(pts, cfg, truth);
    double best = res.trace.initial.kolmogorov;
    for (const auto& it : res.trace.iterations) best = std::min(best, it.kolmogorov);
    CHECK(best < res.trace.initial.kolmogorov);
    CHECK(*res.trace.iterations.back().error_ratio < 0.15);
    CHECK(convergence_index(res.model, pts) <= res.trace.initial.kolmogorov);
}

TEST_CASE("early stop ends a stabilized fit before the iteration cap") {
    Cbmm gen;
    Component c;
    c.weight = 1.0;
    c.marginals = {MarginalSpec::gaussian(0.0, 1.0), MarginalSpec::gaussian(5.0, 2.0)};
    c.copula = CopulaSpec::make(CopulaFamily::Gaussian, 0.4);
    gen.components = {c};
    Rng rng(77);
    const auto s = simulate(gen, 3000, rng);
    std::vector<Point2> pts(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) pts[i] = s[i].x;

    GiceConfig cfg;
    cfg.k = 1;  // labels are deterministic, so parameters stop moving at once
    cfg.realizations = 1;
    cfg.iter_max = 60;
    cfg.init = InitMethod::KMeans;
    cfg.seed = 5;
    cfg.early_stop = true;
    const auto res = gice_fit(pts, cfg);
    CHECK(res.trace.iterations.size() < 60);
    CHECK(res.trace.iterations.size() >= 5);
}

TEST_CASE("ifm pseudo-observation mode runs") {
    const auto pm = non_gaussian_model();
    Rng rng(101);
    const auto s = simulate(pm, 500, rng);
    std::vector<Point2> pts(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) pts[i] = s[i].x;
    GiceConfig cfg;
    cfg.k = 2;
    cfg.realizations = 1;
    cfg.iter_max = 3;
    cfg.init = InitMethod::GmmEm;
    cfg.seed = 13;
    cfg.parametric_pseudo = true;
    CHECK_NOTHROW(gice_fit(pts, cfg));
}

TEST_CASE("config validation") {
    GiceConfig cfg;
    cfg.k = 0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg.k = 2;
    cfg.realizations = 0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg.realizations = 1;
    cfg.marginal_candidates.clear();
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg = GiceConfig{};
    cfg.init = InitMethod::Provided;  // no model supplied
    CHECK_THROWS_AS(cfg.validate(), DomainError);

    std::vector<Point2> tiny = {{0, 0}, {1, 1}};
    CHECK_THROWS_AS(gice_fit(tiny, GiceConfig{}), InsufficientDataError);
}
