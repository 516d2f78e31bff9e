#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "cbmm/marginals.hpp"
#include "oracles.hpp"

using namespace cbmm;

namespace {

// one representative valid spec per family, nonzero loc so relative errors
// are meaningful
const std::vector<MarginalSpec> kSpecs = {
    MarginalSpec::gaussian(1.5, 2.0),
    MarginalSpec::gamma(10.0, -4.0, 0.5),
    MarginalSpec::beta(2.5, 4.0, -1.0, 3.0),
    MarginalSpec::beta_prime(3.0, 4.0, 1.0, 2.0),
    MarginalSpec::fisk(4.0, 0.5, 3.0),
    MarginalSpec::laplace(3.5, 0.8),
    MarginalSpec::student_t(2.0, 2.0, 0.7),
};

double rel_err(double est, double truth) { return std::fabs(est - truth) / std::fabs(truth); }

}  // namespace

TEST_CASE("spec validation") {
    CHECK_THROWS_AS(MarginalSpec::gaussian(0.0, -1.0).validate(), DomainError);
    CHECK_THROWS_AS(MarginalSpec::gamma(-2.0, 0.0, 1.0).validate(), DomainError);
    CHECK_THROWS_AS(MarginalSpec::beta(1.0, -1.0, 0.0, 1.0).validate(), DomainError);
    // families without shape parameters reject provided shapes
    MarginalSpec bad = MarginalSpec::gaussian(0.0, 1.0);
    bad.shape1 = 2.0;
    CHECK_THROWS_AS(bad.validate(), DomainError);
    MarginalSpec extra = MarginalSpec::gamma(2.0, 0.0, 1.0);
    extra.shape2 = 1.0;
    CHECK_THROWS_AS(extra.validate(), DomainError);
    for (const auto& s : kSpecs) CHECK_NOTHROW(s.validate());
}

TEST_CASE("pdf closed-form anchor values") {
    CHECK(marginal_pdf(MarginalSpec::gaussian(0, 1), 0.0) ==
          doctest::Approx(0.3989422804014327).epsilon(1e-12));
    CHECK(marginal_pdf(MarginalSpec::laplace(0, 1), 0.0) == doctest::Approx(0.5).epsilon(1e-12));
    // outside support: zero, not an error
    CHECK(marginal_pdf(MarginalSpec::gamma(10, -4, 0.5), -5.0) == 0.0);
    CHECK(marginal_pdf(MarginalSpec::beta(2, 2, 0, 1), 1.5) == 0.0);
}

TEST_CASE("gamma pdf matches quadrature-normalized density") {
    // normalize the bare integrand numerically instead of trusting lgamma;
    // rescale by the mode value so the quadrature tolerance is meaningful
    const double theta = 10.0, loc = -4.0, scale = 0.5, y = 0.5;
    const double lmode = (theta - 1.0) * std::log(theta - 1.0) - (theta - 1.0);
    auto bare = [&](double z) {
        return z <= 0.0 ? 0.0 : std::exp((theta - 1.0) * std::log(z) - z - lmode);
    };
    const double norm = oracle::integrate_support(bare, 0.0,
                                                  std::numeric_limits<double>::infinity(), 1e-12);
    const double z = (y - loc) / scale;
    const double expected = bare(z) / (norm * scale);
    CHECK(marginal_pdf(MarginalSpec::gamma(theta, loc, scale), y) ==
          doctest::Approx(expected).epsilon(1e-9));
    CHECK(expected == doctest::Approx(0.26351128001904511).epsilon(1e-8));  // frozen from oracle
}

TEST_CASE("cdf anchor values") {
    CHECK(marginal_cdf(MarginalSpec::gaussian(0, 1), 0.0) == doctest::Approx(0.5).epsilon(1e-13));
    CHECK(marginal_cdf(MarginalSpec::fisk(3, 0, 1), 1.0) == doctest::Approx(0.5).epsilon(1e-13));
    CHECK(marginal_cdf(MarginalSpec::student_t(2, 2, 0.7), 2.0) ==
          doctest::Approx(0.5).epsilon(1e-13));
    CHECK(marginal_cdf(MarginalSpec::beta(2, 2, 0, 1), -0.1) == 0.0);
    CHECK(marginal_cdf(MarginalSpec::beta(2, 2, 0, 1), 1.1) == 1.0);
}

TEST_CASE("pdf integrates to one over the support") {
    for (const auto& s : kSpecs) {
        const double mass = oracle::integrate_support([&](double y) { return marginal_pdf(s, y); },
                                                      support_lower(s), support_upper(s), 1e-10);
        INFO(to_string(s.family));
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("cdf differentiates to pdf") {
    for (const auto& s : kSpecs) {
        const double h = 1e-5 * s.scale;
        for (int i = 1; i <= 20; ++i) {
            const double p = static_cast<double>(i) / 21.0;
            const double y = marginal_quantile(s, p);
            const double fd =
                oracle::central_diff([&](double v) { return marginal_cdf(s, v); }, y, h);
            const double pdf = marginal_pdf(s, y);
            INFO(to_string(s.family) << " at p=" << p);
            CHECK(fd == doctest::Approx(pdf).epsilon(1e-4));
        }
    }
}

TEST_CASE("quantile round trip") {
    for (const auto& s : kSpecs) {
        for (int i = 1; i <= 99; ++i) {
            const double p = static_cast<double>(i) / 100.0;
            const double q = marginal_quantile(s, p);
            INFO(to_string(s.family) << " p=" << p);
            CHECK(std::fabs(marginal_cdf(s, q) - p) < 1e-9);
        }
        // monotone in p
        CHECK(marginal_quantile(s, 0.2) < marginal_quantile(s, 0.8));
    }
    CHECK(marginal_quantile(MarginalSpec::gaussian(0, 1), 0.5) ==
          doctest::Approx(0.0).epsilon(1e-12));
    CHECK(marginal_quantile(MarginalSpec::laplace(3.5, 0.8), 0.5) ==
          doctest::Approx(3.5).epsilon(1e-12));
    CHECK(marginal_quantile(MarginalSpec::beta(2, 2, 0, 1), 0.5) ==
          doctest::Approx(0.5).epsilon(1e-10));
    CHECK_THROWS_AS(marginal_quantile(MarginalSpec::gaussian(0, 1), 0.0), DomainError);
    CHECK_THROWS_AS(marginal_quantile(MarginalSpec::gaussian(0, 1), 1.5), DomainError);
}

TEST_CASE("location-scale equivariance") {
    for (const auto& s : kSpecs) {
        MarginalSpec std_spec = s;
        std_spec.loc = 0.0;
        std_spec.scale = 1.0;
        for (double p : {0.1, 0.35, 0.8}) {
            const double y = marginal_quantile(s, p);
            const double z = (y - s.loc) / s.scale;
            CHECK(marginal_pdf(s, y) ==
                  doctest::Approx(marginal_pdf(std_spec, z) / s.scale).epsilon(1e-12));
        }
    }
}

TEST_CASE("sampling moments and determinism") {
    Rng rng(42);
    const auto x = marginal_sample(MarginalSpec::gaussian(0, 1), 100000, rng);
    double m = 0.0;
    for (double v : x) m += v;
    m /= static_cast<double>(x.size());
    double sd = 0.0;
    for (double v : x) sd += (v - m) * (v - m);
    sd = std::sqrt(sd / static_cast<double>(x.size()));
    CHECK(std::fabs(m) < 0.02);
    CHECK(std::fabs(sd - 1.0) < 0.02);

    Rng r1(7), r2(7);
    CHECK(marginal_sample(kSpecs[1], 50, r1) == marginal_sample(kSpecs[1], 50, r2));
    Rng r3(7);
    CHECK_THROWS_AS(marginal_sample(kSpecs[0], 0, r3), DomainError);
}

TEST_CASE("empirical cdf of samples converges to cdf") {
    for (const auto& s : {kSpecs[1], kSpecs[4], kSpecs[6]}) {  // gamma, fisk, student t
        Rng rng(11);
        auto x = marginal_sample(s, 100000, rng);
        std::sort(x.begin(), x.end());
        double d = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double e = static_cast<double>(i + 1) / static_cast<double>(x.size());
            d = std::max(d, std::fabs(e - marginal_cdf(s, x[i])));
        }
        INFO(to_string(s.family));
        CHECK(d < 0.0075);
    }
}

TEST_CASE("closed-form maximum likelihood") {
    const std::vector<double> y = {-1.0, 0.0, 1.0};
    const auto g = marginal_fit_mle(MarginalFamily::Gaussian, y);
    CHECK(g.loc == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(g.scale == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));

    const std::vector<double> y2 = {2.0, 3.5, 10.0, 3.4, 3.6};
    const auto l = marginal_fit_mle(MarginalFamily::Laplace, y2);
    CHECK(l.loc == doctest::Approx(3.5).epsilon(1e-14));

    CHECK_THROWS_AS(marginal_fit_mle(MarginalFamily::Gaussian, std::vector<double>{1.0, 2.0}),
                    InsufficientDataError);
    CHECK_THROWS_AS(marginal_fit_mle(MarginalFamily::Gaussian, std::vector<double>{2.0, 2.0, 2.0}),
                    DegenerateDataError);
}

TEST_CASE("maximum likelihood recovers generating parameters") {
    // estimator consistency at n = 1e5: every parameter within 5% relative
    std::uint64_t seed = 1234;
    for (const auto& s : kSpecs) {
        Rng rng(seed++);
        const auto x = marginal_sample(s, 100000, rng);
        const auto fit = marginal_fit_mle(s.family, x);
        INFO(to_string(s.family));
        REQUIRE(fit.family == s.family);
        if (s.shape1) CHECK(rel_err(*fit.shape1, *s.shape1) < 0.05);
        if (s.shape2) CHECK(rel_err(*fit.shape2, *s.shape2) < 0.05);
        CHECK(rel_err(fit.loc, s.loc) < 0.05);
        CHECK(rel_err(fit.scale, s.scale) < 0.05);
    }
}
