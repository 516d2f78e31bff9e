#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "cbmm/serialize.hpp"

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

}  // namespace

TEST_CASE("marginal spec json round trip") {
    const auto s = MarginalSpec::gamma(10.0, -4.0, 0.5);
    const auto j = to_json(s);
    CHECK(j["family"] == "Gamma");
    CHECK(j["shape2"].is_null());
    const auto back = marginal_spec_from_json(j);
    CHECK(back.family == s.family);
    CHECK(*back.shape1 == *s.shape1);
    CHECK(back.loc == s.loc);
    CHECK(back.scale == s.scale);

    // families without shapes serialize both to null
    const auto jg = to_json(MarginalSpec::gaussian(1.0, 2.0));
    CHECK(jg["shape1"].is_null());
    CHECK(marginal_spec_from_json(jg).family == MarginalFamily::Gaussian);

    CHECK_THROWS_AS(marginal_spec_from_json(json{{"family", "Gamma"},
                                                 {"shape1", 2.0},
                                                 {"shape2", nullptr},
                                                 {"loc", 0.0},
                                                 {"scale", 1.0},
                                                 {"bogus", 1}}),
                    DomainError);
    CHECK_THROWS_AS(marginal_spec_from_json(json{{"family", "Gamma"},
                                                 {"shape1", -2.0},
                                                 {"shape2", nullptr},
                                                 {"loc", 0.0},
                                                 {"scale", 1.0}}),
                    DomainError);
}

TEST_CASE("copula spec json round trip") {
    const auto j = to_json(CopulaSpec::make(CopulaFamily::Arch14, 3.0));
    CHECK(j["family"] == "Arch14");
    const auto back = copula_spec_from_json(j);
    CHECK(back.family == CopulaFamily::Arch14);
    CHECK(*back.alpha == 3.0);

    const auto jp = to_json(CopulaSpec::product());
    CHECK(jp["alpha"].is_null());
    CHECK(!copula_spec_from_json(jp).alpha.has_value());
    CHECK_THROWS_AS(copula_spec_from_json(json{{"family", "Gumbel"}, {"alpha", 0.2}}),
                    DomainError);
}

TEST_CASE("cbmm json round trip") {
    const auto m = non_gaussian_model();
    const auto j = to_json(m);
    const auto back = cbmm_from_json(j);
    REQUIRE(back.k() == 2);
    CHECK(back.components[0].weight == m.components[0].weight);
    CHECK(back.components[1].marginals[1].family == MarginalFamily::Gamma);
    CHECK(*back.components[1].copula.alpha == 3.0);
    CHECK(!json_is_gmm(j));

    json bad = j;
    bad["components"][0]["weight"] = 0.9;  // weights no longer sum to 1
    CHECK_THROWS_AS(cbmm_from_json(bad), DomainError);
    json unknown = j;
    unknown["extra"] = 1;
    CHECK_THROWS_AS(cbmm_from_json(unknown), DomainError);
}

TEST_CASE("gmm json round trip") {
    GmmModel g;
    GmmComponent c;
    c.weight = 1.0;
    c.mean = {1.0, -2.0};
    c.cov = {{{2.0, 0.3}, {0.3, 1.0}}};
    g.components = {c};
    const auto j = to_json(g);
    CHECK(json_is_gmm(j));
    const auto back = gmm_from_json(j);
    CHECK(back.components[0].mean[0] == 1.0);
    CHECK(back.components[0].cov[0][1] == 0.3);
}

TEST_CASE("csv data reading") {
    std::istringstream in("x1,x2,z\n1.5,2.5,1\n-0.5,3.25,2\n");
    const auto ds = read_data_csv(in, "test.csv");
    REQUIRE(ds.points.size() == 2);
    CHECK(ds.points[1].x1 == -0.5);
    REQUIRE(ds.labels.has_value());
    CHECK((*ds.labels)[0] == 0);  // z is 1-based in files
    CHECK((*ds.labels)[1] == 1);

    std::istringstream noz("x1,x2\n1,2\n3,4\n");
    CHECK(!read_data_csv(noz).labels.has_value());

    std::istringstream bad("x1,x2\n1,oops\n");
    try {
        read_data_csv(bad, "bad.csv");
        FAIL("expected parse error");
    } catch (const DomainError& e) {
        CHECK(std::string(e.what()).find("bad.csv:2") != std::string::npos);
    }
    std::istringstream badlabel("x1,x2,z\n1,2,0\n");
    CHECK_THROWS_AS(read_data_csv(badlabel), DomainError);
    std::istringstream empty("");
    CHECK_THROWS_AS(read_data_csv(empty), DomainError);
    std::istringstream narrow("x1\n1\n");
    CHECK_THROWS_AS(read_data_csv(narrow), DomainError);
}

TEST_CASE("labeled csv writing is deterministic") {
    std::vector<LabeledSample> s = {{{1.25, -2.5}, 0}, {{0.1, 0.2}, 1}};
    std::ostringstream a, b;
    write_labeled_csv(a, s);
    write_labeled_csv(b, s);
    CHECK(a.str() == b.str());
    CHECK(a.str().substr(0, 9) == "x1,x2,z\n1");
    CHECK(a.str().find(",1\n") != std::string::npos);  // 1-based labels
    CHECK(a.str().find(",2\n") != std::string::npos);
}

TEST_CASE("trace csv layout") {
    FitTrace trace;
    trace.initial.iteration = 0;
    trace.initial.model = non_gaussian_model();
    trace.initial.kolmogorov = 0.25;
    IterationRecord rec;
    rec.iteration = 1;
    rec.model = non_gaussian_model();
    rec.kolmogorov = 0.125;
    rec.error_ratio = 0.5;
    rec.reseeded = {1};
    trace.iterations.push_back(rec);

    std::ostringstream out;
    write_trace_csv(out, trace);
    const std::string csv = out.str();
    std::size_t lines = 0;
    for (char ch : csv)
        if (ch == '\n') ++lines;
    // header + 2 records x 2 components x (2 marginal rows + 1 copula row)
    CHECK(lines == 1 + 2 * 2 * 3);
    CHECK(csv.find("StudentT") != std::string::npos);
    CHECK(csv.find("cop,FGM") != std::string::npos);
    CHECK(csv.find("0.5,1") != std::string::npos);  // error ratio + reseed flag
}
