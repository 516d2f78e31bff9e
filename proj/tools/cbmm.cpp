// Command-line front end: simulate synthetic datasets from a CBMM, fit
// models by GICE or GMM-EM, evaluate fits, and run repeated-experiment
// suites that aggregate accuracy and goodness of fit.

#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cbmm/baselines.hpp"
#include "cbmm/gice.hpp"
#include "cbmm/metrics.hpp"
#include "cbmm/mixture.hpp"
#include "cbmm/serialize.hpp"

namespace {

using namespace cbmm;

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitCollapse = 2;
constexpr int kExitInternal = 3;

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DomainError(path + ": " + e.what());
    }
    return j;
}

std::vector<MarginalFamily> parse_marginal_list(const std::string& s) {
    if (s == "all") return default_marginal_candidates();
    std::vector<MarginalFamily> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(marginal_family_from_string(tok));
    if (out.empty()) throw DomainError("empty marginal candidate list");
    return out;
}

std::vector<CopulaFamily> parse_copula_list(const std::string& s) {
    if (s == "all") return default_copula_candidates();
    std::vector<CopulaFamily> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(copula_family_from_string(tok));
    if (out.empty()) throw DomainError("empty copula candidate list");
    return out;
}

std::string describe(const MarginalSpec& m) {
    std::string s = to_string(m.family);
    s += "(";
    char buf[64];
    if (m.shape1) {
        std::snprintf(buf, sizeof(buf), "%.4g, ", *m.shape1);
        s += buf;
    }
    if (m.shape2) {
        std::snprintf(buf, sizeof(buf), "%.4g, ", *m.shape2);
        s += buf;
    }
    std::snprintf(buf, sizeof(buf), "%.4g, %.4g)", m.loc, m.scale);
    return s + buf;
}

std::string describe(const CopulaSpec& c) {
    if (!c.alpha) return to_string(c.family);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s(%.4g)", to_string(c.family), *c.alpha);
    return buf;
}

void print_model(const Cbmm& m) {
    for (std::size_t k = 0; k < m.k(); ++k) {
        const auto& c = m.components[k];
        std::printf("  component %zu: weight=%.4f  x1 ~ %s  x2 ~ %s  copula %s\n", k + 1,
                    c.weight, describe(c.marginals[0]).c_str(), describe(c.marginals[1]).c_str(),
                    describe(c.copula).c_str());
    }
}

struct SimulateScenario {
    Cbmm model;
    std::optional<std::size_t> n;
};

SimulateScenario parse_simulate_scenario(const json& j, const std::string& name) {
    detail::require_keys(j, {"model", "n"}, (name + " (scenario)").c_str());
    SimulateScenario sc;
    if (!j.contains("model")) throw DomainError(name + ": scenario needs a \"model\"");
    sc.model = cbmm_from_json(j.at("model"));
    if (j.contains("n")) {
        const long long n = j.at("n").get<long long>();
        if (n < 1) throw DomainError(name + ": n must be >= 1");
        sc.n = static_cast<std::size_t>(n);
    }
    return sc;
}

int cmd_simulate(const std::string& scenario_path, long long n_override, std::uint64_t seed,
                 const std::string& out_path) {
    const auto sc = parse_simulate_scenario(load_json(scenario_path), scenario_path);
    std::size_t n = 0;
    if (n_override >= 0) {
        if (n_override == 0) throw DomainError("--n must be >= 1");
        n = static_cast<std::size_t>(n_override);
    } else if (sc.n) {
        n = *sc.n;
    } else {
        throw DomainError("sample count missing: give --n or put \"n\" in the scenario");
    }

    Rng rng(seed);
    const auto samples = simulate(sc.model, n, rng);

    std::ofstream out(out_path);
    if (!out) throw DomainError("cannot write " + out_path);
    write_labeled_csv(out, samples);

    std::printf("simulated %zu samples from %zu-component model (seed %llu) -> %s\n", n,
                sc.model.k(), static_cast<unsigned long long>(seed), out_path.c_str());
    print_model(sc.model);
    return kExitOk;
}

struct FitOptions {
    std::string data_path;
    std::string method = "gice";
    int k = 2;
    int t = 10;
    int iter_max = 100;
    std::string init = "gmm";
    std::string marginals = "all";
    std::string copulas = "all";
    std::uint64_t seed = 0;
    int min_subgroup = 20;
    double tie_break = kSelectionTieBreak;
    bool use_truth = false;
    bool ifm = false;
    std::string out_model;
    std::string out_trace;
};

int cmd_fit(const FitOptions& opt) {
    const auto ds = read_data_csv_file(opt.data_path);
    std::span<const int> truth;
    if (opt.use_truth) {
        if (!ds.labels) throw DomainError(opt.data_path + ": --use-truth needs a z column");
        truth = *ds.labels;
    }

    const auto t0 = std::chrono::steady_clock::now();
    if (opt.method == "gmm") {
        const auto fit = gmm_em_fit(ds.points, opt.k, opt.seed, opt.iter_max);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const auto as_cbmm = gmm_to_cbmm(fit.model);
        const double kol =
            kolmogorov_distance_2d(ds.points, [&](Point2 x) { return mixture_cdf(as_cbmm, x); });
        std::printf("gmm-em: K=%d iterations=%d logLik=%.4f kolmogorov=%.4f time=%.1fs\n", opt.k,
                    opt.iter_max, fit.loglik_trace.back(), kol, secs);
        if (!truth.empty()) {
            Labels map_labels(ds.points.size());
            for (std::size_t i = 0; i < ds.points.size(); ++i) {
                double best = -std::numeric_limits<double>::infinity();
                for (int c = 0; c < opt.k; ++c) {
                    const double t = std::log(fit.model.components[c].weight) +
                                     gmm_component_log_density(fit.model.components[c],
                                                               ds.points[i]);
                    if (t > best) {
                        best = t;
                        map_labels[i] = c;
                    }
                }
            }
            std::printf("error-ratio=%.4f\n", error_ratio(map_labels, truth));
        }
        if (!opt.out_model.empty()) {
            std::ofstream out(opt.out_model);
            if (!out) throw DomainError("cannot write " + opt.out_model);
            out << to_json(fit.model).dump(2) << "\n";
        }
        if (!opt.out_trace.empty()) {
            std::ofstream out(opt.out_trace);
            if (!out) throw DomainError("cannot write " + opt.out_trace);
            out << "iteration,loglik\n";
            for (std::size_t i = 0; i < fit.loglik_trace.size(); ++i)
                out << i << ',' << detail::fmt_double(fit.loglik_trace[i]) << '\n';
        }
        return kExitOk;
    }
    if (opt.method != "gice") throw DomainError("unknown method: " + opt.method);

    GiceConfig cfg;
    cfg.k = opt.k;
    cfg.realizations = opt.t;
    cfg.iter_max = opt.iter_max;
    cfg.marginal_candidates = parse_marginal_list(opt.marginals);
    cfg.copula_candidates = parse_copula_list(opt.copulas);
    cfg.seed = opt.seed;
    cfg.min_subgroup = opt.min_subgroup;
    cfg.tie_break = opt.tie_break;
    cfg.parametric_pseudo = opt.ifm;
    if (opt.init == "kmeans")
        cfg.init = InitMethod::KMeans;
    else if (opt.init == "gmm")
        cfg.init = InitMethod::GmmEm;
    else {
        cfg.init = InitMethod::Provided;
        cfg.init_model = cbmm_from_json(load_json(opt.init));
    }

    FitTrace partial;
    try {
        const auto res = gice_fit(ds.points, cfg, truth);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const double kol = convergence_index(res.model, ds.points);
        std::printf("gice: K=%d T=%d iterations=%zu kolmogorov=%.4f time=%.1fs\n", cfg.k,
                    cfg.realizations, res.trace.iterations.size(), kol, secs);
        if (!truth.empty() && res.trace.iterations.back().error_ratio)
            std::printf("error-ratio=%.4f\n", *res.trace.iterations.back().error_ratio);
        if (res.trace.zero_density_points > 0)
            std::printf("note: %zu posterior evaluations fell back to uniform labels\n",
                        res.trace.zero_density_points);
        print_model(res.model);
        if (!opt.out_model.empty()) {
            std::ofstream out(opt.out_model);
            if (!out) throw DomainError("cannot write " + opt.out_model);
            out << to_json(res.model).dump(2) << "\n";
        }
        if (!opt.out_trace.empty()) {
            std::ofstream out(opt.out_trace);
            if (!out) throw DomainError("cannot write " + opt.out_trace);
            write_trace_csv(out, res.trace);
        }
        return kExitOk;
    } catch (const CollapseError& e) {
        std::fprintf(stderr, "fit collapse: %s\n", e.what());
        if (!opt.out_trace.empty()) {
            std::ofstream out(opt.out_trace);
            if (out) write_trace_csv(out, e.trace);
            std::fprintf(stderr, "partial trace written to %s\n", opt.out_trace.c_str());
        }
        return kExitCollapse;
    }
}

int cmd_eval(const std::string& model_path, const std::string& data_path,
             const std::string& truth_path, bool as_json) {
    const auto jm = load_json(model_path);
    const auto ds = read_data_csv_file(data_path);

    Cbmm model;
    double bic_value = 0.0;
    double loglik = 0.0;
    if (json_is_gmm(jm)) {
        const auto gmm = gmm_from_json(jm);
        model = gmm_to_cbmm(gmm);
        loglik = log_likelihood(gmm, ds.points);
        bic_value = bic(gmm, ds.points);
    } else {
        model = cbmm_from_json(jm);
        loglik = log_likelihood(model, ds.points);
        bic_value = bic(model, ds.points);
    }
    const double kol =
        kolmogorov_distance_2d(ds.points, [&](Point2 x) { return mixture_cdf(model, x); });

    std::optional<Labels> truth;
    if (!truth_path.empty()) {
        const auto tds = read_data_csv_file(truth_path);
        if (!tds.labels) throw DomainError(truth_path + ": no z column");
        if (tds.labels->size() != ds.points.size())
            throw DomainError("truth labels do not match the data size");
        truth = *tds.labels;
    }

    json report;
    report["kolmogorov"] = kol;
    report["loglik"] = loglik;
    report["bic"] = bic_value;
    std::printf("kolmogorov=%.6f loglik=%.4f bic=%.4f\n", kol, loglik, bic_value);
    if (truth) {
        Labels map_labels(ds.points.size(), 0);
        for (std::size_t i = 0; i < ds.points.size(); ++i) {
            const auto post = posterior(model, ds.points[i]);
            map_labels[i] = static_cast<int>(
                std::max_element(post.begin(), post.end()) - post.begin());
        }
        const double err = error_ratio(map_labels, *truth);
        const double sil = mean_silhouette(ds.points, map_labels);
        report["error_ratio"] = err;
        report["accuracy"] = 1.0 - err;
        report["silhouette"] = sil;
        std::printf("error-ratio=%.4f accuracy=%.4f silhouette=%.4f\n", err, 1.0 - err, sil);
    }
    if (as_json) std::printf("%s\n", report.dump(2).c_str());
    return kExitOk;
}

struct CellResult {
    std::vector<double> accuracy;
    std::vector<double> kolmogorov;
    int failures = 0;
};

int cmd_repro(const std::string& suite_path, const std::string& out_path) {
    const auto js = load_json(suite_path);
    detail::require_keys(js, {"seed", "cells"}, "suite");
    const std::uint64_t master = js.value("seed", 0ULL);
    if (!js.contains("cells") || !js["cells"].is_array() || js["cells"].empty())
        throw DomainError(suite_path + ": suite needs a non-empty \"cells\" array");

    std::ofstream out(out_path);
    if (!out) throw DomainError("cannot write " + out_path);
    out << "name,method,repeats,failures,accuracy_mean,accuracy_min,accuracy_max,"
           "kolmogorov_mean,kolmogorov_min,kolmogorov_max\n";

    std::size_t cell_index = 0;
    for (const auto& jc : js["cells"]) {
        const std::string name =
            jc.is_object() ? jc.value("name", "cell" + std::to_string(cell_index))
                           : "cell" + std::to_string(cell_index);
        std::string method = "gice";
        CellResult res;
        int repeats = 1;
        try {
        detail::require_keys(jc,
                             {"name", "data", "scenario", "n", "method", "repeats", "config"},
                             "suite cell");
        method = jc.value("method", "gice");
        repeats = jc.value("repeats", 1);
        if (repeats < 1) throw DomainError(name + ": repeats must be >= 1");

        GiceConfig cfg;
        int gmm_iter = 100;
        if (jc.contains("config")) {
            const auto& jcfg = jc["config"];
            detail::require_keys(jcfg,
                                 {"K", "T", "iter_max", "init", "marginals", "copulas",
                                  "min_subgroup", "tie_break"},
                                 "cell config");
            cfg.k = jcfg.value("K", 2);
            cfg.realizations = jcfg.value("T", 10);
            cfg.iter_max = jcfg.value("iter_max", 100);
            gmm_iter = cfg.iter_max;
            cfg.min_subgroup = jcfg.value("min_subgroup", 20);
            cfg.tie_break = jcfg.value("tie_break", kSelectionTieBreak);
            if (jcfg.contains("marginals"))
                cfg.marginal_candidates = parse_marginal_list(jcfg["marginals"].get<std::string>());
            if (jcfg.contains("copulas"))
                cfg.copula_candidates = parse_copula_list(jcfg["copulas"].get<std::string>());
            const std::string init = jcfg.value("init", "gmm");
            cfg.init = init == "kmeans" ? InitMethod::KMeans : InitMethod::GmmEm;
        }

        std::optional<SimulateScenario> scenario;
        Dataset fixed;
        if (jc.contains("scenario")) {
            scenario = parse_simulate_scenario(load_json(jc["scenario"].get<std::string>()),
                                               jc["scenario"].get<std::string>());
            if (jc.contains("n")) scenario->n = jc["n"].get<std::size_t>();
            if (!scenario->n) throw DomainError(name + ": scenario cells need n");
        } else if (jc.contains("data")) {
            fixed = read_data_csv_file(jc["data"].get<std::string>());
        } else {
            throw DomainError(name + ": cell needs \"data\" or \"scenario\"");
        }

        const std::uint64_t cell_seed = derive_seed(master, cell_index);
        for (int r = 0; r < repeats; ++r) {
            try {
                Dataset ds;
                if (scenario) {
                    Rng rng(derive_seed(cell_seed, 2 * static_cast<std::uint64_t>(r)));
                    const auto s = simulate(scenario->model, *scenario->n, rng);
                    ds.points.resize(s.size());
                    ds.labels.emplace(s.size());
                    for (std::size_t i = 0; i < s.size(); ++i) {
                        ds.points[i] = s[i].x;
                        (*ds.labels)[i] = s[i].z;
                    }
                } else {
                    ds = fixed;
                }
                const std::uint64_t fit_seed =
                    derive_seed(cell_seed, 2 * static_cast<std::uint64_t>(r) + 1);

                Cbmm fitted;
                if (method == "gmm") {
                    const auto fit = gmm_em_fit(ds.points, cfg.k, fit_seed, gmm_iter);
                    fitted = gmm_to_cbmm(fit.model);
                } else if (method == "gice") {
                    GiceConfig run_cfg = cfg;
                    run_cfg.seed = fit_seed;
                    fitted = gice_fit(ds.points, run_cfg).model;
                } else {
                    throw DomainError(name + ": unknown method " + method);
                }
                res.kolmogorov.push_back(kolmogorov_distance_2d(
                    ds.points, [&](Point2 x) { return mixture_cdf(fitted, x); }));
                if (ds.labels) {
                    Labels map_labels(ds.points.size(), 0);
                    for (std::size_t i = 0; i < ds.points.size(); ++i) {
                        const auto post = posterior(fitted, ds.points[i]);
                        map_labels[i] = static_cast<int>(
                            std::max_element(post.begin(), post.end()) - post.begin());
                    }
                    res.accuracy.push_back(accuracy(map_labels, *ds.labels));
                }
                std::printf("[%s] repeat %d/%d done\n", name.c_str(), r + 1, repeats);
            } catch (const std::exception& e) {
                ++res.failures;
                std::fprintf(stderr, "[%s] repeat %d failed: %s\n", name.c_str(), r + 1, e.what());
            }
        }
        } catch (const std::exception& e) {
            // a broken cell is recorded and the suite moves on
            res.failures = repeats;
            std::fprintf(stderr, "[%s] cell failed: %s\n", name.c_str(), e.what());
        }

        auto agg = [](const std::vector<double>& v, double& mean, double& mn, double& mx) {
            mean = mn = mx = std::numeric_limits<double>::quiet_NaN();
            if (v.empty()) return;
            mean = 0.0;
            mn = mx = v[0];
            for (double x : v) {
                mean += x;
                mn = std::min(mn, x);
                mx = std::max(mx, x);
            }
            mean /= static_cast<double>(v.size());
        };
        double am, an, ax, km, kn, kx;
        agg(res.accuracy, am, an, ax);
        agg(res.kolmogorov, km, kn, kx);
        out << name << ',' << method << ',' << repeats << ',' << res.failures << ','
            << detail::fmt_double(am) << ',' << detail::fmt_double(an) << ','
            << detail::fmt_double(ax) << ',' << detail::fmt_double(km) << ','
            << detail::fmt_double(kn) << ',' << detail::fmt_double(kx) << '\n';
        ++cell_index;
    }
    std::printf("summary written to %s\n", out_path.c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Copula-based mixture model identification"};
    app.require_subcommand(1);

    std::string scenario, out, data, model_path, truth, suite;
    long long n = -1;
    std::uint64_t seed = 0;
    bool as_json = false;
    FitOptions fit_opt;

    auto* sim = app.add_subcommand("simulate", "draw labeled samples from a scenario model");
    sim->add_option("--scenario", scenario, "scenario JSON with model and n")->required();
    sim->add_option("--n", n, "sample count (overrides the scenario)");
    sim->add_option("--seed", seed, "RNG seed");
    sim->add_option("--out", out, "output CSV (x1,x2,z)")->required();

    auto* fit = app.add_subcommand("fit", "fit a model with GICE or GMM-EM");
    fit->add_option("--data", fit_opt.data_path, "input CSV (x1,x2[,z])")->required();
    fit->add_option("--method", fit_opt.method, "gice or gmm");
    fit->add_option("--K", fit_opt.k, "component count");
    fit->add_option("--T", fit_opt.t, "realization time (gice)");
    fit->add_option("--iter-max", fit_opt.iter_max, "iteration cap");
    fit->add_option("--init", fit_opt.init, "kmeans, gmm, or a CBMM JSON path");
    fit->add_option("--marginals", fit_opt.marginals, "comma list of candidate marginals");
    fit->add_option("--copulas", fit_opt.copulas, "comma list of candidate copulas");
    fit->add_option("--seed", fit_opt.seed, "RNG seed");
    fit->add_option("--min-subgroup", fit_opt.min_subgroup, "degenerate-subgroup floor");
    fit->add_option("--tie-break", fit_opt.tie_break, "selection tie-break constant");
    fit->add_flag("--use-truth", fit_opt.use_truth, "trace error ratio against the z column");
    fit->add_flag("--ifm", fit_opt.ifm, "parametric pseudo-observations");
    fit->add_option("--out-model", fit_opt.out_model, "output model JSON");
    fit->add_option("--out-trace", fit_opt.out_trace, "output trace CSV");

    auto* ev = app.add_subcommand("eval", "evaluate a model JSON against data");
    ev->add_option("--model", model_path, "model JSON (CBMM or GMM)")->required();
    ev->add_option("--data", data, "data CSV")->required();
    ev->add_option("--truth", truth, "CSV with a z column for label metrics");
    ev->add_flag("--json", as_json, "also print a JSON report");

    auto* rep = app.add_subcommand("repro", "run a suite of repeated experiments");
    rep->add_option("--suite", suite, "suite JSON")->required();
    rep->add_option("--out", out, "summary CSV")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) return cmd_simulate(scenario, n, seed, out);
        if (fit->parsed()) return cmd_fit(fit_opt);
        if (ev->parsed()) return cmd_eval(model_path, data, truth, as_json);
        if (rep->parsed()) return cmd_repro(suite, out);
    } catch (const DomainError& e) {
        std::fprintf(stderr, "input error: %s\n", e.what());
        return kExitInput;
    } catch (const InsufficientDataError& e) {
        std::fprintf(stderr, "input error: %s\n", e.what());
        return kExitInput;
    } catch (const json::exception& e) {
        std::fprintf(stderr, "input error: %s\n", e.what());
        return kExitInput;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return kExitInternal;
    }
    return kExitOk;
}
