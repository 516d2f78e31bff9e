#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbmm/baselines.hpp"
#include "cbmm/errors.hpp"
#include "cbmm/gice.hpp"
#include "cbmm/mixture.hpp"
#include "cbmm/types.hpp"

namespace cbmm {

using json = nlohmann::json;

namespace detail {

inline void require_keys(const json& j, std::initializer_list<const char*> allowed,
                         const char* ctx) {
    if (!j.is_object()) throw DomainError(std::string(ctx) + ": expected a JSON object");
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* k : allowed)
            if (item.key() == k) ok = true;
        if (!ok) throw DomainError(std::string(ctx) + ": unknown field \"" + item.key() + "\"");
    }
}

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline json to_json(const MarginalSpec& s) {
    json j;
    j["family"] = to_string(s.family);
    j["shape1"] = s.shape1 ? json(*s.shape1) : json(nullptr);
    j["shape2"] = s.shape2 ? json(*s.shape2) : json(nullptr);
    j["loc"] = s.loc;
    j["scale"] = s.scale;
    return j;
}

inline MarginalSpec marginal_spec_from_json(const json& j) {
    detail::require_keys(j, {"family", "shape1", "shape2", "loc", "scale"}, "marginal");
    MarginalSpec s;
    s.family = marginal_family_from_string(j.at("family").get<std::string>());
    if (j.contains("shape1") && !j["shape1"].is_null()) s.shape1 = j["shape1"].get<double>();
    if (j.contains("shape2") && !j["shape2"].is_null()) s.shape2 = j["shape2"].get<double>();
    s.loc = j.at("loc").get<double>();
    s.scale = j.at("scale").get<double>();
    s.validate();
    return s;
}

inline json to_json(const CopulaSpec& s) {
    json j;
    j["family"] = to_string(s.family);
    j["alpha"] = s.alpha ? json(*s.alpha) : json(nullptr);
    return j;
}

inline CopulaSpec copula_spec_from_json(const json& j) {
    detail::require_keys(j, {"family", "alpha"}, "copula");
    CopulaSpec s;
    s.family = copula_family_from_string(j.at("family").get<std::string>());
    if (j.contains("alpha") && !j["alpha"].is_null()) s.alpha = j["alpha"].get<double>();
    s.validate();
    return s;
}

inline json to_json(const Cbmm& m) {
    json comps = json::array();
    for (const auto& c : m.components) {
        json jc;
        jc["weight"] = c.weight;
        jc["marginals"] = json::array({to_json(c.marginals[0]), to_json(c.marginals[1])});
        jc["copula"] = to_json(c.copula);
        comps.push_back(jc);
    }
    return json{{"components", comps}};
}

inline Cbmm cbmm_from_json(const json& j) {
    detail::require_keys(j, {"components"}, "cbmm");
    Cbmm m;
    for (const auto& jc : j.at("components")) {
        detail::require_keys(jc, {"weight", "marginals", "copula"}, "cbmm component");
        Component c;
        c.weight = jc.at("weight").get<double>();
        const auto& jm = jc.at("marginals");
        if (!jm.is_array() || jm.size() != 2)
            throw DomainError("cbmm component: \"marginals\" must hold exactly 2 entries");
        c.marginals[0] = marginal_spec_from_json(jm[0]);
        c.marginals[1] = marginal_spec_from_json(jm[1]);
        c.copula = copula_spec_from_json(jc.at("copula"));
        m.components.push_back(c);
    }
    m.validate();
    return m;
}

inline json to_json(const GmmModel& m) {
    json comps = json::array();
    for (const auto& c : m.components) {
        json jc;
        jc["weight"] = c.weight;
        jc["mean"] = json::array({c.mean[0], c.mean[1]});
        jc["cov"] = json::array({json::array({c.cov[0][0], c.cov[0][1]}),
                                 json::array({c.cov[1][0], c.cov[1][1]})});
        comps.push_back(jc);
    }
    return json{{"components", comps}};
}

inline GmmModel gmm_from_json(const json& j) {
    detail::require_keys(j, {"components"}, "gmm");
    GmmModel m;
    for (const auto& jc : j.at("components")) {
        detail::require_keys(jc, {"weight", "mean", "cov"}, "gmm component");
        GmmComponent c;
        c.weight = jc.at("weight").get<double>();
        const auto& jm = jc.at("mean");
        const auto& jv = jc.at("cov");
        if (!jm.is_array() || jm.size() != 2) throw DomainError("gmm: mean must hold 2 entries");
        if (!jv.is_array() || jv.size() != 2 || !jv[0].is_array() || jv[0].size() != 2 ||
            !jv[1].is_array() || jv[1].size() != 2)
            throw DomainError("gmm: cov must be a 2x2 array");
        c.mean = {jm[0].get<double>(), jm[1].get<double>()};
        c.cov = {{{jv[0][0].get<double>(), jv[0][1].get<double>()},
                  {jv[1][0].get<double>(), jv[1][1].get<double>()}}};
        m.components.push_back(c);
    }
    m.validate();
    return m;
}

// A model file is either a CBMM or a GMM; GMM components carry "mean".
inline bool json_is_gmm(const json& j) {
    return j.contains("components") && j["components"].is_array() && !j["components"].empty() &&
           j["components"][0].is_object() && j["components"][0].contains("mean");
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

struct Dataset {
    std::vector<Point2> points;
    std::optional<Labels> labels;  // 0-based; files carry 1-based z
};

inline Dataset read_data_csv(std::istream& in, const std::string& name = "<csv>") {
    Dataset ds;
    std::string line;
    if (!std::getline(in, line)) throw DomainError(name + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    if (header.size() < 2)
        throw DomainError(name + ":1: header must name at least two columns (x1,x2[,z])");
    int zcol = -1;
    for (std::size_t i = 2; i < header.size(); ++i)
        if (header[i] == "z") zcol = static_cast<int>(i);
    if (zcol >= 0) ds.labels.emplace();

    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() < 2 || (zcol >= 0 && static_cast<int>(cells.size()) <= zcol))
            throw DomainError(name + ":" + std::to_string(lineno) + ": too few columns");
        auto parse = [&](const std::string& v, const char* what) {
            try {
                std::size_t pos = 0;
                const double d = std::stod(v, &pos);
                if (pos != v.size()) throw std::invalid_argument(v);
                return d;
            } catch (const std::exception&) {
                throw DomainError(name + ":" + std::to_string(lineno) + ": bad " + what + " \"" +
                                  v + "\"");
            }
        };
        Point2 p{parse(cells[0], "x1"), parse(cells[1], "x2")};
        ds.points.push_back(p);
        if (zcol >= 0) {
            const double z = parse(cells[zcol], "label");
            const int zi = static_cast<int>(z);
            if (zi < 1 || static_cast<double>(zi) != z)
                throw DomainError(name + ":" + std::to_string(lineno) +
                                  ": label must be a positive integer");
            ds.labels->push_back(zi - 1);
        }
    }
    if (ds.points.empty()) throw DomainError(name + ": no data rows");
    return ds;
}

inline Dataset read_data_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open " + path);
    return read_data_csv(in, path);
}

inline void write_labeled_csv(std::ostream& out, std::span<const LabeledSample> samples) {
    out << "x1,x2,z\n";
    for (const auto& s : samples)
        out << detail::fmt_double(s.x.x1) << ',' << detail::fmt_double(s.x.x2) << ','
            << (s.z + 1) << '\n';
}

// Per-iteration rows: one for each (component, dimension) marginal and one
// per component copula ("cop"); parameters appear shapes-first, then loc,
// then scale.
inline void write_trace_csv(std::ostream& out, const FitTrace& trace) {
    out << "iteration,component,dimension,selected_family,weight,p1,p2,p3,p4,kolmogorov,"
           "error_ratio,reseeded\n";
    auto write_record = [&out](const IterationRecord& rec) {
        const std::string err = rec.error_ratio ? detail::fmt_double(*rec.error_ratio) : "";
        for (std::size_t c = 0; c < rec.model.k(); ++c) {
            const auto& comp = rec.model.components[c];
            const bool reseeded =
                std::find(rec.reseeded.begin(), rec.reseeded.end(), static_cast<int>(c)) !=
                rec.reseeded.end();
            for (int d = 0; d < 2; ++d) {
                const auto& m = comp.marginals[d];
                std::vector<std::string> params;
                if (m.shape1) params.push_back(detail::fmt_double(*m.shape1));
                if (m.shape2) params.push_back(detail::fmt_double(*m.shape2));
                params.push_back(detail::fmt_double(m.loc));
                params.push_back(detail::fmt_double(m.scale));
                while (params.size() < 4) params.emplace_back();
                out << rec.iteration << ',' << (c + 1) << ',' << (d + 1) << ','
                    << to_string(m.family) << ',' << detail::fmt_double(comp.weight) << ','
                    << params[0] << ',' << params[1] << ',' << params[2] << ',' << params[3] << ','
                    << detail::fmt_double(rec.kolmogorov) << ',' << err << ','
                    << (reseeded ? 1 : 0) << '\n';
            }
            out << rec.iteration << ',' << (c + 1) << ",cop," << to_string(comp.copula.family)
                << ',' << detail::fmt_double(comp.weight) << ','
                << (comp.copula.alpha ? detail::fmt_double(*comp.copula.alpha) : "") << ",,,,"
                << detail::fmt_double(rec.kolmogorov) << ',' << err << ',' << (reseeded ? 1 : 0)
                << '\n';
        }
    };
    write_record(trace.initial);
    for (const auto& rec : trace.iterations) write_record(rec);
}

}  // namespace cbmm
