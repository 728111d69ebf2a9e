#pragma once

#include "sdreg/risk.hpp"
#include "sdreg/solver.hpp"
#include "sdreg/spectral.hpp"
#include "sdreg/tuner.hpp"
#include "sdreg/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>

namespace sdreg {

using nlohmann::json;

inline json to_json(const VecXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

/// Row-major nested arrays.
inline json to_json(const MatXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline VecXd vec_from_json(const json& a) {
    VecXd v(static_cast<Eigen::Index>(a.size()));
    Eigen::Index i = 0;
    for (const auto& x : a) v(i++) = x.get<double>();
    return v;
}

inline MatXd mat_from_json(const json& rows) {
    const auto r = static_cast<Eigen::Index>(rows.size());
    if (r == 0) return MatXd(0, 0);
    const auto c = static_cast<Eigen::Index>(rows.front().size());
    MatXd m(r, c);
    Eigen::Index i = 0;
    for (const auto& row : rows) {
        if (static_cast<Eigen::Index>(row.size()) != c)
            throw input_error("mat_from_json: ragged rows");
        Eigen::Index j = 0;
        for (const auto& x : row) m(i, j++) = x.get<double>();
        ++i;
    }
    return m;
}

inline json to_json(const Provenance& p) {
    json j{{"lambda", p.lambda}, {"k", p.k}, {"method", p.method}};
    if (p.xi) j["xi"] = to_json(*p.xi);
    if (p.xibar) j["xibar"] = to_json(*p.xibar);
    if (p.seed) j["seed"] = *p.seed;
    return j;
}

inline json to_json(const EstimatorWeights& w) {
    return json{{"theta_hat", to_json(w.theta_hat)}, {"provenance", to_json(w.provenance)}};
}

inline json to_json(const RiskReport& r) {
    json j{{"excess_risk", r.excess_risk},
           {"bias_part", r.bias_part},
           {"variance_part", r.variance_part},
           {"method", r.method}};
    if (r.trials > 0) {
        j["std_error"] = r.std_error;
        j["trials"] = r.trials;
    }
    return j;
}

inline json to_json(const LambdaStarResult& r) {
    return json{{"lambda", r.lambda},
                {"risk", r.risk},
                {"fixed_point_residual", r.fixed_point_residual},
                {"at_boundary", r.at_boundary}};
}

inline json to_json(const SolveReport& r) {
    return json{{"xibar", to_json(r.xibar.value)},
                {"feasible", r.feasible},
                {"residual", r.residual},
                {"condition_number", r.condition_number},
                {"risk", r.risk},
                {"risk_gap", r.risk_gap},
                {"note", r.note}};
}

inline json to_json(const LambdaSearchReport& r) {
    return json{{"success", r.success},
                {"lambda", r.lambda},
                {"solve", to_json(r.solve)},
                {"best_residual", r.best_residual},
                {"relative_risk_gap", r.relative_risk_gap},
                {"lambdas_tried", r.lambdas_tried}};
}

inline json to_json(const TuneTraceRow& row) {
    json j{{"lambda", row.lambda},
           {"xibar", to_json(row.xibar)},
           {"predicted_mse", row.predicted_mse},
           {"actual_mse", row.actual_mse},
           {"fit_r_squared", row.model.r_squared}};
    if (row.xi) j["xi"] = to_json(*row.xi);
    if (!row.note.empty()) j["note"] = row.note;
    return j;
}

inline json to_json(const TuneResult& r) {
    json rows = json::array();
    for (const auto& row : r.trace) rows.push_back(to_json(row));
    json j{{"lambda", r.lambda},
           {"xibar", to_json(r.xibar.value)},
           {"val_mse", r.val_mse},
           {"k", r.k},
           {"trace", std::move(rows)}};
    if (r.xi) j["xi"] = to_json(*r.xi);
    return j;
}

/// FNV-1a over a byte string; used for config hashes and file checksums.
inline std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace sdreg
