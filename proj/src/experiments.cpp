#include "sdreg/experiments.hpp"

#include "sdreg/estimators.hpp"
#include "sdreg/risk.hpp"
#include "sdreg/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace sdreg {

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write " + path.string());
    out << content;
}

std::string hash_hex(std::uint64_t h) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

json theta_spec_to_json(const ThetaSpec& t) {
    json j;
    switch (t.kind) {
        case ThetaSpec::Kind::U1: j["kind"] = "u1"; break;
        case ThetaSpec::Kind::EqualFirstR: j["kind"] = "equal_first_r"; break;
        case ThetaSpec::Kind::Coefficients: j["kind"] = "coefficients"; break;
    }
    j["norm"] = t.norm;
    if (t.coefficients.size() > 0) j["coefficients"] = to_json(t.coefficients);
    return j;
}

json instance_config_to_json(const SynthInstanceConfig& c) {
    return json{{"d", c.d},
                {"n", c.n},
                {"singular_values", to_json(c.singular_values)},
                {"theta", theta_spec_to_json(c.theta)},
                {"gamma", c.gamma},
                {"seed", c.seed},
                {"basis", c.basis == BasisKind::Identity ? "identity" : "random_orthonormal"}};
}

json grid_to_json(const std::vector<double>& grid) {
    json a = json::array();
    for (double v : grid) a.push_back(v);
    return a;
}

std::vector<Eigen::Index> k_list_from_json(const json& j, std::vector<Eigen::Index> fallback) {
    if (!j.contains("k_list")) return fallback;
    std::vector<Eigen::Index> ks;
    for (const auto& v : j.at("k_list")) ks.push_back(v.get<Eigen::Index>());
    if (ks.empty()) throw input_error("config: k_list must be nonempty");
    return ks;
}

std::vector<double> grid_from_json(const json& j) {
    if (!j.contains("lambda_grid")) return {};
    std::vector<double> grid;
    for (const auto& v : j.at("lambda_grid")) grid.push_back(v.get<double>());
    return grid;
}

std::vector<double> effective_grid(std::vector<double> grid, const CliOverrides& ov) {
    if (ov.lambda_grid) grid = *ov.lambda_grid;
    if (grid.empty()) grid = default_lambda_grid();
    for (double v : grid)
        if (!(v > 0)) throw input_error("lambda grid entries must be > 0");
    std::sort(grid.begin(), grid.end());
    return grid;
}

json k_list_to_json(const std::vector<Eigen::Index>& ks) {
    json a = json::array();
    for (auto k : ks) a.push_back(k);
    return a;
}

}  // namespace

std::vector<double> default_lambda_grid() {
    std::vector<double> grid;
    for (int i = -8; i <= 8; ++i) grid.push_back(std::pow(10.0, 0.5 * i));
    return grid;
}

std::vector<double> parse_lambda_grid(const std::string& text) {
    std::vector<double> grid;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        const double v = std::stod(item, &used);
        if (used != item.size()) throw input_error("bad lambda grid entry: " + item);
        grid.push_back(v);
    }
    if (grid.empty()) throw input_error("empty lambda grid");
    return grid;
}

LinearFit linear_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2) throw input_error("linear_fit: need >= 2 points");
    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    const double denom = n * sxx - sx * sx;
    if (denom == 0) throw input_error("linear_fit: degenerate abscissae");
    LinearFit fit;
    fit.slope = (n * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / n;
    double ss_res = 0, ss_tot = 0;
    const double mean = sy / n;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double pred = fit.slope * xs[i] + fit.intercept;
        ss_res += (ys[i] - pred) * (ys[i] - pred);
        ss_tot += (ys[i] - mean) * (ys[i] - mean);
    }
    fit.r_squared = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

SynthInstanceConfig instance_config_from_json(const json& j) {
    SynthInstanceConfig c;
    c.d = j.value("d", Eigen::Index(4));
    c.n = j.value("n", c.d);
    c.singular_values = vec_from_json(j.at("singular_values"));
    if (j.contains("theta")) {
        const json& t = j.at("theta");
        const std::string kind = t.value("kind", "u1");
        if (kind == "u1") c.theta.kind = ThetaSpec::Kind::U1;
        else if (kind == "equal_first_r") c.theta.kind = ThetaSpec::Kind::EqualFirstR;
        else if (kind == "coefficients") c.theta.kind = ThetaSpec::Kind::Coefficients;
        else throw input_error("config: unknown theta kind '" + kind + "'");
        c.theta.norm = t.value("norm", 1.0);
        if (t.contains("coefficients")) c.theta.coefficients = vec_from_json(t.at("coefficients"));
    }
    c.gamma = j.value("gamma", 0.125);
    c.seed = j.value("seed", std::uint64_t(1));
    const std::string basis = j.value("basis", "identity");
    if (basis == "identity") c.basis = BasisKind::Identity;
    else if (basis == "random_orthonormal" || basis == "random")
        c.basis = BasisKind::RandomOrthonormal;
    else throw input_error("config: unknown basis '" + basis + "'");
    return c;
}

ProblemInstance build_instance(const SynthInstanceConfig& config) {
    return make_synthetic<double>(config.d, config.singular_values.size(),
                                  config.singular_values, config.theta, config.gamma,
                                  config.n, config.seed, config.basis);
}

std::vector<double> sweep_lambda_grid(const ProblemInstanceT<double>& instance) {
    const Eigen::Index r = instance.rank();
    const auto& s = instance.spectrum.singular_values;
    const double lo = s(r - 1) * s(r - 1);
    const double hi = s(0) * s(0);
    const int i_lo = int(std::ceil(2.0 * std::log10(lo) - 1.0));
    const int i_hi = int(std::floor(2.0 * std::log10(hi) + 2.0));
    std::vector<double> grid;
    for (int i = i_lo; i <= i_hi; ++i) grid.push_back(std::pow(10.0, 0.5 * i));
    return grid;
}

SweepStudy run_synth_sweep(const SweepConfig& config) {
    const ProblemInstance inst = build_instance(config.instance);
    std::vector<double> grid = config.lambda_grid.empty() ? sweep_lambda_grid(inst)
                                                          : config.lambda_grid;
    std::vector<Eigen::Index> ks = config.k_list;
    std::sort(ks.begin(), ks.end());

    SweepStudy study;
    study.lower_bound = lower_bound(inst);

    std::vector<double> prev(grid.size(), 0.0);
    std::vector<VecXd> prev_z(grid.size(), VecXd::Zero(0));
    bool have_prev = false;
    for (Eigen::Index k : ks) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t gi = 0; gi < grid.size(); ++gi) {
            const double lam = grid[gi];
            SweepPoint pt;
            pt.k = k;
            pt.lambda = lam;
            if (k == 0) {
                const auto rep = ridge_risk(inst, lam);
                pt.risk = rep.excess_risk;
                pt.bias = rep.bias_part;
                pt.variance = rep.variance_part;
            } else {
                const auto q = quadratic_coefficients(inst, lam, k);
                XiBar z = solve_xibar_argmin(q);
                auto rep = excess_risk_closed(q, z);
                // The previous curve's argmin padded with zeros is a valid
                // k-step point; keep it when the fresh solve is numerically
                // worse (ill-conditioned quadratics at extreme lambda).
                if (prev_z[gi].size() <= k) {
                    VecXd padded = VecXd::Zero(k);
                    padded.head(prev_z[gi].size()) = prev_z[gi];
                    const XiBar zp{padded};
                    const auto rep_p = excess_risk_closed(q, zp);
                    if (rep_p.excess_risk < rep.excess_risk) {
                        z = zp;
                        rep = rep_p;
                    }
                }
                prev_z[gi] = z.value;
                pt.risk = rep.excess_risk;
                pt.bias = rep.bias_part;
                pt.variance = rep.variance_part;
            }
            pt.meets_lower_bound =
                k == inst.rank() && std::abs(pt.risk - study.lower_bound) <= 1e-6;
            pt.dominance_ok = !have_prev || pt.risk <= prev[gi] + 1e-10;
            if (!pt.dominance_ok) ++study.dominance_violations;
            best = std::min(best, pt.risk);
            prev[gi] = pt.risk;
            study.points.push_back(pt);
        }
        have_prev = true;
        study.min_risk_per_k.emplace_back(k, best);
    }
    return study;
}

SeparationStudy run_separation(const SeparationConfig& config) {
    if (config.r_list.empty()) throw input_error("separation: empty r list");
    if (!(config.s_first > 0) || !(config.s_last > 0))
        throw input_error("separation: singular endpoints must be > 0");

    SeparationStudy study;
    std::vector<double> rs, ratios;
    for (Eigen::Index r : config.r_list) {
        if (r < 1 || r > std::min(config.d, config.n))
            throw input_error("separation: r out of range");
        VecXd s(r);
        for (Eigen::Index j = 0; j < r; ++j)
            s(j) = r == 1 ? config.s_first
                          : config.s_first *
                                std::pow(config.s_last / config.s_first,
                                         double(j) / double(r - 1));
        ThetaSpec theta;
        theta.kind = ThetaSpec::Kind::U1;
        theta.norm = config.theta_norm;
        const auto inst = make_synthetic<double>(config.d, r, s, theta, config.gamma,
                                                 config.n, config.seed, config.basis);

        SeparationRow row;
        row.r = r;
        const auto ridge = ridge_lambda_star(inst);
        row.ridge_lambda = ridge.lambda;
        row.ridge_risk = ridge.risk;
        row.lower_bound = lower_bound(inst);
        // The r-step minimum over (lambda, parameters) via the per-direction
        // closed form: the parameter-space quadratic is too ill conditioned
        // at large r to reach its own minimum in floating point.
        row.sd_risk = k_step_min_risk_exact(inst, r);
        row.ratio = row.ridge_risk / row.sd_risk;
        rs.push_back(double(r));
        ratios.push_back(row.ratio);
        study.rows.push_back(row);
    }
    if (study.rows.size() >= 2) study.ratio_fit = linear_fit(rs, ratios);
    return study;
}

std::vector<GapCell> run_gap_study(const GapConfig& config) {
    if (!(config.lambda > 0)) throw input_error("gap study: lambda must be > 0");
    // cond(M) blows up like eps^{-2(k-1)} as the spectrum collapses, which is
    // the point of the study; solve in extended precision so the reported
    // parameters stay meaningful well past where double arithmetic gives out.
    using LD = long double;
    std::vector<GapCell> cells;
    for (double eps : config.epsilons) {
        if (!(eps > 0) || eps * double(config.d - 1) >= 1.0)
            throw input_error("gap study: epsilon must satisfy 0 < (d-1) eps < 1");
        VecX<LD> s(config.d);
        for (Eigen::Index j = 0; j < config.d; ++j) s(j) = LD(1) - LD(j) * LD(eps);
        VecX<LD> comp = VecX<LD>::Zero(config.d);  // unit mass on the top direction
        comp(0) = LD(1);
        const LD g2 = LD(config.gamma) * LD(config.gamma);
        for (Eigen::Index k : config.k_list) {
            GapCell cell;
            cell.epsilon = eps;
            cell.k = k;
            const auto q = quadratic_coefficients<LD>(s, comp, g2, config.n, LD(config.lambda), k);
            const auto z = solve_xibar_argmin(q);
            cell.xibar = z.value.cast<double>();
            Eigen::SelfAdjointEigenSolver<MatX<LD>> eig(q.m_matrix);
            const LD top = eig.eigenvalues().cwiseAbs().maxCoeff();
            const LD bottom = eig.eigenvalues().cwiseAbs().minCoeff();
            cell.quadratic_condition =
                bottom > 0 ? double(top / bottom) : std::numeric_limits<double>::infinity();
            try {
                const VecX<LD> xi = xibar_to_xi(z);
                cell.xi = xi.cast<double>();
                cell.max_abs_xi = double(xi.cwiseAbs().maxCoeff());
            } catch (const degenerate_parametrization_error&) {
                cell.max_abs_xi = cell.xibar.cwiseAbs().maxCoeff();
                cell.note = "argmin not representable in recursive form";
            }
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

RealDataConfig real_data_config_from_json(const json& j) {
    RealDataConfig c;
    c.name = j.value("name", "dataset");
    c.csv_path = j.at("csv_path").get<std::string>();
    const json& csv = j.at("csv");
    for (const auto& f : csv.at("features")) c.csv.feature_columns.push_back(f.get<std::string>());
    c.csv.target_column = csv.at("target").get<std::string>();
    if (csv.contains("sentinel")) c.csv.sentinel = csv.at("sentinel").get<double>();
    if (csv.contains("delimiter")) {
        const std::string d = csv.at("delimiter").get<std::string>();
        if (d == "auto" || d.empty()) c.csv.delimiter = '\0';
        else if (d == "tab" || d == "\\t" || d == "\t") c.csv.delimiter = '\t';
        else c.csv.delimiter = d[0];
    }
    c.csv.has_header = csv.value("has_header", true);
    if (csv.contains("column_names"))
        for (const auto& n : csv.at("column_names")) c.csv.column_names.push_back(n.get<std::string>());
    if (csv.contains("hour_key_column"))
        c.csv.hour_key_column = csv.at("hour_key_column").get<std::string>();
    if (j.contains("split")) {
        const json& s = j.at("split");
        c.split.train_fraction = s.value("train_fraction", 0.3);
        c.split.validation_fraction = s.value("validation_fraction", 0.3);
        c.split.shuffle = s.value("shuffle", false);
        if (c.split.shuffle && !s.contains("seed"))
            throw input_error("config: shuffle split requires an explicit seed");
        c.split.seed = s.value("seed", std::uint64_t(0));
    }
    c.k_list = k_list_from_json(j, {0, 1, 2});
    c.lambda_grid = grid_from_json(j);
    return c;
}

RealDataStudy run_real_data(const RealDataConfig& config) {
    const RawTable table = load_csv(config.csv_path, config.csv);
    RealDataStudy study;
    study.dataset = whiten(split_sequential(table, config.split));
    const std::vector<double> grid =
        config.lambda_grid.empty() ? default_lambda_grid() : config.lambda_grid;

    const auto spectrum = decompose(study.dataset.train.x);
    for (Eigen::Index k : config.k_list) {
        TuneResult t = tune(study.dataset.train.x, study.dataset.train.y,
                            study.dataset.validation.x, study.dataset.validation.y, k, grid);
        const auto w =
            fit_sd_preconditioner(spectrum, study.dataset.train.y, t.lambda, t.xibar);
        RealDataRow row;
        row.k = k;
        row.lambda = t.lambda;
        row.xibar = t.xibar.value;
        row.xi = t.xi;
        row.val_mse = t.val_mse;
        row.test_mse = mse(w, study.dataset.test);
        study.rows.push_back(std::move(row));
        study.tunes.push_back(std::move(t));
    }
    return study;
}

namespace {

json dataset_manifest(const RealDataConfig& config, const RegressionDataset& ds) {
    json j;
    j["source_path"] = ds.source_path;
    j["checksum_fnv1a"] = hash_hex(fnv1a_file(config.csv_path));
    j["rows_read"] = ds.rows_read;
    j["rows_dropped"] = ds.rows_dropped;
    j["rows_downsampled"] = ds.rows_downsampled;
    j["split_mode"] = ds.split_mode;
    j["seed"] = ds.seed;
    j["split_sizes"] = json{{"train", ds.train.y.size()},
                            {"validation", ds.validation.y.size()},
                            {"test", ds.test.y.size()}};
    j["feature_names"] = ds.feature_names;
    j["dropped_features"] = ds.dropped_features;
    j["target"] = ds.target_name;
    j["target_mean"] = ds.whitening.target_mean;
    j["target_std"] = ds.whitening.target_std;
    return j;
}

}  // namespace

int cmd_synth_sweep(const json& config, const std::string& out_dir, const CliOverrides& ov) {
    SweepConfig cfg;
    cfg.instance = instance_config_from_json(config.at("instance"));
    if (ov.seed) cfg.instance.seed = *ov.seed;
    cfg.k_list = k_list_from_json(config, cfg.k_list);
    if (ov.k) cfg.k_list = {*ov.k};
    cfg.lambda_grid = grid_from_json(config);
    if (ov.lambda_grid) cfg.lambda_grid = *ov.lambda_grid;
    // Resolve the spectrum-bracketing default here so the echoed config (and
    // its hash) record the grid actually swept.
    if (cfg.lambda_grid.empty())
        cfg.lambda_grid = sweep_lambda_grid(build_instance(cfg.instance));
    cfg.lambda_grid = effective_grid(cfg.lambda_grid, CliOverrides{});

    const json echo{{"instance", instance_config_to_json(cfg.instance)},
                    {"k_list", k_list_to_json(cfg.k_list)},
                    {"lambda_grid", grid_to_json(cfg.lambda_grid)}};
    const std::string hash = hash_hex(fnv1a(echo.dump()));

    const SweepStudy study = run_synth_sweep(cfg);

    std::string csv = "# config_hash=" + hash + " seed=" + std::to_string(cfg.instance.seed) +
                      "\nk,lambda,excess_risk,bias,variance,meets_lower_bound,dominance_ok\n";
    for (const auto& pt : study.points)
        csv += std::to_string(pt.k) + "," + num(pt.lambda) + "," + num(pt.risk) + "," +
               num(pt.bias) + "," + num(pt.variance) + "," +
               (pt.meets_lower_bound ? "1" : "0") + "," + (pt.dominance_ok ? "1" : "0") + "\n";

    json mins = json::array();
    for (const auto& [k, risk] : study.min_risk_per_k)
        mins.push_back(json{{"k", k}, {"min_risk", risk}});
    const json summary{{"config_hash", hash},
                       {"config", echo},
                       {"lower_bound", study.lower_bound},
                       {"min_risk_per_k", mins},
                       {"dominance_violations", study.dominance_violations}};

    const std::filesystem::path dir(out_dir);
    write_file(dir / "synth_sweep_curves.csv", csv);
    write_file(dir / "synth_sweep_summary.json", summary.dump(2) + "\n");
    std::cout << "synth-sweep: " << study.points.size() << " grid points, lower bound "
              << study.lower_bound << ", dominance violations "
              << study.dominance_violations << "\n";
    return 0;
}

int cmd_separation(const json& config, const std::string& out_dir, const CliOverrides& ov) {
    SeparationConfig cfg;
    cfg.d = config.value("d", Eigen::Index(100));
    cfg.n = config.value("n", cfg.d);
    cfg.gamma = config.value("gamma", 0.1);
    cfg.s_first = config.value("s_first", 1.0);
    cfg.s_last = config.value("s_last", 0.8);
    cfg.theta_norm = config.value("theta_norm", 1.0);
    if (config.contains("r_list"))
        for (const auto& v : config.at("r_list")) cfg.r_list.push_back(v.get<Eigen::Index>());
    else
        for (Eigen::Index r = 5; r <= 50; r += 5) cfg.r_list.push_back(r);
    cfg.lambda_grid = effective_grid(grid_from_json(config), ov);
    cfg.seed = config.value("seed", std::uint64_t(1));
    if (ov.seed) cfg.seed = *ov.seed;

    json rj = json::array();
    for (auto r : cfg.r_list) rj.push_back(r);
    const json echo{{"d", cfg.d},          {"n", cfg.n},
                    {"gamma", cfg.gamma},  {"s_first", cfg.s_first},
                    {"s_last", cfg.s_last},{"theta_norm", cfg.theta_norm},
                    {"r_list", rj},        {"lambda_grid", grid_to_json(cfg.lambda_grid)},
                    {"seed", cfg.seed}};
    const std::string hash = hash_hex(fnv1a(echo.dump()));

    const SeparationStudy study = run_separation(cfg);

    std::string csv = "# config_hash=" + hash + " seed=" + std::to_string(cfg.seed) +
                      "\nr,ridge_lambda,ridge_risk,sd_risk,lower_bound,ratio\n";
    for (const auto& row : study.rows)
        csv += std::to_string(row.r) + "," + num(row.ridge_lambda) + "," +
               num(row.ridge_risk) + "," + num(row.sd_risk) + "," + num(row.lower_bound) +
               "," + num(row.ratio) + "\n";

    const json summary{{"config_hash", hash},
                       {"config", echo},
                       {"ratio_fit", json{{"slope", study.ratio_fit.slope},
                                          {"intercept", study.ratio_fit.intercept},
                                          {"r_squared", study.ratio_fit.r_squared}}}};

    const std::filesystem::path dir(out_dir);
    write_file(dir / "separation_table.csv", csv);
    write_file(dir / "separation_summary.json", summary.dump(2) + "\n");
    std::cout << "separation: " << study.rows.size() << " ranks, ratio slope "
              << study.ratio_fit.slope << " (R^2 " << study.ratio_fit.r_squared << ")\n";
    return 0;
}

int cmd_gap_study(const json& config, const std::string& out_dir, const CliOverrides& ov) {
    GapConfig cfg;
    if (config.contains("epsilons")) {
        cfg.epsilons.clear();
        for (const auto& v : config.at("epsilons")) cfg.epsilons.push_back(v.get<double>());
    }
    cfg.k_list = k_list_from_json(config, cfg.k_list);
    if (ov.k) cfg.k_list = {*ov.k};
    cfg.lambda = config.value("lambda", 0.125);
    cfg.gamma = config.value("gamma", 0.125);
    cfg.d = config.value("d", Eigen::Index(4));
    cfg.n = config.value("n", cfg.d);
    cfg.seed = config.value("seed", std::uint64_t(1));
    if (ov.seed) cfg.seed = *ov.seed;

    json ej = json::array();
    for (double e : cfg.epsilons) ej.push_back(e);
    const json echo{{"epsilons", ej},     {"k_list", k_list_to_json(cfg.k_list)},
                    {"lambda", cfg.lambda},{"gamma", cfg.gamma},
                    {"d", cfg.d},          {"n", cfg.n},
                    {"seed", cfg.seed}};
    const std::string hash = hash_hex(fnv1a(echo.dump()));

    const auto cells = run_gap_study(cfg);

    const Eigen::Index kmax = *std::max_element(cfg.k_list.begin(), cfg.k_list.end());
    std::string csv = "# config_hash=" + hash + " seed=" + std::to_string(cfg.seed) +
                      "\nepsilon,k,max_abs_xi,quadratic_condition";
    for (Eigen::Index i = 1; i <= kmax; ++i) csv += ",xi_" + std::to_string(i);
    csv += ",note\n";
    json cells_json = json::array();
    for (const auto& cell : cells) {
        csv += num(cell.epsilon) + "," + std::to_string(cell.k) + "," +
               num(cell.max_abs_xi) + "," + num(cell.quadratic_condition);
        for (Eigen::Index i = 0; i < kmax; ++i) {
            csv += ",";
            if (cell.xi && i < cell.xi->size()) csv += num((*cell.xi)(i));
        }
        csv += "," + cell.note + "\n";
        json cj{{"epsilon", cell.epsilon},
                {"k", cell.k},
                {"xibar", to_json(cell.xibar)},
                {"max_abs_xi", cell.max_abs_xi},
                {"quadratic_condition", cell.quadratic_condition}};
        if (cell.xi) cj["xi"] = to_json(*cell.xi);
        if (!cell.note.empty()) cj["note"] = cell.note;
        cells_json.push_back(std::move(cj));
    }
    const json summary{{"config_hash", hash}, {"config", echo}, {"cells", cells_json}};

    const std::filesystem::path dir(out_dir);
    write_file(dir / "gap_study.csv", csv);
    write_file(dir / "gap_study_summary.json", summary.dump(2) + "\n");
    std::cout << "gap-study: " << cells.size() << " cells written\n";
    return 0;
}

int cmd_real_data(const json& config, const std::string& out_dir, const CliOverrides& ov) {
    RealDataConfig cfg = real_data_config_from_json(config);
    if (ov.seed) cfg.split.seed = *ov.seed;
    if (ov.k) cfg.k_list = {*ov.k};
    cfg.lambda_grid = effective_grid(cfg.lambda_grid, ov);

    json echo = config;
    echo["lambda_grid"] = grid_to_json(cfg.lambda_grid);
    echo["k_list"] = k_list_to_json(cfg.k_list);
    const std::string hash = hash_hex(fnv1a(echo.dump()));

    const RealDataStudy study = run_real_data(cfg);

    json rows = json::array();
    for (const auto& row : study.rows) {
        json rj{{"k", row.k},
                {"lambda", row.lambda},
                {"xibar", to_json(row.xibar)},
                {"val_mse", row.val_mse},
                {"test_mse", row.test_mse}};
        if (row.xi) rj["xi"] = to_json(*row.xi);
        rows.push_back(std::move(rj));
    }
    const json table{{"config_hash", hash},
                     {"dataset", cfg.name},
                     {"seed", cfg.split.seed},
                     {"rows", rows}};

    std::string curves = "# config_hash=" + hash + " seed=" +
                         std::to_string(cfg.split.seed) + "\nk,lambda,val_mse\n";
    for (const auto& t : study.tunes)
        for (const auto& tr : t.trace)
            curves += std::to_string(t.k) + "," + num(tr.lambda) + "," + num(tr.actual_mse) +
                      "\n";

    json manifest = dataset_manifest(cfg, study.dataset);
    manifest["config_hash"] = hash;
    if (config.contains("inferred")) manifest["inferred"] = config.at("inferred");

    const std::filesystem::path dir(out_dir);
    write_file(dir / (cfg.name + "_table.json"), table.dump(2) + "\n");
    write_file(dir / (cfg.name + "_val_curves.csv"), curves);
    write_file(dir / (cfg.name + "_manifest.json"), manifest.dump(2) + "\n");

    std::cout << cfg.name << ": n=" << study.dataset.train.y.size() << "/"
              << study.dataset.validation.y.size() << "/" << study.dataset.test.y.size()
              << " (train/val/test)\n";
    for (const auto& row : study.rows)
        std::cout << "  k=" << row.k << " lambda=" << row.lambda
                  << " val_mse=" << row.val_mse << " test_mse=" << row.test_mse << "\n";
    return 0;
}

int cmd_tune(const json& config, const std::string& out_dir, const CliOverrides& ov) {
    RealDataConfig cfg = real_data_config_from_json(config);
    if (ov.seed) cfg.split.seed = *ov.seed;
    Eigen::Index k = config.value("k", Eigen::Index(1));
    if (ov.k) k = *ov.k;
    cfg.lambda_grid = effective_grid(cfg.lambda_grid, ov);

    json echo = config;
    echo["lambda_grid"] = grid_to_json(cfg.lambda_grid);
    echo["k"] = k;
    const std::string hash = hash_hex(fnv1a(echo.dump()));

    const RawTable table = load_csv(cfg.csv_path, cfg.csv);
    const RegressionDataset ds = whiten(split_sequential(table, cfg.split));
    const TuneResult result = tune(ds.train.x, ds.train.y, ds.validation.x, ds.validation.y,
                                   k, cfg.lambda_grid);

    json out{{"config_hash", hash},
             {"dataset", cfg.name},
             {"seed", cfg.split.seed},
             {"result", to_json(result)}};
    write_file(std::filesystem::path(out_dir) / "tune_result.json", out.dump(2) + "\n");
    std::cout << "tune: k=" << k << " chose lambda=" << result.lambda
              << " val_mse=" << result.val_mse << "\n";
    return 0;
}

int cmd_risk_eval(const json& config, const std::string& out_dir, const CliOverrides& ov) {
    SynthInstanceConfig icfg = instance_config_from_json(config.at("instance"));
    if (ov.seed) icfg.seed = *ov.seed;
    const double lambda = config.at("lambda").get<double>();
    std::uint64_t trials = config.value("trials", std::uint64_t(0));
    if (ov.trials) trials = *ov.trials;
    const std::uint64_t mc_seed = config.value("mc_seed", std::uint64_t(42));

    XiBar xibar;
    std::optional<VecXd> xi;
    if (config.contains("xi")) {
        xi = vec_from_json(config.at("xi"));
        xibar = xi_to_xibar(*xi);
    } else if (config.contains("xibar")) {
        xibar = XiBar{vec_from_json(config.at("xibar"))};
    } else {
        throw input_error("risk-eval: config needs xi or xibar");
    }

    json echo = config;
    echo["trials"] = trials;
    const std::string hash = hash_hex(fnv1a(echo.dump()));

    const ProblemInstance inst = build_instance(icfg);
    const auto closed = excess_risk_closed(inst, lambda, xibar);

    json out{{"config_hash", hash},
             {"lambda", lambda},
             {"xibar", to_json(xibar.value)},
             {"closed", to_json(closed)}};
    if (xi) out["xi"] = to_json(*xi);
    if (trials > 0) {
        const auto mc = xi ? excess_risk_monte_carlo(inst, lambda, *xi, trials, mc_seed)
                           : excess_risk_monte_carlo(inst, lambda, xibar, trials, mc_seed);
        out["monte_carlo"] = to_json(mc);
        std::cout << "risk-eval: closed " << closed.excess_risk << ", monte carlo "
                  << mc.excess_risk << " +/- " << mc.std_error << " (" << trials
                  << " trials)\n";
    } else {
        std::cout << "risk-eval: closed " << closed.excess_risk << "\n";
    }
    write_file(std::filesystem::path(out_dir) / "risk_eval.json", out.dump(2) + "\n");
    return 0;
}

}  // namespace sdreg
