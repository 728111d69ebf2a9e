#include "sdreg/experiments.hpp"

#include "sdreg/risk.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace sdreg;

namespace {

SynthInstanceConfig reference_config() {
    SynthInstanceConfig c;
    c.d = 4;
    c.n = 4;
    c.singular_values = VecXd(4);
    c.singular_values << 1.0, 1.0 / 2.0, 1.0 / 3.0, 1.0 / 4.0;
    c.theta.kind = ThetaSpec::Kind::U1;
    c.theta.norm = 1.0;
    c.gamma = 0.125;
    return c;
}

SynthInstanceConfig tied_config() {
    SynthInstanceConfig c = reference_config();
    c.singular_values << 1.0, 1.0, 0.5, 1.0 / 3.0;
    return c;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Self-cleaning output directory under the system temp root.
struct TempDir {
    std::filesystem::path dir;
    explicit TempDir(const std::string& name)
        : dir(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(dir);
        std::filesystem::create_directories(dir);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(dir, ec);
    }
    std::string path(const std::string& file) const { return (dir / file).string(); }
};

}  // namespace

TEST_CASE("default_lambda_grid: seventeen points spaced by sqrt(10)") {
    const auto grid = default_lambda_grid();
    REQUIRE(grid.size() == 17);
    CHECK(grid.front() == doctest::Approx(1e-4));
    CHECK(grid.back() == doctest::Approx(1e4));
    for (std::size_t i = 1; i < grid.size(); ++i)
        CHECK(grid[i] / grid[i - 1] == doctest::Approx(std::sqrt(10.0)).epsilon(1e-12));
}

TEST_CASE("sweep_lambda_grid: sqrt(10) ladder bracketing the spectrum") {
    const auto inst = build_instance(reference_config());
    const auto grid = sweep_lambda_grid(inst);
    REQUIRE(grid.size() >= 4);
    const double lo = 0.25 * 0.25;  // s_r^2
    const double hi = 1.0;          // s_1^2
    CHECK(grid.front() >= lo / std::sqrt(10.0) * (1 - 1e-12));
    CHECK(grid.front() < lo);
    CHECK(grid.back() > hi * std::sqrt(10.0));
    CHECK(grid.back() <= 10.0 * hi * (1 + 1e-12));
    for (std::size_t i = 1; i < grid.size(); ++i)
        CHECK(grid[i] / grid[i - 1] == doctest::Approx(std::sqrt(10.0)).epsilon(1e-12));
}

TEST_CASE("parse_lambda_grid: comma list with strict entries") {
    const auto grid = parse_lambda_grid("0.1,1,10");
    REQUIRE(grid.size() == 3);
    CHECK(grid[0] == 0.1);
    CHECK(grid[2] == 10.0);
    CHECK(parse_lambda_grid(",5,").size() == 1);
    CHECK_THROWS_AS(parse_lambda_grid("1x,2"), input_error);
    CHECK_THROWS_AS(parse_lambda_grid(""), input_error);
}

TEST_CASE("linear_fit: exact line recovery and input validation") {
    const std::vector<double> xs{1.0, 2.0, 3.0, 4.0};
    std::vector<double> ys;
    for (double x : xs) ys.push_back(2.0 * x + 1.0);
    const auto fit = linear_fit(xs, ys);
    CHECK(fit.slope == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(fit.intercept == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(linear_fit({1.0}, {2.0}), input_error);
    CHECK_THROWS_AS(linear_fit({2.0, 2.0}, {1.0, 3.0}), input_error);
}

TEST_CASE("instance_config_from_json: kinds, defaults, and rejects") {
    const json j{{"d", 3},
                 {"n", 5},
                 {"singular_values", {2.0, 1.0}},
                 {"theta", {{"kind", "coefficients"}, {"coefficients", {1.0, -2.0}}}},
                 {"gamma", 0.5},
                 {"seed", 7},
                 {"basis", "random_orthonormal"}};
    const auto c = instance_config_from_json(j);
    CHECK(c.d == 3);
    CHECK(c.n == 5);
    CHECK(c.singular_values.size() == 2);
    CHECK(c.theta.kind == ThetaSpec::Kind::Coefficients);
    CHECK(c.theta.coefficients(1) == -2.0);
    CHECK(c.gamma == 0.5);
    CHECK(c.seed == 7);
    CHECK(c.basis == BasisKind::RandomOrthonormal);

    const auto inst = build_instance(c);
    CHECK(inst.rank() == 2);
    CHECK(inst.n() == 5);
    CHECK(inst.gamma2 == doctest::Approx(0.25));

    // Defaults: u1 theta, identity basis, n = d.
    const json minimal{{"singular_values", {1.0, 0.5}}};
    const auto m = instance_config_from_json(minimal);
    CHECK(m.theta.kind == ThetaSpec::Kind::U1);
    CHECK(m.basis == BasisKind::Identity);
    CHECK(m.n == m.d);

    json bad_kind = j;
    bad_kind["theta"] = json{{"kind", "mystery"}};
    CHECK_THROWS_AS(instance_config_from_json(bad_kind), input_error);
    json bad_basis = j;
    bad_basis["basis"] = "hadamard";
    CHECK_THROWS_AS(instance_config_from_json(bad_basis), input_error);
}

TEST_CASE("run_synth_sweep: the k = 0 curve is the ridge risk curve") {
    SweepConfig cfg;
    cfg.instance = reference_config();
    cfg.k_list = {0};
    const auto study = run_synth_sweep(cfg);
    const auto inst = build_instance(cfg.instance);
    REQUIRE(study.points.size() == sweep_lambda_grid(inst).size());
    for (const auto& pt : study.points) {
        const auto rep = ridge_risk(inst, pt.lambda);
        CHECK(pt.risk == doctest::Approx(rep.excess_risk).epsilon(1e-14));
        CHECK(pt.bias == doctest::Approx(rep.bias_part).epsilon(1e-12));
        CHECK(pt.variance == doctest::Approx(rep.variance_part).epsilon(1e-12));
        CHECK(!pt.meets_lower_bound);
    }
}

TEST_CASE("run_synth_sweep: distinct spectrum reaches the bound at full depth") {
    SweepConfig cfg;
    cfg.instance = reference_config();
    const auto study = run_synth_sweep(cfg);

    CHECK(study.lower_bound == doctest::Approx(1.0 / 260.0).epsilon(1e-12));
    CHECK(study.dominance_violations == 0);

    // Four steps suffice for four distinct directions, at every grid lambda.
    for (const auto& pt : study.points)
        if (pt.k == 4) CHECK(pt.meets_lower_bound);

    // Deeper recursions never lose to shallower ones.
    REQUIRE(study.min_risk_per_k.size() == 5);
    for (std::size_t i = 1; i < study.min_risk_per_k.size(); ++i)
        CHECK(study.min_risk_per_k[i].second <=
              study.min_risk_per_k[i - 1].second + 1e-12);

    // Deterministic rerun gives bitwise-identical risks.
    const auto again = run_synth_sweep(cfg);
    REQUIRE(again.points.size() == study.points.size());
    for (std::size_t i = 0; i < study.points.size(); ++i)
        CHECK(again.points[i].risk == study.points[i].risk);
}

TEST_CASE("run_synth_sweep: tied spectrum stalls strictly above the bound") {
    SweepConfig cfg;
    cfg.instance = tied_config();
    const auto study = run_synth_sweep(cfg);
    CHECK(study.dominance_violations == 0);

    double min_k4 = std::numeric_limits<double>::infinity();
    for (const auto& [k, risk] : study.min_risk_per_k)
        if (k == 4) min_k4 = risk;
    // Three distinct singular values cap what any recursion depth can do:
    // the four-step minimum sits at the three-group optimum, well above the
    // per-direction bound.
    CHECK(min_k4 == doctest::Approx(1.0 / 132.0).epsilon(1e-6));
    CHECK(min_k4 > 1.0 / 260.0 + 1e-4);
}

TEST_CASE("run_separation: ratio rows are internally consistent") {
    SeparationConfig cfg;
    cfg.d = 10;
    cfg.n = 10;
    cfg.r_list = {1, 2, 5};
    const auto study = run_separation(cfg);
    REQUIRE(study.rows.size() == 3);
    for (const auto& row : study.rows) {
        CHECK(row.lower_bound <= row.sd_risk + 1e-12);
        CHECK(row.sd_risk <= row.ridge_risk + 1e-12);
        CHECK(row.ratio == doctest::Approx(row.ridge_risk / row.sd_risk));
        CHECK(row.ratio >= 1.0 - 1e-9);
    }
    // A single direction is fully shrinkable by ridge alone.
    CHECK(study.rows.front().ratio == doctest::Approx(1.0).epsilon(1e-6));

    SeparationConfig bad = cfg;
    bad.r_list = {};
    CHECK_THROWS_AS(run_separation(bad), input_error);
    bad.r_list = {20};
    CHECK_THROWS_AS(run_separation(bad), input_error);
}

TEST_CASE("run_gap_study: parameters blow up as the spectrum collapses") {
    GapConfig cfg;
    cfg.epsilons = {0.2, 0.1};
    cfg.k_list = {1, 2};
    const auto cells = run_gap_study(cfg);
    REQUIRE(cells.size() == 4);

    for (Eigen::Index k : cfg.k_list) {
        double prev = -1.0;
        for (const auto& cell : cells)
            if (cell.k == k) {
                CHECK(cell.quadratic_condition >= 1.0);
                CHECK(cell.max_abs_xi >= prev);  // epsilons are listed decreasing
                prev = cell.max_abs_xi;
            }
    }
    for (const auto& cell : cells)
        if (cell.k == 1 && cell.xi)
            CHECK((*cell.xi)(0) == doctest::Approx(cell.xibar(0)).epsilon(1e-12));

    GapConfig bad;
    bad.epsilons = {0.4};  // (d - 1) eps >= 1 collapses a singular value to <= 0
    CHECK_THROWS_AS(run_gap_study(bad), input_error);
    bad = GapConfig{};
    bad.lambda = 0.0;
    CHECK_THROWS_AS(run_gap_study(bad), input_error);
}

TEST_CASE("cmd_synth_sweep: hashed, seeded, and reproducible outputs") {
    const json config{
        {"instance",
         {{"d", 4},
          {"n", 4},
          {"singular_values", {1.0, 0.5, 1.0 / 3.0, 0.25}},
          {"theta", {{"kind", "u1"}, {"norm", 1.0}}},
          {"gamma", 0.125},
          {"seed", 1}}},
        {"k_list", {0, 1, 2}}};

    TempDir a("sdreg_sweep_a");
    TempDir b("sdreg_sweep_b");
    CHECK(cmd_synth_sweep(config, a.dir.string(), CliOverrides{}) == 0);
    CHECK(cmd_synth_sweep(config, b.dir.string(), CliOverrides{}) == 0);

    const std::string csv = slurp(a.path("synth_sweep_curves.csv"));
    CHECK(csv.rfind("# config_hash=", 0) == 0);
    CHECK(csv.find(" seed=1") != std::string::npos);
    CHECK(csv == slurp(b.path("synth_sweep_curves.csv")));

    const json summary = json::parse(slurp(a.path("synth_sweep_summary.json")));
    CHECK(summary == json::parse(slurp(b.path("synth_sweep_summary.json"))));
    CHECK(summary.at("dominance_violations").get<int>() == 0);
    CHECK(summary.at("min_risk_per_k").size() == 3);

    // The CSV header carries the same config hash as the summary.
    const std::string hash = summary.at("config_hash").get<std::string>();
    CHECK(csv.find("# config_hash=" + hash + " ") == 0);
}

TEST_CASE("cmd_risk_eval: closed-form report matches the library call") {
    const json config{{"instance",
                       {{"singular_values", {1.0, 0.5, 1.0 / 3.0, 0.25}},
                        {"theta", {{"kind", "u1"}, {"norm", 1.0}}},
                        {"gamma", 0.125}}},
                      {"lambda", 0.125},
                      {"xi", {0.3, -0.7}}};
    TempDir out("sdreg_risk_eval");
    CHECK(cmd_risk_eval(config, out.dir.string(), CliOverrides{}) == 0);

    const json result = json::parse(slurp(out.path("risk_eval.json")));
    CHECK(!result.contains("monte_carlo"));  // trials defaults to zero

    SynthInstanceConfig icfg = instance_config_from_json(config.at("instance"));
    const auto inst = build_instance(icfg);
    VecXd xi(2);
    xi << 0.3, -0.7;
    const auto closed = excess_risk_closed(inst, 0.125, xi_to_xibar(xi));
    CHECK(result.at("closed").at("excess_risk").get<double>() ==
          doctest::Approx(closed.excess_risk).epsilon(1e-14));
    const VecXd xibar = vec_from_json(result.at("xibar"));
    CHECK((xibar - xi_to_xibar(xi).value).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("cmd_real_data: full pipeline on a small file") {
    std::string body = "a,b,y\n";
    for (int i = 0; i < 80; ++i) {
        const double av = double(i);
        const double bv = double((i * i) % 7);
        const double yv = 2.0 * av - bv + 0.1 * std::sin(double(i));
        body += std::to_string(av) + "," + std::to_string(bv) + "," +
                std::to_string(yv) + "\n";
    }
    TempDir data_dir("sdreg_real_data_csv");
    const std::string csv_path = data_dir.path("toy.csv");
    {
        std::ofstream out(csv_path, std::ios::binary);
        out << body;
    }

    const json config{{"name", "toy"},
                      {"csv_path", csv_path},
                      {"csv", {{"features", {"a", "b"}}, {"target", "y"}}},
                      {"k_list", {0, 1}},
                      {"lambda_grid", {0.1, 1.0}}};

    TempDir out_a("sdreg_real_a");
    TempDir out_b("sdreg_real_b");
    CHECK(cmd_real_data(config, out_a.dir.string(), CliOverrides{}) == 0);
    CHECK(cmd_real_data(config, out_b.dir.string(), CliOverrides{}) == 0);

    const json table = json::parse(slurp(out_a.path("toy_table.json")));
    REQUIRE(table.at("rows").size() == 2);
    for (const auto& row : table.at("rows")) {
        CHECK(row.at("test_mse").get<double>() >= 0.0);
        CHECK(row.at("lambda").get<double>() > 0.0);
    }
    CHECK(table.at("rows")[0].at("k").get<int>() == 0);
    CHECK(table.at("rows")[1].at("k").get<int>() == 1);

    const json manifest = json::parse(slurp(out_a.path("toy_manifest.json")));
    CHECK(manifest.at("split_sizes").at("train").get<int>() == 24);
    CHECK(manifest.at("split_sizes").at("validation").get<int>() == 24);
    CHECK(manifest.at("split_sizes").at("test").get<int>() == 32);
    CHECK(manifest.at("split_mode").get<std::string>() == "sequential");
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a_file(csv_path)));
    CHECK(manifest.at("checksum_fnv1a").get<std::string>() == std::string(buf));

    CHECK(slurp(out_a.path("toy_table.json")) == slurp(out_b.path("toy_table.json")));
    CHECK(slurp(out_a.path("toy_val_curves.csv")) == slurp(out_b.path("toy_val_curves.csv")));
}
