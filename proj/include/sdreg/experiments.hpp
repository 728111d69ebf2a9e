#pragma once

#include "sdreg/data.hpp"
#include "sdreg/json_io.hpp"
#include "sdreg/spectral.hpp"
#include "sdreg/tuner.hpp"
#include "sdreg/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sdreg {

/// Penalty grid with a factor-sqrt(10) step: 10^{i/2}, i = -8..8.
std::vector<double> default_lambda_grid();

/// Parse a comma-separated list of grid values (CLI flag form).
std::vector<double> parse_lambda_grid(const std::string& text);

/// Least-squares line fit with coefficient of determination.
struct LinearFit {
    double slope = 0;
    double intercept = 0;
    double r_squared = 0;
};

LinearFit linear_fit(const std::vector<double>& xs, const std::vector<double>& ys);

/// Synthetic instance recipe as given in experiment configs.
struct SynthInstanceConfig {
    Eigen::Index d = 4;
    Eigen::Index n = 4;
    VecXd singular_values;
    ThetaSpec theta;
    double gamma = 0.125;
    std::uint64_t seed = 1;
    BasisKind basis = BasisKind::Identity;
};

SynthInstanceConfig instance_config_from_json(const json& j);
ProblemInstance build_instance(const SynthInstanceConfig& config);

/// Risk-vs-lambda curves, one per step count, each at its per-lambda optimal
/// parameters.
struct SweepPoint {
    Eigen::Index k = 0;
    double lambda = 0;
    double risk = 0;
    double bias = 0;
    double variance = 0;
    bool meets_lower_bound = false;  // evaluated on the k = rank curve
    bool dominance_ok = true;        // vs the previous curve in k_list order
};

struct SweepStudy {
    std::vector<SweepPoint> points;
    double lower_bound = 0;
    std::vector<std::pair<Eigen::Index, double>> min_risk_per_k;
    int dominance_violations = 0;
};

struct SweepConfig {
    SynthInstanceConfig instance;
    std::vector<Eigen::Index> k_list{0, 1, 2, 3, 4};
    std::vector<double> lambda_grid;  // empty: spectrum-bracketing default
};

/// Sweep default: the sqrt(10) ladder bracketing the spectrum, from
/// s_r^2/sqrt(10) up to 10 s_1^2. Penalties far outside the spectrum scale
/// make the depth-r quadratic too ill conditioned to solve in double
/// precision, so the default keeps the whole grid inside the trustworthy
/// range; pass an explicit grid to override.
std::vector<double> sweep_lambda_grid(const ProblemInstanceT<double>& instance);

SweepStudy run_synth_sweep(const SweepConfig& config);

/// Optimal-ridge to r-step risk ratio across ranks (power-law spectra).
struct SeparationRow {
    Eigen::Index r = 0;
    double ridge_lambda = 0;
    double ridge_risk = 0;
    double sd_risk = 0;
    double lower_bound = 0;
    double ratio = 0;
};

struct SeparationStudy {
    std::vector<SeparationRow> rows;
    LinearFit ratio_fit;  // ratio as a function of r
};

struct SeparationConfig {
    Eigen::Index d = 100;
    Eigen::Index n = 100;
    double gamma = 0.1;
    double s_first = 1.0;
    double s_last = 0.8;
    double theta_norm = 1.0;
    std::vector<Eigen::Index> r_list;
    std::vector<double> lambda_grid;  // empty: default grid
    std::uint64_t seed = 1;
    BasisKind basis = BasisKind::Identity;
};

SeparationStudy run_separation(const SeparationConfig& config);

/// Optimal parameters against a shrinking singular gap at fixed lambda.
struct GapCell {
    double epsilon = 0;
    Eigen::Index k = 0;
    VecXd xibar;
    std::optional<VecXd> xi;  // absent when the xibar argmin has no xi form
    double max_abs_xi = 0;    // max |xi| (or |xibar| fallback when xi absent)
    double quadratic_condition = 0;
    std::string note;
};

struct GapConfig {
    std::vector<double> epsilons{0.2, 0.1, 0.05, 0.02, 0.01};
    std::vector<Eigen::Index> k_list{1, 2, 3};
    double lambda = 0.125;
    double gamma = 0.125;
    Eigen::Index d = 4;
    Eigen::Index n = 4;
    std::uint64_t seed = 1;
};

std::vector<GapCell> run_gap_study(const GapConfig& config);

/// Three-estimator protocol on a prepared real dataset.
struct RealDataRow {
    Eigen::Index k = 0;
    double lambda = 0;
    VecXd xibar;
    std::optional<VecXd> xi;
    double val_mse = 0;
    double test_mse = 0;
};

struct RealDataConfig {
    std::string name = "dataset";
    std::string csv_path;
    CsvOptions csv;
    SplitSpec split;
    std::vector<Eigen::Index> k_list{0, 1, 2};
    std::vector<double> lambda_grid;  // empty: default grid
};

struct RealDataStudy {
    std::vector<RealDataRow> rows;
    std::vector<TuneResult> tunes;  // aligned with rows; carries the curves
    RegressionDataset dataset;      // whitened; provenance included
};

RealDataConfig real_data_config_from_json(const json& j);
RealDataStudy run_real_data(const RealDataConfig& config);

/// Flag overrides applied on top of the JSON config.
struct CliOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> trials;
    std::optional<std::vector<double>> lambda_grid;
    std::optional<Eigen::Index> k;
};

/// Command entry points: parse config, run, write outputs under out_dir.
/// They throw input_error / data_error / degenerate_parametrization_error;
/// the CLI maps those to exit codes.
int cmd_synth_sweep(const json& config, const std::string& out_dir, const CliOverrides& ov);
int cmd_separation(const json& config, const std::string& out_dir, const CliOverrides& ov);
int cmd_gap_study(const json& config, const std::string& out_dir, const CliOverrides& ov);
int cmd_real_data(const json& config, const std::string& out_dir, const CliOverrides& ov);
int cmd_tune(const json& config, const std::string& out_dir, const CliOverrides& ov);
int cmd_risk_eval(const json& config, const std::string& out_dir, const CliOverrides& ov);

}  // namespace sdreg
