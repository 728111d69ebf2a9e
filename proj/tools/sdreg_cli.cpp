// Command-line driver for the self-distillation regression experiments.
//
// Subcommands: synth-sweep, separation, gap-study, real-data, tune,
// risk-eval. Each takes a JSON config plus optional overriding flags and
// writes plot-ready CSV / JSON under --out-dir.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 solver
// infeasibility.

#include "sdreg/experiments.hpp"
#include "sdreg/types.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <functional>
#include <iostream>
#include <string>

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitSolver = 4;

sdreg::json load_config(const std::string& path) {
    std::ifstream file(path);
    if (!file) throw sdreg::input_error("cannot open config " + path);
    return sdreg::json::parse(file);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-step self-distillation for linear regression"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    std::uint64_t trials = 0;
    std::string lambda_grid_text;
    long long k_flag = -1;

    using Cmd = std::function<int(const sdreg::json&, const std::string&,
                                  const sdreg::CliOverrides&)>;
    struct Entry {
        const char* name;
        const char* help;
        Cmd run;
    };
    const Entry entries[] = {
        {"synth-sweep", "Risk-vs-lambda curves per step count on a synthetic instance",
         sdreg::cmd_synth_sweep},
        {"separation", "Optimal-ridge to r-step risk ratio across ranks",
         sdreg::cmd_separation},
        {"gap-study", "Optimal parameters against a shrinking singular gap",
         sdreg::cmd_gap_study},
        {"real-data", "Three-estimator protocol on a prepared CSV dataset",
         sdreg::cmd_real_data},
        {"tune", "Tune (lambda, xi) for one step count on a CSV dataset",
         sdreg::cmd_tune},
        {"risk-eval", "Closed-form and Monte-Carlo risk of one parameter point",
         sdreg::cmd_risk_eval},
    };

    Cmd selected;
    for (const auto& entry : entries) {
        CLI::App* sub = app.add_subcommand(entry.name, entry.help);
        sub->add_option("--config", config_path, "JSON config file")->required();
        sub->add_option("--out-dir", out_dir, "output directory (default: out)");
        sub->add_option("--seed", seed, "override the config seed");
        sub->add_option("--trials", trials, "override Monte-Carlo trial count");
        sub->add_option("--lambda-grid", lambda_grid_text,
                        "override lambda grid (comma-separated)");
        sub->add_option("--k", k_flag, "override the step count / k list");
        sub->callback([&selected, &entry] { selected = entry.run; });
    }

    CLI11_PARSE(app, argc, argv);

    try {
        sdreg::CliOverrides ov;
        for (const auto& entry : entries) {
            CLI::App* sub = app.get_subcommand(entry.name);
            if (!sub->parsed()) continue;
            if (sub->count("--seed") > 0) ov.seed = seed;
            if (sub->count("--trials") > 0) ov.trials = trials;
            if (sub->count("--lambda-grid") > 0)
                ov.lambda_grid = sdreg::parse_lambda_grid(lambda_grid_text);
            if (sub->count("--k") > 0) {
                if (k_flag < 0) throw sdreg::input_error("--k must be >= 0");
                ov.k = static_cast<Eigen::Index>(k_flag);
            }
        }
        const sdreg::json config = load_config(config_path);
        return selected(config, out_dir, ov);
    } catch (const sdreg::data_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const sdreg::degenerate_parametrization_error& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return kExitSolver;
    } catch (const sdreg::input_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const sdreg::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
