#pragma once

#include "sdreg/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sdreg {

struct CsvOptions {
    std::vector<std::string> feature_columns;
    std::string target_column;
    std::optional<double> sentinel;            // exact value treated as missing
    char delimiter = '\0';                     // '\0': auto-detect among , ; tab
    bool has_header = true;
    std::vector<std::string> column_names;     // required when has_header is false
    std::optional<std::string> hour_key_column;  // keep first record per hour
};

struct RawTable {
    std::vector<std::string> feature_names;
    std::string target_name;
    MatXd x;  // d x n, one column per record
    VecXd y;  // n
    std::string source_path;
    std::size_t rows_read = 0;        // records seen (post-downsampling)
    std::size_t rows_dropped = 0;     // missing / sentinel / unparseable
    std::size_t rows_downsampled = 0; // removed by hourly downsampling
    char delimiter = ',';
};

/// Parse a delimited text file into a feature matrix and target vector.
/// Handles semicolon files with decimal commas; rows containing a missing,
/// sentinel, or unparseable value in any selected column are dropped and
/// counted. Absent columns raise data_error.
RawTable load_csv(const std::string& path, const CsvOptions& options);

struct DataSplit {
    MatXd x;  // d x n
    VecXd y;  // n
};

struct SplitSpec {
    double train_fraction = 0.3;
    double validation_fraction = 0.3;  // remainder goes to test
    bool shuffle = false;
    std::uint64_t seed = 0;            // consumed only in shuffle mode
};

struct Whitening {
    VecXd feature_mean;
    VecXd feature_std;   // population convention (divide by n)
    double target_mean = 0;
    double target_std = 1;
    std::vector<Eigen::Index> kept_columns;  // original feature indices kept
    bool applied = false;
};

struct RegressionDataset {
    std::vector<std::string> feature_names;  // post-drop when whitened
    std::string target_name;
    DataSplit train;
    DataSplit validation;
    DataSplit test;
    Whitening whitening;

    std::string source_path;
    std::size_t rows_read = 0;
    std::size_t rows_dropped = 0;
    std::size_t rows_downsampled = 0;
    std::string split_mode;  // "sequential" or "shuffle"
    std::uint64_t seed = 0;
    std::vector<std::string> dropped_features;  // near-constant train columns
};

/// Contiguous prefix/middle/suffix split in record order (floor sizes,
/// remainder to test); shuffle mode permutes records first with the seed.
RegressionDataset split_sequential(const RawTable& table, const SplitSpec& spec);

/// Whiten features and target of all three splits with train statistics;
/// train columns with std below 1e-12 are dropped and recorded.
RegressionDataset whiten(const RegressionDataset& dataset);

/// Undo the whitening of a split (kept columns only).
DataSplit unwhiten(const DataSplit& split, const Whitening& whitening);

double mse(const VecXd& theta, const DataSplit& split);

inline double mse(const EstimatorWeights& weights, const DataSplit& split) {
    return mse(weights.theta_hat, split);
}

/// FNV-1a checksum of a file's bytes, for dataset manifests.
std::uint64_t fnv1a_file(const std::string& path);

}  // namespace sdreg
