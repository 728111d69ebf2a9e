#include "sdreg/data.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace sdreg {

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream stream(line);
    while (std::getline(stream, field, delim)) fields.push_back(field);
    if (!line.empty() && line.back() == delim) fields.emplace_back();
    return fields;
}

void strip_cr(std::string& s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.pop_back();
}

void strip_bom(std::string& s) {
    if (s.size() >= 3 && s[0] == '\xEF' && s[1] == '\xBB' && s[2] == '\xBF') s.erase(0, 3);
}

// Whitespace-trim plus removal of one layer of surrounding double quotes
// (some dataset exports quote every field).
std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t");
    std::string out = s.substr(b, e - b + 1);
    if (out.size() >= 2 && out.front() == '"' && out.back() == '"')
        out = out.substr(1, out.size() - 2);
    return out;
}

char detect_delimiter(const std::string& first_line) {
    const char candidates[] = {',', ';', '\t'};
    char best = ',';
    std::size_t best_count = 0;
    for (char c : candidates) {
        const auto count = static_cast<std::size_t>(
            std::count(first_line.begin(), first_line.end(), c));
        if (count > best_count) {
            best_count = count;
            best = c;
        }
    }
    return best;
}

// Decimal-comma files (semicolon delimited) are normalized by swapping the
// comma for a period before parsing, so "2,6" reads bit-exactly as 2.6.
bool parse_number(std::string field, char delim, double& out) {
    field = trim(field);
    if (field.empty()) return false;
    if (delim != ',')
        std::replace(field.begin(), field.end(), ',', '.');
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (end != field.c_str() + field.size() || errno == ERANGE) return false;
    out = v;
    return true;
}

// Hour bucket of a timestamp: the text up to the first ':' covers
// "YYYY-MM-DD HH:MM:SS"-style stamps; stamps without minutes fall back to
// the whole field.
std::string hour_key(const std::string& stamp) {
    const std::size_t colon = stamp.find(':');
    return colon == std::string::npos ? stamp : stamp.substr(0, colon);
}

DataSplit take_columns(const MatXd& x, const VecXd& y, const std::vector<Eigen::Index>& idx,
                       std::size_t begin, std::size_t count) {
    DataSplit out;
    out.x.resize(x.rows(), static_cast<Eigen::Index>(count));
    out.y.resize(static_cast<Eigen::Index>(count));
    for (std::size_t i = 0; i < count; ++i) {
        out.x.col(static_cast<Eigen::Index>(i)) = x.col(idx[begin + i]);
        out.y(static_cast<Eigen::Index>(i)) = y(idx[begin + i]);
    }
    return out;
}

}  // namespace

RawTable load_csv(const std::string& path, const CsvOptions& options) {
    if (options.feature_columns.empty()) throw input_error("load_csv: no feature columns");
    if (options.target_column.empty()) throw input_error("load_csv: no target column");
    if (!options.has_header && options.column_names.empty())
        throw input_error("load_csv: headerless file needs explicit column names");

    std::ifstream file(path);
    if (!file) throw data_error("load_csv: cannot open " + path);

    std::string line;
    if (!std::getline(file, line)) throw data_error("load_csv: empty file " + path);
    strip_bom(line);
    strip_cr(line);

    const char delim = options.delimiter != '\0' ? options.delimiter : detect_delimiter(line);

    std::vector<std::string> columns;
    bool first_line_is_data = false;
    if (options.has_header) {
        for (auto& name : split_line(line, delim)) columns.push_back(trim(name));
    } else {
        columns = options.column_names;
        first_line_is_data = true;
    }

    auto column_index = [&](const std::string& name) -> std::size_t {
        const auto it = std::find(columns.begin(), columns.end(), name);
        if (it == columns.end())
            throw data_error("load_csv: column '" + name + "' absent from " + path);
        return static_cast<std::size_t>(it - columns.begin());
    };

    std::vector<std::size_t> feature_idx;
    for (const auto& name : options.feature_columns) feature_idx.push_back(column_index(name));
    const std::size_t target_idx = column_index(options.target_column);
    std::optional<std::size_t> hour_idx;
    if (options.hour_key_column) hour_idx = column_index(*options.hour_key_column);

    const auto d = static_cast<Eigen::Index>(feature_idx.size());
    std::vector<double> xs;
    std::vector<double> ys;

    RawTable table;
    table.feature_names = options.feature_columns;
    table.target_name = options.target_column;
    table.source_path = path;
    table.delimiter = delim;

    std::string last_hour;
    bool have_hour = false;
    bool pending = first_line_is_data;
    while (pending || std::getline(file, line)) {
        if (!pending) {
            strip_cr(line);
        }
        pending = false;
        auto fields = split_line(line, delim);
        // Lines with no content at all (common as trailing filler) are not
        // records.
        const bool blank = std::all_of(fields.begin(), fields.end(),
                                       [](const std::string& f) { return trim(f).empty(); });
        if (fields.empty() || blank) continue;

        if (hour_idx && *hour_idx < fields.size()) {
            const std::string key = hour_key(trim(fields[*hour_idx]));
            if (have_hour && key == last_hour) {
                ++table.rows_downsampled;
                continue;
            }
            last_hour = key;
            have_hour = true;
        }
        ++table.rows_read;

        bool ok = fields.size() >= columns.size();
        double target = 0;
        std::vector<double> row(static_cast<std::size_t>(d));
        if (ok) ok = parse_number(fields[target_idx], delim, target);
        if (ok && options.sentinel && target == *options.sentinel) ok = false;
        for (std::size_t j = 0; ok && j < feature_idx.size(); ++j) {
            ok = parse_number(fields[feature_idx[j]], delim, row[j]);
            if (ok && options.sentinel && row[j] == *options.sentinel) ok = false;
        }
        if (!ok) {
            ++table.rows_dropped;
            continue;
        }
        xs.insert(xs.end(), row.begin(), row.end());
        ys.push_back(target);
    }

    const auto n = static_cast<Eigen::Index>(ys.size());
    table.x.resize(d, n);
    table.y.resize(n);
    for (Eigen::Index c = 0; c < n; ++c) {
        table.y(c) = ys[static_cast<std::size_t>(c)];
        for (Eigen::Index rr = 0; rr < d; ++rr)
            table.x(rr, c) = xs[static_cast<std::size_t>(c * d + rr)];
    }
    return table;
}

RegressionDataset split_sequential(const RawTable& table, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0) || !(spec.validation_fraction > 0) ||
        !(spec.train_fraction + spec.validation_fraction < 1))
        throw input_error("split_sequential: fractions must be positive and sum below 1");
    const auto n = static_cast<std::size_t>(table.y.size());
    const auto n_train = static_cast<std::size_t>(double(n) * spec.train_fraction);
    const auto n_val = static_cast<std::size_t>(double(n) * spec.validation_fraction);
    const std::size_t n_test = n - n_train - n_val;
    if (n_train == 0 || n_val == 0 || n_test == 0)
        throw input_error("split_sequential: a split would be empty");

    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), Eigen::Index(0));
    if (spec.shuffle) {
        std::mt19937_64 rng(spec.seed);
        std::shuffle(order.begin(), order.end(), rng);
    }

    RegressionDataset ds;
    ds.feature_names = table.feature_names;
    ds.target_name = table.target_name;
    ds.train = take_columns(table.x, table.y, order, 0, n_train);
    ds.validation = take_columns(table.x, table.y, order, n_train, n_val);
    ds.test = take_columns(table.x, table.y, order, n_train + n_val, n_test);
    ds.source_path = table.source_path;
    ds.rows_read = table.rows_read;
    ds.rows_dropped = table.rows_dropped;
    ds.rows_downsampled = table.rows_downsampled;
    ds.split_mode = spec.shuffle ? "shuffle" : "sequential";
    ds.seed = spec.seed;
    return ds;
}

RegressionDataset whiten(const RegressionDataset& dataset) {
    if (dataset.whitening.applied) throw input_error("whiten: dataset already whitened");
    const MatXd& xt = dataset.train.x;
    const VecXd& yt = dataset.train.y;
    const auto n = static_cast<double>(xt.cols());
    if (n == 0) throw input_error("whiten: empty train split");

    const VecXd mean = xt.rowwise().mean();
    VecXd stddev(xt.rows());
    for (Eigen::Index j = 0; j < xt.rows(); ++j)
        stddev(j) = std::sqrt((xt.row(j).array() - mean(j)).square().sum() / n);

    RegressionDataset out = dataset;
    out.whitening.kept_columns.clear();
    out.dropped_features.clear();
    for (Eigen::Index j = 0; j < xt.rows(); ++j) {
        if (stddev(j) < 1e-12)
            out.dropped_features.push_back(dataset.feature_names[static_cast<std::size_t>(j)]);
        else
            out.whitening.kept_columns.push_back(j);
    }

    const auto kept = static_cast<Eigen::Index>(out.whitening.kept_columns.size());
    out.whitening.feature_mean.resize(kept);
    out.whitening.feature_std.resize(kept);
    out.feature_names.clear();
    for (Eigen::Index i = 0; i < kept; ++i) {
        const Eigen::Index j = out.whitening.kept_columns[static_cast<std::size_t>(i)];
        out.whitening.feature_mean(i) = mean(j);
        out.whitening.feature_std(i) = stddev(j);
        out.feature_names.push_back(dataset.feature_names[static_cast<std::size_t>(j)]);
    }
    out.whitening.target_mean = yt.mean();
    out.whitening.target_std = std::sqrt((yt.array() - out.whitening.target_mean).square().sum() /
                                         n);
    if (out.whitening.target_std < 1e-12) throw data_error("whiten: constant target");
    out.whitening.applied = true;

    auto transform = [&](const DataSplit& split) {
        DataSplit w;
        w.x.resize(kept, split.x.cols());
        for (Eigen::Index i = 0; i < kept; ++i) {
            const Eigen::Index j = out.whitening.kept_columns[static_cast<std::size_t>(i)];
            w.x.row(i) = (split.x.row(j).array() - out.whitening.feature_mean(i)) /
                         out.whitening.feature_std(i);
        }
        w.y = (split.y.array() - out.whitening.target_mean) / out.whitening.target_std;
        return w;
    };
    out.train = transform(dataset.train);
    out.validation = transform(dataset.validation);
    out.test = transform(dataset.test);
    return out;
}

DataSplit unwhiten(const DataSplit& split, const Whitening& whitening) {
    if (!whitening.applied) throw input_error("unwhiten: whitening was never applied");
    DataSplit out;
    out.x.resize(split.x.rows(), split.x.cols());
    for (Eigen::Index i = 0; i < split.x.rows(); ++i)
        out.x.row(i) = split.x.row(i).array() * whitening.feature_std(i) +
                       whitening.feature_mean(i);
    out.y = split.y.array() * whitening.target_std + whitening.target_mean;
    return out;
}

double mse(const VecXd& theta, const DataSplit& split) {
    if (theta.size() != split.x.rows()) throw input_error("mse: dimension mismatch");
    if (split.y.size() == 0) throw input_error("mse: empty split");
    return (split.x.transpose() * theta - split.y).squaredNorm() /
           static_cast<double>(split.y.size());
}

std::uint64_t fnv1a_file(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw data_error("fnv1a_file: cannot open " + path);
    std::uint64_t h = 14695981039346656037ull;
    char buf[1 << 15];
    while (file.read(buf, sizeof buf) || file.gcount() > 0) {
        const std::streamsize got = file.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    }
    return h;
}

}  // namespace sdreg
