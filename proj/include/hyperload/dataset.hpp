#pragma once

// Telemetry tables, CSV ingestion, chronological splitting, scarcity slicing,
// sliding windows and the synthetic data-center generator.

#include "hyperload/autograd.hpp"
#include "hyperload/errors.hpp"
#include "hyperload/nn.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace hyperload {

/**
 * A timestamped multivariate table of T rows by M named columns, one of which
 * is the forecasting target. Rows are strictly increasing in time.
 *
 * `first_row` is the index of row 0 in the table this one was cut from, so
 * segments of a split can be checked for disjointness on source row indices.
 */
class SeriesTable {
public:
    SeriesTable() = default;

    SeriesTable(std::vector<std::int64_t> timestamps, std::vector<std::string> names, Matrix values,
                std::string target_name, std::size_t first_row = 0)
        : timestamps_(std::move(timestamps)), names_(std::move(names)), values_(std::move(values)),
          target_name_(std::move(target_name)), first_row_(first_row) {
        if (values_.rows() < 1) {
            throw EmptyDataError("SeriesTable: at least one row is required");
        }
        if (static_cast<Eigen::Index>(timestamps_.size()) != values_.rows()) {
            throw ShapeError("SeriesTable: timestamp count does not match row count");
        }
        if (static_cast<Eigen::Index>(names_.size()) != values_.cols()) {
            throw ShapeError("SeriesTable: column name count does not match column count");
        }
        for (std::size_t i = 1; i < timestamps_.size(); ++i) {
            if (timestamps_[i] <= timestamps_[i - 1]) {
                throw SchemaError("SeriesTable: timestamps must be strictly increasing (row " + std::to_string(i) +
                                  ")");
            }
        }
        target_index_ = index_of(target_name_);
    }

    std::size_t rows() const { return timestamps_.size(); }
    std::size_t cols() const { return names_.size(); }
    const std::vector<std::int64_t>& timestamps() const { return timestamps_; }
    const std::vector<std::string>& names() const { return names_; }
    const Matrix& values() const { return values_; }
    const std::string& target_name() const { return target_name_; }
    std::size_t target_index() const { return target_index_; }
    std::size_t first_row() const { return first_row_; }

    /// Number of input rows discarded during ingestion (missing or non-numeric cells).
    std::size_t dropped_rows() const { return dropped_rows_; }
    void set_dropped_rows(std::size_t n) { dropped_rows_ = n; }

    std::size_t index_of(const std::string& name) const {
        auto it = std::find(names_.begin(), names_.end(), name);
        if (it == names_.end()) {
            throw SchemaError("column '" + name + "' not found");
        }
        return static_cast<std::size_t>(it - names_.begin());
    }

    /// Contiguous rows [begin, begin + count).
    SeriesTable slice(std::size_t begin, std::size_t count) const {
        if (begin + count > rows()) {
            throw IndexError("SeriesTable::slice: rows [" + std::to_string(begin) + ", " +
                             std::to_string(begin + count) + ") exceed " + std::to_string(rows()));
        }
        std::vector<std::int64_t> ts(timestamps_.begin() + static_cast<std::ptrdiff_t>(begin),
                                     timestamps_.begin() + static_cast<std::ptrdiff_t>(begin + count));
        Matrix v = values_.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
        return SeriesTable(std::move(ts), names_, std::move(v), target_name_, first_row_ + begin);
    }

    friend bool operator==(const SeriesTable& a, const SeriesTable& b) {
        return a.timestamps_ == b.timestamps_ && a.names_ == b.names_ && a.target_name_ == b.target_name_ &&
               a.first_row_ == b.first_row_ && a.values_.rows() == b.values_.rows() &&
               a.values_.cols() == b.values_.cols() && a.values_ == b.values_;
    }

private:
    std::vector<std::int64_t> timestamps_;
    std::vector<std::string> names_;
    Matrix values_;
    std::string target_name_;
    std::size_t target_index_ = 0;
    std::size_t first_row_ = 0;
    std::size_t dropped_rows_ = 0;
};

// ---------------------------------------------------------------------------
// CSV ingestion

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) {
        s.remove_suffix(1);
    }
    return s;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    return out;
}

inline std::optional<double> parse_double(std::string_view s) {
    if (s.empty()) {
        return std::nullopt;
    }
    if (s.front() == '+') {
        s.remove_prefix(1);
    }
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

inline bool looks_numeric(std::string_view s) { return parse_double(s).has_value(); }

inline std::optional<int> parse_fixed_int(std::string_view s, std::size_t pos, std::size_t len) {
    if (pos + len > s.size()) {
        return std::nullopt;
    }
    int v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
        if (s[i] < '0' || s[i] > '9') {
            return std::nullopt;
        }
        v = v * 10 + (s[i] - '0');
    }
    return v;
}

/// ISO-8601 "YYYY-MM-DD[T| ]HH:MM[:SS[.fff]][Z]" to epoch seconds (UTC, no zone arithmetic).
inline std::optional<std::int64_t> parse_iso8601(std::string_view s) {
    using namespace std::chrono;
    const auto y = parse_fixed_int(s, 0, 4);
    const auto mo = parse_fixed_int(s, 5, 2);
    const auto d = parse_fixed_int(s, 8, 2);
    if (!y || !mo || !d || s.size() < 10 || s[4] != '-' || s[7] != '-') {
        return std::nullopt;
    }
    int hh = 0, mm = 0, ss = 0;
    if (s.size() > 10) {
        if (s[10] != 'T' && s[10] != ' ') {
            return std::nullopt;
        }
        const auto h = parse_fixed_int(s, 11, 2);
        const auto m = parse_fixed_int(s, 14, 2);
        if (!h || !m || s.size() < 16 || s[13] != ':') {
            return std::nullopt;
        }
        hh = *h;
        mm = *m;
        std::size_t pos = 16;
        if (s.size() > 16 && s[16] == ':') {
            const auto sec = parse_fixed_int(s, 17, 2);
            if (!sec) {
                return std::nullopt;
            }
            ss = *sec;
            pos = 19;
            if (pos < s.size() && s[pos] == '.') {
                ++pos;
                while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
                    ++pos;
                }
            }
        }
        if (pos < s.size() && s[pos] == 'Z') {
            ++pos;
        }
        if (pos != s.size()) {
            return std::nullopt;
        }
    }
    const year_month_day ymd{year{*y}, month{static_cast<unsigned>(*mo)}, day{static_cast<unsigned>(*d)}};
    if (!ymd.ok() || hh > 23 || mm > 59 || ss > 60) {
        return std::nullopt;
    }
    const auto days = sys_days{ymd}.time_since_epoch().count();
    return static_cast<std::int64_t>(days) * 86400 + hh * 3600 + mm * 60 + ss;
}

inline std::optional<std::int64_t> parse_epoch(std::string_view s) {
    const auto v = parse_double(s);
    if (!v) {
        return std::nullopt;
    }
    return static_cast<std::int64_t>(std::llround(*v));
}

} // namespace detail

inline std::string format_iso8601(std::int64_t epoch_seconds) {
    using namespace std::chrono;
    std::int64_t days = epoch_seconds / 86400;
    std::int64_t rem = epoch_seconds % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    const year_month_day ymd{sys_days{std::chrono::days{days}}};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(rem / 3600),
                  static_cast<int>((rem / 60) % 60), static_cast<int>(rem % 60));
    return buf;
}

/**
 * Reads a telemetry CSV: a header row, a `timestamp` column (ISO-8601 or epoch
 * seconds, detected from the first data row), and numeric feature columns.
 * Rows with a blank or non-numeric feature, an unparseable timestamp, or a
 * duplicate timestamp are dropped and counted in dropped_rows(). The result is
 * sorted by time.
 */
inline SeriesTable load_dcdata(const std::string& path, const std::string& target_name) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw EmptyDataError("'" + path + "' is empty");
    }
    const auto header = detail::split_csv_line(line);
    std::optional<std::size_t> ts_col;
    std::vector<std::string> names;
    std::vector<std::size_t> feature_cols;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "timestamp") {
            if (ts_col) {
                throw SchemaError("'" + path + "': more than one timestamp column");
            }
            ts_col = i;
        } else {
            if (header[i].empty()) {
                throw SchemaError("'" + path + "': header column " + std::to_string(i) + " is unnamed");
            }
            names.emplace_back(header[i]);
            feature_cols.push_back(i);
        }
    }
    if (!ts_col) {
        throw SchemaError("'" + path + "': no 'timestamp' column in header");
    }
    if (std::find(names.begin(), names.end(), target_name) == names.end()) {
        throw SchemaError("'" + path + "': target column '" + target_name + "' not found");
    }

    struct Row {
        std::int64_t ts;
        std::vector<double> values;
    };
    std::vector<Row> rows;
    std::size_t dropped = 0;
    std::optional<bool> iso;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) {
            continue;
        }
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size()) {
            ++dropped;
            continue;
        }
        if (!iso) {
            iso = !detail::looks_numeric(cells[*ts_col]);
        }
        const auto ts = *iso ? detail::parse_iso8601(cells[*ts_col]) : detail::parse_epoch(cells[*ts_col]);
        if (!ts) {
            ++dropped;
            continue;
        }
        Row r{*ts, {}};
        r.values.reserve(feature_cols.size());
        bool ok = true;
        for (std::size_t c : feature_cols) {
            const auto v = detail::parse_double(cells[c]);
            if (!v) {
                ok = false;
                break;
            }
            r.values.push_back(*v);
        }
        if (!ok) {
            ++dropped;
            continue;
        }
        rows.push_back(std::move(r));
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.ts < b.ts; });
    std::vector<Row> unique;
    unique.reserve(rows.size());
    for (auto& r : rows) {
        if (!unique.empty() && unique.back().ts == r.ts) {
            ++dropped;
            continue;
        }
        unique.push_back(std::move(r));
    }
    if (unique.empty()) {
        throw EmptyDataError("'" + path + "': no usable rows (" + std::to_string(dropped) + " dropped)");
    }
    std::vector<std::int64_t> ts(unique.size());
    Matrix values(static_cast<Eigen::Index>(unique.size()), static_cast<Eigen::Index>(names.size()));
    for (std::size_t i = 0; i < unique.size(); ++i) {
        ts[i] = unique[i].ts;
        for (std::size_t c = 0; c < names.size(); ++c) {
            values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = unique[i].values[c];
        }
    }
    SeriesTable table(std::move(ts), std::move(names), std::move(values), target_name);
    table.set_dropped_rows(dropped);
    return table;
}

/// Writes a table in the format load_dcdata() reads, with ISO-8601 timestamps.
inline void save_csv(const SeriesTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write '" + path + "'");
    }
    out << "timestamp";
    for (const auto& n : table.names()) {
        out << ',' << n;
    }
    out << '\n';
    char buf[64];
    for (std::size_t i = 0; i < table.rows(); ++i) {
        out << format_iso8601(table.timestamps()[i]);
        for (std::size_t c = 0; c < table.cols(); ++c) {
            std::snprintf(buf, sizeof buf, ",%.17g",
                          table.values()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)));
            out << buf;
        }
        out << '\n';
    }
    if (!out) {
        throw IoError("failed writing '" + path + "'");
    }
}

// ---------------------------------------------------------------------------
// Splits and scarcity

struct SplitSpec {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;
    double scarcity_fraction = 1.0;

    void validate() const {
        if (train < 0 || val < 0 || test < 0) {
            throw ConfigError("split ratios must be non-negative");
        }
        if (std::abs(train + val + test - 1.0) > 1e-9) {
            throw ConfigError("split ratios must sum to 1");
        }
        if (!(scarcity_fraction > 0.0 && scarcity_fraction <= 1.0)) {
            throw ConfigError("scarcity fraction must lie in (0, 1]");
        }
    }
};

/// Train, validation and test segments. Validation or test may be absent
/// when their ratio floors to zero rows.
struct Splits {
    SeriesTable train;
    std::optional<SeriesTable> val;
    std::optional<SeriesTable> test;
};

/// floor(train*T), floor(val*T), remainder; segments are contiguous and ordered.
inline Splits chronological_split(const SeriesTable& table, const SplitSpec& spec) {
    spec.validate();
    const std::size_t t = table.rows();
    if (t < 10) {
        throw InsufficientDataError("chronological_split needs at least 10 rows, got " + std::to_string(t));
    }
    const auto n_train = static_cast<std::size_t>(std::floor(spec.train * static_cast<double>(t) + 1e-9));
    const auto n_val = static_cast<std::size_t>(std::floor(spec.val * static_cast<double>(t) + 1e-9));
    const std::size_t n_test = t - n_train - n_val;
    if (n_train == 0) {
        throw InsufficientDataError("training segment would be empty");
    }
    Splits s{table.slice(0, n_train), std::nullopt, std::nullopt};
    if (n_val > 0) {
        s.val = table.slice(n_train, n_val);
    }
    if (n_test > 0) {
        s.test = table.slice(n_train + n_val, n_test);
    }
    return s;
}

enum class ScarcityMode { suffix, prefix };

/// Keeps floor(fraction*T) rows of the training segment: the most recent ones
/// by default, the earliest ones in prefix mode.
inline SeriesTable scarcity_slice(const SeriesTable& train, double fraction, ScarcityMode mode = ScarcityMode::suffix) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw ConfigError("scarcity fraction must lie in (0, 1], got " + std::to_string(fraction));
    }
    const auto keep = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(train.rows()) + 1e-9));
    if (keep == 0) {
        throw InsufficientDataError("scarcity fraction leaves no training rows");
    }
    return mode == ScarcityMode::suffix ? train.slice(train.rows() - keep, keep) : train.slice(0, keep);
}

// ---------------------------------------------------------------------------
// Windows

/** One sample: L input rows over all M columns and the next K target values. */
struct TimeWindow {
    Matrix inputs;             // L x M
    Vector target;             // K
    std::size_t target_col = 0;
    std::size_t origin_index = 0;  // first input row, relative to the windowed table
    std::size_t source_row = 0;    // first input row in the original table

    Eigen::Index input_length() const { return inputs.rows(); }
    Eigen::Index horizon() const { return target.size(); }
    Eigen::Index variates() const { return inputs.cols(); }
};

inline std::size_t window_count(std::size_t rows, std::size_t input_len, std::size_t horizon, std::size_t stride) {
    if (rows < input_len + horizon) {
        return 0;
    }
    return (rows - input_len - horizon) / stride + 1;
}

inline std::vector<TimeWindow> make_windows(const SeriesTable& table, std::size_t input_len, std::size_t horizon,
                                            std::size_t stride = 1) {
    if (input_len < 1 || horizon < 1) {
        throw ConfigError("window lengths must be at least 1");
    }
    if (stride < 1) {
        throw ConfigError("window stride must be at least 1");
    }
    if (input_len + horizon > table.rows()) {
        throw InsufficientDataError("segment of " + std::to_string(table.rows()) + " rows is shorter than L+K = " +
                                    std::to_string(input_len + horizon));
    }
    const std::size_t n = window_count(table.rows(), input_len, horizon, stride);
    const auto tc = static_cast<Eigen::Index>(table.target_index());
    std::vector<TimeWindow> out;
    out.reserve(n);
    for (std::size_t w = 0; w < n; ++w) {
        const std::size_t origin = w * stride;
        TimeWindow win;
        win.inputs = table.values().middleRows(static_cast<Eigen::Index>(origin), static_cast<Eigen::Index>(input_len));
        win.target = table.values().col(tc).segment(static_cast<Eigen::Index>(origin + input_len),
                                                    static_cast<Eigen::Index>(horizon));
        win.target_col = table.target_index();
        win.origin_index = origin;
        win.source_row = table.first_row() + origin;
        out.push_back(std::move(win));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic telemetry

/**
 * Desk-scale stand-in for data-center telemetry. Channel 0 is an outdoor
 * temperature driver, channels 1..M-2 are pump inlet/outlet temperatures, and
 * the last channel is the cooling load target.
 *
 * Device channels are offsets plus a coupled mixture (coupling * z) of
 * independent AR(1) latents z with stationary standard deviation `noise`.
 * The target is its seasonal component (base + scale*(daily + weekly sines))
 * plus a lagged weighted sum of the coupled device signals plus observation
 * noise. With noise = 0 the latents vanish and the target equals its seasonal
 * component exactly.
 */
struct SynthConfig {
    std::size_t rows = 4000;
    std::size_t columns = 6;
    double noise = 1.0;
    double daily_amplitude = 2.0;
    double weekly_amplitude = 0.5;
    double ar_coefficient = 0.98;
    double observation_noise = 0.05;  // relative to `noise`
    double load_base = 500.0;
    double load_scale = 20.0;
    std::int64_t start_epoch = 1727740800;  // 2024-10-01T00:00:00Z
    std::int64_t cadence_seconds = 300;
    /// Row-major (M-1)x(M-1); empty selects the default chain coupling.
    std::vector<double> coupling;

    std::size_t devices() const { return columns - 1; }

    Matrix coupling_matrix() const {
        const auto n = static_cast<Eigen::Index>(devices());
        if (coupling.empty()) {
            Matrix c = Matrix::Identity(n, n);
            for (Eigen::Index i = 1; i < n; ++i) {
                c(i, i - 1) = 0.6;
            }
            return c;
        }
        Matrix c(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                c(i, j) = coupling[static_cast<std::size_t>(i * n + j)];
            }
        }
        return c;
    }

    void validate() const {
        if (columns < 2) {
            throw ConfigError("synth: columns (M) must be at least 2, got " + std::to_string(columns));
        }
        if (rows < 1) {
            throw ConfigError("synth: rows (T) must be at least 1");
        }
        if (noise < 0 || observation_noise < 0) {
            throw ConfigError("synth: noise levels must be non-negative");
        }
        if (!(std::abs(ar_coefficient) < 1.0)) {
            throw ConfigError("synth: ar_coefficient must lie in (-1, 1)");
        }
        if (cadence_seconds < 1) {
            throw ConfigError("synth: cadence_seconds must be positive");
        }
        if (!coupling.empty() && coupling.size() != devices() * devices()) {
            throw ConfigError("synth: coupling must have (M-1)^2 = " + std::to_string(devices() * devices()) +
                              " entries, got " + std::to_string(coupling.size()));
        }
    }
};

namespace synth {

constexpr double kDayRows = 288.0;    // 5-minute cadence
constexpr double kWeekRows = 2016.0;

inline std::size_t lag(std::size_t device) { return 12 * (1 + device % 6); }

inline double weight(std::size_t device) {
    const double w = 1.2 / (1.0 + 0.4 * static_cast<double>(device));
    return device % 2 == 0 ? w : -0.7 * w;
}

inline std::vector<std::string> column_names(std::size_t columns) {
    std::vector<std::string> names{"outdoor_temp"};
    for (std::size_t i = 1; i + 1 < columns; ++i) {
        const std::size_t pump = (i - 1) / 2 + 1;
        names.push_back("pump" + std::to_string(pump) + ((i - 1) % 2 == 0 ? "_inlet_temp" : "_outlet_temp"));
    }
    names.emplace_back("cooling_load");
    return names;
}

} // namespace synth

/// Deterministic part of the synthetic target at row `t`.
inline double synth_seasonal_component(const SynthConfig& config, std::size_t t) {
    constexpr double two_pi = 6.283185307179586;
    const double x = static_cast<double>(t);
    return config.load_base + config.load_scale * (config.daily_amplitude * std::sin(two_pi * x / synth::kDayRows) +
                                                   config.weekly_amplitude * std::sin(two_pi * x / synth::kWeekRows));
}

inline SeriesTable synth_generate(const SynthConfig& config, std::uint64_t seed) {
    config.validate();
    const std::size_t devices = config.devices();
    const std::size_t t_rows = config.rows;
    std::size_t max_lag = 0;
    for (std::size_t i = 0; i < devices; ++i) {
        max_lag = std::max(max_lag, synth::lag(i));
    }
    const std::size_t burn = 500 + max_lag;
    const std::size_t total = t_rows + burn;
    const Matrix coupling = config.coupling_matrix();

    Rng latent_rng(derive_seed(seed, 1));
    Rng obs_rng(derive_seed(seed, 2));
    std::normal_distribution<double> unit(0.0, 1.0);

    const double innovation = config.noise * std::sqrt(1.0 - config.ar_coefficient * config.ar_coefficient);
    Matrix mixed(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(devices));
    Vector z = Vector::Zero(static_cast<Eigen::Index>(devices));
    for (std::size_t t = 0; t < total; ++t) {
        for (std::size_t i = 0; i < devices; ++i) {
            z(static_cast<Eigen::Index>(i)) = config.ar_coefficient * z(static_cast<Eigen::Index>(i)) + innovation * unit(latent_rng);
        }
        mixed.row(static_cast<Eigen::Index>(t)) = (coupling * z).transpose();
    }

    const double obs = config.noise * config.observation_noise;
    Matrix values(static_cast<Eigen::Index>(t_rows), static_cast<Eigen::Index>(config.columns));
    std::vector<std::int64_t> ts(t_rows);
    for (std::size_t r = 0; r < t_rows; ++r) {
        const std::size_t t = r + burn;
        ts[r] = config.start_epoch + static_cast<std::int64_t>(r) * config.cadence_seconds;
        double load = 0.0;
        for (std::size_t i = 0; i < devices; ++i) {
            const double offset = i == 0 ? 25.0 : 12.0 + 3.0 * static_cast<double>(i % 2) + 0.5 * static_cast<double>(i);
            const double amp = i == 0 ? 4.0 : 1.5;
            const double signal = mixed(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i));
            values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) =
                offset + amp * signal + amp * obs * unit(obs_rng);
            load += synth::weight(i) * mixed(static_cast<Eigen::Index>(t - synth::lag(i)), static_cast<Eigen::Index>(i));
        }
        values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(devices)) =
            synth_seasonal_component(config, r) + config.load_scale * (load + obs * unit(obs_rng));
    }
    return SeriesTable(std::move(ts), synth::column_names(config.columns), std::move(values), "cooling_load");
}

} // namespace hyperload
