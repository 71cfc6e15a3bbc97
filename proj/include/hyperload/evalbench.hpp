#pragma once

// Metrics, baselines and the experiment grid runner.

#include "hyperload/alignment.hpp"
#include "hyperload/dataset.hpp"
#include "hyperload/errors.hpp"
#include "hyperload/forecaster.hpp"
#include "hyperload/sample.hpp"
#include "hyperload/serialize.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace hyperload {

// ---------------------------------------------------------------------------
// Metrics

inline double metric_mse(const Vector& pred, const Vector& truth) {
    if (pred.size() != truth.size()) {
        throw ShapeError("metric_mse: lengths " + std::to_string(pred.size()) + " and " + std::to_string(truth.size()) +
                         " differ");
    }
    if (pred.size() == 0) {
        throw ShapeError("metric_mse: empty vectors");
    }
    return (pred - truth).squaredNorm() / static_cast<double>(pred.size());
}

inline double metric_mae(const Vector& pred, const Vector& truth) {
    if (pred.size() != truth.size()) {
        throw ShapeError("metric_mae: lengths " + std::to_string(pred.size()) + " and " + std::to_string(truth.size()) +
                         " differ");
    }
    if (pred.size() == 0) {
        throw ShapeError("metric_mae: empty vectors");
    }
    return (pred - truth).cwiseAbs().mean();
}

// ---------------------------------------------------------------------------
// Baselines

/// Last observed target value repeated K times, in raw units.
inline Vector baseline_persistence(const TimeWindow& w) {
    if (w.inputs.rows() < 1) {
        throw InsufficientDataError("persistence: empty input window");
    }
    return Vector::Constant(w.target.size(), w.inputs(w.inputs.rows() - 1, static_cast<Eigen::Index>(w.target_col)));
}

/// Same forecast in the window's normalized space.
inline Vector baseline_persistence(const PreparedWindow& w) {
    const auto c = static_cast<Eigen::Index>(w.target_col);
    return Vector::Constant(w.target_normalized.size(), w.normalized(w.normalized.rows() - 1, c));
}

/**
 * Ridge regression from the L normalized target inputs to the K normalized
 * targets, with an unpenalized intercept: as lambda grows the forecast tends
 * to the training mean of the targets.
 */
struct LinearBaseline {
    Matrix weights;   // L x K
    RowVector x_mean; // 1 x L
    RowVector y_mean; // 1 x K
    double lambda = 1e-3;

    static LinearBaseline fit(const std::vector<PreparedWindow>& train, double lambda = 1e-3) {
        if (train.empty()) {
            throw InsufficientDataError("linear baseline: no training windows");
        }
        const Eigen::Index n = static_cast<Eigen::Index>(train.size());
        const Eigen::Index l = train.front().normalized.rows();
        const Eigen::Index k = train.front().target_normalized.size();
        Matrix x(n, l);
        Matrix y(n, k);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& w = train[static_cast<std::size_t>(i)];
            x.row(i) = w.normalized.col(static_cast<Eigen::Index>(w.target_col)).transpose();
            y.row(i) = w.target_normalized.transpose();
        }
        LinearBaseline b;
        b.lambda = lambda;
        b.x_mean = x.colwise().mean();
        b.y_mean = y.colwise().mean();
        const Matrix xc = x.rowwise() - b.x_mean;
        const Matrix yc = y.rowwise() - b.y_mean;
        const Matrix gram = xc.transpose() * xc + lambda * Matrix::Identity(l, l);
        b.weights = gram.ldlt().solve(xc.transpose() * yc);
        return b;
    }

    Vector predict(const PreparedWindow& w) const {
        const RowVector x = w.normalized.col(static_cast<Eigen::Index>(w.target_col)).transpose();
        if (x.size() != x_mean.size()) {
            throw ShapeError("linear baseline: window length differs from the fitted L");
        }
        return (y_mean + (x - x_mean) * weights).transpose();
    }

    Json to_json() const {
        return Json{{"format", "hyperload-linear/1"},
                    {"lambda", lambda},
                    {"weights", hyperload::to_json(weights)},
                    {"x_mean", hyperload::to_json(x_mean)},
                    {"y_mean", hyperload::to_json(y_mean)}};
    }
};

// ---------------------------------------------------------------------------
// Grid

enum class Variant { full, no_adpt, no_egia, no_kari, persistence, linear };

inline const char* to_string(Variant v) {
    switch (v) {
    case Variant::full: return "full";
    case Variant::no_adpt: return "wo_adpt";
    case Variant::no_egia: return "wo_egia";
    case Variant::no_kari: return "wo_kari";
    case Variant::persistence: return "persistence";
    case Variant::linear: return "linear";
    }
    return "?";
}

inline Variant parse_variant(const std::string& s) {
    for (Variant v : {Variant::full, Variant::no_adpt, Variant::no_egia, Variant::no_kari, Variant::persistence,
                      Variant::linear}) {
        if (s == to_string(v)) {
            return v;
        }
    }
    throw ConfigError("unknown variant '" + s + "' (full, wo_adpt, wo_egia, wo_kari, persistence, linear)");
}

inline Ablation ablation_for(Variant v) {
    switch (v) {
    case Variant::no_adpt: return Ablation{false, true, true};
    case Variant::no_egia: return Ablation{true, false, true};
    case Variant::no_kari: return Ablation{true, true, false};
    default: return Ablation{};
    }
}

inline bool is_baseline(Variant v) { return v == Variant::persistence || v == Variant::linear; }

struct ExperimentGrid {
    std::vector<double> fractions{1.0, 0.5, 0.25};
    std::vector<std::size_t> horizons{12, 24, 48, 96};
    std::size_t input_len = 96;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::vector<Variant> variants{Variant::full,    Variant::no_adpt,     Variant::no_egia,
                                  Variant::no_kari, Variant::persistence, Variant::linear};

    std::size_t size() const { return fractions.size() * horizons.size() * seeds.size() * variants.size(); }

    void validate() const {
        if (fractions.empty() || horizons.empty() || seeds.empty() || variants.empty()) {
            throw ConfigError("experiment grid axes must be non-empty");
        }
        for (double f : fractions) {
            if (!(f > 0.0 && f <= 1.0)) {
                throw ConfigError("grid fractions must lie in (0, 1]");
            }
        }
        for (std::size_t k : horizons) {
            if (k < 1) {
                throw ConfigError("grid horizons must be at least 1");
            }
        }
        if (input_len < 2) {
            throw ConfigError("grid L must be at least 2");
        }
    }
};

struct ReportRow {
    std::string variant;
    double fraction = 1.0;
    std::size_t horizon = 0;
    std::uint64_t seed = 0;
    double mse = 0.0;  // normalized space
    double mae = 0.0;
    double wall_time_s = 0.0;  // seconds per training iteration
    double raw_mse = 0.0;
    double raw_mae = 0.0;
    bool ok = true;
    std::string reason;
};

/// Forecast and truth (raw units) of one test window, for plotting.
struct ForecastTrace {
    std::size_t horizon = 0;
    std::uint64_t seed = 0;
    std::string variant;
    Vector truth;
    Vector pred;
};

struct GridResult {
    std::vector<ReportRow> rows;
    std::vector<ForecastTrace> traces;
};

struct GridConfig {
    AlignmentConfig phase1;
    ForecasterConfig phase2;
    SplitSpec split;
    ScarcityMode scarcity_mode = ScarcityMode::suffix;
    KnowledgeBase kb = default_knowledge_base();
    std::size_t stride = 1;
    std::size_t workers = 1;
    std::string output_dir;  // checkpoints go to <dir>/runs/<cell-id>/checkpoint when set
    bool verbose = false;
};

/// Half-open source row interval [begin, end) touched by a window set (inputs and targets).
struct RowInterval {
    std::size_t begin = 0;
    std::size_t end = 0;
    bool overlaps(const RowInterval& o) const { return begin < o.end && o.begin < end; }
};

inline RowInterval rows_touched(const std::vector<TimeWindow>& windows) {
    if (windows.empty()) {
        return {};
    }
    RowInterval r{windows.front().source_row, windows.front().source_row};
    for (const auto& w : windows) {
        r.begin = std::min(r.begin, w.source_row);
        r.end = std::max(r.end, w.source_row + static_cast<std::size_t>(w.inputs.rows() + w.target.size()));
    }
    return r;
}

/// Windows of one (fraction, K) cell, built segment by segment.
struct CellData {
    std::vector<TimeWindow> train_windows;
    std::vector<TimeWindow> val_windows;
    std::vector<TimeWindow> test_windows;
    std::vector<PreparedWindow> train;
    std::vector<PreparedWindow> val;
    std::vector<PreparedWindow> test;
};

inline CellData make_cell_data(const Splits& splits, double fraction, std::size_t input_len, std::size_t horizon,
                               const GridConfig& cfg) {
    if (!splits.test) {
        throw InsufficientDataError("the test segment is empty");
    }
    CellData c;
    const SeriesTable train = scarcity_slice(splits.train, fraction, cfg.scarcity_mode);
    c.train_windows = make_windows(train, input_len, horizon, cfg.stride);
    if (splits.val && splits.val->rows() >= input_len + horizon) {
        c.val_windows = make_windows(*splits.val, input_len, horizon, cfg.stride);
    }
    c.test_windows = make_windows(*splits.test, input_len, horizon, 1);
    const RowInterval test_rows = rows_touched(c.test_windows);
    if (rows_touched(c.train_windows).overlaps(test_rows) ||
        (!c.val_windows.empty() && rows_touched(c.val_windows).overlaps(test_rows))) {
        throw Error("internal: training rows overlap the test segment");
    }
    const KnowledgeBase kb = with_horizon(cfg.kb, horizon);
    const double eps = cfg.phase2.revin_epsilon;
    c.train = prepare_windows(c.train_windows, kb, eps);
    c.val = prepare_windows(c.val_windows, kb, eps);
    c.test = prepare_windows(c.test_windows, kb, eps);
    return c;
}

struct Evaluation {
    double mse = 0.0;
    double mae = 0.0;
    double raw_mse = 0.0;
    double raw_mae = 0.0;
};

/// Averages per-window metrics; `predict` returns the normalized forecast.
template <typename Predict>
Evaluation evaluate_windows(const std::vector<PreparedWindow>& windows, Predict&& predict) {
    if (windows.empty()) {
        throw InsufficientDataError("evaluation: no test windows");
    }
    Evaluation e;
    for (const auto& w : windows) {
        const Vector pred = predict(w);
        e.mse += metric_mse(pred, w.target_normalized);
        e.mae += metric_mae(pred, w.target_normalized);
        const Vector raw = denormalize(pred, w.stats, w.target_col);
        e.raw_mse += metric_mse(raw, w.target_raw);
        e.raw_mae += metric_mae(raw, w.target_raw);
    }
    const double n = static_cast<double>(windows.size());
    e.mse /= n;
    e.mae /= n;
    e.raw_mse /= n;
    e.raw_mae /= n;
    return e;
}

inline std::string cell_id(Variant v, double fraction, std::size_t horizon, std::uint64_t seed) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s_f%g_K%zu_s%llu", to_string(v), fraction, horizon,
                  static_cast<unsigned long long>(seed));
    return buf;
}

namespace detail {

struct CellKey {
    double fraction;
    std::size_t horizon;
    std::uint64_t seed;
};

/// Runs every variant of one (fraction, K, seed) cell.
inline void run_cell(const Splits& splits, const CellKey& key, const ExperimentGrid& grid, const GridConfig& cfg,
                     bool capture_traces, std::vector<ReportRow>& rows, std::vector<ForecastTrace>& traces) {
    std::optional<CellData> data;
    std::string data_error;
    try {
        data = make_cell_data(splits, key.fraction, grid.input_len, key.horizon, cfg);
    } catch (const std::exception& e) {
        data_error = e.what();
    }

    std::shared_ptr<AlignmentCheckpoint> aligned;
    std::shared_ptr<AlignmentCheckpoint> random_text;
    AlignmentConfig p1 = cfg.phase1;
    p1.seed = key.seed;

    for (Variant v : grid.variants) {
        ReportRow row;
        row.variant = to_string(v);
        row.fraction = key.fraction;
        row.horizon = key.horizon;
        row.seed = key.seed;
        if (!data) {
            row.ok = false;
            row.reason = data_error;
            rows.push_back(row);
            continue;
        }
        try {
            std::optional<Vector> trace_pred;
            const std::size_t trace_index = data->test.size() / 2;
            std::string cell_dir;
            if (!cfg.output_dir.empty()) {
                cell_dir = cfg.output_dir + "/runs/" + cell_id(v, key.fraction, key.horizon, key.seed);
                std::filesystem::create_directories(cell_dir);
            }
            Evaluation ev;
            if (v == Variant::persistence) {
                ev = evaluate_windows(data->test, [](const PreparedWindow& w) { return baseline_persistence(w); });
                row.wall_time_s = 0.0;
                if (capture_traces) {
                    trace_pred = baseline_persistence(data->test[trace_index]);
                }
                if (!cell_dir.empty()) {
                    write_json_file(Json{{"format", "hyperload-persistence/1"}}, cell_dir + "/checkpoint");
                }
            } else if (v == Variant::linear) {
                const auto t0 = std::chrono::steady_clock::now();
                const LinearBaseline lin = LinearBaseline::fit(data->train);
                row.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                ev = evaluate_windows(data->test, [&](const PreparedWindow& w) { return lin.predict(w); });
                if (capture_traces) {
                    trace_pred = lin.predict(data->test[trace_index]);
                }
                if (!cell_dir.empty()) {
                    write_json_file(lin.to_json(), cell_dir + "/checkpoint");
                }
            } else {
                ForecasterConfig p2 = cfg.phase2;
                p2.input_len = grid.input_len;
                p2.horizon = key.horizon;
                p2.seed = key.seed;
                p2.ablation = ablation_for(v);
                std::shared_ptr<AlignmentCheckpoint> text;
                if (p2.ablation.adpt) {
                    if (p2.ablation.kari) {
                        if (!aligned) {
                            aligned = std::make_shared<AlignmentCheckpoint>(
                                train_phase1(data->train, grid.input_len, p1));
                        }
                        text = aligned;
                    } else {
                        if (!random_text) {
                            random_text = std::make_shared<AlignmentCheckpoint>(
                                untrained_alignment(data->train, grid.input_len, p1));
                        }
                        text = random_text;
                    }
                }
                ForecastModel model(p2, data->train.front().normalized.cols(), text);
                const Phase2Report rep = train_phase2(model, data->train, data->val);
                row.wall_time_s = rep.seconds_per_step;
                const std::vector<Vector> prefixes = template_vectors(model, data->test);
                std::size_t i = 0;
                ev = evaluate_windows(data->test, [&](const PreparedWindow& w) {
                    return model.predict_normalized(w, prefixes.empty() ? nullptr : &prefixes[i++]);
                });
                if (capture_traces) {
                    trace_pred = model.predict_normalized(data->test[trace_index],
                                                          prefixes.empty() ? nullptr : &prefixes[trace_index]);
                }
                if (!cell_dir.empty()) {
                    model.save(cell_dir + "/checkpoint");
                }
            }
            row.mse = ev.mse;
            row.mae = ev.mae;
            row.raw_mse = ev.raw_mse;
            row.raw_mae = ev.raw_mae;
            if (!std::isfinite(row.mse) || !std::isfinite(row.mae)) {
                throw NumericError("non-finite test metrics");
            }
            if (trace_pred) {
                const PreparedWindow& w = data->test[trace_index];
                traces.push_back(ForecastTrace{key.horizon, key.seed, row.variant, w.target_raw,
                                               denormalize(*trace_pred, w.stats, w.target_col)});
            }
        } catch (const std::exception& e) {
            row.ok = false;
            row.reason = e.what();
        }
        if (cfg.verbose) {
            std::fprintf(stderr, "  %-12s f=%-5g K=%-3zu seed=%-3llu mse=%.5f mae=%.5f%s%s\n", row.variant.c_str(),
                         row.fraction, row.horizon, static_cast<unsigned long long>(row.seed), row.mse, row.mae,
                         row.ok ? "" : "  FAILED: ", row.reason.c_str());
        }
        rows.push_back(row);
    }
}

inline std::size_t variant_rank(const std::string& name) {
    for (std::size_t i = 0; i < 6; ++i) {
        if (name == to_string(static_cast<Variant>(i))) {
            return i;
        }
    }
    return 6;
}

} // namespace detail

inline void sort_rows(std::vector<ReportRow>& rows) {
    std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
        return std::make_tuple(detail::variant_rank(a.variant), a.variant, a.fraction, a.horizon, a.seed) <
               std::make_tuple(detail::variant_rank(b.variant), b.variant, b.fraction, b.horizon, b.seed);
    });
}

/**
 * Every (variant, fraction, K, seed) combination: split, scarcity slice,
 * windows per segment, phase 1 (shared by the variants of a cell that use the
 * aligned encoder), phase 2, and evaluation on the untouched test segment.
 * A failing cell yields rows with ok = false and the grid continues.
 * Traces are captured for the largest fraction.
 */
inline GridResult run_grid(const ExperimentGrid& grid, const SeriesTable& data, const GridConfig& cfg) {
    grid.validate();
    const Splits splits = chronological_split(data, cfg.split);
    const double trace_fraction = *std::max_element(grid.fractions.begin(), grid.fractions.end());

    std::vector<detail::CellKey> cells;
    for (double f : grid.fractions) {
        for (std::size_t k : grid.horizons) {
            for (std::uint64_t s : grid.seeds) {
                cells.push_back({f, k, s});
            }
        }
    }
    std::vector<std::vector<ReportRow>> cell_rows(cells.size());
    std::vector<std::vector<ForecastTrace>> cell_traces(cells.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            if (cfg.verbose) {
                std::fprintf(stderr, "cell %zu/%zu: fraction=%g K=%zu seed=%llu\n", i + 1, cells.size(),
                             cells[i].fraction, cells[i].horizon, static_cast<unsigned long long>(cells[i].seed));
            }
            detail::run_cell(splits, cells[i], grid, cfg, cells[i].fraction == trace_fraction, cell_rows[i],
                             cell_traces[i]);
        }
    };
    const std::size_t n_workers = std::max<std::size_t>(1, std::min(cfg.workers, cells.size()));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < n_workers; ++w) {
            pool.emplace_back(worker);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    GridResult result;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        result.rows.insert(result.rows.end(), cell_rows[i].begin(), cell_rows[i].end());
        result.traces.insert(result.traces.end(), cell_traces[i].begin(), cell_traces[i].end());
    }
    sort_rows(result.rows);
    return result;
}

} // namespace hyperload
