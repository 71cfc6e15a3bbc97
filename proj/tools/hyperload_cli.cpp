// hyperload: synth | align | train | eval | bench | plot
//
// Settings come from defaults, then the --config file, then --set pairs and
// the dedicated flags (flag > config > default). Every command prints the
// resolved configuration before it starts.

#include "hyperload/hyperload.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

using namespace hyperload;
namespace fs = std::filesystem;

namespace {

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> workers;
    std::vector<std::string> sets;
    bool no_adpt = false;
    bool no_egia = false;
    bool no_kari = false;
    bool quiet = false;
};

RunConfig resolve(const Flags& f) {
    RunConfig c;
    if (!f.config.empty()) {
        c.load_file(f.config);
    }
    for (const auto& kv : f.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        }
        c.set(std::string(detail::trim(kv.substr(0, eq))), std::string(detail::trim(kv.substr(eq + 1))));
    }
    if (f.seed) c.seed = *f.seed;
    if (f.out) c.out = *f.out;
    if (f.workers) c.workers = *f.workers;
    if (f.no_adpt) c.phase2.ablation.adpt = false;
    if (f.no_egia) c.phase2.ablation.egia = false;
    if (f.no_kari) c.phase2.ablation.kari = false;
    c.validate();
    return c;
}

std::string out_file(const RunConfig& c, const std::string& name) { return (fs::path(c.out) / name).string(); }

/// data.path if set, else <out>/data.csv from a previous synth, else fresh synthetic data.
SeriesTable load_table(const RunConfig& c) {
    std::string path = c.data_path;
    if (path.empty() && fs::exists(out_file(c, "data.csv"))) {
        path = out_file(c, "data.csv");
    }
    if (path.empty()) {
        std::cerr << "data: synthetic (" << c.synth.rows << " rows, seed " << c.seed << ")\n";
        return synth_generate(c.synth, c.seed);
    }
    SeriesTable t = load_dcdata(path, c.target);
    std::cerr << "data: " << path << " (" << t.rows() << " rows, " << t.cols() << " columns, " << t.dropped_rows()
              << " dropped)\n";
    return t;
}

struct Segments {
    std::vector<PreparedWindow> train;
    std::vector<PreparedWindow> val;
    std::vector<PreparedWindow> test;
};

Segments segment_windows(const RunConfig& c, const SeriesTable& table, std::size_t L, std::size_t K) {
    const Splits s = chronological_split(table, c.split);
    const SeriesTable train = scarcity_slice(s.train, c.split.scarcity_fraction, c.scarcity_mode);
    const KnowledgeBase kb = with_horizon(c.load_kb(), K);
    const double eps = c.phase2.revin_epsilon;
    Segments out;
    out.train = prepare_windows(make_windows(train, L, K, c.stride), kb, eps);
    if (s.val && s.val->rows() >= L + K) {
        out.val = prepare_windows(make_windows(*s.val, L, K, c.stride), kb, eps);
    }
    if (s.test && s.test->rows() >= L + K) {
        out.test = prepare_windows(make_windows(*s.test, L, K, 1), kb, eps);
    }
    return out;
}

std::string variant_name(const Ablation& a) {
    if (a == Ablation{}) return "full";
    std::string name = "wo";
    if (!a.adpt) name += "_adpt";
    if (!a.egia) name += "_egia";
    if (!a.kari) name += "_kari";
    return name;
}

int cmd_synth(const RunConfig& c) {
    fs::create_directories(c.out);
    const SeriesTable t = synth_generate(c.synth, c.seed);
    const std::string path = out_file(c, "data.csv");
    save_csv(t, path);
    std::cout << "wrote " << path << " (" << t.rows() << " rows, " << t.cols() << " columns)\n";
    return 0;
}

int cmd_align(const RunConfig& c) {
    fs::create_directories(c.out);
    const Segments seg = segment_windows(c, load_table(c), c.input_len, c.horizon);
    const AlignmentCheckpoint ck = train_phase1(seg.train, c.input_len, c.alignment());
    for (std::size_t e = 0; e < ck.epoch_losses.size(); ++e) {
        std::printf("epoch %zu  loss %.6f\n", e + 1, ck.epoch_losses[e]);
    }
    std::printf("alignment loss %.6f -> %.6f\n", ck.initial_loss, ck.final_loss);
    const std::string path = out_file(c, "alignment.json");
    AlignmentCheckpoint(ck).save(path);
    std::cout << "wrote " << path << "\n";
    return 0;
}

std::shared_ptr<AlignmentCheckpoint> text_encoder(const RunConfig& c, const std::vector<PreparedWindow>& train) {
    const Ablation& a = c.phase2.ablation;
    if (!a.adpt) {
        return nullptr;
    }
    if (!a.kari) {
        return std::make_shared<AlignmentCheckpoint>(untrained_alignment(train, c.input_len, c.alignment()));
    }
    const std::string path = out_file(c, "alignment.json");
    if (fs::exists(path)) {
        std::cerr << "phase 1: loading " << path << "\n";
        return std::make_shared<AlignmentCheckpoint>(AlignmentCheckpoint::load(path));
    }
    std::cerr << "phase 1: no " << path << ", training one now\n";
    return std::make_shared<AlignmentCheckpoint>(train_phase1(train, c.input_len, c.alignment()));
}

int cmd_train(const RunConfig& c) {
    fs::create_directories(c.out);
    const Segments seg = segment_windows(c, load_table(c), c.input_len, c.horizon);
    if (seg.train.empty()) {
        throw InsufficientDataError("no training windows for L=" + std::to_string(c.input_len) +
                                    ", K=" + std::to_string(c.horizon));
    }
    ForecasterConfig p2 = c.forecaster();
    if (seg.val.empty() && p2.early_stopping) {
        std::cerr << "warning: empty validation split, early stopping disabled\n";
        p2.early_stopping = false;
    }
    ForecastModel model(p2, static_cast<std::size_t>(seg.train.front().normalized.cols()),
                        text_encoder(c, seg.train));
    const Phase2Report r = train_phase2(model, seg.train, seg.val);
    for (std::size_t e = 0; e < r.train_mse.size(); ++e) {
        std::printf("epoch %zu  train %.6f", e + 1, r.train_mse[e]);
        if (e < r.val_mse.size()) std::printf("  val %.6f", r.val_mse[e]);
        std::printf("\n");
    }
    std::printf("steps %zu, %.4f s/step, best epoch %zu\n", r.steps, r.seconds_per_step, r.best_epoch + 1);
    const std::string path = out_file(c, "model.json");
    model.save(path);
    std::cout << "wrote " << path << "\n";
    return 0;
}

void write_outputs(const RunConfig& c, const std::vector<ReportRow>& rows, const std::vector<ForecastTrace>& traces) {
    emit_report(rows, c.out);
    std::cout << "wrote " << out_file(c, "report.csv") << "\n";
    std::cout << "wrote " << out_file(c, "report_raw.csv") << "\n";
    if (fs::exists(out_file(c, "failures.csv"))) {
        std::cout << "wrote " << out_file(c, "failures.csv") << "\n";
    }
    if (!traces.empty()) {
        emit_traces(traces, c.out);
        std::cout << "wrote " << out_file(c, "traces.csv") << "\n";
    }
    for (const auto& p : emit_plots(rows, traces, c.out, c.plot_format)) {
        std::cout << "wrote " << p << "\n";
    }
}

void print_rows(const std::vector<ReportRow>& rows) {
    std::printf("%-12s %8s %4s %5s %12s %12s\n", "variant", "fraction", "K", "seed", "mse", "mae");
    for (const auto& r : rows) {
        if (r.ok) {
            std::printf("%-12s %8g %4zu %5llu %12.6f %12.6f\n", r.variant.c_str(), r.fraction, r.horizon,
                        static_cast<unsigned long long>(r.seed), r.mse, r.mae);
        } else {
            std::printf("%-12s %8g %4zu %5llu  FAILED: %s\n", r.variant.c_str(), r.fraction, r.horizon,
                        static_cast<unsigned long long>(r.seed), r.reason.c_str());
        }
    }
}

int cmd_eval(const RunConfig& c) {
    const std::string model_path = out_file(c, "model.json");
    if (!fs::exists(model_path)) {
        throw IoError("no model at '" + model_path + "'; run 'train' first");
    }
    ForecastModel model = ForecastModel::load(model_path);
    const std::size_t L = model.config().input_len;
    const std::size_t K = model.config().horizon;
    const Segments seg = segment_windows(c, load_table(c), L, K);
    if (seg.test.empty()) {
        throw InsufficientDataError("no test windows for L=" + std::to_string(L) + ", K=" + std::to_string(K));
    }
    const std::size_t mid = seg.test.size() / 2;
    std::vector<ReportRow> rows;
    std::vector<ForecastTrace> traces;
    auto add = [&](const std::string& name, const Evaluation& ev, const Vector& trace_pred) {
        ReportRow r;
        r.variant = name;
        r.fraction = c.split.scarcity_fraction;
        r.horizon = K;
        r.seed = model.config().seed;
        r.mse = ev.mse;
        r.mae = ev.mae;
        r.raw_mse = ev.raw_mse;
        r.raw_mae = ev.raw_mae;
        rows.push_back(r);
        const PreparedWindow& w = seg.test[mid];
        traces.push_back({K, r.seed, name, w.target_raw, denormalize(trace_pred, w.stats, w.target_col)});
    };

    const std::vector<Vector> prefixes = template_vectors(model, seg.test);
    const auto t0 = std::chrono::steady_clock::now();
    std::size_t i = 0;
    const Evaluation ev = evaluate_windows(seg.test, [&](const PreparedWindow& w) {
        return model.predict_normalized(w, prefixes.empty() ? nullptr : &prefixes[i++]);
    });
    add(variant_name(model.config().ablation), ev,
        model.predict_normalized(seg.test[mid], prefixes.empty() ? nullptr : &prefixes[mid]));
    rows.back().wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / static_cast<double>(seg.test.size());

    add("persistence", evaluate_windows(seg.test, [](const PreparedWindow& w) { return baseline_persistence(w); }),
        baseline_persistence(seg.test[mid]));
    if (!seg.train.empty()) {
        const LinearBaseline lin = LinearBaseline::fit(seg.train);
        add("linear", evaluate_windows(seg.test, [&](const PreparedWindow& w) { return lin.predict(w); }),
            lin.predict(seg.test[mid]));
    }
    sort_rows(rows);
    print_rows(rows);
    write_outputs(c, rows, traces);
    return 0;
}

int cmd_bench(const RunConfig& c, const Flags& f) {
    if (f.no_adpt || f.no_egia || f.no_kari) {
        std::cerr << "note: bench runs every variant in grid.variants; ablation switches are ignored\n";
    }
    fs::create_directories(c.out);
    const SeriesTable table = load_table(c);
    GridConfig g = c.grid_config();
    g.verbose = !f.quiet;
    const ExperimentGrid grid = c.experiment_grid();
    std::cerr << "grid: " << grid.size() << " rows, " << g.workers << " worker(s)\n";
    const auto t0 = std::chrono::steady_clock::now();
    const GridResult r = run_grid(grid, table, g);
    std::cerr << "grid finished in " << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
              << " s\n";
    print_rows(r.rows);
    write_outputs(c, r.rows, r.traces);
    const auto failed = std::count_if(r.rows.begin(), r.rows.end(), [](const ReportRow& x) { return !x.ok; });
    if (failed > 0) {
        std::cerr << failed << " row(s) failed; see failures.csv\n";
        return 3;
    }
    return 0;
}

int cmd_plot(const RunConfig& c) {
    const auto rows = read_report(out_file(c, "report.csv"));
    std::vector<ForecastTrace> traces;
    if (fs::exists(out_file(c, "traces.csv"))) {
        traces = read_traces(out_file(c, "traces.csv"));
    }
    for (const auto& p : emit_plots(rows, traces, c.out, c.plot_format)) {
        std::cout << "wrote " << p << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-phase text-aligned cooling-load forecasting: data, training, evaluation and benchmarks."};
    app.require_subcommand(1);
    app.fallthrough();

    Flags f;
    app.add_option("--config", f.config, "INI file with [run] [data] [synth] [split] [phase1] [phase2] [backbone] [grid]")
        ->check(CLI::ExistingFile);
    app.add_option("--seed", f.seed, "root seed (run.seed)");
    app.add_option("--out", f.out, "output directory (run.out)");
    app.add_option("--workers", f.workers, "grid worker threads (run.workers)");
    app.add_option("--set", f.sets, "override any key, e.g. --set phase2.lr=0.001");
    app.add_flag("--no-adpt", f.no_adpt, "drop the text prefix");
    app.add_flag("--no-egia", f.no_egia, "drop cross-variate attention");
    app.add_flag("--no-kari", f.no_kari, "use an untrained text encoder");
    app.add_flag("--quiet", f.quiet, "no per-cell progress from bench");

    auto* synth = app.add_subcommand("synth", "write <out>/data.csv from the synthetic generator");
    auto* align = app.add_subcommand("align", "phase 1: train the encoders, write <out>/alignment.json");
    auto* train = app.add_subcommand("train", "phase 2: train the forecaster, write <out>/model.json");
    auto* eval = app.add_subcommand("eval", "evaluate <out>/model.json and baselines on the test split");
    auto* bench = app.add_subcommand("bench", "run the experiment grid");
    auto* plot = app.add_subcommand("plot", "redraw plots from <out>/report.csv and traces.csv");

    CLI11_PARSE(app, argc, argv);

    try {
        const RunConfig c = resolve(f);
        std::cout << "# resolved configuration\n" << c.to_string() << std::flush;
        if (synth->parsed()) return cmd_synth(c);
        if (align->parsed()) return cmd_align(c);
        if (train->parsed()) return cmd_train(c);
        if (eval->parsed()) return cmd_eval(c);
        if (bench->parsed()) return cmd_bench(c, f);
        if (plot->parsed()) return cmd_plot(c);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
