// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run criteria 1-8
//   acceptance 1 4 6      run a subset
//
// Criterion 8 uses the telemetry file named by HYPERLOAD_DCDATA (target column
// from HYPERLOAD_TARGET, default cooling_load) and reports SKIP without one.

#include "hyperload/hyperload.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace hyperload;
namespace fs = std::filesystem;

namespace {

enum class Status { pass, fail, skip };

struct Outcome {
    Status status = Status::pass;
    std::string detail;
};

Matrix randn(Eigen::Index r, Eigen::Index c, Rng& rng, double sd = 1.0) { return random_normal(r, c, sd, rng); }

// Central differences, relative error per tensor.
std::vector<std::pair<std::string, double>> gradient_errors(const ParameterList& params,
                                                            const std::function<ad::Var()>& loss) {
    for (auto* p : params) {
        p->zero_grad();
    }
    ad::backward(loss());
    std::vector<std::pair<std::string, double>> out;
    const double h = 1e-6;
    for (auto* p : params) {
        Matrix numeric(p->value.rows(), p->value.cols());
        for (Eigen::Index i = 0; i < p->value.size(); ++i) {
            const double saved = p->value.data()[i];
            p->value.data()[i] = saved + h;
            const double up = loss().value()(0, 0);
            p->value.data()[i] = saved - h;
            const double down = loss().value()(0, 0);
            p->value.data()[i] = saved;
            numeric.data()[i] = (up - down) / (2.0 * h);
        }
        const double scale = std::max({p->grad.norm(), numeric.norm(), 1e-12});
        out.emplace_back(p->name, (p->grad - numeric).norm() / scale);
    }
    return out;
}

ForecasterConfig tiny_forecaster() {
    ForecasterConfig c;
    c.input_len = 8;
    c.horizon = 2;
    c.model_dim = 4;
    c.backbone.layers = 1;
    c.backbone.hidden_dim = 8;
    c.backbone.heads = 2;
    return c;
}

std::shared_ptr<AlignmentCheckpoint> tiny_text() {
    AlignmentConfig a;
    a.model_dim = 4;
    a.series_hidden = 8;
    a.text_layers = 1;
    a.text_heads = 2;
    a.token_budget = 96;
    auto ck = std::make_shared<AlignmentCheckpoint>();
    ck->model = AlignmentModel(a, 8, Vocabulary::build({"the cooling load is rising with low oscillation"}));
    set_trainable(ck->model.text_parameters(), false);
    return ck;
}

// ---------------------------------------------------------------------------

Outcome criterion_revin() {
    Rng rng(101);
    std::uniform_real_distribution<double> offset(-1000.0, 1000.0);
    std::uniform_real_distribution<double> log_scale(-2.0, 2.0);
    double worst_mean = 0.0;
    double worst_std = 0.0;
    double worst_rt = 0.0;
    for (int w = 0; w < 200; ++w) {
        Matrix x = randn(96, 8, rng);
        for (Eigen::Index c = 0; c < 8; ++c) {
            x.col(c) = (x.col(c) * std::pow(10.0, log_scale(rng))).array() + offset(rng);
        }
        const NormStats s = fit_stats(x, 0.0);
        const Matrix z = normalize(x, s);
        for (Eigen::Index c = 0; c < 8; ++c) {
            const double m = z.col(c).mean();
            const double sd = std::sqrt((z.col(c).array() - m).square().mean());
            worst_mean = std::max(worst_mean, std::abs(m));
            worst_std = std::max(worst_std, std::abs(sd - 1.0));
        }
        const std::size_t tc = static_cast<std::size_t>(w % 8);
        const Vector target = randn(24, 1, rng).col(0) * s.stds(static_cast<Eigen::Index>(tc)) +
                              Vector::Constant(24, s.means(static_cast<Eigen::Index>(tc)));
        const Vector back = denormalize(normalize_target(target, s, tc), s, tc);
        worst_rt = std::max(worst_rt, ((back - target).array().abs() / target.array().abs().max(1e-300)).maxCoeff());
    }
    char buf[200];
    std::snprintf(buf, sizeof buf, "max|mean| %.2e (<1e-6), max|std-1| %.2e (<1e-4), round trip %.2e (<1e-6)",
                  worst_mean, worst_std, worst_rt);
    return {worst_mean < 1e-6 && worst_std < 1e-4 && worst_rt < 1e-6 ? Status::pass : Status::fail, buf};
}

Outcome criterion_kari() {
    Rng rng(102);
    const double single = kari_loss(randn(1, 16, rng), randn(1, 16, rng), kKariTemperature);
    double worst_equal = 0.0;
    for (Eigen::Index b : {2, 4, 8}) {
        const Matrix t = Matrix::Ones(b, 16) * 0.7;
        const Matrix s = Matrix::Ones(b, 16) * 3.0;
        worst_equal = std::max(worst_equal, std::abs(kari_loss(t, s, kKariTemperature) - std::log(static_cast<double>(b))));
    }
    double worst_scale = 0.0;
    std::uniform_real_distribution<double> scale(0.01, 100.0);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix t = randn(6, 16, rng);
        const Matrix s = randn(6, 16, rng);
        const double base = kari_loss(t, s, kKariTemperature);
        Matrix t2 = t;
        Matrix s2 = s;
        t2.row(trial % 6) *= scale(rng);
        s2.row((trial + 3) % 6) *= scale(rng);
        worst_scale = std::max(worst_scale, std::abs(kari_loss(t2, s2, kKariTemperature) - base));
        worst_scale = std::max(worst_scale, std::abs(kari_loss(t * scale(rng), s, kKariTemperature) - base));
    }
    char buf[200];
    std::snprintf(buf, sizeof buf, "B=1 loss %.17g (=0), |loss-lnB| %.2e (<1e-6), rescale drift %.2e (<1e-6)", single,
                  worst_equal, worst_scale);
    return {single == 0.0 && worst_equal < 1e-6 && worst_scale < 1e-6 ? Status::pass : Status::fail, buf};
}

Outcome criterion_gradients() {
    Rng rng(103);
    double worst_kari = 0.0;
    for (auto dir : {LossDirection::text_anchor, LossDirection::symmetric}) {
        Parameter t("text", randn(4, 8, rng));
        Parameter s("series", randn(4, 8, rng));
        for (const auto& [name, e] :
             gradient_errors({&t, &s}, [&] { return kari_loss(ad::use(t), ad::use(s), kKariTemperature, dir); })) {
            worst_kari = std::max(worst_kari, e);
        }
    }
    ForecastModel model(tiny_forecaster(), 3, tiny_text());
    const Matrix x = randn(8, 3, rng);
    const Matrix target = randn(1, 2, rng);
    const Vector tv = model.template_vector(CatsTemplate{"plant", "forecast", "rising", "min 1"});
    double worst_model = 0.0;
    std::string worst_name;
    for (const auto& [name, e] : gradient_errors(model.trainable_parameters(),
                                                 [&] { return ad::mse(model.forward(x, &tv), target); })) {
        if (e >= worst_model) {
            worst_model = e;
            worst_name = name;
        }
    }
    char buf[240];
    std::snprintf(buf, sizeof buf, "kari worst %.2e, end-to-end worst %.2e at %s (<1e-3 per tensor)", worst_kari,
                  worst_model, worst_name.c_str());
    return {worst_kari < 1e-3 && worst_model < 1e-3 ? Status::pass : Status::fail, buf};
}

Outcome criterion_egia() {
    Rng rng(104);
    EgiaParams p(4, rng);
    p.query.value = randn(4, 4, rng);
    p.key.value = randn(4, 4, rng);
    p.value.value = randn(4, 4, rng);
    const Matrix x = randn(3, 4, rng, 2.0);

    // brute force
    const Matrix q = x * p.query.value;
    const Matrix k = x * p.key.value;
    const Matrix v = x * p.value.value;
    Matrix want = Matrix::Zero(3, 4);
    for (int i = 0; i < 3; ++i) {
        double e[3];
        double z = 0.0;
        for (int j = 0; j < 3; ++j) {
            e[j] = std::exp(q.row(i).dot(k.row(j)) / 2.0);
            z += e[j];
        }
        for (int j = 0; j < 3; ++j) {
            want.row(i) += e[j] / z * v.row(j);
        }
    }
    const double oracle = (egia_attention(x, p) - want).cwiseAbs().maxCoeff();

    Eigen::PermutationMatrix<Eigen::Dynamic> perm(3);
    perm.indices() << 1, 2, 0;
    const double equiv = (egia_attention(Matrix(perm * x), p) - perm * egia_attention(x, p)).cwiseAbs().maxCoeff();
    const double rows = (egia_weights(x, p).rowwise().sum() - Vector::Ones(3)).cwiseAbs().maxCoeff();
    char buf[200];
    std::snprintf(buf, sizeof buf, "oracle %.2e (<1e-6), permutation %.2e (<1e-5), row sums %.2e (<1e-6)", oracle,
                  equiv, rows);
    return {oracle < 1e-6 && equiv < 1e-5 && rows < 1e-6 ? Status::pass : Status::fail, buf};
}

Outcome criterion_freeze() {
    SynthConfig sc;
    sc.rows = 300;
    sc.columns = 3;
    const auto windows = prepare_windows(make_windows(synth_generate(sc, 5), 8, 2, 1), default_knowledge_base());
    ForecastModel model(tiny_forecaster(), 3, tiny_text());
    const auto prefixes = template_vectors(model, windows);
    struct Group {
        const char* name;
        ParameterList params;
        std::uint64_t before;
    };
    std::vector<Group> groups{{"embedding", model.embedding().parameters(), 0},
                              {"egia", model.egia().parameters(), 0},
                              {"prefix", model.prefix().parameters(), 0},
                              {"adapter", model.adapter_up().parameters(), 0},
                              {"head", model.head().parameters(), 0}};
    append(groups[3].params, model.adapter_down().parameters());
    for (auto& g : groups) {
        g.before = checksum(g.params);
    }
    const std::uint64_t backbone = checksum(model.backbone().parameters());
    const std::uint64_t text = checksum(model.text_checkpoint()->model.text_parameters());
    Adam opt(model.trainable_parameters(), AdamConfig{model.config().learning_rate});
    Rng rng(105);
    std::uniform_int_distribution<std::size_t> pick(0, windows.size() - 1);
    for (int step = 0; step < 50; ++step) {
        std::vector<std::size_t> batch;
        for (int b = 0; b < 16; ++b) {
            batch.push_back(pick(rng));
        }
        phase2_step(model, opt, windows, prefixes, batch);
    }
    const bool frozen_ok = checksum(model.backbone().parameters()) == backbone &&
                           checksum(model.text_checkpoint()->model.text_parameters()) == text;
    std::string unchanged;
    for (auto& g : groups) {
        if (checksum(g.params) == g.before) {
            unchanged += std::string(unchanged.empty() ? "" : ",") + g.name;
        }
    }
    std::string detail = std::string("backbone+text checksums ") + (frozen_ok ? "unchanged" : "CHANGED") +
                         ", trainable groups changed: " + (unchanged.empty() ? "5/5" : "missing " + unchanged);
    return {frozen_ok && unchanged.empty() ? Status::pass : Status::fail, detail};
}

// Shared desk-scale runs for criteria 6 and 7.
struct DeskScale {
    SeriesTable data = synth_generate(SynthConfig{}, 0);
    GridConfig config;
    std::optional<GridResult> full_data;

    DeskScale() { config.workers = std::max(1u, std::thread::hardware_concurrency()); }

    ExperimentGrid grid(double fraction, std::vector<Variant> variants, std::vector<std::uint64_t> seeds = {0, 1, 2}) const {
        ExperimentGrid g;
        g.fractions = {fraction};
        g.horizons = {24};
        g.input_len = 96;
        g.seeds = std::move(seeds);
        g.variants = std::move(variants);
        return g;
    }

    const GridResult& at_full() {
        if (!full_data) {
            full_data = run_grid(grid(1.0, {Variant::full, Variant::no_adpt, Variant::no_egia, Variant::no_kari,
                                            Variant::persistence}),
                                 data, config);
        }
        return *full_data;
    }
};

std::map<std::string, double> mean_mse(const GridResult& r, bool& all_ok) {
    std::map<std::string, double> sum;
    std::map<std::string, int> n;
    for (const auto& row : r.rows) {
        if (!row.ok) {
            all_ok = false;
            std::fprintf(stderr, "  row %s seed %llu failed: %s\n", row.variant.c_str(),
                         static_cast<unsigned long long>(row.seed), row.reason.c_str());
            continue;
        }
        sum[row.variant] += row.mse;
        n[row.variant] += 1;
    }
    for (auto& [k, v] : sum) {
        v /= n[k];
    }
    return sum;
}

Outcome criterion_ablation(DeskScale& desk) {
    bool all_ok = true;
    const auto m = mean_mse(desk.at_full(), all_ok);
    for (const auto& row : desk.at_full().rows) {
        std::fprintf(stderr, "  %-12s seed %llu  mse %.5f  mae %.5f\n", row.variant.c_str(),
                     static_cast<unsigned long long>(row.seed), row.mse, row.mae);
    }
    const char* ablations[] = {"wo_adpt", "wo_egia", "wo_kari"};
    const char* models[] = {"full", "wo_adpt", "wo_egia", "wo_kari"};
    bool ok = all_ok && m.count("persistence") && m.count("full");
    std::ostringstream d;
    d.precision(4);
    if (ok) {
        const double full = m.at("full");
        const double pers = m.at("persistence");
        d << "mean MSE full " << full;
        for (const char* a : ablations) {
            const bool within = m.count(a) && full <= m.at(a) * 1.05;
            ok = ok && within;
            d << ", " << a << " " << (m.count(a) ? m.at(a) : NAN) << (within ? "" : " (full worse by >5%)");
        }
        d << ", persistence " << pers;
        for (const char* v : models) {
            if (!m.count(v) || !(m.at(v) <= 0.9 * pers)) {
                ok = false;
                d << "; " << v << " does not beat persistence by 10%";
            }
        }
    } else {
        d << "grid rows failed";
    }
    return {ok ? Status::pass : Status::fail, d.str()};
}

Outcome criterion_scarcity(DeskScale& desk) {
    bool all_ok = true;
    const auto full = mean_mse(desk.at_full(), all_ok);
    const GridResult quarter = run_grid(desk.grid(0.25, {Variant::full, Variant::persistence}), desk.data, desk.config);
    const auto q = mean_mse(quarter, all_ok);
    const GridResult again = run_grid(desk.grid(0.25, {Variant::full, Variant::persistence}), desk.data, desk.config);
    bool bitwise = again.rows.size() == quarter.rows.size();
    for (std::size_t i = 0; bitwise && i < again.rows.size(); ++i) {
        const auto& a = again.rows[i];
        const auto& b = quarter.rows[i];
        bitwise = a.variant == b.variant && a.seed == b.seed &&
                  std::memcmp(&a.mse, &b.mse, sizeof(double)) == 0 && std::memcmp(&a.mae, &b.mae, sizeof(double)) == 0 &&
                  std::memcmp(&a.raw_mse, &b.raw_mse, sizeof(double)) == 0;
    }
    if (!all_ok || !full.count("full") || !q.count("full") || !q.count("persistence")) {
        return {Status::fail, "grid rows failed"};
    }
    const double degradation = (q.at("full") - full.at("full")) / full.at("full");
    const bool beats = q.at("full") < q.at("persistence");
    std::ostringstream d;
    d.precision(4);
    d << "full MSE 100% " << full.at("full") << " -> 25% " << q.at("full") << " (degradation " << 100.0 * degradation
      << "%), persistence at 25% " << q.at("persistence") << ", rerun " << (bitwise ? "bitwise identical" : "DIFFERS");
    return {std::isfinite(degradation) && beats && bitwise ? Status::pass : Status::fail, d.str()};
}

// Rows of report.csv satisfy mae <= sqrt(mse) within 1e-9.
std::string check_report(const std::string& dir, std::size_t expected_rows) {
    const auto rows = read_report(dir + "/report.csv");
    if (rows.size() != expected_rows) {
        return "report has " + std::to_string(rows.size()) + " rows, expected " + std::to_string(expected_rows);
    }
    for (const auto& r : rows) {
        if (!(r.mae <= std::sqrt(r.mse) + 1e-9)) {
            return "row " + r.variant + " violates mae <= sqrt(mse)";
        }
    }
    return "";
}

// A 41-column file in the telemetry layout (ISO timestamps, 5-minute cadence,
// a few blank cells), pushed through a small grid.
std::string dcdata_format_smoke() {
    SynthConfig sc;
    sc.rows = 700;
    sc.columns = 41;
    const SeriesTable t = synth_generate(sc, 9);
    const fs::path dir = fs::temp_directory_path() / "hyperload_acceptance_dcdata";
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "dcdata.csv");
        out << "timestamp";
        for (const auto& n : t.names()) {
            out << "," << n;
        }
        out << "\n";
        for (std::size_t r = 0; r < t.rows(); ++r) {
            out << format_iso8601(t.timestamps()[r]);
            for (std::size_t c = 0; c < t.cols(); ++c) {
                out << ",";
                if (!(r % 97 == 5 && c == 3)) {
                    out << t.values()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
                }
            }
            out << "\n";
        }
    }
    const SeriesTable loaded = load_dcdata((dir / "dcdata.csv").string(), "cooling_load");
    if (loaded.cols() != 41 || loaded.dropped_rows() == 0) {
        return "unexpected load result";
    }
    ExperimentGrid g;
    g.fractions = {1.0, 0.5};
    g.horizons = {4};
    g.seeds = {0};
    g.input_len = 16;
    GridConfig c;
    c.phase1.epochs = 1;
    c.phase1.batch_size = 8;
    c.phase1.model_dim = 8;
    c.phase1.series_hidden = 16;
    c.phase1.text_layers = 1;
    c.phase2.model_dim = 8;
    c.phase2.epochs = 1;
    c.phase2.backbone.layers = 1;
    c.phase2.backbone.hidden_dim = 16;
    c.stride = 4;
    const GridResult r = run_grid(g, loaded, c);
    for (const auto& row : r.rows) {
        if (!row.ok) {
            return "row failed: " + row.reason;
        }
    }
    emit_report(r.rows, dir.string());
    const std::string err = check_report(dir.string(), g.size());
    fs::remove_all(dir);
    return err;
}

Outcome criterion_real_data() {
    const std::string smoke = dcdata_format_smoke();
    const std::string smoke_note =
        smoke.empty() ? "format smoke on a synthetic 41-column file passed" : "format smoke FAILED: " + smoke;
    const char* path = std::getenv("HYPERLOAD_DCDATA");
    if (path == nullptr || *path == '\0') {
        return {smoke.empty() ? Status::skip : Status::fail, "HYPERLOAD_DCDATA not set; " + smoke_note};
    }
    const char* target = std::getenv("HYPERLOAD_TARGET");
    const SeriesTable table = load_dcdata(path, target ? target : "cooling_load");
    GridConfig c;
    c.workers = std::max(1u, std::thread::hardware_concurrency());
    const fs::path dir = fs::temp_directory_path() / "hyperload_acceptance_real";
    fs::remove_all(dir);
    c.output_dir = dir.string();
    const ExperimentGrid g;
    const GridResult r = run_grid(g, table, c);
    std::size_t failed = 0;
    for (const auto& row : r.rows) {
        failed += row.ok ? 0 : 1;
    }
    emit_report(r.rows, dir.string());
    const std::string err = failed ? std::to_string(failed) + " rows failed" : check_report(dir.string(), g.size());
    return {err.empty() && smoke.empty() ? Status::pass : Status::fail,
            std::string(path) + ": " + (err.empty() ? "216 rows, mae <= sqrt(mse) on every row" : err) + "; " +
                smoke_note};
}

struct Criterion {
    int id;
    const char* title;
    double budget_s;
    std::function<Outcome()> run;
};

} // namespace

int main(int argc, char** argv) {
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) {
        wanted.insert(std::atoi(argv[i]));
    }
    DeskScale* desk = nullptr;
    std::optional<DeskScale> desk_storage;
    auto get_desk = [&]() -> DeskScale& {
        if (!desk) {
            desk_storage.emplace();
            desk = &*desk_storage;
        }
        return *desk;
    };

    const std::vector<Criterion> criteria{
        {1, "RevIN statistics and round trip", 5.0, criterion_revin},
        {2, "KARI exact values", 1.0, criterion_kari},
        {3, "gradient checks", 60.0, criterion_gradients},
        {4, "EGIA oracle", 1.0, criterion_egia},
        {5, "freeze contract", 60.0, criterion_freeze},
        {6, "ablation direction", 7200.0, [&] { return criterion_ablation(get_desk()); }},
        {7, "scarcity robustness", 1800.0, [&] { return criterion_scarcity(get_desk()); }},
        {8, "real-data pipeline smoke", 1e9, criterion_real_data},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        if (!wanted.empty() && !wanted.count(c.id)) {
            continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {Status::fail, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (secs > c.budget_s && o.status == Status::pass) {
            o.status = Status::fail;
            o.detail += "; over the time budget";
        }
        const char* tag = o.status == Status::pass ? "PASS" : o.status == Status::fail ? "FAIL" : "SKIP";
        if (c.budget_s < 1e8) {
            std::printf("%s  criterion %d  %s: %s [%.1f s, budget %.0f s]\n", tag, c.id, c.title, o.detail.c_str(), secs,
                        c.budget_s);
        } else {
            std::printf("%s  criterion %d  %s: %s [%.1f s]\n", tag, c.id, c.title, o.detail.c_str(), secs);
        }
        std::fflush(stdout);
        failures += o.status == Status::fail ? 1 : 0;
    }
    return failures == 0 ? 0 : 1;
}
