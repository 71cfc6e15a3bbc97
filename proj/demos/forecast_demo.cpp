// End-to-end walk through the library on a small synthetic plant:
// generate data, align text and series, train the forecaster, forecast one window.

#include "hyperload/hyperload.hpp"

#include <cstdio>

using namespace hyperload;

int main() {
    SynthConfig sc;
    sc.rows = 1500;
    sc.columns = 4;
    const SeriesTable table = synth_generate(sc, 0);

    const std::size_t L = 48;
    const std::size_t K = 12;
    const Splits splits = chronological_split(table, SplitSpec{});
    const KnowledgeBase kb = with_horizon(default_knowledge_base(), K);
    const auto train = prepare_windows(make_windows(splits.train, L, K, 2), kb);
    const auto val = prepare_windows(make_windows(*splits.val, L, K, 2), kb);
    const auto test = prepare_windows(make_windows(*splits.test, L, K, 1), kb);
    std::printf("windows: %zu train, %zu val, %zu test\n", train.size(), val.size(), test.size());
    std::printf("\nexample template:\n%s\n\n", train.front().tpl.rendered().c_str());

    AlignmentConfig p1;
    p1.epochs = 2;
    p1.batch_size = 16;
    p1.model_dim = 16;
    auto aligned = std::make_shared<AlignmentCheckpoint>(train_phase1(train, L, p1));
    std::printf("phase 1 loss %.4f -> %.4f, retrieval accuracy %.3f\n", aligned->initial_loss, aligned->final_loss,
                retrieval_accuracy(aligned->model, train));

    ForecasterConfig p2;
    p2.input_len = L;
    p2.horizon = K;
    p2.model_dim = 16;
    p2.epochs = 4;
    ForecastModel model(p2, static_cast<std::size_t>(train.front().normalized.cols()), aligned);
    const Phase2Report rep = train_phase2(model, train, val);
    std::printf("phase 2: %zu steps, best epoch %zu, val mse %.4f\n", rep.steps, rep.best_epoch + 1,
                rep.val_mse[rep.best_epoch]);

    const auto prefixes = template_vectors(model, test);
    std::size_t i = 0;
    const Evaluation ev = evaluate_windows(test, [&](const PreparedWindow& w) {
        return model.predict_normalized(w, &prefixes[i++]);
    });
    const Evaluation pers = evaluate_windows(test, [](const PreparedWindow& w) { return baseline_persistence(w); });
    std::printf("test mse %.4f (persistence %.4f), mae %.4f (persistence %.4f)\n", ev.mse, pers.mse, ev.mae, pers.mae);

    const ForecastRecord r = model.predict(test[test.size() / 2]);
    std::printf("\nstep      truth   forecast\n");
    for (Eigen::Index k = 0; k < r.truth.size(); ++k) {
        std::printf("%4ld %10.3f %10.3f\n", static_cast<long>(k + 1), r.truth(k), r.denormalized(k));
    }
    return 0;
}
