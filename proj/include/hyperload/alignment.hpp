#pragma once

// Phase 1: a series encoder and a text encoder mapped into one d-dimensional
// space and trained jointly with a temperature-scaled contrastive loss over
// in-batch pairs. The text encoder is frozen afterwards and reused to build
// forecasting prefixes.

#include "hyperload/autograd.hpp"
#include "hyperload/errors.hpp"
#include "hyperload/nn.hpp"
#include "hyperload/sample.hpp"
#include "hyperload/serialize.hpp"
#include "hyperload/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

namespace hyperload {

enum class Pooling { mean, last };
enum class LossDirection { text_anchor, symmetric };

inline const char* to_string(Pooling p) { return p == Pooling::mean ? "mean" : "last"; }
inline const char* to_string(LossDirection d) { return d == LossDirection::text_anchor ? "text_anchor" : "symmetric"; }

inline Pooling parse_pooling(const std::string& s) {
    if (s == "mean") return Pooling::mean;
    if (s == "last") return Pooling::last;
    throw ConfigError("pooling must be 'mean' or 'last', got '" + s + "'");
}

inline LossDirection parse_loss_direction(const std::string& s) {
    if (s == "text_anchor") return LossDirection::text_anchor;
    if (s == "symmetric") return LossDirection::symmetric;
    throw ConfigError("loss direction must be 'text_anchor' or 'symmetric', got '" + s + "'");
}

inline constexpr double kKariTemperature = 0.05;

struct AlignmentConfig {
    std::size_t epochs = 4;
    double learning_rate = 1e-3;
    std::size_t batch_size = 64;
    std::size_t model_dim = 32;
    double temperature = kKariTemperature;
    Pooling pooling = Pooling::mean;
    LossDirection direction = LossDirection::text_anchor;
    std::uint64_t seed = 0;
    std::size_t token_budget = 128;
    std::size_t text_layers = 2;
    int text_heads = 2;
    std::size_t series_hidden = 64;

    void validate() const {
        if (batch_size < 2) {
            throw ConfigError("phase1.batch_size must be at least 2: the contrastive loss needs in-batch negatives");
        }
        if (model_dim < 1 || series_hidden < 1 || token_budget < 1) {
            throw ConfigError("phase1 dimensions must be positive");
        }
        if (!(temperature > 0.0)) {
            throw ConfigError("phase1.temperature must be positive");
        }
        if (!(learning_rate > 0.0)) {
            throw ConfigError("phase1.lr must be positive");
        }
        if (text_heads < 1 || model_dim % static_cast<std::size_t>(text_heads) != 0) {
            throw ConfigError("phase1.text_heads must divide phase1.d");
        }
    }
};

// ---------------------------------------------------------------------------
// Contrastive loss

namespace detail {

inline void warn(const std::string& msg) { std::cerr << "hyperload: warning: " << msg << '\n'; }

/// Row-normalizes; zero rows stay zero and are counted.
inline Matrix unit_rows(const Matrix& m, Vector& norms, int& zero_rows) {
    norms = m.rowwise().norm();
    Matrix out = m;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (norms(i) > 0.0) {
            out.row(i) /= norms(i);
        } else {
            out.row(i).setZero();
            ++zero_rows;
        }
    }
    return out;
}

inline Matrix softmax_rows(const Matrix& z) {
    Matrix p(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double mx = z.row(i).maxCoeff();
        RowVector e = (z.row(i).array() - mx).exp().matrix();
        p.row(i) = e / e.sum();
    }
    return p;
}

inline double anchor_loss(const Matrix& z) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double mx = z.row(i).maxCoeff();
        const double lse = mx + std::log((z.row(i).array() - mx).exp().sum());
        total += lse - z(i, i);
    }
    return total / static_cast<double>(z.rows());
}

/// d(unit(x))^T g for each row: (g - (g.u)u) / |x|.
inline Matrix unit_rows_backward(const Matrix& unit, const Vector& norms, const Matrix& g) {
    Matrix out = Matrix::Zero(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        if (norms(i) > 0.0) {
            const double dot = g.row(i).dot(unit.row(i));
            out.row(i) = (g.row(i) - dot * unit.row(i)) / norms(i);
        }
    }
    return out;
}

} // namespace detail

/// Cosine similarity matrix C(i, k) = cos(text_i, series_k); zero vectors give 0.
inline Matrix cosine_matrix(const Matrix& text, const Matrix& series) {
    Vector tn, sn;
    int zeros = 0;
    return detail::unit_rows(text, tn, zeros) * detail::unit_rows(series, sn, zeros).transpose();
}

/**
 * Mean over anchors i of -log softmax_k(cos(t_i, s_k) / tau)[i]; row i of both
 * matrices belongs to the same window. The symmetric direction averages the
 * text-anchored and series-anchored losses. The analytic gradient is
 * propagated to both inputs.
 */
inline ad::Var kari_loss(const ad::Var& text, const ad::Var& series, double tau,
                         LossDirection direction = LossDirection::text_anchor) {
    if (text.rows() != series.rows() || text.cols() != series.cols()) {
        throw ShapeError("kari_loss: text and series embeddings must both be B x d");
    }
    if (text.rows() < 1) {
        throw ShapeError("kari_loss: empty batch");
    }
    if (!(tau > 0.0)) {
        throw ConfigError("kari_loss: temperature must be positive");
    }
    Vector tn, sn;
    int zeros = 0;
    const Matrix tu = detail::unit_rows(text.value(), tn, zeros);
    const Matrix su = detail::unit_rows(series.value(), sn, zeros);
    if (zeros > 0) {
        detail::warn("kari_loss: " + std::to_string(zeros) + " zero-norm embedding(s); cosine similarity set to 0");
    }
    const Matrix z = tu * su.transpose() / tau;
    const double b = static_cast<double>(z.rows());
    Matrix out(1, 1);
    Matrix dz;
    const Matrix eye = Matrix::Identity(z.rows(), z.cols());
    if (direction == LossDirection::text_anchor) {
        out(0, 0) = detail::anchor_loss(z);
        dz = (detail::softmax_rows(z) - eye) / b;
    } else {
        out(0, 0) = 0.5 * (detail::anchor_loss(z) + detail::anchor_loss(z.transpose()));
        dz = 0.5 * ((detail::softmax_rows(z) - eye) + (detail::softmax_rows(z.transpose()) - eye).transpose()) / b;
    }
    return ad::make_op(std::move(out), {text, series}, [tu, su, tn, sn, dz, tau](ad::Node& self) {
        const Matrix dc = dz * (self.grad(0, 0) / tau);
        if (self.parents[0]->requires_grad) {
            self.parents[0]->accumulate(detail::unit_rows_backward(tu, tn, dc * su));
        }
        if (self.parents[1]->requires_grad) {
            self.parents[1]->accumulate(detail::unit_rows_backward(su, sn, dc.transpose() * tu));
        }
    });
}

inline double kari_loss(const Matrix& text, const Matrix& series, double tau,
                        LossDirection direction = LossDirection::text_anchor) {
    return kari_loss(ad::constant(text), ad::constant(series), tau, direction).value()(0, 0);
}

// ---------------------------------------------------------------------------
// Encoders

inline ad::Var pool_rows(const ad::Var& tokens, Pooling pooling) {
    return pooling == Pooling::mean ? ad::mean_rows(tokens) : ad::row(tokens, tokens.rows() - 1);
}

/** Shared two-layer feed-forward map from each variate's L values to d, then pooled over variates. */
struct SeriesEncoder {
    Linear hidden;
    Linear project;

    SeriesEncoder() = default;
    SeriesEncoder(Eigen::Index input_len, Eigen::Index hidden_width, Eigen::Index dim, Rng& rng)
        : hidden("series.hidden", input_len, hidden_width, rng), project("series.project", hidden_width, dim, rng) {}

    Eigen::Index input_length() const { return hidden.in_features(); }

    /// Per-variate tokens, M x d.
    ad::Var tokens(const ad::Var& normalized) {
        if (normalized.rows() != input_length()) {
            throw ShapeError("series encoder expects " + std::to_string(input_length()) + " steps, got " +
                             std::to_string(normalized.rows()));
        }
        return project(ad::gelu(hidden(ad::transpose(normalized))));
    }

    ad::Var operator()(const ad::Var& normalized, Pooling pooling) { return pool_rows(tokens(normalized), pooling); }

    ParameterList parameters() {
        ParameterList p = hidden.parameters();
        append(p, project.parameters());
        return p;
    }
};

/** Learned token and position embeddings, a stack of transformer blocks, a final norm, then pooling. */
struct TextEncoder {
    Parameter token_embedding;
    Parameter position_embedding;
    std::vector<TransformerBlock> blocks;
    LayerNorm final_norm;

    TextEncoder() = default;
    TextEncoder(Eigen::Index vocab_size, Eigen::Index budget, Eigen::Index dim, std::size_t layers, int heads, Rng& rng)
        : token_embedding("text.token_embedding", random_normal(vocab_size, dim, 1.0, rng)),
          position_embedding("text.position_embedding", random_normal(budget, dim, 0.1, rng)),
          final_norm("text.final_norm", dim) {
        blocks.reserve(layers);
        for (std::size_t l = 0; l < layers; ++l) {
            blocks.emplace_back("text.block" + std::to_string(l), dim, heads, 2 * dim, false, rng);
        }
    }

    Eigen::Index budget() const { return position_embedding.value.rows(); }

    ad::Var operator()(const TextTokenSequence& seq, Pooling pooling) {
        if (seq.ids.empty()) {
            throw ShapeError("text encoder: empty token sequence");
        }
        std::vector<int> ids = seq.ids;
        if (static_cast<Eigen::Index>(ids.size()) > budget()) {
            ids.resize(static_cast<std::size_t>(budget()));
        }
        ad::Var x = ad::add(ad::gather_rows(ad::use(token_embedding), ids),
                            ad::top_rows(ad::use(position_embedding), static_cast<Eigen::Index>(ids.size())));
        for (auto& block : blocks) {
            x = block(x);
        }
        return pool_rows(final_norm(x), pooling);
    }

    ParameterList parameters() {
        ParameterList p{&token_embedding, &position_embedding};
        for (auto& b : blocks) {
            append(p, b.parameters());
        }
        append(p, final_norm.parameters());
        return p;
    }
};

/** Both encoders with their vocabulary and configuration. */
struct AlignmentModel {
    AlignmentConfig config;
    std::size_t input_len = 0;
    Vocabulary vocab;
    SeriesEncoder series;
    TextEncoder text;

    AlignmentModel() = default;
    AlignmentModel(const AlignmentConfig& cfg, std::size_t input_length, Vocabulary vocabulary)
        : config(cfg), input_len(input_length), vocab(std::move(vocabulary)) {
        config.validate();
        Rng rng(derive_seed(config.seed, 11));
        const auto d = static_cast<Eigen::Index>(config.model_dim);
        series = SeriesEncoder(static_cast<Eigen::Index>(input_len), static_cast<Eigen::Index>(config.series_hidden), d,
                               rng);
        text = TextEncoder(static_cast<Eigen::Index>(vocab.size()), static_cast<Eigen::Index>(config.token_budget), d,
                           config.text_layers, config.text_heads, rng);
    }

    Eigen::Index dim() const { return static_cast<Eigen::Index>(config.model_dim); }

    TextTokenSequence tokenize(const CatsTemplate& tpl) const {
        return tokenize_template(vocab, tpl, config.token_budget);
    }

    ad::Var series_var(const Matrix& normalized) {
        if (!normalized.allFinite()) {
            throw NumericError("encode_series: input contains non-finite values");
        }
        return series(ad::constant(normalized), config.pooling);
    }

    ad::Var text_var(const TextTokenSequence& seq) {
        for (int id : seq.ids) {
            if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) {
                throw IndexError("token id " + std::to_string(id) + " outside vocabulary");
            }
        }
        return text(seq, config.pooling);
    }

    Vector encode_series(const Matrix& normalized) { return series_var(normalized).value().row(0).transpose(); }
    Vector encode_text(const TextTokenSequence& seq) { return text_var(seq).value().row(0).transpose(); }
    Vector encode_template(const CatsTemplate& tpl) { return encode_text(tokenize(tpl)); }

    ParameterList series_parameters() { return series.parameters(); }
    ParameterList text_parameters() { return text.parameters(); }
    ParameterList parameters() {
        ParameterList p = series_parameters();
        append(p, text_parameters());
        return p;
    }
    bool text_frozen() {
        const auto p = text_parameters();
        return std::none_of(p.begin(), p.end(), [](const Parameter* q) { return q->trainable; });
    }
};

inline Json to_json(const AlignmentConfig& c) {
    return Json{{"epochs", c.epochs},
                {"lr", c.learning_rate},
                {"batch_size", c.batch_size},
                {"d", c.model_dim},
                {"temperature", c.temperature},
                {"pooling", to_string(c.pooling)},
                {"loss_direction", to_string(c.direction)},
                {"seed", c.seed},
                {"token_budget", c.token_budget},
                {"text_layers", c.text_layers},
                {"text_heads", c.text_heads},
                {"series_hidden", c.series_hidden}};
}

inline AlignmentConfig alignment_config_from_json(const Json& j) {
    AlignmentConfig c;
    c.epochs = j.at("epochs").get<std::size_t>();
    c.learning_rate = j.at("lr").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.model_dim = j.at("d").get<std::size_t>();
    c.temperature = j.at("temperature").get<double>();
    c.pooling = parse_pooling(j.at("pooling").get<std::string>());
    c.direction = parse_loss_direction(j.at("loss_direction").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();
    c.token_budget = j.at("token_budget").get<std::size_t>();
    c.text_layers = j.at("text_layers").get<std::size_t>();
    c.text_heads = j.at("text_heads").get<int>();
    c.series_hidden = j.at("series_hidden").get<std::size_t>();
    return c;
}

inline constexpr const char* kAlignmentFormat = "hyperload-alignment/1";

/** Trained encoders plus run metadata. `trained` is false for the random-text-encoder ablation. */
struct AlignmentCheckpoint {
    AlignmentModel model;
    bool trained = false;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::vector<double> epoch_losses;

    Json to_json() {
        return Json{{"format", kAlignmentFormat},
                    {"config", hyperload::to_json(model.config)},
                    {"input_len", model.input_len},
                    {"vocab", model.vocab.tokens()},
                    {"text_frozen", model.text_frozen()},
                    {"metadata",
                     {{"seed", model.config.seed},
                      {"epochs", model.config.epochs},
                      {"trained", trained},
                      {"initial_loss", initial_loss},
                      {"final_loss", final_loss},
                      {"epoch_losses", epoch_losses}}},
                    {"params", save_parameters(model.parameters())}};
    }

    static AlignmentCheckpoint from_json(const Json& j) {
        require_format(j, kAlignmentFormat);
        try {
            AlignmentCheckpoint c;
            c.model = AlignmentModel(alignment_config_from_json(j.at("config")), j.at("input_len").get<std::size_t>(),
                                     Vocabulary::from_tokens(j.at("vocab").get<std::vector<std::string>>()));
            load_parameters(c.model.parameters(), j.at("params"));
            set_trainable(c.model.text_parameters(), !j.at("text_frozen").get<bool>());
            const auto& meta = j.at("metadata");
            c.trained = meta.at("trained").get<bool>();
            c.initial_loss = meta.at("initial_loss").get<double>();
            c.final_loss = meta.at("final_loss").get<double>();
            c.epoch_losses = meta.at("epoch_losses").get<std::vector<double>>();
            return c;
        } catch (const Json::exception& e) {
            throw CheckpointError(std::string("malformed alignment checkpoint: ") + e.what());
        }
    }

    void save(const std::string& path) { write_json_file(to_json(), path); }
    static AlignmentCheckpoint load(const std::string& path) { return from_json(read_json_file(path)); }
};

// ---------------------------------------------------------------------------
// Training

/// Vocabulary over the rendered templates of a window set.
inline Vocabulary build_vocabulary(const std::vector<PreparedWindow>& windows) {
    std::vector<std::string> corpus;
    corpus.reserve(windows.size());
    for (const auto& w : windows) {
        corpus.push_back(w.tpl.rendered());
    }
    return Vocabulary::build(corpus);
}

namespace detail {

struct AlignmentBatch {
    std::vector<ad::Var> text;
    std::vector<ad::Var> series;
};

inline ad::Var batch_loss(AlignmentModel& model, const std::vector<PreparedWindow>& data,
                          const std::vector<TextTokenSequence>& tokens, const std::vector<std::size_t>& idx,
                          std::size_t begin, std::size_t count) {
    std::vector<ad::Var> t;
    std::vector<ad::Var> s;
    for (std::size_t k = begin; k < begin + count; ++k) {
        t.push_back(model.text_var(tokens[idx[k]]));
        s.push_back(model.series_var(data[idx[k]].normalized));
    }
    return kari_loss(ad::concat_rows(t), ad::concat_rows(s), model.config.temperature, model.config.direction);
}

} // namespace detail

/// Mean loss over consecutive full batches in data order.
inline double evaluate_alignment_loss(AlignmentModel& model, const std::vector<PreparedWindow>& data) {
    const std::size_t b = model.config.batch_size;
    std::vector<TextTokenSequence> tokens;
    for (const auto& w : data) {
        tokens.push_back(model.tokenize(w.tpl));
    }
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start + b <= data.size(); start += b) {
        total += detail::batch_loss(model, data, tokens, idx, start, b).value()(0, 0);
        ++batches;
    }
    if (batches == 0) {
        throw ConfigError("need at least batch_size = " + std::to_string(b) + " windows, got " +
                          std::to_string(data.size()));
    }
    return total / static_cast<double>(batches);
}

/// Fraction of anchors whose most similar in-batch series is their own pair.
inline double retrieval_accuracy(AlignmentModel& model, const std::vector<PreparedWindow>& data) {
    const std::size_t b = model.config.batch_size;
    std::size_t hits = 0;
    std::size_t total = 0;
    for (std::size_t start = 0; start + b <= data.size(); start += b) {
        Matrix t(static_cast<Eigen::Index>(b), model.dim());
        Matrix s(static_cast<Eigen::Index>(b), model.dim());
        for (std::size_t k = 0; k < b; ++k) {
            t.row(static_cast<Eigen::Index>(k)) = model.encode_template(data[start + k].tpl).transpose();
            s.row(static_cast<Eigen::Index>(k)) = model.encode_series(data[start + k].normalized).transpose();
        }
        const Matrix c = cosine_matrix(t, s);
        for (Eigen::Index i = 0; i < c.rows(); ++i) {
            Eigen::Index best = 0;
            c.row(i).maxCoeff(&best);
            hits += best == i ? 1 : 0;
            ++total;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

/// Randomly initialized encoders with a frozen text side; the phase-1 ablation.
inline AlignmentCheckpoint untrained_alignment(const std::vector<PreparedWindow>& windows, std::size_t input_len,
                                               const AlignmentConfig& config) {
    AlignmentCheckpoint c;
    c.model = AlignmentModel(config, input_len, build_vocabulary(windows));
    set_trainable(c.model.text_parameters(), false);
    c.trained = false;
    return c;
}

/**
 * Trains both encoders with Adam on shuffled full batches (a trailing partial
 * batch is skipped so every step sees batch_size - 1 negatives per anchor).
 * Returns the checkpoint with the text encoder frozen.
 */
inline AlignmentCheckpoint train_phase1(const std::vector<PreparedWindow>& windows, std::size_t input_len,
                                        const AlignmentConfig& config) {
    config.validate();
    if (windows.size() < config.batch_size) {
        throw ConfigError("phase 1 needs at least batch_size = " + std::to_string(config.batch_size) +
                          " windows, got " + std::to_string(windows.size()));
    }
    AlignmentCheckpoint ckpt;
    ckpt.model = AlignmentModel(config, input_len, build_vocabulary(windows));
    AlignmentModel& model = ckpt.model;

    std::vector<TextTokenSequence> tokens;
    tokens.reserve(windows.size());
    for (const auto& w : windows) {
        tokens.push_back(model.tokenize(w.tpl));
    }
    ckpt.initial_loss = evaluate_alignment_loss(model, windows);

    Adam opt(model.parameters(), AdamConfig{config.learning_rate});
    Rng shuffle_rng(derive_seed(config.seed, 12));
    std::vector<std::size_t> idx(windows.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(idx.begin(), idx.end(), shuffle_rng);
        double sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start + config.batch_size <= idx.size(); start += config.batch_size) {
            opt.zero_grad();
            ad::Var loss = detail::batch_loss(model, windows, tokens, idx, start, config.batch_size);
            ad::backward(loss);
            opt.step();
            sum += loss.value()(0, 0);
            ++steps;
        }
        ckpt.epoch_losses.push_back(sum / static_cast<double>(steps));
    }
    set_trainable(model.text_parameters(), false);
    ckpt.final_loss = evaluate_alignment_loss(model, windows);
    ckpt.trained = true;
    return ckpt;
}

} // namespace hyperload
