#pragma once

// Phase 2: variate tokens, cross-variate attention, a text prefix from the
// frozen phase-1 encoder, a frozen transformer backbone behind learnable
// width adapters, and a linear head producing the K-step normalized forecast.

#include "hyperload/alignment.hpp"
#include "hyperload/autograd.hpp"
#include "hyperload/errors.hpp"
#include "hyperload/nn.hpp"
#include "hyperload/revin.hpp"
#include "hyperload/sample.hpp"
#include "hyperload/serialize.hpp"

#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace hyperload {

/// Switches for the three ablation variants. All on is the full model.
struct Ablation {
    bool adpt = true;  // text prefix
    bool egia = true;  // cross-variate attention
    bool kari = true;  // phase-1 alignment of the text encoder

    friend bool operator==(const Ablation&, const Ablation&) = default;
};

enum class BackboneKind { frozen_random, weights_file };
enum class HeadMode { flatten, last_token };

inline const char* to_string(BackboneKind k) { return k == BackboneKind::frozen_random ? "frozen-random" : "weights-file"; }
inline const char* to_string(HeadMode h) { return h == HeadMode::flatten ? "flatten" : "last_token"; }

inline BackboneKind parse_backbone_kind(const std::string& s) {
    if (s == "frozen-random") return BackboneKind::frozen_random;
    if (s == "weights-file") return BackboneKind::weights_file;
    throw ConfigError("backbone kind must be 'frozen-random' or 'weights-file', got '" + s + "'");
}

inline HeadMode parse_head_mode(const std::string& s) {
    if (s == "flatten") return HeadMode::flatten;
    if (s == "last_token") return HeadMode::last_token;
    throw ConfigError("head mode must be 'flatten' or 'last_token', got '" + s + "'");
}

struct BackboneSpec {
    BackboneKind kind = BackboneKind::frozen_random;
    std::size_t layers = 2;
    std::size_t hidden_dim = 64;
    int heads = 4;
    bool causal = true;
    std::uint64_t seed = 7;
    std::string weights_path;

    void validate() const {
        if (layers < 1 || hidden_dim < 1) {
            throw ConfigError("backbone layers and hidden_dim must be positive");
        }
        if (heads < 1 || hidden_dim % static_cast<std::size_t>(heads) != 0) {
            throw ConfigError("backbone heads must divide hidden_dim");
        }
        if (kind == BackboneKind::weights_file && weights_path.empty()) {
            throw ConfigError("backbone kind 'weights-file' needs a weights path");
        }
    }
};

struct ForecasterConfig {
    std::size_t input_len = 96;
    std::size_t horizon = 24;
    std::size_t model_dim = 32;
    std::size_t epochs = 20;
    double learning_rate = 7e-4;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    std::size_t prefix_len = 1;
    int egia_heads = 1;
    HeadMode head_mode = HeadMode::flatten;
    bool early_stopping = true;
    std::size_t patience = 3;
    std::size_t max_steps = 0;  // 0 = no cap
    double revin_epsilon = kDefaultRevinEpsilon;
    BackboneSpec backbone;
    Ablation ablation;

    void validate() const {
        if (input_len < 2 || horizon < 1) {
            throw ConfigError("L must be at least 2 and K at least 1");
        }
        if (model_dim < 1 || batch_size < 1) {
            throw ConfigError("phase2 d and batch_size must be positive");
        }
        if (!(learning_rate > 0.0)) {
            throw ConfigError("phase2.lr must be positive");
        }
        if (prefix_len < 1) {
            throw ConfigError("phase2.prefix_len must be at least 1");
        }
        if (egia_heads < 1 || model_dim % static_cast<std::size_t>(egia_heads) != 0) {
            throw ConfigError("phase2.egia_heads must divide d");
        }
        if (!(revin_epsilon >= 0.0)) {
            throw ConfigError("revin epsilon must be non-negative");
        }
        backbone.validate();
    }
};

// ---------------------------------------------------------------------------
// Components

/// Shared linear map from a variate's L normalized values to a d-dimensional token.
struct VariateEmbedding {
    Linear map;

    VariateEmbedding() = default;
    VariateEmbedding(Eigen::Index input_len, Eigen::Index dim, Rng& rng) : map("embed", input_len, dim, rng) {}

    Eigen::Index input_length() const { return map.in_features(); }

    /// L x M normalized inputs -> M x d tokens.
    ad::Var operator()(const ad::Var& normalized) {
        if (normalized.rows() != input_length()) {
            throw ShapeError("embed_variates: expected " + std::to_string(input_length()) + " steps, got " +
                             std::to_string(normalized.rows()));
        }
        return map(ad::transpose(normalized));
    }

    ParameterList parameters() { return map.parameters(); }
};

/**
 * Query, key and value projections for cross-variate attention. Initialized at
 * the identity plus small noise, so the initial attention favours each
 * variate's own token instead of averaging all tokens together.
 */
struct EgiaParams {
    Parameter query;
    Parameter key;
    Parameter value;

    EgiaParams() = default;
    EgiaParams(Eigen::Index dim, Rng& rng)
        : query("egia.query", Matrix::Identity(dim, dim) + random_normal(dim, dim, 0.02, rng)),
          key("egia.key", Matrix::Identity(dim, dim) + random_normal(dim, dim, 0.02, rng)),
          value("egia.value", Matrix::Identity(dim, dim) + random_normal(dim, dim, 0.02, rng)) {}

    ParameterList parameters() { return {&query, &key, &value}; }
};

/// softmax(Q K^T / sqrt(d_h)) H per head over the M variate tokens; heads are concatenated.
inline ad::Var egia_attention(const ad::Var& tokens, EgiaParams& params, int heads = 1) {
    const Eigen::Index d = tokens.cols();
    if (params.query.value.rows() != d || params.query.value.cols() != d) {
        throw ShapeError("egia_attention: projections must be " + std::to_string(d) + "x" + std::to_string(d));
    }
    const ad::Var q = ad::matmul(tokens, ad::use(params.query));
    const ad::Var k = ad::matmul(tokens, ad::use(params.key));
    const ad::Var h = ad::matmul(tokens, ad::use(params.value));
    if (heads == 1) {
        const double inv = 1.0 / std::sqrt(static_cast<double>(d));
        return ad::matmul(ad::softmax_rows(ad::scale(ad::matmul(q, ad::transpose(k)), inv)), h);
    }
    const Eigen::Index w = d / heads;
    const double inv = 1.0 / std::sqrt(static_cast<double>(w));
    std::vector<ad::Var> parts;
    for (int i = 0; i < heads; ++i) {
        const ad::Var qi = ad::cols(q, i * w, w);
        const ad::Var ki = ad::cols(k, i * w, w);
        parts.push_back(
            ad::matmul(ad::softmax_rows(ad::scale(ad::matmul(qi, ad::transpose(ki)), inv)), ad::cols(h, i * w, w)));
    }
    return ad::concat_cols(parts);
}

inline Matrix egia_attention(const Matrix& tokens, EgiaParams& params, int heads = 1) {
    return egia_attention(ad::constant(tokens), params, heads).value();
}

/// Single-head attention weights softmax(Q K^T / sqrt(d)); rows sum to one.
inline Matrix egia_weights(const Matrix& tokens, const EgiaParams& params) {
    const Matrix q = tokens * params.query.value;
    const Matrix k = tokens * params.key.value;
    return ad::softmax_rows(ad::constant(q * k.transpose() / std::sqrt(static_cast<double>(tokens.cols())))).value();
}

/// Maps the template vector to prefix_len rows; row p is v * W_p with every W_p starting at the identity.
struct PrefixExpansion {
    std::vector<Parameter> maps;

    PrefixExpansion() = default;
    PrefixExpansion(std::size_t prefix_len, Eigen::Index dim) {
        maps.reserve(prefix_len);
        for (std::size_t p = 0; p < prefix_len; ++p) {
            maps.emplace_back("prefix.map" + std::to_string(p), Matrix::Identity(dim, dim));
        }
    }

    std::size_t length() const { return maps.size(); }

    /// 1 x d template vector -> prefix_len x d.
    ad::Var operator()(const ad::Var& template_vec) {
        std::vector<ad::Var> rows;
        rows.reserve(maps.size());
        for (auto& m : maps) {
            rows.push_back(ad::matmul(template_vec, ad::use(m)));
        }
        return ad::concat_rows(rows);
    }

    ParameterList parameters() {
        ParameterList p;
        for (auto& m : maps) {
            p.push_back(&m);
        }
        return p;
    }
};

/// [prefix; variate tokens]; prefix first.
inline ad::Var assemble_input(const ad::Var& prefix, const ad::Var& variates) {
    if (prefix.rows() < 1) {
        throw ShapeError("assemble_input: prefix must have at least one row");
    }
    if (prefix.cols() != variates.cols()) {
        throw ShapeError("assemble_input: prefix width " + std::to_string(prefix.cols()) + " differs from token width " +
                         std::to_string(variates.cols()));
    }
    return ad::concat_rows({prefix, variates});
}

/**
 * Frozen transformer stack. With kind frozen-random the weights come from a
 * seeded initialization and are never updated; a weights file supplies a
 * pretrained stack of the same geometry instead.
 */
struct Backbone {
    BackboneSpec spec;
    std::vector<TransformerBlock> blocks;
    LayerNorm final_norm;

    Backbone() = default;
    explicit Backbone(const BackboneSpec& s) : spec(s) {
        spec.validate();
        Rng rng(derive_seed(spec.seed, 31));
        const auto width = static_cast<Eigen::Index>(spec.hidden_dim);
        blocks.reserve(spec.layers);
        for (std::size_t l = 0; l < spec.layers; ++l) {
            blocks.emplace_back("backbone.block" + std::to_string(l), width, spec.heads, 4 * width, spec.causal, rng,
                                0.5);
        }
        final_norm = LayerNorm("backbone.final_norm", width);
        if (spec.kind == BackboneKind::weights_file) {
            load_weights(spec.weights_path);
        }
        set_trainable(parameters(), false);
    }

    ad::Var operator()(const ad::Var& x) {
        ad::Var h = x;
        for (auto& b : blocks) {
            h = b(h);
        }
        return final_norm(h);
    }

    ParameterList parameters() {
        ParameterList p;
        for (auto& b : blocks) {
            append(p, b.parameters());
        }
        append(p, final_norm.parameters());
        return p;
    }

    void save_weights(const std::string& path) {
        write_json_file(Json{{"format", "hyperload-backbone/1"},
                             {"layers", spec.layers},
                             {"hidden_dim", spec.hidden_dim},
                             {"heads", spec.heads},
                             {"params", save_parameters(parameters())}},
                        path);
    }

    void load_weights(const std::string& path) {
        const Json j = read_json_file(path);
        require_format(j, "hyperload-backbone/1");
        if (j.at("layers").get<std::size_t>() != spec.layers || j.at("hidden_dim").get<std::size_t>() != spec.hidden_dim ||
            j.at("heads").get<int>() != spec.heads) {
            throw CheckpointError("backbone weights '" + path + "' do not match layers=" + std::to_string(spec.layers) +
                                  " hidden_dim=" + std::to_string(spec.hidden_dim) +
                                  " heads=" + std::to_string(spec.heads));
        }
        load_parameters(parameters(), j.at("params"));
    }
};

// ---------------------------------------------------------------------------
// Model

struct ForecastRecord {
    std::size_t window_id = 0;  // source row of the window's first input step
    Vector normalized;          // K
    Vector denormalized;        // K
    Vector truth;               // K, raw units
    Vector truth_normalized;    // K
};

class ForecastModel {
public:
    ForecastModel() = default;

    /// `text` may be null when the prefix is ablated.
    ForecastModel(const ForecasterConfig& config, std::size_t variates, std::shared_ptr<AlignmentCheckpoint> text)
        : config_(config), variates_(variates), text_(std::move(text)) {
        config_.validate();
        if (variates_ < 1) {
            throw ConfigError("forecaster needs at least one variate");
        }
        if (config_.ablation.adpt) {
            if (!text_) {
                throw ConfigError("the text prefix needs a phase-1 checkpoint");
            }
            if (static_cast<std::size_t>(text_->model.dim()) != config_.model_dim) {
                throw ShapeError("phase-1 d = " + std::to_string(text_->model.dim()) + " differs from phase-2 d = " +
                                 std::to_string(config_.model_dim));
            }
            set_trainable(text_->model.parameters(), false);
        }
        const auto d = static_cast<Eigen::Index>(config_.model_dim);
        const auto hidden = static_cast<Eigen::Index>(config_.backbone.hidden_dim);
        {
            Rng rng(derive_seed(config_.seed, 21));
            embedding_ = VariateEmbedding(static_cast<Eigen::Index>(config_.input_len), d, rng);
        }
        {
            Rng rng(derive_seed(config_.seed, 22));
            egia_ = EgiaParams(d, rng);
        }
        prefix_ = PrefixExpansion(config_.ablation.adpt ? config_.prefix_len : 0, d);
        {
            Rng rng(derive_seed(config_.seed, 23));
            adapter_up_ = Linear("adapter.up", d, hidden, rng);
            adapter_down_ = Linear("adapter.down", hidden, d, rng);
        }
        backbone_ = Backbone(config_.backbone);
        {
            Rng rng(derive_seed(config_.seed, 24));
            const Eigen::Index head_in =
                config_.head_mode == HeadMode::flatten ? static_cast<Eigen::Index>(sequence_length()) * d : d;
            head_ = Linear("head", head_in, static_cast<Eigen::Index>(config_.horizon), rng);
            head_.weight.value *= 0.1;
        }
    }

    const ForecasterConfig& config() const { return config_; }
    std::size_t variates() const { return variates_; }
    std::size_t sequence_length() const { return variates_ + (config_.ablation.adpt ? config_.prefix_len : 0); }
    const std::shared_ptr<AlignmentCheckpoint>& text_checkpoint() const { return text_; }

    VariateEmbedding& embedding() { return embedding_; }
    EgiaParams& egia() { return egia_; }
    PrefixExpansion& prefix() { return prefix_; }
    Linear& adapter_up() { return adapter_up_; }
    Linear& adapter_down() { return adapter_down_; }
    Backbone& backbone() { return backbone_; }
    Linear& head() { return head_; }

    /// The trainable groups: embedding, attention, prefix, adapters, head.
    ParameterList trainable_parameters() {
        ParameterList p = embedding_.parameters();
        if (config_.ablation.egia) {
            append(p, egia_.parameters());
        }
        append(p, prefix_.parameters());
        append(p, adapter_up_.parameters());
        append(p, adapter_down_.parameters());
        append(p, head_.parameters());
        return p;
    }

    ParameterList frozen_parameters() {
        ParameterList p = backbone_.parameters();
        if (text_) {
            append(p, text_->model.text_parameters());
        }
        return p;
    }

    /// Every stored tensor, in archive order.
    ParameterList all_parameters() {
        ParameterList p = embedding_.parameters();
        append(p, egia_.parameters());
        append(p, prefix_.parameters());
        append(p, adapter_up_.parameters());
        append(p, adapter_down_.parameters());
        append(p, head_.parameters());
        return p;
    }

    /// Frozen text encoder output for a template, 1 x d.
    Vector template_vector(const CatsTemplate& tpl) {
        if (!text_) {
            throw ConfigError("template_vector: no text encoder (prefix ablated)");
        }
        return text_->model.encode_template(tpl);
    }

    ad::Var embed(const Matrix& normalized) {
        if (!normalized.allFinite()) {
            throw NumericError("forecaster input contains non-finite values");
        }
        if (normalized.cols() != static_cast<Eigen::Index>(variates_)) {
            throw ShapeError("forecaster expects " + std::to_string(variates_) + " variates, got " +
                             std::to_string(normalized.cols()));
        }
        return embedding_(ad::constant(normalized));
    }

    ad::Var backbone_forward(const ad::Var& v_in) { return adapter_down_(backbone_(adapter_up_(v_in))); }

    ad::Var project_head(const ad::Var& hidden) {
        if (config_.head_mode == HeadMode::flatten) {
            if (hidden.rows() * hidden.cols() != head_.in_features()) {
                throw ShapeError("project_head: head expects " + std::to_string(head_.in_features()) +
                                 " inputs, got " + std::to_string(hidden.rows() * hidden.cols()));
            }
            return head_(ad::flatten(hidden));
        }
        return head_(ad::row(hidden, hidden.rows() - 1));
    }

    /**
     * Normalized inputs (L x M) and, unless the prefix is ablated, the frozen
     * template vector (d) -> 1 x K normalized forecast.
     */
    ad::Var forward(const Matrix& normalized, const Vector* template_vec) {
        ad::Var tokens = embed(normalized);
        ad::Var mixed = config_.ablation.egia ? egia_attention(tokens, egia_, config_.egia_heads) : tokens;
        ad::Var v_in = mixed;
        if (config_.ablation.adpt) {
            if (template_vec == nullptr) {
                throw ConfigError("forward: template vector required when the prefix is enabled");
            }
            if (template_vec->size() != static_cast<Eigen::Index>(config_.model_dim)) {
                throw ShapeError("forward: template vector has wrong width");
            }
            v_in = assemble_input(prefix_(ad::constant(template_vec->transpose())), mixed);
        }
        return project_head(backbone_forward(v_in));
    }

    Vector predict_normalized(const PreparedWindow& w, const Vector* template_vec) {
        return forward(w.normalized, template_vec).value().row(0).transpose();
    }

    ForecastRecord predict(const PreparedWindow& w) {
        std::optional<Vector> tv;
        if (config_.ablation.adpt) {
            tv = template_vector(w.tpl);
        }
        ForecastRecord r;
        r.window_id = w.source_row;
        r.normalized = predict_normalized(w, tv ? &*tv : nullptr);
        r.denormalized = denormalize(r.normalized, w.stats, w.target_col);
        r.truth = w.target_raw;
        r.truth_normalized = w.target_normalized;
        return r;
    }

    /// Full composition from a raw window: normalize, template, forecast, invert.
    ForecastRecord predict(const TimeWindow& window, const KnowledgeBase& kb) {
        if (window.inputs.rows() != static_cast<Eigen::Index>(config_.input_len)) {
            throw ShapeError("predict: window length differs from the model's L");
        }
        return predict(prepare_window(window, with_horizon(kb, config_.horizon), config_.revin_epsilon));
    }

    Json to_json() {
        return Json{{"format", "hyperload-model/1"},
                    {"config", config_json()},
                    {"variates", variates_},
                    {"revin", {{"scope", "per-window"}, {"epsilon", config_.revin_epsilon}}},
                    {"backbone_checksum", std::to_string(checksum(backbone_.parameters()))},
                    {"text_checkpoint", text_ ? text_->to_json() : Json(nullptr)},
                    {"params", save_parameters(all_parameters())}};
    }

    static ForecastModel from_json(const Json& j) {
        require_format(j, "hyperload-model/1");
        try {
            const ForecasterConfig cfg = config_from_json(j.at("config"));
            std::shared_ptr<AlignmentCheckpoint> text;
            if (!j.at("text_checkpoint").is_null()) {
                text = std::make_shared<AlignmentCheckpoint>(AlignmentCheckpoint::from_json(j.at("text_checkpoint")));
            }
            ForecastModel m(cfg, j.at("variates").get<std::size_t>(), text);
            load_parameters(m.all_parameters(), j.at("params"));
            if (std::to_string(checksum(m.backbone_.parameters())) != j.at("backbone_checksum").get<std::string>()) {
                throw CheckpointError("backbone weights differ from those the model was trained with");
            }
            return m;
        } catch (const Json::exception& e) {
            throw CheckpointError(std::string("malformed model checkpoint: ") + e.what());
        }
    }

    void save(const std::string& path) { write_json_file(to_json(), path); }
    static ForecastModel load(const std::string& path) { return from_json(read_json_file(path)); }

    Json config_json() const {
        const auto& c = config_;
        return Json{{"L", c.input_len},
                    {"K", c.horizon},
                    {"d", c.model_dim},
                    {"epochs", c.epochs},
                    {"lr", c.learning_rate},
                    {"batch_size", c.batch_size},
                    {"seed", c.seed},
                    {"prefix_len", c.prefix_len},
                    {"egia_heads", c.egia_heads},
                    {"head_mode", to_string(c.head_mode)},
                    {"early_stopping", c.early_stopping},
                    {"patience", c.patience},
                    {"max_steps", c.max_steps},
                    {"revin_epsilon", c.revin_epsilon},
                    {"backbone",
                     {{"kind", to_string(c.backbone.kind)},
                      {"layers", c.backbone.layers},
                      {"hidden_dim", c.backbone.hidden_dim},
                      {"heads", c.backbone.heads},
                      {"causal", c.backbone.causal},
                      {"seed", c.backbone.seed},
                      {"weights_path", c.backbone.weights_path}}},
                    {"ablation", {{"adpt", c.ablation.adpt}, {"egia", c.ablation.egia}, {"kari", c.ablation.kari}}}};
    }

    static ForecasterConfig config_from_json(const Json& j) {
        ForecasterConfig c;
        c.input_len = j.at("L").get<std::size_t>();
        c.horizon = j.at("K").get<std::size_t>();
        c.model_dim = j.at("d").get<std::size_t>();
        c.epochs = j.at("epochs").get<std::size_t>();
        c.learning_rate = j.at("lr").get<double>();
        c.batch_size = j.at("batch_size").get<std::size_t>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.prefix_len = j.at("prefix_len").get<std::size_t>();
        c.egia_heads = j.at("egia_heads").get<int>();
        c.head_mode = parse_head_mode(j.at("head_mode").get<std::string>());
        c.early_stopping = j.at("early_stopping").get<bool>();
        c.patience = j.at("patience").get<std::size_t>();
        c.max_steps = j.at("max_steps").get<std::size_t>();
        c.revin_epsilon = j.at("revin_epsilon").get<double>();
        const auto& b = j.at("backbone");
        c.backbone.kind = parse_backbone_kind(b.at("kind").get<std::string>());
        c.backbone.layers = b.at("layers").get<std::size_t>();
        c.backbone.hidden_dim = b.at("hidden_dim").get<std::size_t>();
        c.backbone.heads = b.at("heads").get<int>();
        c.backbone.causal = b.at("causal").get<bool>();
        c.backbone.seed = b.at("seed").get<std::uint64_t>();
        c.backbone.weights_path = b.at("weights_path").get<std::string>();
        const auto& a = j.at("ablation");
        c.ablation = Ablation{a.at("adpt").get<bool>(), a.at("egia").get<bool>(), a.at("kari").get<bool>()};
        return c;
    }

private:
    ForecasterConfig config_;
    std::size_t variates_ = 0;
    std::shared_ptr<AlignmentCheckpoint> text_;
    VariateEmbedding embedding_;
    EgiaParams egia_;
    PrefixExpansion prefix_;
    Linear adapter_up_;
    Linear adapter_down_;
    Backbone backbone_;
    Linear head_;
};

// ---------------------------------------------------------------------------
// Training

struct Phase2Report {
    double initial_train_mse = 0.0;
    std::vector<double> train_mse;  // running mean per epoch
    std::vector<double> val_mse;
    std::size_t best_epoch = 0;
    std::size_t steps = 0;
    double seconds_per_step = 0.0;
};

/// Frozen template vectors for a window set; empty when the prefix is ablated.
inline std::vector<Vector> template_vectors(ForecastModel& model, const std::vector<PreparedWindow>& windows) {
    std::vector<Vector> out;
    if (!model.config().ablation.adpt) {
        return out;
    }
    out.reserve(windows.size());
    for (const auto& w : windows) {
        out.push_back(model.template_vector(w.tpl));
    }
    return out;
}

/// Mean normalized-space MSE over a window set.
inline double evaluate_mse(ForecastModel& model, const std::vector<PreparedWindow>& windows,
                           const std::vector<Vector>& prefixes) {
    if (windows.empty()) {
        throw InsufficientDataError("evaluate_mse: no windows");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const Vector pred = model.predict_normalized(windows[i], prefixes.empty() ? nullptr : &prefixes[i]);
        total += (pred - windows[i].target_normalized).squaredNorm() / static_cast<double>(pred.size());
    }
    return total / static_cast<double>(windows.size());
}

/// One optimizer step over a batch of window indices; returns the batch mean MSE.
inline double phase2_step(ForecastModel& model, Adam& opt, const std::vector<PreparedWindow>& windows,
                          const std::vector<Vector>& prefixes, const std::vector<std::size_t>& batch) {
    opt.zero_grad();
    double total = 0.0;
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i : batch) {
        ad::Var pred = model.forward(windows[i].normalized, prefixes.empty() ? nullptr : &prefixes[i]);
        ad::Var loss = ad::mse(pred, windows[i].target_normalized.transpose());
        ad::backward(loss, inv);
        total += loss.value()(0, 0);
    }
    opt.step();
    return total * inv;
}

/**
 * Adam on shuffled batches of the training windows, minimizing MSE on
 * normalized targets. With early stopping the parameters of the epoch with the
 * lowest validation MSE are restored once `patience` epochs pass without
 * improvement.
 */
inline Phase2Report train_phase2(ForecastModel& model, const std::vector<PreparedWindow>& train,
                                 const std::vector<PreparedWindow>& val) {
    const ForecasterConfig& cfg = model.config();
    if (train.empty()) {
        throw InsufficientDataError("phase 2: no training windows");
    }
    if (cfg.early_stopping && val.empty()) {
        throw ConfigError("phase 2: early stopping needs a non-empty validation split");
    }
    const std::vector<Vector> train_prefix = template_vectors(model, train);
    const std::vector<Vector> val_prefix = template_vectors(model, val);

    Phase2Report report;
    report.initial_train_mse = evaluate_mse(model, train, train_prefix);

    ParameterList params = model.trainable_parameters();
    Adam opt(params, AdamConfig{cfg.learning_rate});
    Rng rng(derive_seed(cfg.seed, 25));
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), 0);

    std::vector<Matrix> best;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    double train_seconds = 0.0;
    bool capped = false;
    for (std::size_t epoch = 0; epoch < cfg.epochs && !capped; ++epoch) {
        std::shuffle(idx.begin(), idx.end(), rng);
        double sum = 0.0;
        std::size_t batches = 0;
        const auto t0 = std::chrono::steady_clock::now();
        for (std::size_t start = 0; start < idx.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(idx.size(), start + cfg.batch_size);
            std::vector<std::size_t> batch(idx.begin() + static_cast<std::ptrdiff_t>(start),
                                           idx.begin() + static_cast<std::ptrdiff_t>(end));
            sum += phase2_step(model, opt, train, train_prefix, batch);
            ++batches;
            ++report.steps;
            if (cfg.max_steps != 0 && report.steps >= cfg.max_steps) {
                capped = true;
                break;
            }
        }
        train_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        report.train_mse.push_back(sum / static_cast<double>(batches));
        if (!val.empty()) {
            const double v = evaluate_mse(model, val, val_prefix);
            report.val_mse.push_back(v);
            if (v < best_val) {
                best_val = v;
                report.best_epoch = epoch;
                since_best = 0;
                best.clear();
                for (const auto* p : params) {
                    best.push_back(p->value);
                }
            } else if (cfg.early_stopping && ++since_best >= cfg.patience) {
                break;
            }
        }
    }
    if (cfg.early_stopping && !best.empty()) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            params[i]->value = best[i];
        }
    }
    report.seconds_per_step = report.steps == 0 ? 0.0 : train_seconds / static_cast<double>(report.steps);
    return report;
}

} // namespace hyperload
