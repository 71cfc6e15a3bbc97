#pragma once

// Layers and the optimizer shared by both training phases.

#include "hyperload/autograd.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace hyperload {

using Rng = std::mt19937_64;

/// Derives an independent stream from a root seed and a purpose tag, so that
/// adding a consumer never perturbs the draws of another.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t tag) {
    std::uint64_t z = root + 0x9E3779B97F4A7C15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline Matrix random_normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) {
            m(i, j) = dist(rng);
        }
    }
    return m;
}

using ParameterList = std::vector<Parameter*>;

inline void append(ParameterList& dst, const ParameterList& src) { dst.insert(dst.end(), src.begin(), src.end()); }

inline void set_trainable(const ParameterList& params, bool trainable) {
    for (auto* p : params) {
        p->trainable = trainable;
    }
}

/// Order-sensitive FNV-1a digest of the raw bytes of every tensor.
inline std::uint64_t checksum(const ParameterList& params) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto* p : params) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
        const auto n = static_cast<std::size_t>(p->value.size()) * sizeof(double);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    }
    return h;
}

/** y = x W + b, with W of shape in x out and b of shape 1 x out. */
struct Linear {
    Parameter weight;
    Parameter bias;

    Linear() = default;
    Linear(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng, bool with_bias = true)
        : weight(name + ".weight", random_normal(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng)),
          bias(name + ".bias", Matrix::Zero(with_bias ? 1 : 0, out)) {}

    bool has_bias() const { return bias.value.rows() == 1; }
    Eigen::Index in_features() const { return weight.value.rows(); }
    Eigen::Index out_features() const { return weight.value.cols(); }

    ad::Var operator()(const ad::Var& x) {
        ad::Var y = ad::matmul(x, ad::use(weight));
        return has_bias() ? ad::add_row(y, ad::use(bias)) : y;
    }

    ParameterList parameters() {
        ParameterList out{&weight};
        if (has_bias()) {
            out.push_back(&bias);
        }
        return out;
    }
};

struct LayerNorm {
    Parameter gain;
    Parameter shift;

    LayerNorm() = default;
    LayerNorm(const std::string& name, Eigen::Index width)
        : gain(name + ".gain", Matrix::Ones(1, width)), shift(name + ".shift", Matrix::Zero(1, width)) {}

    ad::Var operator()(const ad::Var& x) { return ad::layer_norm_rows(x, ad::use(gain), ad::use(shift)); }
    ParameterList parameters() { return {&gain, &shift}; }
};

/// Upper-triangular -inf mask (future positions) for causal attention.
inline Matrix causal_mask(Eigen::Index n) {
    Matrix m = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            m(i, j) = -1e30;
        }
    }
    return m;
}

/**
 * Pre-norm transformer block: multi-head self-attention followed by a GELU
 * feed-forward layer, each wrapped in a residual connection.
 */
struct TransformerBlock {
    LayerNorm attn_norm;
    std::vector<Linear> query;
    std::vector<Linear> key;
    std::vector<Linear> value;
    std::vector<Linear> out;
    LayerNorm ffn_norm;
    Linear ffn_in;
    Linear ffn_out;
    bool causal = false;

    TransformerBlock() = default;
    TransformerBlock(const std::string& name, Eigen::Index width, int heads, Eigen::Index ffn_width, bool causal_attention,
                     Rng& rng, double residual_scale = 1.0)
        : attn_norm(name + ".attn_norm", width), ffn_norm(name + ".ffn_norm", width), causal(causal_attention) {
        if (heads < 1 || width % heads != 0) {
            throw ConfigError("TransformerBlock: width " + std::to_string(width) + " not divisible by " +
                              std::to_string(heads) + " heads");
        }
        const Eigen::Index head_width = width / heads;
        for (int h = 0; h < heads; ++h) {
            const std::string hn = name + ".head" + std::to_string(h);
            query.emplace_back(hn + ".query", width, head_width, rng, false);
            key.emplace_back(hn + ".key", width, head_width, rng, false);
            value.emplace_back(hn + ".value", width, head_width, rng, false);
            out.emplace_back(hn + ".out", head_width, width, rng, false);
            out.back().weight.value *= residual_scale;
        }
        ffn_in = Linear(name + ".ffn_in", width, ffn_width, rng);
        ffn_out = Linear(name + ".ffn_out", ffn_width, width, rng);
        ffn_out.weight.value *= residual_scale;
    }

    ad::Var operator()(const ad::Var& x) {
        const ad::Var h = attn_norm(x);
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(query.front().out_features()));
        ad::Var mixed = x;
        for (std::size_t i = 0; i < query.size(); ++i) {
            ad::Var scores = ad::scale(ad::matmul(query[i](h), ad::transpose(key[i](h))), inv_sqrt);
            if (causal) {
                scores = ad::add(scores, ad::constant(causal_mask(x.rows())));
            }
            ad::Var attended = ad::matmul(ad::softmax_rows(scores), value[i](h));
            mixed = ad::add(mixed, out[i](attended));
        }
        const ad::Var f = ffn_out(ad::gelu(ffn_in(ffn_norm(mixed))));
        return ad::add(mixed, f);
    }

    ParameterList parameters() {
        ParameterList p = attn_norm.parameters();
        for (std::size_t i = 0; i < query.size(); ++i) {
            append(p, query[i].parameters());
            append(p, key[i].parameters());
            append(p, value[i].parameters());
            append(p, out[i].parameters());
        }
        append(p, ffn_norm.parameters());
        append(p, ffn_in.parameters());
        append(p, ffn_out.parameters());
        return p;
    }
};

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/** Adam with bias correction. Frozen parameters are skipped. */
class Adam {
public:
    Adam(ParameterList params, AdamConfig config) : params_(std::move(params)), config_(config) {
        for (auto* p : params_) {
            first_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
            second_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
        }
    }

    void zero_grad() {
        for (auto* p : params_) {
            p->zero_grad();
        }
    }

    void step() {
        ++steps_;
        const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
        const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Parameter& p = *params_[i];
            if (!p.trainable || p.grad.size() != p.value.size()) {
                continue;
            }
            first_[i] = config_.beta1 * first_[i] + (1.0 - config_.beta1) * p.grad;
            second_[i] = config_.beta2 * second_[i] + (1.0 - config_.beta2) * p.grad.cwiseProduct(p.grad);
            p.value.array() -= config_.learning_rate * (first_[i].array() / c1) /
                               ((second_[i].array() / c2).sqrt() + config_.epsilon);
        }
    }

    long steps() const { return steps_; }

private:
    ParameterList params_;
    AdamConfig config_;
    std::vector<Matrix> first_;
    std::vector<Matrix> second_;
    long steps_ = 0;
};

} // namespace hyperload
