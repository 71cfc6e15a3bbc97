#include "hyperload/nn.hpp"

#include "gradcheck.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace hyperload;

namespace {

Parameter param(const std::string& name, Eigen::Index r, Eigen::Index c, std::uint64_t seed, double sd = 1.0) {
    Rng rng(seed);
    return Parameter(name, random_normal(r, c, sd, rng));
}

// Reduces any matrix to a scalar with fixed, uneven weights so every entry matters.
ad::Var weighted_sum(const ad::Var& x, std::uint64_t seed = 99) {
    Rng rng(seed);
    const Matrix w = random_normal(x.rows(), x.cols(), 1.0, rng);
    return ad::matmul(ad::matmul(ad::constant(Matrix::Ones(1, x.rows())), ad::hadamard(x, ad::constant(w))),
                      ad::constant(Matrix::Ones(x.cols(), 1)));
}

} // namespace

TEST(Autograd, ElementwiseAndMatrixOps) {
    Parameter a = param("a", 3, 4, 1);
    Parameter b = param("b", 4, 2, 2);
    Parameter c = param("c", 3, 4, 3);
    Parameter r = param("r", 1, 4, 4);
    auto loss = [&] {
        ad::Var x = ad::add(ad::use(a), ad::scale(ad::use(c), 0.5));
        x = ad::sub(ad::hadamard(x, ad::use(c)), ad::use(a));
        x = ad::add_row(x, ad::use(r));
        x = ad::gelu(x);
        return weighted_sum(ad::matmul(x, ad::use(b)));
    };
    EXPECT_LT(gradcheck::worst(gradcheck::check({&a, &b, &c, &r}, loss)), 1e-6);
}

TEST(Autograd, SoftmaxAndLayerNorm) {
    Parameter x = param("x", 4, 5, 5);
    Parameter g = param("g", 1, 5, 6);
    Parameter s = param("s", 1, 5, 7);
    auto loss = [&] {
        ad::Var y = ad::layer_norm_rows(ad::use(x), ad::use(g), ad::use(s));
        return weighted_sum(ad::softmax_rows(ad::scale(y, 1.7)));
    };
    EXPECT_LT(gradcheck::worst(gradcheck::check({&x, &g, &s}, loss)), 1e-6);
}

TEST(Autograd, ShapeOps) {
    Parameter x = param("x", 4, 6, 8);
    Parameter y = param("y", 2, 6, 9);
    Parameter t = param("t", 7, 6, 10);
    auto loss = [&] {
        ad::Var joined = ad::concat_rows({ad::use(y), ad::use(x)});
        ad::Var picked = ad::gather_rows(ad::use(t), {3, 0, 3, 6, 1, 2});
        ad::Var both = ad::add(joined, picked);
        ad::Var split = ad::concat_cols({ad::cols(both, 3, 3), ad::cols(both, 0, 3)});
        ad::Var tail = ad::concat_rows({ad::top_rows(split, 2), ad::row(split, 5), ad::mean_rows(split)});
        return ad::add(weighted_sum(ad::flatten(tail)), weighted_sum(ad::transpose(both), 3));
    };
    EXPECT_LT(gradcheck::worst(gradcheck::check({&x, &y, &t}, loss)), 1e-6);
}

TEST(Autograd, MseMatchesDefinition) {
    Parameter p = param("p", 1, 5, 11);
    Rng rng(12);
    const Matrix target = random_normal(1, 5, 1.0, rng);
    const ad::Var l = ad::mse(ad::use(p), target);
    EXPECT_NEAR(l.value()(0, 0), (p.value - target).squaredNorm() / 5.0, 1e-15);
    EXPECT_LT(gradcheck::worst(gradcheck::check({&p}, [&] { return ad::mse(ad::use(p), target); })), 1e-7);
    EXPECT_THROW(ad::mse(ad::use(p), Matrix::Zero(1, 4)), ShapeError);
}

TEST(Autograd, FlattenIsRowMajor) {
    Matrix m(2, 3);
    m << 1, 2, 3, 4, 5, 6;
    const ad::Var f = ad::flatten(ad::constant(m));
    ASSERT_EQ(f.rows(), 1);
    EXPECT_EQ(f.value(), (Matrix(1, 6) << 1, 2, 3, 4, 5, 6).finished());
}

TEST(Autograd, FrozenParametersGetNoGradient) {
    Parameter w = param("w", 3, 3, 13);
    w.trainable = false;
    Parameter x = param("x", 2, 3, 14);
    ad::backward(weighted_sum(ad::matmul(ad::use(x), ad::use(w))));
    EXPECT_TRUE(w.grad.isZero(0.0));
    EXPECT_FALSE(x.grad.isZero(0.0));
}

TEST(Autograd, BackwardNeedsScalar) {
    EXPECT_THROW(ad::backward(ad::variable(Matrix::Zero(2, 1))), ShapeError);
}

TEST(Layers, TransformerBlockGradients) {
    Rng rng(15);
    for (bool causal : {false, true}) {
        TransformerBlock block("blk", 4, 2, 8, causal, rng, 0.5);
        Parameter x = param("x", 3, 4, 16);
        ParameterList params = block.parameters();
        params.push_back(&x);
        const double err = gradcheck::worst(gradcheck::check(params, [&] { return weighted_sum(block(ad::use(x))); }));
        EXPECT_LT(err, 1e-5) << "causal=" << causal;
    }
}

TEST(Layers, CausalBlockIgnoresTheFuture) {
    Rng rng(17);
    TransformerBlock block("blk", 4, 2, 8, true, rng);
    Rng data(18);
    Matrix x = random_normal(5, 4, 1.0, data);
    const Matrix a = block(ad::constant(x)).value();
    x.row(4).setConstant(9.0);
    const Matrix b = block(ad::constant(x)).value();
    EXPECT_LT((a.topRows(4) - b.topRows(4)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_GT((a.row(4) - b.row(4)).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Layers, LinearInitAndShape) {
    Rng rng(19);
    Linear l("l", 400, 50, rng);
    EXPECT_EQ(l.in_features(), 400);
    EXPECT_EQ(l.out_features(), 50);
    EXPECT_TRUE(l.bias.value.isZero(0.0));
    const double sd = std::sqrt(l.weight.value.squaredNorm() / static_cast<double>(l.weight.value.size()));
    EXPECT_NEAR(sd, 0.05, 0.003);
    Linear nb("nb", 3, 2, rng, false);
    EXPECT_FALSE(nb.has_bias());
    EXPECT_EQ(nb.parameters().size(), 1u);
}

TEST(Optim, AdamMinimizesAQuadratic) {
    Parameter p("p", Matrix::Constant(1, 3, 5.0));
    Adam opt({&p}, AdamConfig{0.1});
    const Matrix target = (Matrix(1, 3) << 1.0, -2.0, 0.5).finished();
    for (int i = 0; i < 500; ++i) {
        opt.zero_grad();
        ad::backward(ad::mse(ad::use(p), target));
        opt.step();
    }
    EXPECT_LT((p.value - target).cwiseAbs().maxCoeff(), 1e-2);
    EXPECT_EQ(opt.steps(), 500);
}

TEST(Optim, AdamFirstStepIsLearningRateTimesSign) {
    Parameter p("p", Matrix::Zero(1, 2));
    Parameter frozen("f", Matrix::Ones(1, 2), false);
    Adam opt({&p, &frozen}, AdamConfig{0.01});
    opt.zero_grad();
    p.grad << 3.0, -0.2;
    frozen.grad << 1.0, 1.0;
    opt.step();
    EXPECT_NEAR(p.value(0, 0), -0.01, 1e-8);
    EXPECT_NEAR(p.value(0, 1), 0.01, 1e-7);
    EXPECT_EQ(frozen.value, Matrix::Ones(1, 2));
}

TEST(Seeds, DerivedStreamsDiffer) {
    EXPECT_NE(derive_seed(0, 1), derive_seed(0, 2));
    EXPECT_NE(derive_seed(0, 1), derive_seed(1, 1));
    EXPECT_EQ(derive_seed(5, 3), derive_seed(5, 3));
}

TEST(Checksum, SensitiveToEveryBit) {
    Parameter a = param("a", 2, 2, 20);
    const std::uint64_t before = checksum({&a});
    a.value(1, 1) = std::nextafter(a.value(1, 1), 1e9);
    EXPECT_NE(checksum({&a}), before);
}
