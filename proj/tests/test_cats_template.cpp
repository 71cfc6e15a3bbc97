#include "hyperload/cats_template.hpp"
#include "hyperload/sample.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace hyperload;

namespace {

Vector vec(std::initializer_list<double> xs) {
    Vector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) {
        v(i++) = x;
    }
    return v;
}

Vector sine(Eigen::Index n, double periods, double phase) {
    Vector v(n);
    const double step = 2.0 * std::numbers::pi * periods / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        v(i) = std::sin(step * static_cast<double>(i) + phase);
    }
    return v;
}

} // namespace

TEST(DescribeTrend, Ramp) {
    Vector v(10);
    for (int i = 0; i < 10; ++i) {
        v(i) = i;
    }
    const TrendSummary t = classify_trend(v);
    EXPECT_EQ(t.direction, TrendDirection::rising);
    EXPECT_EQ(t.oscillation, Oscillation::low);
    EXPECT_NEAR(t.slope, 1.0, 1e-12);
    EXPECT_NEAR(t.residual_ratio, 0.0, 1e-12);
    EXPECT_EQ(describe_trend(v), "The cooling load is rising with low oscillation.");
    EXPECT_EQ(classify_trend(Vector(-v)).direction, TrendDirection::falling);
}

TEST(DescribeTrend, Constant) {
    const TrendSummary t = classify_trend(Vector::Constant(12, 4.0));
    EXPECT_EQ(t.direction, TrendDirection::stable);
    EXPECT_EQ(t.oscillation, Oscillation::low);
}

TEST(DescribeTrend, TwoPeriodSineWithoutLinearTrend) {
    // Phase chosen so the samples are symmetric about the window centre, which
    // makes the least-squares slope exactly zero.
    const Eigen::Index n = 96;
    const double step = 4.0 * std::numbers::pi / static_cast<double>(n);
    const Vector v = sine(n, 2.0, (std::numbers::pi + step) / 2.0);
    const TrendSummary t = classify_trend(v);
    EXPECT_NEAR(t.slope, 0.0, 1e-12);
    EXPECT_EQ(t.direction, TrendDirection::stable);
    EXPECT_EQ(t.oscillation, Oscillation::high);
    EXPECT_NEAR(t.residual_ratio, 0.35, 0.01);
}

TEST(DescribeTrend, TwoPeriodSineAtPhaseZeroLeansDown) {
    // A sine starting at phase zero has a small negative least-squares slope
    // (about -0.0066 per step at L = 96), larger than the 0.01 * range / L dead zone.
    const Vector v = sine(96, 2.0, 0.0);
    const TrendSummary t = classify_trend(v);
    EXPECT_LT(t.slope, -0.01 * 2.0 / 96.0);
    EXPECT_EQ(t.direction, TrendDirection::falling);
    EXPECT_EQ(t.oscillation, Oscillation::high);
}

TEST(DescribeTrend, DeadZoneBoundary) {
    // the dead zone scales with the range, so a tiny pure ramp still counts as rising
    const Eigen::Index n = 50;
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        v(i) = 1e-4 * static_cast<double>(i);
    }
    EXPECT_EQ(classify_trend(v).direction, TrendDirection::rising);
    Vector flat = Vector::Zero(n);
    flat(n / 2) = 1.0;  // spike centred in the window: zero slope
    flat(n / 2 - 1) = 1.0;
    EXPECT_EQ(classify_trend(flat).direction, TrendDirection::stable);
}

TEST(DescribeTrend, InvariantUnderPositiveAffineMaps) {
    const Vector v = sine(64, 1.3, 0.4) + Vector::LinSpaced(64, 0.0, 0.5);
    const TrendSummary a = classify_trend(v);
    const TrendSummary b = classify_trend(Vector((3.0 * v).array() + 7.0));
    EXPECT_EQ(a.direction, b.direction);
    EXPECT_EQ(a.oscillation, b.oscillation);
}

TEST(DescribeTrend, NeedsTwoPoints) {
    EXPECT_THROW(describe_trend(vec({1.0})), InsufficientDataError);
}

TEST(DescribeStats, Examples) {
    EXPECT_EQ(describe_stats(vec({1, 2, 3})), "min 1.0000, max 3.0000, mean 2.0000, variance 0.6667");
    EXPECT_EQ(describe_stats(vec({-1, 1})), "min -1.0000, max 1.0000, mean 0.0000, variance 1.0000");
    EXPECT_EQ(describe_stats(vec({2.5})), "min 2.5000, max 2.5000, mean 2.5000, variance 0.0000");
    EXPECT_EQ(describe_stats(vec({-1e-7, 1e-8})), "min 0.0000, max 0.0000, mean 0.0000, variance 0.0000");
    EXPECT_THROW(describe_stats(Vector(0)), InsufficientDataError);
}

TEST(KnowledgeBase, Validation) {
    EXPECT_THROW(KnowledgeBase("", "x"), ConfigError);
    EXPECT_THROW(KnowledgeBase("x", "  "), ConfigError);
    const KnowledgeBase kb = with_horizon(default_knowledge_base(), 48);
    EXPECT_NE(kb.instruction.find("next 48 steps"), std::string::npos);
    EXPECT_EQ(kb.instruction.find("{horizon}"), std::string::npos);
}

TEST(KnowledgeBase, LoadsFromFile) {
    const KnowledgeBase kb = load_knowledge_base(std::string(HYPERLOAD_TEST_DATA) + "/kb.txt");
    EXPECT_EQ(kb.background, "Chillers and pumps move heat.");
    EXPECT_EQ(with_horizon(kb, 12).instruction, "Forecast 12 steps of cooling load.");
    EXPECT_THROW(load_knowledge_base("/nonexistent/kb.txt"), IoError);
}

TEST(BuildTemplate, SectionsInOrderAndDeterministic) {
    TimeWindow w;
    w.inputs = Matrix(4, 2);
    w.inputs << 1, 10, 2, 20, 3, 30, 4, 40;
    w.target = vec({50});
    w.target_col = 1;
    const KnowledgeBase kb("Background text.", "Instruction text.");
    const PreparedWindow p = prepare_window(w, kb);
    const std::string r = p.tpl.rendered();
    EXPECT_EQ(r, prepare_window(w, kb).tpl.rendered());
    const auto b = r.find("Background: Background text.");
    const auto i = r.find("\nInstruction: Instruction text.");
    const auto t = r.find("\nTrend: The cooling load is rising with low oscillation.");
    const auto s = r.find("\nStatistics: min -1.3416, max 1.3416, mean 0.0000, variance 1.0000");
    ASSERT_NE(b, std::string::npos);
    ASSERT_NE(i, std::string::npos);
    ASSERT_NE(t, std::string::npos);
    ASSERT_NE(s, std::string::npos);
    EXPECT_LT(b, i);
    EXPECT_LT(i, t);
    EXPECT_LT(t, s);
}

TEST(BuildTemplate, StatisticsDescribeTheNormalizedTarget) {
    TimeWindow w;
    w.inputs = Matrix(3, 1);
    w.inputs << 100, 200, 300;
    w.target = vec({400});
    const PreparedWindow p = prepare_window(w, default_knowledge_base(), 0.0);
    EXPECT_EQ(p.tpl.statistics, "min -1.2247, max 1.2247, mean 0.0000, variance 1.0000");
    EXPECT_THROW(build_template(default_knowledge_base(), w, vec({1, 2})), ShapeError);
}
