#include "hyperload/dataset.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace hyperload;

namespace {

SeriesTable ramp_table(std::size_t rows, std::size_t cols = 3) {
    std::vector<std::int64_t> ts(rows);
    Matrix v(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
        ts[r] = 1000 + 300 * static_cast<std::int64_t>(r);
        for (std::size_t c = 0; c < cols; ++c) {
            v(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = static_cast<double>(r * 10 + c);
        }
    }
    std::vector<std::string> names;
    for (std::size_t c = 0; c + 1 < cols; ++c) {
        names.push_back("x" + std::to_string(c));
    }
    names.emplace_back("cooling_load");
    return SeriesTable(std::move(ts), std::move(names), std::move(v), "cooling_load");
}

std::string data_file(const char* name) { return std::string(HYPERLOAD_TEST_DATA) + "/" + name; }

} // namespace

TEST(SeriesTable, RejectsBrokenInvariants) {
    Matrix v(2, 2);
    v << 1, 2, 3, 4;
    EXPECT_THROW(SeriesTable({1, 1}, {"a", "b"}, v, "b"), SchemaError);
    EXPECT_THROW(SeriesTable({2, 1}, {"a", "b"}, v, "b"), SchemaError);
    EXPECT_THROW(SeriesTable({1, 2}, {"a", "b"}, v, "c"), SchemaError);
    EXPECT_THROW(SeriesTable({1}, {"a", "b"}, v, "b"), ShapeError);
    EXPECT_THROW(SeriesTable({}, {"a", "b"}, Matrix(0, 2), "b"), EmptyDataError);
    EXPECT_EQ(SeriesTable({1, 2}, {"a", "b"}, v, "b").target_index(), 1u);
}

TEST(LoadDcdata, DropsRowsWithBlanks) {
    const SeriesTable t = load_dcdata(data_file("ten_rows_two_blank.csv"), "cooling_load");
    EXPECT_EQ(t.rows(), 8u);
    EXPECT_EQ(t.dropped_rows(), 2u);
    EXPECT_EQ(t.cols(), 3u);
    EXPECT_EQ(t.target_index(), 2u);
    EXPECT_DOUBLE_EQ(t.values()(2, 2), 503.0);
    EXPECT_EQ(t.timestamps()[0], 1727740800);
    EXPECT_EQ(t.timestamps()[1] - t.timestamps()[0], 300);
}

TEST(LoadDcdata, HeaderOnlyIsEmpty) {
    EXPECT_THROW(load_dcdata(data_file("header_only.csv"), "cooling_load"), EmptyDataError);
}

TEST(LoadDcdata, MissingTargetIsSchemaError) {
    EXPECT_THROW(load_dcdata(data_file("ten_rows_two_blank.csv"), "power"), SchemaError);
}

TEST(LoadDcdata, MissingFileIsIoError) {
    EXPECT_THROW(load_dcdata(data_file("no_such_file.csv"), "cooling_load"), IoError);
}

TEST(LoadDcdata, EpochTimestampsAreSortedAndDeduplicated) {
    const SeriesTable t = load_dcdata(data_file("unsorted_epoch.csv"), "cooling_load");
    ASSERT_EQ(t.rows(), 3u);
    EXPECT_EQ(t.dropped_rows(), 2u);  // duplicate timestamp and the "abc" cell
    EXPECT_EQ(t.timestamps(), (std::vector<std::int64_t>{1727740800, 1727741100, 1727741400}));
    EXPECT_DOUBLE_EQ(t.values()(1, 1), 20.0);  // first occurrence of a duplicate wins
    EXPECT_DOUBLE_EQ(t.values()(2, 0), 3.0);
}

TEST(LoadDcdata, SaveThenLoadRoundTrips) {
    SynthConfig cfg;
    cfg.rows = 50;
    cfg.columns = 4;
    const SeriesTable t = synth_generate(cfg, 3);
    const auto path = std::filesystem::temp_directory_path() / "hyperload_roundtrip.csv";
    save_csv(t, path.string());
    const SeriesTable back = load_dcdata(path.string(), "cooling_load");
    EXPECT_EQ(back, t);
    std::filesystem::remove(path);
}

TEST(Iso8601, ParsesAndFormats) {
    EXPECT_EQ(detail::parse_iso8601("2024-10-01T00:00:00"), 1727740800);
    EXPECT_EQ(detail::parse_iso8601("2024-10-01 00:05:00"), 1727741100);
    EXPECT_EQ(detail::parse_iso8601("2024-10-01T00:00:00Z"), 1727740800);
    EXPECT_FALSE(detail::parse_iso8601("2024-13-01T00:00:00").has_value());
    EXPECT_FALSE(detail::parse_iso8601("yesterday").has_value());
    EXPECT_EQ(format_iso8601(1727740800), "2024-10-01T00:00:00");
}

TEST(ChronologicalSplit, PaperSizes) {
    // floor(0.7 * 13438) = 9406, floor(0.1 * 13438) = 1343, remainder 2689
    const SeriesTable t = ramp_table(13438, 2);
    const Splits s = chronological_split(t, SplitSpec{});
    EXPECT_EQ(s.train.rows(), 9406u);
    ASSERT_TRUE(s.val && s.test);
    EXPECT_EQ(s.val->rows(), 1343u);
    EXPECT_EQ(s.test->rows(), 2689u);
}

TEST(ChronologicalSplit, SmallTables) {
    const SeriesTable t = ramp_table(10);
    const Splits a = chronological_split(t, SplitSpec{});
    EXPECT_EQ(a.train.rows(), 7u);
    EXPECT_EQ(a.val->rows(), 1u);
    EXPECT_EQ(a.test->rows(), 2u);

    const Splits b = chronological_split(t, SplitSpec{1.0, 0.0, 0.0});
    EXPECT_EQ(b.train.rows(), 10u);
    EXPECT_FALSE(b.val.has_value());
    EXPECT_FALSE(b.test.has_value());

    EXPECT_THROW(chronological_split(ramp_table(9), SplitSpec{}), InsufficientDataError);
    EXPECT_THROW(chronological_split(t, SplitSpec{0.5, 0.1, 0.1}), ConfigError);
}

TEST(ChronologicalSplit, SegmentsPartitionTheTable) {
    for (std::size_t rows : {10u, 11u, 97u, 1000u, 4001u}) {
        const SeriesTable t = ramp_table(rows);
        const Splits s = chronological_split(t, SplitSpec{0.6, 0.15, 0.25});
        std::vector<const SeriesTable*> parts{&s.train};
        if (s.val) parts.push_back(&*s.val);
        if (s.test) parts.push_back(&*s.test);
        std::size_t next = 0;
        for (const auto* p : parts) {
            EXPECT_EQ(p->first_row(), next);
            EXPECT_EQ(*p, t.slice(next, p->rows()));
            next += p->rows();
        }
        EXPECT_EQ(next, rows);
    }
}

TEST(ScarcitySlice, KeepsMostRecentRows) {
    const SeriesTable train = ramp_table(9406, 2);
    const SeriesTable half = scarcity_slice(train, 0.5);
    EXPECT_EQ(half.rows(), 4703u);
    EXPECT_EQ(half.timestamps().back(), train.timestamps().back());

    const SeriesTable hundred = ramp_table(100);
    const SeriesTable q = scarcity_slice(hundred, 0.25);
    EXPECT_EQ(q.rows(), 25u);
    EXPECT_EQ(q.first_row(), 75u);  // rows 76..100 counted from one
    EXPECT_EQ(q, hundred.slice(75, 25));

    const SeriesTable p = scarcity_slice(hundred, 0.25, ScarcityMode::prefix);
    EXPECT_EQ(p, hundred.slice(0, 25));
}

TEST(ScarcitySlice, FullFractionIsIdentity) {
    for (std::size_t rows : {1u, 7u, 200u}) {
        const SeriesTable t = ramp_table(rows);
        EXPECT_EQ(scarcity_slice(t, 1.0), t);
    }
}

TEST(ScarcitySlice, RejectsBadFractions) {
    const SeriesTable t = ramp_table(10);
    EXPECT_THROW(scarcity_slice(t, 0.0), ConfigError);
    EXPECT_THROW(scarcity_slice(t, 1.5), ConfigError);
    EXPECT_THROW(scarcity_slice(t, 0.05), InsufficientDataError);
}

TEST(MakeWindows, Counts) {
    EXPECT_EQ(make_windows(ramp_table(200), 96, 96).size(), 9u);
    EXPECT_EQ(make_windows(ramp_table(192), 96, 96).size(), 1u);
    EXPECT_THROW(make_windows(ramp_table(100), 96, 96), InsufficientDataError);
    EXPECT_THROW(make_windows(ramp_table(100), 10, 10, 0), ConfigError);
}

TEST(MakeWindows, CountFormulaAcrossStrides) {
    for (std::size_t rows : {20u, 33u, 64u}) {
        for (std::size_t stride : {1u, 2u, 3u, 7u}) {
            const std::size_t expected = (rows - 8 - 4) / stride + 1;
            EXPECT_EQ(make_windows(ramp_table(rows), 8, 4, stride).size(), expected);
        }
    }
}

TEST(MakeWindows, TargetFollowsInputs) {
    const SeriesTable t = ramp_table(30);
    const auto ws = make_windows(t, 5, 3, 2);
    for (const auto& w : ws) {
        EXPECT_EQ(w.target_col, 2u);
        for (Eigen::Index i = 0; i < 5; ++i) {
            EXPECT_EQ(w.inputs(i, 0), t.values()(static_cast<Eigen::Index>(w.origin_index) + i, 0));
        }
        for (Eigen::Index k = 0; k < 3; ++k) {
            EXPECT_EQ(w.target(k), t.values()(static_cast<Eigen::Index>(w.origin_index) + 5 + k, 2));
        }
    }
    EXPECT_EQ(ws[3].origin_index, 6u);
}

TEST(MakeWindows, PerSegmentWindowsStayInsideTheSegment) {
    const SeriesTable t = ramp_table(500);
    const Splits s = chronological_split(t, SplitSpec{});
    for (const SeriesTable* seg : {&s.train, &*s.val, &*s.test}) {
        for (const auto& w : make_windows(*seg, 20, 5)) {
            EXPECT_GE(w.source_row, seg->first_row());
            EXPECT_LE(w.source_row + 25, seg->first_row() + seg->rows());
        }
    }
}

TEST(Synth, Deterministic) {
    SynthConfig cfg;
    cfg.rows = 300;
    EXPECT_EQ(synth_generate(cfg, 7), synth_generate(cfg, 7));
    const SeriesTable a = synth_generate(cfg, 7);
    const SeriesTable b = synth_generate(cfg, 8);
    EXPECT_NE(a.values(), b.values());
}

TEST(Synth, ZeroNoiseIsPureSeasonality) {
    SynthConfig cfg;
    cfg.rows = 400;
    cfg.columns = 2;
    cfg.noise = 0.0;
    cfg.coupling = {1.0};
    const SeriesTable t = synth_generate(cfg, 1);
    ASSERT_EQ(t.cols(), 2u);
    for (std::size_t r = 0; r < t.rows(); ++r) {
        EXPECT_EQ(t.values()(static_cast<Eigen::Index>(r), 1), synth_seasonal_component(cfg, r));
    }
}

TEST(Synth, ShapeAndNames) {
    const SeriesTable t = synth_generate(SynthConfig{}, 0);
    EXPECT_EQ(t.rows(), 4000u);
    EXPECT_EQ(t.cols(), 6u);
    EXPECT_EQ(t.names().front(), "outdoor_temp");
    EXPECT_EQ(t.names()[1], "pump1_inlet_temp");
    EXPECT_EQ(t.names()[2], "pump1_outlet_temp");
    EXPECT_EQ(t.target_name(), "cooling_load");
    EXPECT_EQ(t.target_index(), 5u);
    EXPECT_TRUE(t.values().allFinite());
}

TEST(Synth, RejectsBadConfig) {
    SynthConfig cfg;
    cfg.columns = 1;
    EXPECT_THROW(synth_generate(cfg, 0), ConfigError);
    cfg.columns = 3;
    cfg.coupling = {1.0, 0.0, 0.0};
    EXPECT_THROW(synth_generate(cfg, 0), ConfigError);
}

TEST(Synth, TargetTracksLaggedDevices) {
    // The target minus its seasonal part correlates with each device at that device's lag.
    SynthConfig cfg;
    cfg.observation_noise = 0.0;
    const SeriesTable t = synth_generate(cfg, 5);
    const std::size_t lag = synth::lag(0);
    const Eigen::Index n = static_cast<Eigen::Index>(t.rows() - lag);
    Vector residual(n);
    Vector device(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto r = static_cast<std::size_t>(i) + lag;
        residual(i) = t.values()(static_cast<Eigen::Index>(r), 5) - synth_seasonal_component(cfg, r);
        device(i) = t.values()(i, 0);
    }
    const Vector rc = residual.array() - residual.mean();
    const Vector dc = device.array() - device.mean();
    const double corr = rc.dot(dc) / std::sqrt(rc.squaredNorm() * dc.squaredNorm());
    EXPECT_GT(corr, 0.3);
}
