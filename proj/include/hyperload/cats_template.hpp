#pragma once

// Context-aware temporal synthesis templates: a fixed Background and
// Instruction from the knowledge base followed by Trend and Statistics prose
// derived from the normalized target series of one window.

#include "hyperload/autograd.hpp"
#include "hyperload/dataset.hpp"
#include "hyperload/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

namespace hyperload {

struct KnowledgeBase {
    std::string background;
    std::string instruction;

    KnowledgeBase() = default;
    KnowledgeBase(std::string bg, std::string instr) : background(std::move(bg)), instruction(std::move(instr)) {
        validate();
    }

    void validate() const {
        auto blank = [](const std::string& s) {
            return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
        };
        if (blank(background)) {
            throw ConfigError("knowledge base: background must not be empty");
        }
        if (blank(instruction)) {
            throw ConfigError("knowledge base: instruction must not be empty");
        }
    }
};

namespace detail {

inline std::string replace_all(std::string s, std::string_view from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

inline std::string collapse_whitespace(std::string_view s) {
    std::string out;
    bool space = false;
    for (char ch : s) {
        if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r') {
            space = !out.empty();
        } else {
            if (space) {
                out.push_back(' ');
            }
            out.push_back(ch);
            space = false;
        }
    }
    return out;
}

} // namespace detail

/// Substitutes `{horizon}` in both sections.
inline KnowledgeBase with_horizon(KnowledgeBase kb, std::size_t horizon) {
    kb.background = detail::replace_all(std::move(kb.background), "{horizon}", std::to_string(horizon));
    kb.instruction = detail::replace_all(std::move(kb.instruction), "{horizon}", std::to_string(horizon));
    return kb;
}

/// Data-center description shipped with the library. `{horizon}` is a placeholder.
inline KnowledgeBase default_knowledge_base() {
    return KnowledgeBase(
        "The data center cooling system consists of chillers, cooling towers, chilled water pumps and cooling "
        "water pumps. Outdoor temperature and humidity drive the heat rejected by the cooling towers. The inlet "
        "and outlet water temperatures of each pump reflect the heat carried away from the IT equipment, and "
        "changes in these temperatures precede changes in the cooling load.",
        "Predict the cooling load of the data center for the next {horizon} steps at five minute intervals, "
        "using the recent history of all device variables. The target is the cooling load only.");
}

/**
 * Reads a knowledge base from a text file with `[background]` and
 * `[instruction]` sections. Lines starting with '#' are comments; section
 * bodies are joined with single spaces.
 */
inline KnowledgeBase load_knowledge_base(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open knowledge base '" + path + "'");
    }
    std::string background;
    std::string instruction;
    std::string* current = nullptr;
    std::string line;
    while (std::getline(in, line)) {
        const std::string_view t = detail::trim(line);
        if (t.empty() || t.front() == '#') {
            continue;
        }
        if (t == "[background]") {
            current = &background;
        } else if (t == "[instruction]") {
            current = &instruction;
        } else if (t.front() == '[') {
            throw ConfigError("knowledge base '" + path + "': unknown section " + std::string(t));
        } else if (current == nullptr) {
            throw ConfigError("knowledge base '" + path + "': text outside a section");
        } else {
            *current += " ";
            *current += t;
        }
    }
    return KnowledgeBase(detail::collapse_whitespace(background), detail::collapse_whitespace(instruction));
}

// ---------------------------------------------------------------------------
// Trend and statistics prose

enum class TrendDirection { rising, falling, stable };
enum class Oscillation { low, moderate, high };

inline const char* to_string(TrendDirection d) {
    switch (d) {
    case TrendDirection::rising: return "rising";
    case TrendDirection::falling: return "falling";
    case TrendDirection::stable: return "stable";
    }
    return "?";
}

inline const char* to_string(Oscillation o) {
    switch (o) {
    case Oscillation::low: return "low";
    case Oscillation::moderate: return "moderate";
    case Oscillation::high: return "high";
    }
    return "?";
}

struct TrendSummary {
    TrendDirection direction = TrendDirection::stable;
    Oscillation oscillation = Oscillation::low;
    double slope = 0.0;
    double residual_ratio = 0.0;  // residual std / range
};

inline constexpr double kTrendDeadZone = 0.01;
inline constexpr double kLowOscillation = 0.05;
inline constexpr double kHighOscillation = 0.20;

/**
 * Least-squares slope against the step index, with a dead zone of
 * 0.01 * range / L, and the residual standard deviation relative to the
 * range: below 0.05 is low, below 0.20 moderate, otherwise high. Both tests
 * are range-relative, so the result is unchanged by positive affine maps.
 */
inline TrendSummary classify_trend(const Vector& series) {
    const Eigen::Index n = series.size();
    if (n < 2) {
        throw InsufficientDataError("describe_trend needs at least 2 points");
    }
    const double range = series.maxCoeff() - series.minCoeff();
    TrendSummary out;
    if (range == 0.0) {
        return out;
    }
    const double x_mean = static_cast<double>(n - 1) / 2.0;
    const double y_mean = series.mean();
    double sxy = 0.0;
    double sxx = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double dx = static_cast<double>(i) - x_mean;
        sxy += dx * (series(i) - y_mean);
        sxx += dx * dx;
    }
    out.slope = sxy / sxx;
    double ss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double r = series(i) - (y_mean + out.slope * (static_cast<double>(i) - x_mean));
        ss += r * r;
    }
    out.residual_ratio = std::sqrt(ss / static_cast<double>(n)) / range;

    const double dead_zone = kTrendDeadZone * range / static_cast<double>(n);
    if (std::abs(out.slope) <= dead_zone) {
        out.direction = TrendDirection::stable;
    } else {
        out.direction = out.slope > 0 ? TrendDirection::rising : TrendDirection::falling;
    }
    if (out.residual_ratio < kLowOscillation) {
        out.oscillation = Oscillation::low;
    } else if (out.residual_ratio < kHighOscillation) {
        out.oscillation = Oscillation::moderate;
    } else {
        out.oscillation = Oscillation::high;
    }
    return out;
}

inline std::string describe_trend(const Vector& series) {
    const TrendSummary t = classify_trend(series);
    return std::string("The cooling load is ") + to_string(t.direction) + " with " + to_string(t.oscillation) +
           " oscillation.";
}

namespace detail {
inline std::string fixed4(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    std::string s(buf);
    if (s == "-0.0000") {
        s = "0.0000";
    }
    return s;
}
} // namespace detail

/// min, max, mean and population variance at four decimals.
inline std::string describe_stats(const Vector& series) {
    if (series.size() < 1) {
        throw InsufficientDataError("describe_stats needs at least 1 point");
    }
    const double mean = series.mean();
    const double var = (series.array() - mean).square().mean();
    return "min " + detail::fixed4(series.minCoeff()) + ", max " + detail::fixed4(series.maxCoeff()) + ", mean " +
           detail::fixed4(mean) + ", variance " + detail::fixed4(var);
}

// ---------------------------------------------------------------------------
// Template

struct CatsTemplate {
    std::string background;
    std::string instruction;
    std::string trend;
    std::string statistics;

    /// Sections joined in the fixed order background, instruction, trend, statistics.
    std::string rendered() const {
        return "Background: " + background + "\nInstruction: " + instruction + "\nTrend: " + trend +
               "\nStatistics: " + statistics;
    }
};

/// `normalized_target` is the window's target column after instance normalization.
inline CatsTemplate build_template(const KnowledgeBase& kb, const TimeWindow& window, const Vector& normalized_target) {
    kb.validate();
    if (normalized_target.size() != window.input_length()) {
        throw ShapeError("build_template: normalized target has " + std::to_string(normalized_target.size()) +
                         " values for a window of length " + std::to_string(window.input_length()));
    }
    return CatsTemplate{kb.background, kb.instruction, describe_trend(normalized_target),
                        describe_stats(normalized_target)};
}

} // namespace hyperload
