#pragma once

// Reversible instance normalization: per-window, per-column standardization
// with stored statistics so forecasts can be mapped back to raw units.

#include "hyperload/autograd.hpp"
#include "hyperload/errors.hpp"

#include <cmath>
#include <string>

namespace hyperload {

inline constexpr double kDefaultRevinEpsilon = 1e-5;

struct NormStats {
    Vector means;  // M
    Vector stds;   // M, population standard deviation
    double epsilon = kDefaultRevinEpsilon;

    Eigen::Index size() const { return means.size(); }
    double scale(Eigen::Index col) const { return stds(col) + epsilon; }
};

/// Column means and population (1/L) standard deviations.
inline NormStats fit_stats(const Matrix& inputs, double epsilon = kDefaultRevinEpsilon) {
    if (inputs.rows() < 1) {
        throw InsufficientDataError("fit_stats: at least one row is required");
    }
    if (!(epsilon >= 0.0)) {
        throw ConfigError("fit_stats: epsilon must be non-negative");
    }
    NormStats s;
    s.epsilon = epsilon;
    s.means = inputs.colwise().mean().transpose();
    s.stds.resize(inputs.cols());
    for (Eigen::Index c = 0; c < inputs.cols(); ++c) {
        s.stds(c) = std::sqrt((inputs.col(c).array() - s.means(c)).square().mean());
    }
    return s;
}

/// (x - mean) / (std + epsilon), column by column. A constant column maps to
/// zeros when epsilon > 0.
inline Matrix normalize(const Matrix& inputs, const NormStats& stats) {
    if (inputs.cols() != stats.size()) {
        throw ShapeError("normalize: matrix has " + std::to_string(inputs.cols()) + " columns, stats cover " +
                         std::to_string(stats.size()));
    }
    Matrix out(inputs.rows(), inputs.cols());
    for (Eigen::Index c = 0; c < inputs.cols(); ++c) {
        const double denom = stats.scale(c);
        if (denom == 0.0) {
            out.col(c).setZero();
        } else {
            out.col(c) = (inputs.col(c).array() - stats.means(c)) / denom;
        }
    }
    return out;
}

/// Normalizes a vector of target-column values with the window's statistics.
inline Vector normalize_target(const Vector& values, const NormStats& stats, std::size_t target_col) {
    const auto c = static_cast<Eigen::Index>(target_col);
    if (c >= stats.size()) {
        throw IndexError("normalize_target: column " + std::to_string(target_col) + " out of range");
    }
    const double denom = stats.scale(c);
    if (denom == 0.0) {
        return Vector::Zero(values.size());
    }
    return ((values.array() - stats.means(c)) / denom).matrix();
}

/// pred * (std_c + epsilon) + mean_c for c = target_col.
inline Vector denormalize(const Vector& pred, const NormStats& stats, std::size_t target_col) {
    const auto c = static_cast<Eigen::Index>(target_col);
    if (c >= stats.size()) {
        throw IndexError("denormalize: target column " + std::to_string(target_col) + " out of range for " +
                         std::to_string(stats.size()) + " columns");
    }
    return (pred.array() * stats.scale(c) + stats.means(c)).matrix();
}

} // namespace hyperload
