#pragma once

#include "hyperload/cats_template.hpp"
#include "hyperload/dataset.hpp"
#include "hyperload/revin.hpp"

#include <vector>

namespace hyperload {

/// A window after instance normalization, paired with its template.
struct PreparedWindow {
    NormStats stats;
    Matrix normalized;         // L x M
    Vector target_normalized;  // K, scaled with the input window's statistics
    Vector target_raw;         // K
    CatsTemplate tpl;
    std::size_t target_col = 0;
    std::size_t source_row = 0;
};

inline PreparedWindow prepare_window(const TimeWindow& w, const KnowledgeBase& kb,
                                     double epsilon = kDefaultRevinEpsilon) {
    PreparedWindow p;
    p.stats = fit_stats(w.inputs, epsilon);
    p.normalized = normalize(w.inputs, p.stats);
    p.target_raw = w.target;
    p.target_normalized = normalize_target(w.target, p.stats, w.target_col);
    p.tpl = build_template(kb, w, p.normalized.col(static_cast<Eigen::Index>(w.target_col)));
    p.target_col = w.target_col;
    p.source_row = w.source_row;
    return p;
}

inline std::vector<PreparedWindow> prepare_windows(const std::vector<TimeWindow>& windows, const KnowledgeBase& kb,
                                                   double epsilon = kDefaultRevinEpsilon) {
    std::vector<PreparedWindow> out;
    out.reserve(windows.size());
    for (const auto& w : windows) {
        out.push_back(prepare_window(w, kb, epsilon));
    }
    return out;
}

} // namespace hyperload
