#pragma once

#include <utility>
#include <vector>

namespace mot {

using Matrix = std::vector<std::vector<double>>;

/// Result of a linear assignment. Every row and column index appears exactly
/// once, either in a pair or in an unmatched list.
struct Matching {
    std::vector<std::pair<int, int>> pairs;  // (row, col)
    std::vector<int> unmatched_rows;
    std::vector<int> unmatched_cols;
    double total_score = 0.0;  // sum of matrix entries over pairs
};

/// Minimum-cost complete assignment of an MxN cost matrix. Rectangular
/// inputs are square-padded with a large sentinel; pad assignments surface
/// as unmatched. Among equal-cost optima the lexicographically smallest
/// (row, col) assignment is returned.
Matching hungarian(const Matrix& cost);

inline constexpr double kPadCost = 1e6;

/// fused = lambda_app * s_app + (1 - lambda_app) * s_iou, elementwise.
Matrix fuse_similarity(const Matrix& s_app, const Matrix& s_iou, double lambda_app);

/// Hungarian over cost = 1 - s, then pairs whose similarity falls below
/// `threshold` are demoted to unmatched.
Matching match_with_threshold(const Matrix& s, double threshold);

}  // namespace mot
