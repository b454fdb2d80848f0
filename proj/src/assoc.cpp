#include "mot/assoc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace mot {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Jonker-style shortest augmenting path solver on a square matrix accessed
// through a cost callback. Returns the optimal total cost; `row_to_col`
// receives the assignment.
template <typename CostFn>
double solve_square(int n, CostFn cost, std::vector<int>* row_to_col) {
    if (n == 0) {
        if (row_to_col) row_to_col->clear();
        return 0.0;
    }
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), kInf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            int i0 = p[j0], j1 = -1;
            double delta = kInf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> rc(n, -1);
    double total = 0.0;
    for (int j = 1; j <= n; ++j)
        if (p[j]) {
            rc[p[j] - 1] = j - 1;
            total += cost(p[j] - 1, j - 1);
        }
    if (row_to_col) *row_to_col = std::move(rc);
    return total;
}

}  // namespace

Matching hungarian(const Matrix& cost) {
    int m = static_cast<int>(cost.size());
    int ncols = m == 0 ? 0 : static_cast<int>(cost[0].size());
    for (const auto& row : cost)
        if (static_cast<int>(row.size()) != ncols)
            throw std::invalid_argument("hungarian: ragged cost matrix");

    Matching out;
    if (m == 0 || ncols == 0) {
        for (int r = 0; r < m; ++r) out.unmatched_rows.push_back(r);
        for (int c = 0; c < ncols; ++c) out.unmatched_cols.push_back(c);
        return out;
    }
    for (const auto& row : cost)
        for (double c : row)
            if (!std::isfinite(c))
                throw std::invalid_argument("hungarian: non-finite cost entry");

    int n = std::max(m, ncols);
    auto padded = [&](int r, int c) -> double {
        return (r < m && c < ncols) ? cost[r][c] : kPadCost;
    };

    double best = solve_square(n, padded, nullptr);
    // covers float rounding across summation orders, even at pad-cost scale,
    // while staying far below any genuine cost gap
    double eps = 1e-9 + 1e-14 * std::fabs(best);

    // Fix rows in order to the smallest column that still admits an optimal
    // completion; yields the lexicographically least optimal assignment.
    std::vector<int> assign(n, -1);
    std::vector<int> free_cols(n);
    for (int c = 0; c < n; ++c) free_cols[c] = c;
    double fixed_cost = 0.0;
    for (int r = 0; r < n; ++r) {
        int remaining = n - r - 1;
        for (size_t ci = 0; ci < free_cols.size(); ++ci) {
            int c = free_cols[ci];
            double partial = fixed_cost + padded(r, c);
            std::vector<int> sub_cols(free_cols);
            sub_cols.erase(sub_cols.begin() + static_cast<long>(ci));
            auto sub_cost = [&](int i, int j) { return padded(r + 1 + i, sub_cols[j]); };
            double rest = solve_square(remaining, sub_cost, nullptr);
            if (partial + rest <= best + eps) {
                assign[r] = c;
                fixed_cost = partial;
                free_cols.erase(free_cols.begin() + static_cast<long>(ci));
                break;
            }
        }
        if (assign[r] < 0)
            throw std::logic_error("hungarian: refinement failed to place row " +
                                   std::to_string(r));
    }

    for (int r = 0; r < n; ++r) {
        int c = assign[r];
        if (r < m && c < ncols) {
            out.pairs.emplace_back(r, c);
            out.total_score += cost[r][c];
        } else {
            if (r < m) out.unmatched_rows.push_back(r);
            if (c < ncols) out.unmatched_cols.push_back(c);
        }
    }
    std::sort(out.unmatched_cols.begin(), out.unmatched_cols.end());
    return out;
}

Matrix fuse_similarity(const Matrix& s_app, const Matrix& s_iou, double lambda_app) {
    if (s_app.size() != s_iou.size())
        throw std::invalid_argument("fuse_similarity: row count mismatch");
    Matrix out(s_app.size());
    for (size_t r = 0; r < s_app.size(); ++r) {
        if (s_app[r].size() != s_iou[r].size())
            throw std::invalid_argument("fuse_similarity: column count mismatch");
        out[r].resize(s_app[r].size());
        for (size_t c = 0; c < s_app[r].size(); ++c)
            out[r][c] = lambda_app * s_app[r][c] + (1.0 - lambda_app) * s_iou[r][c];
    }
    return out;
}

Matching match_with_threshold(const Matrix& s, double threshold) {
    Matrix cost(s.size());
    for (size_t r = 0; r < s.size(); ++r) {
        cost[r].resize(s[r].size());
        for (size_t c = 0; c < s[r].size(); ++c) cost[r][c] = 1.0 - s[r][c];
    }
    Matching m = hungarian(cost);
    Matching out;
    out.unmatched_rows = m.unmatched_rows;
    out.unmatched_cols = m.unmatched_cols;
    for (auto [r, c] : m.pairs) {
        if (s[r][c] < threshold) {
            out.unmatched_rows.push_back(r);
            out.unmatched_cols.push_back(c);
        } else {
            out.pairs.emplace_back(r, c);
            out.total_score += s[r][c];
        }
    }
    std::sort(out.unmatched_rows.begin(), out.unmatched_rows.end());
    std::sort(out.unmatched_cols.begin(), out.unmatched_cols.end());
    return out;
}

}  // namespace mot
