#include "deleaker/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace deleaker {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Shortest augmenting path solver on a square matrix (rows == cols == n).
// Returns the assigned column per row.
std::vector<int> solve_square(const std::vector<double>& a, int n) {
    std::vector<double> u(static_cast<size_t>(n) + 1, 0.0), v(static_cast<size_t>(n) + 1, 0.0);
    std::vector<int> p(static_cast<size_t>(n) + 1, 0), way(static_cast<size_t>(n) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<size_t>(n) + 1, kInf);
        std::vector<char> used(static_cast<size_t>(n) + 1, 0);
        do {
            used[static_cast<size_t>(j0)] = 1;
            const int i0 = p[static_cast<size_t>(j0)];
            double delta = kInf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<size_t>(j)])
                    continue;
                const double cur = a[static_cast<size_t>(i0 - 1) * n + (j - 1)] - u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
                if (cur < minv[static_cast<size_t>(j)]) {
                    minv[static_cast<size_t>(j)] = cur;
                    way[static_cast<size_t>(j)] = j0;
                }
                if (minv[static_cast<size_t>(j)] < delta) {
                    delta = minv[static_cast<size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<size_t>(j)]) {
                    u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
                    v[static_cast<size_t>(j)] -= delta;
                } else {
                    minv[static_cast<size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<size_t>(j0)];
            p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_to_col(static_cast<size_t>(n), -1);
    for (int j = 1; j <= n; ++j)
        if (p[static_cast<size_t>(j)] > 0)
            row_to_col[static_cast<size_t>(p[static_cast<size_t>(j)] - 1)] = j - 1;
    return row_to_col;
}

// Pads to a square matrix with max entry + 1 so rectangular inputs reduce
// to the square case without distorting real choices.
struct Padded {
    std::vector<double> a;
    int n = 0;        // side of the square
    int real_rows = 0;
    int real_cols = 0;
};

Padded pad_square(const CostMatrix& cost) {
    for (double v : cost.data)
        if (!std::isfinite(v))
            throw std::invalid_argument("hungarian: non-finite cost entry");
    Padded p;
    p.real_rows = cost.rows;
    p.real_cols = cost.cols;
    p.n = std::max(cost.rows, cost.cols);
    double pad = 1.0;
    if (!cost.data.empty())
        pad = *std::max_element(cost.data.begin(), cost.data.end()) + 1.0;
    p.a.assign(static_cast<size_t>(p.n) * p.n, pad);
    for (int r = 0; r < cost.rows; ++r)
        for (int c = 0; c < cost.cols; ++c)
            p.a[static_cast<size_t>(r) * p.n + c] = cost.at(r, c);
    return p;
}

double total_for(const Padded& p, const std::vector<int>& row_to_col) {
    double total = 0.0;
    for (int r = 0; r < p.n; ++r)
        total += p.a[static_cast<size_t>(r) * p.n + row_to_col[static_cast<size_t>(r)]];
    return total;
}

// Minimum achievable total with a prefix of rows pinned to given columns.
double min_total_with_prefix(const Padded& p, const std::vector<int>& pinned) {
    double fixed = 0.0;
    std::vector<char> col_used(static_cast<size_t>(p.n), 0);
    for (size_t r = 0; r < pinned.size(); ++r) {
        fixed += p.a[r * static_cast<size_t>(p.n) + static_cast<size_t>(pinned[r])];
        col_used[static_cast<size_t>(pinned[r])] = 1;
    }
    const int rows_left = p.n - static_cast<int>(pinned.size());
    if (rows_left == 0)
        return fixed;
    std::vector<int> free_cols;
    for (int c = 0; c < p.n; ++c)
        if (!col_used[static_cast<size_t>(c)])
            free_cols.push_back(c);
    std::vector<double> sub(static_cast<size_t>(rows_left) * rows_left, 0.0);
    for (int r = 0; r < rows_left; ++r)
        for (int c = 0; c < rows_left; ++c)
            sub[static_cast<size_t>(r) * rows_left + c] =
                p.a[static_cast<size_t>(r + static_cast<int>(pinned.size())) * p.n + free_cols[static_cast<size_t>(c)]];
    const std::vector<int> sol = solve_square(sub, rows_left);
    double rest = 0.0;
    for (int r = 0; r < rows_left; ++r)
        rest += sub[static_cast<size_t>(r) * rows_left + sol[static_cast<size_t>(r)]];
    return fixed + rest;
}

} // namespace

Assignment hungarian(const CostMatrix& cost) {
    Assignment out;
    if (cost.rows == 0)
        return out;
    if (cost.cols == 0)
        throw std::invalid_argument("hungarian: no columns to assign");
    const Padded p = pad_square(cost);

    const std::vector<int> initial = solve_square(p.a, p.n);
    const double best = total_for(p, initial);
    const double tol = 1e-9 * std::max(1.0, std::fabs(best));

    // Lexicographic tie-break: pin each row in turn to the smallest column
    // that still allows the optimal total.
    std::vector<int> pinned;
    pinned.reserve(static_cast<size_t>(p.real_rows));
    std::vector<char> col_used(static_cast<size_t>(p.n), 0);
    for (int r = 0; r < p.real_rows; ++r) {
        bool found = false;
        for (int c = 0; c < p.n && !found; ++c) {
            if (col_used[static_cast<size_t>(c)])
                continue;
            pinned.push_back(c);
            if (min_total_with_prefix(p, pinned) <= best + tol) {
                col_used[static_cast<size_t>(c)] = 1;
                found = true;
            } else {
                pinned.pop_back();
            }
        }
        if (!found)
            throw std::logic_error("hungarian: lexicographic refinement failed");
    }

    out.entity_to_mask.resize(static_cast<size_t>(p.real_rows));
    out.total_cost = 0.0;
    for (int r = 0; r < p.real_rows; ++r) {
        const int c = pinned[static_cast<size_t>(r)];
        if (c < p.real_cols) {
            out.entity_to_mask[static_cast<size_t>(r)] = c;
            out.total_cost += cost.at(r, c);
        } else {
            out.entity_to_mask[static_cast<size_t>(r)] = -1; // lost to padding (rows > cols)
        }
    }
    return out;
}

Assignment assign_masks(const CostMatrix& similarity) {
    for (double v : similarity.data)
        if (!std::isfinite(v))
            throw std::invalid_argument("assign_masks: non-finite similarity entry");
    CostMatrix cost = similarity;
    double mx = 0.0;
    if (!similarity.data.empty())
        mx = *std::max_element(similarity.data.begin(), similarity.data.end());
    for (double& v : cost.data)
        v = mx - v; // max-shift keeps entries non-negative
    Assignment a = hungarian(cost);
    a.total_cost = 0.0;
    for (size_t r = 0; r < a.entity_to_mask.size(); ++r)
        if (a.entity_to_mask[r] >= 0)
            a.total_cost += similarity.at(static_cast<int>(r), a.entity_to_mask[r]);
    return a;
}

} // namespace deleaker
