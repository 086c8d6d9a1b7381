#pragma once

#include <string>
#include <vector>

namespace deleaker {

struct CostMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data; // row-major
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;

    CostMatrix() = default;
    CostMatrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
};

struct Assignment {
    std::vector<int> entity_to_mask; // column per row; -1 when padded away (rows > cols)
    double total_cost = 0.0;         // over real columns only
};

// Minimum-total-cost injective row -> column map. Rectangular inputs are
// padded internally with max entry + 1. Among all optimal assignments the
// lexicographically smallest assignment vector is returned. Throws on
// non-finite entries.
Assignment hungarian(const CostMatrix& cost);

// Maximizes total similarity by running hungarian on
// cost = max(similarity) - similarity. total_cost reports the achieved
// similarity sum.
Assignment assign_masks(const CostMatrix& similarity);

} // namespace deleaker
