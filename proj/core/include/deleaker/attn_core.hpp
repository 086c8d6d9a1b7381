#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace deleaker {

// Dense row-major float matrix. All attention score matrices in this
// project use this type; statistics over it are accumulated in double.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<float> data;

    Mat() = default;
    Mat(int r, int c, float fill = 0.0f) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

    float& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    float at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    std::span<float> row(int r) { return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)}; }
    std::span<const float> row(int r) const {
        return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
    }

    bool same_shape(const Mat& other) const { return rows == other.rows && cols == other.cols; }
    bool operator==(const Mat& other) const = default;
};

// Sorted, duplicate-free set of token indices.
struct IndexSet {
    std::vector<int> indices;

    IndexSet() = default;
    explicit IndexSet(std::vector<int> idx);

    static IndexSet range(int begin, int end); // [begin, end)

    bool empty() const { return indices.empty(); }
    int size() const { return static_cast<int>(indices.size()); }
    bool contains(int i) const;
    bool intersects(const IndexSet& other) const;

    bool operator==(const IndexSet& other) const = default;
};

struct GridDims {
    int h = 0;
    int w = 0;
    int cells() const { return h * w; }
    bool operator==(const GridDims&) const = default;
};

// Token universe of one run: text tokens first, then H*W image tokens
// mapped row-major onto the grid.
struct FieldDims {
    int text_tokens = 0;
    GridDims grid;

    int image_tokens() const { return grid.cells(); }
    int n() const { return text_tokens + grid.cells(); }
    bool is_image(int token) const { return token >= text_tokens && token < n(); }
    int image_begin() const { return text_tokens; }
    int to_global(int image_local) const { return text_tokens + image_local; }
    int to_image_local(int token) const { return token - text_tokens; }
    IndexSet image_index_set() const { return IndexSet::range(text_tokens, n()); }
    bool operator==(const FieldDims&) const = default;
};

// One score matrix with its trace coordinates and token universe.
struct AttentionField {
    int step = 0;
    int block = 0;
    int head = 0;
    FieldDims dims;
    Mat scores;
};

struct Stats {
    double mean = 0.0;
    double stddev = 0.0; // population (divide by n)
};

// scores[q][k] = dot(Q[q], K[k]) / sqrt(d). Throws on shape mismatch.
Mat scaled_scores(const Mat& q, const Mat& k, int d);

// Row softmax with max-subtraction; -inf maps to exactly 0.
// Throws "degenerate row" if a row is entirely -inf.
Mat softmax_rows(const Mat& scores);

// Mean and population standard deviation over the rows x cols block.
// Throws "empty subset" when either set is empty.
Stats subset_stats(const Mat& m, const IndexSet& rows, const IndexSet& cols);

// Same, but skipping non-finite entries (suppressed cells). Returns the
// count of finite cells seen; stats are zero when none are.
Stats finite_subset_stats(const Mat& m, const IndexSet& rows, const IndexSet& cols, int* finite_count = nullptr);

// Elementwise mean across heads, accumulated in double.
Mat head_average(std::span<const Mat> heads);

} // namespace deleaker
