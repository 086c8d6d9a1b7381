#include "deleaker/attn_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace deleaker {

IndexSet::IndexSet(std::vector<int> idx) : indices(std::move(idx)) {
    std::sort(indices.begin(), indices.end());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
}

IndexSet IndexSet::range(int begin, int end) {
    IndexSet s;
    if (end > begin) {
        s.indices.reserve(static_cast<size_t>(end - begin));
        for (int i = begin; i < end; ++i)
            s.indices.push_back(i);
    }
    return s;
}

bool IndexSet::contains(int i) const {
    return std::binary_search(indices.begin(), indices.end(), i);
}

bool IndexSet::intersects(const IndexSet& other) const {
    auto a = indices.begin();
    auto b = other.indices.begin();
    while (a != indices.end() && b != other.indices.end()) {
        if (*a == *b)
            return true;
        if (*a < *b)
            ++a;
        else
            ++b;
    }
    return false;
}

Mat scaled_scores(const Mat& q, const Mat& k, int d) {
    if (q.cols != k.cols || q.rows != k.rows)
        throw std::invalid_argument("scaled_scores: Q/K shape mismatch");
    if (d != q.cols)
        throw std::invalid_argument("scaled_scores: d must equal the column count");
    const int m = q.rows;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    Mat out(m, m);
    for (int r = 0; r < m; ++r) {
        const auto qr = q.row(r);
        for (int c = 0; c < m; ++c) {
            const auto kc = k.row(c);
            double dot = 0.0;
            for (int j = 0; j < d; ++j)
                dot += static_cast<double>(qr[j]) * static_cast<double>(kc[j]);
            out.at(r, c) = static_cast<float>(dot * inv_sqrt_d);
        }
    }
    return out;
}

Mat softmax_rows(const Mat& scores) {
    Mat out(scores.rows, scores.cols);
    for (int r = 0; r < scores.rows; ++r) {
        const auto row = scores.row(r);
        float mx = -std::numeric_limits<float>::infinity();
        for (float v : row)
            mx = std::max(mx, v);
        if (std::isinf(mx) && mx < 0.0f)
            throw std::runtime_error("softmax_rows: degenerate row (all -inf)");
        double denom = 0.0;
        for (int c = 0; c < scores.cols; ++c) {
            // exp(-inf - mx) == 0 exactly, so suppressed cells get weight 0
            double e = std::exp(static_cast<double>(row[c]) - static_cast<double>(mx));
            out.at(r, c) = static_cast<float>(e);
            denom += e;
        }
        const double inv = 1.0 / denom;
        for (int c = 0; c < scores.cols; ++c)
            out.at(r, c) = static_cast<float>(static_cast<double>(out.at(r, c)) * inv);
    }
    return out;
}

Stats subset_stats(const Mat& m, const IndexSet& rows, const IndexSet& cols) {
    if (rows.empty() || cols.empty())
        throw std::invalid_argument("subset_stats: empty subset");
    const double n = static_cast<double>(rows.size()) * static_cast<double>(cols.size());
    double sum = 0.0;
    for (int r : rows.indices)
        for (int c : cols.indices)
            sum += static_cast<double>(m.at(r, c));
    const double mean = sum / n;
    double sq = 0.0;
    for (int r : rows.indices)
        for (int c : cols.indices) {
            const double d = static_cast<double>(m.at(r, c)) - mean;
            sq += d * d;
        }
    return {mean, std::sqrt(sq / n)};
}

Stats finite_subset_stats(const Mat& m, const IndexSet& rows, const IndexSet& cols, int* finite_count) {
    double sum = 0.0;
    long count = 0;
    for (int r : rows.indices)
        for (int c : cols.indices) {
            const float v = m.at(r, c);
            if (std::isfinite(v)) {
                sum += static_cast<double>(v);
                ++count;
            }
        }
    if (finite_count)
        *finite_count = static_cast<int>(count);
    if (count == 0)
        return {0.0, 0.0};
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (int r : rows.indices)
        for (int c : cols.indices) {
            const float v = m.at(r, c);
            if (std::isfinite(v)) {
                const double d = static_cast<double>(v) - mean;
                sq += d * d;
            }
        }
    return {mean, std::sqrt(sq / static_cast<double>(count))};
}

Mat head_average(std::span<const Mat> heads) {
    if (heads.empty())
        throw std::invalid_argument("head_average: no heads");
    const Mat& first = heads.front();
    for (const Mat& h : heads)
        if (!h.same_shape(first))
            throw std::invalid_argument("head_average: shape mismatch across heads");
    Mat out(first.rows, first.cols);
    const double inv = 1.0 / static_cast<double>(heads.size());
    for (size_t i = 0; i < out.data.size(); ++i) {
        double acc = 0.0;
        for (const Mat& h : heads)
            acc += static_cast<double>(h.data[i]);
        out.data[i] = static_cast<float>(acc * inv);
    }
    return out;
}

} // namespace deleaker
