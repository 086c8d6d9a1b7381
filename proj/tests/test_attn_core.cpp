#include "deleaker/attn_core.hpp"

#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <random>

using namespace deleaker;

namespace {

Mat random_mat(std::mt19937& rng, int rows, int cols, float lo = -3.0f, float hi = 3.0f) {
    std::uniform_real_distribution<float> dist(lo, hi);
    Mat m(rows, cols);
    for (float& v : m.data)
        v = dist(rng);
    return m;
}

} // namespace

TEST_CASE("scaled_scores: identity rows") {
    Mat q(2, 2);
    q.at(0, 0) = 1.0f;
    q.at(1, 1) = 1.0f;
    const Mat s = scaled_scores(q, q, 2);
    CHECK(s.at(0, 0) == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(s.at(0, 1) == doctest::Approx(0.0));
    CHECK(s.at(1, 0) == doctest::Approx(0.0));
    CHECK(s.at(1, 1) == doctest::Approx(1.0 / std::sqrt(2.0)));
}

TEST_CASE("scaled_scores: single row dot product") {
    Mat q(1, 2, 1.0f);
    const Mat s = scaled_scores(q, q, 2);
    CHECK(s.at(0, 0) == doctest::Approx(1.41421356).epsilon(1e-7));
}

TEST_CASE("scaled_scores: zero rows give zero matrix") {
    Mat q(3, 4, 0.0f);
    Mat k(3, 4, 2.0f);
    const Mat s = scaled_scores(q, k, 4);
    for (float v : s.data)
        CHECK(v == 0.0f);
}

TEST_CASE("scaled_scores: shape mismatch") {
    Mat q(2, 3);
    Mat k(2, 4);
    CHECK_THROWS_AS(scaled_scores(q, k, 3), std::invalid_argument);
    CHECK_THROWS_AS(scaled_scores(q, q, 4), std::invalid_argument);
}

TEST_CASE("softmax_rows: symmetric pair") {
    Mat m(1, 2, 0.0f);
    const Mat w = softmax_rows(m);
    CHECK(w.at(0, 0) == doctest::Approx(0.5));
    CHECK(w.at(0, 1) == doctest::Approx(0.5));
}

TEST_CASE("softmax_rows: -inf maps to exactly zero") {
    Mat m(1, 2);
    m.at(0, 0) = -std::numeric_limits<float>::infinity();
    m.at(0, 1) = 0.0f;
    const Mat w = softmax_rows(m);
    CHECK(w.at(0, 0) == 0.0f);
    CHECK(w.at(0, 1) == 1.0f);
}

TEST_CASE("softmax_rows: reference values") {
    Mat m(1, 3);
    m.at(0, 0) = 1.0f;
    m.at(0, 1) = 2.0f;
    m.at(0, 2) = 3.0f;
    const Mat w = softmax_rows(m);
    CHECK(w.at(0, 0) == doctest::Approx(0.09003057).epsilon(1e-5));
    CHECK(w.at(0, 1) == doctest::Approx(0.24472847).epsilon(1e-5));
    CHECK(w.at(0, 2) == doctest::Approx(0.66524096).epsilon(1e-5));
}

TEST_CASE("softmax_rows: degenerate row") {
    Mat m(1, 2, -std::numeric_limits<float>::infinity());
    CHECK_THROWS_WITH_AS(softmax_rows(m), doctest::Contains("degenerate row"), std::runtime_error);
}

TEST_CASE("softmax_rows: rows sum to one on random input") {
    std::mt19937 rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        const Mat m = random_mat(rng, 8, 8, -10.0f, 10.0f);
        const Mat w = softmax_rows(m);
        for (int r = 0; r < w.rows; ++r) {
            double sum = 0.0;
            for (float v : w.row(r))
                sum += v;
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("softmax_rows: shift invariance per row") {
    std::mt19937 rng(7);
    const Mat m = random_mat(rng, 6, 6);
    Mat shifted = m;
    for (int r = 0; r < m.rows; ++r)
        for (float& v : shifted.row(r))
            v += 2.5f;
    const Mat a = softmax_rows(m);
    const Mat b = softmax_rows(shifted);
    for (size_t i = 0; i < a.data.size(); ++i)
        CHECK(std::fabs(a.data[i] - b.data[i]) < 1e-6);
}

TEST_CASE("subset_stats: reference block") {
    Mat m(2, 2);
    m.at(0, 0) = 0.9f;
    m.at(0, 1) = 0.1f;
    m.at(1, 0) = 0.2f;
    m.at(1, 1) = 0.8f;
    const Stats s = subset_stats(m, IndexSet::range(0, 2), IndexSet::range(0, 2));
    CHECK(s.mean == doctest::Approx(0.5).epsilon(1e-7));
    CHECK(s.stddev == doctest::Approx(0.35355339).epsilon(1e-6));
}

TEST_CASE("subset_stats: constant block and singleton") {
    Mat m(3, 3, 2.5f);
    const Stats s = subset_stats(m, IndexSet::range(0, 3), IndexSet::range(0, 3));
    CHECK(s.mean == doctest::Approx(2.5));
    CHECK(s.stddev == doctest::Approx(0.0));

    const Stats one = subset_stats(m, IndexSet({1}), IndexSet({2}));
    CHECK(one.mean == doctest::Approx(2.5));
    CHECK(one.stddev == 0.0);
}

TEST_CASE("subset_stats: empty subset") {
    Mat m(2, 2);
    CHECK_THROWS_WITH_AS(subset_stats(m, IndexSet(), IndexSet::range(0, 2)), doctest::Contains("empty subset"),
                         std::invalid_argument);
}

TEST_CASE("subset_stats: variance identity against brute force") {
    std::mt19937 rng(11);
    for (int trial = 0; trial < 40; ++trial) {
        const Mat m = random_mat(rng, 10, 10);
        std::uniform_int_distribution<int> pick(0, 9);
        std::vector<int> rows, cols;
        for (int i = 0; i < 5; ++i) {
            rows.push_back(pick(rng));
            cols.push_back(pick(rng));
        }
        const IndexSet rs(rows), cs(cols);
        const Stats s = subset_stats(m, rs, cs);
        double sum = 0.0, sq = 0.0;
        for (int r : rs.indices)
            for (int c : cs.indices) {
                sum += m.at(r, c);
                sq += static_cast<double>(m.at(r, c)) * m.at(r, c);
            }
        const double n = static_cast<double>(rs.size()) * cs.size();
        const double var_oracle = sq / n - (sum / n) * (sum / n);
        CHECK(s.stddev * s.stddev == doctest::Approx(var_oracle).epsilon(1e-9));
    }
}

TEST_CASE("finite_subset_stats skips suppressed cells") {
    Mat m(2, 2, 1.0f);
    m.at(0, 0) = -std::numeric_limits<float>::infinity();
    int finite = 0;
    const Stats s = finite_subset_stats(m, IndexSet::range(0, 2), IndexSet::range(0, 2), &finite);
    CHECK(finite == 3);
    CHECK(s.mean == doctest::Approx(1.0));
    CHECK(s.stddev == doctest::Approx(0.0));
}

TEST_CASE("head_average matches manual mean") {
    std::mt19937 rng(3);
    std::vector<Mat> heads;
    for (int h = 0; h < 4; ++h)
        heads.push_back(random_mat(rng, 5, 5));
    const Mat avg = head_average(heads);
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 5; ++c) {
            double acc = 0.0;
            for (const Mat& h : heads)
                acc += h.at(r, c);
            CHECK(avg.at(r, c) == doctest::Approx(acc / 4.0).epsilon(1e-6));
        }
}

TEST_CASE("IndexSet basics") {
    const IndexSet s({5, 1, 3, 1});
    CHECK(s.size() == 3);
    CHECK(s.contains(3));
    CHECK(!s.contains(2));
    CHECK(s.intersects(IndexSet({3, 9})));
    CHECK(!s.intersects(IndexSet({0, 2, 4})));
}
