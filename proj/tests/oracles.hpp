#pragma once

// Independent reference implementations used to check the library. These
// deliberately re-derive results cell by cell or by exhaustive enumeration
// and must not call the code paths they verify.

#include "deleaker/analysis.hpp"
#include "deleaker/intervention.hpp"
#include "deleaker/masking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <utility>
#include <vector>

namespace oracles {

using deleaker::DeleakerConfig;
using deleaker::EntityLayout;
using deleaker::EntityMaskSet;
using deleaker::FieldDims;
using deleaker::IndexSet;
using deleaker::Mat;
using deleaker::StrengthenDirection;

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;
};

// Direct two-loop accumulation over a rows x cols block.
inline MeanStd block_stats(const Mat& m, const std::vector<int>& rows, const std::vector<int>& cols) {
    double sum = 0.0;
    for (int r : rows)
        for (int c : cols)
            sum += m.at(r, c);
    const double n = static_cast<double>(rows.size()) * static_cast<double>(cols.size());
    const double mean = sum / n;
    double sq = 0.0;
    for (int r : rows)
        for (int c : cols)
            sq += (m.at(r, c) - mean) * (m.at(r, c) - mean);
    return {mean, std::sqrt(sq / n)};
}

inline std::vector<int> to_global(const IndexSet& image_local, const FieldDims& dims) {
    std::vector<int> out;
    for (int q : image_local.indices)
        out.push_back(dims.to_global(q));
    return out;
}

// Per-cell case evaluator for the attention modification: classifies every
// (q, k) cell independently and applies the matching rule.
inline std::vector<Mat> deleaker_per_cell(const std::vector<Mat>& per_head, const Mat& head_avg,
                                          const EntityMaskSet& masks, const EntityLayout& layout,
                                          const DeleakerConfig& cfg, const FieldDims& dims, int global_block,
                                          int total_blocks) {
    std::vector<Mat> out = per_head;
    if (!cfg.intervene_window.contains(global_block, total_blocks))
        return out;

    const int n_entities = layout.count();
    const float neg_inf = -std::numeric_limits<float>::infinity();

    // precompute high-pair membership per ordered pair from the averaged field
    std::set<std::pair<int, int>> high;
    if (cfg.toggles.img_img_suppress) {
        for (int i = 0; i < n_entities; ++i)
            for (int j = 0; j < n_entities; ++j) {
                if (i == j)
                    continue;
                const std::vector<int> rows = to_global(masks.masks[static_cast<size_t>(i)], dims);
                const std::vector<int> cols = to_global(masks.masks[static_cast<size_t>(j)], dims);
                if (rows.empty() || cols.empty())
                    continue;
                const MeanStd s = block_stats(head_avg, rows, cols);
                for (int q : rows)
                    for (int k : cols)
                        if (static_cast<double>(head_avg.at(q, k)) > s.mean + cfg.beta2 * s.stddev)
                            high.insert({q, k});
            }
    }

    auto entity_of_image = [&](int token) {
        if (!dims.is_image(token))
            return -1;
        const int local = dims.to_image_local(token);
        for (int e = 0; e < n_entities; ++e)
            if (masks.masks[static_cast<size_t>(e)].contains(local))
                return e;
        return -1;
    };
    auto entity_of_text = [&](int token) {
        if (token >= dims.text_tokens)
            return -1;
        for (int e = 0; e < n_entities; ++e)
            if (layout.entities[static_cast<size_t>(e)].text_tokens.contains(token))
                return e;
        return -1;
    };

    const bool img_query = cfg.strengthen_direction == StrengthenDirection::ImgQueryTxtKey ||
                           cfg.strengthen_direction == StrengthenDirection::Both;
    const bool txt_query = cfg.strengthen_direction == StrengthenDirection::TxtQueryImgKey ||
                           cfg.strengthen_direction == StrengthenDirection::Both;

    const int n = dims.n();
    for (int q = 0; q < n; ++q) {
        for (int k = 0; k < n; ++k) {
            const int qi = entity_of_image(q);
            const int ki = entity_of_image(k);
            const int qt = entity_of_text(q);
            const int kt = entity_of_text(k);

            const bool suppress_img_img =
                cfg.toggles.img_img_suppress && qi >= 0 && ki >= 0 && qi != ki && high.count({q, k}) > 0;
            const bool suppress_img_txt = cfg.toggles.img_txt_suppress && qi >= 0 && kt >= 0 && qi != kt;
            const bool suppress_txt_txt = cfg.toggles.txt_txt_suppress && qt >= 0 && kt >= 0 && qt != kt;
            const bool strengthen = cfg.toggles.self_strengthen &&
                                    ((img_query && qi >= 0 && kt == qi) || (txt_query && qt >= 0 && ki == qt));

            for (Mat& s : out) {
                if (suppress_img_img || suppress_img_txt || suppress_txt_txt)
                    s.at(q, k) = neg_inf;
                else if (strengthen)
                    s.at(q, k) = static_cast<float>(cfg.alpha * static_cast<double>(s.at(q, k)));
            }
        }
    }
    return out;
}

// Exhaustive minimum-cost assignment by permutation enumeration (n <= m).
struct BruteAssignment {
    std::vector<int> row_to_col;
    double total = 0.0;
};

inline BruteAssignment brute_force_assignment(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    const int m = n > 0 ? static_cast<int>(cost[0].size()) : 0;
    std::vector<int> cols(static_cast<size_t>(m));
    std::iota(cols.begin(), cols.end(), 0);

    BruteAssignment best;
    best.total = std::numeric_limits<double>::infinity();
    std::vector<int> pick(static_cast<size_t>(n));
    // enumerate ordered selections of n columns out of m
    std::vector<int> perm(cols);
    std::sort(perm.begin(), perm.end());
    do {
        double total = 0.0;
        for (int r = 0; r < n; ++r)
            total += cost[static_cast<size_t>(r)][static_cast<size_t>(perm[static_cast<size_t>(r)])];
        if (total < best.total) {
            best.total = total;
            best.row_to_col.assign(perm.begin(), perm.begin() + n);
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

inline double mask_f1(const IndexSet& mask, const IndexSet& truth) {
    int inter = 0;
    for (int q : mask.indices)
        if (truth.contains(q))
            ++inter;
    if (mask.size() + truth.size() == 0)
        return 1.0;
    return 2.0 * inter / static_cast<double>(mask.size() + truth.size());
}

} // namespace oracles
