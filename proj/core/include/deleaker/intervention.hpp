#pragma once

#include "deleaker/attn_core.hpp"
#include "deleaker/config.hpp"
#include "deleaker/masking.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace deleaker {

// Ordered cross-entity image-image pairs above the dynamic threshold,
// in global token indices.
struct HighPairSet {
    std::vector<std::pair<int, int>> pairs;
    double mean = 0.0;
    double stddev = 0.0;
};

// Stats over rows = mask_i, cols = mask_j of the head-averaged field.
// Empty mask => std::nullopt, meaning "skip this pair".
std::optional<Stats> cross_pair_stats(const Mat& head_avg, const IndexSet& mask_i, const IndexSet& mask_j,
                                      const FieldDims& dims);

// Pairs (q, k) with score > mu_ij + beta2 * sigma_ij; recomputed fresh per
// block. Masks are image-local and must be disjoint.
HighPairSet high_attention_pairs(const Mat& head_avg, const IndexSet& mask_i, const IndexSet& mask_j, double beta2,
                                 const FieldDims& dims);

// The attention modification, applied to raw pre-softmax scores of every
// head. Identity when global_block is outside the intervention window. For
// every ordered entity pair i != j:
//   - image-image suppression: -inf on high pairs (computed head-averaged)
//   - image-text suppression: -inf on mask_i x span_j
//   - self strengthening: alpha * score on mask_i x span_i (per direction)
//   - text-text suppression (ablation): -inf on span_i x span_j
void apply_deleaker(std::vector<Mat>& per_head, const Mat& head_avg, const EntityMaskSet& masks,
                    const EntityLayout& layout, const DeleakerConfig& cfg, const FieldDims& dims, int global_block,
                    int total_blocks);

// One ablation configuration: a display label plus the toggle set.
struct AblationRow {
    std::string label;
    DeleakerToggles toggles;
};

// The standard ablation grid: the full method, each component removed in
// turn, the text-text variant, and each component in isolation.
std::vector<AblationRow> table2_ablation_grid(const DeleakerToggles& base = {});

// Stateful per-run driver: accumulates mask history over the aggregation
// window, freezes masks at its end, and applies the modification inside the
// intervention window. Usable directly as a run_diffusion hook.
class DeleakerHook {
public:
    DeleakerHook(const EntityLayout& layout, DeleakerConfig cfg, const FieldDims& dims, int total_blocks);

    std::vector<Mat> operator()(int global_block, const Mat& head_avg, const std::vector<Mat>& per_head);

    const EntityMaskSet& masks() const { return current_masks_; }
    bool frozen() const { return current_masks_.frozen; }

private:
    EntityLayout layout_;
    DeleakerConfig cfg_;
    FieldDims dims_;
    int total_blocks_;
    MaskHistory history_;
    EntityMaskSet current_masks_;
};

} // namespace deleaker
