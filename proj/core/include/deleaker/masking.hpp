#pragma once

#include "deleaker/attn_core.hpp"
#include "deleaker/config.hpp"
#include "deleaker/toy_dit.hpp"

#include <functional>
#include <string>
#include <vector>

namespace deleaker {

struct EntityLayout {
    struct Entity {
        int id = 0;
        std::string name;
        IndexSet text_tokens;
    };
    std::vector<Entity> entities;

    int count() const { return static_cast<int>(entities.size()); }
    void validate(const FieldDims& dims) const; // throws on overlap / out-of-range spans
};

// Running per-entity mean of image-token -> entity-text attention, averaged
// over heads and accumulated over the aggregation window. Sums are kept in
// double; the mean is formed on read.
struct MaskHistory {
    int entity_count = 0;
    int map_size = 0; // H*W
    int samples = 0;
    bool temporal_mean = true; // false: keep only the latest sample
    std::vector<std::vector<double>> sums; // [entity][image token]

    MaskHistory() = default;
    MaskHistory(int entities, int cells, bool temporal = true);

    double mean_at(int entity, int image_token) const;
    std::vector<double> mean_map(int entity) const;
};

// Adds one head-averaged field to the history when global_block lies inside
// the window. Global block 0 never accumulates.
void accumulate(MaskHistory& history, const Mat& head_avg, const EntityLayout& layout, const FieldDims& dims,
                int global_block, const FracWindow& window, int total_blocks);

// { q : mean_map[q] > mu + beta1 * sigma } with population stats over the
// full mean map. Empty results are legal (constant map, sigma = 0).
IndexSet threshold_mask(const MaskHistory& history, int entity, double beta1);

// Morphological closing then opening on the mask's binary grid with a 3x3
// square structuring element; out-of-grid neighborhoods are unset.
IndexSet smooth_mask_spatial(const IndexSet& mask, GridDims grid);

struct EntityMaskSet {
    std::vector<IndexSet> masks; // image-local indices per entity
    GridDims grid;
    bool frozen = false;

    bool any_nonempty() const;
    bool pairwise_disjoint() const;
};

// A token claimed by several masks stays with the entity whose mean map
// value there is highest; ties go to the lower entity index.
EntityMaskSet resolve_overlaps(EntityMaskSet masks, const MaskHistory& history);

// Threshold + optional spatial smoothing + overlap resolution on the
// current history state.
EntityMaskSet masks_from_history(const MaskHistory& history, const EntityLayout& layout, const DeleakerConfig& cfg,
                                 GridDims grid);

// Read-only stream of per-block raw head fields, the surface shared by
// in-memory runs and imported trace directories.
struct TraceView {
    FieldDims dims;
    int total_blocks = 0;
    std::function<const std::vector<Mat>&(int global_block)> raw_heads;
};

TraceView make_trace_view(const RunTrace& trace);

// Full pipeline: accumulate over the aggregation window, then threshold,
// smooth, resolve, freeze. Throws if the window contains no usable block.
EntityMaskSet build_masks(const TraceView& trace, const EntityLayout& layout, const DeleakerConfig& cfg);

} // namespace deleaker
