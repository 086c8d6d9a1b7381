#include "deleaker/masking.hpp"

#include <cmath>
#include <stdexcept>

namespace deleaker {

void EntityLayout::validate(const FieldDims& dims) const {
    for (size_t i = 0; i < entities.size(); ++i) {
        const Entity& e = entities[i];
        if (e.text_tokens.empty())
            throw std::invalid_argument("EntityLayout: entity with empty text span");
        for (int t : e.text_tokens.indices)
            if (t < 0 || t >= dims.text_tokens)
                throw std::invalid_argument("EntityLayout: text token out of range");
        for (size_t j = 0; j < i; ++j)
            if (e.text_tokens.intersects(entities[j].text_tokens))
                throw std::invalid_argument("EntityLayout: overlapping text spans");
    }
}

MaskHistory::MaskHistory(int entities, int cells, bool temporal)
    : entity_count(entities), map_size(cells), temporal_mean(temporal),
      sums(static_cast<size_t>(entities), std::vector<double>(static_cast<size_t>(cells), 0.0)) {}

double MaskHistory::mean_at(int entity, int image_token) const {
    if (samples == 0)
        throw std::runtime_error("MaskHistory: no samples accumulated");
    return sums[static_cast<size_t>(entity)][static_cast<size_t>(image_token)] / static_cast<double>(samples);
}

std::vector<double> MaskHistory::mean_map(int entity) const {
    if (samples == 0)
        throw std::runtime_error("MaskHistory: no samples accumulated");
    std::vector<double> out = sums[static_cast<size_t>(entity)];
    const double inv = 1.0 / static_cast<double>(samples);
    for (double& v : out)
        v *= inv;
    return out;
}

void accumulate(MaskHistory& history, const Mat& head_avg, const EntityLayout& layout, const FieldDims& dims,
                int global_block, const FracWindow& window, int total_blocks) {
    if (global_block == 0)
        return; // the first block of the run is excluded from the history
    if (!window.contains(global_block, total_blocks))
        return;
    if (history.entity_count != layout.count() || history.map_size != dims.image_tokens())
        throw std::invalid_argument("accumulate: history shape does not match layout/dims");

    if (!history.temporal_mean) {
        for (auto& m : history.sums)
            std::fill(m.begin(), m.end(), 0.0);
        history.samples = 0;
    }
    for (int e = 0; e < layout.count(); ++e) {
        const IndexSet& span = layout.entities[static_cast<size_t>(e)].text_tokens;
        const double inv_span = 1.0 / static_cast<double>(span.size());
        std::vector<double>& sum = history.sums[static_cast<size_t>(e)];
        for (int img = 0; img < dims.image_tokens(); ++img) {
            const int q = dims.to_global(img);
            double acc = 0.0;
            for (int k : span.indices)
                acc += static_cast<double>(head_avg.at(q, k));
            sum[static_cast<size_t>(img)] += acc * inv_span;
        }
    }
    ++history.samples;
}

IndexSet threshold_mask(const MaskHistory& history, int entity, double beta1) {
    const std::vector<double> map = history.mean_map(entity);
    double sum = 0.0;
    for (double v : map)
        sum += v;
    const double mean = sum / static_cast<double>(map.size());
    double sq = 0.0;
    for (double v : map)
        sq += (v - mean) * (v - mean);
    const double sigma = std::sqrt(sq / static_cast<double>(map.size()));
    const double threshold = mean + beta1 * sigma;

    std::vector<int> idx;
    for (size_t q = 0; q < map.size(); ++q)
        if (map[q] > threshold)
            idx.push_back(static_cast<int>(q));
    return IndexSet(std::move(idx));
}

namespace {

std::vector<char> to_grid(const IndexSet& mask, GridDims grid) {
    std::vector<char> g(static_cast<size_t>(grid.cells()), 0);
    for (int q : mask.indices) {
        if (q < 0 || q >= grid.cells())
            throw std::invalid_argument("smooth_mask_spatial: index outside grid");
        g[static_cast<size_t>(q)] = 1;
    }
    return g;
}

// 3x3 square structuring element; cells outside the grid count as unset.
std::vector<char> dilate(const std::vector<char>& g, GridDims grid) {
    std::vector<char> out(g.size(), 0);
    for (int r = 0; r < grid.h; ++r)
        for (int c = 0; c < grid.w; ++c) {
            char v = 0;
            for (int dr = -1; dr <= 1 && !v; ++dr)
                for (int dc = -1; dc <= 1 && !v; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr >= 0 && rr < grid.h && cc >= 0 && cc < grid.w && g[static_cast<size_t>(rr) * grid.w + cc])
                        v = 1;
                }
            out[static_cast<size_t>(r) * grid.w + c] = v;
        }
    return out;
}

std::vector<char> erode(const std::vector<char>& g, GridDims grid) {
    std::vector<char> out(g.size(), 0);
    for (int r = 0; r < grid.h; ++r)
        for (int c = 0; c < grid.w; ++c) {
            char v = 1;
            for (int dr = -1; dr <= 1 && v; ++dr)
                for (int dc = -1; dc <= 1 && v; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= grid.h || cc < 0 || cc >= grid.w || !g[static_cast<size_t>(rr) * grid.w + cc])
                        v = 0;
                }
            out[static_cast<size_t>(r) * grid.w + c] = v;
        }
    return out;
}

} // namespace

IndexSet smooth_mask_spatial(const IndexSet& mask, GridDims grid) {
    if (mask.empty())
        return mask;
    std::vector<char> g = to_grid(mask, grid);
    g = erode(dilate(g, grid), grid); // closing: fill small holes
    g = dilate(erode(g, grid), grid); // opening: drop isolated noise cells
    std::vector<int> idx;
    for (int q = 0; q < grid.cells(); ++q)
        if (g[static_cast<size_t>(q)])
            idx.push_back(q);
    return IndexSet(std::move(idx));
}

bool EntityMaskSet::any_nonempty() const {
    for (const IndexSet& m : masks)
        if (!m.empty())
            return true;
    return false;
}

bool EntityMaskSet::pairwise_disjoint() const {
    for (size_t i = 0; i < masks.size(); ++i)
        for (size_t j = i + 1; j < masks.size(); ++j)
            if (masks[i].intersects(masks[j]))
                return false;
    return true;
}

EntityMaskSet resolve_overlaps(EntityMaskSet masks, const MaskHistory& history) {
    const int n = static_cast<int>(masks.masks.size());
    std::vector<std::vector<int>> kept(static_cast<size_t>(n));
    std::vector<int> claimants;
    for (int q = 0; q < masks.grid.cells(); ++q) {
        claimants.clear();
        for (int e = 0; e < n; ++e)
            if (masks.masks[static_cast<size_t>(e)].contains(q))
                claimants.push_back(e);
        if (claimants.empty())
            continue;
        int winner = claimants[0];
        for (size_t i = 1; i < claimants.size(); ++i)
            if (history.mean_at(claimants[i], q) > history.mean_at(winner, q))
                winner = claimants[i];
        kept[static_cast<size_t>(winner)].push_back(q);
    }
    for (int e = 0; e < n; ++e)
        masks.masks[static_cast<size_t>(e)] = IndexSet(std::move(kept[static_cast<size_t>(e)]));
    return masks;
}

EntityMaskSet masks_from_history(const MaskHistory& history, const EntityLayout& layout, const DeleakerConfig& cfg,
                                 GridDims grid) {
    EntityMaskSet out;
    out.grid = grid;
    out.masks.reserve(static_cast<size_t>(layout.count()));
    for (int e = 0; e < layout.count(); ++e) {
        IndexSet mask = threshold_mask(history, e, cfg.beta1);
        if (cfg.toggles.spatial_smooth)
            mask = smooth_mask_spatial(mask, grid);
        out.masks.push_back(std::move(mask));
    }
    return resolve_overlaps(std::move(out), history);
}

TraceView make_trace_view(const RunTrace& trace) {
    TraceView view;
    view.dims = trace.config.dims();
    view.total_blocks = trace.config.total_blocks();
    const RunTrace* t = &trace;
    view.raw_heads = [t](int gb) -> const std::vector<Mat>& { return t->blocks[static_cast<size_t>(gb)].raw; };
    return view;
}

EntityMaskSet build_masks(const TraceView& trace, const EntityLayout& layout, const DeleakerConfig& cfg) {
    cfg.validate();
    layout.validate(trace.dims);
    if (layout.count() < 2)
        throw std::invalid_argument("build_masks: need at least 2 entities");

    int usable = 0;
    for (int b = 1; b < trace.total_blocks; ++b)
        if (cfg.agg_window.contains(b, trace.total_blocks))
            ++usable;
    if (usable == 0)
        throw std::invalid_argument("build_masks: aggregation window contains zero blocks");

    MaskHistory history(layout.count(), trace.dims.image_tokens(), cfg.toggles.temporal_smooth);
    for (int gb = 0; gb < trace.total_blocks; ++gb) {
        if (gb == 0 || !cfg.agg_window.contains(gb, trace.total_blocks))
            continue;
        const Mat head_avg = head_average(trace.raw_heads(gb));
        accumulate(history, head_avg, layout, trace.dims, gb, cfg.agg_window, trace.total_blocks);
    }
    EntityMaskSet masks = masks_from_history(history, layout, cfg, trace.dims.grid);
    masks.frozen = true;
    return masks;
}

} // namespace deleaker
