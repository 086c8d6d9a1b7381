#include "deleaker/intervention.hpp"

#include <limits>
#include <stdexcept>

namespace deleaker {

namespace {
constexpr float kNegInf = -std::numeric_limits<float>::infinity();

IndexSet to_global(const IndexSet& image_local, const FieldDims& dims) {
    std::vector<int> idx;
    idx.reserve(image_local.indices.size());
    for (int q : image_local.indices)
        idx.push_back(dims.to_global(q));
    IndexSet out;
    out.indices = std::move(idx); // already sorted, shift preserves order
    return out;
}
} // namespace

std::optional<Stats> cross_pair_stats(const Mat& head_avg, const IndexSet& mask_i, const IndexSet& mask_j,
                                      const FieldDims& dims) {
    if (mask_i.empty() || mask_j.empty())
        return std::nullopt;
    return subset_stats(head_avg, to_global(mask_i, dims), to_global(mask_j, dims));
}

HighPairSet high_attention_pairs(const Mat& head_avg, const IndexSet& mask_i, const IndexSet& mask_j, double beta2,
                                 const FieldDims& dims) {
    if (mask_i.intersects(mask_j))
        throw std::invalid_argument("high_attention_pairs: masks must be disjoint");
    HighPairSet out;
    const auto stats = cross_pair_stats(head_avg, mask_i, mask_j, dims);
    if (!stats)
        return out;
    out.mean = stats->mean;
    out.stddev = stats->stddev;
    const double threshold = stats->mean + beta2 * stats->stddev;
    for (int qi : mask_i.indices) {
        const int q = dims.to_global(qi);
        for (int kj : mask_j.indices) {
            const int k = dims.to_global(kj);
            if (static_cast<double>(head_avg.at(q, k)) > threshold)
                out.pairs.emplace_back(q, k);
        }
    }
    return out;
}

void apply_deleaker(std::vector<Mat>& per_head, const Mat& head_avg, const EntityMaskSet& masks,
                    const EntityLayout& layout, const DeleakerConfig& cfg, const FieldDims& dims, int global_block,
                    int total_blocks) {
    if (!cfg.intervene_window.contains(global_block, total_blocks))
        return;
    if (static_cast<int>(masks.masks.size()) != layout.count())
        throw std::invalid_argument("apply_deleaker: mask/layout entity count mismatch");
    if (!masks.pairwise_disjoint())
        throw std::invalid_argument("apply_deleaker: overlapping masks");
    if (!masks.frozen && static_cast<double>(global_block) >= cfg.agg_window.end_frac * total_blocks)
        throw std::invalid_argument("apply_deleaker: masks must be frozen past the aggregation window end");

    const int n_entities = layout.count();
    for (int i = 0; i < n_entities; ++i) {
        const IndexSet mask_i = to_global(masks.masks[static_cast<size_t>(i)], dims);
        const IndexSet& span_i = layout.entities[static_cast<size_t>(i)].text_tokens;

        for (int j = 0; j < n_entities; ++j) {
            if (i == j)
                continue;
            const IndexSet& span_j = layout.entities[static_cast<size_t>(j)].text_tokens;

            if (cfg.toggles.img_img_suppress) {
                const HighPairSet high = high_attention_pairs(head_avg, masks.masks[static_cast<size_t>(i)],
                                                              masks.masks[static_cast<size_t>(j)], cfg.beta2, dims);
                for (const auto& [q, k] : high.pairs)
                    for (Mat& s : per_head)
                        s.at(q, k) = kNegInf;
            }
            if (cfg.toggles.img_txt_suppress) {
                for (int q : mask_i.indices)
                    for (int k : span_j.indices)
                        for (Mat& s : per_head)
                            s.at(q, k) = kNegInf;
            }
            if (cfg.toggles.txt_txt_suppress) {
                for (int q : span_i.indices)
                    for (int k : span_j.indices)
                        for (Mat& s : per_head)
                            s.at(q, k) = kNegInf;
            }
        }

        if (cfg.toggles.self_strengthen) {
            const bool img_query = cfg.strengthen_direction == StrengthenDirection::ImgQueryTxtKey ||
                                   cfg.strengthen_direction == StrengthenDirection::Both;
            const bool txt_query = cfg.strengthen_direction == StrengthenDirection::TxtQueryImgKey ||
                                   cfg.strengthen_direction == StrengthenDirection::Both;
            if (img_query)
                for (int q : mask_i.indices)
                    for (int k : span_i.indices)
                        for (Mat& s : per_head)
                            s.at(q, k) = static_cast<float>(cfg.alpha * static_cast<double>(s.at(q, k)));
            if (txt_query)
                for (int q : span_i.indices)
                    for (int k : mask_i.indices)
                        for (Mat& s : per_head)
                            s.at(q, k) = static_cast<float>(cfg.alpha * static_cast<double>(s.at(q, k)));
        }
    }
}

std::vector<AblationRow> table2_ablation_grid(const DeleakerToggles& base) {
    auto with = [&](bool img_img, bool img_txt, bool strengthen, bool txt_txt) {
        DeleakerToggles t = base;
        t.img_img_suppress = img_img;
        t.img_txt_suppress = img_txt;
        t.self_strengthen = strengthen;
        t.txt_txt_suppress = txt_txt;
        return t;
    };
    return {
        {"DeLeaker", with(true, true, true, false)},
        {"W/O Image-Image (-)", with(false, true, true, false)},
        {"W/O Image-Text (-)", with(true, false, true, false)},
        {"W/O Image-Text (+)", with(true, true, false, false)},
        {"With Text-Text (-)", with(true, true, true, true)},
        {"Only Image-Image (-)", with(true, false, false, false)},
        {"Only Image-Text (-)", with(false, true, false, false)},
        {"Only Image-Text (+)", with(false, false, true, false)},
    };
}

DeleakerHook::DeleakerHook(const EntityLayout& layout, DeleakerConfig cfg, const FieldDims& dims, int total_blocks)
    : layout_(layout), cfg_(cfg), dims_(dims), total_blocks_(total_blocks),
      history_(layout.count(), dims.image_tokens(), cfg_.toggles.temporal_smooth) {
    cfg_.validate();
    layout_.validate(dims_);
    current_masks_.grid = dims_.grid;
    current_masks_.masks.resize(static_cast<size_t>(layout_.count()));
}

std::vector<Mat> DeleakerHook::operator()(int global_block, const Mat& head_avg, const std::vector<Mat>& per_head) {
    if (!current_masks_.frozen && cfg_.agg_window.contains(global_block, total_blocks_))
        accumulate(history_, head_avg, layout_, dims_, global_block, cfg_.agg_window, total_blocks_);

    if (!current_masks_.frozen && history_.samples > 0) {
        current_masks_ = masks_from_history(history_, layout_, cfg_, dims_.grid);
        if (static_cast<double>(global_block) >= cfg_.agg_window.end_frac * total_blocks_)
            current_masks_.frozen = true;
    }

    std::vector<Mat> out = per_head;
    if (history_.samples > 0 && cfg_.intervene_window.contains(global_block, total_blocks_))
        apply_deleaker(out, head_avg, current_masks_, layout_, cfg_, dims_, global_block, total_blocks_);
    return out;
}

} // namespace deleaker
