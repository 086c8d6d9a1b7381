#include "deleaker/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace deleaker {

std::string to_string(Channel c) { return c == Channel::ImgTxt ? "img_txt" : "img_img"; }

double LeakageTrace::block_mean(int global_block) const {
    double sum = 0.0;
    for (size_t p = 0; p < pairs.size(); ++p)
        sum += at(global_block, static_cast<int>(p));
    return sum / static_cast<double>(pairs.size());
}

double leakage_proportion(const Mat& head_avg, const EntityMaskSet& masks, const EntityLayout& layout, int i, int j,
                          Channel channel, const DeleakerConfig& cfg, const FieldDims& dims) {
    const IndexSet& mask_i = masks.masks[static_cast<size_t>(i)];
    if (mask_i.empty())
        throw std::invalid_argument("leakage_proportion: empty source mask");

    IndexSet target_cols;
    IndexSet stat_rows;
    double beta = 0.0;
    if (channel == Channel::ImgTxt) {
        target_cols = layout.entities[static_cast<size_t>(j)].text_tokens;
        stat_rows = dims.image_index_set(); // the mask rule's own statistics universe
        beta = cfg.beta1;
    } else {
        const IndexSet& mask_j = masks.masks[static_cast<size_t>(j)];
        if (mask_j.empty())
            return 0.0; // no target tokens, nothing to leak into
        std::vector<int> cols;
        cols.reserve(mask_j.indices.size());
        for (int q : mask_j.indices)
            cols.push_back(dims.to_global(q));
        target_cols.indices = std::move(cols);
        std::vector<int> rows;
        rows.reserve(mask_i.indices.size());
        for (int q : mask_i.indices)
            rows.push_back(dims.to_global(q));
        stat_rows.indices = std::move(rows);
        beta = cfg.beta2;
    }

    int finite = 0;
    const Stats stats = finite_subset_stats(head_avg, stat_rows, target_cols, &finite);
    if (finite == 0)
        return 0.0;
    const double threshold = stats.mean + beta * stats.stddev;

    int exceed_rows = 0;
    for (int qi : mask_i.indices) {
        const int q = dims.to_global(qi);
        bool exceeds = false;
        for (int k : target_cols.indices) {
            const float v = head_avg.at(q, k);
            if (std::isfinite(v) && static_cast<double>(v) > threshold) {
                exceeds = true;
                break;
            }
        }
        if (exceeds)
            ++exceed_rows;
    }
    return static_cast<double>(exceed_rows) / static_cast<double>(mask_i.size());
}

LeakageTrace pair_leakage(const RunTrace& trace, const EntityMaskSet& masks, const EntityLayout& layout,
                          Channel channel, const DeleakerConfig& cfg, FieldSelect select,
                          const std::string& run_label) {
    if (!masks.frozen)
        throw std::invalid_argument("pair_leakage: masks must be frozen");
    const FieldDims dims = trace.config.dims();
    LeakageTrace out;
    out.run_label = run_label;
    out.channel = channel;
    out.steps = trace.config.steps;
    out.blocks_per_step = trace.config.blocks_per_step;
    for (int i = 0; i < layout.count(); ++i)
        for (int j = i + 1; j < layout.count(); ++j)
            out.pairs.emplace_back(i, j);
    out.values.assign(static_cast<size_t>(out.total_blocks()) * out.pairs.size(), 0.0);

    for (int gb = 0; gb < out.total_blocks(); ++gb) {
        const BlockFields& rec = trace.blocks[static_cast<size_t>(gb)];
        const std::vector<Mat>& heads = (select == FieldSelect::Raw) ? rec.raw : rec.effective();
        const Mat head_avg = head_average(heads);
        for (size_t p = 0; p < out.pairs.size(); ++p) {
            const auto [i, j] = out.pairs[p];
            const double forward = leakage_proportion(head_avg, masks, layout, i, j, channel, cfg, dims);
            const double backward = leakage_proportion(head_avg, masks, layout, j, i, channel, cfg, dims);
            out.at(gb, static_cast<int>(p)) = std::max(forward, backward);
        }
    }
    return out;
}

std::vector<RelDiffCell> relative_difference(const LeakageTrace& orig, const LeakageTrace& mitigated) {
    if (orig.steps != mitigated.steps || orig.blocks_per_step != mitigated.blocks_per_step ||
        orig.pairs != mitigated.pairs)
        throw std::invalid_argument("relative_difference: trace dimensions or pairs mismatch");
    constexpr double kEps = 1e-9;
    std::vector<RelDiffCell> out(static_cast<size_t>(orig.total_blocks()));
    for (int gb = 0; gb < orig.total_blocks(); ++gb) {
        const double mo = orig.block_mean(gb);
        const double mm = mitigated.block_mean(gb);
        RelDiffCell cell;
        cell.floored = mo < kEps;
        cell.value = (mm - mo) / std::max(mo, kEps);
        out[static_cast<size_t>(gb)] = cell;
    }
    return out;
}

const std::array<const char*, 5> kVerdictCategoryNames = {
    "major_improvement", "minor_improvement", "no_change", "minor_degradation", "major_degradation"};

VerdictDistribution distribution_summary(std::span<const VerdictLabel> verdicts) {
    if (verdicts.empty())
        throw std::invalid_argument("distribution_summary: empty verdict list");
    VerdictDistribution d;
    d.total = static_cast<int>(verdicts.size());
    for (VerdictLabel v : verdicts) {
        switch (v) {
        case VerdictLabel::MajorImprove: ++d.counts[0]; break;
        case VerdictLabel::MinorImprove: ++d.counts[1]; break;
        case VerdictLabel::NoChange: ++d.counts[2]; break;
        case VerdictLabel::MinorDegrade: ++d.counts[3]; break;
        case VerdictLabel::MajorDegrade: ++d.counts[4]; break;
        }
    }
    return d;
}

} // namespace deleaker
