#pragma once

#include "deleaker/attn_core.hpp"
#include "deleaker/config.hpp"
#include "deleaker/intervention.hpp"
#include "deleaker/masking.hpp"
#include "deleaker/verdict.hpp"

#include <array>
#include <span>
#include <string>
#include <vector>

namespace deleaker {

enum class Channel { ImgTxt, ImgImg };

std::string to_string(Channel c);

// Per-(step, block) leakage proportions for every unordered entity pair on
// one channel.
struct LeakageTrace {
    std::string run_label;
    Channel channel = Channel::ImgTxt;
    int steps = 0;
    int blocks_per_step = 0;
    std::vector<std::pair<int, int>> pairs; // unordered {i, j}, i < j
    std::vector<double> values;             // [global block * pairs.size() + pair]

    int total_blocks() const { return steps * blocks_per_step; }
    double at(int global_block, int pair_idx) const {
        return values[static_cast<size_t>(global_block) * pairs.size() + static_cast<size_t>(pair_idx)];
    }
    double& at(int global_block, int pair_idx) {
        return values[static_cast<size_t>(global_block) * pairs.size() + static_cast<size_t>(pair_idx)];
    }
    double block_mean(int global_block) const;
};

// Fraction of entity i's mask tokens with at least one above-threshold
// score into the target set. The threshold reuses the method's own dynamic
// statistics: for ImgTxt, mu + beta1*sigma over all image rows x span_j;
// for ImgImg, mu + beta2*sigma over mask_i x mask_j. Only finite cells feed
// the statistics and only finite cells can exceed. Throws on empty mask_i.
double leakage_proportion(const Mat& head_avg, const EntityMaskSet& masks, const EntityLayout& layout, int i, int j,
                          Channel channel, const DeleakerConfig& cfg, const FieldDims& dims);

enum class FieldSelect { Raw, Effective };

// max(leakage i->j, leakage j->i) per unordered pair at every (step, block).
// Raw fields show how the model's organic attention evolves (interventions
// influence them only through state feedback); Effective includes the
// in-place modifications themselves.
LeakageTrace pair_leakage(const RunTrace& trace, const EntityMaskSet& masks, const EntityLayout& layout,
                          Channel channel, const DeleakerConfig& cfg, FieldSelect select = FieldSelect::Raw,
                          const std::string& run_label = "");

struct RelDiffCell {
    double value = 0.0;
    bool floored = false; // original mean hit the epsilon floor
};

// (mean_mitigated - mean_orig) / max(mean_orig, 1e-9) per (step, block),
// where the mean runs over pairs. Negative values indicate mitigation.
std::vector<RelDiffCell> relative_difference(const LeakageTrace& orig, const LeakageTrace& mitigated);

struct VerdictDistribution {
    // Stable category order: MajorImprove, MinorImprove, NoChange,
    // MinorDegrade, MajorDegrade.
    std::array<int, 5> counts{};
    int total = 0;

    double percentage(int idx) const { return 100.0 * counts[static_cast<size_t>(idx)] / total; }
};

VerdictDistribution distribution_summary(std::span<const VerdictLabel> verdicts);

extern const std::array<const char*, 5> kVerdictCategoryNames;

} // namespace deleaker
