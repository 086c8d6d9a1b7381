#pragma once

#include <string>

namespace deleaker {

enum class StrengthenDirection { ImgQueryTxtKey, TxtQueryImgKey, Both };

// Window expressed as fractions of total global blocks, so the shipped
// defaults transfer onto any blocks-per-step choice. A block b is inside
// when start_frac * total <= b < end_frac * total.
struct FracWindow {
    double start_frac = 0.0;
    double end_frac = 0.0;

    bool contains(int block, int total_blocks) const {
        const double b = static_cast<double>(block);
        return b >= start_frac * total_blocks && b < end_frac * total_blocks;
    }
    int first_block(int total_blocks) const; // -1 when empty
    int block_count(int total_blocks) const;
};

struct DeleakerToggles {
    bool img_img_suppress = true;
    bool img_txt_suppress = true;
    bool self_strengthen = true;
    bool txt_txt_suppress = false; // ablation only
    bool spatial_smooth = true;
    bool temporal_smooth = true;
};

struct DeleakerConfig {
    double alpha = 1.2;
    double beta1 = 0.9;
    double beta2 = 2.0;
    FracWindow agg_window{0.01, 0.40};
    FracWindow intervene_window{0.05, 0.65};
    DeleakerToggles toggles;
    StrengthenDirection strengthen_direction = StrengthenDirection::ImgQueryTxtKey;

    void validate() const; // throws on bad windows or coefficients
};

std::string to_string(StrengthenDirection d);
StrengthenDirection strengthen_direction_from_string(const std::string& s);

} // namespace deleaker
