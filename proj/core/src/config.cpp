#include "deleaker/config.hpp"

#include <cmath>
#include <stdexcept>

namespace deleaker {

int FracWindow::first_block(int total_blocks) const {
    for (int b = 0; b < total_blocks; ++b)
        if (contains(b, total_blocks))
            return b;
    return -1;
}

int FracWindow::block_count(int total_blocks) const {
    int n = 0;
    for (int b = 0; b < total_blocks; ++b)
        if (contains(b, total_blocks))
            ++n;
    return n;
}

void DeleakerConfig::validate() const {
    auto check_window = [](const FracWindow& w, const char* name) {
        if (!(w.start_frac >= 0.0) || !(w.end_frac <= 1.0) || !(w.start_frac < w.end_frac))
            throw std::invalid_argument(std::string("DeleakerConfig: bad ") + name + " window (need 0 <= start < end <= 1)");
    };
    check_window(agg_window, "aggregation");
    check_window(intervene_window, "intervention");
    if (!(alpha > 0.0))
        throw std::invalid_argument("DeleakerConfig: alpha must be positive");
    if (!(beta2 >= 0.0))
        throw std::invalid_argument("DeleakerConfig: beta2 must be non-negative");
    if (!std::isfinite(beta1))
        throw std::invalid_argument("DeleakerConfig: beta1 must be finite");
}

std::string to_string(StrengthenDirection d) {
    switch (d) {
    case StrengthenDirection::ImgQueryTxtKey: return "img_query_txt_key";
    case StrengthenDirection::TxtQueryImgKey: return "txt_query_img_key";
    case StrengthenDirection::Both: return "both";
    }
    throw std::logic_error("unknown strengthen direction");
}

StrengthenDirection strengthen_direction_from_string(const std::string& s) {
    if (s == "img_query_txt_key")
        return StrengthenDirection::ImgQueryTxtKey;
    if (s == "txt_query_img_key")
        return StrengthenDirection::TxtQueryImgKey;
    if (s == "both")
        return StrengthenDirection::Both;
    throw std::invalid_argument("unknown strengthen_direction: " + s);
}

} // namespace deleaker
