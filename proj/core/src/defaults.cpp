#include "deleaker/defaults.hpp"

#include <cmath>

namespace deleaker {

PlantSpec default_plant() {
    PlantSpec plant;
    plant.self_bias = kDefaultSelfBias;
    plant.entities = {
        {"alpha", 2, 6, {1, 1, 4, 4}},
        {"beta", 8, 12, {4, 4, 7, 7}},
    };
    plant.leaks = {{0, 1, kDefaultLeakBias, LeakChannel::ImgTxt}};
    return plant;
}

EntityLayout layout_from_plant(const PlantSpec& plant) {
    EntityLayout layout;
    for (size_t i = 0; i < plant.entities.size(); ++i) {
        const PlantEntity& e = plant.entities[i];
        layout.entities.push_back({static_cast<int>(i), e.name, IndexSet::range(e.txt_begin, e.txt_end)});
    }
    return layout;
}

double unplanted_score_std(const ToyModelConfig& cfg, const FracWindow& agg_window) {
    const RunTrace trace = run_diffusion(cfg);
    const int total = cfg.total_blocks();
    double sum = 0.0, sq = 0.0;
    long count = 0;
    for (int gb = 0; gb < total; ++gb) {
        if (gb == 0 || !agg_window.contains(gb, total))
            continue;
        const Mat avg = head_average(trace.blocks[static_cast<size_t>(gb)].raw);
        for (float v : avg.data) {
            sum += static_cast<double>(v);
            sq += static_cast<double>(v) * static_cast<double>(v);
            ++count;
        }
    }
    if (count == 0)
        return 0.0;
    const double mean = sum / static_cast<double>(count);
    return std::sqrt(sq / static_cast<double>(count) - mean * mean);
}

} // namespace deleaker
