#pragma once

#include "deleaker/masking.hpp"
#include "deleaker/toy_dit.hpp"

namespace deleaker {

// Two-entity plant used by the CLI's --plant default and the packaged
// experiments: disjoint 3x3 rectangles bound to disjoint text spans, with a
// directed image-text leak from the first entity into the second.
//
// The biases are calibrated against the default ToyModelConfig so that the
// planted rectangles dominate mask extraction (self bias around five times
// the unplanted score std) while the leak keeps the original run's
// image-text leakage proportion comfortably above one half.
inline constexpr float kDefaultSelfBias = 3.0f;
inline constexpr float kDefaultLeakBias = 1.35f;

PlantSpec default_plant();
EntityLayout layout_from_plant(const PlantSpec& plant);

// Population std of head-averaged raw scores over the aggregation window of
// an unplanted run; the calibration reference for planted self bias.
double unplanted_score_std(const ToyModelConfig& cfg, const FracWindow& agg_window);

} // namespace deleaker
