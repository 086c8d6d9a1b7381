#pragma once

#include "deleaker/attn_core.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace deleaker {

// Desk-scale joint-attention transformer. Text and image tokens share one
// token sequence and one self-attention per block; a residual value pathway
// carries intervention effects into later blocks.
struct ToyModelConfig {
    int text_tokens = 16;
    GridDims grid{8, 8};
    int heads = 4;
    int head_dim = 16;
    int steps = 20;
    int blocks_per_step = 4;
    std::uint64_t seed = 0;
    float state_mix = 0.1f;

    int n_tokens() const { return text_tokens + grid.cells(); }
    int total_blocks() const { return steps * blocks_per_step; }
    int state_dim() const { return heads * head_dim; }
    FieldDims dims() const { return {text_tokens, grid}; }
    void validate() const; // throws on bad counts
};

// Half-open [begin, end) interval of global block indices.
struct BlockWindow {
    int begin = 0;
    int end = std::numeric_limits<int>::max();
    bool contains(int block) const { return block >= begin && block < end; }
};

// Half-open grid rectangle [r0, r1) x [c0, c1).
struct GridRect {
    int r0 = 0, c0 = 0, r1 = 0, c1 = 0;
    int cells() const { return (r1 - r0) * (c1 - c0); }
    bool contains(int r, int c) const { return r >= r0 && r < r1 && c >= c0 && c < c1; }
    bool overlaps(const GridRect& o) const { return r0 < o.r1 && o.r0 < r1 && c0 < o.c1 && o.c0 < c1; }
    IndexSet image_tokens(GridDims grid) const; // image-local, row-major
};

enum class LeakChannel { ImgTxt, ImgImg, Both };

struct PlantEntity {
    std::string name;
    int txt_begin = 0; // [txt_begin, txt_end) text token span
    int txt_end = 0;
    GridRect rect;
};

struct LeakPair {
    int source = 0;
    int target = 0;
    float bias = 0.0f;
    LeakChannel channel = LeakChannel::ImgTxt;
};

// Additive bias on raw scores: gamma binds each entity's image rectangle to
// its own text span (the ground-truth signal); leak pairs inject directed
// cross-entity bias on the chosen channel inside leak_window.
struct PlantSpec {
    std::vector<PlantEntity> entities;
    float self_bias = 0.0f; // gamma
    std::vector<LeakPair> leaks;
    BlockWindow leak_window;  // delta biases apply here
    BlockWindow gamma_window; // gamma applies here (default: everywhere)

    void validate(const ToyModelConfig& cfg) const; // throws on overlap / out of range
};

// bias[q][k] for one global block; zero matrix when nothing applies.
Mat plant_bias(const PlantSpec& plant, const ToyModelConfig& cfg, int global_block);

// Maps (global block, head-averaged raw field, per-head raw fields) to
// per-head modified fields. Returning wrong shapes is an error.
using InterventionHook = std::function<std::vector<Mat>(int global_block, const Mat& head_avg, const std::vector<Mat>& per_head)>;

struct BlockFields {
    std::vector<Mat> raw;  // one per head, pre-intervention
    std::vector<Mat> post; // present only when a hook ran for this block
    bool hooked = false;
    const std::vector<Mat>& effective() const { return hooked ? post : raw; }
};

struct RunTrace {
    ToyModelConfig config;
    std::optional<PlantSpec> plant;
    bool hooked = false;
    std::vector<BlockFields> blocks; // indexed by global block
    Mat final_states;                // n_tokens x state_dim

    const BlockFields& at(int step, int block) const { return blocks[static_cast<size_t>(step) * config.blocks_per_step + block]; }

    // One field with its coordinates; post = true selects the modified
    // scores of a hooked run.
    AttentionField field(int step, int block, int head, bool post = false) const;
};

// Token states and per-(block, head) projections, all derived from the
// seed by a counter-based generator: no sequential RNG stream, so any
// evaluation order reproduces the same model.
struct ToyModel {
    ToyModelConfig config;
    Mat states;                   // n_tokens x state_dim
    std::vector<Mat> wq, wk, wv;  // [block_in_step * heads + head], state_dim x head_dim
};

ToyModel init_model(const ToyModelConfig& cfg);

RunTrace run_diffusion(const ToyModelConfig& cfg, const PlantSpec* plant = nullptr, const InterventionHook* hook = nullptr);

// Counter-based generator primitives (splitmix64 over mixed coordinates).
std::uint64_t hash_mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0, std::uint64_t d = 0);
double uniform_from_hash(std::uint64_t h); // [0, 1)

} // namespace deleaker
