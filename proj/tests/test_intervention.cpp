#include "deleaker/intervention.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <random>

using namespace deleaker;

namespace {

const FieldDims kDims{4, {3, 3}}; // 13 tokens total

EntityLayout two_entities() {
    EntityLayout layout;
    layout.entities = {{0, "a", IndexSet::range(0, 2)}, {1, "b", IndexSet::range(2, 4)}};
    return layout;
}

EntityMaskSet make_masks(std::vector<int> a, std::vector<int> b) {
    EntityMaskSet m;
    m.grid = {3, 3};
    m.masks = {IndexSet(std::move(a)), IndexSet(std::move(b))};
    m.frozen = true;
    return m;
}

Mat random_field(std::mt19937& rng, int n) {
    std::uniform_real_distribution<float> dist(-2.0f, 2.0f);
    Mat m(n, n);
    for (float& v : m.data)
        v = dist(rng);
    return m;
}

struct RandomInstance {
    FieldDims dims;
    EntityLayout layout;
    EntityMaskSet masks;
    std::vector<Mat> heads;
    Mat head_avg;
};

RandomInstance random_instance(std::mt19937& rng) {
    std::uniform_int_distribution<int> txt_dist(4, 8);
    std::uniform_int_distribution<int> grid_dist(3, 5);
    RandomInstance inst;
    inst.dims.text_tokens = txt_dist(rng);
    inst.dims.grid = {grid_dist(rng), grid_dist(rng)};

    const int span = inst.dims.text_tokens / 2;
    inst.layout.entities = {{0, "a", IndexSet::range(0, span)},
                            {1, "b", IndexSet::range(span, inst.dims.text_tokens)}};

    // random disjoint image masks (possibly empty)
    std::vector<int> a, b;
    std::uniform_int_distribution<int> owner(0, 3);
    for (int q = 0; q < inst.dims.image_tokens(); ++q) {
        switch (owner(rng)) {
        case 0: a.push_back(q); break;
        case 1: b.push_back(q); break;
        default: break;
        }
    }
    inst.masks = make_masks(std::move(a), std::move(b));
    inst.masks.grid = inst.dims.grid;

    std::uniform_int_distribution<int> head_dist(1, 4);
    const int heads = head_dist(rng);
    for (int h = 0; h < heads; ++h)
        inst.heads.push_back(random_field(rng, inst.dims.n()));
    inst.head_avg = head_average(inst.heads);
    return inst;
}

} // namespace

TEST_CASE("cross_pair_stats: constant block and small fixture") {
    Mat m(kDims.n(), kDims.n(), 0.0f);
    const EntityMaskSet masks = make_masks({0, 1}, {4, 5});
    for (int q : masks.masks[0].indices)
        for (int k : masks.masks[1].indices)
            m.at(kDims.to_global(q), kDims.to_global(k)) = 7.0f;
    auto s = cross_pair_stats(m, masks.masks[0], masks.masks[1], kDims);
    REQUIRE(s.has_value());
    CHECK(s->mean == doctest::Approx(7.0));
    CHECK(s->stddev == doctest::Approx(0.0));

    m.at(kDims.to_global(0), kDims.to_global(4)) = 1.0f;
    m.at(kDims.to_global(0), kDims.to_global(5)) = 3.0f;
    auto s2 = cross_pair_stats(m, IndexSet({0}), IndexSet({4, 5}), kDims);
    REQUIRE(s2.has_value());
    CHECK(s2->mean == doctest::Approx(2.0));
    CHECK(s2->stddev == doctest::Approx(1.0));
}

TEST_CASE("cross_pair_stats: empty mask means skip") {
    Mat m(kDims.n(), kDims.n(), 0.0f);
    CHECK(!cross_pair_stats(m, IndexSet(), IndexSet({1}), kDims).has_value());
}

TEST_CASE("high_attention_pairs: matches exhaustive scan") {
    std::mt19937 rng(17);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    const FieldDims dims{2, {10, 10}};
    Mat m(dims.n(), dims.n());
    for (float& v : m.data)
        v = dist(rng);

    const IndexSet mask_a = IndexSet::range(0, 10);
    const IndexSet mask_b = IndexSet::range(10, 20);
    const HighPairSet high = high_attention_pairs(m, mask_a, mask_b, 2.0, dims);

    // independent scan
    double sum = 0.0;
    for (int q : mask_a.indices)
        for (int k : mask_b.indices)
            sum += m.at(dims.to_global(q), dims.to_global(k));
    const double mean = sum / 100.0;
    double sq = 0.0;
    for (int q : mask_a.indices)
        for (int k : mask_b.indices)
            sq += (m.at(dims.to_global(q), dims.to_global(k)) - mean) * (m.at(dims.to_global(q), dims.to_global(k)) - mean);
    const double thr = mean + 2.0 * std::sqrt(sq / 100.0);
    int count = 0;
    for (int q : mask_a.indices)
        for (int k : mask_b.indices)
            if (m.at(dims.to_global(q), dims.to_global(k)) > thr)
                ++count;
    CHECK(static_cast<int>(high.pairs.size()) == count);
    for (const auto& [q, k] : high.pairs)
        CHECK(static_cast<double>(m.at(q, k)) > thr);
}

TEST_CASE("high_attention_pairs: constant block empty, beta2=0 above mean") {
    Mat m(kDims.n(), kDims.n(), 1.0f);
    const EntityMaskSet masks = make_masks({0, 1, 2}, {5, 6});
    CHECK(high_attention_pairs(m, masks.masks[0], masks.masks[1], 2.0, kDims).pairs.empty());

    m.at(kDims.to_global(0), kDims.to_global(5)) = 4.0f;
    const HighPairSet high = high_attention_pairs(m, masks.masks[0], masks.masks[1], 0.0, kDims);
    CHECK(high.pairs.size() == 1); // only the boosted cell is strictly above the mean
}

TEST_CASE("apply_deleaker: empty masks are a bit-exact no-op") {
    std::mt19937 rng(23);
    std::vector<Mat> heads = {random_field(rng, kDims.n()), random_field(rng, kDims.n())};
    const std::vector<Mat> before = heads;
    DeleakerConfig cfg;
    apply_deleaker(heads, head_average(heads), make_masks({}, {}), two_entities(), cfg, kDims, 10, 80);
    CHECK(heads[0] == before[0]);
    CHECK(heads[1] == before[1]);
}

TEST_CASE("apply_deleaker: strengthening multiplies by alpha") {
    Mat m(kDims.n(), kDims.n(), 0.0f);
    m.at(kDims.to_global(0), 0) = 2.0f; // mask cell of entity a attending its own text
    std::vector<Mat> heads = {m};
    DeleakerConfig cfg; // alpha = 1.2
    apply_deleaker(heads, head_average(heads), make_masks({0}, {5}), two_entities(), cfg, kDims, 10, 80);
    CHECK(heads[0].at(kDims.to_global(0), 0) == doctest::Approx(2.4));
}

TEST_CASE("apply_deleaker: suppressed cells get exactly zero softmax weight") {
    std::mt19937 rng(31);
    std::vector<Mat> heads = {random_field(rng, kDims.n())};
    DeleakerConfig cfg;
    const EntityMaskSet masks = make_masks({0, 1}, {5, 6});
    const EntityLayout layout = two_entities();
    apply_deleaker(heads, head_average(heads), masks, layout, cfg, kDims, 10, 80);
    const Mat w = softmax_rows(heads[0]);
    for (int q : masks.masks[0].indices)
        for (int k : layout.entities[1].text_tokens.indices)
            CHECK(w.at(kDims.to_global(q), k) == 0.0f);
}

TEST_CASE("apply_deleaker: matches the per-cell oracle on a 2-entity field") {
    std::mt19937 rng(47);
    for (int trial = 0; trial < 25; ++trial) {
        RandomInstance inst = random_instance(rng);
        DeleakerConfig cfg;
        cfg.toggles.txt_txt_suppress = (trial % 3 == 0);
        cfg.strengthen_direction = (trial % 4 == 0) ? StrengthenDirection::Both : StrengthenDirection::ImgQueryTxtKey;
        std::vector<Mat> actual = inst.heads;
        apply_deleaker(actual, inst.head_avg, inst.masks, inst.layout, cfg, inst.dims, 10, 80);
        const std::vector<Mat> expected =
            oracles::deleaker_per_cell(inst.heads, inst.head_avg, inst.masks, inst.layout, cfg, inst.dims, 10, 80);
        REQUIRE(actual.size() == expected.size());
        for (size_t h = 0; h < actual.size(); ++h)
            CHECK(actual[h] == expected[h]);
    }
}

TEST_CASE("apply_deleaker: identity outside the intervention window") {
    std::mt19937 rng(53);
    std::vector<Mat> heads = {random_field(rng, kDims.n())};
    const std::vector<Mat> before = heads;
    DeleakerConfig cfg; // window [0.05, 0.65)
    apply_deleaker(heads, head_average(heads), make_masks({0, 1}, {5, 6}), two_entities(), cfg, kDims, 70, 80);
    CHECK(heads[0] == before[0]);
    apply_deleaker(heads, head_average(heads), make_masks({0, 1}, {5, 6}), two_entities(), cfg, kDims, 2, 80);
    CHECK(heads[0] == before[0]);
}

TEST_CASE("apply_deleaker: ablation compositionality") {
    std::mt19937 rng(59);
    const RandomInstance inst = random_instance(rng);

    auto modified_cells = [&](const DeleakerConfig& cfg) {
        std::vector<Mat> heads = inst.heads;
        apply_deleaker(heads, inst.head_avg, inst.masks, inst.layout, cfg, inst.dims, 10, 80);
        std::set<std::pair<int, int>> cells;
        for (size_t h = 0; h < heads.size(); ++h)
            for (int q = 0; q < inst.dims.n(); ++q)
                for (int k = 0; k < inst.dims.n(); ++k)
                    if (!(heads[h].at(q, k) == inst.heads[h].at(q, k)) &&
                        !(std::isnan(heads[h].at(q, k)) && std::isnan(inst.heads[h].at(q, k))))
                        cells.insert({q, k});
        return cells;
    };

    DeleakerConfig none;
    none.toggles = {false, false, false, false, true, true};
    std::set<std::pair<int, int>> union_cells;
    std::set<std::pair<int, int>> all_cells;
    for (int bit = 0; bit < 4; ++bit) {
        DeleakerConfig single = none;
        if (bit == 0) single.toggles.img_img_suppress = true;
        if (bit == 1) single.toggles.img_txt_suppress = true;
        if (bit == 2) single.toggles.self_strengthen = true;
        if (bit == 3) single.toggles.txt_txt_suppress = true;
        for (const auto& c : modified_cells(single))
            union_cells.insert(c);
    }
    DeleakerConfig all;
    all.toggles = {true, true, true, true, true, true};
    all_cells = modified_cells(all);
    CHECK(all_cells == union_cells);
}

TEST_CASE("apply_deleaker: no row becomes entirely -inf") {
    std::mt19937 rng(61);
    for (int trial = 0; trial < 10; ++trial) {
        RandomInstance inst = random_instance(rng);
        DeleakerConfig cfg;
        cfg.toggles.txt_txt_suppress = true;
        std::vector<Mat> heads = inst.heads;
        apply_deleaker(heads, inst.head_avg, inst.masks, inst.layout, cfg, inst.dims, 10, 80);
        for (const Mat& m : heads)
            CHECK_NOTHROW(softmax_rows(m));
    }
}

TEST_CASE("apply_deleaker: overlapping masks rejected") {
    std::mt19937 rng(67);
    std::vector<Mat> heads = {random_field(rng, kDims.n())};
    EntityMaskSet masks = make_masks({0, 1}, {1, 2});
    DeleakerConfig cfg;
    CHECK_THROWS_AS(apply_deleaker(heads, head_average(heads), masks, two_entities(), cfg, kDims, 10, 80),
                    std::invalid_argument);
}

TEST_CASE("DeleakerHook: freezes masks at the aggregation window end") {
    ToyModelConfig cfg;
    cfg.seed = 17;
    DeleakerConfig dcfg;
    PlantSpec plant;
    plant.self_bias = 3.0f;
    plant.entities = {{"a", 2, 6, {1, 1, 4, 4}}, {"b", 8, 12, {4, 4, 7, 7}}};
    EntityLayout layout;
    layout.entities = {{0, "a", IndexSet::range(2, 6)}, {1, "b", IndexSet::range(8, 12)}};

    DeleakerHook hook(layout, dcfg, cfg.dims(), cfg.total_blocks());
    InterventionHook fn = [&hook](int gb, const Mat& avg, const std::vector<Mat>& heads) {
        return hook(gb, avg, heads);
    };
    run_diffusion(cfg, &plant, &fn);
    CHECK(hook.frozen());
    CHECK(hook.masks().pairwise_disjoint());
    CHECK(hook.masks().any_nonempty());
}

TEST_CASE("table2_ablation_grid: exact row labels and toggle sets") {
    const std::vector<AblationRow> grid = table2_ablation_grid();
    const std::vector<std::string> labels = {
        "DeLeaker",           "W/O Image-Image (-)",  "W/O Image-Text (-)",  "W/O Image-Text (+)",
        "With Text-Text (-)", "Only Image-Image (-)", "Only Image-Text (-)", "Only Image-Text (+)",
    };
    REQUIRE(grid.size() == 8);
    for (size_t i = 0; i < grid.size(); ++i)
        CHECK(grid[i].label == labels[i]);

    CHECK(!grid[1].toggles.img_img_suppress);
    CHECK(grid[1].toggles.img_txt_suppress);
    CHECK(grid[1].toggles.self_strengthen);
    CHECK(grid[4].toggles.txt_txt_suppress);
    CHECK(grid[7].toggles.self_strengthen);
    CHECK(!grid[7].toggles.img_img_suppress);
    CHECK(!grid[7].toggles.img_txt_suppress);
    for (const AblationRow& row : grid)
        CHECK(row.toggles.spatial_smooth); // smoothing toggles pass through untouched
}

TEST_CASE("DeleakerConfig: shipped defaults") {
    const DeleakerConfig cfg;
    CHECK(cfg.alpha == 1.2);
    CHECK(cfg.beta1 == 0.9);
    CHECK(cfg.beta2 == 2.0);
    CHECK(cfg.agg_window.start_frac == 0.01);
    CHECK(cfg.agg_window.end_frac == 0.40);
    CHECK(cfg.intervene_window.start_frac == 0.05);
    CHECK(cfg.intervene_window.end_frac == 0.65);
    CHECK(cfg.toggles.img_img_suppress);
    CHECK(cfg.toggles.img_txt_suppress);
    CHECK(cfg.toggles.self_strengthen);
    CHECK(!cfg.toggles.txt_txt_suppress);
    CHECK(cfg.strengthen_direction == StrengthenDirection::ImgQueryTxtKey);
}

TEST_CASE("apply_deleaker: unfrozen masks rejected after the aggregation window") {
    std::mt19937 rng(71);
    std::vector<Mat> heads = {random_field(rng, kDims.n())};
    EntityMaskSet masks = make_masks({0, 1}, {5, 6});
    masks.frozen = false;
    DeleakerConfig cfg; // agg end 0.4 * 80 = block 32
    CHECK_THROWS_AS(apply_deleaker(heads, head_average(heads), masks, two_entities(), cfg, kDims, 40, 80),
                    std::invalid_argument);
    CHECK_NOTHROW(apply_deleaker(heads, head_average(heads), masks, two_entities(), cfg, kDims, 10, 80));
}

TEST_CASE("DeleakerHook: mask set is bit-identical for every block after the freeze") {
    ToyModelConfig cfg;
    cfg.seed = 29;
    DeleakerConfig dcfg;
    PlantSpec plant;
    plant.self_bias = 3.0f;
    plant.entities = {{"a", 2, 6, {1, 1, 4, 4}}, {"b", 8, 12, {4, 4, 7, 7}}};
    EntityLayout layout;
    layout.entities = {{0, "a", IndexSet::range(2, 6)}, {1, "b", IndexSet::range(8, 12)}};

    DeleakerHook hook(layout, dcfg, cfg.dims(), cfg.total_blocks());
    std::vector<std::vector<IndexSet>> snapshots(static_cast<size_t>(cfg.total_blocks()));
    InterventionHook fn = [&](int gb, const Mat& avg, const std::vector<Mat>& heads) {
        auto out = hook(gb, avg, heads);
        snapshots[static_cast<size_t>(gb)] = hook.masks().masks;
        return out;
    };
    run_diffusion(cfg, &plant, &fn);

    const int freeze_block = static_cast<int>(dcfg.agg_window.end_frac * cfg.total_blocks());
    for (int gb = freeze_block; gb < cfg.total_blocks(); ++gb)
        CHECK(snapshots[static_cast<size_t>(gb)] == snapshots[static_cast<size_t>(freeze_block)]);
}

TEST_CASE("apply_deleaker: three entities still match the per-cell oracle") {
    std::mt19937 rng(83);
    const FieldDims dims{9, {5, 5}};
    EntityLayout layout;
    layout.entities = {{0, "a", IndexSet::range(0, 3)}, {1, "b", IndexSet::range(3, 6)},
                       {2, "c", IndexSet::range(6, 9)}};
    EntityMaskSet masks;
    masks.grid = dims.grid;
    masks.frozen = true;
    masks.masks = {IndexSet({0, 1, 5}), IndexSet({8, 9, 13}), IndexSet({16, 20, 21})};

    std::uniform_real_distribution<float> score(-2.0f, 2.0f);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<Mat> heads(2, Mat(dims.n(), dims.n()));
        for (Mat& m : heads)
            for (float& v : m.data)
                v = score(rng);
        const Mat avg = head_average(heads);
        DeleakerConfig cfg;
        cfg.toggles.txt_txt_suppress = (trial % 2 == 0);
        std::vector<Mat> actual = heads;
        apply_deleaker(actual, avg, masks, layout, cfg, dims, 10, 80);
        const std::vector<Mat> expected =
            oracles::deleaker_per_cell(heads, avg, masks, layout, cfg, dims, 10, 80);
        CHECK(actual[0] == expected[0]);
        CHECK(actual[1] == expected[1]);
    }
}
