#include "deleaker/toy_dit.hpp"

#include <cmath>
#include <stdexcept>

namespace deleaker {

namespace {

// Score geometry: Q and K projections share a common component so that raw
// scores track token-state similarity, and V carries an identity component
// so attended states mix into the residual stream. Attention edits therefore
// steer where states drift, which later blocks see as changed raw scores.
constexpr double kSharedProj = 1.5;
constexpr double kNoiseProj = 0.35;
constexpr double kValueCopy = 1.0;
constexpr double kValueNoise = 0.15;

enum RngTag : std::uint64_t {
    kTagState = 1,
    kTagShared = 2,
    kTagQuery = 3,
    kTagKey = 4,
    kTagValue = 5,
};

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

double signed_unit(std::uint64_t h) { return 2.0 * uniform_from_hash(h) - 1.0; }

Mat matmul(const Mat& a, const Mat& b) {
    Mat out(a.rows, b.cols);
    for (int r = 0; r < a.rows; ++r) {
        for (int c = 0; c < b.cols; ++c) {
            double acc = 0.0;
            for (int k = 0; k < a.cols; ++k)
                acc += static_cast<double>(a.at(r, k)) * static_cast<double>(b.at(k, c));
            out.at(r, c) = static_cast<float>(acc);
        }
    }
    return out;
}

void renormalize_rows(Mat& m, double target_norm) {
    for (int r = 0; r < m.rows; ++r) {
        double sq = 0.0;
        for (float v : m.row(r))
            sq += static_cast<double>(v) * static_cast<double>(v);
        const double norm = std::sqrt(sq);
        if (norm <= 0.0)
            continue;
        const double scale = target_norm / norm;
        for (float& v : m.row(r))
            v = static_cast<float>(static_cast<double>(v) * scale);
    }
}

} // namespace

std::uint64_t hash_mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    h = splitmix64(h ^ c);
    h = splitmix64(h ^ d);
    return h;
}

double uniform_from_hash(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

void ToyModelConfig::validate() const {
    if (text_tokens < 1 || heads < 1 || head_dim < 1 || steps < 1 || blocks_per_step < 1)
        throw std::invalid_argument("ToyModelConfig: all counts must be >= 1");
    if (grid.h < 1 || grid.w < 1 || grid.cells() < 4)
        throw std::invalid_argument("ToyModelConfig: grid must have at least 4 cells");
    if (!(state_mix > 0.0f))
        throw std::invalid_argument("ToyModelConfig: state_mix must be positive");
}

IndexSet GridRect::image_tokens(GridDims grid) const {
    std::vector<int> idx;
    idx.reserve(static_cast<size_t>(cells()));
    for (int r = r0; r < r1; ++r)
        for (int c = c0; c < c1; ++c)
            idx.push_back(r * grid.w + c);
    return IndexSet(std::move(idx));
}

void PlantSpec::validate(const ToyModelConfig& cfg) const {
    if (self_bias < 0.0f)
        throw std::invalid_argument("PlantSpec: self bias must be non-negative");
    for (size_t i = 0; i < entities.size(); ++i) {
        const PlantEntity& e = entities[i];
        if (e.txt_begin < 0 || e.txt_end > cfg.text_tokens || e.txt_begin >= e.txt_end)
            throw std::invalid_argument("PlantSpec: text span out of range");
        if (e.rect.r0 < 0 || e.rect.c0 < 0 || e.rect.r1 > cfg.grid.h || e.rect.c1 > cfg.grid.w || e.rect.cells() <= 0)
            throw std::invalid_argument("PlantSpec: grid rectangle out of range");
        for (size_t j = 0; j < i; ++j) {
            const PlantEntity& o = entities[j];
            const bool span_overlap = e.txt_begin < o.txt_end && o.txt_begin < e.txt_end;
            if (span_overlap)
                throw std::invalid_argument("PlantSpec: overlapping text spans");
            if (e.rect.overlaps(o.rect))
                throw std::invalid_argument("PlantSpec: overlapping grid rectangles");
        }
    }
    for (const LeakPair& l : leaks) {
        if (l.source < 0 || l.target < 0 || l.source >= static_cast<int>(entities.size()) ||
            l.target >= static_cast<int>(entities.size()) || l.source == l.target)
            throw std::invalid_argument("PlantSpec: leak pair references unknown entity");
        if (l.bias < 0.0f)
            throw std::invalid_argument("PlantSpec: leak bias must be non-negative");
    }
}

Mat plant_bias(const PlantSpec& plant, const ToyModelConfig& cfg, int global_block) {
    plant.validate(cfg);
    const FieldDims dims = cfg.dims();
    Mat bias(dims.n(), dims.n());
    if (plant.gamma_window.contains(global_block) && plant.self_bias != 0.0f) {
        for (const PlantEntity& e : plant.entities) {
            for (int img : e.rect.image_tokens(cfg.grid).indices) {
                const int q = dims.to_global(img);
                for (int k = e.txt_begin; k < e.txt_end; ++k)
                    bias.at(q, k) += plant.self_bias;
            }
        }
    }
    if (plant.leak_window.contains(global_block)) {
        for (const LeakPair& l : plant.leaks) {
            const PlantEntity& src = plant.entities[static_cast<size_t>(l.source)];
            const PlantEntity& tgt = plant.entities[static_cast<size_t>(l.target)];
            const IndexSet src_tokens = src.rect.image_tokens(cfg.grid);
            if (l.channel == LeakChannel::ImgTxt || l.channel == LeakChannel::Both) {
                for (int img : src_tokens.indices) {
                    const int q = dims.to_global(img);
                    for (int k = tgt.txt_begin; k < tgt.txt_end; ++k)
                        bias.at(q, k) += l.bias;
                }
            }
            if (l.channel == LeakChannel::ImgImg || l.channel == LeakChannel::Both) {
                const IndexSet tgt_tokens = tgt.rect.image_tokens(cfg.grid);
                for (int img_q : src_tokens.indices)
                    for (int img_k : tgt_tokens.indices)
                        bias.at(dims.to_global(img_q), dims.to_global(img_k)) += l.bias;
            }
        }
    }
    return bias;
}

AttentionField RunTrace::field(int step, int block, int head, bool post) const {
    const BlockFields& rec = at(step, block);
    if (post && !rec.hooked)
        throw std::invalid_argument("RunTrace::field: no post-intervention fields in an unhooked run");
    AttentionField f;
    f.step = step;
    f.block = block;
    f.head = head;
    f.dims = config.dims();
    f.scores = (post ? rec.post : rec.raw)[static_cast<size_t>(head)];
    return f;
}

ToyModel init_model(const ToyModelConfig& cfg) {
    cfg.validate();
    ToyModel model;
    model.config = cfg;

    const int n = cfg.n_tokens();
    const int ds = cfg.state_dim();
    const int dh = cfg.head_dim;

    model.states = Mat(n, ds);
    for (int t = 0; t < n; ++t)
        for (int j = 0; j < ds; ++j)
            model.states.at(t, j) = static_cast<float>(signed_unit(hash_mix(cfg.seed, kTagState, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(j))));
    renormalize_rows(model.states, std::sqrt(static_cast<double>(ds)));

    const double proj_scale = 1.0 / std::sqrt(static_cast<double>(ds));
    const int slots = cfg.blocks_per_step * cfg.heads;
    model.wq.resize(static_cast<size_t>(slots));
    model.wk.resize(static_cast<size_t>(slots));
    model.wv.resize(static_cast<size_t>(slots));
    for (int b = 0; b < cfg.blocks_per_step; ++b) {
        for (int h = 0; h < cfg.heads; ++h) {
            const std::uint64_t slot = static_cast<std::uint64_t>(b) * static_cast<std::uint64_t>(cfg.heads) + static_cast<std::uint64_t>(h);
            Mat q(ds, dh), k(ds, dh), v(ds, dh);
            for (int i = 0; i < ds; ++i) {
                for (int j = 0; j < dh; ++j) {
                    const double shared = signed_unit(hash_mix(cfg.seed, kTagShared, slot, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)));
                    const double nq = signed_unit(hash_mix(cfg.seed, kTagQuery, slot, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)));
                    const double nk = signed_unit(hash_mix(cfg.seed, kTagKey, slot, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)));
                    const double nv = signed_unit(hash_mix(cfg.seed, kTagValue, slot, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)));
                    q.at(i, j) = static_cast<float>((shared * kSharedProj + nq * kNoiseProj) * proj_scale);
                    k.at(i, j) = static_cast<float>((shared * kSharedProj + nk * kNoiseProj) * proj_scale);
                    const double copy = (i == h * dh + j) ? kValueCopy : 0.0;
                    v.at(i, j) = static_cast<float>(copy + nv * kValueNoise);
                }
            }
            model.wq[static_cast<size_t>(slot)] = std::move(q);
            model.wk[static_cast<size_t>(slot)] = std::move(k);
            model.wv[static_cast<size_t>(slot)] = std::move(v);
        }
    }
    return model;
}

RunTrace run_diffusion(const ToyModelConfig& cfg, const PlantSpec* plant, const InterventionHook* hook) {
    ToyModel model = init_model(cfg);
    if (plant)
        plant->validate(cfg);

    const int n = cfg.n_tokens();
    const int ds = cfg.state_dim();
    const int dh = cfg.head_dim;
    const double target_norm = std::sqrt(static_cast<double>(ds));

    RunTrace trace;
    trace.config = cfg;
    if (plant)
        trace.plant = *plant;
    trace.hooked = (hook != nullptr);
    trace.blocks.resize(static_cast<size_t>(cfg.total_blocks()));

    Mat states = model.states;
    for (int gb = 0; gb < cfg.total_blocks(); ++gb) {
        const int blk = gb % cfg.blocks_per_step;
        BlockFields& rec = trace.blocks[static_cast<size_t>(gb)];

        Mat bias;
        if (plant)
            bias = plant_bias(*plant, cfg, gb);

        rec.raw.resize(static_cast<size_t>(cfg.heads));
        for (int h = 0; h < cfg.heads; ++h) {
            const size_t slot = static_cast<size_t>(blk) * cfg.heads + h;
            Mat q = matmul(states, model.wq[slot]);
            Mat k = matmul(states, model.wk[slot]);
            Mat scores = scaled_scores(q, k, dh);
            if (plant)
                for (size_t i = 0; i < scores.data.size(); ++i)
                    scores.data[i] += bias.data[i];
            rec.raw[static_cast<size_t>(h)] = std::move(scores);
        }

        const std::vector<Mat>* active = &rec.raw;
        if (hook) {
            Mat head_avg = head_average(rec.raw);
            rec.post = (*hook)(gb, head_avg, rec.raw);
            rec.hooked = true;
            if (rec.post.size() != rec.raw.size())
                throw std::runtime_error("run_diffusion: hook returned wrong number of heads");
            for (const Mat& m : rec.post)
                if (m.rows != n || m.cols != n)
                    throw std::runtime_error("run_diffusion: hook returned wrong-shape field");
            active = &rec.post;
        }

        Mat update(n, ds);
        for (int h = 0; h < cfg.heads; ++h) {
            const size_t slot = static_cast<size_t>(blk) * cfg.heads + h;
            Mat weights = softmax_rows((*active)[static_cast<size_t>(h)]);
            Mat values = matmul(states, model.wv[slot]);
            Mat mixed = matmul(weights, values); // n x head_dim
            for (int t = 0; t < n; ++t)
                for (int j = 0; j < dh; ++j)
                    update.at(t, h * dh + j) = mixed.at(t, j);
        }
        // Text tokens are fixed conditioning; only image-token states evolve.
        // Rows are renormalized so score scales stay stable across blocks.
        for (int t = cfg.text_tokens; t < n; ++t) {
            for (int j = 0; j < ds; ++j)
                states.at(t, j) = states.at(t, j) + cfg.state_mix * update.at(t, j);
            double sq = 0.0;
            for (float v : states.row(t))
                sq += static_cast<double>(v) * static_cast<double>(v);
            const double norm = std::sqrt(sq);
            if (norm > 0.0) {
                const double scale = target_norm / norm;
                for (float& v : states.row(t))
                    v = static_cast<float>(static_cast<double>(v) * scale);
            }
        }
    }

    trace.final_states = std::move(states);
    return trace;
}

} // namespace deleaker
