#include "cli.hpp"

#include "deleaker/analysis.hpp"
#include "deleaker/assignment.hpp"
#include "deleaker/defaults.hpp"
#include "deleaker/digest.hpp"
#include "deleaker/evalkit.hpp"
#include "deleaker/intervention.hpp"
#include "deleaker/io.hpp"
#include "deleaker/report_io.hpp"
#include "deleaker/vlm_clients.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace deleaker::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kToolVersion = "1.0.0";

// ---------------------------------------------------------------------------
// DeLeaker config flags, mirroring the config file keys one-to-one.
// Precedence: CLI flag > config file > built-in default.

struct ConfigFlags {
    std::string config_path;
    DeleakerConfig values;
    CLI::Option* opts[14] = {};

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "DeLeaker config file (flat key-value)");
        opts[0] = cmd->add_option("--alpha", values.alpha, "self-strengthening coefficient");
        opts[1] = cmd->add_option("--beta1", values.beta1, "std coefficient, image-text masking");
        opts[2] = cmd->add_option("--beta2", values.beta2, "std coefficient, image-image suppression");
        opts[3] = cmd->add_option("--agg_start_frac", values.agg_window.start_frac, "aggregation window start fraction");
        opts[4] = cmd->add_option("--agg_end_frac", values.agg_window.end_frac, "aggregation window end fraction");
        opts[5] = cmd->add_option("--int_start_frac", values.intervene_window.start_frac, "intervention window start fraction");
        opts[6] = cmd->add_option("--int_end_frac", values.intervene_window.end_frac, "intervention window end fraction");
        opts[7] = cmd->add_flag("--toggles.img_img_suppress,!--no-toggles.img_img_suppress", values.toggles.img_img_suppress,
                                "suppress high cross-entity image-image scores");
        opts[8] = cmd->add_flag("--toggles.img_txt_suppress,!--no-toggles.img_txt_suppress", values.toggles.img_txt_suppress,
                                "suppress cross-entity image-text scores");
        opts[9] = cmd->add_flag("--toggles.self_strengthen,!--no-toggles.self_strengthen", values.toggles.self_strengthen,
                                "strengthen own image-text scores");
        opts[10] = cmd->add_flag("--toggles.txt_txt_suppress,!--no-toggles.txt_txt_suppress", values.toggles.txt_txt_suppress,
                                 "suppress cross-entity text-text scores (ablation)");
        opts[11] = cmd->add_flag("--toggles.spatial_smooth,!--no-toggles.spatial_smooth", values.toggles.spatial_smooth,
                                 "morphological mask smoothing");
        opts[12] = cmd->add_flag("--toggles.temporal_smooth,!--no-toggles.temporal_smooth", values.toggles.temporal_smooth,
                                 "temporal mask averaging");
        opts[13] = cmd->add_option_function<std::string>(
            "--strengthen_direction",
            [this](const std::string& s) { values.strengthen_direction = strengthen_direction_from_string(s); },
            "img_query_txt_key | txt_query_img_key | both");
    }

    DeleakerConfig resolve() const {
        DeleakerConfig cfg;
        if (!config_path.empty())
            cfg = load_deleaker_config(config_path);
        auto set = [this](int idx) { return opts[idx] && opts[idx]->count() > 0; };
        if (set(0)) cfg.alpha = values.alpha;
        if (set(1)) cfg.beta1 = values.beta1;
        if (set(2)) cfg.beta2 = values.beta2;
        if (set(3)) cfg.agg_window.start_frac = values.agg_window.start_frac;
        if (set(4)) cfg.agg_window.end_frac = values.agg_window.end_frac;
        if (set(5)) cfg.intervene_window.start_frac = values.intervene_window.start_frac;
        if (set(6)) cfg.intervene_window.end_frac = values.intervene_window.end_frac;
        if (set(7)) cfg.toggles.img_img_suppress = values.toggles.img_img_suppress;
        if (set(8)) cfg.toggles.img_txt_suppress = values.toggles.img_txt_suppress;
        if (set(9)) cfg.toggles.self_strengthen = values.toggles.self_strengthen;
        if (set(10)) cfg.toggles.txt_txt_suppress = values.toggles.txt_txt_suppress;
        if (set(11)) cfg.toggles.spatial_smooth = values.toggles.spatial_smooth;
        if (set(12)) cfg.toggles.temporal_smooth = values.toggles.temporal_smooth;
        if (set(13)) cfg.strengthen_direction = values.strengthen_direction;
        cfg.validate();
        return cfg;
    }
};

struct ToyFlags {
    ToyModelConfig values;

    void attach(CLI::App* cmd) {
        cmd->add_option("--text_tokens", values.text_tokens, "text token count");
        cmd->add_option("--grid_h", values.grid.h, "image grid height");
        cmd->add_option("--grid_w", values.grid.w, "image grid width");
        cmd->add_option("--heads", values.heads, "attention heads");
        cmd->add_option("--head_dim", values.head_dim, "per-head dimension");
        cmd->add_option("--steps", values.steps, "diffusion steps");
        cmd->add_option("--blocks_per_step", values.blocks_per_step, "transformer blocks per step");
        cmd->add_option("--state_mix", values.state_mix, "residual update strength");
    }
};

std::vector<std::pair<std::string, std::string>> config_echo(const DeleakerConfig& cfg) {
    return {
        {"alpha", format_double(cfg.alpha)},
        {"beta1", format_double(cfg.beta1)},
        {"beta2", format_double(cfg.beta2)},
        {"agg_start_frac", format_double(cfg.agg_window.start_frac)},
        {"agg_end_frac", format_double(cfg.agg_window.end_frac)},
        {"int_start_frac", format_double(cfg.intervene_window.start_frac)},
        {"int_end_frac", format_double(cfg.intervene_window.end_frac)},
        {"toggles.img_img_suppress", cfg.toggles.img_img_suppress ? "on" : "off"},
        {"toggles.img_txt_suppress", cfg.toggles.img_txt_suppress ? "on" : "off"},
        {"toggles.self_strengthen", cfg.toggles.self_strengthen ? "on" : "off"},
        {"toggles.txt_txt_suppress", cfg.toggles.txt_txt_suppress ? "on" : "off"},
        {"toggles.spatial_smooth", cfg.toggles.spatial_smooth ? "on" : "off"},
        {"toggles.temporal_smooth", cfg.toggles.temporal_smooth ? "on" : "off"},
        {"strengthen_direction", to_string(cfg.strengthen_direction)},
    };
}

std::vector<std::pair<std::string, std::string>> toy_echo(const ToyModelConfig& cfg) {
    return {
        {"text_tokens", std::to_string(cfg.text_tokens)},
        {"grid_h", std::to_string(cfg.grid.h)},
        {"grid_w", std::to_string(cfg.grid.w)},
        {"heads", std::to_string(cfg.heads)},
        {"head_dim", std::to_string(cfg.head_dim)},
        {"steps", std::to_string(cfg.steps)},
        {"blocks_per_step", std::to_string(cfg.blocks_per_step)},
        {"state_mix", format_float(cfg.state_mix)},
    };
}

// Relative paths of every regular file under dir except the run manifest,
// sorted for stable manifests.
std::vector<std::string> collect_outputs(const std::string& dir) {
    std::vector<std::string> out;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file())
            continue;
        const std::string rel = fs::relative(entry.path(), dir).generic_string();
        if (rel == "run_manifest.txt")
            continue;
        out.push_back(rel);
    }
    std::sort(out.begin(), out.end());
    return out;
}

void finish_manifest(RunManifest manifest, const std::string& out_dir) {
    manifest.tool_version = kToolVersion;
    manifest.outputs = collect_outputs(out_dir);
    write_run_manifest(manifest, out_dir);
}

std::vector<std::uint64_t> parse_seed_list(std::uint64_t seed, const std::string& seeds_csv) {
    if (seeds_csv.empty())
        return {seed};
    std::vector<std::uint64_t> out;
    std::stringstream ss(seeds_csv);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty())
            out.push_back(std::stoull(tok));
    if (out.empty())
        throw std::runtime_error("--seeds given but empty");
    return out;
}

void parallel_for(int jobs, int count, const std::function<void(int)>& fn) {
    if (jobs <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i)
            fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::string first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        while (true) {
            const int i = next.fetch_add(1);
            if (i >= count || failed.load())
                return;
            try {
                fn(i);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!failed.exchange(true))
                    first_error = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    const int n_threads = std::min(jobs, count);
    pool.reserve(static_cast<size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t)
        pool.emplace_back(worker);
    for (auto& t : pool)
        t.join();
    if (failed.load())
        throw std::runtime_error(first_error);
}

struct SimulatedRun {
    RunTrace trace;
    EntityMaskSet masks;
};

SimulatedRun simulate_one(ToyModelConfig cfg, std::uint64_t seed, const PlantSpec* plant, const EntityLayout& layout,
                          const DeleakerConfig& dcfg, bool deleaker_on) {
    cfg.seed = seed;
    SimulatedRun run;
    if (deleaker_on) {
        DeleakerHook hook(layout, dcfg, cfg.dims(), cfg.total_blocks());
        InterventionHook fn = [&hook](int gb, const Mat& avg, const std::vector<Mat>& heads) {
            return hook(gb, avg, heads);
        };
        run.trace = run_diffusion(cfg, plant, &fn);
        run.masks = hook.masks();
    } else {
        run.trace = run_diffusion(cfg, plant, nullptr);
        run.masks = build_masks(deleaker::make_trace_view(run.trace), layout, dcfg);
    }
    return run;
}

// ---------------------------------------------------------------------------
// Subcommand payloads.

struct SimulateArgs {
    ToyFlags toy;
    ConfigFlags cfg;
    std::uint64_t seed = 0;
    std::string seeds_csv;
    std::string plant = "default";
    std::string deleaker = "on";
    std::string out;
    int jobs = 1;
};

int cmd_simulate(const SimulateArgs& args) {
    const DeleakerConfig dcfg = args.cfg.resolve();
    const ToyModelConfig toy = args.toy.values;
    toy.validate();
    if (args.plant != "default" && args.plant != "none")
        throw std::runtime_error("--plant must be 'default' or 'none'");
    if (args.deleaker != "on" && args.deleaker != "off")
        throw std::runtime_error("--deleaker must be 'on' or 'off'");
    const bool deleaker_on = args.deleaker == "on";
    const bool planted = args.plant == "default";

    PlantSpec plant = default_plant();
    const EntityLayout layout = layout_from_plant(plant);
    const std::vector<std::uint64_t> seeds = parse_seed_list(args.seed, args.seeds_csv);

    fs::create_directories(args.out);
    save_deleaker_config(dcfg, (fs::path(args.out) / "config.txt").string());

    parallel_for(args.jobs, static_cast<int>(seeds.size()), [&](int i) {
        const std::uint64_t seed = seeds[static_cast<size_t>(i)];
        const SimulatedRun run = simulate_one(toy, seed, planted ? &plant : nullptr, layout, dcfg, deleaker_on);
        const fs::path seed_dir = fs::path(args.out) / ("seed_" + std::to_string(seed));
        export_trace(run.trace, layout, (seed_dir / "trace").string());
        save_masks(run.masks, layout, (seed_dir / "masks.txt").string());
    });

    RunManifest manifest;
    manifest.command = "simulate";
    manifest.fields = toy_echo(toy);
    for (auto& kv : config_echo(dcfg))
        manifest.fields.push_back(kv);
    manifest.fields.emplace_back("plant", args.plant);
    manifest.fields.emplace_back("deleaker", args.deleaker);
    std::string seed_list;
    for (std::uint64_t s : seeds)
        seed_list += (seed_list.empty() ? "" : ",") + std::to_string(s);
    manifest.fields.emplace_back("seeds", seed_list);
    finish_manifest(std::move(manifest), args.out);

    std::cout << "simulated " << seeds.size() << " run(s) into " << args.out << "\n";
    return 0;
}

struct MasksArgs {
    ConfigFlags cfg;
    std::string trace_dir;
    std::string out;
};

int cmd_masks(const MasksArgs& args) {
    const DeleakerConfig dcfg = args.cfg.resolve();
    const ImportedTrace trace = import_trace(args.trace_dir);
    const EntityMaskSet masks = build_masks(make_trace_view(trace), trace.layout, dcfg);

    fs::create_directories(args.out);
    save_masks(masks, trace.layout, (fs::path(args.out) / "masks.txt").string());

    for (size_t e = 0; e < masks.masks.size(); ++e)
        std::cout << "entity " << e << " (" << trace.layout.entities[e].name << "): " << masks.masks[e].size()
                  << " image tokens\n";

    RunManifest manifest;
    manifest.command = "masks";
    manifest.fields = config_echo(dcfg);
    finish_manifest(std::move(manifest), args.out);
    return 0;
}

struct AnalyzeArgs {
    ConfigFlags cfg;
    std::string original_dir;
    std::string mitigated_dir;
    std::string masks_path;
    std::string fields = "raw";
    std::string out;
};

int cmd_analyze(const AnalyzeArgs& args) {
    const DeleakerConfig dcfg = args.cfg.resolve();
    if (args.fields != "raw" && args.fields != "effective")
        throw std::runtime_error("--fields must be 'raw' or 'effective'");
    const FieldSelect select = args.fields == "raw" ? FieldSelect::Raw : FieldSelect::Effective;

    const ImportedTrace orig_in = import_trace(args.original_dir);
    const ImportedTrace mit_in = import_trace(args.mitigated_dir);
    if (!(orig_in.config.dims() == mit_in.config.dims()) || orig_in.config.steps != mit_in.config.steps ||
        orig_in.config.blocks_per_step != mit_in.config.blocks_per_step)
        throw std::runtime_error("analyze: traces have mismatched dimensions");

    EntityMaskSet masks;
    if (!args.masks_path.empty())
        masks = load_masks(args.masks_path).first;
    else
        masks = build_masks(make_trace_view(orig_in), orig_in.layout, dcfg);

    // Leakage runs over in-memory traces; rebuild RunTrace shells.
    auto to_run_trace = [](const ImportedTrace& t) {
        RunTrace run;
        run.config = t.config;
        run.hooked = t.hooked;
        run.blocks.resize(t.raw.size());
        for (size_t gb = 0; gb < t.raw.size(); ++gb) {
            run.blocks[gb].raw = t.raw[gb];
            if (t.hooked) {
                run.blocks[gb].post = t.post[gb];
                run.blocks[gb].hooked = true;
            }
        }
        return run;
    };
    const RunTrace orig = to_run_trace(orig_in);
    const RunTrace mit = to_run_trace(mit_in);

    fs::create_directories(args.out);
    std::vector<LeakageTrace> all;
    for (Channel ch : {Channel::ImgTxt, Channel::ImgImg}) {
        LeakageTrace lo = pair_leakage(orig, masks, orig_in.layout, ch, dcfg, select, "original");
        LeakageTrace lm = pair_leakage(mit, masks, orig_in.layout, ch, dcfg, select, "deleaker");
        const std::vector<RelDiffCell> diff = relative_difference(lo, lm);

        const std::string suffix = to_string(ch);
        write_relative_difference_csv(lo, lm, diff,
                                      (fs::path(args.out) / ("relative_difference_" + suffix + ".csv")).string());

        std::vector<double> vo, vm, vd;
        for (int gb = 0; gb < lo.total_blocks(); ++gb) {
            vo.push_back(lo.block_mean(gb));
            vm.push_back(lm.block_mean(gb));
            vd.push_back(diff[static_cast<size_t>(gb)].value);
        }
        write_progression_svg({{"original", vo}, {"deleaker", vm}, {"relative difference", vd}},
                              "leakage proportion / relative difference",
                              (fs::path(args.out) / ("progression_" + suffix + ".svg")).string());
        all.push_back(std::move(lo));
        all.push_back(std::move(lm));
    }
    write_leakage_csv(all, (fs::path(args.out) / "leakage.csv").string());

    RunManifest manifest;
    manifest.command = "analyze";
    manifest.fields = config_echo(dcfg);
    manifest.fields.emplace_back("fields", args.fields);
    finish_manifest(std::move(manifest), args.out);
    return 0;
}

struct AblateArgs {
    ToyFlags toy;
    ConfigFlags cfg;
    std::string grid = "table2";
    std::uint64_t seed = 0;
    std::string seeds_csv;
    std::string out;
    int jobs = 1;
};

int cmd_ablate(const AblateArgs& args) {
    if (args.grid != "table2")
        throw std::runtime_error("--grid must be 'table2'");
    const DeleakerConfig base = args.cfg.resolve();
    const ToyModelConfig toy = args.toy.values;
    toy.validate();
    const std::vector<std::uint64_t> seeds = parse_seed_list(args.seed, args.seeds_csv);
    const PlantSpec plant = default_plant();
    const EntityLayout layout = layout_from_plant(plant);
    const std::vector<AblationRow> grid = table2_ablation_grid(base.toggles);
    const int total = toy.total_blocks();

    // seed-mean leakage per (config row + original) per block per channel
    const size_t rows = grid.size() + 1;
    std::vector<std::vector<double>> mean_txt(rows, std::vector<double>(static_cast<size_t>(total), 0.0));
    std::vector<std::vector<double>> mean_img(rows, std::vector<double>(static_cast<size_t>(total), 0.0));
    std::mutex accum_mutex;

    parallel_for(args.jobs, static_cast<int>(seeds.size()), [&](int i) {
        ToyModelConfig cfg = toy;
        cfg.seed = seeds[static_cast<size_t>(i)];
        const RunTrace orig = run_diffusion(cfg, &plant);
        const EntityMaskSet masks = build_masks(deleaker::make_trace_view(orig), layout, base);

        std::vector<std::vector<double>> local_txt(rows), local_img(rows);
        {
            LeakageTrace lt = pair_leakage(orig, masks, layout, Channel::ImgTxt, base, FieldSelect::Raw, "Original");
            LeakageTrace li = pair_leakage(orig, masks, layout, Channel::ImgImg, base, FieldSelect::Raw, "Original");
            for (int gb = 0; gb < total; ++gb) {
                local_txt[0].push_back(lt.block_mean(gb));
                local_img[0].push_back(li.block_mean(gb));
            }
        }
        for (size_t k = 0; k < grid.size(); ++k) {
            DeleakerConfig dcfg = base;
            dcfg.toggles = grid[k].toggles;
            DeleakerHook hook(layout, dcfg, cfg.dims(), total);
            InterventionHook fn = [&hook](int gb, const Mat& avg, const std::vector<Mat>& heads) {
                return hook(gb, avg, heads);
            };
            const RunTrace mit = run_diffusion(cfg, &plant, &fn);
            LeakageTrace lt = pair_leakage(mit, masks, layout, Channel::ImgTxt, base, FieldSelect::Raw, grid[k].label);
            LeakageTrace li = pair_leakage(mit, masks, layout, Channel::ImgImg, base, FieldSelect::Raw, grid[k].label);
            for (int gb = 0; gb < total; ++gb) {
                local_txt[k + 1].push_back(lt.block_mean(gb));
                local_img[k + 1].push_back(li.block_mean(gb));
            }
        }
        std::lock_guard<std::mutex> lock(accum_mutex);
        for (size_t r = 0; r < rows; ++r)
            for (int gb = 0; gb < total; ++gb) {
                mean_txt[r][static_cast<size_t>(gb)] += local_txt[r][static_cast<size_t>(gb)];
                mean_img[r][static_cast<size_t>(gb)] += local_img[r][static_cast<size_t>(gb)];
            }
    });

    const double inv_seeds = 1.0 / static_cast<double>(seeds.size());
    for (size_t r = 0; r < rows; ++r)
        for (int gb = 0; gb < total; ++gb) {
            mean_txt[r][static_cast<size_t>(gb)] *= inv_seeds;
            mean_img[r][static_cast<size_t>(gb)] *= inv_seeds;
        }

    auto window_mean = [&](const std::vector<double>& v) {
        double s = 0.0;
        int c = 0;
        for (int gb = 0; gb < total; ++gb)
            if (base.intervene_window.contains(gb, total)) {
                s += v[static_cast<size_t>(gb)];
                ++c;
            }
        return s / static_cast<double>(c);
    };

    fs::create_directories(args.out);
    {
        std::ofstream out(fs::path(args.out) / "ablation_summary.csv", std::ios::binary);
        out << "label,mean_leakage_img_txt,reduction_img_txt,mean_leakage_img_img,reduction_img_img\n";
        const double o_txt = window_mean(mean_txt[0]);
        const double o_img = window_mean(mean_img[0]);
        auto emit = [&](const std::string& label, size_t row) {
            const double m_txt = window_mean(mean_txt[row]);
            const double m_img = window_mean(mean_img[row]);
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f", m_txt, o_txt > 0 ? 1.0 - m_txt / o_txt : 0.0,
                          m_img, o_img > 0 ? 1.0 - m_img / o_img : 0.0);
            out << label << ',' << buf << '\n';
        };
        emit("Original", 0);
        for (size_t k = 0; k < grid.size(); ++k)
            emit(grid[k].label, k + 1);
    }

    std::vector<std::pair<std::string, std::vector<double>>> series;
    series.emplace_back("Original", mean_txt[0]);
    for (size_t k = 0; k < grid.size(); ++k)
        series.emplace_back(grid[k].label, mean_txt[k + 1]);
    write_progression_svg(series, "img_txt leakage proportion",
                          (fs::path(args.out) / "ablation_progression_img_txt.svg").string());

    RunManifest manifest;
    manifest.command = "ablate";
    manifest.fields = toy_echo(toy);
    for (auto& kv : config_echo(base))
        manifest.fields.push_back(kv);
    std::string seed_list;
    for (std::uint64_t s : seeds)
        seed_list += (seed_list.empty() ? "" : ",") + std::to_string(s);
    manifest.fields.emplace_back("seeds", seed_list);
    manifest.fields.emplace_back("grid", args.grid);
    finish_manifest(std::move(manifest), args.out);

    std::cout << "ablation grid (" << grid.size() << " configurations, " << seeds.size() << " seed(s)) written to "
              << args.out << "\n";
    return 0;
}

struct AssignArgs {
    std::string in_path;
    std::string mode = "similarity";
    std::string out;
};

CostMatrix read_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read " + path);
    std::vector<std::tuple<std::string, std::string, double>> cells;
    std::vector<std::string> row_labels, col_labels;
    auto index_of = [](std::vector<std::string>& labels, const std::string& name) {
        for (size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == name)
                return static_cast<int>(i);
        labels.push_back(name);
        return static_cast<int>(labels.size()) - 1;
    };
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::stringstream ss(line);
        std::string r, c, v;
        if (!std::getline(ss, r, ',') || !std::getline(ss, c, ',') || !std::getline(ss, v))
            throw std::runtime_error("bad matrix CSV line: " + line);
        if (first && r == "row_label" && c == "col_label") {
            first = false;
            continue; // header
        }
        first = false;
        index_of(row_labels, r);
        index_of(col_labels, c);
        cells.emplace_back(r, c, std::stod(v));
    }
    CostMatrix m(static_cast<int>(row_labels.size()), static_cast<int>(col_labels.size()));
    m.row_labels = row_labels;
    m.col_labels = col_labels;
    std::vector<char> seen(static_cast<size_t>(m.rows) * m.cols, 0);
    for (const auto& [r, c, v] : cells) {
        const int ri = static_cast<int>(std::find(row_labels.begin(), row_labels.end(), r) - row_labels.begin());
        const int ci = static_cast<int>(std::find(col_labels.begin(), col_labels.end(), c) - col_labels.begin());
        m.at(ri, ci) = v;
        seen[static_cast<size_t>(ri) * m.cols + ci] = 1;
    }
    for (char s : seen)
        if (!s)
            throw std::runtime_error("matrix CSV is missing entries (must be dense)");
    return m;
}

int cmd_assign(const AssignArgs& args) {
    if (args.mode != "similarity" && args.mode != "cost")
        throw std::runtime_error("--mode must be 'similarity' or 'cost'");
    const CostMatrix matrix = read_matrix_csv(args.in_path);
    const Assignment a = args.mode == "similarity" ? assign_masks(matrix) : hungarian(matrix);

    fs::create_directories(args.out);
    {
        std::ofstream out(fs::path(args.out) / "assignment.csv", std::ios::binary);
        out << "entity,mask,similarity\n";
        for (size_t r = 0; r < a.entity_to_mask.size(); ++r) {
            const int c = a.entity_to_mask[r];
            if (c < 0)
                continue;
            out << matrix.row_labels[r] << ',' << matrix.col_labels[static_cast<size_t>(c)] << ','
                << format_double(matrix.at(static_cast<int>(r), c)) << '\n';
        }
    }
    std::cout << "total " << args.mode << " = " << format_double(a.total_cost) << "\n";

    RunManifest manifest;
    manifest.command = "assign";
    manifest.fields.emplace_back("mode", args.mode);
    manifest.fields.emplace_back("input_sha256", sha256_file_hex(args.in_path));
    finish_manifest(std::move(manifest), args.out);
    return 0;
}

struct EvaluateArgs {
    std::string cases_path;
    std::string client = "mock";
    std::string script_path;
    std::string endpoint;
    std::string auth_env = "DELEAKER_VLM_API_KEY";
    std::string cache_path;
    std::string out;
    int jobs = 1;
};

int cmd_evaluate(const EvaluateArgs& args) {
    const std::vector<ComparisonCase> cases = load_case_manifest(args.cases_path);

    std::unique_ptr<VlmClient> client;
    if (args.client == "mock") {
        client = std::make_unique<MockVlmClient>(args.script_path.empty() ? default_mock_handler()
                                                                          : scripted_handler_from_file(args.script_path));
    } else if (args.client == "http") {
        if (args.endpoint.empty())
            throw std::runtime_error("--client http requires --endpoint");
        client = std::make_unique<HttpVlmClient>(args.endpoint, args.auth_env);
    } else {
        throw std::runtime_error("--client must be 'mock' or 'http'");
    }

    ResponseCache cache;
    if (!args.cache_path.empty() && fs::exists(args.cache_path))
        cache.load(args.cache_path);

    std::vector<EvalVerdict> verdicts(cases.size());
    parallel_for(args.jobs, static_cast<int>(cases.size()), [&](int i) {
        verdicts[static_cast<size_t>(i)] = run_comparison(*client, cases[static_cast<size_t>(i)], &cache);
    });

    if (!args.cache_path.empty())
        cache.save(args.cache_path);

    fs::create_directories(args.out);
    save_verdict_log(verdicts, (fs::path(args.out) / "verdicts.jsonl").string());

    int failed = 0;
    for (const EvalVerdict& v : verdicts)
        if (v.failed)
            ++failed;
    std::cout << cases.size() << " case(s), " << failed << " failed\n";

    RunManifest manifest;
    manifest.command = "evaluate";
    manifest.fields.emplace_back("client", args.client);
    manifest.fields.emplace_back("cases_sha256", sha256_file_hex(args.cases_path));
    manifest.fields.emplace_back("failed_cases", std::to_string(failed));
    finish_manifest(std::move(manifest), args.out);
    return 0;
}

struct ReportArgs {
    std::string verdicts_path;
    std::string label = "run";
    std::string out;
};

int cmd_report(const ReportArgs& args) {
    const std::vector<EvalVerdict> verdicts = load_verdict_log(args.verdicts_path);
    std::vector<VerdictLabel> labels;
    int failed = 0;
    for (const EvalVerdict& v : verdicts) {
        if (v.failed)
            ++failed;
        else
            labels.push_back(v.label);
    }
    if (labels.empty())
        throw std::runtime_error("report: no successful verdicts in " + args.verdicts_path);
    const VerdictDistribution dist = distribution_summary(labels);

    fs::create_directories(args.out);
    write_distribution_csv({{args.label, dist}}, (fs::path(args.out) / "report.csv").string());
    write_distribution_svg({{args.label, dist}}, (fs::path(args.out) / "report.svg").string());

    for (int i = 0; i < 5; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%.2f", dist.percentage(i));
        std::cout << kVerdictCategoryNames[static_cast<size_t>(i)] << " " << dist.counts[static_cast<size_t>(i)]
                  << " (" << buf << "%)\n";
    }
    std::cout << "failed (excluded): " << failed << "\n";

    RunManifest manifest;
    manifest.command = "report";
    manifest.fields.emplace_back("label", args.label);
    manifest.fields.emplace_back("verdicts_sha256", sha256_file_hex(args.verdicts_path));
    manifest.fields.emplace_back("failed_cases", std::to_string(failed));
    finish_manifest(std::move(manifest), args.out);
    return 0;
}

} // namespace

int run(int argc, char** argv) {
    CLI::App app{"DeLeaker attention-intervention toolkit"};
    app.require_subcommand(1);

    SimulateArgs sim;
    CLI::App* c_sim = app.add_subcommand("simulate", "run the toy model with or without DeLeaker, export traces and masks");
    sim.toy.attach(c_sim);
    sim.cfg.attach(c_sim);
    c_sim->add_option("--seed", sim.seed, "run seed");
    c_sim->add_option("--seeds", sim.seeds_csv, "comma-separated seed list (overrides --seed)");
    c_sim->add_option("--plant", sim.plant, "default | none (planted leakage scenario)");
    c_sim->add_option("--deleaker", sim.deleaker, "on | off");
    c_sim->add_option("--out", sim.out, "output directory")->required();
    c_sim->add_option("--jobs", sim.jobs, "parallel runs");

    MasksArgs mk;
    CLI::App* c_masks = app.add_subcommand("masks", "extract entity masks from an exported trace");
    mk.cfg.attach(c_masks);
    c_masks->add_option("--trace", mk.trace_dir, "trace directory")->required();
    c_masks->add_option("--out", mk.out, "output directory")->required();

    AnalyzeArgs an;
    CLI::App* c_an = app.add_subcommand("analyze", "leakage progression and relative differences between two traces");
    an.cfg.attach(c_an);
    c_an->add_option("--original", an.original_dir, "original trace directory")->required();
    c_an->add_option("--mitigated", an.mitigated_dir, "mitigated trace directory")->required();
    c_an->add_option("--masks", an.masks_path, "mask file (default: build from the original trace)");
    c_an->add_option("--fields", an.fields, "raw | effective (which fields to measure)");
    c_an->add_option("--out", an.out, "output directory")->required();

    AblateArgs ab;
    CLI::App* c_ab = app.add_subcommand("ablate", "run the ablation toggle grid");
    ab.toy.attach(c_ab);
    ab.cfg.attach(c_ab);
    c_ab->add_option("--grid", ab.grid, "ablation grid name (table2)");
    c_ab->add_option("--seed", ab.seed, "run seed");
    c_ab->add_option("--seeds", ab.seeds_csv, "comma-separated seed list");
    c_ab->add_option("--out", ab.out, "output directory")->required();
    c_ab->add_option("--jobs", ab.jobs, "parallel runs");

    AssignArgs as_;
    CLI::App* c_as = app.add_subcommand("assign", "optimal entity-mask assignment over a CSV matrix");
    c_as->add_option("--in", as_.in_path, "matrix CSV (row_label,col_label,value)")->required();
    c_as->add_option("--mode", as_.mode, "similarity (maximize) | cost (minimize)");
    c_as->add_option("--out", as_.out, "output directory")->required();

    EvaluateArgs ev;
    CLI::App* c_ev = app.add_subcommand("evaluate", "run the comparative evaluation pipeline over a case manifest");
    c_ev->add_option("--cases", ev.cases_path, "case manifest (JSONL)")->required();
    c_ev->add_option("--client", ev.client, "mock | http (default mock; http is the only networked mode)");
    c_ev->add_option("--script", ev.script_path, "mock script (JSON)");
    c_ev->add_option("--endpoint", ev.endpoint, "VLM endpoint URL for --client http");
    c_ev->add_option("--auth-env", ev.auth_env, "environment variable holding the API key");
    c_ev->add_option("--cache", ev.cache_path, "response cache file (JSONL, read and updated)");
    c_ev->add_option("--out", ev.out, "output directory")->required();
    c_ev->add_option("--jobs", ev.jobs, "parallel cases");

    ReportArgs rp;
    CLI::App* c_rp = app.add_subcommand("report", "verdict distribution report (CSV + stacked-bar SVG)");
    c_rp->add_option("--verdicts", rp.verdicts_path, "verdict log (JSONL)")->required();
    c_rp->add_option("--label", rp.label, "row label for the report");
    c_rp->add_option("--out", rp.out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e); // prints contextual help, exits 0
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e); // prints the error plus a usage hint
        return 1;
    }

    try {
        if (c_sim->parsed())
            return cmd_simulate(sim);
        if (c_masks->parsed())
            return cmd_masks(mk);
        if (c_an->parsed())
            return cmd_analyze(an);
        if (c_ab->parsed())
            return cmd_ablate(ab);
        if (c_as->parsed())
            return cmd_assign(as_);
        if (c_ev->parsed())
            return cmd_evaluate(ev);
        if (c_rp->parsed())
            return cmd_report(rp);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

} // namespace deleaker::cli
