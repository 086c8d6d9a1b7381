#include "deleaker/io.hpp"

#include "deleaker/digest.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace deleaker {

namespace fs = std::filesystem;

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc())
        throw std::runtime_error("format_double failed");
    return std::string(buf, ptr);
}

std::string format_float(float v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc())
        throw std::runtime_error("format_float failed");
    return std::string(buf, ptr);
}

namespace {

std::string channel_token(LeakChannel c) {
    switch (c) {
    case LeakChannel::ImgTxt: return "img_txt";
    case LeakChannel::ImgImg: return "img_img";
    case LeakChannel::Both: return "both";
    }
    throw std::logic_error("unknown leak channel");
}

LeakChannel channel_from_token(const std::string& s) {
    if (s == "img_txt")
        return LeakChannel::ImgTxt;
    if (s == "img_img")
        return LeakChannel::ImgImg;
    if (s == "both")
        return LeakChannel::Both;
    throw std::runtime_error("unknown leak channel token: " + s);
}

void write_f32_matrices(const std::string& path, const std::vector<Mat>& heads) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path);
    for (const Mat& m : heads) {
        if constexpr (std::endian::native == std::endian::little) {
            out.write(reinterpret_cast<const char*>(m.data.data()),
                      static_cast<std::streamsize>(m.data.size() * sizeof(float)));
        } else {
            for (float v : m.data) {
                std::uint32_t bits;
                std::memcpy(&bits, &v, 4);
                const char bytes[4] = {static_cast<char>(bits), static_cast<char>(bits >> 8),
                                       static_cast<char>(bits >> 16), static_cast<char>(bits >> 24)};
                out.write(bytes, 4);
            }
        }
    }
}

std::vector<Mat> read_f32_matrices(const std::string& path, int heads, int n) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot read " + path);
    std::vector<Mat> out(static_cast<size_t>(heads), Mat(n, n));
    for (Mat& m : out) {
        if constexpr (std::endian::native == std::endian::little) {
            in.read(reinterpret_cast<char*>(m.data.data()),
                    static_cast<std::streamsize>(m.data.size() * sizeof(float)));
        } else {
            for (float& v : m.data) {
                char bytes[4];
                in.read(bytes, 4);
                const std::uint32_t bits = static_cast<std::uint8_t>(bytes[0]) |
                                           (static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[1])) << 8) |
                                           (static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[2])) << 16) |
                                           (static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[3])) << 24);
                std::memcpy(&v, &bits, 4);
            }
        }
        if (!in)
            throw std::runtime_error("short read in " + path);
    }
    return out;
}

std::string attn_filename(int step, int block, bool post) {
    return "attn_s" + std::to_string(step) + "_b" + std::to_string(block) + (post ? ".post.f32" : ".f32");
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> parts;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok)
        parts.push_back(tok);
    return parts;
}

} // namespace

void export_trace(const RunTrace& trace, const EntityLayout& layout, const std::string& dir) {
    fs::create_directories(dir);
    const ToyModelConfig& cfg = trace.config;

    std::ostringstream m;
    m << "format_version 1\n";
    m << "text_tokens " << cfg.text_tokens << '\n';
    m << "grid_h " << cfg.grid.h << '\n';
    m << "grid_w " << cfg.grid.w << '\n';
    m << "heads " << cfg.heads << '\n';
    m << "head_dim " << cfg.head_dim << '\n';
    m << "steps " << cfg.steps << '\n';
    m << "blocks_per_step " << cfg.blocks_per_step << '\n';
    m << "seed " << cfg.seed << '\n';
    m << "state_mix " << format_float(cfg.state_mix) << '\n';
    m << "hooked " << (trace.hooked ? 1 : 0) << '\n';
    for (const auto& e : layout.entities) {
        m << "entity " << e.id << ' ' << e.name << " :";
        for (int t : e.text_tokens.indices)
            m << ' ' << t;
        m << '\n';
    }
    if (trace.plant) {
        const PlantSpec& p = *trace.plant;
        m << "plant_gamma " << format_float(p.self_bias) << '\n';
        m << "plant_gamma_window " << p.gamma_window.begin << ' ' << p.gamma_window.end << '\n';
        m << "plant_leak_window " << p.leak_window.begin << ' ' << p.leak_window.end << '\n';
        for (size_t i = 0; i < p.entities.size(); ++i) {
            const PlantEntity& e = p.entities[i];
            m << "plant_entity " << i << ' ' << e.name << ' ' << e.txt_begin << ' ' << e.txt_end << ' ' << e.rect.r0
              << ' ' << e.rect.c0 << ' ' << e.rect.r1 << ' ' << e.rect.c1 << '\n';
        }
        for (const LeakPair& l : p.leaks)
            m << "plant_leak " << l.source << ' ' << l.target << ' ' << format_float(l.bias) << ' '
              << channel_token(l.channel) << '\n';
    }
    {
        std::ofstream out(fs::path(dir) / "manifest.txt", std::ios::binary);
        if (!out)
            throw std::runtime_error("cannot write trace manifest in " + dir);
        out << m.str();
    }

    for (int gb = 0; gb < cfg.total_blocks(); ++gb) {
        const int step = gb / cfg.blocks_per_step;
        const int block = gb % cfg.blocks_per_step;
        const BlockFields& rec = trace.blocks[static_cast<size_t>(gb)];
        write_f32_matrices((fs::path(dir) / attn_filename(step, block, false)).string(), rec.raw);
        if (trace.hooked)
            write_f32_matrices((fs::path(dir) / attn_filename(step, block, true)).string(), rec.post);
    }
}

ImportedTrace import_trace(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "manifest.txt");
    if (!in)
        throw std::runtime_error("no manifest.txt in " + dir);
    ImportedTrace trace;
    PlantSpec plant;
    bool has_plant = false;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        const std::vector<std::string> p = split_ws(line);
        const std::string& key = p[0];
        if (key == "format_version") {
            if (p.at(1) != "1")
                throw std::runtime_error("unsupported trace format version " + p.at(1));
        } else if (key == "text_tokens") {
            trace.config.text_tokens = std::stoi(p.at(1));
        } else if (key == "grid_h") {
            trace.config.grid.h = std::stoi(p.at(1));
        } else if (key == "grid_w") {
            trace.config.grid.w = std::stoi(p.at(1));
        } else if (key == "heads") {
            trace.config.heads = std::stoi(p.at(1));
        } else if (key == "head_dim") {
            trace.config.head_dim = std::stoi(p.at(1));
        } else if (key == "steps") {
            trace.config.steps = std::stoi(p.at(1));
        } else if (key == "blocks_per_step") {
            trace.config.blocks_per_step = std::stoi(p.at(1));
        } else if (key == "seed") {
            trace.config.seed = std::stoull(p.at(1));
        } else if (key == "state_mix") {
            trace.config.state_mix = std::stof(p.at(1));
        } else if (key == "hooked") {
            trace.hooked = std::stoi(p.at(1)) != 0;
        } else if (key == "entity") {
            EntityLayout::Entity e;
            e.id = std::stoi(p.at(1));
            e.name = p.at(2);
            std::vector<int> toks;
            for (size_t i = 4; i < p.size(); ++i) // p[3] is ":"
                toks.push_back(std::stoi(p[i]));
            e.text_tokens = IndexSet(std::move(toks));
            trace.layout.entities.push_back(std::move(e));
        } else if (key == "plant_gamma") {
            plant.self_bias = std::stof(p.at(1));
            has_plant = true;
        } else if (key == "plant_gamma_window") {
            plant.gamma_window = {std::stoi(p.at(1)), std::stoi(p.at(2))};
        } else if (key == "plant_leak_window") {
            plant.leak_window = {std::stoi(p.at(1)), std::stoi(p.at(2))};
        } else if (key == "plant_entity") {
            PlantEntity e;
            e.name = p.at(2);
            e.txt_begin = std::stoi(p.at(3));
            e.txt_end = std::stoi(p.at(4));
            e.rect = {std::stoi(p.at(5)), std::stoi(p.at(6)), std::stoi(p.at(7)), std::stoi(p.at(8))};
            plant.entities.push_back(std::move(e));
            has_plant = true;
        } else if (key == "plant_leak") {
            LeakPair l;
            l.source = std::stoi(p.at(1));
            l.target = std::stoi(p.at(2));
            l.bias = std::stof(p.at(3));
            l.channel = channel_from_token(p.at(4));
            plant.leaks.push_back(l);
            has_plant = true;
        } else {
            throw std::runtime_error("unknown trace manifest key: " + key);
        }
    }
    (void)has_plant; // the plant echo is informational on import

    trace.config.validate();
    const int n = trace.config.n_tokens();
    trace.raw.resize(static_cast<size_t>(trace.config.total_blocks()));
    if (trace.hooked)
        trace.post.resize(static_cast<size_t>(trace.config.total_blocks()));
    for (int gb = 0; gb < trace.config.total_blocks(); ++gb) {
        const int step = gb / trace.config.blocks_per_step;
        const int block = gb % trace.config.blocks_per_step;
        trace.raw[static_cast<size_t>(gb)] =
            read_f32_matrices((fs::path(dir) / attn_filename(step, block, false)).string(), trace.config.heads, n);
        if (trace.hooked)
            trace.post[static_cast<size_t>(gb)] =
                read_f32_matrices((fs::path(dir) / attn_filename(step, block, true)).string(), trace.config.heads, n);
    }
    return trace;
}

TraceView make_trace_view(const ImportedTrace& trace) {
    TraceView view;
    view.dims = trace.config.dims();
    view.total_blocks = trace.config.total_blocks();
    const ImportedTrace* t = &trace;
    view.raw_heads = [t](int gb) -> const std::vector<Mat>& { return t->raw[static_cast<size_t>(gb)]; };
    return view;
}

void save_masks(const EntityMaskSet& masks, const EntityLayout& layout, const std::string& path) {
    if (static_cast<int>(masks.masks.size()) != layout.count())
        throw std::invalid_argument("save_masks: mask/layout entity count mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path);
    out << "grid_h " << masks.grid.h << '\n';
    out << "grid_w " << masks.grid.w << '\n';
    for (size_t e = 0; e < masks.masks.size(); ++e) {
        out << "entity " << e << ' ' << layout.entities[e].name << " :";
        for (int q : masks.masks[e].indices)
            out << ' ' << q;
        out << '\n';
    }
}

std::pair<EntityMaskSet, std::vector<std::string>> load_masks(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read " + path);
    EntityMaskSet masks;
    masks.frozen = true;
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        const std::vector<std::string> p = split_ws(line);
        if (p[0] == "grid_h") {
            masks.grid.h = std::stoi(p.at(1));
        } else if (p[0] == "grid_w") {
            masks.grid.w = std::stoi(p.at(1));
        } else if (p[0] == "entity") {
            names.push_back(p.at(2));
            std::vector<int> idx;
            for (size_t i = 4; i < p.size(); ++i)
                idx.push_back(std::stoi(p[i]));
            masks.masks.emplace_back(std::move(idx));
        } else {
            throw std::runtime_error("unknown mask file key: " + p[0]);
        }
    }
    return {std::move(masks), std::move(names)};
}

void save_deleaker_config(const DeleakerConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path);
    out << "alpha " << format_double(cfg.alpha) << '\n';
    out << "beta1 " << format_double(cfg.beta1) << '\n';
    out << "beta2 " << format_double(cfg.beta2) << '\n';
    out << "agg_start_frac " << format_double(cfg.agg_window.start_frac) << '\n';
    out << "agg_end_frac " << format_double(cfg.agg_window.end_frac) << '\n';
    out << "int_start_frac " << format_double(cfg.intervene_window.start_frac) << '\n';
    out << "int_end_frac " << format_double(cfg.intervene_window.end_frac) << '\n';
    out << "toggles.img_img_suppress " << (cfg.toggles.img_img_suppress ? "on" : "off") << '\n';
    out << "toggles.img_txt_suppress " << (cfg.toggles.img_txt_suppress ? "on" : "off") << '\n';
    out << "toggles.self_strengthen " << (cfg.toggles.self_strengthen ? "on" : "off") << '\n';
    out << "toggles.txt_txt_suppress " << (cfg.toggles.txt_txt_suppress ? "on" : "off") << '\n';
    out << "toggles.spatial_smooth " << (cfg.toggles.spatial_smooth ? "on" : "off") << '\n';
    out << "toggles.temporal_smooth " << (cfg.toggles.temporal_smooth ? "on" : "off") << '\n';
    out << "strengthen_direction " << to_string(cfg.strengthen_direction) << '\n';
}

namespace {
bool parse_toggle(const std::string& v) {
    if (v == "on" || v == "true" || v == "1")
        return true;
    if (v == "off" || v == "false" || v == "0")
        return false;
    throw std::runtime_error("bad toggle value: " + v);
}
} // namespace

DeleakerConfig load_deleaker_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read " + path);
    DeleakerConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos)
            line = line.substr(0, hash);
        const std::vector<std::string> p = split_ws(line);
        if (p.empty())
            continue;
        if (p.size() != 2)
            throw std::runtime_error("config line " + std::to_string(line_no) + ": expected 'key value'");
        const std::string& key = p[0];
        const std::string& val = p[1];
        if (key == "alpha")
            cfg.alpha = std::stod(val);
        else if (key == "beta1")
            cfg.beta1 = std::stod(val);
        else if (key == "beta2")
            cfg.beta2 = std::stod(val);
        else if (key == "agg_start_frac")
            cfg.agg_window.start_frac = std::stod(val);
        else if (key == "agg_end_frac")
            cfg.agg_window.end_frac = std::stod(val);
        else if (key == "int_start_frac")
            cfg.intervene_window.start_frac = std::stod(val);
        else if (key == "int_end_frac")
            cfg.intervene_window.end_frac = std::stod(val);
        else if (key == "toggles.img_img_suppress")
            cfg.toggles.img_img_suppress = parse_toggle(val);
        else if (key == "toggles.img_txt_suppress")
            cfg.toggles.img_txt_suppress = parse_toggle(val);
        else if (key == "toggles.self_strengthen")
            cfg.toggles.self_strengthen = parse_toggle(val);
        else if (key == "toggles.txt_txt_suppress")
            cfg.toggles.txt_txt_suppress = parse_toggle(val);
        else if (key == "toggles.spatial_smooth")
            cfg.toggles.spatial_smooth = parse_toggle(val);
        else if (key == "toggles.temporal_smooth")
            cfg.toggles.temporal_smooth = parse_toggle(val);
        else if (key == "strengthen_direction")
            cfg.strengthen_direction = strengthen_direction_from_string(val);
        else
            throw std::runtime_error("unknown config key: " + key);
    }
    cfg.validate();
    return cfg;
}

void write_run_manifest(const RunManifest& manifest, const std::string& dir) {
    std::vector<std::string> outputs = manifest.outputs;
    std::sort(outputs.begin(), outputs.end());
    std::ofstream out(fs::path(dir) / "run_manifest.txt", std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write run manifest in " + dir);
    out << "tool deleaker " << manifest.tool_version << '\n';
    out << "command " << manifest.command << '\n';
    for (const auto& [k, v] : manifest.fields)
        out << k << ' ' << v << '\n';
    for (const std::string& rel : outputs)
        out << "output " << rel << " sha256 " << sha256_file_hex((fs::path(dir) / rel).string()) << '\n';
}

} // namespace deleaker
