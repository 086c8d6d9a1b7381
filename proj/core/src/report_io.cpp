#include "deleaker/report_io.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>

namespace deleaker {

using nlohmann::json;

namespace {

std::string num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::string pct2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path);
    return out;
}

constexpr const char* kCategoryColors[5] = {"#1a7f37", "#7fce94", "#c9c9c9", "#f0a5a5", "#d1423f"};

} // namespace

void write_leakage_csv(const std::vector<LeakageTrace>& traces, const std::string& path) {
    std::ofstream out = open_out(path);
    out << "run_label,step,block,pair,channel,value\n";
    for (const LeakageTrace& t : traces) {
        for (int gb = 0; gb < t.total_blocks(); ++gb) {
            const int step = gb / t.blocks_per_step;
            const int block = gb % t.blocks_per_step;
            for (size_t p = 0; p < t.pairs.size(); ++p) {
                out << t.run_label << ',' << step << ',' << block << ',' << t.pairs[p].first << '-'
                    << t.pairs[p].second << ',' << to_string(t.channel) << ',' << num(t.at(gb, static_cast<int>(p)))
                    << '\n';
            }
        }
    }
}

void write_relative_difference_csv(const LeakageTrace& orig, const LeakageTrace& mitigated,
                                   const std::vector<RelDiffCell>& cells, const std::string& path) {
    std::ofstream out = open_out(path);
    out << "run_label,step,block,pair,channel,value,floored\n";
    for (int gb = 0; gb < orig.total_blocks(); ++gb) {
        const int step = gb / orig.blocks_per_step;
        const int block = gb % orig.blocks_per_step;
        const RelDiffCell& cell = cells[static_cast<size_t>(gb)];
        out << mitigated.run_label << "-vs-" << orig.run_label << ',' << step << ',' << block << ",all,"
            << to_string(orig.channel) << ',' << num(cell.value) << ',' << (cell.floored ? 1 : 0) << '\n';
    }
}

void write_progression_svg(const std::vector<std::pair<std::string, std::vector<double>>>& series,
                           const std::string& y_label, const std::string& path) {
    const int width = 760, height = 320;
    const int ml = 60, mr = 160, mt = 20, mb = 40;
    const double plot_w = width - ml - mr;
    const double plot_h = height - mt - mb;

    size_t n = 1;
    double lo = 0.0, hi = 0.0;
    for (const auto& [label, values] : series) {
        n = std::max(n, values.size());
        for (double v : values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (hi == lo)
        hi = lo + 1.0;

    auto sx = [&](size_t i) { return ml + plot_w * static_cast<double>(i) / static_cast<double>(n > 1 ? n - 1 : 1); };
    auto sy = [&](double v) { return mt + plot_h * (1.0 - (v - lo) / (hi - lo)); };

    static const char* palette[] = {"#2266aa", "#cc5511", "#228855", "#885599", "#aa2233", "#557788"};

    std::ofstream out = open_out(path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    out << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << num(sy(0.0)) << "\" x2=\"" << num(ml + plot_w) << "\" y2=\""
        << num(sy(0.0)) << "\" stroke=\"#999999\" stroke-dasharray=\"4 3\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << num(mt + plot_h)
        << "\" stroke=\"#333333\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << num(mt + plot_h) << "\" x2=\"" << num(ml + plot_w) << "\" y2=\""
        << num(mt + plot_h) << "\" stroke=\"#333333\"/>\n";
    out << "<text x=\"" << ml << "\" y=\"" << height - 8 << "\" font-family=\"sans-serif\" font-size=\"12\">global block</text>\n";
    out << "<text x=\"8\" y=\"" << mt + 12 << "\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(y_label)
        << "</text>\n";

    int color = 0;
    int legend_y = mt + 10;
    for (const auto& [label, values] : series) {
        const char* stroke = palette[color % 6];
        out << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"";
        for (size_t i = 0; i < values.size(); ++i)
            out << num(sx(i)) << ',' << num(sy(values[i])) << ' ';
        out << "\"/>\n";
        out << "<rect x=\"" << num(width - mr + 10) << "\" y=\"" << legend_y - 9 << "\" width=\"10\" height=\"10\" fill=\""
            << stroke << "\"/>\n";
        out << "<text x=\"" << num(width - mr + 24) << "\" y=\"" << legend_y << "\" font-family=\"sans-serif\" font-size=\"12\">"
            << xml_escape(label) << "</text>\n";
        legend_y += 16;
        ++color;
    }
    out << "</svg>\n";
}

void write_distribution_csv(const std::vector<std::pair<std::string, VerdictDistribution>>& rows,
                            const std::string& path) {
    std::ofstream out = open_out(path);
    out << "run_label,category,count,percentage\n";
    for (const auto& [label, dist] : rows)
        for (int i = 0; i < 5; ++i)
            out << label << ',' << kVerdictCategoryNames[static_cast<size_t>(i)] << ','
                << dist.counts[static_cast<size_t>(i)] << ',' << pct2(dist.percentage(i)) << '\n';
}

void write_distribution_svg(const std::vector<std::pair<std::string, VerdictDistribution>>& rows,
                            const std::string& path) {
    const int bar_w = 480, bar_h = 26, gap = 10, label_w = 220, legend_h = 30;
    const int width = label_w + bar_w + 20;
    const int height = legend_h + static_cast<int>(rows.size()) * (bar_h + gap) + 10;

    std::ofstream out = open_out(path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    out << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";

    int lx = 10;
    for (int i = 0; i < 5; ++i) {
        out << "<rect x=\"" << lx << "\" y=\"8\" width=\"10\" height=\"10\" fill=\"" << kCategoryColors[i] << "\"/>\n";
        out << "<text x=\"" << lx + 14 << "\" y=\"17\" font-family=\"sans-serif\" font-size=\"11\">"
            << kVerdictCategoryNames[static_cast<size_t>(i)] << "</text>\n";
        lx += 14 + 11 * static_cast<int>(std::string(kVerdictCategoryNames[static_cast<size_t>(i)]).size()) / 2 + 18;
    }

    int y = legend_h;
    for (const auto& [label, dist] : rows) {
        out << "<text x=\"10\" y=\"" << y + bar_h / 2 + 4 << "\" font-family=\"sans-serif\" font-size=\"12\">"
            << xml_escape(label) << "</text>\n";
        double x = label_w;
        for (int i = 0; i < 5; ++i) {
            const double w = bar_w * dist.percentage(i) / 100.0;
            if (w > 0.0)
                out << "<rect x=\"" << num(x) << "\" y=\"" << y << "\" width=\"" << num(w) << "\" height=\"" << bar_h
                    << "\" fill=\"" << kCategoryColors[i] << "\"/>\n";
            x += w;
        }
        out << "<rect x=\"" << label_w << "\" y=\"" << y << "\" width=\"" << bar_w << "\" height=\"" << bar_h
            << "\" fill=\"none\" stroke=\"#444444\"/>\n";
        y += bar_h + gap;
    }
    out << "</svg>\n";
}

std::vector<ComparisonCase> load_case_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read " + path);
    std::vector<ComparisonCase> cases;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        const json j = json::parse(line);
        ComparisonCase c;
        c.id = j.at("id").get<std::string>();
        c.prompt = j.at("prompt").get<std::string>();
        const auto& ents = j.at("entities");
        if (ents.size() != 2)
            throw std::runtime_error("case " + c.id + ": exactly two entities required");
        c.entities = {ents[0].get<std::string>(), ents[1].get<std::string>()};
        c.original_image = j.at("original").get<std::string>();
        c.candidate_image = j.at("candidate").get<std::string>();
        const auto& refs = j.at("references");
        if (refs.size() != 2)
            throw std::runtime_error("case " + c.id + ": exactly two reference images required");
        c.reference_images = {refs[0].get<std::string>(), refs[1].get<std::string>()};
        c.seed = j.at("seed").get<std::uint64_t>();
        cases.push_back(std::move(c));
    }
    return cases;
}

void save_case_manifest(const std::vector<ComparisonCase>& cases, const std::string& path) {
    std::ofstream out = open_out(path);
    for (const ComparisonCase& c : cases) {
        json j;
        j["id"] = c.id;
        j["prompt"] = c.prompt;
        j["entities"] = {c.entities[0], c.entities[1]};
        j["original"] = c.original_image;
        j["candidate"] = c.candidate_image;
        j["references"] = {c.reference_images[0], c.reference_images[1]};
        j["seed"] = c.seed;
        out << j.dump() << '\n';
    }
}

void append_verdict(const EvalVerdict& v, std::ostream& out) {
    json j;
    j["case_id"] = v.case_id;
    j["failed"] = v.failed;
    if (v.failed) {
        j["failed_stage"] = v.failed_stage;
    } else {
        j["label"] = to_string(v.label);
        j["raw_token"] = to_string(v.raw_token);
    }
    j["candidate_position"] = v.candidate_first ? "first" : "second";
    j["diff_knowledge"] = v.diff_knowledge;
    j["diff_image"] = v.diff_image;
    j["diff_merged"] = v.diff_merged;
    j["typicality_first"] = {v.typicality_first[0], v.typicality_first[1]};
    j["typicality_second"] = {v.typicality_second[0], v.typicality_second[1]};
    out << j.dump() << '\n';
}

void save_verdict_log(const std::vector<EvalVerdict>& verdicts, const std::string& path) {
    std::ofstream out = open_out(path);
    for (const EvalVerdict& v : verdicts)
        append_verdict(v, out);
}

std::vector<EvalVerdict> load_verdict_log(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read " + path);
    std::vector<EvalVerdict> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        const json j = json::parse(line);
        EvalVerdict v;
        v.case_id = j.at("case_id").get<std::string>();
        v.failed = j.at("failed").get<bool>();
        if (v.failed) {
            v.failed_stage = j.at("failed_stage").get<std::string>();
        } else {
            v.label = verdict_from_string(j.at("label").get<std::string>());
            const std::string tok = j.at("raw_token").get<std::string>();
            if (tok == "1min") v.raw_token = RankToken::OneMin;
            else if (tok == "1maj") v.raw_token = RankToken::OneMaj;
            else if (tok == "2min") v.raw_token = RankToken::TwoMin;
            else if (tok == "2maj") v.raw_token = RankToken::TwoMaj;
            else if (tok == "3") v.raw_token = RankToken::Three;
            else v.raw_token = RankToken::Unparseable;
        }
        v.candidate_first = j.at("candidate_position").get<std::string>() == "first";
        v.diff_knowledge = j.value("diff_knowledge", "");
        v.diff_image = j.value("diff_image", "");
        v.diff_merged = j.value("diff_merged", "");
        if (j.contains("typicality_first")) {
            v.typicality_first = {j["typicality_first"][0].get<std::string>(),
                                  j["typicality_first"][1].get<std::string>()};
        }
        if (j.contains("typicality_second")) {
            v.typicality_second = {j["typicality_second"][0].get<std::string>(),
                                   j["typicality_second"][1].get<std::string>()};
        }
        out.push_back(std::move(v));
    }
    return out;
}

} // namespace deleaker
