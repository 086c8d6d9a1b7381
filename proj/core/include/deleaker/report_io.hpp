#pragma once

#include "deleaker/analysis.hpp"
#include "deleaker/evalkit.hpp"

#include <string>
#include <vector>

namespace deleaker {

// CSV schema: run_label,step,block,pair,channel,value with UTF-8, LF line
// endings and '.' decimal separator.
void write_leakage_csv(const std::vector<LeakageTrace>& traces, const std::string& path);

// run_label,step,block,pair,channel,value,floored for relative differences;
// pair is "all" (the difference runs over the pair mean).
void write_relative_difference_csv(const LeakageTrace& orig, const LeakageTrace& mitigated,
                                   const std::vector<RelDiffCell>& cells, const std::string& path);

// Leakage-progression chart: one polyline per trace over global blocks.
void write_progression_svg(const std::vector<std::pair<std::string, std::vector<double>>>& series,
                           const std::string& y_label, const std::string& path);

// Distribution report: run_label,category,count,percentage rows (2-decimal
// percentages, stable category order).
void write_distribution_csv(const std::vector<std::pair<std::string, VerdictDistribution>>& rows,
                            const std::string& path);

// Standalone stacked-bar SVG, one bar per row: five segments with widths
// proportional to category percentages and fixed category colors.
void write_distribution_svg(const std::vector<std::pair<std::string, VerdictDistribution>>& rows,
                            const std::string& path);

// Comparison cases as JSONL ({id, prompt, entities, original, candidate,
// references, seed}).
std::vector<ComparisonCase> load_case_manifest(const std::string& path);
void save_case_manifest(const std::vector<ComparisonCase>& cases, const std::string& path);

// Verdict log: append-only JSONL, one record per case including all
// intermediate texts.
void append_verdict(const EvalVerdict& verdict, std::ostream& out);
void save_verdict_log(const std::vector<EvalVerdict>& verdicts, const std::string& path);
std::vector<EvalVerdict> load_verdict_log(const std::string& path);

} // namespace deleaker
