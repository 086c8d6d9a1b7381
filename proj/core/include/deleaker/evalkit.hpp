#pragma once

#include "deleaker/verdict.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace deleaker {

// One comparative evaluation task. Image handles are opaque strings
// (paths or ids); this module never interprets them.
struct ComparisonCase {
    std::string id;
    std::string prompt;
    std::array<std::string, 2> entities;
    std::string original_image;
    std::string candidate_image;
    std::array<std::string, 2> reference_images;
    std::uint64_t seed = 0;
};

enum class RankToken { OneMin, OneMaj, TwoMin, TwoMaj, Three, Unparseable };

std::string to_string(RankToken t);

struct EvalVerdict {
    std::string case_id;
    VerdictLabel label = VerdictLabel::NoChange;
    RankToken raw_token = RankToken::Unparseable;
    bool candidate_first = false; // position the candidate was shown in
    bool failed = false;
    std::string failed_stage; // set when failed

    // Intermediate step outputs, kept for provenance.
    std::string diff_knowledge;
    std::string diff_image;
    std::string diff_merged;
    std::array<std::string, 2> typicality_first;  // per entity, first-shown image
    std::array<std::string, 2> typicality_second; // per entity, second-shown image
};

// ---------------------------------------------------------------------------
// VLM client contract: an ordered list of text/image parts in, text out.

struct VlmPart {
    enum class Kind { Text, Image };
    Kind kind = Kind::Text;
    std::string content; // text, or the opaque image handle

    static VlmPart text(std::string t) { return {Kind::Text, std::move(t)}; }
    static VlmPart image(std::string handle) { return {Kind::Image, std::move(handle)}; }
};

struct VlmRequest {
    std::vector<VlmPart> parts;
    std::string tag; // routing metadata (stage/case), excluded from the digest
};

std::string request_digest(const VlmRequest& request);

class VlmClient {
public:
    virtual ~VlmClient() = default;
    // Must be safe to call from multiple threads. Throws on failure.
    virtual std::string complete(const VlmRequest& request) = 0;
};

// Thread-safe response cache keyed by (request digest, attempt index).
class ResponseCache {
public:
    std::optional<std::string> get(const std::string& digest, int attempt) const;
    void put(const std::string& digest, int attempt, const std::string& response);

    // JSONL persistence; load merges into the current contents.
    void load(const std::string& path);
    void save(const std::string& path) const;

    size_t size() const;

private:
    mutable std::mutex mutex_;
    std::map<std::pair<std::string, int>, std::string> entries_;
};

// ---------------------------------------------------------------------------
// Prompt construction. Templates are fixed data with {slot} placeholders;
// instantiation is byte-exact substitution and missing slots are an error.

enum class PromptStage {
    System,
    DiffKnowledge,   // step 1.1
    DiffImage,       // step 1.2
    DiffMerge,       // step 1.3
    TypicalityFirst, // step 2, first-shown image
    TypicalitySecond,// step 2, second-shown image
    Rank,            // step 3
};

const std::string& prompt_template(PromptStage stage);
std::string build_prompt(PromptStage stage, const std::map<std::string, std::string>& slots);

// Deterministic in seed. True: the candidate image is shown first.
bool randomize_order_candidate_first(std::uint64_t seed);

// Last rank token occurring after a case-insensitive "Rank:" marker.
RankToken parse_rank(const std::string& response);

// 2maj -> MajorImprove etc. when the candidate was shown second; mirrored
// when it was shown first; 3 is always NoChange.
VerdictLabel resolve_verdict(RankToken token, bool candidate_first);

// Runs the three-step pipeline (1.1 -> 1.2 -> 1.3 -> 2 x4 -> 3) against the
// client, retrying unparseable rank responses twice before marking the case
// FAILED. Client failures also mark the case FAILED with the stage recorded.
EvalVerdict run_comparison(VlmClient& client, const ComparisonCase& c, ResponseCache* cache = nullptr);

// ---------------------------------------------------------------------------
// Aggregation statistics.

// Modal label; ties resolve to the median ordinal, rounding halves toward
// NoChange. Throws on empty input.
VerdictLabel majority_vote(std::span<const VerdictLabel> labels);

// items x raters ordinal labels, values 1..k.
struct RaterMatrix {
    int items = 0;
    int raters = 0;
    int categories = 5;
    std::vector<int> labels; // row-major [item][rater]

    int at(int item, int rater) const { return labels[static_cast<size_t>(item) * raters + rater]; }
};

// Quadratic weighted Fleiss' kappa with weights 1 - ((a-b)/(k-1))^2.
// Throws "undefined agreement" when expected agreement is 1.
double fleiss_kappa_qw(const RaterMatrix& ratings);

// Pearson correlation of average ranks; ties receive their mean rank.
double spearman_rho(std::span<const double> x, std::span<const double> y);

} // namespace deleaker
