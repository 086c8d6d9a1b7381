#include "deleaker/evalkit.hpp"

#include "deleaker/digest.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace deleaker {

using nlohmann::json;

std::string to_string(RankToken t) {
    switch (t) {
    case RankToken::OneMin: return "1min";
    case RankToken::OneMaj: return "1maj";
    case RankToken::TwoMin: return "2min";
    case RankToken::TwoMaj: return "2maj";
    case RankToken::Three: return "3";
    case RankToken::Unparseable: return "unparseable";
    }
    throw std::logic_error("unknown rank token");
}

std::string request_digest(const VlmRequest& request) {
    std::string blob;
    for (const VlmPart& p : request.parts) {
        blob += (p.kind == VlmPart::Kind::Text) ? "T:" : "I:";
        blob += std::to_string(p.content.size());
        blob += ':';
        blob += p.content;
        blob += '|';
    }
    return sha256_hex(blob);
}

std::optional<std::string> ResponseCache::get(const std::string& digest, int attempt) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = entries_.find({digest, attempt});
    if (it == entries_.end())
        return std::nullopt;
    return it->second;
}

void ResponseCache::put(const std::string& digest, int attempt, const std::string& response) {
    std::lock_guard<std::mutex> lock(mutex_);
    entries_.insert_or_assign({digest, attempt}, response);
}

void ResponseCache::load(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("ResponseCache: cannot open " + path);
    std::lock_guard<std::mutex> lock(mutex_);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        const json j = json::parse(line);
        entries_.insert_or_assign({j.at("digest").get<std::string>(), j.at("attempt").get<int>()},
                                  j.at("response").get<std::string>());
    }
}

void ResponseCache::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("ResponseCache: cannot write " + path);
    std::lock_guard<std::mutex> lock(mutex_);
    for (const auto& [key, response] : entries_) {
        json j;
        j["digest"] = key.first;
        j["attempt"] = key.second;
        j["response"] = response;
        out << j.dump() << '\n';
    }
}

size_t ResponseCache::size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return entries_.size();
}

std::string build_prompt(PromptStage stage, const std::map<std::string, std::string>& slots) {
    const std::string& tmpl = prompt_template(stage);
    std::string out;
    out.reserve(tmpl.size());
    size_t pos = 0;
    while (pos < tmpl.size()) {
        const size_t open = tmpl.find('{', pos);
        if (open == std::string::npos) {
            out.append(tmpl, pos, std::string::npos);
            break;
        }
        out.append(tmpl, pos, open - pos);
        const size_t close = tmpl.find('}', open);
        if (close == std::string::npos)
            throw std::logic_error("build_prompt: unterminated placeholder");
        const std::string name = tmpl.substr(open + 1, close - open - 1);
        auto it = slots.find(name);
        if (it != slots.end()) {
            out += it->second;
        } else if (name == "first_image" || name == "second_image") {
            out += '{' + name + '}'; // image markers survive for the request assembler
        } else {
            throw std::invalid_argument("build_prompt: missing slot '" + name + "'");
        }
        pos = close + 1;
    }
    return out;
}

bool randomize_order_candidate_first(std::uint64_t seed) {
    std::uint64_t x = seed + 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    x ^= x >> 31;
    return (x & 1ull) != 0;
}

namespace {

bool ieq(char a, char b) { return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b)); }

bool matches_at(const std::string& s, size_t pos, const std::string& token) {
    if (pos + token.size() > s.size())
        return false;
    for (size_t i = 0; i < token.size(); ++i)
        if (!ieq(s[pos + i], token[i]))
            return false;
    const bool left_ok = pos == 0 || !std::isalnum(static_cast<unsigned char>(s[pos - 1]));
    const size_t after = pos + token.size();
    const bool right_ok = after >= s.size() || !std::isalnum(static_cast<unsigned char>(s[after]));
    return left_ok && right_ok;
}

size_t find_ci(const std::string& s, const std::string& needle, size_t from) {
    if (needle.empty() || s.size() < needle.size())
        return std::string::npos;
    for (size_t i = from; i + needle.size() <= s.size(); ++i) {
        bool ok = true;
        for (size_t j = 0; j < needle.size() && ok; ++j)
            ok = ieq(s[i + j], needle[j]);
        if (ok)
            return i;
    }
    return std::string::npos;
}

} // namespace

RankToken parse_rank(const std::string& response) {
    const size_t marker = find_ci(response, "rank:", 0);
    if (marker == std::string::npos)
        return RankToken::Unparseable;

    static const std::pair<const char*, RankToken> tokens[] = {
        {"1min", RankToken::OneMin}, {"1maj", RankToken::OneMaj}, {"2min", RankToken::TwoMin},
        {"2maj", RankToken::TwoMaj}, {"3", RankToken::Three},
    };
    RankToken last = RankToken::Unparseable;
    for (size_t pos = marker + 5; pos < response.size(); ++pos)
        for (const auto& [text, token] : tokens)
            if (matches_at(response, pos, text)) {
                last = token;
                break;
            }
    return last;
}

VerdictLabel resolve_verdict(RankToken token, bool candidate_first) {
    if (token == RankToken::Unparseable)
        throw std::invalid_argument("resolve_verdict: unparseable token");
    if (token == RankToken::Three)
        return VerdictLabel::NoChange;
    // "image 2 preferred" means the candidate won when it was shown second.
    const bool prefers_second = token == RankToken::TwoMin || token == RankToken::TwoMaj;
    const bool major = token == RankToken::OneMaj || token == RankToken::TwoMaj;
    const bool candidate_preferred = prefers_second != candidate_first;
    if (candidate_preferred)
        return major ? VerdictLabel::MajorImprove : VerdictLabel::MinorImprove;
    return major ? VerdictLabel::MajorDegrade : VerdictLabel::MinorDegrade;
}

EvalVerdict run_comparison(VlmClient& client, const ComparisonCase& c, ResponseCache* cache) {
    EvalVerdict v;
    v.case_id = c.id;
    v.candidate_first = randomize_order_candidate_first(c.seed);

    const std::string& e1 = c.entities[0];
    const std::string& e2 = c.entities[1];
    const std::string text_entities = e1 + " and " + e2;
    const std::string system = build_prompt(PromptStage::System, {});

    const std::string first_image = v.candidate_first ? c.candidate_image : c.original_image;
    const std::string second_image = v.candidate_first ? c.original_image : c.candidate_image;

    auto ask = [&](const VlmRequest& req, int attempt) {
        const std::string digest = request_digest(req);
        if (cache) {
            if (auto hit = cache->get(digest, attempt))
                return *hit;
        }
        std::string resp = client.complete(req);
        if (cache)
            cache->put(digest, attempt, resp);
        return resp;
    };
    auto fail = [&](const std::string& stage) {
        v.failed = true;
        v.failed_stage = stage;
        return v;
    };

    try {
        VlmRequest req;
        req.tag = "1.1|" + c.id + "|a0";
        req.parts = {VlmPart::text(system),
                     VlmPart::text(build_prompt(PromptStage::DiffKnowledge, {{"entity1", e1}, {"entity2", e2}}))};
        v.diff_knowledge = ask(req, 0);
    } catch (const std::exception&) {
        return fail("1.1");
    }

    try {
        VlmRequest req;
        req.tag = "1.2|" + c.id + "|a0";
        req.parts = {VlmPart::text(system),
                     VlmPart::text(build_prompt(PromptStage::DiffImage, {{"entity1", e1}, {"entity2", e2}})),
                     VlmPart::image(c.reference_images[0]), VlmPart::image(c.reference_images[1])};
        v.diff_image = ask(req, 0);
    } catch (const std::exception&) {
        return fail("1.2");
    }

    try {
        VlmRequest req;
        req.tag = "1.3|" + c.id + "|a0";
        req.parts = {VlmPart::text(system),
                     VlmPart::text(build_prompt(PromptStage::DiffMerge, {{"entity1", e1},
                                                                         {"entity2", e2},
                                                                         {"source1", v.diff_knowledge},
                                                                         {"source2", v.diff_image}}))};
        v.diff_merged = ask(req, 0);
    } catch (const std::exception&) {
        return fail("1.3");
    }

    try {
        for (int img = 0; img < 2; ++img) {
            const PromptStage stage = img == 0 ? PromptStage::TypicalityFirst : PromptStage::TypicalitySecond;
            const std::string& handle = img == 0 ? first_image : second_image;
            for (int ent = 0; ent < 2; ++ent) {
                VlmRequest req;
                req.tag = "2|" + c.id + "|i" + std::to_string(img) + "e" + std::to_string(ent) + "|a0";
                req.parts = {VlmPart::text(system), VlmPart::text(v.diff_merged),
                             VlmPart::text(build_prompt(stage, {{"text_entities", text_entities},
                                                                {"entity", c.entities[static_cast<size_t>(ent)]}})),
                             VlmPart::image(handle)};
                const std::string resp = ask(req, 0);
                if (img == 0)
                    v.typicality_first[static_cast<size_t>(ent)] = resp;
                else
                    v.typicality_second[static_cast<size_t>(ent)] = resp;
            }
        }
    } catch (const std::exception&) {
        return fail("2");
    }

    RankToken token = RankToken::Unparseable;
    try {
        const std::string rank_text =
            build_prompt(PromptStage::Rank,
                         {{"text_entities", text_entities},
                          {"first_inspection", v.typicality_first[0] + "\n" + v.typicality_first[1]},
                          {"second_inspection", v.typicality_second[0] + "\n" + v.typicality_second[1]}});
        const size_t img1 = rank_text.find("{first_image}");
        const size_t img2 = rank_text.find("{second_image}");
        if (img1 == std::string::npos || img2 == std::string::npos)
            throw std::logic_error("rank template lost its image markers");

        VlmRequest req;
        req.parts = {VlmPart::text(system), VlmPart::text(rank_text.substr(0, img1)), VlmPart::image(first_image),
                     VlmPart::text(rank_text.substr(img1 + 13, img2 - img1 - 13)), VlmPart::image(second_image),
                     VlmPart::text(rank_text.substr(img2 + 14))};

        for (int attempt = 0; attempt <= 2 && token == RankToken::Unparseable; ++attempt) {
            req.tag = "3|" + c.id + "|a" + std::to_string(attempt);
            token = parse_rank(ask(req, attempt));
        }
    } catch (const std::exception&) {
        return fail("3");
    }
    if (token == RankToken::Unparseable)
        return fail("3:unparseable");

    v.raw_token = token;
    v.label = resolve_verdict(token, v.candidate_first);
    return v;
}

VerdictLabel majority_vote(std::span<const VerdictLabel> labels) {
    if (labels.empty())
        throw std::invalid_argument("majority_vote: empty input");
    std::array<int, 6> counts{}; // indexed by ordinal 1..5
    for (VerdictLabel l : labels)
        ++counts[static_cast<size_t>(verdict_ordinal(l))];
    int best = 0;
    for (int o = 1; o <= 5; ++o)
        best = std::max(best, counts[static_cast<size_t>(o)]);
    int modal_ordinal = 0;
    int modal_labels = 0;
    for (int o = 1; o <= 5; ++o)
        if (counts[static_cast<size_t>(o)] == best) {
            ++modal_labels;
            modal_ordinal = o;
        }
    if (modal_labels == 1)
        return verdict_from_ordinal(modal_ordinal);

    std::vector<int> ordinals;
    ordinals.reserve(labels.size());
    for (VerdictLabel l : labels)
        ordinals.push_back(verdict_ordinal(l));
    std::sort(ordinals.begin(), ordinals.end());
    const size_t n = ordinals.size();
    double median;
    if (n % 2 == 1) {
        median = ordinals[n / 2];
    } else {
        median = (ordinals[n / 2 - 1] + ordinals[n / 2]) / 2.0;
    }
    int rounded;
    if (median == std::floor(median)) {
        rounded = static_cast<int>(median);
    } else {
        rounded = median > 3.0 ? static_cast<int>(std::floor(median)) : static_cast<int>(std::ceil(median));
    }
    return verdict_from_ordinal(rounded);
}

double fleiss_kappa_qw(const RaterMatrix& ratings) {
    if (ratings.items < 2 || ratings.raters < 2)
        throw std::invalid_argument("fleiss_kappa_qw: need >= 2 items and >= 2 raters");
    if (ratings.categories < 2)
        throw std::invalid_argument("fleiss_kappa_qw: need >= 2 categories");
    if (static_cast<int>(ratings.labels.size()) != ratings.items * ratings.raters)
        throw std::invalid_argument("fleiss_kappa_qw: matrix must be rectangular");

    const int k = ratings.categories;
    const int n = ratings.items;
    const int r = ratings.raters;
    auto weight = [k](int a, int b) {
        const double d = static_cast<double>(a - b) / static_cast<double>(k - 1);
        return 1.0 - d * d;
    };

    std::vector<double> marginal(static_cast<size_t>(k) + 1, 0.0);
    std::vector<int> item_counts(static_cast<size_t>(k) + 1, 0);
    double observed = 0.0;
    for (int i = 0; i < n; ++i) {
        std::fill(item_counts.begin(), item_counts.end(), 0);
        for (int j = 0; j < r; ++j) {
            const int label = ratings.at(i, j);
            if (label < 1 || label > k)
                throw std::invalid_argument("fleiss_kappa_qw: label outside the scale");
            ++item_counts[static_cast<size_t>(label)];
            marginal[static_cast<size_t>(label)] += 1.0;
        }
        for (int a = 1; a <= k; ++a)
            for (int b = 1; b <= k; ++b) {
                const double pairs = static_cast<double>(item_counts[static_cast<size_t>(a)]) *
                                     (item_counts[static_cast<size_t>(b)] - (a == b ? 1 : 0));
                observed += pairs * weight(a, b);
            }
    }
    observed /= static_cast<double>(n) * r * (r - 1);

    for (double& m : marginal)
        m /= static_cast<double>(n) * r;
    double expected = 0.0;
    for (int a = 1; a <= k; ++a)
        for (int b = 1; b <= k; ++b)
            expected += marginal[static_cast<size_t>(a)] * marginal[static_cast<size_t>(b)] * weight(a, b);

    if (std::fabs(1.0 - expected) < 1e-12)
        throw std::runtime_error("fleiss_kappa_qw: undefined agreement (expected agreement is 1)");
    return (observed - expected) / (1.0 - expected);
}

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
    const size_t n = x.size();
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i)
        order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]])
            ++j;
        const double mean_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (size_t t = i; t <= j; ++t)
            ranks[order[t]] = mean_rank;
        i = j + 1;
    }
    return ranks;
}

} // namespace

double spearman_rho(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw std::invalid_argument("spearman_rho: length mismatch");
    if (x.size() < 3)
        throw std::invalid_argument("spearman_rho: need at least 3 samples");
    const std::vector<double> rx = average_ranks(x);
    const std::vector<double> ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < rx.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < rx.size(); ++i) {
        const double dx = rx[i] - mx;
        const double dy = ry[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw std::invalid_argument("spearman_rho: zero variance");
    return sxy / std::sqrt(sxx * syy);
}

} // namespace deleaker
