#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ngcnn/embeddings.hpp"

namespace ngcnn {

// Lowercase, trim, collapse internal whitespace runs to one space.
std::string normalize_tag(std::string_view tag);

// Four emotion clusters of tags, index 0..3 = Q1 happy, Q2 angry, Q3 sad,
// Q4 relaxed.
class Folksonomy {
public:
    // The default 10-tags-per-cluster vocabulary.
    Folksonomy();
    // Tags are normalized; throws ArgumentError for an empty cluster or a
    // tag in two clusters.
    explicit Folksonomy(std::array<std::vector<std::string>, 4> clusters);

    // {"Q1": [...], "Q2": [...], "Q3": [...], "Q4": [...]}
    static Folksonomy from_json(const nlohmann::json& j);
    static Folksonomy load_file(const std::string& path);

    const std::vector<std::string>& cluster(std::size_t q) const { return clusters_.at(q); }
    std::optional<std::size_t> quadrant_of(std::string_view tag) const;

private:
    std::array<std::vector<std::string>, 4> clusters_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

inline constexpr std::array<std::string_view, 4> kQuadrantNames = {"Q1", "Q2", "Q3", "Q4"};

struct TrackTags {
    std::string track_id;
    std::vector<std::string> tags;
};

using QuadrantCounts = std::array<std::size_t, 4>;

QuadrantCounts count(const TrackTags& track, const Folksonomy& f);

// A tier accepts when min <= X <= max and others <= max_others.
struct Tier {
    std::size_t min;
    std::optional<std::size_t> max;
    std::size_t max_others;
};

enum class Rule { four_quadrant, polarity };

std::string_view to_string(Rule r);
std::optional<Rule> parse_rule(std::string_view s);

const std::vector<Tier>& tiers(Rule r);

// Index of the first tier accepting (x, others), if any.
std::optional<std::size_t> matching_tier(Rule r, std::size_t x, std::size_t others);

// Quadrant index 0..3, or nullopt for none (no quadrant or several qualify).
std::optional<std::size_t> annotate4Q(const QuadrantCounts& c);

// 1 = positive (Q1 + Q4), 0 = negative (Q2 + Q3), nullopt for none.
std::optional<int> annotatePN(const QuadrantCounts& c);

std::string label_name(Rule r, const QuadrantCounts& c);

struct Fraction {
    std::uint64_t num = 0;
    std::uint64_t den = 1;

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    // Lowest terms, e.g. "14/17".
    std::string str() const;
    friend bool operator<(const Fraction& a, const Fraction& b) { return a.num * b.den < b.num * a.den; }
};

struct TierAudit {
    std::size_t tier = 0;  // 1-based
    std::size_t accepted = 0;
    Fraction min_purity;
    QuadrantCounts witness{};
};

struct AuditReport {
    Rule rule = Rule::four_quadrant;
    std::size_t max_total = 0;
    std::size_t configurations = 0;
    std::size_t accepted = 0;
    std::vector<TierAudit> per_tier;  // tiers that accepted anything
    Fraction overall;
    QuadrantCounts overall_witness{};
    // Adding one tag of the winning side to an accepted configuration:
    // moves it to a different label (violations) or to none.
    std::size_t monotonic_violations = 0;
    std::size_t monotonic_to_none = 0;
    // (x, others) pairs no tier accepts although (x, fewer others) and
    // (more x, others) are both accepted, e.g. 5 with 1 other under 4Q.
    std::vector<std::pair<std::size_t, std::size_t>> gaps;
    // Winning counts that fall in the range of two tiers allowing other
    // tags, e.g. 16 under PN.
    std::vector<std::size_t> overlaps;
};

// Enumerates every count vector with 1 <= total <= max_total. Throws
// ArgumentError when max_total < 20.
AuditReport purity_audit(Rule rule, std::size_t max_total);

nlohmann::json audit_json(const AuditReport& r);

struct AgreementResult {
    std::vector<std::string> labels;                  // row/column order
    std::vector<std::vector<std::size_t>> matrix;     // row = reference
    std::size_t shared = 0;
    double overall = 0.0;
};

// Over ids present in both maps. Labels are ordered as given in `order`,
// followed by any other labels in sorted order. Throws ArgumentError when the
// maps share no id.
AgreementResult agreement(const std::map<std::string, std::string>& reference,
                          const std::map<std::string, std::string>& candidate,
                          const std::vector<std::string>& order = {});

struct SimilarityResult {
    double value = 0.0;
    std::size_t pairs = 0;
    std::vector<std::string> missing;
};

// Mean cosine over distinct in-cluster pairs. Needs two tags in the table.
SimilarityResult intra_similarity(const std::vector<std::string>& cluster, const EmbeddingTable& table);
// Mean cosine over all cross pairs. Needs one tag of each cluster.
SimilarityResult inter_similarity(const std::vector<std::string>& a, const std::vector<std::string>& b,
                                  const EmbeddingTable& table);

struct PairSimilarity {
    std::size_t a = 0, b = 0;
    double value = 0.0;
};

// All six cluster pairs, most similar first.
std::vector<PairSimilarity> ranked_inter_similarities(const Folksonomy& f, const EmbeddingTable& table);

// JSON lines {"track_id": string, "tags": [string]}; tags are normalized.
std::vector<TrackTags> read_track_tags(std::istream& in);

nlohmann::json annotation_json(const TrackTags& track, const QuadrantCounts& c, Rule rule);

}  // namespace ngcnn
