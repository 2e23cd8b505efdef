#include "ngcnn/tagann.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "ngcnn/error.hpp"

namespace ngcnn {

std::string normalize_tag(std::string_view tag)
{
    std::string out;
    bool pending_space = false;
    for (char ch : tag) {
        if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '\f' || ch == '\v') {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out += ' ';
            pending_space = false;
        }
        out += (ch >= 'A' && ch <= 'Z') ? static_cast<char>(ch - 'A' + 'a') : ch;
    }
    return out;
}

namespace {

std::array<std::vector<std::string>, 4> default_clusters()
{
    return {{
        {"happy", "happiness", "bright", "joyous", "cheerful", "fun", "humorous", "merry", "exciting", "silly"},
        {"angry", "aggressive", "fierce", "outrageous", "rebellious", "anxious", "fiery", "tense", "anger",
         "hostile"},
        {"sad", "bittersweet", "bitter", "sadness", "depressing", "tragic", "gloomy", "miserable", "funeral",
         "sorrow"},
        {"relaxed", "tender", "soothing", "mellow", "gentle", "peaceful", "soft", "calm", "quiet", "delicate"},
    }};
}

}  // namespace

Folksonomy::Folksonomy() : Folksonomy(default_clusters()) {}

Folksonomy::Folksonomy(std::array<std::vector<std::string>, 4> clusters)
{
    for (std::size_t q = 0; q < 4; ++q) {
        for (const auto& raw : clusters[q]) {
            std::string tag = normalize_tag(raw);
            if (tag.empty()) {
                throw ArgumentError("folksonomy cluster " + std::string(kQuadrantNames[q]) + " has an empty tag");
            }
            const auto [it, inserted] = index_.emplace(tag, q);
            if (!inserted) {
                if (it->second != q) {
                    throw ArgumentError("folksonomy tag '" + tag + "' appears in " +
                                        std::string(kQuadrantNames[it->second]) + " and " +
                                        std::string(kQuadrantNames[q]));
                }
                continue;
            }
            clusters_[q].push_back(std::move(tag));
        }
        if (clusters_[q].empty()) {
            throw ArgumentError("folksonomy cluster " + std::string(kQuadrantNames[q]) + " is empty");
        }
    }
}

Folksonomy Folksonomy::from_json(const nlohmann::json& j)
{
    if (!j.is_object()) {
        throw InputError("folksonomy must be a JSON object with keys Q1..Q4");
    }
    std::array<std::vector<std::string>, 4> clusters;
    for (std::size_t q = 0; q < 4; ++q) {
        const std::string key(kQuadrantNames[q]);
        if (!j.contains(key) || !j[key].is_array()) {
            throw InputError("folksonomy: missing array " + key);
        }
        for (const auto& t : j[key]) {
            if (!t.is_string()) {
                throw InputError("folksonomy: " + key + " contains a non-string tag");
            }
            clusters[q].push_back(t.get<std::string>());
        }
    }
    return Folksonomy(std::move(clusters));
}

Folksonomy Folksonomy::load_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open folksonomy " + path);
    }
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError("folksonomy " + path + ": " + e.what());
    }
}

std::optional<std::size_t> Folksonomy::quadrant_of(std::string_view tag) const
{
    const auto it = index_.find(tag);
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

QuadrantCounts count(const TrackTags& track, const Folksonomy& f)
{
    QuadrantCounts c{};
    for (const auto& tag : track.tags) {
        if (const auto q = f.quadrant_of(tag)) {
            ++c[*q];
        }
    }
    return c;
}

std::string Fraction::str() const
{
    const std::uint64_t g = std::gcd(num, den);
    return std::to_string(g ? num / g : num) + "/" + std::to_string(g ? den / g : den);
}

std::string_view to_string(Rule r)
{
    return r == Rule::four_quadrant ? "4q" : "pn";
}

std::optional<Rule> parse_rule(std::string_view s)
{
    if (s == "4q" || s == "4Q") return Rule::four_quadrant;
    if (s == "pn" || s == "PN") return Rule::polarity;
    return std::nullopt;
}

const std::vector<Tier>& tiers(Rule r)
{
    static const std::vector<Tier> quadrant_tiers = {
        {4, std::nullopt, 0}, {6, 8, 1}, {9, 13, 2}, {14, std::nullopt, 3}};
    static const std::vector<Tier> polarity_tiers = {
        {5, std::nullopt, 0}, {8, 11, 1}, {12, 16, 2}, {16, std::nullopt, 3}};
    return r == Rule::four_quadrant ? quadrant_tiers : polarity_tiers;
}

std::optional<std::size_t> matching_tier(Rule r, std::size_t x, std::size_t others)
{
    const auto& ts = tiers(r);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        if (x >= ts[i].min && (!ts[i].max || x <= *ts[i].max) && others <= ts[i].max_others) {
            return i;
        }
    }
    return std::nullopt;
}

std::optional<std::size_t> annotate4Q(const QuadrantCounts& c)
{
    const std::size_t total = c[0] + c[1] + c[2] + c[3];
    std::optional<std::size_t> found;
    for (std::size_t q = 0; q < 4; ++q) {
        if (matching_tier(Rule::four_quadrant, c[q], total - c[q])) {
            if (found) {
                return std::nullopt;
            }
            found = q;
        }
    }
    return found;
}

std::optional<int> annotatePN(const QuadrantCounts& c)
{
    const std::size_t p = c[0] + c[3];
    const std::size_t n = c[1] + c[2];
    const bool pos = matching_tier(Rule::polarity, p, n).has_value();
    const bool neg = matching_tier(Rule::polarity, n, p).has_value();
    if (pos == neg) {
        return std::nullopt;
    }
    return pos ? 1 : 0;
}

std::string label_name(Rule r, const QuadrantCounts& c)
{
    if (r == Rule::four_quadrant) {
        const auto q = annotate4Q(c);
        return q ? std::string(kQuadrantNames[*q]) : "none";
    }
    const auto p = annotatePN(c);
    return p ? (*p ? "positive" : "negative") : "none";
}

namespace {

// Winning side's tag count and an index whose increment adds one winning tag.
struct Decision {
    bool accepted = false;
    int label = -1;
    std::size_t x = 0;
    std::size_t grow = 0;
};

Decision decide(Rule rule, const QuadrantCounts& c)
{
    Decision d;
    if (rule == Rule::four_quadrant) {
        if (const auto q = annotate4Q(c)) {
            d = {true, static_cast<int>(*q), c[*q], *q};
        }
    } else if (const auto p = annotatePN(c)) {
        d = {true, *p, *p ? c[0] + c[3] : c[1] + c[2], *p ? std::size_t{0} : std::size_t{1}};
    }
    return d;
}

}  // namespace

AuditReport purity_audit(Rule rule, std::size_t max_total)
{
    if (max_total < 20) {
        throw ArgumentError("purity audit needs max_total >= 20");
    }
    AuditReport r;
    r.rule = rule;
    r.max_total = max_total;
    const std::size_t tier_count = tiers(rule).size();
    std::vector<TierAudit> per(tier_count);
    for (std::size_t t = 0; t < tier_count; ++t) {
        per[t].tier = t + 1;
    }
    bool have_overall = false;

    QuadrantCounts c{};
    for (c[0] = 0; c[0] <= max_total; ++c[0]) {
        for (c[1] = 0; c[0] + c[1] <= max_total; ++c[1]) {
            for (c[2] = 0; c[0] + c[1] + c[2] <= max_total; ++c[2]) {
                for (c[3] = 0; c[0] + c[1] + c[2] + c[3] <= max_total; ++c[3]) {
                    const std::size_t total = c[0] + c[1] + c[2] + c[3];
                    if (total == 0) {
                        continue;
                    }
                    ++r.configurations;
                    const Decision d = decide(rule, c);
                    if (!d.accepted) {
                        continue;
                    }
                    ++r.accepted;
                    const std::size_t tier = *matching_tier(rule, d.x, total - d.x);
                    const Fraction purity{d.x, total};
                    TierAudit& ta = per[tier];
                    if (ta.accepted == 0 || purity < ta.min_purity) {
                        ta.min_purity = purity;
                        ta.witness = c;
                    }
                    ++ta.accepted;
                    if (!have_overall || purity < r.overall) {
                        r.overall = purity;
                        r.overall_witness = c;
                        have_overall = true;
                    }
                    if (total < max_total) {
                        QuadrantCounts next = c;
                        ++next[d.grow];
                        const Decision after = decide(rule, next);
                        if (!after.accepted) {
                            ++r.monotonic_to_none;
                        } else if (after.label != d.label) {
                            ++r.monotonic_violations;
                        }
                    }
                }
            }
        }
    }
    for (auto& t : per) {
        if (t.accepted > 0) {
            r.per_tier.push_back(t);
        }
    }

    auto accepts = [&](std::size_t x, std::size_t o) { return matching_tier(rule, x, o).has_value(); };
    const auto& ts = tiers(rule);
    for (std::size_t o = 1; o <= max_total; ++o) {
        for (std::size_t x = 1; x + o <= max_total; ++x) {
            if (accepts(x, o)) {
                continue;
            }
            bool fewer_others = false;
            for (std::size_t f = 0; f < o && !fewer_others; ++f) {
                fewer_others = accepts(x, f);
            }
            bool more_x = false;
            for (std::size_t y = x + 1; y + o <= max_total && !more_x; ++y) {
                more_x = accepts(y, o);
            }
            if (fewer_others && more_x) {
                r.gaps.emplace_back(x, o);
            }
        }
    }
    for (std::size_t x = 1; x <= max_total; ++x) {
        std::size_t ranges = 0;
        for (const auto& t : ts) {
            ranges += t.max_others > 0 && x >= t.min && (!t.max || x <= *t.max);
        }
        if (ranges > 1) {
            r.overlaps.push_back(x);
        }
    }
    return r;
}

nlohmann::json audit_json(const AuditReport& r)
{
    nlohmann::json tiers_json = nlohmann::json::array();
    for (const auto& t : r.per_tier) {
        tiers_json.push_back({{"tier", t.tier},
                              {"accepted", t.accepted},
                              {"min_purity", t.min_purity.str()},
                              {"min_purity_value", t.min_purity.value()},
                              {"witness", t.witness}});
    }
    return {{"rule", to_string(r.rule)},
            {"max_total", r.max_total},
            {"configurations", r.configurations},
            {"accepted", r.accepted},
            {"tiers", tiers_json},
            {"overall_min_purity", r.overall.str()},
            {"overall_min_purity_value", r.overall.value()},
            {"overall_witness", r.overall_witness},
            {"monotonic_violations", r.monotonic_violations},
            {"monotonic_to_none", r.monotonic_to_none},
            {"gaps", r.gaps},
            {"overlaps", r.overlaps}};
}

AgreementResult agreement(const std::map<std::string, std::string>& reference,
                          const std::map<std::string, std::string>& candidate, const std::vector<std::string>& order)
{
    std::vector<std::pair<const std::string*, const std::string*>> shared;
    for (const auto& [id, label] : reference) {
        const auto it = candidate.find(id);
        if (it != candidate.end()) {
            shared.emplace_back(&label, &it->second);
        }
    }
    if (shared.empty()) {
        throw ArgumentError("agreement: the two label maps share no id");
    }
    AgreementResult r;
    r.labels = order;
    std::set<std::string> extra;
    for (const auto& [a, b] : shared) {
        extra.insert(*a);
        extra.insert(*b);
    }
    for (const auto& l : extra) {
        if (std::find(r.labels.begin(), r.labels.end(), l) == r.labels.end()) {
            r.labels.push_back(l);
        }
    }
    auto pos = [&](const std::string& l) {
        return static_cast<std::size_t>(std::find(r.labels.begin(), r.labels.end(), l) - r.labels.begin());
    };
    r.matrix.assign(r.labels.size(), std::vector<std::size_t>(r.labels.size(), 0));
    std::size_t diagonal = 0;
    for (const auto& [a, b] : shared) {
        ++r.matrix[pos(*a)][pos(*b)];
        diagonal += *a == *b ? 1 : 0;
    }
    r.shared = shared.size();
    r.overall = static_cast<double>(diagonal) / static_cast<double>(r.shared);
    return r;
}

namespace {

std::vector<std::span<const float>> resolve(const std::vector<std::string>& tags, const EmbeddingTable& table,
                                            std::vector<std::string>& missing)
{
    std::vector<std::span<const float>> out;
    for (const auto& t : tags) {
        if (const auto r = table.row_of(t)) {
            out.push_back(table.row(*r));
        } else {
            missing.push_back(t);
        }
    }
    return out;
}

std::string join_list(const std::vector<std::string>& v)
{
    std::string s;
    for (const auto& x : v) {
        s += s.empty() ? x : ", " + x;
    }
    return s.empty() ? "(none)" : s;
}

}  // namespace

SimilarityResult intra_similarity(const std::vector<std::string>& cluster, const EmbeddingTable& table)
{
    SimilarityResult r;
    const auto vecs = resolve(cluster, table, r.missing);
    if (vecs.size() < 2) {
        throw ArgumentError("intra-cluster similarity needs two tags in the table; missing: " + join_list(r.missing));
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < vecs.size(); ++i) {
        for (std::size_t j = i + 1; j < vecs.size(); ++j) {
            sum += cosine(vecs[i], vecs[j]);
            ++r.pairs;
        }
    }
    r.value = sum / static_cast<double>(r.pairs);
    return r;
}

SimilarityResult inter_similarity(const std::vector<std::string>& a, const std::vector<std::string>& b,
                                  const EmbeddingTable& table)
{
    SimilarityResult r;
    const auto va = resolve(a, table, r.missing);
    const auto vb = resolve(b, table, r.missing);
    if (va.empty() || vb.empty()) {
        throw ArgumentError("inter-cluster similarity needs a tag of each cluster in the table; missing: " +
                            join_list(r.missing));
    }
    double sum = 0.0;
    for (const auto& x : va) {
        for (const auto& y : vb) {
            sum += cosine(x, y);
            ++r.pairs;
        }
    }
    r.value = sum / static_cast<double>(r.pairs);
    return r;
}

std::vector<PairSimilarity> ranked_inter_similarities(const Folksonomy& f, const EmbeddingTable& table)
{
    std::vector<PairSimilarity> out;
    for (std::size_t a = 0; a < 4; ++a) {
        for (std::size_t b = a + 1; b < 4; ++b) {
            out.push_back({a, b, inter_similarity(f.cluster(a), f.cluster(b), table).value});
        }
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const PairSimilarity& x, const PairSimilarity& y) { return x.value > y.value; });
    return out;
}

std::vector<TrackTags> read_track_tags(std::istream& in)
{
    std::vector<TrackTags> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        const std::string where = "tags line " + std::to_string(number);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw InputError(where + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("track_id") || !j["track_id"].is_string() || !j.contains("tags") ||
            !j["tags"].is_array()) {
            throw InputError(where + ": expected {\"track_id\": string, \"tags\": [string]}");
        }
        TrackTags t;
        t.track_id = j["track_id"].get<std::string>();
        for (const auto& tag : j["tags"]) {
            if (!tag.is_string()) {
                throw InputError(where + ": tags must be strings");
            }
            std::string n = normalize_tag(tag.get<std::string>());
            if (!n.empty()) {
                t.tags.push_back(std::move(n));
            }
        }
        out.push_back(std::move(t));
    }
    return out;
}

nlohmann::json annotation_json(const TrackTags& track, const QuadrantCounts& c, Rule rule)
{
    return {{"track_id", track.track_id}, {"counts", c}, {"label", label_name(rule, c)}};
}

}  // namespace ngcnn
