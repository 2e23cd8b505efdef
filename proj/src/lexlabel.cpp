#include "ngcnn/lexlabel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include <nlohmann/json.hpp>

#include "ngcnn/error.hpp"

namespace ngcnn {

namespace {

bool in_scale(double x) { return std::isfinite(x) && x >= 1.0 && x <= 9.0; }

std::string lowercase(std::string s)
{
    for (auto& c : s) {
        if (c >= 'A' && c <= 'Z') {
            c = static_cast<char>(c - 'A' + 'a');
        }
    }
    return s;
}

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

double parse_norm(const std::string& field, std::size_t line, const char* column)
{
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(field, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != field.size()) {
        throw InputError("lexicon line " + std::to_string(line) + ": " + column + " '" + field + "' is not a number");
    }
    if (!in_scale(x)) {
        throw InputError("lexicon line " + std::to_string(line) + ": " + column + " " + field + " is outside [1, 9]");
    }
    return x;
}

}  // namespace

AffectLexicon::AffectLexicon(std::map<std::string, Norms> entries)
{
    for (auto& [word, norms] : entries) {
        if (word.empty() || word != lowercase(word)) {
            throw ArgumentError("lexicon word '" + word + "' must be non-empty and lowercase");
        }
        if (!in_scale(norms.valence) || !in_scale(norms.arousal)) {
            throw ArgumentError("lexicon norms for '" + word + "' are outside [1, 9]");
        }
        entries_.emplace(word, norms);
    }
}

const Norms* AffectLexicon::find(std::string_view word) const
{
    const auto it = entries_.find(word);
    return it == entries_.end() ? nullptr : &it->second;
}

AffectLexicon read_lexicon(std::istream& in)
{
    std::vector<std::string> fields;
    std::size_t line = 0;
    if (!read_csv_record(in, fields, line)) {
        throw InputError("lexicon is empty");
    }
    int word_col = -1, v_col = -1, a_col = -1;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        const std::string h = lowercase(trim(fields[i]));
        if (h == "word") word_col = static_cast<int>(i);
        else if (h == "valence") v_col = static_cast<int>(i);
        else if (h == "arousal") a_col = static_cast<int>(i);
    }
    if (word_col < 0 || v_col < 0 || a_col < 0) {
        throw InputError("lexicon header must contain word,valence,arousal");
    }
    const auto needed = static_cast<std::size_t>(std::max({word_col, v_col, a_col}));
    std::map<std::string, Norms> entries;
    while (read_csv_record(in, fields, line)) {
        if (fields.size() == 1 && trim(fields[0]).empty()) {
            continue;
        }
        if (fields.size() <= needed) {
            throw InputError("lexicon line " + std::to_string(line) + ": expected " + std::to_string(needed + 1) +
                             " fields, found " + std::to_string(fields.size()));
        }
        std::string word = lowercase(trim(fields[word_col]));
        if (word.empty()) {
            throw InputError("lexicon line " + std::to_string(line) + ": empty word");
        }
        Norms n{parse_norm(trim(fields[v_col]), line, "valence"), parse_norm(trim(fields[a_col]), line, "arousal"),
                false};
        if (!entries.emplace(word, n).second) {
            throw InputError("lexicon line " + std::to_string(line) + ": duplicate word '" + word + "'");
        }
    }
    return AffectLexicon(std::move(entries));
}

AffectLexicon read_lexicon_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError("cannot open lexicon " + path);
    }
    return read_lexicon(in);
}

void write_lexicon(std::ostream& out, const AffectLexicon& lexicon)
{
    out.precision(17);
    out << "word,valence,arousal\n";
    for (const auto& [word, n] : lexicon.entries()) {
        out << word << ',' << n.valence << ',' << n.arousal << '\n';
    }
}

AffectScore score(const TokenSequence& tokens, const AffectLexicon& lexicon)
{
    std::map<std::string_view, std::size_t> freq;
    for (const auto& t : tokens) {
        if (lexicon.find(t)) {
            ++freq[t];
        }
    }
    AffectScore s;
    if (freq.empty()) {
        s.v = s.a = std::numeric_limits<double>::quiet_NaN();
        return s;
    }
    double sv = 0.0, sa = 0.0;
    for (const auto& [word, f] : freq) {
        const Norms* n = lexicon.find(word);
        sv += n->valence * static_cast<double>(f);
        sa += n->arousal * static_cast<double>(f);
        s.hits += f;
    }
    s.v = sv / static_cast<double>(s.hits);
    s.a = sa / static_cast<double>(s.hits);
    return s;
}

double rescale(double x)
{
    if (!in_scale(x)) {
        throw ArgumentError("rescale: " + std::to_string(x) + " is outside [1, 9]");
    }
    return x - 5.0;
}

std::string_view to_string(MoodLabel label)
{
    switch (label) {
        case MoodLabel::happy: return "happy";
        case MoodLabel::angry: return "angry";
        case MoodLabel::sad: return "sad";
        case MoodLabel::relaxed: return "relaxed";
        case MoodLabel::unknown: break;
    }
    return "unknown";
}

std::optional<MoodLabel> parse_mood(std::string_view s)
{
    for (auto m : {MoodLabel::happy, MoodLabel::angry, MoodLabel::sad, MoodLabel::relaxed, MoodLabel::unknown}) {
        if (s == to_string(m)) {
            return m;
        }
    }
    if (s == "Q1") return MoodLabel::happy;
    if (s == "Q2") return MoodLabel::angry;
    if (s == "Q3") return MoodLabel::sad;
    if (s == "Q4") return MoodLabel::relaxed;
    return std::nullopt;
}

MoodLabel quadrant(const AffectScore& score, const QuadrantThresholds& t)
{
    if (!score.defined()) {
        return MoodLabel::unknown;
    }
    const double v = rescale(score.v);
    const double a = rescale(score.a);
    if (v > t.vt && a > t.at) return MoodLabel::happy;
    if (v < -t.vt && a > t.at) return MoodLabel::angry;
    if (v < -t.vt && a < -t.at) return MoodLabel::sad;
    if (v > t.vt && a < -t.at) return MoodLabel::relaxed;
    return MoodLabel::unknown;
}

std::string_view to_string(PolarityLabel label)
{
    switch (label) {
        case PolarityLabel::negative: return "negative";
        case PolarityLabel::positive: return "positive";
        case PolarityLabel::unknown: break;
    }
    return "unknown";
}

PolarityLabel polarity(const AffectScore& score, double vt)
{
    if (!score.defined()) {
        return PolarityLabel::unknown;
    }
    const double v = rescale(score.v);
    if (v > vt) return PolarityLabel::positive;
    if (v < -vt) return PolarityLabel::negative;
    return PolarityLabel::unknown;
}

AffectLexicon expand_lexicon(const AffectLexicon& base, std::span<const Synset> synsets,
                             const std::set<std::string, std::less<>>& affect_filter)
{
    std::map<std::string, Norms> out;
    for (const auto& [word, n] : base.entries()) {
        if (!n.derived) {
            out.emplace(word, n);
        }
    }
    // Words in any filtered synset may be kept as additions.
    std::set<std::string, std::less<>> allowed;
    for (const auto& s : synsets) {
        if (affect_filter.count(s.id)) {
            allowed.insert(s.words.begin(), s.words.end());
        }
    }
    // candidate -> set of contributing base words
    std::map<std::string, std::set<std::string>> sources;
    for (const auto& s : synsets) {
        for (const auto& member : s.words) {
            const auto it = out.find(member);
            if (it == out.end()) {
                continue;
            }
            for (const auto& other : s.words) {
                if (!out.count(other) && allowed.count(other)) {
                    sources[other].insert(member);
                }
            }
        }
    }
    for (const auto& [word, from] : sources) {
        double v = 0.0, a = 0.0;
        for (const auto& b : from) {
            v += out.at(b).valence;
            a += out.at(b).arousal;
        }
        const double k = static_cast<double>(from.size());
        out.emplace(word, Norms{v / k, a / k, true});
    }
    return AffectLexicon(std::move(out));
}

std::vector<Synset> read_synsets(std::istream& in)
{
    std::vector<Synset> out;
    std::set<std::string> ids;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (trim(line).empty()) {
            continue;
        }
        const std::string where = "synsets line " + std::to_string(number);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw InputError(where + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("words") ||
            !j["words"].is_array()) {
            throw InputError(where + ": expected {\"id\": string, \"words\": [string]}");
        }
        Synset s;
        s.id = j["id"].get<std::string>();
        if (!ids.insert(s.id).second) {
            throw InputError(where + ": duplicate synset id '" + s.id + "'");
        }
        for (const auto& w : j["words"]) {
            if (!w.is_string()) {
                throw InputError(where + ": words must be strings");
            }
            s.words.push_back(lowercase(trim(w.get<std::string>())));
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::set<std::string, std::less<>> read_filter(std::istream& in)
{
    std::set<std::string, std::less<>> out;
    std::string line;
    while (std::getline(in, line)) {
        std::string id = trim(line);
        if (!id.empty()) {
            out.insert(std::move(id));
        }
    }
    return out;
}

std::optional<CalibrationResult> calibrate(std::span<const GoldScore> corpus, const CalibrationOptions& options)
{
    if (corpus.empty()) {
        throw ArgumentError("calibrate: corpus is empty");
    }
    if (!(options.step > 0.0)) {
        throw ArgumentError("calibrate: step must be positive");
    }
    const double start = options.start.value_or(options.step);
    if (!(start >= 0.0)) {
        throw ArgumentError("calibrate: start must be non-negative");
    }
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (corpus[i].gold == MoodLabel::unknown) {
            throw ArgumentError("calibrate: document " + std::to_string(i) + " has no gold quadrant");
        }
    }

    std::optional<CalibrationResult> best;
    std::vector<CalibrationPoint> sweep;
    for (std::size_t i = 0;; ++i) {
        const double t = start + static_cast<double>(i) * options.step;
        if (t >= 4.0) {
            break;
        }
        CalibrationPoint p;
        p.threshold = t;
        for (const auto& doc : corpus) {
            const MoodLabel m = quadrant(doc.score, {t, t});
            if (m != MoodLabel::unknown) {
                ++p.labeled;
                p.matches += m == doc.gold ? 1 : 0;
            }
        }
        if (p.labeled < options.floor || p.labeled == 0) {
            break;
        }
        p.agreement = static_cast<double>(p.matches) / static_cast<double>(p.labeled);
        sweep.push_back(p);
        if (!best || p.agreement > best->agreement) {
            best = CalibrationResult{t, t, p.agreement, p.labeled, {}};
        }
    }
    if (best) {
        best->sweep = std::move(sweep);
    }
    return best;
}

}  // namespace ngcnn
