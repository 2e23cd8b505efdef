#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ngcnn/textprep.hpp"

namespace ngcnn {

struct Norms {
    double valence = 5.0;
    double arousal = 5.0;
    // Set for words added by expand_lexicon(); expansion only starts from
    // entries where this is false.
    bool derived = false;

    friend bool operator==(const Norms&, const Norms&) = default;
};

// Word -> valence/arousal norms on the 1..9 scale.
class AffectLexicon {
public:
    AffectLexicon() = default;
    // Throws ArgumentError for norms outside [1, 9] or non-lowercase words.
    explicit AffectLexicon(std::map<std::string, Norms> entries);

    const Norms* find(std::string_view word) const;
    std::size_t size() const { return entries_.size(); }
    const std::map<std::string, Norms, std::less<>>& entries() const { return entries_; }

    friend bool operator==(const AffectLexicon&, const AffectLexicon&) = default;

private:
    std::map<std::string, Norms, std::less<>> entries_;
};

// CSV with header word,valence,arousal. Words are lowercased; a repeated
// word is an error.
AffectLexicon read_lexicon(std::istream& in);
AffectLexicon read_lexicon_file(const std::string& path);
void write_lexicon(std::ostream& out, const AffectLexicon& lexicon);

struct AffectScore {
    double v = 0.0;  // undefined (NaN) when hits == 0
    double a = 0.0;
    std::size_t hits = 0;

    bool defined() const { return hits > 0; }
};

// Frequency-weighted mean of the norms of the lexicon words in tokens.
AffectScore score(const TokenSequence& tokens, const AffectLexicon& lexicon);

// Maps the 1..9 scale onto -4..4. Throws ArgumentError outside [1, 9].
double rescale(double x);

struct QuadrantThresholds {
    double vt = 0.0;
    double at = 0.0;
};

enum class MoodLabel { happy, angry, sad, relaxed, unknown };

std::string_view to_string(MoodLabel label);
std::optional<MoodLabel> parse_mood(std::string_view s);

// Strict comparisons: a point on a threshold is unknown.
MoodLabel quadrant(const AffectScore& score, const QuadrantThresholds& t);

enum class PolarityLabel { negative, positive, unknown };

std::string_view to_string(PolarityLabel label);

PolarityLabel polarity(const AffectScore& score, double vt);

struct Synset {
    std::string id;
    std::vector<std::string> words;
};

// Adds synset co-members of each base word, keeps the additions that belong
// to a synset in affect_filter, and averages norms reached from several base
// words. Base (non-derived) entries are never changed.
AffectLexicon expand_lexicon(const AffectLexicon& base, std::span<const Synset> synsets,
                             const std::set<std::string, std::less<>>& affect_filter);

std::vector<Synset> read_synsets(std::istream& in);
std::set<std::string, std::less<>> read_filter(std::istream& in);

struct GoldScore {
    AffectScore score;
    MoodLabel gold = MoodLabel::unknown;
};

struct CalibrationPoint {
    double threshold = 0.0;
    std::size_t labeled = 0;
    std::size_t matches = 0;
    double agreement = 0.0;
};

struct CalibrationResult {
    double vt = 0.0;
    double at = 0.0;
    double agreement = 0.0;
    std::size_t labeled_count = 0;
    std::vector<CalibrationPoint> sweep;
};

struct CalibrationOptions {
    double step = 0.01;
    // First threshold tried; defaults to step.
    std::optional<double> start;
    std::size_t floor = 50;
};

// Sweeps Vt = At = start, start + step, ... while at least `floor` documents
// get a directional label and the threshold stays below 4. Agreement counts
// only labeled documents; ties go to the smaller threshold. Returns nullopt
// when the first threshold already labels fewer than `floor` documents.
// Throws ArgumentError for an empty corpus, step <= 0 or an unknown gold.
std::optional<CalibrationResult> calibrate(std::span<const GoldScore> corpus, const CalibrationOptions& options);

}  // namespace ngcnn
