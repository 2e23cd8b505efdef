#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ngcnn {

enum class Polarity { negative = 0, positive = 1 };

std::string_view to_string(Polarity p);
std::optional<Polarity> parse_polarity(std::string_view s);

struct RawDocument {
    std::string id;
    std::string text;
    std::optional<Polarity> label;
};

using TokenSequence = std::vector<std::string>;

// Fixed-length document of vocabulary indices; padding is a suffix of zeros.
struct PaddedDocument {
    std::vector<std::uint32_t> token_ids;
};

// Emoticons kept as single tokens. They are matched case-insensitively and
// emitted in lowercase like every other token.
inline constexpr std::string_view kProtectedSmileys[] = {":-)", ":-(", ":)", ":(", ":d", ":p"};

// Stopwords removed by clean().
inline constexpr std::string_view kStopwords[] = {
    "the", "these", "those", "this", "of", "at", "that", "a", "for", "an", "as", "by"};

bool is_stopword(std::string_view token);
bool is_protected_smiley(std::string_view token);

// Strips HTML tags, keeps the protected smileys, splits on apostrophes and
// every other non-alphanumeric character, lowercases and drops stopwords.
// Only ASCII letters and digits are token characters.
TokenSequence clean(std::string_view text);

std::string join(const TokenSequence& tokens);

// Token -> index map with the reserved indices 0 (pad) and 1 (unknown).
class Vocabulary {
public:
    static constexpr std::uint32_t pad = 0;
    static constexpr std::uint32_t unknown = 1;
    static constexpr std::uint32_t first_word = 2;

    Vocabulary() = default;
    // Words get indices first_word, first_word + 1, ... in order; later
    // duplicates are ignored.
    explicit Vocabulary(std::span<const std::string> words);

    std::uint32_t lookup(std::string_view token) const;
    bool contains(std::string_view token) const;
    // Number of indices including the two reserved ones.
    std::size_t size() const { return words_.size() + first_word; }

private:
    struct Hash {
        using is_transparent = void;
        std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
    };
    std::unordered_map<std::string, std::uint32_t, Hash, std::equal_to<>> index_;
    std::vector<std::string> words_;
};

// Keeps the first n tokens or pads the tail with Vocabulary::pad.
PaddedDocument clip_pad(const TokenSequence& tokens, std::size_t n, const Vocabulary& vocab);

struct LengthStats {
    std::size_t min = 0;
    double mean = 0.0;
    std::size_t max = 0;
    std::size_t documents = 0;
};

LengthStats length_stats(std::span<const TokenSequence> corpus);

// Fraction of documents longer than n tokens.
double clipped_fraction(std::span<const TokenSequence> corpus, std::size_t n);

// Corpus readers. JSON-lines objects carry "id", "text" and an optional
// "label"; CSV needs the header id,text,label with RFC 4180 quoting. Errors
// name the offending line.
std::vector<RawDocument> read_jsonl_corpus(std::istream& in);
std::vector<RawDocument> read_csv_corpus(std::istream& in);
// Picks the reader by extension (.csv -> CSV, anything else JSON-lines).
std::vector<RawDocument> read_corpus_file(const std::string& path);

// Splits one CSV record. Returns false at end of input. Quoted fields may
// span lines; `line` is advanced past every physical line consumed.
bool read_csv_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line);

}  // namespace ngcnn
