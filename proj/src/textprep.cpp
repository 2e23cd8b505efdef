#include "ngcnn/textprep.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "ngcnn/error.hpp"

namespace ngcnn {

namespace {

bool is_ascii_alnum(char c)
{
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

bool is_ascii_alpha(char c)
{
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

char ascii_lower(char c)
{
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

// Replaces every tag-looking span <x...>, </x...>, <!...> with a space.
std::string strip_html(std::string_view text)
{
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '<' && i + 1 < text.size()) {
            const char next = text[i + 1];
            const bool opens_tag = is_ascii_alpha(next) || next == '!' ||
                                   (next == '/' && i + 2 < text.size() && is_ascii_alpha(text[i + 2]));
            if (opens_tag) {
                const auto close = text.find('>', i + 1);
                if (close != std::string_view::npos) {
                    out.push_back(' ');
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(text[i]);
        ++i;
    }
    return out;
}

// Length of the protected smiley starting at pos, or 0.
std::size_t match_smiley(std::string_view text, std::size_t pos)
{
    for (std::string_view smiley : kProtectedSmileys) {
        if (pos + smiley.size() > text.size()) {
            continue;
        }
        bool same = true;
        for (std::size_t j = 0; j < smiley.size(); ++j) {
            if (ascii_lower(text[pos + j]) != smiley[j]) {
                same = false;
                break;
            }
        }
        if (!same) {
            continue;
        }
        // ":p" in "re:port" is not an emoticon.
        const char last = smiley.back();
        const std::size_t end = pos + smiley.size();
        if (is_ascii_alpha(last) && end < text.size() && is_ascii_alnum(text[end])) {
            continue;
        }
        return smiley.size();
    }
    return 0;
}

}  // namespace

std::string_view to_string(Polarity p)
{
    return p == Polarity::positive ? "positive" : "negative";
}

std::optional<Polarity> parse_polarity(std::string_view s)
{
    if (s == "positive" || s == "pos" || s == "1") {
        return Polarity::positive;
    }
    if (s == "negative" || s == "neg" || s == "0") {
        return Polarity::negative;
    }
    return std::nullopt;
}

bool is_stopword(std::string_view token)
{
    return std::find(std::begin(kStopwords), std::end(kStopwords), token) != std::end(kStopwords);
}

bool is_protected_smiley(std::string_view token)
{
    return std::find(std::begin(kProtectedSmileys), std::end(kProtectedSmileys), token) !=
           std::end(kProtectedSmileys);
}

TokenSequence clean(std::string_view text)
{
    const std::string stripped = strip_html(text);
    const std::string_view s = stripped;

    TokenSequence tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            if (!is_stopword(current)) {
                tokens.push_back(std::move(current));
            }
            current.clear();
        }
    };

    std::size_t i = 0;
    while (i < s.size()) {
        if (const std::size_t len = match_smiley(s, i); len > 0) {
            flush();
            std::string smiley(s.substr(i, len));
            std::transform(smiley.begin(), smiley.end(), smiley.begin(), ascii_lower);
            tokens.push_back(std::move(smiley));
            i += len;
            continue;
        }
        if (is_ascii_alnum(s[i])) {
            current.push_back(ascii_lower(s[i]));
        } else {
            flush();
        }
        ++i;
    }
    flush();
    return tokens;
}

std::string join(const TokenSequence& tokens)
{
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) {
            out.push_back(' ');
        }
        out += tokens[i];
    }
    return out;
}

Vocabulary::Vocabulary(std::span<const std::string> words)
{
    for (const auto& w : words) {
        if (index_.find(w) != index_.end()) {
            continue;
        }
        index_.emplace(w, static_cast<std::uint32_t>(words_.size() + first_word));
        words_.push_back(w);
    }
}

std::uint32_t Vocabulary::lookup(std::string_view token) const
{
    const auto it = index_.find(token);
    return it == index_.end() ? unknown : it->second;
}

bool Vocabulary::contains(std::string_view token) const
{
    return index_.find(token) != index_.end();
}

PaddedDocument clip_pad(const TokenSequence& tokens, std::size_t n, const Vocabulary& vocab)
{
    if (n == 0) {
        throw ArgumentError("clip_pad: document length n must be at least 1");
    }
    PaddedDocument doc;
    doc.token_ids.assign(n, Vocabulary::pad);
    const std::size_t kept = std::min(n, tokens.size());
    for (std::size_t i = 0; i < kept; ++i) {
        doc.token_ids[i] = vocab.lookup(tokens[i]);
    }
    return doc;
}

LengthStats length_stats(std::span<const TokenSequence> corpus)
{
    if (corpus.empty()) {
        throw InputError("length_stats: corpus is empty, no data to summarize");
    }
    LengthStats stats;
    stats.min = corpus.front().size();
    stats.max = corpus.front().size();
    std::size_t total = 0;
    for (const auto& doc : corpus) {
        stats.min = std::min(stats.min, doc.size());
        stats.max = std::max(stats.max, doc.size());
        total += doc.size();
    }
    stats.documents = corpus.size();
    stats.mean = static_cast<double>(total) / static_cast<double>(corpus.size());
    return stats;
}

double clipped_fraction(std::span<const TokenSequence> corpus, std::size_t n)
{
    if (corpus.empty()) {
        return 0.0;
    }
    const auto clipped = std::count_if(corpus.begin(), corpus.end(),
                                       [n](const TokenSequence& d) { return d.size() > n; });
    return static_cast<double>(clipped) / static_cast<double>(corpus.size());
}

namespace {

void check_unique(std::unordered_set<std::string>& seen, const std::string& id, std::size_t line)
{
    if (id.empty()) {
        throw InputError("line " + std::to_string(line) + ": document id is empty");
    }
    if (!seen.insert(id).second) {
        throw InputError("line " + std::to_string(line) + ": duplicate document id '" + id + "'");
    }
}

std::optional<Polarity> label_field(const std::string& raw, std::size_t line)
{
    if (raw.empty()) {
        return std::nullopt;
    }
    auto p = parse_polarity(raw);
    if (!p) {
        throw InputError("line " + std::to_string(line) + ": unknown label '" + raw + "'");
    }
    return p;
}

}  // namespace

std::vector<RawDocument> read_jsonl_corpus(std::istream& in)
{
    std::vector<RawDocument> docs;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw InputError("line " + std::to_string(lineno) + ": malformed JSON: " + e.what());
        }
        if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_string()) {
            throw InputError("line " + std::to_string(lineno) + ": expected an object with a string \"id\"");
        }
        RawDocument doc;
        doc.id = obj["id"].get<std::string>();
        if (obj.contains("text") && obj["text"].is_string()) {
            doc.text = obj["text"].get<std::string>();
        } else if (obj.contains("tokens") && obj["tokens"].is_array()) {
            TokenSequence toks;
            for (const auto& t : obj["tokens"]) {
                if (!t.is_string()) {
                    throw InputError("line " + std::to_string(lineno) + ": non-string token");
                }
                toks.push_back(t.get<std::string>());
            }
            doc.text = join(toks);
        } else {
            throw InputError("line " + std::to_string(lineno) + ": missing \"text\" field");
        }
        if (obj.contains("label") && !obj["label"].is_null()) {
            if (!obj["label"].is_string()) {
                throw InputError("line " + std::to_string(lineno) + ": \"label\" must be a string");
            }
            doc.label = label_field(obj["label"].get<std::string>(), lineno);
        }
        check_unique(seen, doc.id, lineno);
        docs.push_back(std::move(doc));
    }
    return docs;
}

bool read_csv_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line)
{
    fields.clear();
    std::string physical;
    if (!std::getline(in, physical)) {
        return false;
    }
    ++line;
    const std::size_t start_line = line;
    std::string field;
    bool quoted = false;
    bool was_quoted = false;
    std::size_t i = 0;
    while (true) {
        if (i >= physical.size()) {
            if (quoted) {
                // Quoted field continues on the next physical line.
                if (!std::getline(in, physical)) {
                    throw InputError("line " + std::to_string(start_line) + ": unterminated quoted CSV field");
                }
                ++line;
                field.push_back('\n');
                i = 0;
                continue;
            }
            break;
        }
        const char c = physical[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < physical.size() && physical[i + 1] == '"') {
                    field.push_back('"');
                    i += 2;
                    continue;
                }
                quoted = false;
                ++i;
                continue;
            }
            field.push_back(c);
            ++i;
            continue;
        }
        if (c == '"' && field.empty() && !was_quoted) {
            quoted = true;
            was_quoted = true;
            ++i;
            continue;
        }
        if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
            was_quoted = false;
            ++i;
            continue;
        }
        if (c == '\r' && i + 1 == physical.size()) {
            ++i;
            continue;
        }
        if (was_quoted) {
            throw InputError("line " + std::to_string(line) + ": characters after closing quote in CSV field");
        }
        field.push_back(c);
        ++i;
    }
    fields.push_back(std::move(field));
    return true;
}

std::vector<RawDocument> read_csv_corpus(std::istream& in)
{
    std::vector<std::string> fields;
    std::size_t line = 0;
    if (!read_csv_record(in, fields, line)) {
        throw InputError("CSV corpus is empty (expected header id,text,label)");
    }
    int id_col = -1, text_col = -1, label_col = -1;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (fields[i] == "id") id_col = static_cast<int>(i);
        if (fields[i] == "text") text_col = static_cast<int>(i);
        if (fields[i] == "label") label_col = static_cast<int>(i);
    }
    if (id_col < 0 || text_col < 0) {
        throw InputError("line 1: CSV header must contain id and text columns");
    }
    std::vector<RawDocument> docs;
    std::unordered_set<std::string> seen;
    while (true) {
        const std::size_t before = line;
        if (!read_csv_record(in, fields, line)) {
            break;
        }
        const std::size_t record_line = before + 1;
        if (fields.size() == 1 && fields[0].empty()) {
            continue;
        }
        if (static_cast<int>(fields.size()) <= std::max({id_col, text_col, label_col})) {
            throw InputError("line " + std::to_string(record_line) + ": wrong number of CSV fields");
        }
        RawDocument doc;
        doc.id = fields[id_col];
        doc.text = fields[text_col];
        if (label_col >= 0) {
            doc.label = label_field(fields[label_col], record_line);
        }
        check_unique(seen, doc.id, record_line);
        docs.push_back(std::move(doc));
    }
    return docs;
}

std::vector<RawDocument> read_corpus_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError("cannot open corpus file '" + path + "'");
    }
    const bool csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
    return csv ? read_csv_corpus(in) : read_jsonl_corpus(in);
}

}  // namespace ngcnn
