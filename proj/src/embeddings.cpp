#include "ngcnn/embeddings.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "ngcnn/error.hpp"
#include "ngcnn/rng.hpp"

namespace ngcnn {

namespace {

std::vector<std::string_view> split_fields(std::string_view line)
{
    std::vector<std::string_view> fields;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) {
            ++i;
        }
        const std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') {
            ++i;
        }
        if (i > start) {
            fields.push_back(line.substr(start, i - start));
        }
    }
    return fields;
}

bool is_unsigned_integer(std::string_view s)
{
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

float parse_float(std::string_view s, std::size_t line)
{
    float value = 0.0f;
    const char* first = s.data();
    if (!s.empty() && s.front() == '+') {
        ++first;
    }
    const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) {
        throw InputError("line " + std::to_string(line) + ": non-numeric vector entry '" + std::string(s) + "'");
    }
    return value;
}

template <typename A, typename B>
double cosine_impl(std::span<const A> a, std::span<const B> b)
{
    if (a.size() != b.size()) {
        throw ArgumentError("cosine: vectors have different lengths (" + std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()) + ")");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i], y = b[i];
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if (na == 0.0 || nb == 0.0) {
        throw ArgumentError("cosine: similarity is undefined for a zero vector");
    }
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::uint64_t round_half_up(double x)
{
    return static_cast<std::uint64_t>(std::floor(x + 0.5));
}

void check_cost_inputs(const TrainingCostInputs& in)
{
    if (in.epochs == 0 || in.tokens == 0 || in.window == 0 || in.projection == 0 || in.vocab < 2) {
        throw ArgumentError("training cost inputs must be positive with vocabulary size at least 2");
    }
}

}  // namespace

EmbeddingTable::EmbeddingTable(std::vector<std::string> words, std::vector<float> matrix, std::size_t dim)
  : dim_(dim), words_(std::move(words)), matrix_(std::move(matrix))
{
    if (dim_ == 0) {
        throw ArgumentError("embedding dimension must be at least 1");
    }
    if (matrix_.size() != words_.size() * dim_) {
        throw ArgumentError("embedding matrix size does not match words x dim");
    }
    index_.reserve(words_.size());
    for (std::size_t i = 0; i < words_.size(); ++i) {
        if (!index_.emplace(words_[i], i).second) {
            throw ArgumentError("duplicate embedding token '" + words_[i] + "'");
        }
    }
    make_oov();
}

void EmbeddingTable::make_oov()
{
    Rng rng(kOovSeed);
    oov_.resize(dim_);
    for (auto& v : oov_) {
        v = static_cast<float>(uniform(rng, -kOovRange, kOovRange));
    }
}

EmbeddingTable EmbeddingTable::load(std::istream& in, std::optional<std::size_t> limit, bool normalize)
{
    std::vector<std::string> words;
    std::vector<float> matrix;
    std::unordered_map<std::string, std::size_t> seen;
    std::size_t dim = 0;
    std::string line;
    std::size_t lineno = 0;
    bool first_content = true;
    while (std::getline(in, line)) {
        ++lineno;
        if (limit && words.size() >= *limit) {
            break;
        }
        const auto fields = split_fields(line);
        if (fields.empty()) {
            continue;
        }
        if (first_content) {
            first_content = false;
            if (fields.size() == 2 && is_unsigned_integer(fields[0]) && is_unsigned_integer(fields[1])) {
                continue;  // "count dim" header
            }
        }
        if (fields.size() < 2) {
            throw InputError("line " + std::to_string(lineno) + ": expected a token followed by vector entries, got " +
                             std::to_string(fields.size()) + " field(s)");
        }
        if (dim == 0) {
            dim = fields.size() - 1;
        } else if (fields.size() - 1 != dim) {
            throw InputError("line " + std::to_string(lineno) + ": dimension mismatch, expected " +
                             std::to_string(dim) + " entries but found " + std::to_string(fields.size() - 1));
        }
        std::string token(fields[0]);
        std::vector<float> row(dim);
        for (std::size_t j = 0; j < dim; ++j) {
            row[j] = parse_float(fields[j + 1], lineno);
        }
        if (seen.count(token) != 0) {
            continue;
        }
        seen.emplace(token, words.size());
        words.push_back(std::move(token));
        matrix.insert(matrix.end(), row.begin(), row.end());
    }
    if (words.empty()) {
        throw InputError("word-vector source contains no entries");
    }
    if (normalize) {
        for (std::size_t r = 0; r < words.size(); ++r) {
            double norm = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                norm += static_cast<double>(matrix[r * dim + j]) * matrix[r * dim + j];
            }
            if (norm > 0.0) {
                norm = std::sqrt(norm);
                for (std::size_t j = 0; j < dim; ++j) {
                    matrix[r * dim + j] = static_cast<float>(matrix[r * dim + j] / norm);
                }
            }
        }
    }
    return EmbeddingTable(std::move(words), std::move(matrix), dim);
}

EmbeddingTable EmbeddingTable::load_file(const std::string& path, std::optional<std::size_t> limit, bool normalize)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError("cannot open word-vector file '" + path + "'");
    }
    return load(in, limit, normalize);
}

void EmbeddingTable::save(std::ostream& out) const
{
    char buf[64];
    for (std::size_t r = 0; r < words_.size(); ++r) {
        out << words_[r];
        for (float v : row(r)) {
            const auto res = std::to_chars(buf, buf + sizeof buf, v);
            out << ' ' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
        }
        out << '\n';
    }
}

std::optional<std::size_t> EmbeddingTable::row_of(std::string_view token) const
{
    const auto it = index_.find(token);
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::span<const float> EmbeddingTable::vector(std::string_view token) const
{
    const auto r = row_of(token);
    if (!r) {
        throw ArgumentError("token '" + std::string(token) + "' is not in the embedding vocabulary");
    }
    return row(*r);
}

Vocabulary EmbeddingTable::vocabulary() const
{
    return Vocabulary(words_);
}

DocumentMatrix embed(const PaddedDocument& doc, const EmbeddingTable& table)
{
    DocumentMatrix m;
    m.rows = doc.token_ids.size();
    m.cols = table.dim();
    m.values.assign(m.rows * m.cols, 0.0f);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const std::uint32_t id = doc.token_ids[i];
        if (id == Vocabulary::pad) {
            continue;
        }
        std::span<const float> src;
        if (id == Vocabulary::unknown || id - Vocabulary::first_word >= table.size()) {
            src = table.oov_vector();
        } else {
            src = table.row(id - Vocabulary::first_word);
        }
        std::copy(src.begin(), src.end(), m.values.begin() + static_cast<std::ptrdiff_t>(i * m.cols));
    }
    return m;
}

double cosine(std::span<const double> a, std::span<const double> b)
{
    return cosine_impl(a, b);
}

double cosine(std::span<const float> a, std::span<const float> b)
{
    return cosine_impl(a, b);
}

std::vector<ScoredToken> nearest(std::span<const double> target, std::size_t k, const EmbeddingTable& table,
                                 std::span<const std::string> exclude)
{
    if (k == 0) {
        throw ArgumentError("nearest: k must be at least 1");
    }
    if (target.size() != table.dim()) {
        throw ArgumentError("nearest: query dimension does not match the table");
    }
    double tnorm = 0.0;
    for (double x : target) {
        tnorm += x * x;
    }
    if (tnorm == 0.0) {
        throw ArgumentError("nearest: query vector is zero, similarity is undefined");
    }
    tnorm = std::sqrt(tnorm);

    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(table.size());
    for (std::size_t r = 0; r < table.size(); ++r) {
        if (std::find(exclude.begin(), exclude.end(), table.words()[r]) != exclude.end()) {
            continue;
        }
        double dot = 0.0, norm = 0.0;
        const auto row = table.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) {
            dot += target[j] * row[j];
            norm += static_cast<double>(row[j]) * row[j];
        }
        if (norm == 0.0) {
            continue;
        }
        scored.emplace_back(std::clamp(dot / (tnorm * std::sqrt(norm)), -1.0, 1.0), r);
    }
    const std::size_t top = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(top), scored.end(),
                      [](const auto& x, const auto& y) {
                          return x.first != y.first ? x.first > y.first : x.second < y.second;
                      });
    std::vector<ScoredToken> out;
    out.reserve(top);
    for (std::size_t i = 0; i < top; ++i) {
        out.emplace_back(table.words()[scored[i].second], scored[i].first);
    }
    return out;
}

std::vector<ScoredToken> analogy(std::string_view a, std::string_view b, std::string_view c, std::size_t k,
                                 const EmbeddingTable& table)
{
    const auto va = table.vector(a);
    const auto vb = table.vector(b);
    const auto vc = table.vector(c);
    std::vector<double> target(table.dim());
    for (std::size_t j = 0; j < target.size(); ++j) {
        target[j] = (static_cast<double>(vb[j]) - static_cast<double>(va[j])) + static_cast<double>(vc[j]);
    }
    const std::string exclude[] = {std::string(a), std::string(b), std::string(c)};
    return nearest(target, k, table, exclude);
}

std::uint64_t cbow_cost(const TrainingCostInputs& in)
{
    check_cost_inputs(in);
    const double p = static_cast<double>(in.projection);
    const double per_token = static_cast<double>(in.window) * p + p * std::log2(static_cast<double>(in.vocab));
    return round_half_up(static_cast<double>(in.epochs) * static_cast<double>(in.tokens) * per_token);
}

std::uint64_t skipgram_cost(const TrainingCostInputs& in)
{
    check_cost_inputs(in);
    const double p = static_cast<double>(in.projection);
    const double per_token = static_cast<double>(in.window) * (p + p * std::log2(static_cast<double>(in.vocab)));
    return round_half_up(static_cast<double>(in.epochs) * static_cast<double>(in.tokens) * per_token);
}

}  // namespace ngcnn
