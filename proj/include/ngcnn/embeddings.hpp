#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ngcnn/textprep.hpp"

namespace ngcnn {

// Seed of the vector shared by all out-of-vocabulary tokens. Entries are
// uniform in [-0.25, 0.25].
inline constexpr std::uint64_t kOovSeed = 0x6f6f76ULL;  // "oov"
inline constexpr double kOovRange = 0.25;

// n x d row-major matrix; pad rows are all zero.
struct DocumentMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> values;

    std::span<const float> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
};

class EmbeddingTable {
public:
    EmbeddingTable() = default;
    // words.size() * dim == matrix.size(); words must be unique.
    EmbeddingTable(std::vector<std::string> words, std::vector<float> matrix, std::size_t dim);

    // Text word-vector format: "token v1 ... vd" per line, optional
    // "count dim" header. Loads at most `limit` entries. Duplicate tokens
    // keep their first vector.
    static EmbeddingTable load(std::istream& in, std::optional<std::size_t> limit = std::nullopt,
                               bool normalize = false);
    static EmbeddingTable load_file(const std::string& path, std::optional<std::size_t> limit = std::nullopt,
                                    bool normalize = false);

    // Headerless text format, shortest round-trip float formatting.
    void save(std::ostream& out) const;

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return words_.size(); }
    const std::vector<std::string>& words() const { return words_; }

    std::optional<std::size_t> row_of(std::string_view token) const;
    std::span<const float> row(std::size_t r) const { return {matrix_.data() + r * dim_, dim_}; }
    // Throws ArgumentError naming the token when it is absent.
    std::span<const float> vector(std::string_view token) const;

    // Index i of the vocabulary maps to row i - Vocabulary::first_word.
    Vocabulary vocabulary() const;

    std::span<const float> oov_vector() const { return oov_; }

private:
    struct Hash {
        using is_transparent = void;
        std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
    };

    void make_oov();

    std::size_t dim_ = 0;
    std::vector<std::string> words_;
    std::vector<float> matrix_;
    std::unordered_map<std::string, std::size_t, Hash, std::equal_to<>> index_;
    std::vector<float> oov_;
};

// Row i is the table row of token i, zeros for pad and the OOV vector for
// the unknown index.
DocumentMatrix embed(const PaddedDocument& doc, const EmbeddingTable& table);

double cosine(std::span<const double> a, std::span<const double> b);
double cosine(std::span<const float> a, std::span<const float> b);

using ScoredToken = std::pair<std::string, double>;

// Top-k rows by cosine to `target`, skipping `exclude`. Ties go to the
// earlier row. Rows with zero norm are never returned.
std::vector<ScoredToken> nearest(std::span<const double> target, std::size_t k, const EmbeddingTable& table,
                                 std::span<const std::string> exclude = {});

// Ranks tokens by cosine to vec(b) - vec(a) + vec(c), excluding a, b and c.
std::vector<ScoredToken> analogy(std::string_view a, std::string_view b, std::string_view c, std::size_t k,
                                 const EmbeddingTable& table);

struct TrainingCostInputs {
    std::uint64_t epochs = 1;      // E
    std::uint64_t tokens = 1;      // T
    std::uint64_t window = 1;      // Q for CBOW, win for Skip-Gram
    std::uint64_t projection = 1;  // P
    std::uint64_t vocab = 2;       // V
};

// E * T * (Q * P + P * log2 V), rounded half up.
std::uint64_t cbow_cost(const TrainingCostInputs& in);
// E * T * (win * (P + P * log2 V)), rounded half up.
std::uint64_t skipgram_cost(const TrainingCostInputs& in);

}  // namespace ngcnn
