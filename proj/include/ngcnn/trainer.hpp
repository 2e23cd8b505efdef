#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ngcnn/embeddings.hpp"
#include "ngcnn/ngramcnn.hpp"
#include "ngcnn/textprep.hpp"

namespace ngcnn {

// ---- data split -----------------------------------------------------------

struct SplitSpec {
    double train = 0.70;
    double dev = 0.10;
    double test = 0.20;
    std::uint64_t seed = 0;
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> dev;
    std::vector<std::size_t> test;
};

// Seeded, label-stratified partition. dev and test sizes are round(N * f);
// train takes the remainder. labels[i] < 0 marks an unlabeled document.
SplitIndices split(std::span<const int> labels, const SplitSpec& spec);

// ---- NgramCNN training ----------------------------------------------------

struct Example {
    PaddedDocument doc;
    int label = 0;
};

struct TrainConfig {
    std::size_t batch_size = 60;
    std::size_t epochs = 1;
    AdamOptions adam;
    std::uint64_t seed = 0;
    // Per-sample gradients are reduced in sample order, so results do not
    // depend on the thread count.
    bool deterministic = true;
    std::size_t threads = 1;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;  // mean cross-entropy over the epoch's samples
    double dev_accuracy = 0.0;
};

struct History {
    double initial_loss = 0.0;  // mean cross-entropy on the training set before any update
    std::vector<EpochRecord> epochs;
};

struct Metrics {
    double accuracy = 0.0;
    double loss = 0.0;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

// Model input for a padded document.
template <typename T>
Tensor<T> document_tensor(const PaddedDocument& doc, const EmbeddingTable& table);

// Mini-batch Adam on mean cross-entropy plus the dense L2 penalty. The last
// partial batch is kept; sample order is reshuffled each epoch from
// (seed, epoch).
template <typename T>
History train(Model<T>& model, std::span<const Example> train_set, std::span<const Example> dev_set,
              const EmbeddingTable& table, const TrainConfig& config);

// Threshold: probability > 0.5 is positive.
Metrics evaluate_predictions(std::span<const double> probabilities, std::span<const int> labels);

template <typename T>
Metrics evaluate(const Model<T>& model, std::span<const Example> test_set, const EmbeddingTable& table);

nlohmann::json metrics_json(const Metrics& m);
// "epoch,train_loss,dev_accuracy" header plus one row per epoch.
std::string history_csv(const History& h);

// ---- tf-idf + logistic regression baseline --------------------------------

using SparseVector = std::vector<std::pair<std::uint32_t, double>>;

class TfidfModel {
public:
    static TfidfModel fit(std::span<const TokenSequence> corpus);

    // tf(w) * (ln((1 + N) / (1 + df(w))) + 1), L2-normalized. Unseen words
    // are dropped. Entries are sorted by feature index.
    SparseVector transform(const TokenSequence& doc) const;

    std::size_t dimension() const { return words_.size(); }
    std::size_t documents() const { return documents_; }
    std::optional<std::uint32_t> index(const std::string& word) const;
    std::size_t df(const std::string& word) const;
    double idf(const std::string& word) const;

private:
    std::map<std::string, std::uint32_t> index_;
    std::vector<std::string> words_;
    std::vector<std::size_t> df_;
    std::size_t documents_ = 0;
};

struct LogRegOptions {
    double tolerance = 1e-5;
    std::size_t max_iterations = 5000;
};

struct LogRegModel {
    std::vector<double> weights;
    double bias = 0.0;
    double l2 = 0.0;
    std::size_t iterations = 0;
    double gradient_norm = 0.0;
};

// Minimizes mean log-loss + l2 * |w|^2 (bias unregularized) by gradient
// descent with backtracking line search.
LogRegModel logreg_fit(std::span<const SparseVector> features, std::span<const int> labels, std::size_t dimension,
                       double l2, const LogRegOptions& options = {});

double logreg_predict(const LogRegModel& model, const SparseVector& x);

struct GridSearchResult {
    LogRegModel model;
    double dev_accuracy = 0.0;
    std::vector<std::pair<double, double>> scores;  // (l2, dev accuracy) per grid value
};

// Fits every grid value and keeps the best dev accuracy, ties to the larger
// regularization.
GridSearchResult logreg_train(std::span<const SparseVector> train_x, std::span<const int> train_y,
                              std::span<const SparseVector> dev_x, std::span<const int> dev_y, std::size_t dimension,
                              std::span<const double> l2_grid, const LogRegOptions& options = {});

}  // namespace ngcnn
