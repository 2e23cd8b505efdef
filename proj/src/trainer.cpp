#include "ngcnn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "ngcnn/error.hpp"
#include "ngcnn/rng.hpp"

namespace ngcnn {

// ---- split ----------------------------------------------------------------

namespace {

// Largest-remainder apportionment of `total` items across strata.
std::vector<std::size_t> apportion(const std::vector<std::size_t>& sizes, std::size_t population, std::size_t total)
{
    std::vector<std::size_t> counts(sizes.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t s = 0; s < sizes.size(); ++s) {
        const double ideal = static_cast<double>(sizes[s]) * static_cast<double>(total) / static_cast<double>(population);
        counts[s] = static_cast<std::size_t>(std::floor(ideal));
        assigned += counts[s];
        remainders.emplace_back(ideal - std::floor(ideal), s);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < total && i < remainders.size(); ++i) {
        ++counts[remainders[i].second];
        ++assigned;
    }
    return counts;
}

}  // namespace

SplitIndices split(std::span<const int> labels, const SplitSpec& spec)
{
    const std::size_t n = labels.size();
    if (n < 10) {
        throw ArgumentError("split needs at least 10 documents, got " + std::to_string(n));
    }
    if (!(spec.train > 0 && spec.dev > 0 && spec.test > 0) ||
        std::abs(spec.train + spec.dev + spec.test - 1.0) > 1e-9) {
        throw ArgumentError("degenerate split fractions: each must be positive and they must sum to 1");
    }
    const auto dev_total = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.dev));
    const auto test_total = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.test));
    if (dev_total == 0 || test_total == 0 || dev_total + test_total >= n) {
        throw ArgumentError("degenerate split: a partition would be empty");
    }

    std::map<int, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < n; ++i) {
        strata[labels[i] < 0 ? -1 : labels[i]].push_back(i);
    }
    Rng rng(derive_seed(spec.seed, "split"));
    std::vector<std::size_t> sizes;
    for (auto& [label, members] : strata) {
        shuffle(members, rng);
        sizes.push_back(members.size());
    }
    const auto dev_counts = apportion(sizes, n, dev_total);
    auto test_counts = apportion(sizes, n, test_total);

    SplitIndices out;
    std::size_t s = 0;
    for (const auto& [label, members] : strata) {
        const std::size_t d = std::min(dev_counts[s], members.size());
        const std::size_t t = std::min(test_counts[s], members.size() - d);
        out.dev.insert(out.dev.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(d));
        out.test.insert(out.test.end(), members.begin() + static_cast<std::ptrdiff_t>(d),
                        members.begin() + static_cast<std::ptrdiff_t>(d + t));
        out.train.insert(out.train.end(), members.begin() + static_cast<std::ptrdiff_t>(d + t), members.end());
        ++s;
    }
    shuffle(out.train, rng);
    shuffle(out.dev, rng);
    shuffle(out.test, rng);
    return out;
}

// ---- training -------------------------------------------------------------

template <typename T>
Tensor<T> document_tensor(const PaddedDocument& doc, const EmbeddingTable& table)
{
    const DocumentMatrix m = embed(doc, table);
    Tensor<T> t;
    t.shape = {m.rows, m.cols};
    t.values.assign(m.values.begin(), m.values.end());
    return t;
}

namespace {

template <typename T>
void check_examples(const Model<T>& model, std::span<const Example> set, const EmbeddingTable& table,
                    const char* which)
{
    if (table.dim() != model.config.embed_dim) {
        throw ShapeError("embedding dimension " + std::to_string(table.dim()) + " does not match the model's d=" +
                         std::to_string(model.config.embed_dim));
    }
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (set[i].doc.token_ids.size() != model.config.doc_length) {
            throw ShapeError(std::string(which) + " document " + std::to_string(i) + " has length " +
                             std::to_string(set[i].doc.token_ids.size()) + ", the model expects n=" +
                             std::to_string(model.config.doc_length));
        }
        if (set[i].label != 0 && set[i].label != 1) {
            throw ArgumentError(std::string(which) + " document " + std::to_string(i) + " has no binary label");
        }
    }
}

template <typename T>
void add_into(Gradients<T>& total, const Gradients<T>& part)
{
    for (std::size_t p = 0; p < total.size(); ++p) {
        T* dst = total[p].values.data();
        const T* src = part[p].values.data();
        for (std::size_t a = 0; a < total[p].size(); ++a) {
            dst[a] += src[a];
        }
    }
}

template <typename T>
void zero(Gradients<T>& g)
{
    for (auto& t : g) {
        t.fill(T(0));
    }
}

// Runs fn(worker, begin, end) over [0, count) split into contiguous chunks.
template <typename Fn>
void parallel_chunks(std::size_t count, std::size_t threads, Fn&& fn)
{
    threads = std::max<std::size_t>(1, std::min(threads, count));
    if (threads == 1) {
        fn(std::size_t{0}, std::size_t{0}, count);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (count + threads - 1) / threads;
    for (std::size_t w = 0; w < threads; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(count, begin + chunk);
        if (begin >= end) {
            break;
        }
        pool.emplace_back([&fn, w, begin, end] { fn(w, begin, end); });
    }
    for (auto& t : pool) {
        t.join();
    }
}

template <typename T>
double mean_loss(const Model<T>& model, std::span<const Example> set, const EmbeddingTable& table)
{
    double total = 0.0;
    for (const auto& ex : set) {
        total += bce_loss(model.predict(document_tensor<T>(ex.doc, table)), ex.label);
    }
    return set.empty() ? 0.0 : total / static_cast<double>(set.size());
}

}  // namespace

template <typename T>
History train(Model<T>& model, std::span<const Example> train_set, std::span<const Example> dev_set,
              const EmbeddingTable& table, const TrainConfig& config)
{
    if (config.epochs < 1) {
        throw ArgumentError("epochs must be at least 1");
    }
    if (config.batch_size < 1) {
        throw ArgumentError("batch size must be at least 1");
    }
    if (train_set.empty()) {
        throw ArgumentError("training set is empty");
    }
    check_examples(model, train_set, table, "training");
    check_examples(model, dev_set, table, "dev");

    Network<T>& net = model.network;
    const std::size_t threads = std::max<std::size_t>(1, config.threads);
    const std::uint64_t shuffle_seed = derive_seed(config.seed, "shuffle");
    const std::uint64_t dropout_seed = derive_seed(config.seed, "dropout");

    History history;
    history.initial_loss = mean_loss(model, train_set, table);

    std::vector<std::size_t> order(train_set.size());
    Gradients<T> total = net.zero_gradients();
    // Deterministic mode keeps one buffer per batch slot; otherwise one per
    // worker.
    std::vector<Gradients<T>> buffers;
    std::vector<double> losses(config.batch_size);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(shuffle_seed, epoch));
        shuffle(order, rng);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t count = std::min(config.batch_size, order.size() - start);
            const std::size_t slots = config.deterministic ? count : std::min(threads, count);
            while (buffers.size() < slots) {
                buffers.push_back(net.zero_gradients());
            }
            for (std::size_t b = 0; b < slots; ++b) {
                zero(buffers[b]);
            }

            parallel_chunks(count, threads, [&](std::size_t worker, std::size_t begin, std::size_t end) {
                for (std::size_t b = begin; b < end; ++b) {
                    const std::size_t idx = order[start + b];
                    const Example& ex = train_set[idx];
                    const auto input = document_tensor<T>(ex.doc, table);
                    const std::uint64_t sample_seed =
                        derive_seed(dropout_seed, (static_cast<std::uint64_t>(epoch) << 32) ^ idx);
                    const auto trace = net.forward(input, Mode::train, sample_seed);
                    auto& g = buffers[config.deterministic ? b : worker];
                    losses[b] = net.loss_backward(trace, ex.label, g);
                }
            });

            zero(total);
            for (std::size_t b = 0; b < slots; ++b) {
                add_into(total, buffers[b]);
            }
            for (std::size_t b = 0; b < count; ++b) {
                epoch_loss += losses[b];
            }
            const T scale = static_cast<T>(1.0 / static_cast<double>(count));
            for (auto& t : total) {
                for (auto& v : t.values) {
                    v *= scale;
                }
            }
            net.add_l2_gradient(total);
            auto& params = net.parameters();
            for (std::size_t p = 0; p < params.size(); ++p) {
                params[p].grad.values = total[p].values;
                adam_step(params[p], config.adam);
            }
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = epoch_loss / static_cast<double>(order.size());
        rec.dev_accuracy = dev_set.empty() ? 0.0 : evaluate(model, dev_set, table).accuracy;
        history.epochs.push_back(rec);
    }
    return history;
}

Metrics evaluate_predictions(std::span<const double> probabilities, std::span<const int> labels)
{
    if (probabilities.empty()) {
        throw ArgumentError("evaluation set is empty");
    }
    if (probabilities.size() != labels.size()) {
        throw ArgumentError("predictions and labels differ in length");
    }
    Metrics m;
    double loss = 0.0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        const bool predicted = probabilities[i] > 0.5;
        const bool actual = labels[i] == 1;
        if (predicted && actual) ++m.tp;
        else if (predicted) ++m.fp;
        else if (actual) ++m.fn;
        else ++m.tn;
        loss += bce_loss(probabilities[i], labels[i]);
    }
    const double n = static_cast<double>(probabilities.size());
    m.accuracy = static_cast<double>(m.tp + m.tn) / n;
    m.loss = loss / n;
    return m;
}

template <typename T>
Metrics evaluate(const Model<T>& model, std::span<const Example> test_set, const EmbeddingTable& table)
{
    if (test_set.empty()) {
        throw ArgumentError("evaluation set is empty");
    }
    check_examples(model, test_set, table, "test");
    std::vector<double> probs;
    std::vector<int> labels;
    probs.reserve(test_set.size());
    for (const auto& ex : test_set) {
        probs.push_back(model.predict(document_tensor<T>(ex.doc, table)));
        labels.push_back(ex.label);
    }
    return evaluate_predictions(probs, labels);
}

nlohmann::json metrics_json(const Metrics& m)
{
    return nlohmann::json{{"accuracy", m.accuracy}, {"loss", m.loss}, {"tp", m.tp},
                          {"fp", m.fp},             {"tn", m.tn},     {"fn", m.fn}};
}

std::string history_csv(const History& h)
{
    std::ostringstream os;
    os.precision(17);
    os << "epoch,train_loss,dev_accuracy\n";
    for (const auto& e : h.epochs) {
        os << e.epoch << ',' << e.train_loss << ',' << e.dev_accuracy << '\n';
    }
    return os.str();
}

template Tensor<float> document_tensor<float>(const PaddedDocument&, const EmbeddingTable&);
template Tensor<double> document_tensor<double>(const PaddedDocument&, const EmbeddingTable&);
template History train<float>(Model<float>&, std::span<const Example>, std::span<const Example>,
                              const EmbeddingTable&, const TrainConfig&);
template History train<double>(Model<double>&, std::span<const Example>, std::span<const Example>,
                               const EmbeddingTable&, const TrainConfig&);
template Metrics evaluate<float>(const Model<float>&, std::span<const Example>, const EmbeddingTable&);
template Metrics evaluate<double>(const Model<double>&, std::span<const Example>, const EmbeddingTable&);

// ---- tf-idf ---------------------------------------------------------------

TfidfModel TfidfModel::fit(std::span<const TokenSequence> corpus)
{
    if (corpus.empty()) {
        throw ArgumentError("tf-idf: corpus is empty");
    }
    std::map<std::string, std::size_t> df;
    for (const auto& doc : corpus) {
        std::vector<std::string> unique(doc.begin(), doc.end());
        std::sort(unique.begin(), unique.end());
        unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
        for (auto& w : unique) {
            ++df[w];
        }
    }
    TfidfModel m;
    m.documents_ = corpus.size();
    for (const auto& [word, count] : df) {
        m.index_.emplace(word, static_cast<std::uint32_t>(m.words_.size()));
        m.words_.push_back(word);
        m.df_.push_back(count);
    }
    return m;
}

std::optional<std::uint32_t> TfidfModel::index(const std::string& word) const
{
    const auto it = index_.find(word);
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::size_t TfidfModel::df(const std::string& word) const
{
    const auto i = index(word);
    return i ? df_[*i] : 0;
}

double TfidfModel::idf(const std::string& word) const
{
    const double n = static_cast<double>(documents_);
    return std::log((1.0 + n) / (1.0 + static_cast<double>(df(word)))) + 1.0;
}

SparseVector TfidfModel::transform(const TokenSequence& doc) const
{
    std::map<std::uint32_t, double> tf;
    for (const auto& w : doc) {
        if (const auto i = index(w)) {
            tf[*i] += 1.0;
        }
    }
    SparseVector v;
    v.reserve(tf.size());
    double norm = 0.0;
    const double n = static_cast<double>(documents_);
    for (const auto& [i, count] : tf) {
        const double weight = count * (std::log((1.0 + n) / (1.0 + static_cast<double>(df_[i]))) + 1.0);
        v.emplace_back(i, weight);
        norm += weight * weight;
    }
    if (norm > 0.0) {
        norm = std::sqrt(norm);
        for (auto& [i, w] : v) {
            w /= norm;
        }
    }
    return v;
}

// ---- logistic regression --------------------------------------------------

namespace {

double log1p_exp(double z)
{
    return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z)
{
    if (z >= 0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double dot(const std::vector<double>& w, const SparseVector& x)
{
    double s = 0.0;
    for (const auto& [i, v] : x) {
        s += w[i] * v;
    }
    return s;
}

}  // namespace

LogRegModel logreg_fit(std::span<const SparseVector> features, std::span<const int> labels, std::size_t dimension,
                       double l2, const LogRegOptions& options)
{
    if (features.empty() || features.size() != labels.size()) {
        throw ArgumentError("logistic regression needs one label per (non-empty) feature vector");
    }
    if (!(l2 >= 0.0)) {
        throw ArgumentError("logistic regression: l2 must be non-negative");
    }
    for (std::size_t r = 0; r < features.size(); ++r) {
        for (const auto& [i, v] : features[r]) {
            if (!std::isfinite(v)) {
                throw ArgumentError("logistic regression: non-finite feature in row " + std::to_string(r));
            }
            if (i >= dimension) {
                throw ArgumentError("logistic regression: feature index out of range in row " + std::to_string(r));
            }
        }
    }
    const double n = static_cast<double>(features.size());
    LogRegModel model;
    model.l2 = l2;
    model.weights.assign(dimension, 0.0);

    auto objective = [&](const std::vector<double>& w, double b) {
        double loss = 0.0;
        for (std::size_t r = 0; r < features.size(); ++r) {
            const double z = dot(w, features[r]) + b;
            loss += log1p_exp(z) - labels[r] * z;
        }
        double reg = 0.0;
        for (double x : w) {
            reg += x * x;
        }
        return loss / n + l2 * reg;
    };

    std::vector<double> grad(dimension);
    std::vector<double> trial(dimension);
    double step = 1.0;
    double current = objective(model.weights, model.bias);
    for (std::size_t it = 0; it < options.max_iterations; ++it) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double gb = 0.0;
        for (std::size_t r = 0; r < features.size(); ++r) {
            const double err = sigmoid(dot(model.weights, features[r]) + model.bias) - labels[r];
            for (const auto& [i, v] : features[r]) {
                grad[i] += err * v;
            }
            gb += err;
        }
        double norm2 = 0.0;
        for (std::size_t i = 0; i < dimension; ++i) {
            grad[i] = grad[i] / n + 2.0 * l2 * model.weights[i];
            norm2 += grad[i] * grad[i];
        }
        gb /= n;
        norm2 += gb * gb;
        model.gradient_norm = std::sqrt(norm2);
        model.iterations = it;
        if (model.gradient_norm <= options.tolerance) {
            break;
        }
        // Armijo backtracking, starting from twice the last accepted step.
        step *= 2.0;
        while (true) {
            for (std::size_t i = 0; i < dimension; ++i) {
                trial[i] = model.weights[i] - step * grad[i];
            }
            const double tb = model.bias - step * gb;
            const double value = objective(trial, tb);
            if (value <= current - 1e-4 * step * norm2 || step < 1e-12) {
                model.weights.swap(trial);
                model.bias = tb;
                current = value;
                break;
            }
            step *= 0.5;
        }
        model.iterations = it + 1;
    }
    return model;
}

double logreg_predict(const LogRegModel& model, const SparseVector& x)
{
    double z = model.bias;
    for (const auto& [i, v] : x) {
        if (i < model.weights.size()) {
            z += model.weights[i] * v;
        }
    }
    return sigmoid(z);
}

GridSearchResult logreg_train(std::span<const SparseVector> train_x, std::span<const int> train_y,
                              std::span<const SparseVector> dev_x, std::span<const int> dev_y, std::size_t dimension,
                              std::span<const double> l2_grid, const LogRegOptions& options)
{
    if (l2_grid.empty()) {
        throw ArgumentError("logistic regression: regularization grid is empty");
    }
    if (dev_x.empty() || dev_x.size() != dev_y.size()) {
        throw ArgumentError("logistic regression: dev set is empty or mislabeled");
    }
    GridSearchResult best;
    bool have = false;
    for (double l2 : l2_grid) {
        LogRegModel m = logreg_fit(train_x, train_y, dimension, l2, options);
        std::vector<double> probs;
        probs.reserve(dev_x.size());
        for (const auto& x : dev_x) {
            probs.push_back(logreg_predict(m, x));
        }
        const double acc = evaluate_predictions(probs, dev_y).accuracy;
        best.scores.emplace_back(l2, acc);
        if (!have || acc > best.dev_accuracy || (acc == best.dev_accuracy && l2 > best.model.l2)) {
            best.model = std::move(m);
            best.dev_accuracy = acc;
            have = true;
        }
    }
    return best;
}

}  // namespace ngcnn
