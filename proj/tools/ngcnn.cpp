// ngcnn: command-line front end.
//
// Exit codes
//   0  success, all post-run checks passed
//   1  unexpected internal error
//   2  usage error (bad or conflicting flags)
//   3  input data error (unreadable or malformed file)
//   4  model configuration or shape error
//   5  checkpoint error
//   6  a post-run check failed (e.g. --min-accuracy, gradcheck tolerance)
//   7  output could not be written

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "ngcnn/embeddings.hpp"
#include "ngcnn/error.hpp"
#include "ngcnn/lexlabel.hpp"
#include "ngcnn/manifest.hpp"
#include "ngcnn/ngramcnn.hpp"
#include "ngcnn/rng.hpp"
#include "ngcnn/tagann.hpp"
#include "ngcnn/textprep.hpp"
#include "ngcnn/trainer.hpp"

using namespace ngcnn;
using nlohmann::json;

namespace {

enum ExitCode {
    kOk = 0,
    kInternal = 1,
    kUsage = 2,
    kInput = 3,
    kModel = 4,
    kCheckpoint = 5,
    kCheckFailed = 6,
    kOutput = 7,
};

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct OutputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    bool deterministic = true;
    std::string manifest;
};

std::ofstream open_output(const std::string& path, bool binary = false)
{
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out) {
        throw OutputError("cannot write " + path);
    }
    return out;
}

void write_text(const std::string& path, const std::string& text)
{
    auto out = open_output(path);
    out << text;
    if (!out) {
        throw OutputError("failed writing " + path);
    }
}

// Records every option of the subcommand, set or defaulted.
void record_flags(RunManifest& m, const CLI::App& app, const CLI::App& sub)
{
    for (const CLI::App* a : {&app, &sub}) {
        for (const CLI::Option* opt : a->get_options()) {
            if (opt->get_name() == "--help" || opt->get_name() == "-h,--help") {
                continue;
            }
            const std::string name = opt->get_single_name();
            if (name.empty() || name == "help") {
                continue;
            }
            if (opt->count() > 0) {
                const auto& r = opt->results();
                m.flag(name, r.size() == 1 ? json(r.front()) : json(r));
            } else if (opt->get_default_str().empty()) {
                m.flag(name, nullptr);
            } else {
                m.flag(name, opt->get_default_str());
            }
        }
    }
}

std::string manifest_path(const Globals& g, const std::string& command, const std::string& primary_output)
{
    if (!g.manifest.empty()) {
        return g.manifest;
    }
    if (!primary_output.empty()) {
        return primary_output + ".manifest.json";
    }
    return "ngcnn-" + command + ".manifest.json";
}

std::vector<TokenSequence> tokenize(const std::vector<RawDocument>& docs)
{
    std::vector<TokenSequence> out;
    out.reserve(docs.size());
    for (const auto& d : docs) {
        out.push_back(clean(d.text));
    }
    return out;
}

std::vector<RawDocument> read_nonempty_corpus(const std::string& path)
{
    auto docs = read_corpus_file(path);
    if (docs.empty()) {
        throw InputError(path + " contains no documents");
    }
    return docs;
}

std::vector<int> require_labels(const std::vector<RawDocument>& docs, const std::string& path)
{
    std::vector<int> labels;
    labels.reserve(docs.size());
    for (const auto& d : docs) {
        if (!d.label) {
            throw InputError(path + ": document '" + d.id + "' has no label");
        }
        labels.push_back(static_cast<int>(*d.label));
    }
    return labels;
}

// ---- presets --------------------------------------------------------------

struct Preset {
    std::size_t n, region, epochs, batch;
};

const std::map<std::string, Preset>& presets()
{
    static const std::map<std::string, Preset> p = {
        {"sent", {30, 2, 3, 60}},
        {"imdb", {400, 5, 4, 60}},
        {"phon", {100, 4, 7, 60}},
        {"yelp", {270, 5, 9, 60}},
        {"custom", {30, 2, 3, 60}},
    };
    return p;
}

struct ModelFlags {
    std::string variant = "basic";
    std::string preset = "custom";
    std::size_t n = 0, region = 0, depth = 4, width = 3, epochs = 0, batch = 0;
    std::size_t filters = 70, dense = 80, stride = 2;
    double dropout = 0.35, l2 = 0.1, lr = 0.001;
    std::string activation = "relu", output = "sigmoid";
    CLI::Option *n_opt = nullptr, *region_opt = nullptr, *epochs_opt = nullptr, *batch_opt = nullptr;
};

void add_model_flags(CLI::App* sub, ModelFlags& f, bool training)
{
    sub->add_option("--variant", f.variant, "basic | pyramid | fluctuating")
        ->check(CLI::IsMember({"basic", "pyramid", "fluctuating"}))
        ->capture_default_str();
    sub->add_option("--preset", f.preset, "sent | imdb | phon | yelp | custom")
        ->check(CLI::IsMember({"sent", "imdb", "phon", "yelp", "custom"}))
        ->capture_default_str();
    f.n_opt = sub->add_option("--n", f.n, "document length");
    f.region_opt = sub->add_option("--R", f.region, "pooling region");
    sub->add_option("--L", f.depth, "conv + pool stacks (even)")->capture_default_str();
    sub->add_option("--W", f.width, "parallel kernels 1..W")->capture_default_str();
    sub->add_option("--filters", f.filters, "filters per convolution")->capture_default_str();
    sub->add_option("--dense", f.dense, "hidden dense units")->capture_default_str();
    sub->add_option("--stride", f.stride, "pyramid downsampling stride")->capture_default_str();
    sub->add_option("--dropout", f.dropout)->capture_default_str();
    sub->add_option("--l2", f.l2)->capture_default_str();
    sub->add_option("--activation", f.activation, "relu | tanh | softsign | identity")->capture_default_str();
    sub->add_option("--output-activation", f.output, "sigmoid | softplus")->capture_default_str();
    if (training) {
        f.epochs_opt = sub->add_option("--epochs", f.epochs);
        f.batch_opt = sub->add_option("--batch", f.batch);
        sub->add_option("--lr", f.lr, "Adam learning rate")->capture_default_str();
    }
}

// Fills preset-controlled values; an explicit flag that disagrees with a
// named preset is a usage error.
void apply_preset(ModelFlags& f)
{
    const Preset& p = presets().at(f.preset);
    auto resolve = [&](CLI::Option* opt, std::size_t& value, std::size_t preset_value, const char* flag) {
        if (opt && opt->count() > 0) {
            if (f.preset != "custom" && value != preset_value) {
                throw UsageError(std::string("--preset ") + f.preset + " sets " + flag + "=" +
                                 std::to_string(preset_value) + ", which conflicts with " + flag + "=" +
                                 std::to_string(value));
            }
            return;
        }
        value = preset_value;
    };
    resolve(f.n_opt, f.n, p.n, "--n");
    resolve(f.region_opt, f.region, p.region, "--R");
    resolve(f.epochs_opt, f.epochs, p.epochs, "--epochs");
    resolve(f.batch_opt, f.batch, p.batch, "--batch");
}

ArchitectureConfig make_config(const ModelFlags& f, std::size_t dim)
{
    ArchitectureConfig c;
    c.variant = parse_variant(f.variant);
    c.width = f.width;
    c.depth = f.depth;
    c.filters = f.filters;
    c.pool_region = f.region;
    c.stride = f.stride;
    c.doc_length = f.n;
    c.embed_dim = dim;
    c.dense_units = f.dense;
    c.dropout_rate = f.dropout;
    c.l2 = f.l2;
    c.conv_activation = parse_activation(f.activation);
    c.output_activation = parse_output_activation(f.output);
    return c;
}

std::vector<Example> make_examples(const std::vector<TokenSequence>& tokens, const std::vector<int>& labels,
                                   const std::vector<std::size_t>& indices, std::size_t n, const Vocabulary& vocab)
{
    std::vector<Example> out;
    out.reserve(indices.size());
    for (auto i : indices) {
        out.push_back({clip_pad(tokens[i], n, vocab), labels[i]});
    }
    return out;
}

// ---- subcommands ----------------------------------------------------------

struct PrepFlags {
    std::string input, output, embeddings;
    std::size_t max_len = 0;
    bool stats = false;
};

int run_prep(const PrepFlags& f, RunManifest& m)
{
    m.input(f.input);
    const auto docs = read_nonempty_corpus(f.input);
    const auto tokens = tokenize(docs);
    std::optional<Vocabulary> vocab;
    if (!f.embeddings.empty()) {
        m.input(f.embeddings);
        vocab = EmbeddingTable::load_file(f.embeddings).vocabulary();
    }
    auto out = open_output(f.output);
    for (std::size_t i = 0; i < docs.size(); ++i) {
        const auto& t = tokens[i];
        json j{{"id", docs[i].id},
               {"tokens", TokenSequence(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(std::min(t.size(), f.max_len)))}};
        if (docs[i].label) {
            j["label"] = to_string(*docs[i].label);
        }
        if (vocab) {
            j["token_ids"] = clip_pad(t, f.max_len, *vocab).token_ids;
        }
        out << j.dump() << '\n';
    }
    if (!out) {
        throw OutputError("failed writing " + f.output);
    }
    m.output(f.output);
    if (f.stats) {
        const auto s = length_stats(tokens);
        std::cout << json{{"documents", s.documents},
                          {"min", s.min},
                          {"mean", s.mean},
                          {"max", s.max},
                          {"max_len", f.max_len},
                          {"clipped_fraction", clipped_fraction(tokens, f.max_len)}}
                         .dump()
                  << '\n';
    }
    return kOk;
}

struct TrainFlags {
    ModelFlags model;
    std::string data, embeddings, output, history, metrics;
    std::optional<std::size_t> embed_limit;
    bool normalize = false;
    std::optional<double> min_accuracy;
};

int run_train(TrainFlags& f, const Globals& g, RunManifest& m)
{
    apply_preset(f.model);
    m.flag("resolved", json{{"n", f.model.n}, {"R", f.model.region}, {"epochs", f.model.epochs},
                            {"batch", f.model.batch}});
    m.input(f.data);
    m.input(f.embeddings);
    const auto docs = read_nonempty_corpus(f.data);
    const auto labels = require_labels(docs, f.data);
    const auto tokens = tokenize(docs);
    const auto table = EmbeddingTable::load_file(f.embeddings, f.embed_limit, f.normalize);
    const auto vocab = table.vocabulary();

    const ArchitectureConfig config = make_config(f.model, table.dim());
    const std::uint64_t split_seed = derive_seed(g.seed, "split");
    const std::uint64_t init_seed = derive_seed(g.seed, "init");
    m.seed("seed", g.seed);
    m.seed("split", split_seed);
    m.seed("init", init_seed);
    m.seed("shuffle", derive_seed(g.seed, "shuffle"));
    m.seed("dropout", derive_seed(g.seed, "dropout"));

    // Build first so a shape underflow fails before any training.
    auto model = build<float>(config, init_seed);

    const auto parts = split(labels, SplitSpec{0.70, 0.10, 0.20, split_seed});
    const auto train_set = make_examples(tokens, labels, parts.train, config.doc_length, vocab);
    const auto dev_set = make_examples(tokens, labels, parts.dev, config.doc_length, vocab);
    const auto test_set = make_examples(tokens, labels, parts.test, config.doc_length, vocab);

    TrainConfig tc;
    tc.batch_size = f.model.batch;
    tc.epochs = f.model.epochs;
    tc.adam.learning_rate = f.model.lr;
    tc.seed = g.seed;
    tc.deterministic = g.deterministic;
    tc.threads = g.threads;
    const History history = train(model, train_set, dev_set, table, tc);
    const Metrics metrics = evaluate(model, test_set, table);

    for (const auto& e : history.epochs) {
        std::cerr << "epoch " << e.epoch << "  train_loss " << e.train_loss << "  dev_accuracy " << e.dev_accuracy
                  << '\n';
    }
    {
        auto out = open_output(f.output, true);
        save(model, out);
        if (!out) {
            throw OutputError("failed writing " + f.output);
        }
    }
    const std::string history_path = f.history.empty() ? f.output + ".history.csv" : f.history;
    const std::string metrics_path = f.metrics.empty() ? f.output + ".metrics.json" : f.metrics;
    write_text(history_path, history_csv(history));
    json mj = metrics_json(metrics);
    mj["split"] = {{"train", parts.train.size()}, {"dev", parts.dev.size()}, {"test", parts.test.size()}};
    write_text(metrics_path, mj.dump(2) + "\n");
    m.output(f.output);
    m.output(history_path);
    m.output(metrics_path);
    std::cout << mj.dump() << '\n';

    if (f.min_accuracy && metrics.accuracy < *f.min_accuracy) {
        std::cerr << "test accuracy " << metrics.accuracy << " is below --min-accuracy " << *f.min_accuracy << '\n';
        return kCheckFailed;
    }
    return kOk;
}

struct BaselineFlags {
    std::string data, output;
    std::vector<double> grid = {1e-4, 1e-3, 1e-2, 1e-1, 1.0};
    std::optional<double> min_accuracy;
};

int run_baseline(const BaselineFlags& f, const Globals& g, RunManifest& m)
{
    m.input(f.data);
    const auto docs = read_nonempty_corpus(f.data);
    const auto labels = require_labels(docs, f.data);
    const auto tokens = tokenize(docs);
    const std::uint64_t split_seed = derive_seed(g.seed, "split");
    m.seed("seed", g.seed);
    m.seed("split", split_seed);
    const auto parts = split(labels, SplitSpec{0.70, 0.10, 0.20, split_seed});

    std::vector<TokenSequence> train_tokens;
    for (auto i : parts.train) train_tokens.push_back(tokens[i]);
    const auto model = TfidfModel::fit(train_tokens);
    auto features = [&](const std::vector<std::size_t>& idx) {
        std::vector<SparseVector> x;
        for (auto i : idx) x.push_back(model.transform(tokens[i]));
        return x;
    };
    auto pick_labels = [&](const std::vector<std::size_t>& idx) {
        std::vector<int> y;
        for (auto i : idx) y.push_back(labels[i]);
        return y;
    };
    const auto best = logreg_train(features(parts.train), pick_labels(parts.train), features(parts.dev),
                                   pick_labels(parts.dev), model.dimension(), f.grid);
    std::vector<double> probs;
    for (const auto& x : features(parts.test)) probs.push_back(logreg_predict(best.model, x));
    const Metrics metrics = evaluate_predictions(probs, pick_labels(parts.test));

    json j = metrics_json(metrics);
    j["l2"] = best.model.l2;
    j["dev_accuracy"] = best.dev_accuracy;
    j["grid"] = best.scores;
    j["features"] = model.dimension();
    if (!f.output.empty()) {
        write_text(f.output, j.dump(2) + "\n");
        m.output(f.output);
    }
    std::cout << j.dump() << '\n';
    if (f.min_accuracy && metrics.accuracy < *f.min_accuracy) {
        std::cerr << "test accuracy " << metrics.accuracy << " is below --min-accuracy " << *f.min_accuracy << '\n';
        return kCheckFailed;
    }
    return kOk;
}

struct ModelDataFlags {
    std::string model, data, embeddings, output;
    std::optional<std::size_t> embed_limit;
    bool normalize = false;
    std::optional<double> min_accuracy;
};

struct Loaded {
    Model<float> model;
    EmbeddingTable table;
    std::vector<RawDocument> docs;
    std::vector<PaddedDocument> padded;
};

Loaded load_model_and_data(const ModelDataFlags& f, RunManifest& m)
{
    m.input(f.model);
    m.input(f.data);
    m.input(f.embeddings);
    Loaded l{load_checkpoint_file(f.model), EmbeddingTable::load_file(f.embeddings, f.embed_limit, f.normalize),
             read_nonempty_corpus(f.data), {}};
    if (l.table.dim() != l.model.config.embed_dim) {
        throw ShapeError("embedding dimension " + std::to_string(l.table.dim()) + " does not match the model's d=" +
                         std::to_string(l.model.config.embed_dim));
    }
    const auto vocab = l.table.vocabulary();
    for (const auto& t : tokenize(l.docs)) {
        l.padded.push_back(clip_pad(t, l.model.config.doc_length, vocab));
    }
    return l;
}

int run_eval(const ModelDataFlags& f, RunManifest& m)
{
    const auto l = load_model_and_data(f, m);
    const auto labels = require_labels(l.docs, f.data);
    std::vector<Example> set;
    for (std::size_t i = 0; i < l.padded.size(); ++i) set.push_back({l.padded[i], labels[i]});
    const Metrics metrics = evaluate(l.model, set, l.table);
    const json j = metrics_json(metrics);
    if (!f.output.empty()) {
        write_text(f.output, j.dump(2) + "\n");
        m.output(f.output);
    }
    std::cout << j.dump() << '\n';
    if (f.min_accuracy && metrics.accuracy < *f.min_accuracy) {
        std::cerr << "accuracy " << metrics.accuracy << " is below --min-accuracy " << *f.min_accuracy << '\n';
        return kCheckFailed;
    }
    return kOk;
}

int run_predict(const ModelDataFlags& f, RunManifest& m)
{
    const auto l = load_model_and_data(f, m);
    std::ostringstream os;
    for (std::size_t i = 0; i < l.padded.size(); ++i) {
        const double p = l.model.predict(document_tensor<float>(l.padded[i], l.table));
        os << json{{"id", l.docs[i].id}, {"probability", p}, {"label", p > 0.5 ? "positive" : "negative"}}.dump()
           << '\n';
    }
    if (f.output.empty()) {
        std::cout << os.str();
    } else {
        write_text(f.output, os.str());
        m.output(f.output);
    }
    return kOk;
}

struct GradcheckFlags {
    std::string variant = "all";
    std::size_t n = 20, d = 8, m = 4, width = 3, depth = 4, region = 2, stride = 2, dense = 6;
    double eps = 1e-5, tolerance = 1e-4;
};

int run_gradcheck(const GradcheckFlags& f, const Globals& g, RunManifest& m)
{
    const std::vector<std::string> variants =
        f.variant == "all" ? std::vector<std::string>{"basic", "pyramid", "fluctuating"}
                           : std::vector<std::string>{f.variant};
    m.seed("seed", g.seed);
    double worst = 0.0;
    json report = json::array();
    for (const auto& v : variants) {
        ArchitectureConfig c;
        c.variant = parse_variant(v);
        c.doc_length = f.n;
        c.embed_dim = f.d;
        c.filters = f.m;
        c.width = f.width;
        c.depth = f.depth;
        c.pool_region = f.region;
        c.stride = f.stride;
        c.dense_units = f.dense;
        // Tanh keeps the finite differences away from relu kinks.
        c.conv_activation = Activation::tanh;
        auto model = build<double>(c, derive_seed(g.seed, "init"));
        Rng rng(derive_seed(g.seed, "input"));
        Tensor<double> x({c.doc_length, c.embed_dim});
        for (auto& value : x.values) value = uniform(rng, -1.0, 1.0);
        const int target = static_cast<int>(uniform_index(rng, 2));
        const auto r = gradcheck(model.network, x, target, f.eps);
        worst = std::max(worst, r.max_relative_error);
        report.push_back({{"variant", v},
                          {"max_relative_error", r.max_relative_error},
                          {"worst_parameter", r.worst_parameter},
                          {"checked", r.checked}});
        std::cout << v << "\tmax relative error " << r.max_relative_error << "\t(" << r.checked
                  << " parameters, worst " << r.worst_parameter << ")\n";
    }
    m.flag("report", report);
    if (!(worst < f.tolerance)) {
        std::cerr << "gradcheck: " << worst << " exceeds tolerance " << f.tolerance << '\n';
        return kCheckFailed;
    }
    return kOk;
}

struct AnalogyFlags {
    std::string embeddings, a, b, c;
    std::size_t k = 10;
    std::optional<std::size_t> limit;
};

int run_analogy(const AnalogyFlags& f, RunManifest& m)
{
    m.input(f.embeddings);
    const auto table = EmbeddingTable::load_file(f.embeddings, f.limit);
    for (const auto& [word, s] : analogy(f.a, f.b, f.c, f.k, table)) {
        std::cout << word << '\t' << s << '\n';
    }
    return kOk;
}

struct LabelFlags {
    std::string lexicon, input, output, synsets, filter, mode = "quadrant";
    double vt = 0.34, at = 0.34;
};

AffectLexicon load_lexicon(const LabelFlags& f, RunManifest& m)
{
    m.input(f.lexicon);
    AffectLexicon lex = read_lexicon_file(f.lexicon);
    if (!f.synsets.empty()) {
        m.input(f.synsets);
        std::ifstream s(f.synsets);
        if (!s) throw InputError("cannot open " + f.synsets);
        std::set<std::string, std::less<>> filter;
        if (!f.filter.empty()) {
            m.input(f.filter);
            std::ifstream fl(f.filter);
            if (!fl) throw InputError("cannot open " + f.filter);
            filter = read_filter(fl);
        }
        lex = expand_lexicon(lex, read_synsets(s), filter);
    }
    return lex;
}

json score_json(const std::string& id, const AffectScore& s)
{
    return {{"id", id}, {"v", s.defined() ? json(s.v) : json(nullptr)},
            {"a", s.defined() ? json(s.a) : json(nullptr)}, {"hits", s.hits}};
}

int run_label(const LabelFlags& f, RunManifest& m)
{
    const AffectLexicon lex = load_lexicon(f, m);
    m.input(f.input);
    const auto docs = read_nonempty_corpus(f.input);
    std::ostringstream os;
    std::map<std::string, std::size_t> tally;
    for (const auto& d : docs) {
        const AffectScore s = score(clean(d.text), lex);
        json j = score_json(d.id, s);
        const std::string label = f.mode == "polarity" ? std::string(to_string(polarity(s, f.vt)))
                                                       : std::string(to_string(quadrant(s, {f.vt, f.at})));
        j["label"] = label;
        ++tally[label];
        os << j.dump() << '\n';
    }
    if (f.output.empty()) {
        std::cout << os.str();
    } else {
        write_text(f.output, os.str());
        m.output(f.output);
        std::cout << json(tally).dump() << '\n';
    }
    return kOk;
}

struct CalibrateFlags {
    LabelFlags label;
    double start = 0.25, step = 0.01;
    std::size_t floor = 50;
};

int run_calibrate(const CalibrateFlags& f, RunManifest& m)
{
    const AffectLexicon lex = load_lexicon(f.label, m);
    m.input(f.label.input);
    std::ifstream in(f.label.input);
    if (!in) throw InputError("cannot open " + f.label.input);
    std::vector<GoldScore> corpus;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = f.label.input + " line " + std::to_string(number);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw InputError(where + ": " + e.what());
        }
        if (!j.contains("text") || !j["text"].is_string() || !j.contains("mood") || !j["mood"].is_string()) {
            throw InputError(where + ": expected {\"text\": string, \"mood\": happy|angry|sad|relaxed}");
        }
        const auto mood = parse_mood(j["mood"].get<std::string>());
        if (!mood || *mood == MoodLabel::unknown) {
            throw InputError(where + ": unknown mood '" + j["mood"].get<std::string>() + "'");
        }
        corpus.push_back({score(clean(j["text"].get<std::string>()), lex), *mood});
    }
    CalibrationOptions opt;
    opt.step = f.step;
    opt.start = f.start;
    opt.floor = f.floor;
    const auto r = calibrate(corpus, opt);
    json j;
    if (!r) {
        j = {{"result", nullptr}, {"reason", "fewer than floor documents labeled at the first threshold"}};
    } else {
        json sweep = json::array();
        for (const auto& p : r->sweep) {
            sweep.push_back({{"threshold", p.threshold}, {"labeled", p.labeled}, {"agreement", p.agreement}});
        }
        j = {{"vt", r->vt}, {"at", r->at}, {"agreement", r->agreement}, {"labeled_count", r->labeled_count},
             {"sweep", sweep}};
    }
    if (!f.label.output.empty()) {
        write_text(f.label.output, j.dump(2) + "\n");
        m.output(f.label.output);
    }
    std::cout << j.dump() << '\n';
    return r ? kOk : kCheckFailed;
}

struct AnnotateFlags {
    std::string tags, output, folksonomy, rule = "4q";
};

int run_annotate(const AnnotateFlags& f, RunManifest& m)
{
    const Rule rule = *parse_rule(f.rule);
    Folksonomy folk;
    if (!f.folksonomy.empty()) {
        m.input(f.folksonomy);
        folk = Folksonomy::load_file(f.folksonomy);
    }
    m.input(f.tags);
    std::ifstream in(f.tags);
    if (!in) throw InputError("cannot open " + f.tags);
    std::ostringstream os;
    std::map<std::string, std::size_t> tally;
    for (const auto& t : read_track_tags(in)) {
        const json j = annotation_json(t, count(t, folk), rule);
        ++tally[j["label"].get<std::string>()];
        os << j.dump() << '\n';
    }
    if (f.output.empty()) {
        std::cout << os.str();
    } else {
        write_text(f.output, os.str());
        m.output(f.output);
        std::cout << json(tally).dump() << '\n';
    }
    return kOk;
}

struct AuditFlags {
    std::string rule = "4q", output;
    std::size_t max_total = 40;
};

int run_audit(const AuditFlags& f, RunManifest& m)
{
    const auto report = purity_audit(*parse_rule(f.rule), f.max_total);
    const json j = audit_json(report);
    for (const auto& t : report.per_tier) {
        std::cout << "tier " << t.tier << "\tminimum purity " << t.min_purity.str() << " = " << t.min_purity.value()
                  << "\t(" << t.accepted << " accepted)\n";
    }
    std::cout << "overall\tminimum purity " << report.overall.str() << " = " << report.overall.value() << '\n';
    std::cout << "gaps " << report.gaps.size() << ", overlaps " << report.overlaps.size()
              << ", monotonicity violations " << report.monotonic_violations << '\n';
    if (!f.output.empty()) {
        write_text(f.output, j.dump(2) + "\n");
        m.output(f.output);
    }
    return kOk;
}

std::map<std::string, std::string> read_label_map(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path + " line " + std::to_string(number);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw InputError(where + ": " + e.what());
        }
        const char* key = j.contains("track_id") ? "track_id" : "id";
        if (!j.contains(key) || !j[key].is_string() || !j.contains("label") || !j["label"].is_string()) {
            throw InputError(where + ": expected an id (or track_id) and a label");
        }
        out[j[key].get<std::string>()] = j["label"].get<std::string>();
    }
    return out;
}

struct AgreeFlags {
    std::string reference, candidate, output;
};

int run_agree(const AgreeFlags& f, RunManifest& m)
{
    m.input(f.reference);
    m.input(f.candidate);
    const auto r = agreement(read_label_map(f.reference), read_label_map(f.candidate),
                             {"Q1", "Q2", "Q3", "Q4", "happy", "angry", "sad", "relaxed", "positive", "negative"});
    // Drop the preset labels that never occur.
    json j{{"shared", r.shared}, {"overall", r.overall}, {"labels", json::array()}, {"matrix", json::array()}};
    std::vector<std::size_t> used;
    for (std::size_t i = 0; i < r.labels.size(); ++i) {
        std::size_t total = 0;
        for (std::size_t k = 0; k < r.labels.size(); ++k) total += r.matrix[i][k] + r.matrix[k][i];
        if (total > 0) used.push_back(i);
    }
    for (auto i : used) {
        j["labels"].push_back(r.labels[i]);
        json row = json::array();
        for (auto k : used) row.push_back(r.matrix[i][k]);
        j["matrix"].push_back(row);
    }
    if (!f.output.empty()) {
        write_text(f.output, j.dump(2) + "\n");
        m.output(f.output);
    }
    std::cout << j.dump() << '\n';
    return kOk;
}

struct SimilarityFlags {
    std::string embeddings, folksonomy, output;
    std::optional<std::size_t> limit;
};

int run_similarity(const SimilarityFlags& f, RunManifest& m)
{
    m.input(f.embeddings);
    const auto table = EmbeddingTable::load_file(f.embeddings, f.limit);
    Folksonomy folk;
    if (!f.folksonomy.empty()) {
        m.input(f.folksonomy);
        folk = Folksonomy::load_file(f.folksonomy);
    }
    json j{{"intra", json::object()}, {"inter", json::array()}, {"missing", json::array()}};
    for (std::size_t q = 0; q < 4; ++q) {
        const auto s = intra_similarity(folk.cluster(q), table);
        j["intra"][std::string(kQuadrantNames[q])] = s.value;
        for (const auto& w : s.missing) j["missing"].push_back(w);
        std::cout << kQuadrantNames[q] << "\tintra " << s.value << '\n';
    }
    for (const auto& p : ranked_inter_similarities(folk, table)) {
        const std::string pair = std::string(kQuadrantNames[p.a]) + "-" + std::string(kQuadrantNames[p.b]);
        j["inter"].push_back({{"pair", pair}, {"similarity", p.value}});
        std::cout << pair << "\tinter " << p.value << '\n';
    }
    if (!f.output.empty()) {
        write_text(f.output, j.dump(2) + "\n");
        m.output(f.output);
    }
    return kOk;
}

struct SummaryFlags {
    ModelFlags model;
    std::size_t d = 300;
};

int run_summary(SummaryFlags& f)
{
    apply_preset(f.model);
    const auto model = build<float>(make_config(f.model, f.d));
    std::cout << summary_text(summary(model));
    return kOk;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"NgramCNN sentiment toolkit"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);
    // Global flags are accepted before or after the command name.
    app.fallthrough();

    Globals g;
    app.add_option("--seed", g.seed, "master seed; every sub-seed is derived from it")->capture_default_str();
    app.add_option("--threads", g.threads, "worker cap")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_flag("--deterministic,!--no-deterministic", g.deterministic, "ordered gradient reduction")
        ->capture_default_str();
    app.add_option("--manifest", g.manifest, "run manifest path (default: beside the main output)");

    PrepFlags prep;
    auto* prep_cmd = app.add_subcommand("prep", "clean, clip and optionally index a corpus");
    prep_cmd->add_option("--input", prep.input)->required()->check(CLI::ExistingFile);
    prep_cmd->add_option("--output", prep.output)->required();
    prep_cmd->add_option("--max-len", prep.max_len)->required()->check(CLI::PositiveNumber);
    prep_cmd->add_option("--embeddings", prep.embeddings, "add padded token_ids against this vocabulary");
    prep_cmd->add_flag("--stats", prep.stats, "print document length statistics");

    TrainFlags tr;
    auto* train_cmd = app.add_subcommand("train", "train an NgramCNN model");
    train_cmd->add_option("--data", tr.data)->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--embeddings", tr.embeddings)->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--output", tr.output, "checkpoint path")->required();
    train_cmd->add_option("--history", tr.history, "default: <output>.history.csv");
    train_cmd->add_option("--metrics", tr.metrics, "default: <output>.metrics.json");
    train_cmd->add_option("--embed-limit", tr.embed_limit, "load only the first N vectors");
    train_cmd->add_flag("--normalize", tr.normalize, "L2-normalize word vectors");
    train_cmd->add_option("--min-accuracy", tr.min_accuracy, "exit 6 when test accuracy is lower");
    add_model_flags(train_cmd, tr.model, true);

    BaselineFlags base;
    auto* base_cmd = app.add_subcommand("baseline", "tf-idf + logistic regression on the same split");
    base_cmd->add_option("--data", base.data)->required()->check(CLI::ExistingFile);
    base_cmd->add_option("--output", base.output);
    base_cmd->add_option("--grid", base.grid, "L2 values")->capture_default_str();
    base_cmd->add_option("--min-accuracy", base.min_accuracy);

    ModelDataFlags ev, pr;
    for (auto [name, flags, help] : {std::tuple{"eval", &ev, "accuracy of a checkpoint on labeled data"},
                                     std::tuple{"predict", &pr, "probabilities for every document"}}) {
        auto* cmd = app.add_subcommand(name, help);
        cmd->add_option("--model", flags->model)->required()->check(CLI::ExistingFile);
        cmd->add_option("--data", flags->data)->required()->check(CLI::ExistingFile);
        cmd->add_option("--embeddings", flags->embeddings)->required()->check(CLI::ExistingFile);
        cmd->add_option("--output", flags->output);
        cmd->add_option("--embed-limit", flags->embed_limit);
        cmd->add_flag("--normalize", flags->normalize);
        if (flags == &ev) {
            cmd->add_option("--min-accuracy", flags->min_accuracy);
        }
    }

    GradcheckFlags gc;
    auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of every variant");
    gc_cmd->add_option("--variant", gc.variant)
        ->check(CLI::IsMember({"all", "basic", "pyramid", "fluctuating"}))
        ->capture_default_str();
    gc_cmd->add_option("--n", gc.n)->capture_default_str();
    gc_cmd->add_option("--d", gc.d)->capture_default_str();
    gc_cmd->add_option("--m", gc.m)->capture_default_str();
    gc_cmd->add_option("--W", gc.width)->capture_default_str();
    gc_cmd->add_option("--L", gc.depth)->capture_default_str();
    gc_cmd->add_option("--R", gc.region)->capture_default_str();
    gc_cmd->add_option("--stride", gc.stride)->capture_default_str();
    gc_cmd->add_option("--dense", gc.dense)->capture_default_str();
    gc_cmd->add_option("--eps", gc.eps)->capture_default_str();
    gc_cmd->add_option("--tolerance", gc.tolerance)->capture_default_str();

    AnalogyFlags an;
    auto* an_cmd = app.add_subcommand("analogy", "rank words by cos(b - a + c)");
    an_cmd->add_option("--embeddings", an.embeddings)->required()->check(CLI::ExistingFile);
    an_cmd->add_option("--a", an.a)->required();
    an_cmd->add_option("--b", an.b)->required();
    an_cmd->add_option("--c", an.c)->required();
    an_cmd->add_option("--k", an.k)->capture_default_str()->check(CLI::PositiveNumber);
    an_cmd->add_option("--limit", an.limit);

    auto add_lexicon_flags = [](CLI::App* cmd, LabelFlags& f) {
        cmd->add_option("--lexicon", f.lexicon, "CSV word,valence,arousal")->required()->check(CLI::ExistingFile);
        cmd->add_option("--input", f.input)->required()->check(CLI::ExistingFile);
        cmd->add_option("--output", f.output);
        cmd->add_option("--synsets", f.synsets, "JSON-lines synsets for lexicon expansion");
        cmd->add_option("--filter", f.filter, "affect synset ids, one per line");
    };
    LabelFlags lb;
    auto* lb_cmd = app.add_subcommand("label", "valence/arousal labels from an affect lexicon");
    add_lexicon_flags(lb_cmd, lb);
    lb_cmd->add_option("--vt", lb.vt)->capture_default_str()->check(CLI::Range(0.0, 4.0));
    lb_cmd->add_option("--at", lb.at)->capture_default_str()->check(CLI::Range(0.0, 4.0));
    lb_cmd->add_option("--mode", lb.mode)->check(CLI::IsMember({"quadrant", "polarity"}))->capture_default_str();

    CalibrateFlags cal;
    auto* cal_cmd = app.add_subcommand("calibrate", "sweep Vt = At against gold moods");
    add_lexicon_flags(cal_cmd, cal.label);
    cal_cmd->add_option("--start", cal.start)->capture_default_str();
    cal_cmd->add_option("--step", cal.step)->capture_default_str();
    cal_cmd->add_option("--floor", cal.floor)->capture_default_str();

    AnnotateFlags at;
    auto* at_cmd = app.add_subcommand("annotate", "label tracks from social tags");
    at_cmd->add_option("--tags", at.tags)->required()->check(CLI::ExistingFile);
    at_cmd->add_option("--rule", at.rule)->check(CLI::IsMember({"4q", "pn"}))->capture_default_str();
    at_cmd->add_option("--folksonomy", at.folksonomy, "JSON {\"Q1\": [...], ...}");
    at_cmd->add_option("--output", at.output);

    AuditFlags au;
    auto* au_cmd = app.add_subcommand("audit", "exhaustive purity audit of an annotation rule");
    au_cmd->add_option("--rule", au.rule)->check(CLI::IsMember({"4q", "pn"}))->capture_default_str();
    au_cmd->add_option("--max-total", au.max_total)->capture_default_str();
    au_cmd->add_option("--output", au.output);

    AgreeFlags ag;
    auto* ag_cmd = app.add_subcommand("agree", "agreement matrix of two label files");
    ag_cmd->add_option("--reference", ag.reference)->required()->check(CLI::ExistingFile);
    ag_cmd->add_option("--candidate", ag.candidate)->required()->check(CLI::ExistingFile);
    ag_cmd->add_option("--output", ag.output);

    SimilarityFlags sim;
    auto* sim_cmd = app.add_subcommand("similarity", "intra- and inter-cluster tag similarity");
    sim_cmd->add_option("--embeddings", sim.embeddings)->required()->check(CLI::ExistingFile);
    sim_cmd->add_option("--folksonomy", sim.folksonomy);
    sim_cmd->add_option("--limit", sim.limit);
    sim_cmd->add_option("--output", sim.output);

    SummaryFlags sm;
    auto* sm_cmd = app.add_subcommand("summary", "layer shapes and parameter counts");
    add_model_flags(sm_cmd, sm.model, false);
    sm_cmd->add_option("--d", sm.d, "embedding dimension")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    CLI::App* sub = app.get_subcommands().front();
    const std::string command = sub->get_name();
    std::string primary;
    const std::map<std::string, std::string> outputs = {
        {"prep", prep.output},   {"train", tr.output},          {"baseline", base.output}, {"eval", ev.output},
        {"predict", pr.output},  {"label", lb.output},          {"calibrate", cal.label.output},
        {"annotate", at.output}, {"audit", au.output},          {"agree", ag.output},
        {"similarity", sim.output}};
    if (const auto it = outputs.find(command); it != outputs.end()) {
        primary = it->second;
    }

    RunManifest manifest(command);
    record_flags(manifest, app, *sub);
    manifest.flag("deterministic", g.deterministic);
    int code = kInternal;
    try {
        if (command == "prep") code = run_prep(prep, manifest);
        else if (command == "train") code = run_train(tr, g, manifest);
        else if (command == "baseline") code = run_baseline(base, g, manifest);
        else if (command == "eval") code = run_eval(ev, manifest);
        else if (command == "predict") code = run_predict(pr, manifest);
        else if (command == "gradcheck") code = run_gradcheck(gc, g, manifest);
        else if (command == "analogy") code = run_analogy(an, manifest);
        else if (command == "label") code = run_label(lb, manifest);
        else if (command == "calibrate") code = run_calibrate(cal, manifest);
        else if (command == "annotate") code = run_annotate(at, manifest);
        else if (command == "audit") code = run_audit(au, manifest);
        else if (command == "agree") code = run_agree(ag, manifest);
        else if (command == "similarity") code = run_similarity(sim, manifest);
        else if (command == "summary") return run_summary(sm);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << '\n';
        return kCheckpoint;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kInput;
    } catch (const ShapeError& e) {
        std::cerr << "shape error: " << e.what() << '\n';
        return kModel;
    } catch (const ArgumentError& e) {
        std::cerr << "invalid setting: " << e.what() << '\n';
        return kModel;
    } catch (const OutputError& e) {
        std::cerr << "output error: " << e.what() << '\n';
        return kOutput;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kInternal;
    }

    try {
        auto j = manifest.to_json();
        j["exit_code"] = code;
        write_text(manifest_path(g, command, primary), j.dump(2) + "\n");
    } catch (const OutputError& e) {
        std::cerr << "output error: " << e.what() << '\n';
        return kOutput;
    }
    return code;
}
