#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ngcnn/embeddings.hpp"
#include "ngcnn/error.hpp"
#include "ngcnn/lexlabel.hpp"
#include "ngcnn/ngramcnn.hpp"
#include "ngcnn/rng.hpp"
#include "ngcnn/tagann.hpp"
#include "ngcnn/textprep.hpp"
#include "ngcnn/trainer.hpp"

namespace py = pybind11;
using namespace ngcnn;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor<float> to_tensor(const FloatArray& a)
{
    if (a.ndim() != 2) {
        throw ShapeError("document matrix must be 2-D");
    }
    Tensor<float> t({static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))});
    std::copy_n(a.data(), t.size(), t.values.begin());
    return t;
}

std::vector<Example> examples(const std::vector<TokenSequence>& docs, const std::vector<int>& labels, std::size_t n,
                              const EmbeddingTable& table)
{
    if (docs.size() != labels.size()) {
        throw ArgumentError("got " + std::to_string(docs.size()) + " documents and " +
                            std::to_string(labels.size()) + " labels");
    }
    const auto vocab = table.vocabulary();
    std::vector<Example> out;
    out.reserve(docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i) {
        out.push_back({clip_pad(docs[i], n, vocab), labels[i]});
    }
    return out;
}

py::dict metrics_dict(const Metrics& m)
{
    py::dict d;
    d["accuracy"] = m.accuracy;
    d["loss"] = m.loss;
    d["tp"] = m.tp;
    d["fp"] = m.fp;
    d["tn"] = m.tn;
    d["fn"] = m.fn;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "NgramCNN text classification and affect labeling";

    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
    py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_IOError);

    m.def("derive_seed", py::overload_cast<std::uint64_t, std::string_view>(&derive_seed), py::arg("seed"),
          py::arg("purpose"));

    // text
    m.def("clean", [](const std::string& text) { return clean(text); }, py::arg("text"));
    m.def("read_corpus", [](const std::string& path) {
        py::list out;
        for (const auto& d : read_corpus_file(path)) {
            py::dict row;
            row["id"] = d.id;
            row["text"] = d.text;
            row["label"] = d.label ? py::cast(std::string(to_string(*d.label))) : py::none();
            out.append(row);
        }
        return out;
    });

    // embeddings
    py::class_<EmbeddingTable>(m, "EmbeddingTable")
        .def(py::init([](std::vector<std::string> words, const FloatArray& matrix) {
                 if (matrix.ndim() != 2 || static_cast<std::size_t>(matrix.shape(0)) != words.size()) {
                     throw ShapeError("matrix must have one row per word");
                 }
                 std::vector<float> values(matrix.data(), matrix.data() + matrix.size());
                 return EmbeddingTable(std::move(words), std::move(values), static_cast<std::size_t>(matrix.shape(1)));
             }),
             py::arg("words"), py::arg("matrix"))
        .def_static("load", &EmbeddingTable::load_file, py::arg("path"), py::arg("limit") = std::nullopt,
                    py::arg("normalize") = false)
        .def_property_readonly("dim", &EmbeddingTable::dim)
        .def_property_readonly("words", &EmbeddingTable::words)
        .def("__len__", &EmbeddingTable::size)
        .def("__contains__", [](const EmbeddingTable& t, const std::string& w) { return t.row_of(w).has_value(); })
        .def("vector",
             [](const EmbeddingTable& t, const std::string& w) {
                 const auto v = t.vector(w);
                 return std::vector<float>(v.begin(), v.end());
             })
        .def("embed", [](const EmbeddingTable& t, const TokenSequence& tokens, std::size_t n) {
            const auto doc = embed(clip_pad(tokens, n, t.vocabulary()), t);
            py::array_t<float> out({doc.rows, doc.cols});
            std::copy(doc.values.begin(), doc.values.end(), out.mutable_data());
            return out;
        }, py::arg("tokens"), py::arg("n"))
        .def("analogy", [](const EmbeddingTable& t, const std::string& a, const std::string& b, const std::string& c,
                           std::size_t k) { return analogy(a, b, c, k, t); },
             py::arg("a"), py::arg("b"), py::arg("c"), py::arg("k") = 10);

    m.def("cosine", [](const std::vector<double>& a, const std::vector<double>& b) {
        if (a.size() != b.size()) throw ShapeError("vectors differ in length");
        return cosine(std::span<const double>(a), std::span<const double>(b));
    });

    // model
    py::class_<ArchitectureConfig>(m, "Config")
        .def(py::init([](const std::string& variant, std::size_t n, std::size_t d, std::size_t width,
                         std::size_t depth, std::size_t filters, std::size_t region, std::size_t stride,
                         std::size_t dense, double dropout, double l2, const std::string& activation,
                         const std::string& output) {
                 ArchitectureConfig c;
                 c.variant = parse_variant(variant);
                 c.doc_length = n;
                 c.embed_dim = d;
                 c.width = width;
                 c.depth = depth;
                 c.filters = filters;
                 c.pool_region = region;
                 c.stride = stride;
                 c.dense_units = dense;
                 c.dropout_rate = dropout;
                 c.l2 = l2;
                 c.conv_activation = parse_activation(activation);
                 c.output_activation = parse_output_activation(output);
                 return c;
             }),
             py::arg("variant") = "basic", py::arg("n") = 30, py::arg("d") = 300, py::arg("W") = 3,
             py::arg("L") = 4, py::arg("filters") = 70, py::arg("R") = 2, py::arg("stride") = 2,
             py::arg("dense") = 80, py::arg("dropout") = 0.35, py::arg("l2") = 0.1, py::arg("activation") = "relu",
             py::arg("output") = "sigmoid")
        .def_property_readonly("variant", [](const ArchitectureConfig& c) { return std::string(to_string(c.variant)); })
        .def_readonly("n", &ArchitectureConfig::doc_length)
        .def_readonly("d", &ArchitectureConfig::embed_dim)
        .def_readonly("R", &ArchitectureConfig::pool_region)
        .def("to_json", [](const ArchitectureConfig& c) { return nlohmann::json(c).dump(); })
        .def("flattened_features", &flattened_feature_count)
        .def("__eq__", [](const ArchitectureConfig& a, const ArchitectureConfig& b) { return a == b; });

    py::class_<Model<float>>(m, "Model")
        .def_static("build", &build<float>, py::arg("config"), py::arg("seed") = 0)
        .def_static("load", &load_checkpoint_file, py::arg("path"))
        .def("save", [](const Model<float>& model, const std::string& path) { save_file(model, path); })
        .def_readonly("config", &Model<float>::config)
        .def_property_readonly("parameter_count", [](const Model<float>& model) {
            return model.network.parameter_count();
        })
        .def("predict", [](const Model<float>& model, const FloatArray& doc) {
            return model.predict(to_tensor(doc));
        })
        .def("summary", [](const Model<float>& model) {
            py::list out;
            for (const auto& l : summary(model)) {
                out.append(py::make_tuple(l.name, l.kind, l.shape, l.parameters));
            }
            return out;
        })
        .def("train",
             [](Model<float>& model, const std::vector<TokenSequence>& docs, const std::vector<int>& labels,
                const EmbeddingTable& table, std::size_t epochs, std::size_t batch, double lr, std::uint64_t seed,
                const std::vector<TokenSequence>& dev_docs, const std::vector<int>& dev_labels) {
                 const auto train_set = examples(docs, labels, model.config.doc_length, table);
                 const auto dev_set = examples(dev_docs, dev_labels, model.config.doc_length, table);
                 TrainConfig tc;
                 tc.epochs = epochs;
                 tc.batch_size = batch;
                 tc.adam.learning_rate = lr;
                 tc.seed = seed;
                 History h;
                 {
                     py::gil_scoped_release release;
                     h = train(model, train_set, dev_set, table, tc);
                 }
                 py::list epochs_out;
                 for (const auto& e : h.epochs) {
                     epochs_out.append(py::make_tuple(e.epoch, e.train_loss, e.dev_accuracy));
                 }
                 py::dict out;
                 out["initial_loss"] = h.initial_loss;
                 out["epochs"] = epochs_out;
                 return out;
             },
             py::arg("docs"), py::arg("labels"), py::arg("table"), py::arg("epochs") = 1, py::arg("batch") = 60,
             py::arg("lr") = 0.001, py::arg("seed") = 0, py::arg("dev_docs") = std::vector<TokenSequence>{},
             py::arg("dev_labels") = std::vector<int>{})
        .def("evaluate",
             [](const Model<float>& model, const std::vector<TokenSequence>& docs, const std::vector<int>& labels,
                const EmbeddingTable& table) {
                 return metrics_dict(evaluate(model, examples(docs, labels, model.config.doc_length, table), table));
             },
             py::arg("docs"), py::arg("labels"), py::arg("table"));

    m.def("gradcheck", [](const std::string& variant, std::uint64_t seed) {
        ArchitectureConfig c;
        c.variant = parse_variant(variant);
        c.doc_length = 20;
        c.embed_dim = 8;
        c.filters = 4;
        c.dense_units = 6;
        c.conv_activation = Activation::tanh;
        auto model = build<double>(c, seed);
        Rng rng(derive_seed(seed, "input"));
        Tensor<double> x({c.doc_length, c.embed_dim});
        for (auto& v : x.values) v = uniform(rng, -1.0, 1.0);
        return gradcheck(model.network, x, 1).max_relative_error;
    }, py::arg("variant"), py::arg("seed") = 0);

    m.def("split", [](const std::vector<int>& labels, double train, double dev, double test, std::uint64_t seed) {
        const auto s = split(labels, SplitSpec{train, dev, test, seed});
        return py::make_tuple(s.train, s.dev, s.test);
    }, py::arg("labels"), py::arg("train") = 0.7, py::arg("dev") = 0.1, py::arg("test") = 0.2, py::arg("seed") = 0);

    // affect lexicon
    py::class_<AffectLexicon>(m, "AffectLexicon")
        .def(py::init([](const std::map<std::string, std::pair<double, double>>& norms) {
                 std::map<std::string, Norms> entries;
                 for (const auto& [w, va] : norms) entries[w] = Norms{va.first, va.second, false};
                 return AffectLexicon(std::move(entries));
             }),
             py::arg("norms"))
        .def_static("load", &read_lexicon_file, py::arg("path"))
        .def("__len__", &AffectLexicon::size)
        .def("score", [](const AffectLexicon& lex, const TokenSequence& tokens) {
            const auto s = score(tokens, lex);
            return py::make_tuple(s.v, s.a, s.hits);
        })
        .def("quadrant",
             [](const AffectLexicon& lex, const TokenSequence& tokens, double vt, double at) {
                 return std::string(to_string(quadrant(score(tokens, lex), {vt, at})));
             },
             py::arg("tokens"), py::arg("vt") = 0.34, py::arg("at") = 0.34)
        .def("polarity",
             [](const AffectLexicon& lex, const TokenSequence& tokens, double vt) {
                 return std::string(to_string(polarity(score(tokens, lex), vt)));
             },
             py::arg("tokens"), py::arg("vt") = 0.34);

    // tag annotation
    m.def("annotate_4q", [](const QuadrantCounts& c) { return annotate4Q(c); }, py::arg("counts"));
    m.def("annotate_pn", [](const QuadrantCounts& c) { return annotatePN(c); }, py::arg("counts"));
    m.def("count_tags",
          [](const std::vector<std::string>& tags) {
              TrackTags t;
              for (const auto& tag : tags) t.tags.push_back(normalize_tag(tag));
              return count(t, Folksonomy());
          },
          py::arg("tags"));
    m.def("_purity_audit_json", [](const std::string& rule, std::size_t max_total) {
        const auto r = parse_rule(rule);
        if (!r) throw ArgumentError("rule must be 4q or pn");
        return audit_json(purity_audit(*r, max_total)).dump();
    }, py::arg("rule"), py::arg("max_total") = 40);
}
