#include "doctest.h"

#include <cstring>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ngcnn/error.hpp"
#include "ngcnn/ngramcnn.hpp"

using namespace ngcnn;

namespace {

ArchitectureConfig small(Variant v)
{
    ArchitectureConfig c;
    c.variant = v;
    c.doc_length = 20;
    c.embed_dim = 8;
    c.filters = 4;
    c.dense_units = 6;
    c.pool_region = 2;
    c.stride = 2;
    return c;
}

Tensor<float> random_doc(const ArchitectureConfig& c, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> g;
    Tensor<float> t({c.doc_length, c.embed_dim});
    for (auto& v : t.values) v = g(rng);
    return t;
}

const LayerSummary& find_layer(const std::vector<LayerSummary>& s, const std::string& name)
{
    for (const auto& l : s) {
        if (l.name == name) return l;
    }
    FAIL("no layer " << name);
    return s.front();
}

}  // namespace

TEST_CASE("closed-form branch lengths")
{
    ArchitectureConfig imdb;
    imdb.doc_length = 400;
    imdb.pool_region = 5;
    for (std::size_t k = 1; k <= 3; ++k) {
        CHECK(stack_lengths(imdb, k).back() == 16);
    }
    CHECK(flattened_feature_count(imdb) == 3360);

    ArchitectureConfig sent;
    sent.doc_length = 30;
    sent.pool_region = 2;
    CHECK(stack_lengths(sent, 3) == std::vector<std::size_t>{28, 14, 12, 6});
}

TEST_CASE("length underflow is a build error")
{
    ArchitectureConfig c;
    c.doc_length = 3;
    c.pool_region = 25;
    c.embed_dim = 4;
    CHECK_THROWS_AS(build<float>(c), ShapeError);

    ArchitectureConfig p = small(Variant::pyramid);
    p.stride = 1;
    CHECK_THROWS_AS(build<float>(p), ArgumentError);

    ArchitectureConfig odd = small(Variant::basic);
    odd.depth = 3;
    CHECK_THROWS_AS(build<float>(odd), ArgumentError);
}

TEST_CASE("summary of the Imdb-sized basic network")
{
    ArchitectureConfig c;
    c.doc_length = 400;
    c.pool_region = 5;
    c.embed_dim = 50;
    const auto m = build<float>(c, 1);
    const auto s = summary(m);
    const auto& dense = find_layer(s, "dense");
    CHECK(dense.parameters == 268'880);
    CHECK(dense.shape == Shape{80});
    CHECK(find_layer(s, "concat").shape == Shape{3360});
    CHECK(find_layer(s, "k3.pool2").shape == Shape{16, 70});

    const std::string text = summary_text(s);
    CHECK(text.find("dense\t(80)\t268880\n") != std::string::npos);
    CHECK(text.find("total\t") != std::string::npos);
}

TEST_CASE("summary shapes equal runtime shapes")
{
    for (auto v : {Variant::basic, Variant::pyramid, Variant::fluctuating}) {
        const auto c = small(v);
        const auto m = build<float>(c, 2);
        const auto trace = m.network.forward(random_doc(c, 3), Mode::infer);
        const auto s = summary(m);
        REQUIRE(s.size() == m.network.nodes().size());
        for (std::size_t i = 0; i < s.size(); ++i) {
            CHECK(s[i].shape == trace.node_output(i).shape);
        }
        CHECK(trace.node_output(m.network.nodes().size() - 5).shape == Shape{flattened_feature_count(c)});
    }
}

TEST_CASE("pyramid differs from basic only in the downsampling stacks")
{
    const auto basic = summary(build<float>(small(Variant::basic)));
    const auto pyramid = summary(build<float>(small(Variant::pyramid)));
    REQUIRE(basic.size() == pyramid.size());
    for (std::size_t i = 0; i < basic.size(); ++i) {
        if (basic[i].name == pyramid[i].name) {
            CHECK(basic[i].kind == pyramid[i].kind);
            continue;
        }
        CHECK(basic[i].kind == "RegionalMaxPool");
        CHECK(pyramid[i].kind == "Conv1D");
        CHECK(pyramid[i].name.find(".down") != std::string::npos);
    }
}

TEST_CASE("basic and pyramid with s = R have the same output shapes")
{
    for (std::size_t n : {12, 20, 33, 57}) {
        for (std::size_t r : {2, 3}) {
            ArchitectureConfig b = small(Variant::basic);
            b.doc_length = n;
            b.pool_region = r;
            b.stride = r;
            ArchitectureConfig p = b;
            p.variant = Variant::pyramid;
            CHECK(flattened_feature_count(b) == flattened_feature_count(p));
            const auto mb = build<double>(b);
            const auto mp = build<double>(p);
            CHECK(mb.network.output_shape() == mp.network.output_shape());
            CHECK(mb.network.parameter_count() != mp.network.parameter_count());
        }
    }
}

TEST_CASE("branches are concatenated in ascending kernel order")
{
    const auto m = build<float>(small(Variant::basic));
    for (const auto& node : m.network.nodes()) {
        if (node.name == "concat") {
            REQUIRE(node.inputs.size() == 3);
            for (std::size_t k = 0; k < 3; ++k) {
                CHECK(m.network.nodes()[node.inputs[k]].name == "k" + std::to_string(k + 1) + ".flatten");
            }
        }
    }
}

TEST_CASE("fresh model predictions centre on one half")
{
    auto c = small(Variant::basic);
    const auto m = build<float>(c, 17);
    double sum = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double p = m.predict(random_doc(c, 100 + i));
        CHECK(p > 0.0);
        CHECK(p < 1.0);
        sum += p;
    }
    CHECK(sum / 100 == doctest::Approx(0.5).epsilon(0.2));
    CHECK(std::abs(sum / 100 - 0.5) <= 0.1);

    const auto doc = random_doc(c, 5);
    CHECK(m.predict(doc) == m.predict(doc));

    Tensor<float> wrong({c.doc_length + 1, c.embed_dim});
    CHECK_THROWS_AS(m.predict(wrong), ShapeError);
}

TEST_CASE("checkpoint round trip")
{
    for (auto v : {Variant::basic, Variant::pyramid, Variant::fluctuating}) {
        const auto c = small(v);
        const auto m = build<float>(c, 9);
        std::stringstream io;
        save(m, io);
        const auto back = load_checkpoint(io);
        CHECK(back.config == c);
        REQUIRE(back.network.parameters().size() == m.network.parameters().size());
        for (std::size_t i = 0; i < m.network.parameters().size(); ++i) {
            CHECK(back.network.parameters()[i].name == m.network.parameters()[i].name);
            CHECK(back.network.parameters()[i].value == m.network.parameters()[i].value);
        }
        const auto doc = random_doc(c, 4);
        CHECK(back.predict(doc) == m.predict(doc));
    }
}

TEST_CASE("checkpoint header layout")
{
    const auto m = build<float>(small(Variant::basic), 1);
    std::stringstream io;
    save(m, io);
    const std::string bytes = io.str();
    CHECK(bytes.substr(0, 4) == "NGC1");
    CHECK(bytes[4] == 1);
    CHECK(bytes[5] == 0);
    CHECK(bytes[6] == 0);
    CHECK(bytes[7] == 0);
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) {
        len |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
    }
    const auto config = nlohmann::json::parse(bytes.substr(12, len));
    CHECK(config.at("variant") == "basic");
}

TEST_CASE("corrupt checkpoints give distinct errors")
{
    const auto m = build<float>(small(Variant::basic), 1);
    std::stringstream io;
    save(m, io);
    const std::string good = io.str();

    auto kind_of = [](const std::string& bytes) {
        std::istringstream in(bytes);
        try {
            load_checkpoint(in);
        } catch (const CheckpointError& e) {
            return std::make_pair(e.kind(), std::string(e.what()));
        }
        FAIL("checkpoint loaded");
        return std::make_pair(CheckpointError::Kind::malformed, std::string());
    };

    std::string magic = good;
    magic[0] = 'X';
    CHECK(kind_of(magic).first == CheckpointError::Kind::bad_magic);

    std::string version = good;
    version[4] = 2;
    CHECK(kind_of(version).first == CheckpointError::Kind::version_mismatch);

    const auto [kind, what] = kind_of(good.substr(0, good.size() - 3));
    CHECK(kind == CheckpointError::Kind::truncated);
    CHECK(what.find(m.network.parameters().back().name) != std::string::npos);

    CHECK(kind_of(good + "x").first == CheckpointError::Kind::malformed);
}

TEST_CASE("suggest_pool_region")
{
    // R=5 ends at 16, outside [7, 15]; R=6 ends at 11.
    CHECK(suggest_pool_region(400, 3, 4) == 6);
    // No R lands in range; R=2 ends at 6, the closest to 11.
    CHECK(suggest_pool_region(30, 3, 4) == 2);
    CHECK(suggest_pool_region(14, 3, 2) == 2);
    CHECK_THROWS_AS(suggest_pool_region(30, 3, 3), ArgumentError);
}

TEST_CASE("config JSON round trip")
{
    auto c = small(Variant::fluctuating);
    c.conv_activation = Activation::tanh;
    c.output_activation = OutputActivation::softplus;
    nlohmann::json j = c;
    CHECK(j.get<ArchitectureConfig>() == c);
}
