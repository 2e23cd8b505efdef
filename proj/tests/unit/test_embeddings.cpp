#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "ngcnn/embeddings.hpp"
#include "ngcnn/error.hpp"

using namespace ngcnn;

namespace {

EmbeddingTable table_from(const std::string& text)
{
    std::istringstream in(text);
    return EmbeddingTable::load(in);
}

std::string error_of(const std::string& text)
{
    try {
        table_from(text);
    } catch (const InputError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("load infers the dimension")
{
    const auto t = table_from("a 1.0 0.0\nb 0.0 1.0\n");
    CHECK(t.dim() == 2);
    CHECK(t.size() == 2);
    CHECK(t.vector("b")[1] == 1.0f);
}

TEST_CASE("load reports bad lines")
{
    CHECK(error_of("a 1.0 0.0\nb 0.0 1.0\nc 1.0\n").find("line 3") != std::string::npos);
    CHECK(error_of("a 1.0 0.0\nb 0.0 x\n").find("line 2") != std::string::npos);
    CHECK_FALSE(error_of("").empty());
}

TEST_CASE("load skips a count/dim header and keeps the first duplicate")
{
    const auto t = table_from("3 2\na 1 2\nb 3 4\na 5 6\n");
    CHECK(t.size() == 2);
    CHECK(t.vector("a")[0] == 1.0f);

    std::istringstream in("a 1 0\nb 0 1\nc 1 1\n");
    CHECK(EmbeddingTable::load(in, 2).size() == 2);
}

TEST_CASE("save then load reproduces every vector")
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<float> u(-3.0f, 3.0f);
    std::vector<std::string> words;
    std::vector<float> m;
    for (int i = 0; i < 50; ++i) {
        words.push_back("w" + std::to_string(i));
        for (int j = 0; j < 7; ++j) {
            m.push_back(u(rng));
        }
    }
    const EmbeddingTable t(words, m, 7);
    std::stringstream io;
    t.save(io);
    const auto back = EmbeddingTable::load(io);
    REQUIRE(back.size() == t.size());
    for (const auto& w : words) {
        const auto a = t.vector(w);
        const auto b = back.vector(w);
        CHECK(std::equal(a.begin(), a.end(), b.begin()));
    }
}

TEST_CASE("embed")
{
    const auto t = table_from("a 1.0 0.0\nb 0.0 1.0\n");
    const auto vocab = t.vocabulary();
    const PaddedDocument doc{{vocab.lookup("a"), Vocabulary::pad}};
    const auto m = embed(doc, t);
    CHECK(m.values == std::vector<float>{1, 0, 0, 0});

    const auto pads = embed(PaddedDocument{{0, 0, 0}}, t);
    CHECK(std::all_of(pads.values.begin(), pads.values.end(), [](float v) { return v == 0.0f; }));

    // The OOV vector comes from mt19937_64 seeded with 0x6f6f76, mapped to
    // [-0.25, 0.25] with 53-bit uniforms.
    const auto unk = embed(PaddedDocument{{Vocabulary::unknown}}, t);
    CHECK(unk.values[0] == 0.212507114f);
    CHECK(unk.values[1] == -0.163284779f);
    const auto again = table_from("z 9 9\n");
    CHECK(again.oov_vector()[0] == 0.212507114f);
}

TEST_CASE("cosine")
{
    const std::vector<double> x{1, 0}, y{0, 1}, z{1, 1}, zero{0, 0};
    CHECK(cosine(x, x) == doctest::Approx(1.0));
    CHECK(cosine(x, y) == doctest::Approx(0.0));
    CHECK(std::abs(cosine(z, x) - 0.70710678118654752) < 1e-9);
    CHECK_THROWS_AS(cosine(zero, x), ArgumentError);

    std::mt19937_64 rng(9);
    std::normal_distribution<double> g;
    for (int i = 0; i < 200; ++i) {
        std::vector<double> a(16), b(16);
        for (auto& v : a) v = g(rng);
        for (auto& v : b) v = g(rng);
        CHECK(std::abs(cosine(a, a) - 1.0) < 1e-12);
        CHECK(cosine(a, b) == cosine(b, a));
    }
}

TEST_CASE("analogy")
{
    // vec(b) - vec(a) + vec(c) == vec(d) exactly.
    const auto t = table_from("a 1 0 0\nb 1 1 0\nc 0 0 1\nd 0 1 1\ne 1 0 1\n");
    const auto top = analogy("a", "b", "c", 1, t);
    REQUIRE(top.size() == 1);
    CHECK(top[0].first == "d");
    CHECK(top[0].second == doctest::Approx(1.0));

    try {
        analogy("a", "b", "nope", 1, t);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("nope") != std::string::npos);
    }
}

TEST_CASE("analogy with a == b ranks like nearest neighbours of c")
{
    std::mt19937_64 rng(21);
    std::normal_distribution<float> g;
    std::vector<std::string> words;
    std::vector<float> m;
    for (int i = 0; i < 40; ++i) {
        words.push_back("t" + std::to_string(i));
        for (int j = 0; j < 5; ++j) m.push_back(g(rng));
    }
    const EmbeddingTable t(words, m, 5);
    const auto c = t.vector("t7");
    const std::vector<double> target(c.begin(), c.end());
    const std::vector<std::string> exclude{"t3", "t7"};
    const auto expected = nearest(target, 10, t, exclude);
    const auto got = analogy("t3", "t3", "t7", 10, t);
    REQUIRE(got.size() == expected.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].first == expected[i].first);
    }
}

TEST_CASE("training cost formulas")
{
    CHECK(cbow_cost({1, 1000, 8, 100, 1024}) == 1'800'000);
    CHECK(cbow_cost({1, 1, 1, 1, 2}) == 2);
    CHECK(cbow_cost({2, 1000, 8, 100, 1024}) == 3'600'000);
    CHECK(skipgram_cost({1, 1000, 5, 100, 1024}) == 5'500'000);
    CHECK(skipgram_cost({1, 1, 1, 1, 2}) == 2);
    CHECK(skipgram_cost({1, 1000, 10, 100, 1024}) == 11'000'000);
    // log2(3) = 1.58496...; 1 * 1 * (1 + 1.58496) = 2.58 -> 3
    CHECK(cbow_cost({1, 1, 1, 1, 3}) == 3);
}
