#include "doctest.h"

#include <algorithm>
#include <cctype>
#include <random>
#include <sstream>

#include "ngcnn/error.hpp"
#include "ngcnn/textprep.hpp"

using namespace ngcnn;

TEST_CASE("clean applies the preprocessing rules")
{
    CHECK(clean("<b>Great :) movie</b> the of") == TokenSequence{"great", ":)", "movie"});
    CHECK(clean("").empty());
    CHECK(clean("I couldn't RESIST!!") == TokenSequence{"i", "couldn", "t", "resist"});
}

TEST_CASE("clean keeps every protected smiley as one token")
{
    CHECK(clean(":D :-) :) :( :-( :P") == TokenSequence{":d", ":-)", ":)", ":(", ":-(", ":p"});
    CHECK(clean("so good:)") == TokenSequence{"so", "good", ":)"});
    // A letter smiley glued to a word is not a smiley.
    CHECK(clean(":Done") == TokenSequence{"done"});
    CHECK(clean(":-D") == TokenSequence{"d"});
}

TEST_CASE("clean strips markup and junk")
{
    CHECK(clean("a<br/>b") == TokenSequence{"b"});
    CHECK(clean("x <!-- note --> y") == TokenSequence{"x", "y"});
    CHECK(clean("3 < 4 and 5 > 2") == TokenSequence{"3", "4", "and", "5", "2"});
    CHECK(clean("we'll they'd it's don't I'm") ==
          TokenSequence{"we", "ll", "they", "d", "it", "s", "don", "t", "i", "m"});
    CHECK(clean("caf\xc3\xa9 na\xc3\xafve") == TokenSequence{"caf", "na", "ve"});
}

TEST_CASE("stopword subset")
{
    for (auto w : kStopwords) {
        CHECK(is_stopword(w));
    }
    CHECK_FALSE(is_stopword("and"));
    CHECK(clean("The THESE those This of At that A for An as By").empty());
}

namespace {

std::string random_text(std::mt19937_64& rng)
{
    static const std::vector<std::string> pieces = {
        "the", "The", "A", "movie", "GOOD", ":)", ":-(", ":D", ":p", "<b>", "</b>", "<br/>", "don't", "'s",
        "!!", "?", "...", "x", "1984", "caf\xc3\xa9", "\t", "\n", "  ", ":", "-", ")", "<", ">", "&amp;", "by"};
    std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
    std::uniform_int_distribution<int> len(0, 25);
    std::uniform_int_distribution<int> space(0, 2);
    std::string s;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) {
        s += pieces[pick(rng)];
        if (space(rng) > 0) {
            s += ' ';
        }
    }
    return s;
}

}  // namespace

TEST_CASE("clean invariants on random text")
{
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::string text = random_text(rng);
        const TokenSequence tokens = clean(text);
        CAPTURE(text);
        CHECK(clean(join(tokens)) == tokens);
        for (const auto& t : tokens) {
            CHECK_FALSE(t.empty());
            CHECK_FALSE(is_stopword(t));
            CHECK(std::none_of(t.begin(), t.end(), [](unsigned char c) { return std::isupper(c); }));
            if (!std::isalnum(static_cast<unsigned char>(t[0]))) {
                CHECK(is_protected_smiley(t));
            }
        }
    }
}

TEST_CASE("clip_pad")
{
    const std::vector<std::string> words = {"a", "b", "c"};
    const Vocabulary vocab(words);
    CHECK(vocab.lookup("a") == 2);
    CHECK(vocab.lookup("zzz") == Vocabulary::unknown);

    CHECK(clip_pad({"a", "b"}, 4, vocab).token_ids == std::vector<std::uint32_t>{2, 3, 0, 0});
    CHECK(clip_pad({"a", "b", "c"}, 2, vocab).token_ids == std::vector<std::uint32_t>{2, 3});
    CHECK(clip_pad({"q"}, 2, vocab).token_ids == std::vector<std::uint32_t>{1, 0});
    CHECK(clip_pad({}, 3, vocab).token_ids == std::vector<std::uint32_t>{0, 0, 0});
    CHECK_THROWS_AS(clip_pad({"a"}, 0, vocab), ArgumentError);

    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 500; ++trial) {
        TokenSequence doc(rng() % 12, "a");
        const std::size_t n = 1 + rng() % 10;
        const auto ids = clip_pad(doc, n, vocab).token_ids;
        REQUIRE(ids.size() == n);
        const auto first_pad = std::find(ids.begin(), ids.end(), Vocabulary::pad);
        CHECK(std::all_of(first_pad, ids.end(), [](auto id) { return id == Vocabulary::pad; }));
    }
}

TEST_CASE("length_stats")
{
    const std::vector<TokenSequence> corpus = {{"a", "b", "c"}, {"a", "b", "c", "d", "e"}};
    const auto s = length_stats(corpus);
    CHECK(s.min == 3);
    CHECK(s.mean == doctest::Approx(4.0));
    CHECK(s.max == 5);

    const std::vector<TokenSequence> one = {{"x", "y"}};
    const auto t = length_stats(one);
    CHECK(t.min == 2);
    CHECK(t.max == 2);
    CHECK(t.mean == 2.0);

    CHECK_THROWS_AS(length_stats(std::vector<TokenSequence>{}), InputError);
    CHECK(clipped_fraction(corpus, 4) == doctest::Approx(0.5));
}

TEST_CASE("JSON-lines corpus reader")
{
    std::istringstream in(
        R"({"id":"d1","text":"Fine film","label":"positive"})"
        "\n\n"
        R"({"id":"d2","text":"Dull","label":"negative"})"
        "\n"
        R"({"id":"d3","text":"no label"})"
        "\n");
    const auto docs = read_jsonl_corpus(in);
    REQUIRE(docs.size() == 3);
    CHECK(docs[0].label == Polarity::positive);
    CHECK(docs[1].label == Polarity::negative);
    CHECK_FALSE(docs[2].label.has_value());

    std::istringstream bad("{\"id\":\"a\",\"text\":\"x\"}\n{oops\n");
    try {
        read_jsonl_corpus(bad);
        FAIL("expected InputError");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }

    std::istringstream dup("{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n");
    CHECK_THROWS_AS(read_jsonl_corpus(dup), InputError);
    std::istringstream empty_id("{\"id\":\"\",\"text\":\"x\"}\n");
    CHECK_THROWS_AS(read_jsonl_corpus(empty_id), InputError);
}

TEST_CASE("CSV corpus reader")
{
    std::istringstream in("id,text,label\n"
                          "1,\"He said \"\"hi\"\"\",positive\n"
                          "2,\"two\nlines\",negative\n"
                          "3,plain,\n");
    const auto docs = read_csv_corpus(in);
    REQUIRE(docs.size() == 3);
    CHECK(docs[0].text == "He said \"hi\"");
    CHECK(docs[1].text == "two\nlines");
    CHECK(docs[1].label == Polarity::negative);
    CHECK_FALSE(docs[2].label.has_value());

    std::istringstream missing("id,body\n1,x\n");
    CHECK_THROWS_AS(read_csv_corpus(missing), InputError);
}
