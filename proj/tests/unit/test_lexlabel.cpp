#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "ngcnn/error.hpp"
#include "ngcnn/lexlabel.hpp"

using namespace ngcnn;

namespace {

AffectLexicon lex(std::initializer_list<std::tuple<const char*, double, double>> entries)
{
    std::map<std::string, Norms> m;
    for (const auto& [w, v, a] : entries) m[w] = Norms{v, a, false};
    return AffectLexicon(m);
}

AffectScore at(double v, double a) { return AffectScore{v, a, 1}; }

}  // namespace

TEST_CASE("score is the frequency-weighted mean")
{
    const auto l = lex({{"good", 7, 6}, {"bad", 2, 3}});
    const auto s = score({"good", "good", "bad"}, l);
    CHECK(s.v == doctest::Approx(16.0 / 3.0));
    CHECK(s.a == doctest::Approx(5.0));
    CHECK(s.hits == 3);

    const auto none = score({"neutral", "words"}, l);
    CHECK(none.hits == 0);
    CHECK_FALSE(none.defined());
    CHECK(std::isnan(none.v));

    for (std::size_t k = 1; k < 20; ++k) {
        const auto r = score(TokenSequence(k, "bad"), l);
        CHECK(r.v == 2.0);
        CHECK(r.a == 3.0);
    }
}

TEST_CASE("score ignores order and uniform duplication")
{
    std::mt19937_64 rng(4);
    std::map<std::string, Norms> m;
    for (int i = 0; i < 30; ++i) {
        m["w" + std::to_string(i)] = Norms{1.0 + 8.0 * (rng() % 1000) / 999.0, 1.0 + 8.0 * (rng() % 1000) / 999.0};
    }
    const AffectLexicon l(m);
    for (int trial = 0; trial < 300; ++trial) {
        TokenSequence doc(1 + rng() % 40);
        for (auto& t : doc) t = "w" + std::to_string(rng() % 45);
        const auto base = score(doc, l);
        auto shuffled = doc;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        const auto s = score(shuffled, l);
        CHECK(s.hits == base.hits);
        if (base.defined()) {
            CHECK(s.v == base.v);
            CHECK(s.a == base.a);
            auto twice = doc;
            twice.insert(twice.end(), doc.begin(), doc.end());
            const auto d = score(twice, l);
            CHECK(d.v == base.v);
            CHECK(d.a == base.a);
            CHECK(d.hits == 2 * base.hits);
        }
    }
}

TEST_CASE("rescale")
{
    CHECK(rescale(5) == 0);
    CHECK(rescale(9) == 4);
    CHECK(rescale(1) == -4);
    CHECK_THROWS_AS(rescale(0.5), ArgumentError);
    CHECK_THROWS_AS(rescale(9.5), ArgumentError);
}

TEST_CASE("quadrant")
{
    CHECK(quadrant(at(6, 6), {0.25, 0.25}) == MoodLabel::happy);
    CHECK(quadrant(at(5, 5), {0.1, 0.1}) == MoodLabel::unknown);
    CHECK(quadrant(at(4.5, 4.5), {0.34, 0.34}) == MoodLabel::sad);
    CHECK(quadrant(at(3, 7), {0.34, 0.34}) == MoodLabel::angry);
    CHECK(quadrant(at(7, 3), {0.34, 0.34}) == MoodLabel::relaxed);
    // On the threshold is unknown.
    CHECK(quadrant(at(5.25, 6), {0.25, 0.25}) == MoodLabel::unknown);
    // Straddling an axis.
    CHECK(quadrant(at(7, 5.1), {0.25, 0.25}) == MoodLabel::unknown);
    CHECK(quadrant(AffectScore{}, {0, 0}) == MoodLabel::unknown);
}

TEST_CASE("quadrant never labels inside the dead zone")
{
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> norm(1.0, 9.0), thr(0.0, 3.0);
    for (int i = 0; i < 20000; ++i) {
        const AffectScore s = at(norm(rng), norm(rng));
        const QuadrantThresholds t{thr(rng), thr(rng)};
        if (std::abs(rescale(s.v)) <= t.vt || std::abs(rescale(s.a)) <= t.at) {
            CHECK(quadrant(s, t) == MoodLabel::unknown);
        }
    }
}

TEST_CASE("polarity")
{
    CHECK(polarity(at(8, 5), 0.34) == PolarityLabel::positive);
    CHECK(polarity(at(5, 5), 0.01) == PolarityLabel::unknown);
    CHECK(polarity(at(2, 5), 0.34) == PolarityLabel::negative);
}

TEST_CASE("expand_lexicon")
{
    const auto base = lex({{"happy", 8, 6}});
    const std::vector<Synset> synsets{{"s1", {"happy", "glad"}}};

    const auto grown = expand_lexicon(base, synsets, {"s1"});
    REQUIRE(grown.size() == 2);
    CHECK(grown.find("glad")->valence == 8);
    CHECK(grown.find("glad")->arousal == 6);
    CHECK(grown.find("glad")->derived);
    CHECK_FALSE(grown.find("happy")->derived);

    CHECK(expand_lexicon(base, synsets, {}).size() == 1);

    // "content" is reachable from two base words.
    const auto two = lex({{"happy", 8, 6}, {"calm", 6, 2}});
    const std::vector<Synset> shared{{"s1", {"happy", "content"}}, {"s2", {"calm", "content"}}};
    const auto avg = expand_lexicon(two, shared, {"s1", "s2"});
    CHECK(avg.find("content")->valence == doctest::Approx(7.0));
    CHECK(avg.find("content")->arousal == doctest::Approx(4.0));

    // A base word keeps its own norms even when a synset links it to
    // another base word.
    const std::vector<Synset> link{{"s3", {"happy", "calm"}}};
    const auto kept = expand_lexicon(two, link, {"s3"});
    CHECK(kept.find("calm")->valence == 6);
}

TEST_CASE("expand_lexicon is idempotent")
{
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        std::map<std::string, Norms> m;
        for (int i = 0; i < 6; ++i) {
            m["b" + std::to_string(rng() % 20)] = Norms{1.0 + rng() % 9, 1.0 + rng() % 9};
        }
        const AffectLexicon base(m);
        std::vector<Synset> synsets;
        std::set<std::string, std::less<>> filter;
        for (int s = 0; s < 10; ++s) {
            Synset syn{"s" + std::to_string(s), {}};
            for (int w = 0; w < 4; ++w) {
                syn.words.push_back((rng() % 2 ? "b" : "x") + std::to_string(rng() % 20));
            }
            if (rng() % 2) filter.insert(syn.id);
            synsets.push_back(syn);
        }
        const auto once = expand_lexicon(base, synsets, filter);
        const auto twice = expand_lexicon(once, synsets, filter);
        CHECK(once == twice);
        for (const auto& [w, n] : base.entries()) {
            CHECK(*once.find(w) == n);
        }
    }
}

TEST_CASE("calibrate")
{
    std::vector<GoldScore> corpus;
    // At 0.25 all these are labeled and match.
    for (int i = 0; i < 60; ++i) {
        const double off = 0.3 + 0.01 * (i % 10);
        corpus.push_back({at(5 + off, 5 + off), MoodLabel::happy});
    }
    CalibrationOptions opt;
    opt.step = 0.01;
    opt.start = 0.25;
    const auto r = calibrate(corpus, opt);
    REQUIRE(r.has_value());
    CHECK(r->vt == doctest::Approx(0.25));
    CHECK(r->agreement == 1.0);
    CHECK(r->labeled_count == 60);
    CHECK(r->sweep.front().threshold == doctest::Approx(0.25));
    // The sweep stops once fewer than 50 documents are labeled.
    CHECK(r->sweep.back().labeled >= 50);

    std::vector<GoldScore> dead(80, GoldScore{at(5, 5), MoodLabel::sad});
    CHECK_FALSE(calibrate(dead, opt).has_value());

    CHECK_THROWS_AS(calibrate(std::vector<GoldScore>{}, opt), ArgumentError);
    opt.step = 0;
    CHECK_THROWS_AS(calibrate(corpus, opt), ArgumentError);
}

TEST_CASE("calibrate prefers the smaller threshold on ties and counts only labeled documents")
{
    std::vector<GoldScore> corpus;
    for (int i = 0; i < 50; ++i) corpus.push_back({at(7, 7), MoodLabel::happy});
    for (int i = 0; i < 50; ++i) corpus.push_back({at(3, 3), MoodLabel::angry});  // labeled sad
    for (int i = 0; i < 10; ++i) corpus.push_back({at(5, 5), MoodLabel::happy});  // never labeled
    CalibrationOptions opt;
    opt.step = 0.1;
    const auto r = calibrate(corpus, opt);
    REQUIRE(r.has_value());
    // Agreement is 50/100 at every threshold below 2.
    CHECK(r->vt == doctest::Approx(0.1));
    CHECK(r->labeled_count == 100);
    CHECK(r->agreement == 0.5);
    CHECK(r->sweep.size() == 19);
}

TEST_CASE("lexicon file formats")
{
    std::istringstream in("word,valence,arousal\nHappy,8.21,6.49\nsad,1.61,4.13\n");
    const auto l = read_lexicon(in);
    CHECK(l.size() == 2);
    CHECK(l.find("happy")->valence == 8.21);

    std::istringstream bad("word,valence,arousal\nx,10,5\n");
    CHECK_THROWS_AS(read_lexicon(bad), InputError);
    std::istringstream dup("word,valence,arousal\nx,1,5\nX,2,2\n");
    CHECK_THROWS_AS(read_lexicon(dup), InputError);
    std::istringstream header("w,v,a\nx,1,5\n");
    CHECK_THROWS_AS(read_lexicon(header), InputError);

    std::stringstream io;
    write_lexicon(io, l);
    CHECK(read_lexicon(io) == l);

    std::istringstream syn("{\"id\":\"s1\",\"words\":[\"Glad\",\"happy\"]}\n\n{\"id\":\"s2\",\"words\":[]}\n");
    const auto synsets = read_synsets(syn);
    REQUIRE(synsets.size() == 2);
    CHECK(synsets[0].words[0] == "glad");

    std::istringstream filt("s1\n\n s2 \n");
    CHECK(read_filter(filt) == std::set<std::string, std::less<>>{"s1", "s2"});
}
