// Writes the small data files the CLI tests run against.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <nlohmann/json.hpp>

#include "ngcnn/tagann.hpp"
#include "synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream open(const fs::path& p)
{
    std::ofstream out(p);
    if (!out) {
        throw std::runtime_error("cannot write " + p.string());
    }
    return out;
}

void write_corpus(const fs::path& dir)
{
    const auto c = synthetic::make(600, 30, 16, 7);
    auto out = open(dir / "corpus.jsonl");
    for (std::size_t i = 0; i < c.tokens.size(); ++i) {
        out << json{{"id", "d" + std::to_string(i)},
                    {"text", ngcnn::join(c.tokens[i])},
                    {"label", c.labels[i] ? "positive" : "negative"}}
                   .dump()
            << '\n';
    }
    auto emb = open(dir / "emb.txt");
    c.table.save(emb);

    open(dir / "empty.jsonl");
    open(dir / "bad_emb.txt") << "good 0.1 0.2\nbad 0.3\n";
    open(dir / "bad.ckpt") << "NGCX not a checkpoint";
    open(dir / "unlabeled.jsonl") << json{{"id", "u"}, {"text", "good w1 w2"}}.dump() << '\n';
}

void write_affect(const fs::path& dir)
{
    open(dir / "lexicon.csv") << "word,valence,arousal\n"
                                 "joy,8.2,6.9\n"
                                 "calm,7.1,2.0\n"
                                 "rage,2.0,7.8\n"
                                 "gloom,2.2,2.4\n"
                                 "table,5.0,3.9\n";

    // Gold moods agree with the lexicon except for a slice of noise.
    std::mt19937_64 rng(11);
    const char* words[] = {"joy", "rage", "gloom", "calm"};
    const char* moods[] = {"happy", "angry", "sad", "relaxed"};
    auto out = open(dir / "moods.jsonl");
    for (int i = 0; i < 200; ++i) {
        const int q = i % 4;
        const int gold = (rng() % 10 == 0) ? static_cast<int>((q + 1) % 4) : q;
        out << json{{"text", std::string(words[q]) + " table " + words[q]}, {"mood", moods[gold]}}.dump() << '\n';
    }
    auto lyrics = open(dir / "lyrics.jsonl");
    for (int i = 0; i < 8; ++i) {
        lyrics << json{{"id", "l" + std::to_string(i)}, {"text", std::string(words[i % 4]) + " and more"}}.dump()
               << '\n';
    }
    lyrics << json{{"id", "l-none"}, {"text", "nothing known here"}}.dump() << '\n';
}

void write_tags(const fs::path& dir)
{
    const ngcnn::Folksonomy folk;
    auto out = open(dir / "tags.jsonl");
    for (std::size_t q = 0; q < 4; ++q) {
        const auto& cl = folk.cluster(q);
        out << json{{"track_id", "t" + std::to_string(q)}, {"tags", {cl[0], cl[1], cl[2], cl[3], cl[4], "rock"}}}.dump() << '\n';
    }
    out << json{{"track_id", "mixed"}, {"tags", {folk.cluster(0)[0], folk.cluster(2)[0]}}}.dump() << '\n';

    // Tag vectors: a shared direction per quadrant plus noise.
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0.0, 0.3);
    auto emb = open(dir / "tag_emb.txt");
    for (std::size_t q = 0; q < 4; ++q) {
        for (const auto& tag : folk.cluster(q)) {
            if (tag.find(' ') != std::string::npos) {
                continue;
            }
            emb << tag;
            for (std::size_t k = 0; k < 8; ++k) {
                emb << ' ' << ((k % 4 == q) ? 1.0 : 0.0) + noise(rng);
            }
            emb << '\n';
        }
    }
    open(dir / "ref.jsonl") << json{{"id", "t0"}, {"label", "Q1"}}.dump() << '\n'
                            << json{{"id", "t1"}, {"label", "Q2"}}.dump() << '\n'
                            << json{{"id", "t2"}, {"label", "Q4"}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv)
{
    if (argc != 2) {
        std::cerr << "usage: make_fixtures DIR\n";
        return 2;
    }
    const fs::path dir = argv[1];
    fs::create_directories(dir);
    write_corpus(dir);
    write_affect(dir);
    write_tags(dir);
    return 0;
}
