#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "lmforge/corpus.hpp"

using namespace lmforge;

TEST_CASE("tokenize splits on unicode whitespace") {
    // Bengali text with a double space.
    const auto t = tokenize("ক খ  গ");
    REQUIRE(t.size() == 3);
    CHECK(t[0] == "ক");
    CHECK(t[1] == "খ");
    CHECK(t[2] == "গ");

    CHECK(tokenize("").empty());
    CHECK(tokenize(" \t\n").empty());

    // No-break space and ideographic space are boundaries too.
    const auto u = tokenize("a b　c");
    REQUIRE(u.size() == 3);
    CHECK(u[0] == "a");
    CHECK(u[2] == "c");
}

TEST_CASE("tokenize agrees with a character-scan oracle on ascii") {
    const std::string text = "a b a c";
    // Oracle: split on ' ' by hand.
    std::vector<std::string> expected;
    std::string cur;
    for (char ch : text) {
        if (ch == ' ') {
            if (!cur.empty()) expected.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (!cur.empty()) expected.push_back(cur);
    CHECK(tokenize(text) == expected);
    CHECK(expected == std::vector<std::string>{"a", "b", "a", "c"});
}

TEST_CASE("build_vocab applies the frequency floor") {
    // Oracle: counts a=2, b=1, c=1; min_freq 2 keeps only "a".
    const auto v = Vocabulary::build({"a", "b", "a", "c"}, 2, 60000);
    CHECK(v.size() == Vocabulary::kNumSpecials + 1);
    CHECK(v.contains("a"));
    CHECK_FALSE(v.contains("b"));
    CHECK(v.id("b") == Vocabulary::kUnk);
    CHECK(v.count("a") == 2);
}

TEST_CASE("build_vocab of an empty corpus is just the specials") {
    const auto v = Vocabulary::build({}, 2, 60000);
    CHECK(v.size() == Vocabulary::kNumSpecials);
    CHECK(v.token(Vocabulary::kUnk) == std::string("<unk>"));
    CHECK(v.token(Vocabulary::kPad) == std::string("<pad>"));
    CHECK(v.token(Vocabulary::kBos) == std::string("<bos>"));
    CHECK(v.token(Vocabulary::kEos) == std::string("<eos>"));
}

TEST_CASE("build_vocab truncates at the size cap by count") {
    std::vector<std::string> tokens;
    for (int i = 0; i < 5; ++i) tokens.push_back("x");
    for (int i = 0; i < 5; ++i) tokens.push_back("y");
    tokens.push_back("z");
    const auto v = Vocabulary::build(tokens, 1, 6);
    CHECK(v.size() == 6);
    CHECK(v.contains("x"));
    CHECK(v.contains("y"));
    CHECK_FALSE(v.contains("z"));
}

TEST_CASE("build_vocab breaks count ties by first occurrence") {
    const auto v = Vocabulary::build({"late", "early", "late", "early", "xx"}, 1, 60000);
    // Both occur twice; "late" appears first in the corpus.
    CHECK(v.id("late") == Vocabulary::kNumSpecials);
    CHECK(v.id("early") == Vocabulary::kNumSpecials + 1);
    CHECK(v.id("xx") == Vocabulary::kNumSpecials + 2);
}

TEST_CASE("build_vocab is deterministic") {
    const std::vector<std::string> tokens{"p", "q", "r", "p", "q", "p"};
    const auto a = Vocabulary::build(tokens, 1, 100);
    const auto b = Vocabulary::build(tokens, 1, 100);
    REQUIRE(a.size() == b.size());
    for (int i = 0; i < a.size(); ++i) CHECK(a.token(i) == b.token(i));
}

TEST_CASE("numericalize maps oov to unk and round-trips in-vocab tokens") {
    const auto v = Vocabulary::build({"a", "b", "a", "c", "a", "b"}, 2, 60000);
    const auto ids = numericalize({"a", "q"}, v);
    REQUIRE(ids.size() == 2);
    CHECK(ids[0] == v.id("a"));
    CHECK(ids[1] == Vocabulary::kUnk);
    CHECK(numericalize({}, v).empty());

    for (const std::string& tok : {"a", "b"}) CHECK(v.token(v.id(tok)) == tok);
}

TEST_CASE("vocabulary file round-trips") {
    const auto v = Vocabulary::build({"a", "b", "a", "c", "a", "b"}, 1, 60000);
    const std::string path = "vocab_test.tsv";
    v.save(path);
    const auto loaded = Vocabulary::load(path);
    REQUIRE(loaded.size() == v.size());
    for (int i = 0; i < v.size(); ++i) {
        CHECK(loaded.token(i) == v.token(i));
        CHECK(loaded.count(v.token(i)) == v.count(v.token(i)));
    }
    std::filesystem::remove(path);
}

TEST_CASE("batchify splits into equal contiguous segments") {
    TokenStream stream(700);
    std::iota(stream.begin(), stream.end(), 0);
    const auto plan = batchify(stream, 10);
    CHECK(plan.seg_len == 70);
    // Segment s must be the contiguous slice [70s, 70s+70).
    for (int s = 0; s < 10; ++s)
        for (int t = 0; t < 70; ++t) CHECK(plan.id(s, t) == 70 * s + t);
    // Column t holds position t of every segment.
    const auto col = plan.column(3);
    for (int s = 0; s < 10; ++s) CHECK(col[s] == 70 * s + 3);
}

TEST_CASE("batchify with batch 1 keeps the whole stream") {
    TokenStream stream{5, 6, 7};
    const auto plan = batchify(stream, 1);
    CHECK(plan.seg_len == 3);
    CHECK(plan.ids == stream);
}

TEST_CASE("batchify drops the remainder") {
    TokenStream stream{0, 1, 2, 3, 4, 5, 6};
    const auto plan = batchify(stream, 3);
    CHECK(plan.seg_len == 2);
    CHECK(plan.ids.size() == 6);
    CHECK_THROWS_AS(batchify(TokenStream{1, 2}, 3), StreamTooShort);
}

TEST_CASE("batchify preserves within-segment adjacency") {
    std::mt19937_64 rng(12);
    TokenStream stream(257);
    std::iota(stream.begin(), stream.end(), 100);
    for (int batch : {2, 5, 8}) {
        const auto plan = batchify(stream, batch);
        for (int s = 0; s < batch; ++s)
            for (std::int64_t t = 0; t + 1 < plan.seg_len; ++t)
                CHECK(plan.id(s, t) + 1 == plan.id(s, t + 1));
    }
}

TEST_CASE("sample_bptt_len stays in its clamp range") {
    std::mt19937_64 rng(13);
    for (int i = 0; i < 20000; ++i) {
        const int len = sample_bptt_len(70, rng);
        CHECK(len >= 5);
        CHECK(len <= 90);
    }
}

TEST_CASE("sample_bptt_len empirical mean matches the mixture mean") {
    std::mt19937_64 rng(14);
    double total = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) total += sample_bptt_len(70, rng);
    const double mean = total / n;
    // Oracle: 0.95 * 70 + 0.05 * 35 = 68.25, Monte-Carlo tolerance 1.0.
    CHECK(std::abs(mean - 68.25) <= 1.0);
}

TEST_CASE("build_stream wraps every document in bos/eos") {
    const auto v = Vocabulary::build({"a", "b"}, 1, 100);
    const auto stream = build_stream({{"a", "b"}, {"b"}}, v);
    const TokenStream expected{Vocabulary::kBos, v.id("a"), v.id("b"), Vocabulary::kEos,
                               Vocabulary::kBos, v.id("b"), Vocabulary::kEos};
    CHECK(stream == expected);
}

TEST_CASE("read_documents reads files in sorted order") {
    namespace fs = std::filesystem;
    const fs::path dir = "corpus_test_dir";
    fs::create_directories(dir);
    std::ofstream(dir / "b.txt") << "two";
    std::ofstream(dir / "a.txt") << "one one";
    const auto docs = read_documents(dir.string());
    REQUIRE(docs.size() == 2);
    CHECK(docs[0] == std::vector<std::string>{"one", "one"});
    CHECK(docs[1] == std::vector<std::string>{"two"});
    fs::remove_all(dir);
    CHECK_THROWS_AS(read_documents(dir.string()), IoError);
}

TEST_CASE("a forced alternation chain emits t0 t1 t0 t1") {
    MarkovChain chain;
    chain.n_states = 2;
    chain.transitions = {0, 1, 1, 0};
    const auto states = sample_chain(chain, 8, 99);
    for (size_t i = 1; i < states.size(); ++i) CHECK(states[i] == 1 - states[i - 1]);
}

TEST_CASE("synthetic corpus is deterministic in the seed") {
    const auto a = generate_synthetic_corpus(16, 500, 77);
    const auto b = generate_synthetic_corpus(16, 500, 77);
    CHECK(a.tokens == b.tokens);
    CHECK(a.chain.transitions == b.chain.transitions);
    const auto c = generate_synthetic_corpus(16, 500, 78);
    CHECK(a.tokens != c.tokens);
}

TEST_CASE("empirical bigram frequencies converge to the transition matrix") {
    const int v = 8;
    const auto corpus = generate_synthetic_corpus(v, 100000, 21);
    // Count transitions between consecutive tokens.
    std::vector<std::int64_t> pair(v * v, 0), from(v, 0);
    auto state_of = [](const std::string& tok) { return std::stoi(tok.substr(1)); };
    for (size_t i = 0; i + 1 < corpus.tokens.size(); ++i) {
        const int a = state_of(corpus.tokens[i]);
        const int b = state_of(corpus.tokens[i + 1]);
        ++pair[a * v + b];
        ++from[a];
    }
    for (int a = 0; a < v; ++a) {
        REQUIRE(from[a] > 100);
        for (int b = 0; b < v; ++b) {
            const double p = corpus.chain.prob(a, b);
            const double observed = static_cast<double>(pair[a * v + b]) / from[a];
            const double sigma = std::sqrt(p * (1 - p) / from[a]);
            CHECK(std::abs(observed - p) <= 3 * sigma + 1e-9);
        }
    }
}

TEST_CASE("the generator chain rows are proper distributions") {
    const auto corpus = generate_synthetic_corpus(12, 10, 5);
    for (int s = 0; s < 12; ++s) {
        double total = 0;
        for (int t = 0; t < 12; ++t) {
            CHECK(corpus.chain.prob(s, t) > 0);
            total += corpus.chain.prob(s, t);
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
    const auto pi = corpus.chain.stationary();
    CHECK(std::accumulate(pi.begin(), pi.end(), 0.0) == doctest::Approx(1.0));
    CHECK(corpus.chain.conditional_entropy() > 0);
    CHECK(corpus.chain.conditional_entropy() < std::log(12.0));
}
