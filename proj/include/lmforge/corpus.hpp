#pragma once

// Corpus ingestion: whitespace tokenization, vocabulary construction with a
// frequency floor and size cap, numericalization, contiguous batch layout for
// truncated BPTT, and a synthetic Markov corpus generator used by the tests.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "lmforge/errors.hpp"

namespace lmforge {

// Splits on runs of Unicode whitespace; never returns empty tokens.
std::vector<std::string> tokenize(const std::string& text);

// Token ids are dense in [0, size()); the four specials always occupy ids 0..3.
class Vocabulary {
public:
    static constexpr int kUnk = 0;
    static constexpr int kPad = 1;
    static constexpr int kBos = 2;
    static constexpr int kEos = 3;
    static constexpr int kNumSpecials = 4;

    static const char* unk_token() { return "<unk>"; }
    static const char* pad_token() { return "<pad>"; }
    static const char* bos_token() { return "<bos>"; }
    static const char* eos_token() { return "<eos>"; }

    // Non-special tokens are kept when count >= min_freq, ordered by
    // descending count with ties broken by first occurrence, and truncated so
    // specials + retained <= max_vocab.
    static Vocabulary build(const std::vector<std::string>& tokens, int min_freq,
                            int max_vocab);

    int size() const { return static_cast<int>(id_to_token_.size()); }
    // Id for a token; unknown tokens map to kUnk.
    int id(const std::string& token) const;
    bool contains(const std::string& token) const;
    const std::string& token(int id) const;
    std::int64_t count(const std::string& token) const;

    // "token<TAB>count" lines ordered by id, specials first.
    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

private:
    Vocabulary() = default;
    void add(const std::string& token, std::int64_t count);

    std::unordered_map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
    std::vector<std::int64_t> counts_;
};

using TokenStream = std::vector<int>;

// Numericalizes without inserting any markers; OOV tokens map to unk.
TokenStream numericalize(const std::vector<std::string>& tokens, const Vocabulary& vocab);

// One document -> bos + ids + eos, concatenated over documents.
TokenStream build_stream(const std::vector<std::vector<std::string>>& documents,
                         const Vocabulary& vocab);

// Reads every regular file in `dir` (sorted by name) as one UTF-8 document.
std::vector<std::vector<std::string>> read_documents(const std::string& dir);

// The stream truncated to batch_size * floor(N / batch_size) ids and split
// into batch_size equal contiguous segments; column t of the batch matrix is
// position t of every segment.
struct BatchPlan {
    int batch_size = 0;
    int base_bptt = 0;
    std::int64_t seg_len = 0;
    std::vector<int> ids;  // truncated stream, original order

    int id(int segment, std::int64_t pos) const {
        return ids[static_cast<size_t>(segment) * seg_len + pos];
    }
    // Token at position t for each of the batch_size streams.
    std::vector<int> column(std::int64_t t) const;
};

BatchPlan batchify(const TokenStream& stream, int batch_size, int base_bptt = 70);

// Variable-length BPTT draw: mean is `base` with probability 0.95 and base/2
// otherwise, sigma 5, rounded and clamped to [5, base + 20].
int sample_bptt_len(int base, std::mt19937_64& rng);

// ---- synthetic corpus -------------------------------------------------------

// First-order Markov chain over n_states symbols, rows of `transitions` are
// the conditional distributions p(next | current).
struct MarkovChain {
    int n_states = 0;
    std::vector<double> transitions;  // row-major n_states x n_states

    double prob(int from, int to) const {
        return transitions[static_cast<size_t>(from) * n_states + to];
    }
    // Stationary distribution by power iteration.
    std::vector<double> stationary() const;
    // Entropy rate: -sum_s pi(s) sum_t p(t|s) ln p(t|s), in nats.
    double conditional_entropy() const;
};

// Emits `length` states after a burn-in, deterministic for a given seed.
std::vector<int> sample_chain(const MarkovChain& chain, std::int64_t length,
                              std::uint64_t seed);

struct SyntheticCorpus {
    std::vector<std::string> tokens;  // "w000", "w001", ...
    MarkovChain chain;
};

// Builds a fixed random chain from the seed and emits `length` tokens from it.
// Rows are softmax of rank-16 random logits, so the conditionals carry
// low-rank structure comparable to natural text.
SyntheticCorpus generate_synthetic_corpus(int vocab_size, std::int64_t length,
                                          std::uint64_t seed);

}  // namespace lmforge
