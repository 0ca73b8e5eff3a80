#pragma once

// Count-based language models: uni/bi/tri-gram maximum-likelihood estimators
// and the frequency-bucketed interpolated bi-gram mixture
//   P(w | prev) = a0(q) / |V| + a1(q) p1(w) + a2(q) p2(w | prev)
// where q buckets the context-word frequency and the weights are fit by EM on
// held-out data (deleted interpolation).

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "lmforge/corpus.hpp"
#include "lmforge/errors.hpp"

namespace lmforge {

struct NGramCounts {
    std::unordered_map<std::int64_t, std::int64_t> unigram;   // id -> count
    std::unordered_map<std::int64_t, std::int64_t> bigram;    // packed (id,id)
    std::unordered_map<std::int64_t, std::int64_t> trigram;   // packed (id,id,id)
    std::unordered_map<std::int64_t, std::int64_t> bigram_prefix;  // id -> continuation total
    std::int64_t total_tokens = 0;

    static std::int64_t pack2(int a, int b) {
        return (static_cast<std::int64_t>(a) << 21) | b;
    }
    static std::int64_t pack3(int a, int b, int c) {
        return (static_cast<std::int64_t>(a) << 42) |
               (static_cast<std::int64_t>(b) << 21) | c;
    }

    std::int64_t uni(int w) const;
    std::int64_t bi(int a, int b) const;
    std::int64_t tri(int a, int b, int c) const;
    std::int64_t continuations(int a) const;  // sum over w of bi(a, w)
};

// Counts all n-grams up to max_order. An n-gram may end at an eos token but
// never cross one, so nothing spans the eos -> bos seam between documents.
// Pass eos_id = -1 for raw streams with no document structure.
NGramCounts count_ngrams(const TokenStream& stream, int max_order = 3,
                         int eos_id = Vocabulary::kEos);

// MLE with the raw context frequency in the denominator:
// p(w | context) = count(context + w) / count(context), context length 0..2.
// Returns 0 for unseen continuations; throws UnseenContext when the context
// itself was never counted.
double mle_prob(const NGramCounts& counts, const std::vector<int>& context, int w);

// Geometric frequency buckets over the context-word count:
// {0}, [1,5), [5,25), [25,125), [125,625), [625,inf).
constexpr int kNumBuckets = 6;
int bucket_of(const NGramCounts& counts, int context_id);

struct MixtureWeights {
    // Per bucket: (a0, a1, a2), each >= 0, summing to 1, with a0 >= 1e-6.
    std::vector<std::array<double, 3>> alpha = std::vector<std::array<double, 3>>(
        kNumBuckets, {1.0 / 3, 1.0 / 3, 1.0 / 3});

    // "bucket a0 a1 a2" lines.
    void save(const std::string& path) const;
    static MixtureWeights load(const std::string& path);
};

// The smoothed conditional. The bigram component uses the paper's estimator
// count(prev,w)/count(prev); for contexts with no observed continuation at
// all (unseen words, or eos, which only ever ends a document) it backs off to
// the unigram so the mixture stays a proper distribution over the vocabulary.
double mixture_prob(const NGramCounts& counts, const MixtureWeights& weights, int w_prev,
                    int w, int vocab_size);

// Per-bucket EM over held-out bigrams until the max weight change is below
// 1e-6 or 200 iterations; buckets with no held-out pairs keep (1/3,1/3,1/3).
// Scored pairs never span documents and bos is never a predicted token.
MixtureWeights fit_mixture_weights(const NGramCounts& counts, const TokenStream& heldout,
                                   int vocab_size);

// Held-out log-likelihood of the mixture (sum over scored pairs), exposed for
// the EM monotonicity checks.
double mixture_log_likelihood(const NGramCounts& counts, const MixtureWeights& weights,
                              const TokenStream& heldout, int vocab_size);

// Counts file: sorted "w1[ w2[ w3]]<TAB>count" lines, tokens resolved through
// the vocabulary.
void save_counts(const NGramCounts& counts, const Vocabulary& vocab,
                 const std::string& path);
NGramCounts load_counts(const Vocabulary& vocab, const std::string& path);

}  // namespace lmforge
