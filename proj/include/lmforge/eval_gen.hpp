#pragma once

// Held-out perplexity and autoregressive generation. Perplexity is the
// exponential of the mean per-token negative log-likelihood in nats; bos is
// conditioning context and is never scored, everything else (unk and eos
// included) is scored exactly once.

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "lmforge/corpus.hpp"
#include "lmforge/lstm_lm.hpp"
#include "lmforge/ngram_lm.hpp"

namespace lmforge {

struct EvalReport {
    std::int64_t tokens = 0;
    double mean_nll = 0;
    double perplexity = 1;

    // "tokens=<N> nll=<x.xxxxxx> ppl=<x.xx>"
    std::string line() const;
};

// Conditional next-token oracle: prob() queries p(token | history), push()
// appends a token to the history.
class Scorer {
public:
    virtual ~Scorer() = default;
    virtual void reset() = 0;
    virtual double prob(int token) = 0;
    virtual void push(int token) = 0;
};

class UniformScorer : public Scorer {
public:
    explicit UniformScorer(int vocab_size) : p_(1.0 / vocab_size) {}
    void reset() override {}
    double prob(int) override { return p_; }
    void push(int) override {}

private:
    double p_;
};

class NGramScorer : public Scorer {
public:
    NGramScorer(const NGramCounts& counts, const MixtureWeights& weights, int vocab_size)
        : counts_(&counts), weights_(&weights), vocab_size_(vocab_size) {}
    void reset() override { prev_ = Vocabulary::kBos; }
    double prob(int token) override {
        return mixture_prob(*counts_, *weights_, prev_, token, vocab_size_);
    }
    void push(int token) override { prev_ = token; }

private:
    const NGramCounts* counts_;
    const MixtureWeights* weights_;
    int vocab_size_;
    int prev_ = Vocabulary::kBos;
};

// Sequential evaluation with the hidden state carried across the stream
// (detached from any graph; evaluation mode, no dropout).
class NeuralScorer : public Scorer {
public:
    explicit NeuralScorer(const LstmLmParams& params);
    void reset() override;
    double prob(int token) override;
    void push(int token) override;

private:
    const LstmLmParams* params_;
    HiddenState state_;
    std::vector<real> dist_;  // p(next | history) after the last push
    bool primed_ = false;
};

// Scores every non-bos token of the stream. Throws ZeroProbability naming the
// offending stream position if the model assigns probability zero.
EvalReport perplexity(Scorer& scorer, const TokenStream& stream);

enum class GenMode { greedy, sample };

struct GenerateOptions {
    int max_len = 100;
    double temperature = 1.0;
    GenMode mode = GenMode::greedy;
    std::uint64_t seed = 0;
};

// Feeds the prompt, then emits tokens until eos or max_len. unk and pad are
// never emitted (their logits are masked out). Returns the continuation only,
// including the final eos when one is produced.
std::vector<int> generate(const LstmLmParams& params, const std::vector<int>& prompt,
                          const GenerateOptions& opts);

}  // namespace lmforge
