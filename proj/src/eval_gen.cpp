#include "lmforge/eval_gen.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace lmforge {

std::string EvalReport::line() const {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "tokens=%lld nll=%.6f ppl=%.2f",
                  static_cast<long long>(tokens), mean_nll, perplexity);
    return buf;
}

NeuralScorer::NeuralScorer(const LstmLmParams& params) : params_(&params) { reset(); }

void NeuralScorer::reset() {
    state_ = zero_state(*params_, 1);
    dist_.clear();
    primed_ = false;
}

void NeuralScorer::push(int token) {
    SegmentResult r = forward_segment(*params_, {{token}}, state_, nullptr, false);
    state_ = std::move(r.state);
    dist_ = r.logits.values();
    softmax_inplace(dist_);
    primed_ = true;
}

double NeuralScorer::prob(int token) {
    if (!primed_) {
        // No context yet: condition the first prediction on bos.
        push(Vocabulary::kBos);
    }
    if (token < 0 || token >= static_cast<int>(dist_.size()))
        throw InvalidTokenId("NeuralScorer: token " + std::to_string(token) +
                             " outside vocabulary");
    return static_cast<double>(dist_[token]);
}

EvalReport perplexity(Scorer& scorer, const TokenStream& stream) {
    if (stream.empty()) throw EmptyStream("perplexity: empty stream");
    scorer.reset();
    double nll = 0;
    std::int64_t scored = 0;
    for (size_t i = 0; i < stream.size(); ++i) {
        const int token = stream[i];
        if (token != Vocabulary::kBos) {
            const double p = scorer.prob(token);
            if (!(p > 0))
                throw ZeroProbability("perplexity: zero probability at stream position " +
                                      std::to_string(i));
            nll -= std::log(p);
            ++scored;
        }
        scorer.push(token);
    }
    if (scored == 0) throw EmptyStream("perplexity: nothing to score");
    EvalReport report;
    report.tokens = scored;
    report.mean_nll = nll / static_cast<double>(scored);
    report.perplexity = std::exp(report.mean_nll);
    return report;
}

std::vector<int> generate(const LstmLmParams& params, const std::vector<int>& prompt,
                          const GenerateOptions& opts) {
    if (prompt.empty()) throw EmptyPrompt("generate: prompt must contain at least one token");
    for (int id : prompt)
        if (id < 0 || id >= params.vocab_size)
            throw InvalidTokenId("generate: prompt id " + std::to_string(id) +
                                 " outside vocabulary");

    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    HiddenState state = zero_state(params, 1);
    std::vector<real> logits;
    auto feed = [&](int token) {
        SegmentResult r = forward_segment(params, {{token}}, state, nullptr, false);
        state = std::move(r.state);
        logits = r.logits.values();
    };
    for (int id : prompt) feed(id);

    std::vector<int> out;
    for (int n = 0; n < opts.max_len; ++n) {
        logits[Vocabulary::kUnk] = -std::numeric_limits<real>::infinity();
        logits[Vocabulary::kPad] = -std::numeric_limits<real>::infinity();
        int token;
        if (opts.mode == GenMode::greedy) {
            token = 0;
            for (size_t j = 1; j < logits.size(); ++j)
                if (logits[j] > logits[token]) token = static_cast<int>(j);
        } else {
            if (!(opts.temperature > 0))
                throw ConfigError("generate: temperature must be positive in sample mode");
            std::vector<real> probs(logits.size());
            for (size_t j = 0; j < logits.size(); ++j)
                probs[j] = logits[j] / static_cast<real>(opts.temperature);
            softmax_inplace(probs);
            double u = unit(rng);
            token = static_cast<int>(probs.size()) - 1;
            for (size_t j = 0; j < probs.size(); ++j) {
                u -= probs[j];
                if (u <= 0) {
                    token = static_cast<int>(j);
                    break;
                }
            }
        }
        out.push_back(token);
        if (token == Vocabulary::kEos) break;
        feed(token);
    }
    return out;
}

}  // namespace lmforge
