#pragma once

// Training loops for both model families. The neural recipe is two-phase:
// phase 1 trains only the output-side layer group at phase1_lr; phase 2
// unfreezes the remaining groups (all at once by default, one per epoch with
// gradual_unfreeze) and applies the per-group differential rates. SGDR
// restarts the cosine schedule at every epoch boundary. The hidden state is
// zeroed at each epoch start and carried, detached, across segments.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lmforge/config.hpp"
#include "lmforge/corpus.hpp"
#include "lmforge/eval_gen.hpp"
#include "lmforge/lstm_lm.hpp"
#include "lmforge/optim.hpp"
#include "lmforge/schedule.hpp"

namespace lmforge {

struct EpochLog {
    int epoch = 0;  // 1-based, counted across phases
    int phase = 0;
    double lr_max = 0;
    double train_loss = 0;  // mean nats per token
    double valid_ppl = 0;
    bool best = false;

    std::string line() const;
};

struct TrainSummary {
    std::vector<EpochLog> epochs;
    double best_valid_ppl = 0;
};

class Trainer {
public:
    Trainer(const RunConfig& cfg, const Vocabulary& vocab, const TokenStream& train,
            const TokenStream& valid);

    // Full two-phase recipe. Writes the best-validation checkpoint to
    // cfg.checkpoint_file when set, and invokes on_epoch (if given) after
    // each epoch's log entry is ready.
    TrainSummary run(const std::function<void(const EpochLog&)>& on_epoch = nullptr);

    // One epoch with the current policy; returns mean training loss per token.
    double train_epoch();
    // One optimizer step over the next segment; returns its training loss.
    // start_epoch() must have been called first.
    double step_segment();
    void start_epoch();
    bool epoch_done() const { return pos_ + 1 >= plan_.seg_len; }

    // Evaluation-mode perplexity (uses the averaged weights once NT-ASGD has
    // triggered).
    EvalReport evaluate(const TokenStream& stream);

    // LR range finder over training batches; model, optimizer and RNG state
    // are restored bitwise afterwards.
    LrFinderTrace lr_find();

    LstmLmParams& model() { return model_; }
    GroupLrPolicy& policy() { return policy_; }
    Optimizer& optimizer() { return optimizer_; }
    NtAsgdMonitor& monitor() { return monitor_; }

    // Phase setup helpers (run() uses these; exposed for tests).
    void configure_phase1();
    void configure_phase2();

private:
    double segment_loss_and_update(int bptt_len, double schedule_lr);
    LstmLmParams eval_params();

    RunConfig cfg_;
    const Vocabulary* vocab_;
    BatchPlan plan_;
    TokenStream valid_;

    LstmLmParams model_;
    std::vector<Tensor> params_;
    std::vector<int> groups_;
    Optimizer optimizer_;
    GroupLrPolicy policy_;
    NtAsgdMonitor monitor_;
    SgdrClock clock_;

    std::mt19937_64 rng_;
    HiddenState state_;
    std::int64_t pos_ = 0;
};

// Count-based baseline: counts from the leading 90% of the training stream,
// mixture weights fit by EM on the remaining 10% (deleted interpolation).
struct NGramModel {
    NGramCounts counts;
    MixtureWeights weights;
    int vocab_size = 0;
};

NGramModel train_ngram_model(const TokenStream& train, int vocab_size);

}  // namespace lmforge
