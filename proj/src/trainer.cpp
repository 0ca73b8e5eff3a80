#include "lmforge/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace lmforge {

std::string EpochLog::line() const {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "epoch=%d phase=%d lr_max=%.6g train_loss=%.4f valid_ppl=%.2f%s", epoch,
                  phase, lr_max, train_loss, valid_ppl, best ? " *" : "");
    return buf;
}

Trainer::Trainer(const RunConfig& cfg, const Vocabulary& vocab, const TokenStream& train,
                 const TokenStream& valid)
    : cfg_(cfg),
      vocab_(&vocab),
      plan_(batchify(train, cfg.batch_size, cfg.bptt)),
      valid_(valid),
      model_([&] {
          std::mt19937_64 init_rng(cfg.seed);
          return LstmLmParams::init(vocab.size(), cfg.emb_size, cfg.hidden_size, cfg.layers,
                                    cfg.tie_weights, init_rng);
      }()),
      params_(model_.parameters()),
      groups_(model_.parameter_groups()),
      optimizer_(optimizer_kind_from(cfg.optimizer), params_.size()),
      monitor_(cfg.nt_asgd_patience),
      rng_(cfg.seed + 1) {
    configure_phase1();
}

void Trainer::configure_phase1() {
    const int g = model_.group_count();
    policy_.base_lrs.assign(g, cfg_.phase1_lr);
    policy_.frozen.assign(g, true);
    policy_.frozen[g - 1] = false;  // output-side group only
}

void Trainer::configure_phase2() {
    policy_.base_lrs = cfg_.phase2_lrs;
    if (cfg_.gradual_unfreeze) {
        // Keep the phase-1 freezing; one more group thaws at each epoch start.
        if (static_cast<int>(policy_.frozen.size()) != model_.group_count())
            policy_.frozen.assign(model_.group_count(), true);
    } else {
        policy_.frozen.assign(model_.group_count(), false);
    }
}

void Trainer::start_epoch() {
    state_ = zero_state(model_, cfg_.batch_size);
    pos_ = 0;
    clock_.cycle_len = std::max<std::int64_t>(1, (plan_.seg_len - 1 + cfg_.bptt - 1) / cfg_.bptt);
    clock_.pos = 0;
    double base_max = 0;
    for (size_t g = 0; g < policy_.base_lrs.size(); ++g)
        if (!policy_.frozen[g]) base_max = std::max(base_max, policy_.base_lrs[g]);
    clock_.lr_max = base_max;
    clock_.lr_min = base_max * cfg_.sgdr_min_ratio;
}

double Trainer::segment_loss_and_update(int bptt_len, double schedule_lr) {
    const std::int64_t remaining = plan_.seg_len - 1 - pos_;
    const int t_len = static_cast<int>(std::min<std::int64_t>(bptt_len, remaining));

    std::vector<std::vector<int>> inputs(t_len), targets_cols(t_len);
    for (int t = 0; t < t_len; ++t) {
        inputs[t] = plan_.column(pos_ + t);
        targets_cols[t] = plan_.column(pos_ + t + 1);
    }
    std::vector<int> targets;
    targets.reserve(static_cast<size_t>(t_len) * cfg_.batch_size);
    for (const auto& col : targets_cols) targets.insert(targets.end(), col.begin(), col.end());

    DropoutMasks masks = sample_masks(model_, cfg_.batch_size, cfg_.p_weight(),
                                      cfg_.p_var_in(), cfg_.p_var_out(), cfg_.p_embed(), rng_);
    for (auto& p : params_) p.zero_grad();
    Graph graph;
    Tensor loss;
    {
        Recording rec(graph);
        SegmentResult result = forward_segment(model_, inputs, state_, &masks, true);
        loss = softmax_cross_entropy(result.logits, targets);
        state_ = std::move(result.state);
    }
    graph.backward(loss);
    if (cfg_.clip_norm > 0) clip_grad_norm(params_, cfg_.clip_norm);

    const double base_max = clock_.lr_max;
    const auto lrs = effective_group_lrs(policy_, schedule_lr, base_max);
    optimizer_.step(params_, groups_, lrs, policy_.frozen, cfg_.weight_decay);

    pos_ += t_len;
    clock_.pos = std::min(clock_.pos + 1, clock_.cycle_len);
    return loss.item();
}

double Trainer::step_segment() {
    const int bptt_len = cfg_.var_bptt ? sample_bptt_len(cfg_.bptt, rng_) : cfg_.bptt;
    const double schedule_lr = cfg_.sgdr ? sgdr_lr(clock_) : clock_.lr_max;
    return segment_loss_and_update(bptt_len, schedule_lr);
}

double Trainer::train_epoch() {
    start_epoch();
    double loss_sum = 0;
    std::int64_t tokens = 0;
    while (!epoch_done()) {
        const std::int64_t before = pos_;
        const double loss = step_segment();
        const std::int64_t seg_tokens = (pos_ - before) * cfg_.batch_size;
        loss_sum += loss * static_cast<double>(seg_tokens);
        tokens += seg_tokens;
    }
    return tokens > 0 ? loss_sum / static_cast<double>(tokens) : 0.0;
}

LstmLmParams Trainer::eval_params() {
    if (optimizer_.kind() == OptimizerKind::asgd && optimizer_.averaging()) {
        LstmLmParams averaged = model_.clone();
        auto avg_values = optimizer_.averaged_params();
        auto tensors = averaged.parameters();
        for (size_t i = 0; i < tensors.size(); ++i) tensors[i].values() = avg_values[i];
        return averaged;
    }
    return model_;
}

EvalReport Trainer::evaluate(const TokenStream& stream) {
    LstmLmParams p = eval_params();
    NeuralScorer scorer(p);
    return perplexity(scorer, stream);
}

TrainSummary Trainer::run(const std::function<void(const EpochLog&)>& on_epoch) {
    TrainSummary summary;
    summary.best_valid_ppl = std::numeric_limits<double>::infinity();
    int epoch = 0;

    auto run_phase = [&](int phase, int epochs) {
        for (int e = 0; e < epochs; ++e) {
            if (phase == 2 && cfg_.gradual_unfreeze &&
                std::find(policy_.frozen.begin(), policy_.frozen.end(), true) !=
                    policy_.frozen.end())
                policy_ = unfreeze_next(policy_);

            EpochLog log;
            log.epoch = ++epoch;
            log.phase = phase;
            log.train_loss = train_epoch();
            log.lr_max = clock_.lr_max;

            const EvalReport report = evaluate(valid_);
            log.valid_ppl = report.perplexity;
            if (optimizer_.kind() == OptimizerKind::asgd) {
                monitor_.observe(report.mean_nll);
                if (monitor_.triggered() && !optimizer_.averaging())
                    optimizer_.start_averaging(params_);
            }
            if (log.valid_ppl < summary.best_valid_ppl) {
                summary.best_valid_ppl = log.valid_ppl;
                log.best = true;
                if (!cfg_.checkpoint_file.empty())
                    save_checkpoint(cfg_.checkpoint_file, eval_params());
            }
            summary.epochs.push_back(log);
            if (on_epoch) on_epoch(log);
        }
    };

    configure_phase1();
    run_phase(1, cfg_.phase1_epochs);
    configure_phase2();
    run_phase(2, cfg_.phase2_epochs);
    return summary;
}

LrFinderTrace Trainer::lr_find() {
    // Snapshot everything the finder touches.
    std::vector<std::vector<real>> saved_params;
    saved_params.reserve(params_.size());
    for (const auto& p : params_) saved_params.push_back(p.values());
    const auto saved_opt = optimizer_.snapshot();
    const auto saved_rng = rng_;
    const auto saved_state = detach_state(state_);
    const auto saved_pos = pos_;

    start_epoch();
    LrFindOptions opts;
    opts.lr_start = cfg_.lr_find_start;
    opts.lr_end = cfg_.lr_find_end;
    opts.steps = cfg_.lr_find_steps;

    LrFinderTrace trace;
    try {
        trace = lmforge::lr_find(
            [&](double lr) {
                if (epoch_done()) start_epoch();  // wrap around on small corpora
                const int bptt_len =
                    cfg_.var_bptt ? sample_bptt_len(cfg_.bptt, rng_) : cfg_.bptt;
                return segment_loss_and_update(bptt_len, lr);
            },
            opts);
    } catch (...) {
        for (size_t i = 0; i < params_.size(); ++i) params_[i].values() = saved_params[i];
        optimizer_.restore(saved_opt);
        rng_ = saved_rng;
        state_ = detach_state(saved_state);
        pos_ = saved_pos;
        throw;
    }
    for (size_t i = 0; i < params_.size(); ++i) params_[i].values() = saved_params[i];
    optimizer_.restore(saved_opt);
    rng_ = saved_rng;
    state_ = detach_state(saved_state);
    pos_ = saved_pos;
    return trace;
}

NGramModel train_ngram_model(const TokenStream& train, int vocab_size) {
    if (train.size() < 10) throw EmptyStream("train_ngram_model: training stream too short");
    const size_t cut = train.size() - train.size() / 10;
    const TokenStream counted(train.begin(), train.begin() + cut);
    const TokenStream heldout(train.begin() + cut, train.end());

    NGramModel model;
    model.vocab_size = vocab_size;
    model.counts = count_ngrams(counted);
    model.weights = fit_mixture_weights(model.counts, heldout, vocab_size);
    return model;
}

}  // namespace lmforge
