#pragma once

// Parameter update rules: SGD, bias-corrected Adam, decoupled weight decay,
// and averaged SGD with the non-monotonic trigger (NT-ASGD). The averaging
// runs alongside plain SGD at a constant learning rate; evaluation reads the
// running mean while training continues on the raw iterates.

#include <cstdint>
#include <string>
#include <vector>

#include "lmforge/tensor.hpp"

namespace lmforge {

// param <- param - lr * grad
void sgd_step(Tensor& param, double lr);

struct AdamState {
    std::vector<real> m, v;
    std::int64_t t = 0;
};

void adam_step(Tensor& param, AdamState& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

// Decoupled multiplicative shrink: param <- param * (1 - lr * wd).
void apply_weight_decay(Tensor& param, double lr, double wd);

// Rescales gradients in place so their joint L2 norm is at most max_norm.
void clip_grad_norm(std::vector<Tensor>& params, double max_norm);

// Fires once the newest validation loss is worse than the best loss seen at
// least `patience` observations ago; never un-triggers.
class NtAsgdMonitor {
public:
    explicit NtAsgdMonitor(int patience) : patience_(patience) {}

    void observe(double val_loss);
    bool triggered() const { return triggered_; }
    // Index into the observation history at which the trigger fired.
    std::int64_t trigger_step() const { return trigger_step_; }
    const std::vector<double>& history() const { return history_; }

private:
    int patience_;
    bool triggered_ = false;
    std::int64_t trigger_step_ = -1;
    std::vector<double> history_;
};

enum class OptimizerKind { sgd, adam, asgd };

OptimizerKind optimizer_kind_from(const std::string& name);

// Owns the per-parameter state for an ordered parameter list. Frozen groups
// are skipped entirely: no parameter, moment, or average update touches them.
class Optimizer {
public:
    Optimizer(OptimizerKind kind, size_t n_params);

    // group_lrs[g] is the effective learning rate for group g; frozen[g] skips
    // the group. Gradients are read from each tensor's grad buffer.
    void step(std::vector<Tensor>& params, const std::vector<int>& groups,
              const std::vector<double>& group_lrs, const std::vector<bool>& frozen,
              double weight_decay);

    // ASGD averaging: starts accumulating on the first call, incremental mean
    // of the iterates seen since.
    void start_averaging(std::vector<Tensor>& params);
    bool averaging() const { return avg_count_ > 0; }
    // Running means of the post-trigger iterates; NotTriggered before any
    // averaging has started.
    std::vector<std::vector<real>> averaged_params() const;

    OptimizerKind kind() const { return kind_; }
    std::int64_t step_count() const { return step_count_; }

    // Flat serialization of all mutable state, for snapshot/restore.
    std::vector<double> snapshot() const;
    void restore(const std::vector<double>& data);

private:
    OptimizerKind kind_;
    std::vector<AdamState> adam_;
    std::vector<std::vector<real>> avg_;
    std::int64_t avg_count_ = 0;
    std::int64_t step_count_ = 0;
};

}  // namespace lmforge
