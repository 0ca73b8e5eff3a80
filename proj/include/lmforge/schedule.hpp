#pragma once

// Learning-rate machinery: the exponential range finder, cosine SGDR with a
// restart at every epoch boundary, per-group differential rates, and gradual
// unfreezing from the output side.

#include <functional>
#include <vector>

#include "lmforge/errors.hpp"

namespace lmforge {

// Cosine decay within one epoch-long cycle; resetting pos to 0 at the epoch
// boundary restarts the rate at lr_max.
struct SgdrClock {
    std::int64_t cycle_len = 1;  // steps per epoch
    std::int64_t pos = 0;        // 0 <= pos <= cycle_len
    double lr_max = 0.1;
    double lr_min = 0.001;
};

double sgdr_lr(const SgdrClock& clock);

struct GroupLrPolicy {
    std::vector<double> base_lrs;  // one per layer group
    std::vector<bool> frozen;      // parallel; frozen groups take no updates
};

// Scales every unfrozen group by schedule_lr / base_max, preserving the
// ratios between groups; frozen groups get 0.
std::vector<double> effective_group_lrs(const GroupLrPolicy& policy, double schedule_lr,
                                        double base_max);

// Unfreezes the frozen group nearest the output (highest index). Throws
// AllUnfrozen when nothing is left to thaw.
GroupLrPolicy unfreeze_next(GroupLrPolicy policy);

struct LrFinderTrace {
    std::vector<double> lrs;     // exact geometric progression
    std::vector<double> losses;  // bias-corrected exponentially smoothed
    double suggested_lr = 0;     // steepest descent of loss w.r.t. ln(lr)
    double max_descending_lr = 0;

    void write_csv(std::ostream& out) const;  // "lr,loss" lines
};

struct LrFindOptions {
    double lr_start = 1e-7;
    double lr_end = 10.0;
    int steps = 100;
    double smooth_beta = 0.98;
    double diverge_factor = 4.0;
};

// Runs train_step(lr) on successive batches with lr growing geometrically
// from lr_start to lr_end, recording smoothed losses, stopping early once the
// smoothed loss exceeds diverge_factor times the best seen. The step callback
// owns any model mutation; callers that need their state back must snapshot
// around this (Trainer::lr_find does). Throws NoDescent if the loss never
// improves on its first value.
LrFinderTrace lr_find(const std::function<double(double)>& train_step,
                      const LrFindOptions& opts = {});

}  // namespace lmforge
