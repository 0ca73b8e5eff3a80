#include "lmforge/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace lmforge {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

double sgdr_lr(const SgdrClock& clock) {
    const double frac = static_cast<double>(clock.pos) / static_cast<double>(clock.cycle_len);
    return clock.lr_min + 0.5 * (clock.lr_max - clock.lr_min) * (1.0 + std::cos(kPi * frac));
}

std::vector<double> effective_group_lrs(const GroupLrPolicy& policy, double schedule_lr,
                                        double base_max) {
    std::vector<double> lrs(policy.base_lrs.size(), 0.0);
    const double ratio = schedule_lr / base_max;
    for (size_t g = 0; g < policy.base_lrs.size(); ++g)
        if (!policy.frozen[g]) lrs[g] = policy.base_lrs[g] * ratio;
    return lrs;
}

GroupLrPolicy unfreeze_next(GroupLrPolicy policy) {
    for (int g = static_cast<int>(policy.frozen.size()) - 1; g >= 0; --g) {
        if (policy.frozen[g]) {
            policy.frozen[g] = false;
            return policy;
        }
    }
    throw AllUnfrozen("unfreeze_next: every group is already trainable");
}

void LrFinderTrace::write_csv(std::ostream& out) const {
    const auto saved = out.precision(17);
    out << "lr,loss\n";
    for (size_t i = 0; i < lrs.size(); ++i) out << lrs[i] << ',' << losses[i] << '\n';
    out.precision(saved);
}

LrFinderTrace lr_find(const std::function<double(double)>& train_step,
                      const LrFindOptions& opts) {
    if (opts.steps < 10) throw ConfigError("lr_find: steps must be >= 10");
    const double mult = std::pow(opts.lr_end / opts.lr_start, 1.0 / opts.steps);

    LrFinderTrace trace;
    double lr = opts.lr_start;
    double avg = 0.0;
    double best = 0.0;
    for (int i = 0; i < opts.steps; ++i) {
        const double raw = train_step(lr);
        avg = opts.smooth_beta * avg + (1.0 - opts.smooth_beta) * raw;
        const double smoothed = avg / (1.0 - std::pow(opts.smooth_beta, i + 1));
        trace.lrs.push_back(lr);
        trace.losses.push_back(smoothed);
        if (i == 0 || smoothed < best) best = smoothed;
        if (!std::isfinite(smoothed) || smoothed > opts.diverge_factor * best) break;
        lr *= mult;
    }

    if (trace.losses.size() < 2 || best >= trace.losses.front())
        throw NoDescent("lr_find: loss never descended");

    // Steepest descent: most negative finite difference of smoothed loss; the
    // lr spacing is uniform in ln(lr), so the raw difference suffices.
    double steepest = 0.0;
    size_t steepest_at = 0;
    for (size_t i = 0; i + 1 < trace.losses.size(); ++i) {
        const double d = trace.losses[i + 1] - trace.losses[i];
        if (d < steepest) {
            steepest = d;
            steepest_at = i;
        }
    }
    trace.suggested_lr = trace.lrs[steepest_at];

    // Highest lr at which the smoothed loss was still going down.
    for (size_t i = 0; i + 1 < trace.losses.size(); ++i)
        if (trace.losses[i + 1] < trace.losses[i]) trace.max_descending_lr = trace.lrs[i + 1];
    return trace;
}

}  // namespace lmforge
