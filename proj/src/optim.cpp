#include "lmforge/optim.hpp"

#include <algorithm>
#include <cmath>

namespace lmforge {

void sgd_step(Tensor& param, double lr) {
    if (!param.has_grad()) return;
    const auto& g = param.grad();
    real* p = param.data();
    const real step = static_cast<real>(lr);
    for (size_t i = 0; i < g.size(); ++i) p[i] -= step * g[i];
}

void adam_step(Tensor& param, AdamState& state, double lr, double beta1, double beta2,
               double eps) {
    if (!param.has_grad()) return;
    const auto& g = param.grad();
    if (state.m.empty()) {
        state.m.assign(g.size(), real(0));
        state.v.assign(g.size(), real(0));
    }
    ++state.t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    real* p = param.data();
    for (size_t i = 0; i < g.size(); ++i) {
        state.m[i] = static_cast<real>(beta1 * state.m[i] + (1.0 - beta1) * g[i]);
        state.v[i] = static_cast<real>(beta2 * state.v[i] + (1.0 - beta2) * g[i] * g[i]);
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        p[i] -= static_cast<real>(lr * m_hat / (std::sqrt(v_hat) + eps));
    }
}

void apply_weight_decay(Tensor& param, double lr, double wd) {
    if (wd == 0.0) return;
    const real shrink = static_cast<real>(1.0 - lr * wd);
    for (auto& v : param.values()) v *= shrink;
}

void clip_grad_norm(std::vector<Tensor>& params, double max_norm) {
    if (max_norm <= 0.0) return;
    double sq = 0;
    for (auto& p : params) {
        if (!p.has_grad()) continue;
        for (real g : p.grad()) sq += static_cast<double>(g) * g;
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const real factor = static_cast<real>(max_norm / norm);
    for (auto& p : params) {
        if (!p.has_grad()) continue;
        for (auto& g : p.grad()) g *= factor;
    }
}

void NtAsgdMonitor::observe(double val_loss) {
    history_.push_back(val_loss);
    if (triggered_) return;
    const std::int64_t len = static_cast<std::int64_t>(history_.size());
    if (len <= patience_) return;
    const double best_before = *std::min_element(history_.begin(), history_.end() - patience_);
    if (val_loss > best_before) {
        triggered_ = true;
        trigger_step_ = len - 1;
    }
}

OptimizerKind optimizer_kind_from(const std::string& name) {
    if (name == "sgd") return OptimizerKind::sgd;
    if (name == "adam") return OptimizerKind::adam;
    if (name == "asgd") return OptimizerKind::asgd;
    throw ConfigError("optimizer: unknown value '" + name + "' (expected sgd|adam|asgd)");
}

Optimizer::Optimizer(OptimizerKind kind, size_t n_params) : kind_(kind) {
    adam_.resize(n_params);
    avg_.resize(n_params);
}

void Optimizer::step(std::vector<Tensor>& params, const std::vector<int>& groups,
                     const std::vector<double>& group_lrs, const std::vector<bool>& frozen,
                     double weight_decay) {
    if (params.size() != groups.size() || params.size() != adam_.size())
        throw ShapeMismatch("Optimizer::step: parameter bookkeeping out of sync");
    ++step_count_;
    for (size_t i = 0; i < params.size(); ++i) {
        const int g = groups[i];
        if (frozen[g]) continue;
        const double lr = group_lrs[g];
        if (kind_ == OptimizerKind::adam) {
            adam_step(params[i], adam_[i], lr);
        } else {
            sgd_step(params[i], lr);
        }
        apply_weight_decay(params[i], lr, weight_decay);
    }
    if (avg_count_ > 0) {
        ++avg_count_;
        const real inv = static_cast<real>(1.0 / static_cast<double>(avg_count_));
        for (size_t i = 0; i < params.size(); ++i) {
            const real* p = params[i].data();
            auto& a = avg_[i];
            for (size_t j = 0; j < a.size(); ++j) a[j] += (p[j] - a[j]) * inv;
        }
    }
}

void Optimizer::start_averaging(std::vector<Tensor>& params) {
    if (avg_count_ > 0) return;
    avg_count_ = 1;
    for (size_t i = 0; i < params.size(); ++i)
        avg_[i].assign(params[i].data(), params[i].data() + params[i].size());
}

std::vector<std::vector<real>> Optimizer::averaged_params() const {
    if (avg_count_ == 0)
        throw NotTriggered("asgd_average: averaging has not been triggered");
    return avg_;
}

std::vector<double> Optimizer::snapshot() const {
    // Self-describing layout: lazily allocated moment buffers may change size
    // between snapshot and restore.
    std::vector<double> out;
    out.push_back(static_cast<double>(step_count_));
    out.push_back(static_cast<double>(avg_count_));
    for (const auto& s : adam_) {
        out.push_back(static_cast<double>(s.t));
        out.push_back(static_cast<double>(s.m.size()));
        for (real v : s.m) out.push_back(v);
        for (real v : s.v) out.push_back(v);
    }
    for (const auto& a : avg_) {
        out.push_back(static_cast<double>(a.size()));
        for (real v : a) out.push_back(v);
    }
    return out;
}

void Optimizer::restore(const std::vector<double>& data) {
    size_t k = 0;
    step_count_ = static_cast<std::int64_t>(data[k++]);
    avg_count_ = static_cast<std::int64_t>(data[k++]);
    for (auto& s : adam_) {
        s.t = static_cast<std::int64_t>(data[k++]);
        const size_t n = static_cast<size_t>(data[k++]);
        s.m.resize(n);
        s.v.resize(n);
        for (auto& v : s.m) v = static_cast<real>(data[k++]);
        for (auto& v : s.v) v = static_cast<real>(data[k++]);
    }
    for (auto& a : avg_) {
        a.resize(static_cast<size_t>(data[k++]));
        for (auto& v : a) v = static_cast<real>(data[k++]);
    }
}

}  // namespace lmforge
