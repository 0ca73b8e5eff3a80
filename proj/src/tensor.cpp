#include "lmforge/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lmforge {

namespace {

thread_local Graph* g_active_graph = nullptr;

std::string shape_str(const Tensor& t) {
    std::ostringstream os;
    os << "[" << t.rows() << "x" << t.cols() << "]";
    return os.str();
}

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(int m, int n, int k, const real* A, const real* B, real* C) {
    for (int i = 0; i < m; ++i) {
        const real* a = A + static_cast<size_t>(i) * k;
        real* c = C + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const real av = a[p];
            const real* b = B + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

// C[m,n] += A[m,k] * B^T, B stored [n,k]
void gemm_nt(int m, int n, int k, const real* A, const real* B, real* C) {
    for (int i = 0; i < m; ++i) {
        const real* a = A + static_cast<size_t>(i) * k;
        real* c = C + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const real* b = B + static_cast<size_t>(j) * k;
            real s = 0;
            for (int p = 0; p < k; ++p) s += a[p] * b[p];
            c[j] += s;
        }
    }
}

// C[m,n] += A^T * B, A stored [k,m], B stored [k,n]
void gemm_tn(int m, int n, int k, const real* A, const real* B, real* C) {
    for (int p = 0; p < k; ++p) {
        const real* a = A + static_cast<size_t>(p) * m;
        const real* b = B + static_cast<size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const real av = a[i];
            real* c = C + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

void record(std::shared_ptr<TensorData> out, std::function<void()> back);

}  // namespace

void detail_record(std::shared_ptr<TensorData> out, std::function<void()> back) {
    g_active_graph->nodes_.push_back(Graph::Node{std::move(out), std::move(back)});
}

namespace {
void record(std::shared_ptr<TensorData> out, std::function<void()> back) {
    if (g_active_graph != nullptr) detail_record(std::move(out), std::move(back));
}
}  // namespace

Tensor::Tensor(int rows, int cols, real fill) : d_(std::make_shared<TensorData>()) {
    d_->rows = rows;
    d_->cols = cols;
    d_->value.assign(static_cast<size_t>(rows) * cols, fill);
}

Tensor Tensor::from(int rows, int cols, std::vector<real> values) {
    if (values.size() != static_cast<size_t>(rows) * cols)
        throw ShapeMismatch("Tensor::from: " + std::to_string(values.size()) + " values for " +
                            std::to_string(rows) + "x" + std::to_string(cols));
    Tensor t;
    t.d_->rows = rows;
    t.d_->cols = cols;
    t.d_->value = std::move(values);
    return t;
}

real Tensor::item() const {
    if (size() != 1) throw ShapeMismatch("item: tensor is " + shape_str(*this) + ", not 1x1");
    return d_->value[0];
}

Tensor Tensor::clone() const {
    Tensor t;
    t.d_->rows = d_->rows;
    t.d_->cols = d_->cols;
    t.d_->value = d_->value;
    return t;
}

Recording::Recording(Graph& g) : prev_(g_active_graph) { g_active_graph = &g; }
Recording::~Recording() { g_active_graph = prev_; }

bool recording_active() { return g_active_graph != nullptr; }

void Graph::backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw NotScalarLoss("backward: loss must be 1x1, got " + shape_str(loss));
    loss.ptr()->ensure_grad();
    loss.ptr()->grad[0] += real(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        // Nodes whose output never received a gradient are unreachable from
        // the loss; their inputs keep zero (or absent) gradients.
        if (it->out->grad.empty()) continue;
        it->back();
    }
}

// ---- ops --------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw ShapeMismatch("matmul: " + shape_str(a) + " x " + shape_str(b));
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out(m, n);
    gemm_nn(m, n, k, a.data(), b.data(), out.data());
    auto ad = a.ptr(), bd = b.ptr(), od = out.ptr();
    record(od, [ad, bd, od, m, n, k]() {
        ad->ensure_grad();
        bd->ensure_grad();
        gemm_nt(m, k, n, od->grad.data(), bd->value.data(), ad->grad.data());
        gemm_tn(k, n, m, ad->value.data(), od->grad.data(), bd->grad.data());
    });
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols())
        throw ShapeMismatch("matmul_nt: " + shape_str(a) + " x " + shape_str(b) + "^T");
    const int m = a.rows(), k = a.cols(), n = b.rows();
    Tensor out(m, n);
    gemm_nt(m, n, k, a.data(), b.data(), out.data());
    auto ad = a.ptr(), bd = b.ptr(), od = out.ptr();
    record(od, [ad, bd, od, m, n, k]() {
        ad->ensure_grad();
        bd->ensure_grad();
        gemm_nn(m, k, n, od->grad.data(), bd->value.data(), ad->grad.data());
        gemm_tn(n, k, m, od->grad.data(), ad->value.data(), bd->grad.data());
    });
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    const bool same = a.rows() == b.rows() && a.cols() == b.cols();
    const bool bias_row = b.rows() == 1 && b.cols() == a.cols();
    if (!same && !bias_row)
        throw ShapeMismatch("add: " + shape_str(a) + " + " + shape_str(b));
    Tensor out(a.rows(), a.cols());
    const size_t total = static_cast<size_t>(a.size());
    const size_t n = static_cast<size_t>(a.cols());
    if (same && !bias_row) {
        for (size_t i = 0; i < total; ++i) out.data()[i] = a.data()[i] + b.data()[i];
    } else {
        for (size_t i = 0; i < total; ++i) out.data()[i] = a.data()[i] + b.data()[i % n];
    }
    auto ad = a.ptr(), bd = b.ptr(), od = out.ptr();
    const bool broadcast = !same;  // b is a 1xN bias row over a's rows
    record(od, [ad, bd, od, broadcast]() {
        ad->ensure_grad();
        bd->ensure_grad();
        const size_t total = od->grad.size();
        for (size_t i = 0; i < total; ++i) ad->grad[i] += od->grad[i];
        if (broadcast) {
            const size_t n = bd->grad.size();
            for (size_t i = 0; i < total; ++i) bd->grad[i % n] += od->grad[i];
        } else {
            for (size_t i = 0; i < total; ++i) bd->grad[i] += od->grad[i];
        }
    });
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeMismatch("mul: " + shape_str(a) + " * " + shape_str(b));
    Tensor out(a.rows(), a.cols());
    const size_t total = static_cast<size_t>(a.size());
    for (size_t i = 0; i < total; ++i) out.data()[i] = a.data()[i] * b.data()[i];
    auto ad = a.ptr(), bd = b.ptr(), od = out.ptr();
    record(od, [ad, bd, od]() {
        ad->ensure_grad();
        bd->ensure_grad();
        const size_t total = od->grad.size();
        for (size_t i = 0; i < total; ++i) {
            ad->grad[i] += od->grad[i] * bd->value[i];
            bd->grad[i] += od->grad[i] * ad->value[i];
        }
    });
    return out;
}

Tensor sigmoid(const Tensor& a) {
    Tensor out(a.rows(), a.cols());
    const size_t total = static_cast<size_t>(a.size());
    for (size_t i = 0; i < total; ++i) {
        const real x = a.data()[i];
        if (x >= 0) {
            out.data()[i] = real(1) / (real(1) + std::exp(-x));
        } else {
            const real e = std::exp(x);
            out.data()[i] = e / (real(1) + e);
        }
    }
    auto ad = a.ptr(), od = out.ptr();
    record(od, [ad, od]() {
        ad->ensure_grad();
        const size_t total = od->grad.size();
        for (size_t i = 0; i < total; ++i) {
            const real y = od->value[i];
            ad->grad[i] += od->grad[i] * y * (real(1) - y);
        }
    });
    return out;
}

Tensor tanh(const Tensor& a) {
    Tensor out(a.rows(), a.cols());
    const size_t total = static_cast<size_t>(a.size());
    for (size_t i = 0; i < total; ++i) out.data()[i] = std::tanh(a.data()[i]);
    auto ad = a.ptr(), od = out.ptr();
    record(od, [ad, od]() {
        ad->ensure_grad();
        const size_t total = od->grad.size();
        for (size_t i = 0; i < total; ++i) {
            const real y = od->value[i];
            ad->grad[i] += od->grad[i] * (real(1) - y * y);
        }
    });
    return out;
}

Tensor scale(const Tensor& a, real s) {
    Tensor out(a.rows(), a.cols());
    const size_t total = static_cast<size_t>(a.size());
    for (size_t i = 0; i < total; ++i) out.data()[i] = a.data()[i] * s;
    auto ad = a.ptr(), od = out.ptr();
    record(od, [ad, od, s]() {
        ad->ensure_grad();
        const size_t total = od->grad.size();
        for (size_t i = 0; i < total; ++i) ad->grad[i] += od->grad[i] * s;
    });
    return out;
}

Tensor sum(const Tensor& a) {
    Tensor out(1, 1);
    real s = 0;
    const size_t total = static_cast<size_t>(a.size());
    for (size_t i = 0; i < total; ++i) s += a.data()[i];
    out.data()[0] = s;
    auto ad = a.ptr(), od = out.ptr();
    record(od, [ad, od]() {
        ad->ensure_grad();
        const real g = od->grad[0];
        for (auto& v : ad->grad) v += g;
    });
    return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeMismatch("concat_rows: no parts");
    const int cols = parts[0].cols();
    int rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols)
            throw ShapeMismatch("concat_rows: column mismatch " + shape_str(parts[0]) + " vs " +
                                shape_str(p));
        rows += p.rows();
    }
    Tensor out(rows, cols);
    size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.data(), p.data() + p.size(), out.data() + off);
        off += static_cast<size_t>(p.size());
    }
    std::vector<std::shared_ptr<TensorData>> pd;
    pd.reserve(parts.size());
    for (const auto& p : parts) pd.push_back(p.ptr());
    auto od = out.ptr();
    record(od, [pd, od]() {
        size_t off = 0;
        for (const auto& p : pd) {
            p->ensure_grad();
            const size_t n = p->value.size();
            for (size_t i = 0; i < n; ++i) p->grad[i] += od->grad[off + i];
            off += n;
        }
    });
    return out;
}

Tensor dropout_apply(const Tensor& a, const Tensor& mask) {
    if (a.rows() != mask.rows() || a.cols() != mask.cols())
        throw ShapeMismatch("dropout_apply: " + shape_str(a) + " vs mask " + shape_str(mask));
    Tensor out(a.rows(), a.cols());
    const size_t total = static_cast<size_t>(a.size());
    for (size_t i = 0; i < total; ++i) out.data()[i] = a.data()[i] * mask.data()[i];
    auto ad = a.ptr(), md = mask.ptr(), od = out.ptr();
    record(od, [ad, md, od]() {
        ad->ensure_grad();
        const size_t total = od->grad.size();
        for (size_t i = 0; i < total; ++i) ad->grad[i] += od->grad[i] * md->value[i];
    });
    return out;
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids,
                        const std::vector<real>* row_scale) {
    const int n_rows = static_cast<int>(ids.size());
    const int width = table.cols();
    for (int id : ids) {
        if (id < 0 || id >= table.rows())
            throw InvalidTokenId("embedding_lookup: id " + std::to_string(id) +
                                 " outside table " + shape_str(table));
    }
    Tensor out(n_rows, width);
    for (int r = 0; r < n_rows; ++r) {
        const real* src = table.data() + static_cast<size_t>(ids[r]) * width;
        real* dst = out.data() + static_cast<size_t>(r) * width;
        const real s = row_scale ? (*row_scale)[ids[r]] : real(1);
        for (int j = 0; j < width; ++j) dst[j] = src[j] * s;
    }
    auto td = table.ptr(), od = out.ptr();
    std::vector<real> scales;
    if (row_scale) {
        scales.reserve(ids.size());
        for (int id : ids) scales.push_back((*row_scale)[id]);
    }
    record(od, [td, od, ids, scales, width]() {
        td->ensure_grad();
        for (size_t r = 0; r < ids.size(); ++r) {
            const real s = scales.empty() ? real(1) : scales[r];
            const real* g = od->grad.data() + r * width;
            real* dst = td->grad.data() + static_cast<size_t>(ids[r]) * width;
            for (int j = 0; j < width; ++j) dst[j] += g[j] * s;
        }
    });
    return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
    const int rows = logits.rows(), vocab = logits.cols();
    if (static_cast<int>(targets.size()) != rows)
        throw ShapeMismatch("softmax_cross_entropy: " + std::to_string(targets.size()) +
                            " targets for " + shape_str(logits));
    for (int t : targets) {
        if (t < 0 || t >= vocab)
            throw InvalidTarget("softmax_cross_entropy: target " + std::to_string(t) +
                                " outside vocab of " + std::to_string(vocab));
    }
    // Keep the softmax probabilities for the backward pass.
    auto probs = std::make_shared<std::vector<real>>(static_cast<size_t>(rows) * vocab);
    real loss_sum = 0;
    for (int r = 0; r < rows; ++r) {
        const real* row = logits.data() + static_cast<size_t>(r) * vocab;
        real* p = probs->data() + static_cast<size_t>(r) * vocab;
        real mx = row[0];
        for (int j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
        real z = 0;
        for (int j = 0; j < vocab; ++j) {
            p[j] = std::exp(row[j] - mx);
            z += p[j];
        }
        const real inv_z = real(1) / z;
        for (int j = 0; j < vocab; ++j) p[j] *= inv_z;
        loss_sum += -(row[targets[r]] - mx - std::log(z));
    }
    Tensor out(1, 1);
    out.data()[0] = loss_sum / rows;
    auto ld = logits.ptr(), od = out.ptr();
    record(od, [ld, od, probs, targets, rows, vocab]() {
        ld->ensure_grad();
        const real g = od->grad[0] / rows;
        for (int r = 0; r < rows; ++r) {
            const real* p = probs->data() + static_cast<size_t>(r) * vocab;
            real* dst = ld->grad.data() + static_cast<size_t>(r) * vocab;
            for (int j = 0; j < vocab; ++j) dst[j] += g * p[j];
            dst[targets[r]] -= g;
        }
    });
    return out;
}

void softmax_inplace(std::vector<real>& logits) {
    real mx = logits[0];
    for (real v : logits) mx = std::max(mx, v);
    real z = 0;
    for (auto& v : logits) {
        v = std::exp(v - mx);
        z += v;
    }
    const real inv_z = real(1) / z;
    for (auto& v : logits) v *= inv_z;
}

void fill_uniform(Tensor& t, real bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<real> dist(-bound, bound);
    for (auto& v : t.values()) v = dist(rng);
}

// ---- gradient checking ------------------------------------------------------

double grad_check(const std::function<Tensor()>& f, Tensor wrt, double eps) {
    return grad_check(f, std::vector<Tensor>{wrt}, eps);
}

double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& wrt,
                  double eps) {
    // Analytic pass.
    for (Tensor t : wrt) t.zero_grad();
    Graph g;
    Tensor loss;
    {
        Recording rec(g);
        loss = f();
    }
    g.backward(loss);
    std::vector<std::vector<real>> analytic;
    analytic.reserve(wrt.size());
    for (Tensor t : wrt) analytic.push_back(t.grad());

    // Numeric probes, forward-only.
    double max_err = 0;
    for (size_t ti = 0; ti < wrt.size(); ++ti) {
        Tensor t = wrt[ti];
        for (std::int64_t i = 0; i < t.size(); ++i) {
            const real saved = t.data()[i];
            t.data()[i] = saved + static_cast<real>(eps);
            const double up = f().item();
            t.data()[i] = saved - static_cast<real>(eps);
            const double down = f().item();
            t.data()[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic[ti][i];
            const double err =
                std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

}  // namespace lmforge
