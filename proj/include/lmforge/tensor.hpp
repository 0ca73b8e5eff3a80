#pragma once

// Dense row-major matrices with reverse-mode automatic differentiation.
//
// The op set is exactly what the LSTM language model needs: matmul, bias-row
// add, elementwise mul, sigmoid/tanh, embedding lookup, row concatenation,
// scaling, constant-mask dropout and softmax cross-entropy. A Graph is a tape
// of nodes appended during the forward pass; nodes are created in topological
// order by construction, and backward() walks the tape in reverse. Graphs are
// rebuilt every forward pass (define-by-run), which makes truncated BPTT with
// hidden-state detachment trivial.

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "lmforge/errors.hpp"

namespace lmforge {

#ifdef LMFORGE_REAL32
using real = float;
#else
using real = double;
#endif

struct TensorData {
    int rows = 0;
    int cols = 0;
    std::vector<real> value;
    std::vector<real> grad;  // empty until first accumulation

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), real(0));
    }
};

// Value handle over a shared buffer: copies alias the same storage, clone()
// makes an independent copy with no graph lineage.
class Tensor {
public:
    Tensor() : d_(std::make_shared<TensorData>()) {}
    Tensor(int rows, int cols, real fill = real(0));
    static Tensor from(int rows, int cols, std::vector<real> values);

    int rows() const { return d_->rows; }
    int cols() const { return d_->cols; }
    std::int64_t size() const { return static_cast<std::int64_t>(d_->value.size()); }

    real* data() { return d_->value.data(); }
    const real* data() const { return d_->value.data(); }
    std::vector<real>& values() { return d_->value; }
    const std::vector<real>& values() const { return d_->value; }

    real& at(int r, int c) { return d_->value[static_cast<size_t>(r) * d_->cols + c]; }
    real at(int r, int c) const { return d_->value[static_cast<size_t>(r) * d_->cols + c]; }

    // Value of a 1x1 tensor.
    real item() const;

    bool has_grad() const { return !d_->grad.empty(); }
    std::vector<real>& grad() {
        d_->ensure_grad();
        return d_->grad;
    }
    const std::vector<real>& grad() const { return d_->grad; }
    void zero_grad() {
        if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), real(0));
    }

    // Deep copy of the values; the copy has no grad and no lineage.
    Tensor clone() const;

    const std::shared_ptr<TensorData>& ptr() const { return d_; }
    bool same_buffer(const Tensor& other) const { return d_ == other.d_; }

private:
    std::shared_ptr<TensorData> d_;
};

// Tape of backward records. One Graph per forward pass; the node order is the
// creation order, so parents always precede their consumers.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // Seeds d(loss)/d(loss) = 1 and runs the tape in reverse, accumulating
    // gradients on every tensor reachable from the loss. Throws NotScalarLoss
    // unless loss is 1x1.
    void backward(const Tensor& loss);

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

private:
    struct Node {
        std::shared_ptr<TensorData> out;
        std::function<void()> back;
    };
    std::vector<Node> nodes_;

    friend class Recording;
    friend void detail_record(std::shared_ptr<TensorData> out, std::function<void()> back);
};

// RAII guard: while alive, ops on this thread append nodes to `g`.
// Without an active Recording, ops compute values only (evaluation mode).
class Recording {
public:
    explicit Recording(Graph& g);
    ~Recording();
    Recording(const Recording&) = delete;
    Recording& operator=(const Recording&) = delete;

private:
    Graph* prev_;
};

bool recording_active();

// ---- forward ops -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);    // [m,k] x [k,n] -> [m,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b); // [m,k] x [n,k]^T -> [m,n]

// Same-shape elementwise add, or bias-row broadcast when b is [1,n].
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor scale(const Tensor& a, real s);
Tensor sum(const Tensor& a);  // -> 1x1
Tensor concat_rows(const std::vector<Tensor>& parts);

// Elementwise multiply by a constant mask; gradients flow to `a` only.
Tensor dropout_apply(const Tensor& a, const Tensor& mask);

// Gathers rows of `table` by id. When row_scale is given, row i of the output
// is table[ids[i]] * row_scale[ids[i]] (used for embedding dropout, without
// materializing a masked copy of the table).
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids,
                        const std::vector<real>* row_scale = nullptr);

// Mean over rows of -ln softmax(logits)[target], max-subtraction stabilized.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets);

// ---- non-graph helpers -----------------------------------------------------

// In-place stable softmax of a flat logit vector.
void softmax_inplace(std::vector<real>& logits);

// Fills with U(-bound, bound) / N(0,1)-scaled values; plain value writes, no graph.
void fill_uniform(Tensor& t, real bound, std::mt19937_64& rng);

// ---- gradient checking -----------------------------------------------------

// Central-difference check of d f / d wrt. `f` must rebuild the forward pass
// from current tensor values on every call (it is invoked once under a
// Recording to get analytic gradients, then repeatedly without recording for
// the numeric probes). Returns the max over coordinates of
// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
double grad_check(const std::function<Tensor()>& f, Tensor wrt, double eps = 1e-5);
double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& wrt,
                  double eps = 1e-5);

}  // namespace lmforge
