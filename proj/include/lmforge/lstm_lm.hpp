#pragma once

// The AWD-LSTM language model: embedding -> stacked LSTM layers -> linear
// decoder. Regularization follows the weight-dropped recipe: DropConnect on
// the hidden-to-hidden matrices, variational (per-segment) dropout on the
// layer inputs/outputs, and embedding dropout that removes whole word rows.
// All masks are sampled once per training segment and reused at every
// timestep inside it.

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lmforge/tensor.hpp"

namespace lmforge {

struct LstmLayerParams {
    int in_size = 0;
    int hidden_size = 0;
    // Input-to-hidden [in,hidden], hidden-to-hidden [hidden,hidden], bias rows [1,hidden].
    Tensor w_i, w_f, w_o, w_c;
    Tensor u_i, u_f, u_o, u_c;
    Tensor b_i, b_f, b_o, b_c;
};

// Parameter groups for differential learning rates / unfreezing:
// group 0 = embedding + first LSTM layer, middle layers one group each,
// last group = top LSTM layer + decoder. group_count() == layer count.
struct LstmLmParams {
    int vocab_size = 0;
    int emb_size = 0;
    int hidden_size = 0;
    bool tied = false;  // decoder weight = embedding^T when set

    Tensor embedding;  // [V, emb]
    std::vector<LstmLayerParams> layers;
    Tensor decoder_w;  // [emb, V]; ignored in the forward pass when tied
    Tensor decoder_b;  // [1, V]

    // Layer l maps layer_in(l) -> layer_out(l); the last layer narrows back to
    // the embedding width so the decoder maps emb -> V.
    static int layer_in(int l, int emb, int hidden) { return l == 0 ? emb : hidden; }
    int layer_out(int l) const {
        return l == static_cast<int>(layers.size()) - 1 ? emb_size : hidden_size;
    }

    // Weights U(-1/sqrt(width), 1/sqrt(width)) with width = the matrix's output
    // dimension for gate weights and the embedding width elsewhere; biases zero.
    static LstmLmParams init(int vocab, int emb, int hidden, int n_layers, bool tied,
                             std::mt19937_64& rng);

    // All trainable tensors in the declared (checkpoint) order. When tied the
    // decoder weight is excluded (it is the embedding).
    std::vector<Tensor> parameters();
    std::vector<int> parameter_groups() const;  // parallel to parameters()
    int group_count() const { return static_cast<int>(layers.size()); }

    std::int64_t parameter_count();
    LstmLmParams clone() const;
};

struct HiddenState {
    std::vector<Tensor> h, c;  // per layer, [batch, layer_out]
};

HiddenState zero_state(const LstmLmParams& params, int batch);

// Values preserved, graph lineage severed: gradients never flow across the
// segment boundary.
HiddenState detach_state(const HiddenState& state);

struct DropoutMasks {
    struct UMasks {
        Tensor i, f, o, c;  // [hidden, hidden], entries in {0, 1/(1-p)}
    };
    std::vector<UMasks> u;            // per layer (DropConnect)
    Tensor input_mask;                // [batch, emb], after the embedding
    std::vector<Tensor> output_mask;  // per layer, [batch, layer_out]
    std::vector<real> emb_scale;      // [V], whole-row embedding dropout
};

// Inverted-dropout Bernoulli masks: keep probability 1-p, kept entries scaled
// by 1/(1-p). p = 0 produces exact identity masks.
DropoutMasks sample_masks(const LstmLmParams& params, int batch, double p_weight,
                          double p_var_in, double p_var_out, double p_embed,
                          std::mt19937_64& rng);

// One LSTM step. When u_masks is non-null the masks are applied to each U
// before use (training); pass nullptr for evaluation.
std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h_prev,
                                    const Tensor& c_prev, const LstmLayerParams& layer,
                                    const DropoutMasks::UMasks* u_masks);

struct SegmentResult {
    Tensor logits;      // [T*batch, V], timestep-major rows
    HiddenState state;  // detached, ready for the next segment
};

// Runs the whole stack over a segment. steps[t] holds the batch of token ids
// at timestep t. `masks` must stay fixed for the segment and is required when
// training; evaluation (training = false) applies no dropout at all.
SegmentResult forward_segment(const LstmLmParams& params,
                              const std::vector<std::vector<int>>& steps,
                              const HiddenState& state, const DropoutMasks* masks,
                              bool training);

// The Simple LSTM comparison baseline, realized as a configuration of this
// same core: 2 layers of width 200, no dropout, plain SGD at LR 1 for 10
// epochs, hidden state zero-initialized.
struct SimpleLstmConfig {
    int layers = 2;
    int hidden = 200;
    int emb = 200;
    double dropout_multiplier = 0.0;
    std::string optimizer = "sgd";
    double lr = 1.0;
    int epochs = 10;
};

SimpleLstmConfig simple_lstm_config();

// ---- checkpoint I/O ----------------------------------------------------------
//
// Binary layout (all integers little-endian u32, all arrays little-endian
// IEEE-754 f64, row-major):
//   magic "LMFG" | version=1 | vocab_size | emb_size | hidden_size | n_layers
//   embedding [V*emb]
//   per layer: w_i w_f w_o w_c | u_i u_f u_o u_c | b_i b_f b_o b_c
//   decoder_w [emb*V] | decoder_b [V]

void save_checkpoint(const std::string& path, const LstmLmParams& params);
LstmLmParams load_checkpoint(const std::string& path);

}  // namespace lmforge
