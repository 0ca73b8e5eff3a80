#include "lmforge/lstm_lm.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace lmforge {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts are unsupported");

namespace {

Tensor init_weight(int rows, int cols, int width, std::mt19937_64& rng) {
    Tensor t(rows, cols);
    fill_uniform(t, static_cast<real>(1.0 / std::sqrt(static_cast<double>(width))), rng);
    return t;
}

Tensor bernoulli_mask(int rows, int cols, double p, std::mt19937_64& rng) {
    Tensor m(rows, cols, real(1));
    if (p <= 0.0) return m;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const real keep_scale = static_cast<real>(1.0 / (1.0 - p));
    for (auto& v : m.values()) v = unit(rng) < p ? real(0) : keep_scale;
    return m;
}

}  // namespace

LstmLmParams LstmLmParams::init(int vocab, int emb, int hidden, int n_layers, bool tied,
                                std::mt19937_64& rng) {
    LstmLmParams p;
    p.vocab_size = vocab;
    p.emb_size = emb;
    p.hidden_size = hidden;
    p.tied = tied;
    p.embedding = init_weight(vocab, emb, emb, rng);
    for (int l = 0; l < n_layers; ++l) {
        LstmLayerParams layer;
        layer.in_size = layer_in(l, emb, hidden);
        layer.hidden_size = l == n_layers - 1 ? emb : hidden;
        const int w = layer.hidden_size;
        layer.w_i = init_weight(layer.in_size, w, w, rng);
        layer.w_f = init_weight(layer.in_size, w, w, rng);
        layer.w_o = init_weight(layer.in_size, w, w, rng);
        layer.w_c = init_weight(layer.in_size, w, w, rng);
        layer.u_i = init_weight(w, w, w, rng);
        layer.u_f = init_weight(w, w, w, rng);
        layer.u_o = init_weight(w, w, w, rng);
        layer.u_c = init_weight(w, w, w, rng);
        layer.b_i = Tensor(1, w);
        layer.b_f = Tensor(1, w);
        layer.b_o = Tensor(1, w);
        layer.b_c = Tensor(1, w);
        p.layers.push_back(std::move(layer));
    }
    p.decoder_w = init_weight(emb, vocab, emb, rng);
    p.decoder_b = Tensor(1, vocab);
    return p;
}

std::vector<Tensor> LstmLmParams::parameters() {
    std::vector<Tensor> out;
    out.push_back(embedding);
    for (auto& l : layers) {
        for (Tensor* t : {&l.w_i, &l.w_f, &l.w_o, &l.w_c, &l.u_i, &l.u_f, &l.u_o, &l.u_c,
                          &l.b_i, &l.b_f, &l.b_o, &l.b_c})
            out.push_back(*t);
    }
    if (!tied) out.push_back(decoder_w);
    out.push_back(decoder_b);
    return out;
}

std::vector<int> LstmLmParams::parameter_groups() const {
    const int n_layers = static_cast<int>(layers.size());
    const int last = n_layers - 1;
    std::vector<int> groups;
    groups.push_back(0);  // embedding
    for (int l = 0; l < n_layers; ++l)
        for (int k = 0; k < 12; ++k) groups.push_back(l);
    if (!tied) groups.push_back(last);  // decoder weight
    groups.push_back(last);             // decoder bias
    return groups;
}

std::int64_t LstmLmParams::parameter_count() {
    std::int64_t n = 0;
    for (auto& t : parameters()) n += t.size();
    return n;
}

LstmLmParams LstmLmParams::clone() const {
    LstmLmParams p;
    p.vocab_size = vocab_size;
    p.emb_size = emb_size;
    p.hidden_size = hidden_size;
    p.tied = tied;
    p.embedding = embedding.clone();
    for (const auto& l : layers) {
        LstmLayerParams c;
        c.in_size = l.in_size;
        c.hidden_size = l.hidden_size;
        c.w_i = l.w_i.clone(); c.w_f = l.w_f.clone(); c.w_o = l.w_o.clone(); c.w_c = l.w_c.clone();
        c.u_i = l.u_i.clone(); c.u_f = l.u_f.clone(); c.u_o = l.u_o.clone(); c.u_c = l.u_c.clone();
        c.b_i = l.b_i.clone(); c.b_f = l.b_f.clone(); c.b_o = l.b_o.clone(); c.b_c = l.b_c.clone();
        p.layers.push_back(std::move(c));
    }
    p.decoder_w = decoder_w.clone();
    p.decoder_b = decoder_b.clone();
    return p;
}

HiddenState zero_state(const LstmLmParams& params, int batch) {
    HiddenState s;
    for (size_t l = 0; l < params.layers.size(); ++l) {
        const int w = params.layers[l].hidden_size;
        s.h.emplace_back(batch, w);
        s.c.emplace_back(batch, w);
    }
    return s;
}

HiddenState detach_state(const HiddenState& state) {
    HiddenState out;
    for (const auto& t : state.h) out.h.push_back(t.clone());
    for (const auto& t : state.c) out.c.push_back(t.clone());
    return out;
}

DropoutMasks sample_masks(const LstmLmParams& params, int batch, double p_weight,
                          double p_var_in, double p_var_out, double p_embed,
                          std::mt19937_64& rng) {
    DropoutMasks m;
    for (const auto& layer : params.layers) {
        const int w = layer.hidden_size;
        DropoutMasks::UMasks um;
        um.i = bernoulli_mask(w, w, p_weight, rng);
        um.f = bernoulli_mask(w, w, p_weight, rng);
        um.o = bernoulli_mask(w, w, p_weight, rng);
        um.c = bernoulli_mask(w, w, p_weight, rng);
        m.u.push_back(std::move(um));
        m.output_mask.push_back(bernoulli_mask(batch, w, p_var_out, rng));
    }
    m.input_mask = bernoulli_mask(batch, params.emb_size, p_var_in, rng);
    m.emb_scale.assign(params.vocab_size, real(1));
    if (p_embed > 0.0) {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const real keep_scale = static_cast<real>(1.0 / (1.0 - p_embed));
        for (auto& s : m.emb_scale) s = unit(rng) < p_embed ? real(0) : keep_scale;
    }
    return m;
}

namespace {

// Per-segment view of a layer with DropConnect already applied to the U
// matrices; built once so every timestep reuses the identical masked weights.
struct LayerView {
    const LstmLayerParams* p;
    Tensor u_i, u_f, u_o, u_c;
};

LayerView make_view(const LstmLayerParams& layer, const DropoutMasks::UMasks* u_masks) {
    LayerView v;
    v.p = &layer;
    if (u_masks != nullptr) {
        v.u_i = dropout_apply(layer.u_i, u_masks->i);
        v.u_f = dropout_apply(layer.u_f, u_masks->f);
        v.u_o = dropout_apply(layer.u_o, u_masks->o);
        v.u_c = dropout_apply(layer.u_c, u_masks->c);
    } else {
        v.u_i = layer.u_i;
        v.u_f = layer.u_f;
        v.u_o = layer.u_o;
        v.u_c = layer.u_c;
    }
    return v;
}

std::pair<Tensor, Tensor> cell_step(const Tensor& x, const Tensor& h_prev,
                                    const Tensor& c_prev, const LayerView& v) {
    const auto& p = *v.p;
    Tensor i = sigmoid(add(add(matmul(x, p.w_i), matmul(h_prev, v.u_i)), p.b_i));
    Tensor f = sigmoid(add(add(matmul(x, p.w_f), matmul(h_prev, v.u_f)), p.b_f));
    Tensor o = sigmoid(add(add(matmul(x, p.w_o), matmul(h_prev, v.u_o)), p.b_o));
    Tensor c_hat = tanh(add(add(matmul(x, p.w_c), matmul(h_prev, v.u_c)), p.b_c));
    Tensor c = add(mul(f, c_prev), mul(i, c_hat));
    Tensor h = mul(o, tanh(c));
    return {h, c};
}

}  // namespace

std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h_prev,
                                    const Tensor& c_prev, const LstmLayerParams& layer,
                                    const DropoutMasks::UMasks* u_masks) {
    if (x.cols() != layer.in_size)
        throw ShapeMismatch("lstm_cell: input width " + std::to_string(x.cols()) +
                            " != layer in_size " + std::to_string(layer.in_size));
    if (h_prev.cols() != layer.hidden_size || c_prev.cols() != layer.hidden_size)
        throw ShapeMismatch("lstm_cell: state width mismatch for hidden_size " +
                            std::to_string(layer.hidden_size));
    return cell_step(x, h_prev, c_prev, make_view(layer, u_masks));
}

SegmentResult forward_segment(const LstmLmParams& params,
                              const std::vector<std::vector<int>>& steps,
                              const HiddenState& state, const DropoutMasks* masks,
                              bool training) {
    if (steps.empty()) throw ShapeMismatch("forward_segment: empty segment");
    if (training && masks == nullptr)
        throw ShapeMismatch("forward_segment: training requires dropout masks");
    if (state.h.size() != params.layers.size())
        throw ShapeMismatch("forward_segment: state has " + std::to_string(state.h.size()) +
                            " layers, model has " + std::to_string(params.layers.size()));
    const size_t n_layers = params.layers.size();
    const bool drop = training;

    std::vector<LayerView> views;
    views.reserve(n_layers);
    for (size_t l = 0; l < n_layers; ++l)
        views.push_back(make_view(params.layers[l], drop ? &masks->u[l] : nullptr));

    std::vector<Tensor> h = state.h, c = state.c;
    std::vector<Tensor> decoded_inputs;
    decoded_inputs.reserve(steps.size());
    for (const auto& ids : steps) {
        Tensor x = embedding_lookup(params.embedding, ids, drop ? &masks->emb_scale : nullptr);
        if (drop) x = dropout_apply(x, masks->input_mask);
        for (size_t l = 0; l < n_layers; ++l) {
            auto [h_t, c_t] = cell_step(x, h[l], c[l], views[l]);
            h[l] = h_t;
            c[l] = c_t;
            x = drop ? dropout_apply(h_t, masks->output_mask[l]) : h_t;
        }
        decoded_inputs.push_back(x);
    }

    Tensor flat = concat_rows(decoded_inputs);
    Tensor logits = params.tied ? matmul_nt(flat, params.embedding)
                                : matmul(flat, params.decoder_w);
    logits = add(logits, params.decoder_b);

    SegmentResult result;
    result.logits = logits;
    result.state.h = std::move(h);
    result.state.c = std::move(c);
    result.state = detach_state(result.state);
    return result;
}

SimpleLstmConfig simple_lstm_config() { return SimpleLstmConfig{}; }

// ---- checkpoint I/O ------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'L', 'M', 'F', 'G'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::ifstream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

void write_array(std::ofstream& out, const Tensor& t) {
    for (real v : t.values()) {
        const double d = static_cast<double>(v);
        out.write(reinterpret_cast<const char*>(&d), sizeof(d));
    }
}

void read_array(std::ifstream& in, Tensor& t) {
    for (auto& v : t.values()) {
        double d = 0;
        in.read(reinterpret_cast<char*>(&d), sizeof(d));
        v = static_cast<real>(d);
    }
}

}  // namespace

void save_checkpoint(const std::string& path, const LstmLmParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path);
    out.write(kMagic, 4);
    write_u32(out, kVersion);
    write_u32(out, static_cast<std::uint32_t>(params.vocab_size));
    write_u32(out, static_cast<std::uint32_t>(params.emb_size));
    write_u32(out, static_cast<std::uint32_t>(params.hidden_size));
    write_u32(out, static_cast<std::uint32_t>(params.layers.size()));
    write_array(out, params.embedding);
    for (const auto& l : params.layers) {
        for (const Tensor* t : {&l.w_i, &l.w_f, &l.w_o, &l.w_c, &l.u_i, &l.u_f, &l.u_o,
                                &l.u_c, &l.b_i, &l.b_f, &l.b_o, &l.b_c})
            write_array(out, *t);
    }
    if (params.tied) {
        // Layout always carries a decoder weight; for tied models it is the
        // embedding transpose, so the file loads into an equivalent untied model.
        Tensor dec(params.emb_size, params.vocab_size);
        for (int v = 0; v < params.vocab_size; ++v)
            for (int e = 0; e < params.emb_size; ++e)
                dec.at(e, v) = params.embedding.at(v, e);
        write_array(out, dec);
    } else {
        write_array(out, params.decoder_w);
    }
    write_array(out, params.decoder_b);
    if (!out) throw IoError("short write to checkpoint " + path);
}

LstmLmParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingCheckpoint("cannot read checkpoint " + path);
    char magic[4] = {};
    in.read(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("bad checkpoint magic in " + path);
    const std::uint32_t version = read_u32(in);
    if (version != kVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    const int vocab = static_cast<int>(read_u32(in));
    const int emb = static_cast<int>(read_u32(in));
    const int hidden = static_cast<int>(read_u32(in));
    const int n_layers = static_cast<int>(read_u32(in));

    LstmLmParams p;
    p.vocab_size = vocab;
    p.emb_size = emb;
    p.hidden_size = hidden;
    p.tied = false;
    p.embedding = Tensor(vocab, emb);
    read_array(in, p.embedding);
    for (int l = 0; l < n_layers; ++l) {
        LstmLayerParams layer;
        layer.in_size = LstmLmParams::layer_in(l, emb, hidden);
        layer.hidden_size = l == n_layers - 1 ? emb : hidden;
        const int w = layer.hidden_size;
        layer.w_i = Tensor(layer.in_size, w);
        layer.w_f = Tensor(layer.in_size, w);
        layer.w_o = Tensor(layer.in_size, w);
        layer.w_c = Tensor(layer.in_size, w);
        layer.u_i = Tensor(w, w);
        layer.u_f = Tensor(w, w);
        layer.u_o = Tensor(w, w);
        layer.u_c = Tensor(w, w);
        layer.b_i = Tensor(1, w);
        layer.b_f = Tensor(1, w);
        layer.b_o = Tensor(1, w);
        layer.b_c = Tensor(1, w);
        for (Tensor* t : {&layer.w_i, &layer.w_f, &layer.w_o, &layer.w_c, &layer.u_i,
                          &layer.u_f, &layer.u_o, &layer.u_c, &layer.b_i, &layer.b_f,
                          &layer.b_o, &layer.b_c})
            read_array(in, *t);
        p.layers.push_back(std::move(layer));
    }
    p.decoder_w = Tensor(emb, vocab);
    read_array(in, p.decoder_w);
    p.decoder_b = Tensor(1, vocab);
    read_array(in, p.decoder_b);
    if (!in) throw IoError("truncated checkpoint " + path);
    return p;
}

}  // namespace lmforge
