#include "almt/layers.hpp"

#include <array>
#include <cmath>

namespace almt {

template <typename T>
LinearLayerT<T> LinearLayerT<T>::init(int in, int out, Rng& rng, T stddev) {
    LinearLayerT<T> l;
    l.weight = TensorT<T>::randn({in, out}, rng, stddev);
    l.bias = TensorT<T>::zeros({out});
    return l;
}

template <typename T>
TensorT<T> LinearLayerT<T>::forward(TapeT<T>& tape, const TensorT<T>& x) const {
    if (x.cols() != weight.rows())
        throw DimensionError("linear: input " + x.shape().str() + " does not match weight " +
                             weight.shape().str());
    return add_row_broadcast(tape, matmul(tape, x, weight), bias);
}

void AttentionConfig::validate() const {
    if (heads < 1 || d_k < 1 || model_dim < 1)
        throw ValidationError("attention config: heads, d_k and model_dim must be positive");
    if (heads * d_k != model_dim)
        throw ValidationError("attention config: heads * d_k must equal model_dim (" +
                              std::to_string(heads) + " * " + std::to_string(d_k) +
                              " != " + std::to_string(model_dim));
}

template <typename T>
MultiHeadAttentionT<T> MultiHeadAttentionT<T>::init(const AttentionConfig& cfg, Rng& rng) {
    cfg.validate();
    MultiHeadAttentionT<T> m;
    m.cfg = cfg;
    for (int h = 0; h < cfg.heads; ++h) {
        m.w_q.push_back(TensorT<T>::randn({cfg.model_dim, cfg.d_k}, rng, T{0.02}));
        m.w_k.push_back(TensorT<T>::randn({cfg.model_dim, cfg.d_k}, rng, T{0.02}));
        m.w_v.push_back(TensorT<T>::randn({cfg.model_dim, cfg.d_k}, rng, T{0.02}));
        m.b_q.push_back(TensorT<T>::zeros({cfg.d_k}));
        m.b_k.push_back(TensorT<T>::zeros({cfg.d_k}));
        m.b_v.push_back(TensorT<T>::zeros({cfg.d_k}));
    }
    m.out_proj = LinearLayerT<T>::init(cfg.model_dim, cfg.model_dim, rng);
    return m;
}

template <typename T>
TensorT<T> MultiHeadAttentionT<T>::forward(TapeT<T>& tape, const TensorT<T>& q_in,
                                           const TensorT<T>& k_in, const TensorT<T>& v_in,
                                           std::vector<TensorT<T>>* head_weights) const {
    if (q_in.cols() != cfg.model_dim || k_in.cols() != cfg.model_dim || v_in.cols() != cfg.model_dim)
        throw DimensionError("attention: inputs must have model_dim columns, got q " +
                             q_in.shape().str() + ", k " + k_in.shape().str() + ", v " +
                             v_in.shape().str());
    if (k_in.rows() != v_in.rows())
        throw DimensionError("attention: key/value row counts differ, " + k_in.shape().str() +
                             " vs " + v_in.shape().str());
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(cfg.d_k));
    std::vector<TensorT<T>> head_outs;
    head_outs.reserve(static_cast<std::size_t>(cfg.heads));
    for (int h = 0; h < cfg.heads; ++h) {
        const auto hi = static_cast<std::size_t>(h);
        TensorT<T> q = add_row_broadcast(tape, matmul(tape, q_in, w_q[hi]), b_q[hi]);
        TensorT<T> k = add_row_broadcast(tape, matmul(tape, k_in, w_k[hi]), b_k[hi]);
        TensorT<T> v = add_row_broadcast(tape, matmul(tape, v_in, w_v[hi]), b_v[hi]);
        TensorT<T> weights = softmax_rows(tape, scale(tape, matmul_nt(tape, q, k), inv_sqrt_dk));
        if (head_weights != nullptr) head_weights->push_back(weights);
        head_outs.push_back(matmul(tape, weights, v));
    }
    TensorT<T> merged = concat_cols<T>(tape, head_outs);
    return out_proj.forward(tape, merged);
}

template <typename T>
TensorT<T> head_average(const std::vector<TensorT<T>>& maps) {
    TensorT<T> avg = TensorT<T>::zeros(maps.at(0).shape());
    const double inv = 1.0 / static_cast<double>(maps.size());
    for (const auto& m : maps)
        for (std::int64_t i = 0; i < m.numel(); ++i)
            avg.data()[i] = static_cast<T>(static_cast<double>(avg.data()[i]) +
                                           static_cast<double>(m.data()[i]) * inv);
    return avg;
}

template <typename T>
EncoderLayerT<T> EncoderLayerT<T>::init(const AttentionConfig& cfg, int ffn_ratio, Rng& rng) {
    if (ffn_ratio < 1) throw ValidationError("encoder layer: ffn_ratio must be >= 1");
    EncoderLayerT<T> e;
    e.ln1_gamma = TensorT<T>::full({cfg.model_dim}, T{1});
    e.ln1_beta = TensorT<T>::zeros({cfg.model_dim});
    e.ln2_gamma = TensorT<T>::full({cfg.model_dim}, T{1});
    e.ln2_beta = TensorT<T>::zeros({cfg.model_dim});
    e.attn = MultiHeadAttentionT<T>::init(cfg, rng);
    e.ffn1 = LinearLayerT<T>::init(cfg.model_dim, cfg.model_dim * ffn_ratio, rng);
    e.ffn2 = LinearLayerT<T>::init(cfg.model_dim * ffn_ratio, cfg.model_dim, rng);
    return e;
}

template <typename T>
TensorT<T> EncoderLayerT<T>::forward(TapeT<T>& tape, const TensorT<T>& x,
                                     std::vector<TensorT<T>>* head_weights,
                                     const DropoutCtx* drop) const {
    return forward_cross(tape, x, x, head_weights, drop);
}

template <typename T>
TensorT<T> EncoderLayerT<T>::forward_cross(TapeT<T>& tape, const TensorT<T>& q_seq,
                                           const TensorT<T>& kv_seq,
                                           std::vector<TensorT<T>>* head_weights,
                                           const DropoutCtx* drop) const {
    const bool dropping = drop != nullptr && drop->rate > 0.0 && drop->rng != nullptr;
    TensorT<T> qn = layer_norm_rows(tape, q_seq, ln1_gamma, ln1_beta);
    // self-attention degenerates to the same normalized tensor
    TensorT<T> kn = kv_seq.id() == q_seq.id() ? qn
                                              : layer_norm_rows(tape, kv_seq, ln1_gamma, ln1_beta);
    TensorT<T> att = attn.forward(tape, qn, kn, kn, head_weights);
    if (dropping) att = dropout(tape, att, drop->rate, *drop->rng);
    TensorT<T> h = add(tape, q_seq, att);
    TensorT<T> ff = ffn2.forward(tape, gelu(tape, ffn1.forward(tape, layer_norm_rows(tape, h, ln2_gamma, ln2_beta))));
    if (dropping) ff = dropout(tape, ff, drop->rate, *drop->rng);
    return add(tape, h, ff);
}

#define ALMT_INSTANTIATE_LAYERS(T)                                                                 \
    template struct LinearLayerT<T>;                                                               \
    template struct MultiHeadAttentionT<T>;                                                        \
    template struct EncoderLayerT<T>;                                                              \
    template TensorT<T> head_average<T>(const std::vector<TensorT<T>>&);

ALMT_INSTANTIATE_LAYERS(float)
ALMT_INSTANTIATE_LAYERS(double)
ALMT_INSTANTIATE_LAYERS(long double)

#undef ALMT_INSTANTIATE_LAYERS

} // namespace almt
