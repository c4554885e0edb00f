#pragma once

#include <vector>

#include "almt/ops.hpp"

namespace almt {

// Affine map x -> x * weight + bias.
template <typename T>
struct LinearLayerT {
    TensorT<T> weight; // [in x out]
    TensorT<T> bias;   // [out]

    static LinearLayerT init(int in, int out, Rng& rng, T stddev = T{0.02});

    int in_dim() const { return weight.rows(); }
    int out_dim() const { return weight.cols(); }

    TensorT<T> forward(TapeT<T>& tape, const TensorT<T>& x) const;
};

struct AttentionConfig {
    int heads = 8;
    int d_k = 16;
    int model_dim = 128;

    void validate() const;
};

// Optional training-time context threaded through layer forwards.
struct DropoutCtx {
    double rate = 0.0;
    Rng* rng = nullptr;
};

// Scaled dot-product attention with per-head projections [d x d_k] and a
// learned output projection back to model_dim. Returned weights are one
// [t_q x t_k] matrix per head.
template <typename T>
struct MultiHeadAttentionT {
    AttentionConfig cfg;
    std::vector<TensorT<T>> w_q, w_k, w_v; // per head, [d x d_k]
    std::vector<TensorT<T>> b_q, b_k, b_v; // per head, [d_k]
    LinearLayerT<T> out_proj;              // [d x d]

    static MultiHeadAttentionT init(const AttentionConfig& cfg, Rng& rng);

    TensorT<T> forward(TapeT<T>& tape, const TensorT<T>& q_in, const TensorT<T>& k_in,
                       const TensorT<T>& v_in, std::vector<TensorT<T>>* head_weights = nullptr) const;
};

// Head-averaged attention map, computed outside the tape (diagnostics only).
template <typename T>
TensorT<T> head_average(const std::vector<TensorT<T>>& maps);

// Pre-norm transformer encoder block: x + MHA(LN1(x)), then + FFN(LN2(.)).
// The cross variant reads keys/values from a second sequence passed through
// the same LN1, so forward(x) == forward_cross(x, x) by construction.
template <typename T>
struct EncoderLayerT {
    TensorT<T> ln1_gamma, ln1_beta;
    TensorT<T> ln2_gamma, ln2_beta;
    MultiHeadAttentionT<T> attn;
    LinearLayerT<T> ffn1; // [d x r*d]
    LinearLayerT<T> ffn2; // [r*d x d]

    static EncoderLayerT init(const AttentionConfig& cfg, int ffn_ratio, Rng& rng);

    TensorT<T> forward(TapeT<T>& tape, const TensorT<T>& x,
                       std::vector<TensorT<T>>* head_weights = nullptr,
                       const DropoutCtx* drop = nullptr) const;

    TensorT<T> forward_cross(TapeT<T>& tape, const TensorT<T>& q_seq, const TensorT<T>& kv_seq,
                             std::vector<TensorT<T>>* head_weights = nullptr,
                             const DropoutCtx* drop = nullptr) const;
};

using LinearLayer = LinearLayerT<float>;
using MultiHeadAttention = MultiHeadAttentionT<float>;
using EncoderLayer = EncoderLayerT<float>;

} // namespace almt
