#pragma once

#include <optional>
#include <string>
#include <vector>

#include "almt/layers.hpp"

namespace almt {

enum class Modality { language, visual, audio };

const char* modality_name(Modality m);

enum class FusionMode { cross_transformer, concatenation, addition };

const char* fusion_mode_name(FusionMode m);
FusionMode fusion_mode_from_name(const std::string& name);

struct AblationFlags {
    bool drop_audio = false;
    bool drop_video = false;
    bool disable_ahl = false; // replace the hyper stream with projected [H1_a | H1_v]
    FusionMode fusion_mode = FusionMode::cross_transformer;
    bool qkv_swap = false;    // hyper stream becomes the fusion query
    std::vector<int> guidance_scales = {1, 2, 3};

    bool operator==(const AblationFlags&) const = default;
};

struct ModelConfig {
    int token_len = 8;  // T
    int model_dim = 128; // d
    int heads = 8;
    int d_k = 16;
    int embed_depth = 1;
    int ahl_depth = 3;
    int fusion_depth = 2;
    int ffn_ratio = 4;
    double dropout = 0.0;

    struct PerModality {
        int language = 0;
        int visual = 0;
        int audio = 0;
        int get(Modality m) const {
            switch (m) {
                case Modality::language: return language;
                case Modality::visual: return visual;
                default: return audio;
            }
        }
        bool operator==(const PerModality&) const = default;
    };
    PerModality input_dims{768, 20, 5};  // d_m
    PerModality input_lens{50, 50, 50};  // T_m

    AblationFlags ablation;

    void validate() const; // throws ValidationError listing every problem found

    bool operator==(const ModelConfig&) const = default;

    static ModelConfig mosi();
    static ModelConfig mosei();
    static ModelConfig sims();
};

// Returns a config realizing the given ablation; pure, validates consistency.
ModelConfig apply_ablation(const ModelConfig& base, const AblationFlags& flags);

// Diagnostics captured during one forward pass: head-averaged similarity
// matrices per guided AHL layer and per fusion cross-attention layer.
template <typename T>
struct AttentionTraceT {
    std::vector<TensorT<T>> alphas;      // language -> audio, [T x T]
    std::vector<TensorT<T>> betas;       // language -> visual, [T x T]
    std::vector<int> ahl_layer_index;    // 1-based slot each alpha/beta pair came from
    std::vector<TensorT<T>> fusion_maps; // [(T+1) x (T+1)] per fusion layer
};

using AttentionTrace = AttentionTraceT<float>;

template <typename T>
struct NamedParam {
    std::string name;
    TensorT<T> tensor;
};

// Additive perturbation of one embedded feature row, for the attention
// robustness probe.
template <typename T>
struct EmbedNoiseT {
    Modality modality = Modality::visual;
    int row = 0;
    std::vector<T> delta; // length model_dim
};

// AHL layer: per-head similarity of language queries against audio and
// visual keys, hyper stream updated by the attention-weighted values. No
// biases and no output projection; heads are concatenated column-wise.
template <typename T>
struct AhlLayerT {
    AttentionConfig cfg;
    std::vector<TensorT<T>> w_q;        // language queries, [d x d_k] per head
    std::vector<TensorT<T>> w_k_audio;
    std::vector<TensorT<T>> w_k_visual;
    std::vector<TensorT<T>> w_v_audio;
    std::vector<TensorT<T>> w_v_visual;

    static AhlLayerT init(const AttentionConfig& cfg, Rng& rng);

    TensorT<T> forward(TapeT<T>& tape, const TensorT<T>& h_prev, const TensorT<T>& h_lang,
                       const TensorT<T>& h_audio, const TensorT<T>& h_visual,
                       TensorT<T>* alpha_avg = nullptr, TensorT<T>* beta_avg = nullptr) const;
};

// Residual per-row feed-forward map standing in for an unguided AHL slot.
template <typename T>
struct ResidualMlpT {
    LinearLayerT<T> lin1, lin2;

    static ResidualMlpT init(int dim, Rng& rng);
    TensorT<T> forward(TapeT<T>& tape, const TensorT<T>& x) const;
};

template <typename T>
class ALMTModelT {
public:
    ALMTModelT(const ModelConfig& config, std::uint64_t seed);

    struct Input {
        TensorT<T> language; // [T_l x d_l]
        TensorT<T> visual;   // [T_v x d_v]
        TensorT<T> audio;    // [T_a x d_a]
    };

    // Full pipeline for one sample; returns the scalar prediction.
    TensorT<T> forward(TapeT<T>& tape, const Input& input, AttentionTraceT<T>* trace = nullptr,
                       const EmbedNoiseT<T>* embed_noise = nullptr) const;

    // Pipeline stages, exposed individually.
    TensorT<T> embed_modality(TapeT<T>& tape, Modality m, const TensorT<T>& features) const;
    std::vector<TensorT<T>> build_language_scales(TapeT<T>& tape, const TensorT<T>& h1_l) const;
    TensorT<T> ahl_forward(TapeT<T>& tape, int layer, const TensorT<T>& h_prev,
                           const TensorT<T>& h_lang, const TensorT<T>& h_audio,
                           const TensorT<T>& h_visual, TensorT<T>* alpha = nullptr,
                           TensorT<T>* beta = nullptr) const;
    TensorT<T> hyper_stack_forward(TapeT<T>& tape, const std::vector<TensorT<T>>& scales,
                                   const TensorT<T>& h_audio, const TensorT<T>& h_visual,
                                   AttentionTraceT<T>* trace = nullptr) const;
    TensorT<T> fuse_forward(TapeT<T>& tape, const TensorT<T>& h_lang, const TensorT<T>& h_hyper,
                            AttentionTraceT<T>* trace = nullptr) const;
    TensorT<T> predict_head(TapeT<T>& tape, const TensorT<T>& fused) const;

    const ModelConfig& config() const { return config_; }
    const std::vector<NamedParam<T>>& parameters() const { return params_; }
    std::vector<NamedParam<T>>& parameters() { return params_; }
    std::int64_t count_parameters() const;
    void zero_grad();

    // Direct access for tests that zero specific projections.
    struct ModalityEmbed {
        TensorT<T> token;     // [T x d_m]
        LinearLayerT<T> proj; // [d_m x d]
        TensorT<T> pos;       // [(T + T_m) x d]
        std::vector<EncoderLayerT<T>> layers;
    };
    ModalityEmbed& embed(Modality m);
    const ModalityEmbed& embed(Modality m) const;
    std::vector<EncoderLayerT<T>>& language_scale_layers() { return lang_scale_layers_; }
    std::vector<std::optional<AhlLayerT<T>>>& ahl_layers() { return ahl_; }
    std::vector<EncoderLayerT<T>>& fusion_layers() { return fusion_layers_; }
    TensorT<T>& hyper_init() { return hyper_init_; }
    TensorT<T>& fusion_token() { return fusion_token_; }
    LinearLayerT<T>& head_linear() { return head_linear_; }

private:
    void register_param(const std::string& name, TensorT<T>& t);
    void register_linear(const std::string& name, LinearLayerT<T>& l);
    void register_encoder_layer(const std::string& name, EncoderLayerT<T>& e);

    ModelConfig config_;
    ModalityEmbed embed_language_, embed_visual_, embed_audio_;
    std::vector<EncoderLayerT<T>> lang_scale_layers_; // scales 2..ahl_depth
    TensorT<T> hyper_init_;                           // [T x d], absent when disable_ahl
    std::vector<std::optional<AhlLayerT<T>>> ahl_;    // one slot per AHL depth
    std::vector<std::optional<ResidualMlpT<T>>> mlp_; // fills unguided slots
    LinearLayerT<T> no_ahl_proj_;                         // [2d x d], only when disable_ahl
    TensorT<T> fusion_token_;                             // [1 x d], cross mode
    std::vector<EncoderLayerT<T>> fusion_layers_;         // cross mode
    LinearLayerT<T> fusion_concat_proj_;                  // [2d x d], concatenation mode
    TensorT<T> head_ln_gamma_, head_ln_beta_;
    LinearLayerT<T> head_linear_; // [d x 1]
    std::vector<NamedParam<T>> params_;
};

using ALMTModel = ALMTModelT<float>;

// Batch objective: mean over the batch of squared prediction error.
template <typename T>
TensorT<T> mse_loss(TapeT<T>& tape, const std::vector<TensorT<T>>& preds,
                    const std::vector<double>& labels);

// Copies parameter values between models of different precision; the
// registries must match by name and shape.
template <typename Dst, typename Src>
void copy_parameters(ALMTModelT<Dst>& dst, const ALMTModelT<Src>& src) {
    auto& dp = dst.parameters();
    const auto& sp = src.parameters();
    if (dp.size() != sp.size())
        throw ValidationError("copy_parameters: registries differ in size");
    for (std::size_t i = 0; i < dp.size(); ++i) {
        if (dp[i].name != sp[i].name || dp[i].tensor.numel() != sp[i].tensor.numel())
            throw ValidationError("copy_parameters: registry mismatch at " + dp[i].name);
        for (std::int64_t j = 0; j < dp[i].tensor.numel(); ++j)
            dp[i].tensor.data()[j] = static_cast<Dst>(sp[i].tensor.data()[j]);
    }
}

} // namespace almt
