#include "almt/model.hpp"

#include <algorithm>
#include <cmath>

namespace almt {

const char* modality_name(Modality m) {
    switch (m) {
        case Modality::language: return "language";
        case Modality::visual: return "visual";
        default: return "audio";
    }
}

const char* fusion_mode_name(FusionMode m) {
    switch (m) {
        case FusionMode::cross_transformer: return "cross_transformer";
        case FusionMode::concatenation: return "concatenation";
        default: return "addition";
    }
}

FusionMode fusion_mode_from_name(const std::string& name) {
    if (name == "cross_transformer") return FusionMode::cross_transformer;
    if (name == "concatenation") return FusionMode::concatenation;
    if (name == "addition") return FusionMode::addition;
    throw ValidationError("unknown fusion_mode '" + name +
                          "' (valid: cross_transformer, concatenation, addition)");
}

void ModelConfig::validate() const {
    std::string problems;
    auto fail = [&problems](const std::string& p) { problems += (problems.empty() ? "" : "; ") + p; };

    if (token_len < 1) fail("token_len must be >= 1");
    if (model_dim < 1) fail("model_dim must be >= 1");
    if (heads < 1 || d_k < 1) fail("heads and d_k must be >= 1");
    if (heads * d_k != model_dim)
        fail("heads * d_k must equal model_dim (" + std::to_string(heads) + " * " +
             std::to_string(d_k) + " != " + std::to_string(model_dim) + ")");
    if (embed_depth < 1) fail("embed_depth must be >= 1");
    if (ahl_depth < 1) fail("ahl_depth must be >= 1");
    if (fusion_depth < 1) fail("fusion_depth must be >= 1");
    if (ffn_ratio < 1) fail("ffn_ratio must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) fail("dropout must be in [0, 1)");
    for (Modality m : {Modality::language, Modality::visual, Modality::audio}) {
        if (input_dims.get(m) < 1)
            fail(std::string("input_dims.") + modality_name(m) + " must be >= 1");
        if (input_lens.get(m) < 1)
            fail(std::string("input_lens.") + modality_name(m) + " must be >= 1");
    }

    const AblationFlags& ab = ablation;
    std::vector<int> scales = ab.guidance_scales;
    std::sort(scales.begin(), scales.end());
    if (std::adjacent_find(scales.begin(), scales.end()) != scales.end())
        fail("guidance_scales contains duplicates");
    for (int s : scales)
        if (s < 1 || s > ahl_depth)
            fail("guidance scale " + std::to_string(s) + " outside [1, ahl_depth=" +
                 std::to_string(ahl_depth) + "]");
    if (scales.empty() && !ab.disable_ahl)
        fail("guidance_scales must be non-empty unless disable_ahl is set");
    if (ab.qkv_swap && ab.fusion_mode != FusionMode::cross_transformer)
        fail(std::string("qkv_swap requires fusion_mode=cross_transformer, got ") +
             fusion_mode_name(ab.fusion_mode));

    if (!problems.empty()) throw ValidationError("invalid model config: " + problems);
}

ModelConfig ModelConfig::mosi() {
    ModelConfig c;
    c.fusion_depth = 2;
    c.input_dims = {768, 20, 5};
    c.input_lens = {50, 50, 50};
    return c;
}

ModelConfig ModelConfig::mosei() {
    ModelConfig c;
    c.fusion_depth = 4;
    c.input_dims = {768, 35, 74};
    c.input_lens = {50, 50, 50};
    return c;
}

ModelConfig ModelConfig::sims() {
    ModelConfig c;
    c.fusion_depth = 4;
    c.input_dims = {768, 709, 33};
    c.input_lens = {39, 55, 400};
    return c;
}

ModelConfig apply_ablation(const ModelConfig& base, const AblationFlags& flags) {
    ModelConfig out = base;
    out.ablation = flags;
    out.validate();
    return out;
}

template <typename T>
AhlLayerT<T> AhlLayerT<T>::init(const AttentionConfig& cfg, Rng& rng) {
    cfg.validate();
    AhlLayerT<T> l;
    l.cfg = cfg;
    for (int h = 0; h < cfg.heads; ++h) {
        l.w_q.push_back(TensorT<T>::randn({cfg.model_dim, cfg.d_k}, rng, T{0.02}));
        l.w_k_audio.push_back(TensorT<T>::randn({cfg.model_dim, cfg.d_k}, rng, T{0.02}));
        l.w_k_visual.push_back(TensorT<T>::randn({cfg.model_dim, cfg.d_k}, rng, T{0.02}));
        l.w_v_audio.push_back(TensorT<T>::randn({cfg.model_dim, cfg.d_k}, rng, T{0.02}));
        l.w_v_visual.push_back(TensorT<T>::randn({cfg.model_dim, cfg.d_k}, rng, T{0.02}));
    }
    return l;
}

template <typename T>
TensorT<T> AhlLayerT<T>::forward(TapeT<T>& tape, const TensorT<T>& h_prev, const TensorT<T>& h_lang,
                                 const TensorT<T>& h_audio, const TensorT<T>& h_visual,
                                 TensorT<T>* alpha_avg, TensorT<T>* beta_avg) const {
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(cfg.d_k));
    std::vector<TensorT<T>> audio_outs, visual_outs, alphas, betas;
    for (int h = 0; h < cfg.heads; ++h) {
        const auto hi = static_cast<std::size_t>(h);
        TensorT<T> q = matmul(tape, h_lang, w_q[hi]);
        TensorT<T> alpha =
            softmax_rows(tape, scale(tape, matmul_nt(tape, q, matmul(tape, h_audio, w_k_audio[hi])),
                                     inv_sqrt_dk));
        TensorT<T> beta =
            softmax_rows(tape, scale(tape, matmul_nt(tape, q, matmul(tape, h_visual, w_k_visual[hi])),
                                     inv_sqrt_dk));
        audio_outs.push_back(matmul(tape, alpha, matmul(tape, h_audio, w_v_audio[hi])));
        visual_outs.push_back(matmul(tape, beta, matmul(tape, h_visual, w_v_visual[hi])));
        alphas.push_back(alpha);
        betas.push_back(beta);
    }
    TensorT<T> update =
        add(tape, concat_cols<T>(tape, audio_outs), concat_cols<T>(tape, visual_outs));
    if (alpha_avg != nullptr) *alpha_avg = head_average(alphas);
    if (beta_avg != nullptr) *beta_avg = head_average(betas);
    return add(tape, h_prev, update);
}

template <typename T>
ResidualMlpT<T> ResidualMlpT<T>::init(int dim, Rng& rng) {
    ResidualMlpT<T> m;
    m.lin1 = LinearLayerT<T>::init(dim, dim, rng);
    m.lin2 = LinearLayerT<T>::init(dim, dim, rng);
    return m;
}

template <typename T>
TensorT<T> ResidualMlpT<T>::forward(TapeT<T>& tape, const TensorT<T>& x) const {
    return add(tape, x, lin2.forward(tape, gelu(tape, lin1.forward(tape, x))));
}

template <typename T>
void ALMTModelT<T>::register_param(const std::string& name, TensorT<T>& t) {
    t.set_requires_grad(true);
    t.set_name(name);
    params_.push_back({name, t});
}

template <typename T>
void ALMTModelT<T>::register_linear(const std::string& name, LinearLayerT<T>& l) {
    register_param(name + ".weight", l.weight);
    register_param(name + ".bias", l.bias);
}

template <typename T>
void ALMTModelT<T>::register_encoder_layer(const std::string& name, EncoderLayerT<T>& e) {
    register_param(name + ".ln1.gamma", e.ln1_gamma);
    register_param(name + ".ln1.beta", e.ln1_beta);
    register_param(name + ".ln2.gamma", e.ln2_gamma);
    register_param(name + ".ln2.beta", e.ln2_beta);
    for (int h = 0; h < e.attn.cfg.heads; ++h) {
        const auto hi = static_cast<std::size_t>(h);
        const std::string hn = name + ".attn.h" + std::to_string(h);
        register_param(hn + ".w_q", e.attn.w_q[hi]);
        register_param(hn + ".b_q", e.attn.b_q[hi]);
        register_param(hn + ".w_k", e.attn.w_k[hi]);
        register_param(hn + ".b_k", e.attn.b_k[hi]);
        register_param(hn + ".w_v", e.attn.w_v[hi]);
        register_param(hn + ".b_v", e.attn.b_v[hi]);
    }
    register_linear(name + ".attn.out", e.attn.out_proj);
    register_linear(name + ".ffn1", e.ffn1);
    register_linear(name + ".ffn2", e.ffn2);
}

template <typename T>
ALMTModelT<T>::ALMTModelT(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed);
    const int T_len = config_.token_len;
    const int d = config_.model_dim;
    const AttentionConfig acfg{config_.heads, config_.d_k, d};

    auto build_embed = [&](Modality m, ModalityEmbed& e) {
        const int dm = config_.input_dims.get(m);
        const int tm = config_.input_lens.get(m);
        const std::string base = std::string("embed.") + modality_name(m);
        e.token = TensorT<T>::randn({T_len, dm}, rng, T{0.02});
        register_param(base + ".token", e.token);
        e.proj = LinearLayerT<T>::init(dm, d, rng);
        register_linear(base + ".proj", e.proj);
        e.pos = TensorT<T>::randn({T_len + tm, d}, rng, T{0.02});
        register_param(base + ".pos", e.pos);
        for (int i = 0; i < config_.embed_depth; ++i) {
            e.layers.push_back(EncoderLayerT<T>::init(acfg, config_.ffn_ratio, rng));
            register_encoder_layer(base + ".layer" + std::to_string(i), e.layers.back());
        }
    };
    build_embed(Modality::language, embed_language_);
    build_embed(Modality::visual, embed_visual_);
    build_embed(Modality::audio, embed_audio_);

    for (int j = 2; j <= config_.ahl_depth; ++j) {
        lang_scale_layers_.push_back(EncoderLayerT<T>::init(acfg, config_.ffn_ratio, rng));
        register_encoder_layer("lang_scale." + std::to_string(j), lang_scale_layers_.back());
    }

    const AblationFlags& ab = config_.ablation;
    if (!ab.disable_ahl) {
        hyper_init_ = TensorT<T>::randn({T_len, d}, rng, T{0.02});
        register_param("hyper_init", hyper_init_);
        ahl_.resize(static_cast<std::size_t>(config_.ahl_depth));
        mlp_.resize(static_cast<std::size_t>(config_.ahl_depth));
        for (int j = 1; j <= config_.ahl_depth; ++j) {
            const auto ji = static_cast<std::size_t>(j - 1);
            const bool guided = std::find(ab.guidance_scales.begin(), ab.guidance_scales.end(), j) !=
                                ab.guidance_scales.end();
            if (guided) {
                ahl_[ji] = AhlLayerT<T>::init(acfg, rng);
                const std::string base = "ahl." + std::to_string(j);
                for (int h = 0; h < config_.heads; ++h) {
                    const auto hi = static_cast<std::size_t>(h);
                    const std::string hn = base + ".h" + std::to_string(h);
                    register_param(hn + ".w_q", ahl_[ji]->w_q[hi]);
                    register_param(hn + ".w_k_audio", ahl_[ji]->w_k_audio[hi]);
                    register_param(hn + ".w_k_visual", ahl_[ji]->w_k_visual[hi]);
                    register_param(hn + ".w_v_audio", ahl_[ji]->w_v_audio[hi]);
                    register_param(hn + ".w_v_visual", ahl_[ji]->w_v_visual[hi]);
                }
            } else {
                mlp_[ji] = ResidualMlpT<T>::init(d, rng);
                const std::string base = "hyper_mlp." + std::to_string(j);
                register_linear(base + ".lin1", mlp_[ji]->lin1);
                register_linear(base + ".lin2", mlp_[ji]->lin2);
            }
        }
    } else {
        no_ahl_proj_ = LinearLayerT<T>::init(2 * d, d, rng);
        register_linear("no_ahl_proj", no_ahl_proj_);
    }

    switch (ab.fusion_mode) {
        case FusionMode::cross_transformer:
            fusion_token_ = TensorT<T>::randn({1, d}, rng, T{0.02});
            register_param("fusion.token", fusion_token_);
            for (int i = 0; i < config_.fusion_depth; ++i) {
                fusion_layers_.push_back(EncoderLayerT<T>::init(acfg, config_.ffn_ratio, rng));
                register_encoder_layer("fusion.layer" + std::to_string(i), fusion_layers_.back());
            }
            break;
        case FusionMode::concatenation:
            fusion_concat_proj_ = LinearLayerT<T>::init(2 * d, d, rng);
            register_linear("fusion.concat_proj", fusion_concat_proj_);
            break;
        case FusionMode::addition:
            break;
    }

    head_ln_gamma_ = TensorT<T>::full({d}, T{1});
    register_param("head.ln.gamma", head_ln_gamma_);
    head_ln_beta_ = TensorT<T>::zeros({d});
    register_param("head.ln.beta", head_ln_beta_);
    head_linear_ = LinearLayerT<T>::init(d, 1, rng);
    register_linear("head.linear", head_linear_);
}

template <typename T>
typename ALMTModelT<T>::ModalityEmbed& ALMTModelT<T>::embed(Modality m) {
    switch (m) {
        case Modality::language: return embed_language_;
        case Modality::visual: return embed_visual_;
        default: return embed_audio_;
    }
}

template <typename T>
const typename ALMTModelT<T>::ModalityEmbed& ALMTModelT<T>::embed(Modality m) const {
    switch (m) {
        case Modality::language: return embed_language_;
        case Modality::visual: return embed_visual_;
        default: return embed_audio_;
    }
}

template <typename T>
TensorT<T> ALMTModelT<T>::embed_modality(TapeT<T>& tape, Modality m, const TensorT<T>& features) const {
    const ModalityEmbed& e = embed(m);
    const int dm = config_.input_dims.get(m);
    const int tm = config_.input_lens.get(m);
    if (features.rank() != 2 || features.rows() != tm || features.cols() != dm)
        throw ValidationError(std::string("embed_modality(") + modality_name(m) +
                              "): features must be [" + std::to_string(tm) + "x" +
                              std::to_string(dm) + "], got " + features.shape().str());
    const std::array<TensorT<T>, 2> parts{e.token, features};
    TensorT<T> x = e.proj.forward(tape, concat_rows<T>(tape, parts));
    x = add(tape, x, e.pos);
    for (const auto& layer : e.layers) x = layer.forward(tape, x);
    return slice_rows(tape, x, 0, config_.token_len);
}

template <typename T>
std::vector<TensorT<T>> ALMTModelT<T>::build_language_scales(TapeT<T>& tape,
                                                             const TensorT<T>& h1_l) const {
    std::vector<TensorT<T>> scales{h1_l};
    for (const auto& layer : lang_scale_layers_) scales.push_back(layer.forward(tape, scales.back()));
    return scales;
}

template <typename T>
TensorT<T> ALMTModelT<T>::ahl_forward(TapeT<T>& tape, int layer, const TensorT<T>& h_prev,
                                      const TensorT<T>& h_lang, const TensorT<T>& h_audio,
                                      const TensorT<T>& h_visual, TensorT<T>* alpha,
                                      TensorT<T>* beta) const {
    if (layer < 1 || layer > config_.ahl_depth)
        throw ValidationError("ahl_forward: layer " + std::to_string(layer) + " outside [1, " +
                              std::to_string(config_.ahl_depth) + "]");
    const auto& slot = ahl_.at(static_cast<std::size_t>(layer - 1));
    if (!slot.has_value())
        throw ValidationError("ahl_forward: layer " + std::to_string(layer) +
                              " is not language-guided under the current ablation");
    return slot->forward(tape, h_prev, h_lang, h_audio, h_visual, alpha, beta);
}

template <typename T>
TensorT<T> ALMTModelT<T>::hyper_stack_forward(TapeT<T>& tape, const std::vector<TensorT<T>>& scales,
                                              const TensorT<T>& h_audio, const TensorT<T>& h_visual,
                                              AttentionTraceT<T>* trace) const {
    if (config_.ablation.disable_ahl)
        throw ValidationError("hyper_stack_forward: AHL is disabled by ablation");
    if (static_cast<int>(scales.size()) != config_.ahl_depth)
        throw ValidationError("hyper_stack_forward: expected " + std::to_string(config_.ahl_depth) +
                              " language scales, got " + std::to_string(scales.size()));
    TensorT<T> h = hyper_init_;
    for (int j = 1; j <= config_.ahl_depth; ++j) {
        const auto ji = static_cast<std::size_t>(j - 1);
        if (ahl_[ji].has_value()) {
            TensorT<T> alpha, beta;
            h = ahl_[ji]->forward(tape, h, scales[ji], h_audio, h_visual, &alpha, &beta);
            if (trace != nullptr) {
                trace->alphas.push_back(alpha);
                trace->betas.push_back(beta);
                trace->ahl_layer_index.push_back(j);
            }
        } else {
            h = mlp_[ji]->forward(tape, h);
        }
    }
    return h;
}

template <typename T>
TensorT<T> ALMTModelT<T>::fuse_forward(TapeT<T>& tape, const TensorT<T>& h_lang,
                                       const TensorT<T>& h_hyper, AttentionTraceT<T>* trace) const {
    switch (config_.ablation.fusion_mode) {
        case FusionMode::addition:
            return mean_rows(tape, add(tape, h_lang, h_hyper));
        case FusionMode::concatenation: {
            const std::array<TensorT<T>, 2> parts{mean_rows(tape, h_lang), mean_rows(tape, h_hyper)};
            return fusion_concat_proj_.forward(tape, concat_cols<T>(tape, parts));
        }
        case FusionMode::cross_transformer:
        default: {
            const std::array<TensorT<T>, 2> lp{fusion_token_, h_lang};
            const std::array<TensorT<T>, 2> hp{fusion_token_, h_hyper};
            TensorT<T> lang_seq = concat_rows<T>(tape, lp);
            TensorT<T> hyper_seq = concat_rows<T>(tape, hp);
            TensorT<T> q = config_.ablation.qkv_swap ? hyper_seq : lang_seq;
            const TensorT<T>& kv = config_.ablation.qkv_swap ? lang_seq : hyper_seq;
            for (const auto& layer : fusion_layers_) {
                std::vector<TensorT<T>> heads;
                q = layer.forward_cross(tape, q, kv, trace != nullptr ? &heads : nullptr);
                if (trace != nullptr) trace->fusion_maps.push_back(head_average(heads));
            }
            return slice_rows(tape, q, 0, 1);
        }
    }
}

template <typename T>
TensorT<T> ALMTModelT<T>::predict_head(TapeT<T>& tape, const TensorT<T>& fused) const {
    if (fused.rank() != 2 || fused.rows() != 1 || fused.cols() != config_.model_dim)
        throw DimensionError("predict_head: expected [1x" + std::to_string(config_.model_dim) +
                             "], got " + fused.shape().str());
    return head_linear_.forward(tape, layer_norm_rows(tape, fused, head_ln_gamma_, head_ln_beta_));
}

template <typename T>
TensorT<T> ALMTModelT<T>::forward(TapeT<T>& tape, const Input& input, AttentionTraceT<T>* trace,
                                  const EmbedNoiseT<T>* embed_noise) const {
    const AblationFlags& ab = config_.ablation;
    const int T_len = config_.token_len;
    const int d = config_.model_dim;

    auto embedded = [&](Modality m, const TensorT<T>& raw, bool dropped) {
        TensorT<T> h = dropped ? TensorT<T>::zeros({T_len, d}) : embed_modality(tape, m, raw);
        if (embed_noise != nullptr && embed_noise->modality == m) {
            if (embed_noise->row < 0 || embed_noise->row >= T_len ||
                static_cast<int>(embed_noise->delta.size()) != d)
                throw ValidationError("embed noise: row or delta length out of range");
            TensorT<T> delta = TensorT<T>::zeros({T_len, d});
            for (int j = 0; j < d; ++j)
                delta.at(embed_noise->row, j) = embed_noise->delta[static_cast<std::size_t>(j)];
            h = add(tape, h, delta);
        }
        return h;
    };

    TensorT<T> h1_l = embedded(Modality::language, input.language, false);
    TensorT<T> h1_v = embedded(Modality::visual, input.visual, ab.drop_video);
    TensorT<T> h1_a = embedded(Modality::audio, input.audio, ab.drop_audio);

    std::vector<TensorT<T>> scales = build_language_scales(tape, h1_l);

    TensorT<T> h_hyper;
    if (ab.disable_ahl) {
        const std::array<TensorT<T>, 2> parts{h1_a, h1_v};
        h_hyper = no_ahl_proj_.forward(tape, concat_cols<T>(tape, parts));
    } else {
        h_hyper = hyper_stack_forward(tape, scales, h1_a, h1_v, trace);
    }

    TensorT<T> fused = fuse_forward(tape, scales.back(), h_hyper, trace);
    return predict_head(tape, fused);
}

template <typename T>
std::int64_t ALMTModelT<T>::count_parameters() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
}

template <typename T>
void ALMTModelT<T>::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

template <typename T>
TensorT<T> mse_loss(TapeT<T>& tape, const std::vector<TensorT<T>>& preds,
                    const std::vector<double>& labels) {
    if (preds.empty()) throw ValidationError("mse_loss: empty batch");
    if (preds.size() != labels.size())
        throw ValidationError("mse_loss: " + std::to_string(preds.size()) + " predictions vs " +
                              std::to_string(labels.size()) + " labels");
    TensorT<T> total;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        TensorT<T> diff = sub(tape, preds[i], TensorT<T>::scalar(static_cast<T>(labels[i])));
        TensorT<T> sq = mul(tape, diff, diff);
        total = i == 0 ? sq : add(tape, total, sq);
    }
    return scale(tape, total, 1.0 / static_cast<double>(preds.size()));
}

#define ALMT_INSTANTIATE_MODEL(T)                                                                  \
    template struct AhlLayerT<T>;                                                                  \
    template struct ResidualMlpT<T>;                                                               \
    template class ALMTModelT<T>;                                                                  \
    template TensorT<T> mse_loss<T>(TapeT<T>&, const std::vector<TensorT<T>>&,                     \
                                    const std::vector<double>&);

ALMT_INSTANTIATE_MODEL(float)
ALMT_INSTANTIATE_MODEL(double)

#undef ALMT_INSTANTIATE_MODEL

} // namespace almt
