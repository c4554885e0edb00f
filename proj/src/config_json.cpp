#include "almt/config_json.hpp"

namespace almt {

using nlohmann::json;

namespace {

template <typename T>
T get_or(const json& j, const char* key, const T& fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config key '") + key + "': " + e.what());
    }
}

} // namespace

void reject_unknown_keys(const json& j, const json& schema, const std::string& path) {
    if (!j.is_object()) return;
    for (const auto& [key, value] : j.items()) {
        const std::string where = path.empty() ? key : path + "." + key;
        if (!schema.contains(key))
            throw ValidationError("unknown config key '" + where + "'");
        if (value.is_object() && schema.at(key).is_object())
            reject_unknown_keys(value, schema.at(key), where);
    }
}

json to_json(const AblationFlags& flags) {
    return json{{"drop_audio", flags.drop_audio},
                {"drop_video", flags.drop_video},
                {"disable_ahl", flags.disable_ahl},
                {"fusion_mode", fusion_mode_name(flags.fusion_mode)},
                {"qkv_swap", flags.qkv_swap},
                {"guidance_scales", flags.guidance_scales}};
}

AblationFlags ablation_from_json(const json& j) {
    AblationFlags base;
    reject_unknown_keys(j, to_json(base), "ablation");
    AblationFlags f;
    f.drop_audio = get_or(j, "drop_audio", base.drop_audio);
    f.drop_video = get_or(j, "drop_video", base.drop_video);
    f.disable_ahl = get_or(j, "disable_ahl", base.disable_ahl);
    f.fusion_mode = fusion_mode_from_name(
        get_or<std::string>(j, "fusion_mode", fusion_mode_name(base.fusion_mode)));
    f.qkv_swap = get_or(j, "qkv_swap", base.qkv_swap);
    f.guidance_scales = get_or(j, "guidance_scales", base.guidance_scales);
    return f;
}

json to_json(const ModelConfig& cfg) {
    return json{{"token_len", cfg.token_len},
                {"model_dim", cfg.model_dim},
                {"heads", cfg.heads},
                {"d_k", cfg.d_k},
                {"embed_depth", cfg.embed_depth},
                {"ahl_depth", cfg.ahl_depth},
                {"fusion_depth", cfg.fusion_depth},
                {"ffn_ratio", cfg.ffn_ratio},
                {"dropout", cfg.dropout},
                {"input_dims",
                 {{"language", cfg.input_dims.language},
                  {"visual", cfg.input_dims.visual},
                  {"audio", cfg.input_dims.audio}}},
                {"input_lens",
                 {{"language", cfg.input_lens.language},
                  {"visual", cfg.input_lens.visual},
                  {"audio", cfg.input_lens.audio}}},
                {"ablation", to_json(cfg.ablation)}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig base;
    reject_unknown_keys(j, to_json(base), "model");
    ModelConfig c;
    c.token_len = get_or(j, "token_len", base.token_len);
    c.model_dim = get_or(j, "model_dim", base.model_dim);
    c.heads = get_or(j, "heads", base.heads);
    c.d_k = get_or(j, "d_k", base.d_k);
    c.embed_depth = get_or(j, "embed_depth", base.embed_depth);
    c.ahl_depth = get_or(j, "ahl_depth", base.ahl_depth);
    c.fusion_depth = get_or(j, "fusion_depth", base.fusion_depth);
    c.ffn_ratio = get_or(j, "ffn_ratio", base.ffn_ratio);
    c.dropout = get_or(j, "dropout", base.dropout);
    if (j.contains("input_dims")) {
        const json& d = j.at("input_dims");
        c.input_dims.language = get_or(d, "language", base.input_dims.language);
        c.input_dims.visual = get_or(d, "visual", base.input_dims.visual);
        c.input_dims.audio = get_or(d, "audio", base.input_dims.audio);
    }
    if (j.contains("input_lens")) {
        const json& d = j.at("input_lens");
        c.input_lens.language = get_or(d, "language", base.input_lens.language);
        c.input_lens.visual = get_or(d, "visual", base.input_lens.visual);
        c.input_lens.audio = get_or(d, "audio", base.input_lens.audio);
    }
    if (j.contains("ablation")) c.ablation = ablation_from_json(j.at("ablation"));
    c.validate();
    return c;
}

json to_json(const BucketSpec& spec) {
    return json{{"lo", spec.lo},
                {"hi", spec.hi},
                {"mode", spec.mode == BucketSpec::Mode::round_int ? "round_int" : "cut_points"},
                {"cuts", spec.cuts}};
}

BucketSpec bucket_spec_from_json(const json& j) {
    BucketSpec base;
    reject_unknown_keys(j, to_json(base), "bucket_spec");
    BucketSpec s;
    s.lo = get_or(j, "lo", base.lo);
    s.hi = get_or(j, "hi", base.hi);
    const std::string mode = get_or<std::string>(j, "mode", "round_int");
    if (mode == "round_int") s.mode = BucketSpec::Mode::round_int;
    else if (mode == "cut_points") s.mode = BucketSpec::Mode::cut_points;
    else throw ValidationError("bucket spec: unknown mode '" + mode + "'");
    s.cuts = get_or(j, "cuts", base.cuts);
    s.validate();
    return s;
}

} // namespace almt
