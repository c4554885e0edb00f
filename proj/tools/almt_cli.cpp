// Command line surface: train, eval, synth, attn-dump, ablate.
// Exit codes: 0 success, 2 config/validation failure, 3 numeric failure.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "almt/checkpoint.hpp"
#include "almt/config_json.hpp"
#include "almt/data.hpp"
#include "almt/train.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json default_run_config(const std::string& preset) {
    almt::ModelConfig mc;
    almt::MetricsConfig met;
    if (preset == "mosi") {
        mc = almt::ModelConfig::mosi();
        met = almt::MetricsConfig::mosi();
    } else if (preset == "mosei") {
        mc = almt::ModelConfig::mosei();
        met = almt::MetricsConfig::mosi();
    } else if (preset == "sims") {
        mc = almt::ModelConfig::sims();
        met = almt::MetricsConfig::sims();
    } else {
        throw almt::ValidationError("unknown preset '" + preset + "' (valid: mosi, mosei, sims)");
    }
    json j;
    j["seed"] = 42;
    j["model"] = almt::to_json(mc);
    j["train"] = {{"epochs", 200}, {"batch_size", 64},   {"beta1", 0.9},    {"beta2", 0.999},
                  {"eps", 1e-8},   {"weight_decay", 0.01}, {"grad_clip", 0.0}};
    j["schedule"] = {{"base_lr", 1e-4}, {"warmup_frac", 0.05}, {"warmup_steps", -1}, {"floor_lr", 0.0}};
    j["data"] = {{"train", ""},           {"valid", ""},      {"test", ""}, {"path", ""},
                 {"fractions", json::array({0.7, 0.15, 0.15})}, {"split_seed", 0}};
    j["metrics"] = {{"acc7", almt::to_json(met.acc7)},
                    {"acc5", almt::to_json(met.acc5)},
                    {"acc3", almt::to_json(met.acc3)}};
    return j;
}

void merge_config(json& base, const json& overlay, const std::string& path) {
    almt::reject_unknown_keys(overlay, base, path);
    for (const auto& [key, value] : overlay.items()) {
        if (value.is_object() && base.at(key).is_object())
            merge_config(base.at(key), value, path.empty() ? key : path + "." + key);
        else
            base.at(key) = value;
    }
}

void set_dotted(json& root, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw almt::ValidationError("--set expects key=value, got '" + assignment + "'");
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    json* node = &root;
    std::size_t at = 0;
    std::string walked;
    while (true) {
        const auto dot = path.find('.', at);
        const std::string key = path.substr(at, dot == std::string::npos ? std::string::npos : dot - at);
        walked = walked.empty() ? key : walked + "." + key;
        if (!node->contains(key))
            throw almt::ValidationError("--set: unknown config key '" + walked + "'");
        node = &node->at(key);
        if (dot == std::string::npos) break;
        at = dot + 1;
    }
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw; // bare strings need no quoting
    }
    *node = value;
    std::cout << "override " << path << "=" << value.dump() << "\n";
}

struct ResolvedRun {
    json raw;
    std::uint64_t seed = 0;
    almt::ModelConfig model;
    almt::MetricsConfig metrics;
    almt::TrainConfig train;
    std::string data_train, data_valid, data_test, data_path;
    almt::SplitFractions fractions;
    std::uint64_t split_seed = 0;
};

ResolvedRun resolve_run(const std::string& preset, const std::string& config_path,
                        const std::vector<std::string>& sets, std::optional<std::uint64_t> seed_flag,
                        bool print_config) {
    json cfg = default_run_config(preset);
    if (!config_path.empty()) {
        std::ifstream f(config_path);
        if (!f) throw almt::ValidationError("cannot open config '" + config_path + "'");
        json overlay;
        try {
            overlay = json::parse(f);
        } catch (const json::exception& e) {
            throw almt::ValidationError("config '" + config_path + "' is not valid JSON: " + e.what());
        }
        merge_config(cfg, overlay, "");
    }
    for (const auto& s : sets) set_dotted(cfg, s);
    if (seed_flag.has_value()) cfg["seed"] = *seed_flag;
    if (print_config) std::cout << cfg.dump(2) << "\n";

    ResolvedRun r;
    r.raw = cfg;
    r.seed = cfg.at("seed").get<std::uint64_t>();
    r.model = almt::model_config_from_json(cfg.at("model"));
    r.metrics.acc7 = almt::bucket_spec_from_json(cfg.at("metrics").at("acc7"));
    r.metrics.acc5 = almt::bucket_spec_from_json(cfg.at("metrics").at("acc5"));
    r.metrics.acc3 = almt::bucket_spec_from_json(cfg.at("metrics").at("acc3"));

    const json& t = cfg.at("train");
    r.train.epochs = t.at("epochs").get<int>();
    r.train.batch_size = t.at("batch_size").get<int>();
    r.train.optim.beta1 = t.at("beta1").get<double>();
    r.train.optim.beta2 = t.at("beta2").get<double>();
    r.train.optim.eps = t.at("eps").get<double>();
    r.train.optim.weight_decay = t.at("weight_decay").get<double>();
    r.train.grad_clip = t.at("grad_clip").get<double>();
    const json& s = cfg.at("schedule");
    r.train.base_lr = s.at("base_lr").get<double>();
    r.train.warmup_frac = s.at("warmup_frac").get<double>();
    const auto warmup_steps = s.at("warmup_steps").get<std::int64_t>();
    if (warmup_steps >= 0) r.train.warmup_steps = warmup_steps;
    r.train.floor_lr = s.at("floor_lr").get<double>();
    r.train.seed = r.seed;
    r.train.model = r.model;

    const json& d = cfg.at("data");
    r.data_train = d.at("train").get<std::string>();
    r.data_valid = d.at("valid").get<std::string>();
    r.data_test = d.at("test").get<std::string>();
    r.data_path = d.at("path").get<std::string>();
    const auto fr = d.at("fractions").get<std::vector<double>>();
    if (fr.size() != 3) throw almt::ValidationError("data.fractions must have 3 entries");
    r.fractions = {fr[0], fr[1], fr[2]};
    r.split_seed = d.at("split_seed").get<std::uint64_t>();
    return r;
}

struct LoadedData {
    almt::Dataset train, valid, test;
};

LoadedData load_data(const ResolvedRun& r) {
    LoadedData d;
    if (!r.data_path.empty()) {
        const almt::Dataset all = almt::read_mmf(r.data_path);
        auto split = almt::split_dataset(all, r.fractions, r.split_seed);
        d.train = std::move(split.train);
        d.valid = std::move(split.valid);
        d.test = std::move(split.test);
        return d;
    }
    for (const auto& [name, path] : {std::pair{"train", r.data_train}, {"valid", r.data_valid},
                                     {"test", r.data_test}}) {
        if (path.empty())
            throw almt::ValidationError(std::string("data.") + name +
                                        " path missing (set data.path for an automatic split)");
        if (!fs::exists(path))
            throw almt::ValidationError(std::string("data.") + name + " file '" + path +
                                        "' does not exist");
    }
    d.train = almt::read_mmf(r.data_train);
    d.valid = almt::read_mmf(r.data_valid);
    d.test = almt::read_mmf(r.data_test);
    return d;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw almt::ValidationError("cannot open '" + path + "' for writing");
    f << text;
}

void write_matrix_csv(const std::string& path, const almt::Tensor& m) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw almt::ValidationError("cannot open '" + path + "' for writing");
    f.precision(9);
    for (int i = 0; i < m.rows(); ++i) {
        for (int j = 0; j < m.cols(); ++j) f << (j ? "," : "") << m.at(i, j);
        f << "\n";
    }
}

int cmd_train(const ResolvedRun& run, const std::string& out_dir) {
    fs::create_directories(out_dir);
    ResolvedRun r = run;
    r.train.checkpoint_path = (fs::path(out_dir) / "checkpoint.almt").string();
    r.train.log_path = (fs::path(out_dir) / "train_log.jsonl").string();
    write_text((fs::path(out_dir) / "resolved_config.json").string(), r.raw.dump(2) + "\n");

    const LoadedData data = load_data(r);
    std::cout << "training on " << data.train.size() << " samples, validating on "
              << data.valid.size() << ", testing on " << data.test.size() << "\n";
    const almt::TrainResult result = almt::train(r.train, data.train, data.valid, &std::cout);
    std::cout << "best validation loss " << result.best_valid_loss << " at epoch "
              << result.best_epoch << "\n";

    const almt::EvalResult ev = almt::evaluate(result.model, data.test, r.metrics);
    const std::string report = ev.report.to_json();
    write_text((fs::path(out_dir) / "test_report.json").string(), report + "\n");
    std::cout << report << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
             const ResolvedRun& run, const std::string& csv_path) {
    const almt::ALMTModel model = almt::load_checkpoint(checkpoint_path);
    const almt::Dataset dataset = almt::read_mmf(data_path);
    const almt::EvalResult ev = almt::evaluate(model, dataset, run.metrics);
    std::cout << ev.report.to_json() << "\n";
    if (!csv_path.empty()) almt::write_pairs_csv(csv_path, ev.preds, ev.labels);
    return 0;
}

int cmd_synth(const std::string& config_path, const std::string& out_path) {
    std::ifstream f(config_path);
    if (!f) throw almt::ValidationError("cannot open synth config '" + config_path + "'");
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw almt::ValidationError(std::string("synth config is not valid JSON: ") + e.what());
    }
    const json schema = {{"n_samples", 0},
                         {"lens", {{"language", 8}, {"visual", 8}, {"audio", 8}}},
                         {"dims", {{"language", 32}, {"visual", 8}, {"audio", 4}}},
                         {"label_range", "sims"},
                         {"relevance_rho", 1.0},
                         {"noise_sigma", 0.0},
                         {"seed", 0}};
    almt::reject_unknown_keys(j, schema, "");
    almt::SynthConfig cfg;
    cfg.n_samples = j.value("n_samples", 0);
    if (j.contains("lens")) {
        cfg.lens.language = j.at("lens").value("language", cfg.lens.language);
        cfg.lens.visual = j.at("lens").value("visual", cfg.lens.visual);
        cfg.lens.audio = j.at("lens").value("audio", cfg.lens.audio);
    }
    if (j.contains("dims")) {
        cfg.dims.language = j.at("dims").value("language", cfg.dims.language);
        cfg.dims.visual = j.at("dims").value("visual", cfg.dims.visual);
        cfg.dims.audio = j.at("dims").value("audio", cfg.dims.audio);
    }
    cfg.label_range = almt::label_range_from_name(j.value("label_range", "sims"));
    cfg.relevance_rho = j.value("relevance_rho", 1.0);
    cfg.noise_sigma = j.value("noise_sigma", 0.0);
    cfg.seed = j.value("seed", std::uint64_t{0});

    const almt::Dataset ds = almt::generate_synthetic(cfg);
    almt::write_mmf(ds, out_path);
    std::cout << "wrote " << ds.size() << " samples to " << out_path << "\n";
    if (!ds.samples.empty()) {
        const almt::Sample& s = ds.samples.front();
        std::cout << "shapes: language " << s.language.shape().str() << ", visual "
                  << s.visual.shape().str() << ", audio " << s.audio.shape().str() << ", labels in ["
                  << almt::label_range_lo(ds.label_range) << ", "
                  << almt::label_range_hi(ds.label_range) << "]\n";
    }
    return 0;
}

struct NoiseSpec {
    almt::Modality modality = almt::Modality::visual;
    int frame = 0;
    double amplitude = 0.0;
    std::uint64_t seed = 0;
};

NoiseSpec parse_noise(const std::string& text) {
    std::vector<std::string> parts;
    std::size_t at = 0;
    while (true) {
        const auto comma = text.find(',', at);
        parts.push_back(text.substr(at, comma == std::string::npos ? std::string::npos : comma - at));
        if (comma == std::string::npos) break;
        at = comma + 1;
    }
    if (parts.size() != 4)
        throw almt::ValidationError("noise spec must be modality,frame,amplitude,seed, got '" +
                                    text + "'");
    NoiseSpec n;
    if (parts[0] == "language") n.modality = almt::Modality::language;
    else if (parts[0] == "visual") n.modality = almt::Modality::visual;
    else if (parts[0] == "audio") n.modality = almt::Modality::audio;
    else throw almt::ValidationError("noise modality must be language/visual/audio");
    n.frame = std::stoi(parts[1]);
    n.amplitude = std::stod(parts[2]);
    n.seed = static_cast<std::uint64_t>(std::stoull(parts[3]));
    return n;
}

// Mean of each trace matrix column (average attention mass per key position).
std::vector<double> column_masses(const almt::Tensor& m) {
    std::vector<double> mass(static_cast<std::size_t>(m.cols()), 0.0);
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) mass[static_cast<std::size_t>(j)] += m.at(i, j);
    for (auto& v : mass) v /= m.rows();
    return mass;
}

void dump_trace(const std::string& out_dir, const almt::AttentionTrace& trace,
                const std::string& suffix) {
    for (std::size_t i = 0; i < trace.alphas.size(); ++i) {
        const std::string layer = std::to_string(trace.ahl_layer_index[i]);
        write_matrix_csv((fs::path(out_dir) / ("alpha_l" + layer + suffix + ".csv")).string(),
                         trace.alphas[i]);
        write_matrix_csv((fs::path(out_dir) / ("beta_l" + layer + suffix + ".csv")).string(),
                         trace.betas[i]);
    }
    for (std::size_t i = 0; i < trace.fusion_maps.size(); ++i)
        write_matrix_csv(
            (fs::path(out_dir) / ("fusion_l" + std::to_string(i + 1) + suffix + ".csv")).string(),
            trace.fusion_maps[i]);
}

void write_delta_summary(const std::string& path, const almt::AttentionTrace& clean,
                         const almt::AttentionTrace& noised) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw almt::ValidationError("cannot open '" + path + "' for writing");
    f << "matrix,layer,column,clean_mass,noised_mass,delta\n";
    f.precision(9);
    auto emit = [&](const char* name, const std::vector<almt::Tensor>& a,
                    const std::vector<almt::Tensor>& b, const std::vector<int>& layers) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            const auto cm = column_masses(a[i]);
            const auto nm = column_masses(b[i]);
            for (std::size_t j = 0; j < cm.size(); ++j)
                f << name << "," << layers[i] << "," << j << "," << cm[j] << "," << nm[j] << ","
                  << nm[j] - cm[j] << "\n";
        }
    };
    emit("alpha", clean.alphas, noised.alphas, clean.ahl_layer_index);
    emit("beta", clean.betas, noised.betas, clean.ahl_layer_index);
}

int cmd_attn_dump(const std::string& checkpoint_path, const std::string& data_path, int sample_index,
                  const std::string& out_dir, int average_n, const std::string& noise_text,
                  const std::string& embed_noise_text) {
    const almt::ALMTModel model = almt::load_checkpoint(checkpoint_path);
    const almt::Dataset dataset = almt::read_mmf(data_path);
    fs::create_directories(out_dir);
    if (!noise_text.empty() && !embed_noise_text.empty())
        throw almt::ValidationError("--noise and --embed-noise cannot be combined");

    auto trace_of = [&](const almt::Sample& s,
                        const almt::EmbedNoiseT<float>* en) -> almt::AttentionTrace {
        almt::AttentionTrace trace;
        almt::TapeT<float> tape(false);
        model.forward(tape, {s.language, s.visual, s.audio}, &trace, en);
        return trace;
    };

    if (average_n > 0) {
        if (static_cast<std::size_t>(average_n) > dataset.size())
            throw almt::ValidationError("--average " + std::to_string(average_n) +
                                        " exceeds dataset size " + std::to_string(dataset.size()));
        almt::AttentionTrace sum = trace_of(dataset.samples[0], nullptr);
        for (int i = 1; i < average_n; ++i) {
            const almt::AttentionTrace t = trace_of(dataset.samples[static_cast<std::size_t>(i)], nullptr);
            auto add_into = [&](std::vector<almt::Tensor>& dst, const std::vector<almt::Tensor>& src) {
                for (std::size_t k = 0; k < dst.size(); ++k)
                    for (std::int64_t e = 0; e < dst[k].numel(); ++e)
                        dst[k].data()[e] += src[k].data()[e];
            };
            add_into(sum.alphas, t.alphas);
            add_into(sum.betas, t.betas);
            add_into(sum.fusion_maps, t.fusion_maps);
        }
        auto scale_all = [&](std::vector<almt::Tensor>& v) {
            for (auto& m : v)
                for (std::int64_t e = 0; e < m.numel(); ++e)
                    m.data()[e] /= static_cast<float>(average_n);
        };
        scale_all(sum.alphas);
        scale_all(sum.betas);
        scale_all(sum.fusion_maps);
        dump_trace(out_dir, sum, "");
        std::cout << "wrote dataset-averaged traces over " << average_n << " samples to " << out_dir
                  << "\n";
        return 0;
    }

    if (sample_index < 0 || static_cast<std::size_t>(sample_index) >= dataset.size())
        throw almt::ValidationError("sample index " + std::to_string(sample_index) +
                                    " out of range for dataset of " + std::to_string(dataset.size()));
    const almt::Sample& sample = dataset.samples[static_cast<std::size_t>(sample_index)];

    if (noise_text.empty() && embed_noise_text.empty()) {
        dump_trace(out_dir, trace_of(sample, nullptr), "");
        std::cout << "wrote traces for sample " << sample_index << " to " << out_dir << "\n";
        return 0;
    }

    const almt::AttentionTrace clean = trace_of(sample, nullptr);
    almt::AttentionTrace noised;
    if (!noise_text.empty()) {
        const NoiseSpec n = parse_noise(noise_text);
        const almt::Sample perturbed =
            almt::inject_frame_noise(sample, n.modality, n.frame, n.amplitude, n.seed);
        noised = trace_of(perturbed, nullptr);
    } else {
        const NoiseSpec n = parse_noise(embed_noise_text);
        almt::EmbedNoiseT<float> en;
        en.modality = n.modality;
        en.row = n.frame;
        almt::Rng rng(n.seed);
        en.delta.resize(static_cast<std::size_t>(model.config().model_dim));
        for (auto& v : en.delta) v = static_cast<float>(rng.normal(0.0, n.amplitude));
        noised = trace_of(sample, &en);
    }
    dump_trace(out_dir, clean, "_clean");
    dump_trace(out_dir, noised, "_noised");
    write_delta_summary((fs::path(out_dir) / "delta_summary.csv").string(), clean, noised);
    std::cout << "wrote clean/noised traces and delta summary to " << out_dir << "\n";
    return 0;
}

json flags_to_patch(const std::string& key, const json& value) {
    static const std::vector<std::string> valid = {"drop_audio",  "drop_video", "disable_ahl",
                                                   "fusion_mode", "qkv_swap",   "guidance_scales"};
    for (const auto& v : valid)
        if (key == v) return json{{key, value}};
    std::string names;
    for (const auto& v : valid) names += (names.empty() ? "" : ", ") + v;
    throw almt::ValidationError("unknown ablation flag '" + key + "' (valid: " + names + ")");
}

int cmd_ablate(const ResolvedRun& run, const std::string& grid_path,
               const std::vector<std::uint64_t>& seeds, const std::string& out_dir) {
    std::ifstream f(grid_path);
    if (!f) throw almt::ValidationError("cannot open grid '" + grid_path + "'");
    json grid;
    try {
        grid = json::parse(f);
    } catch (const json::exception& e) {
        throw almt::ValidationError(std::string("grid is not valid JSON: ") + e.what());
    }
    if (!grid.is_object() || grid.empty())
        throw almt::ValidationError("grid must be a non-empty JSON object of flag -> value list");

    std::vector<std::string> keys;
    std::vector<std::vector<json>> values;
    for (const auto& [key, list] : grid.items()) {
        flags_to_patch(key, json());
        if (!list.is_array() || list.empty())
            throw almt::ValidationError("grid entry '" + key + "' must be a non-empty array");
        keys.push_back(key);
        values.emplace_back(list.begin(), list.end());
    }

    std::vector<std::map<std::string, json>> cells{{}};
    for (std::size_t k = 0; k < keys.size(); ++k) {
        std::vector<std::map<std::string, json>> next;
        for (const auto& cell : cells)
            for (const auto& v : values[k]) {
                auto c = cell;
                c[keys[k]] = v;
                next.push_back(std::move(c));
            }
        cells = std::move(next);
    }

    const LoadedData data = load_data(run);
    fs::create_directories(out_dir);

    const std::vector<std::string> metric_names = {"mse", "mae",  "corr",       "acc7",
                                                   "acc5", "acc3", "acc2_nonneg", "acc2_posneg"};
    json results = json::array();
    std::ofstream csv((fs::path(out_dir) / "ablate_results.csv").string(), std::ios::trunc);
    csv << "cell,seeds";
    for (const auto& m : metric_names) csv << "," << m << "_mean," << m << "_std";
    csv << "\n";

    for (const auto& cell : cells) {
        json ablation_patch = run.raw.at("model").at("ablation");
        std::string cell_name;
        for (const auto& [k, v] : cell) {
            ablation_patch[k] = v;
            cell_name += (cell_name.empty() ? "" : " ") + k + "=" + v.dump();
        }
        almt::AblationFlags flags = almt::ablation_from_json(ablation_patch);
        almt::ModelConfig cfg = almt::apply_ablation(run.model, flags);

        std::map<std::string, std::vector<double>> metric_values;
        for (std::uint64_t seed : seeds) {
            almt::TrainConfig tc = run.train;
            tc.model = cfg;
            tc.seed = seed;
            tc.checkpoint_path.clear();
            tc.log_path.clear();
            const almt::TrainResult tr = almt::train(tc, data.train, data.valid);
            const almt::EvalResult ev = almt::evaluate(tr.model, data.test, run.metrics);
            metric_values["mse"].push_back(ev.mse);
            metric_values["mae"].push_back(ev.report.mae);
            metric_values["corr"].push_back(ev.report.corr);
            metric_values["acc7"].push_back(ev.report.acc7);
            metric_values["acc5"].push_back(ev.report.acc5);
            metric_values["acc3"].push_back(ev.report.acc3);
            metric_values["acc2_nonneg"].push_back(ev.report.acc2_nonneg);
            metric_values["acc2_posneg"].push_back(ev.report.acc2_posneg);
        }

        json row;
        row["cell"] = cell;
        row["seeds"] = seeds;
        csv << "\"" << cell_name << "\"," << seeds.size();
        for (const auto& m : metric_names) {
            const auto& vals = metric_values[m];
            double mean = 0.0;
            for (double v : vals) mean += v;
            mean /= static_cast<double>(vals.size());
            double var = 0.0;
            for (double v : vals) var += (v - mean) * (v - mean);
            const double sd = vals.size() > 1 ? std::sqrt(var / static_cast<double>(vals.size() - 1))
                                              : 0.0;
            row[m] = {{"mean", mean}, {"std", sd}};
            csv << "," << mean << "," << sd;
        }
        csv << "\n";
        results.push_back(row);
        std::cout << "cell [" << cell_name << "] mse=" << row["mse"]["mean"].get<double>()
                  << " mae=" << row["mae"]["mean"].get<double>() << "\n";
    }
    write_text((fs::path(out_dir) / "ablate_results.json").string(), results.dump(2) + "\n");
    std::cout << "wrote " << results.size() << " cells x " << seeds.size() << " seeds to " << out_dir
              << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ALMT multimodal sentiment regression"};
    app.require_subcommand(0, 1);

    std::string preset = "mosi";
    app.add_option("--preset", preset, "configuration preset: mosi, mosei or sims");
    bool print_defaults = false;
    app.add_flag("--print-defaults", print_defaults, "print the preset's default config and exit");

    std::string config_path, out_dir = "almt_run", csv_path, checkpoint_path, data_path;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed_flag;
    bool print_config = false;

    auto add_common = [&](CLI::App* cmd, bool with_config) {
        if (with_config) {
            cmd->add_option("--config", config_path, "JSON config file");
            cmd->add_option("--set", sets, "dotted-path override key=value")->take_all();
            cmd->add_option("--seed", seed_flag, "override the config seed");
            cmd->add_flag("--print-config", print_config, "echo the resolved config before running");
        }
        cmd->add_option("--out-dir", out_dir, "output directory");
    };

    CLI::App* train_cmd = app.add_subcommand("train", "train a model and report test metrics");
    add_common(train_cmd, true);

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval_cmd->add_option("--data", data_path, "MMF dataset file")->required();
    eval_cmd->add_option("--csv", csv_path, "write raw (pred, label) pairs to this CSV");
    add_common(eval_cmd, true);

    std::string synth_out;
    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic MMF dataset");
    synth_cmd->add_option("--config", config_path, "synth config JSON")->required();
    synth_cmd->add_option("--out", synth_out, "output MMF path")->required();

    int sample_index = 0, average_n = 0;
    std::string noise_text, embed_noise_text;
    CLI::App* attn_cmd = app.add_subcommand("attn-dump", "export attention traces as CSV");
    attn_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    attn_cmd->add_option("--data", data_path, "MMF dataset file")->required();
    attn_cmd->add_option("--sample", sample_index, "sample index to trace");
    attn_cmd->add_option("--average", average_n, "average traces over the first N samples");
    attn_cmd->add_option("--noise", noise_text,
                         "raw-frame probe: modality,frame,amplitude,seed");
    attn_cmd->add_option("--embed-noise", embed_noise_text,
                         "embedded-row probe: modality,row,amplitude,seed");
    attn_cmd->add_option("--out-dir", out_dir, "output directory");

    std::string grid_path;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    CLI::App* ablate_cmd = app.add_subcommand("ablate", "run an ablation grid");
    ablate_cmd->add_option("--grid", grid_path, "grid JSON: flag -> list of values")->required();
    ablate_cmd->add_option("--seeds", seeds, "seeds for repeated runs")->delimiter(',');
    add_common(ablate_cmd, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (print_defaults) {
            std::cout << default_run_config(preset).dump(2) << "\n";
            return 0;
        }
        if (train_cmd->parsed())
            return cmd_train(resolve_run(preset, config_path, sets, seed_flag, print_config), out_dir);
        if (eval_cmd->parsed())
            return cmd_eval(checkpoint_path, data_path,
                            resolve_run(preset, config_path, sets, seed_flag, print_config), csv_path);
        if (synth_cmd->parsed()) return cmd_synth(config_path, synth_out);
        if (attn_cmd->parsed())
            return cmd_attn_dump(checkpoint_path, data_path, sample_index, out_dir, average_n,
                                 noise_text, embed_noise_text);
        if (ablate_cmd->parsed())
            return cmd_ablate(resolve_run(preset, config_path, sets, seed_flag, print_config),
                              grid_path, seeds, out_dir);
        std::cout << app.help() << "\n";
        return 0;
    } catch (const almt::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const almt::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
