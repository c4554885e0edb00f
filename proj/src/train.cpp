#include "almt/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>

#include <json.hpp>

#include "almt/checkpoint.hpp"

namespace almt {

void ScheduleConfig::validate() const {
    if (total_steps < 1) throw ValidationError("schedule: total_steps must be >= 1");
    if (warmup_steps < 0 || warmup_steps >= total_steps)
        throw ValidationError("schedule: warmup_steps must lie in [0, total_steps)");
    if (base_lr <= 0.0) throw ValidationError("schedule: base_lr must be positive");
    if (floor_lr < 0.0 || floor_lr > base_lr)
        throw ValidationError("schedule: floor_lr must lie in [0, base_lr]");
}

double lr_at(const ScheduleConfig& sched, std::int64_t step) {
    sched.validate();
    if (step < 0 || step > sched.total_steps)
        throw ValidationError("lr_at: step " + std::to_string(step) + " outside [0, " +
                              std::to_string(sched.total_steps) + "]");
    if (step < sched.warmup_steps)
        return sched.base_lr * static_cast<double>(step + 1) /
               static_cast<double>(sched.warmup_steps);
    const double phase = static_cast<double>(step - sched.warmup_steps) /
                         static_cast<double>(sched.total_steps - sched.warmup_steps);
    return sched.floor_lr +
           (sched.base_lr - sched.floor_lr) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * phase));
}

AdamW::AdamW(std::vector<NamedParam<float>>& params, const AdamWConfig& cfg)
    : params_(&params), cfg_(cfg) {
    state_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto n = static_cast<std::size_t>(params[i].tensor.numel());
        state_[i].m.assign(n, 0.0f);
        state_[i].v.assign(n, 0.0f);
    }
}

void AdamW::step(double lr) {
    // validate every gradient before touching any parameter
    for (auto& p : *params_) {
        const float* g = p.tensor.grad();
        for (std::int64_t i = 0; i < p.tensor.numel(); ++i)
            if (!std::isfinite(static_cast<double>(g[i])))
                throw NumericError("adamw: non-finite gradient in parameter '" + p.name +
                                   "' at flat index " + std::to_string(i) + "; step aborted");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_->size(); ++pi) {
        auto& p = (*params_)[pi].tensor;
        auto& st = state_[pi];
        float* w = p.data();
        const float* g = p.grad();
        const std::int64_t n = p.numel();
        for (std::int64_t i = 0; i < n; ++i) {
            const auto ii = static_cast<std::size_t>(i);
            double wi = static_cast<double>(w[i]) * (1.0 - lr * cfg_.weight_decay);
            const double gi = static_cast<double>(g[i]);
            const double m = cfg_.beta1 * static_cast<double>(st.m[ii]) + (1.0 - cfg_.beta1) * gi;
            const double v = cfg_.beta2 * static_cast<double>(st.v[ii]) + (1.0 - cfg_.beta2) * gi * gi;
            st.m[ii] = static_cast<float>(m);
            st.v[ii] = static_cast<float>(v);
            wi -= lr * (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps);
            w[i] = static_cast<float>(wi);
        }
    }
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ValidationError("train: epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
    if (base_lr <= 0.0) throw ValidationError("train: base_lr must be positive");
    if (warmup_frac < 0.0 || warmup_frac >= 1.0)
        throw ValidationError("train: warmup_frac must lie in [0, 1)");
    if (grad_clip < 0.0) throw ValidationError("train: grad_clip must be >= 0");
    model.validate();
}

EvalResult evaluate(const ALMTModel& model, const Dataset& dataset, const MetricsConfig& metrics) {
    if (dataset.samples.empty()) throw ValidationError("evaluate: empty dataset");
    EvalResult out;
    out.preds.reserve(dataset.size());
    out.labels.reserve(dataset.size());
    double se = 0.0;
    for (const Sample& s : dataset.samples) {
        TapeT<float> tape(false);
        const ALMTModel::Input input{s.language, s.visual, s.audio};
        const float pred = model.forward(tape, input).item();
        out.preds.push_back(pred);
        out.labels.push_back(s.label);
        const double d = static_cast<double>(pred) - static_cast<double>(s.label);
        se += d * d;
    }
    out.mse = se / static_cast<double>(dataset.size());
    out.report = compute_metrics(out.preds, out.labels, metrics);
    return out;
}

std::string epoch_stats_json(const EpochStats& s) {
    nlohmann::json j;
    j["epoch"] = s.epoch;
    j["lr"] = s.lr;
    j["train_loss"] = s.train_loss;
    j["valid_loss"] = s.valid_loss;
    j["valid_mae"] = s.valid_mae;
    j["wall_ms"] = s.wall_ms;
    return j.dump();
}

namespace {

// mean squared error of validation predictions, plus MAE, without bucketing
struct ValidStats {
    double mse = 0.0, mae = 0.0;
};

ValidStats valid_stats(const ALMTModel& model, const Dataset& dataset) {
    ValidStats v;
    for (const Sample& s : dataset.samples) {
        TapeT<float> tape(false);
        const float pred = model.forward(tape, {s.language, s.visual, s.audio}).item();
        const double d = static_cast<double>(pred) - static_cast<double>(s.label);
        v.mse += d * d;
        v.mae += std::abs(d);
    }
    const auto n = static_cast<double>(dataset.size());
    v.mse /= n;
    v.mae /= n;
    return v;
}

std::vector<std::vector<float>> snapshot_params(const ALMTModel& model) {
    std::vector<std::vector<float>> snap;
    for (const auto& p : model.parameters()) snap.push_back(p.tensor.values());
    return snap;
}

void restore_params(ALMTModel& model, const std::vector<std::vector<float>>& snap) {
    auto& params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        float* w = params[i].tensor.data();
        for (std::size_t j = 0; j < snap[i].size(); ++j) w[j] = snap[i][j];
    }
}

void clip_gradients(ALMTModel& model, double max_norm) {
    double norm2 = 0.0;
    for (auto& p : model.parameters()) {
        const float* g = p.tensor.grad();
        for (std::int64_t i = 0; i < p.tensor.numel(); ++i)
            norm2 += static_cast<double>(g[i]) * static_cast<double>(g[i]);
    }
    const double norm = std::sqrt(norm2);
    if (norm <= max_norm) return;
    const double factor = max_norm / norm;
    for (auto& p : model.parameters()) {
        float* g = p.tensor.grad();
        for (std::int64_t i = 0; i < p.tensor.numel(); ++i)
            g[i] = static_cast<float>(static_cast<double>(g[i]) * factor);
    }
}

} // namespace

TrainResult train(const TrainConfig& cfg, const Dataset& train_set, const Dataset& valid_set,
                  std::ostream* log_stream) {
    cfg.validate();
    if (train_set.samples.empty()) throw ValidationError("train: empty training set");
    if (valid_set.samples.empty()) throw ValidationError("train: empty validation set");

    const auto batches_per_epoch = static_cast<std::int64_t>(
        (train_set.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
        static_cast<std::size_t>(cfg.batch_size));
    ScheduleConfig sched;
    sched.base_lr = cfg.base_lr;
    sched.total_steps = static_cast<std::int64_t>(cfg.epochs) * batches_per_epoch;
    sched.warmup_steps = cfg.warmup_steps.value_or(
        static_cast<std::int64_t>(cfg.warmup_frac * static_cast<double>(sched.total_steps)));
    sched.floor_lr = cfg.floor_lr;
    sched.validate();

    TrainResult result{ALMTModel(cfg.model, cfg.seed), {}, 0.0, 0, 0};
    ALMTModel& model = result.model;
    AdamW optim(model.parameters(), cfg.optim);

    std::ofstream log_file;
    if (!cfg.log_path.empty()) {
        log_file.open(cfg.log_path, std::ios::trunc);
        if (!log_file) throw ValidationError("train: cannot open log '" + cfg.log_path + "'");
    }

    std::vector<std::vector<float>> best = snapshot_params(model);
    double best_valid = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    std::int64_t step = 0;

    auto finish_best = [&]() {
        restore_params(model, best);
        if (!cfg.checkpoint_path.empty()) save_checkpoint(model, cfg.checkpoint_path);
    };

    try {
        for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
            const auto t0 = std::chrono::steady_clock::now();
            const auto batches =
                iterate_batches(train_set.size(), cfg.batch_size, cfg.seed + static_cast<std::uint64_t>(epoch));
            double epoch_loss = 0.0;
            double last_lr = 0.0;
            for (const auto& batch : batches) {
                model.zero_grad();
                TapeT<float> tape;
                std::vector<TensorT<float>> preds;
                std::vector<double> labels;
                for (std::size_t idx : batch) {
                    const Sample& s = train_set.samples[idx];
                    preds.push_back(model.forward(tape, {s.language, s.visual, s.audio}));
                    labels.push_back(static_cast<double>(s.label));
                }
                TensorT<float> loss = mse_loss(tape, preds, labels);
                const double loss_value = static_cast<double>(loss.item());
                if (!std::isfinite(loss_value))
                    throw NumericError("train: non-finite loss at step " + std::to_string(step));
                tape.backward(loss);
                if (cfg.grad_clip > 0.0) clip_gradients(model, cfg.grad_clip);
                last_lr = lr_at(sched, step);
                optim.step(last_lr);
                epoch_loss += loss_value * static_cast<double>(batch.size());
                ++step;
            }
            const ValidStats vs = valid_stats(model, valid_set);
            const auto t1 = std::chrono::steady_clock::now();

            EpochStats stats;
            stats.epoch = epoch;
            stats.lr = last_lr;
            stats.train_loss = epoch_loss / static_cast<double>(train_set.size());
            stats.valid_loss = vs.mse;
            stats.valid_mae = vs.mae;
            stats.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
            result.log.push_back(stats);
            const std::string line = epoch_stats_json(stats);
            if (log_file.is_open()) log_file << line << "\n";
            if (log_stream != nullptr) *log_stream << line << "\n";

            if (vs.mse < best_valid) {
                best_valid = vs.mse;
                best_epoch = epoch;
                best = snapshot_params(model);
            }
        }
    } catch (const NumericError&) {
        finish_best();
        throw;
    }

    result.best_valid_loss = best_valid;
    result.best_epoch = best_epoch;
    result.steps_run = step;
    finish_best();
    return result;
}

} // namespace almt
