#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "almt/data.hpp"
#include "almt/metrics.hpp"
#include "almt/model.hpp"

namespace almt {

// Linear warmup for W steps, then cosine annealing from base_lr to floor_lr
// over the remaining S - W steps.
struct ScheduleConfig {
    double base_lr = 1e-4;
    std::int64_t warmup_steps = 0;
    std::int64_t total_steps = 0;
    double floor_lr = 0.0;

    void validate() const;
};

double lr_at(const ScheduleConfig& sched, std::int64_t step);

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Decoupled weight decay applied before the bias-corrected Adam update.
class AdamW {
public:
    AdamW(std::vector<NamedParam<float>>& params, const AdamWConfig& cfg);

    // Consumes the gradients currently stored on the parameters. A non-finite
    // gradient aborts the step (no parameter is touched) with a NumericError
    // naming the parameter.
    void step(double lr);

    std::int64_t step_count() const { return t_; }

    // Per-parameter optimizer state, exposed read-only.
    struct Moments {
        std::vector<float> m, v;
    };
    const Moments& moments(std::size_t param_index) const { return state_.at(param_index); }

private:
    std::vector<NamedParam<float>>* params_;
    AdamWConfig cfg_;
    std::vector<Moments> state_;
    std::int64_t t_ = 0;
};

struct TrainConfig {
    int epochs = 200;
    int batch_size = 64;
    std::uint64_t seed = 0;
    ModelConfig model;
    AdamWConfig optim;
    double base_lr = 1e-4;
    double warmup_frac = 0.05;         // used when warmup_steps is not given
    std::optional<std::int64_t> warmup_steps;
    double floor_lr = 0.0;
    double grad_clip = 0.0;            // global-norm clip; 0 disables
    std::string checkpoint_path;       // "" skips writing
    std::string log_path;              // "" skips writing

    void validate() const;
};

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double valid_loss = 0.0;
    double valid_mae = 0.0;
    double wall_ms = 0.0;
};

struct EvalResult {
    MetricsReport report;
    std::vector<float> preds, labels;
    double mse = 0.0;
};

EvalResult evaluate(const ALMTModel& model, const Dataset& dataset, const MetricsConfig& metrics);

struct TrainResult {
    ALMTModel model; // parameters restored to the best-validation state
    std::vector<EpochStats> log;
    double best_valid_loss = 0.0;
    int best_epoch = 0;
    std::int64_t steps_run = 0;
};

// Full training run: epochs x shuffled batches of forward/backward/step under
// the warmup+cosine schedule, per-epoch validation, best-checkpoint
// retention. Deterministic given the seed. A non-finite loss halts training
// with the last good checkpoint retained on disk before the NumericError
// propagates.
TrainResult train(const TrainConfig& cfg, const Dataset& train_set, const Dataset& valid_set,
                  std::ostream* log_stream = nullptr);

// One JSON log line, keys: epoch, lr, train_loss, valid_loss, valid_mae, wall_ms.
std::string epoch_stats_json(const EpochStats& s);

} // namespace almt
