#pragma once

#include <span>
#include <string>
#include <vector>

#include "almt/errors.hpp"

namespace almt {

// Mapping of continuous scores to ordered buckets. Scores are clamped to
// [lo, hi] first. round_int buckets by rounding to the nearest integer, ties
// half away from zero; cut_points buckets by sorted thresholds, where a
// value equal to a cut belongs to the upper bucket.
struct BucketSpec {
    double lo = -3.0;
    double hi = 3.0;
    enum class Mode { round_int, cut_points } mode = Mode::round_int;
    std::vector<double> cuts;

    void validate() const;
    int bucket_count() const;
    int bucket_of(double value) const;

    static BucketSpec mosi_acc7() { return {-3.0, 3.0, Mode::round_int, {}}; }
    static BucketSpec mosi_acc5() { return {-2.0, 2.0, Mode::round_int, {}}; }
    static BucketSpec mosi_acc3() { return {-3.0, 3.0, Mode::cut_points, {-0.5, 0.5}}; }
    static BucketSpec sims_acc5() { return {-1.0, 1.0, Mode::cut_points, {-0.7, -0.1, 0.1, 0.7}}; }
    static BucketSpec sims_acc3() { return {-1.0, 1.0, Mode::cut_points, {-0.1, 0.1}}; }
};

struct MetricsConfig {
    BucketSpec acc7 = BucketSpec::mosi_acc7();
    BucketSpec acc5 = BucketSpec::mosi_acc5();
    BucketSpec acc3 = BucketSpec::mosi_acc3();

    static MetricsConfig mosi() { return {}; }
    static MetricsConfig sims() {
        return {BucketSpec::mosi_acc7(), BucketSpec::sims_acc5(), BucketSpec::sims_acc3()};
    }
};

// Fraction of samples whose clamped-and-bucketed prediction hits the label bucket.
double bucket_accuracy(std::span<const float> preds, std::span<const float> labels,
                       const BucketSpec& spec);

// The two binary conventions: negative/non-negative over all samples, and
// negative/positive excluding zero labels (a zero prediction counts positive).
struct Acc2Result {
    double acc_nonneg = 0.0;
    double acc_posneg = 0.0;
    bool posneg_degenerate = false; // every label was zero
    int posneg_count = 0;           // samples kept by the negative/positive convention
};
Acc2Result acc2_dual(std::span<const float> preds, std::span<const float> labels);

// Two-class F1 under both conventions: support-weighted mean of the per-class
// F1s, plus the positive-class score alone.
struct F1Result {
    double f1_nonneg = 0.0;
    double f1_posneg = 0.0;
    double f1_pos_only_nonneg = 0.0;
    double f1_pos_only_posneg = 0.0;
    bool posneg_degenerate = false;
};
F1Result f1_scores(std::span<const float> preds, std::span<const float> labels);

double mae(std::span<const float> preds, std::span<const float> labels);

struct CorrResult {
    double value = 0.0;
    bool degenerate = false; // zero variance on either side; value reported as 0
};
CorrResult pearson_corr(std::span<const float> preds, std::span<const float> labels);

struct MetricsReport {
    double acc2_nonneg = 0.0;
    double acc2_posneg = 0.0;
    double acc3 = 0.0;
    double acc5 = 0.0;
    double acc7 = 0.0;
    double f1_nonneg = 0.0;
    double f1_posneg = 0.0;
    double f1_pos_only_nonneg = 0.0;
    double f1_pos_only_posneg = 0.0;
    double mae = 0.0;
    double corr = 0.0;
    bool corr_degenerate = false;
    bool posneg_degenerate = false;
    int n = 0;
    int posneg_count = 0;
    std::vector<int> acc7_label_counts, acc7_correct_counts;
    std::vector<int> acc5_label_counts, acc5_correct_counts;
    std::vector<int> acc3_label_counts, acc3_correct_counts;

    // Canonical JSON with alphabetically ordered keys.
    std::string to_json() const;
};

MetricsReport compute_metrics(std::span<const float> preds, std::span<const float> labels,
                              const MetricsConfig& cfg);

// CSV with header "pred,label", one pair per row.
void write_pairs_csv(const std::string& path, std::span<const float> preds,
                     std::span<const float> labels);

} // namespace almt
