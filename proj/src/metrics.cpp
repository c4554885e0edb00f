#include "almt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace almt {

namespace {

void require_pairs(std::span<const float> preds, std::span<const float> labels, const char* op) {
    if (preds.empty()) throw ValidationError(std::string(op) + ": empty input");
    if (preds.size() != labels.size())
        throw ValidationError(std::string(op) + ": " + std::to_string(preds.size()) +
                              " predictions vs " + std::to_string(labels.size()) + " labels");
}

double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

} // namespace

void BucketSpec::validate() const {
    if (!(lo < hi)) throw ValidationError("bucket spec: lo must be below hi");
    if (mode == Mode::round_int) {
        if (std::floor(lo) != lo || std::floor(hi) != hi)
            throw ValidationError("bucket spec: round_int requires integer lo/hi");
        if (!cuts.empty()) throw ValidationError("bucket spec: round_int takes no cut points");
    } else {
        if (cuts.empty()) throw ValidationError("bucket spec: cut_points requires cut points");
        for (std::size_t i = 0; i < cuts.size(); ++i) {
            if (cuts[i] <= lo || cuts[i] >= hi)
                throw ValidationError("bucket spec: cut " + std::to_string(cuts[i]) +
                                      " outside (lo, hi)");
            if (i > 0 && cuts[i] <= cuts[i - 1])
                throw ValidationError("bucket spec: cuts must be strictly increasing");
        }
    }
}

int BucketSpec::bucket_count() const {
    if (mode == Mode::round_int) return static_cast<int>(hi - lo) + 1;
    return static_cast<int>(cuts.size()) + 1;
}

int BucketSpec::bucket_of(double value) const {
    const double v = clamp(value, lo, hi);
    if (mode == Mode::round_int) return static_cast<int>(std::round(v) - lo);
    int idx = 0;
    for (double c : cuts)
        if (v >= c) ++idx;
    return idx;
}

double bucket_accuracy(std::span<const float> preds, std::span<const float> labels,
                       const BucketSpec& spec) {
    require_pairs(preds, labels, "bucket_accuracy");
    spec.validate();
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (spec.bucket_of(preds[i]) == spec.bucket_of(labels[i])) ++hits;
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

Acc2Result acc2_dual(std::span<const float> preds, std::span<const float> labels) {
    require_pairs(preds, labels, "acc2_dual");
    Acc2Result r;
    std::size_t hits_a = 0, hits_b = 0, n_b = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const bool pred_neg = preds[i] < 0.0f;
        if (pred_neg == (labels[i] < 0.0f)) ++hits_a;
        if (labels[i] != 0.0f) {
            ++n_b;
            if (pred_neg == (labels[i] < 0.0f)) ++hits_b;
        }
    }
    r.acc_nonneg = static_cast<double>(hits_a) / static_cast<double>(preds.size());
    r.posneg_count = static_cast<int>(n_b);
    if (n_b == 0) {
        r.posneg_degenerate = true;
        r.acc_posneg = 0.0;
    } else {
        r.acc_posneg = static_cast<double>(hits_b) / static_cast<double>(n_b);
    }
    return r;
}

namespace {

// Support-weighted two-class F1 over (pred_positive, label_positive) pairs;
// also reports the positive-class F1 alone.
struct TwoClassF1 {
    double weighted = 0.0;
    double positive = 0.0;
};

TwoClassF1 two_class_f1(const std::vector<std::pair<bool, bool>>& pairs) {
    double tp = 0, fp = 0, fn = 0, tn = 0;
    for (auto [pred_pos, label_pos] : pairs) {
        if (pred_pos && label_pos) ++tp;
        else if (pred_pos && !label_pos) ++fp;
        else if (!pred_pos && label_pos) ++fn;
        else ++tn;
    }
    auto f1_of = [](double tpc, double fpc, double fnc) {
        const double denom = 2.0 * tpc + fpc + fnc;
        return denom > 0.0 ? 2.0 * tpc / denom : 0.0;
    };
    const double f1_pos = f1_of(tp, fp, fn);
    const double f1_neg = f1_of(tn, fn, fp);
    const double support_pos = tp + fn, support_neg = tn + fp;
    const double n = support_pos + support_neg;
    TwoClassF1 out;
    out.positive = f1_pos;
    out.weighted = n > 0.0 ? (support_pos * f1_pos + support_neg * f1_neg) / n : 0.0;
    return out;
}

} // namespace

F1Result f1_scores(std::span<const float> preds, std::span<const float> labels) {
    require_pairs(preds, labels, "f1_scores");
    std::vector<std::pair<bool, bool>> nonneg, posneg;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const bool pred_pos = preds[i] >= 0.0f;
        nonneg.emplace_back(pred_pos, labels[i] >= 0.0f);
        if (labels[i] != 0.0f) posneg.emplace_back(pred_pos, labels[i] > 0.0f);
    }
    F1Result r;
    const TwoClassF1 a = two_class_f1(nonneg);
    r.f1_nonneg = a.weighted;
    r.f1_pos_only_nonneg = a.positive;
    if (posneg.empty()) {
        r.posneg_degenerate = true;
    } else {
        const TwoClassF1 b = two_class_f1(posneg);
        r.f1_posneg = b.weighted;
        r.f1_pos_only_posneg = b.positive;
    }
    return r;
}

double mae(std::span<const float> preds, std::span<const float> labels) {
    require_pairs(preds, labels, "mae");
    double s = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        s += std::abs(static_cast<double>(preds[i]) - static_cast<double>(labels[i]));
    return s / static_cast<double>(preds.size());
}

CorrResult pearson_corr(std::span<const float> preds, std::span<const float> labels) {
    require_pairs(preds, labels, "pearson_corr");
    const auto n = static_cast<double>(preds.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        mx += preds[i];
        my += labels[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double dx = preds[i] - mx, dy = labels[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    CorrResult r;
    if (sxx <= 0.0 || syy <= 0.0) {
        r.degenerate = true;
        r.value = 0.0;
    } else {
        r.value = sxy / std::sqrt(sxx * syy);
    }
    return r;
}

MetricsReport compute_metrics(std::span<const float> preds, std::span<const float> labels,
                              const MetricsConfig& cfg) {
    require_pairs(preds, labels, "compute_metrics");
    MetricsReport rep;
    rep.n = static_cast<int>(preds.size());

    const Acc2Result a2 = acc2_dual(preds, labels);
    rep.acc2_nonneg = a2.acc_nonneg;
    rep.acc2_posneg = a2.acc_posneg;
    rep.posneg_degenerate = a2.posneg_degenerate;
    rep.posneg_count = a2.posneg_count;

    const F1Result f1 = f1_scores(preds, labels);
    rep.f1_nonneg = f1.f1_nonneg;
    rep.f1_posneg = f1.f1_posneg;
    rep.f1_pos_only_nonneg = f1.f1_pos_only_nonneg;
    rep.f1_pos_only_posneg = f1.f1_pos_only_posneg;

    rep.mae = mae(preds, labels);
    const CorrResult c = pearson_corr(preds, labels);
    rep.corr = c.value;
    rep.corr_degenerate = c.degenerate;

    auto fill_buckets = [&](const BucketSpec& spec, double& acc, std::vector<int>& label_counts,
                            std::vector<int>& correct_counts) {
        spec.validate();
        acc = bucket_accuracy(preds, labels, spec);
        label_counts.assign(static_cast<std::size_t>(spec.bucket_count()), 0);
        correct_counts.assign(static_cast<std::size_t>(spec.bucket_count()), 0);
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const int lb = spec.bucket_of(labels[i]);
            ++label_counts[static_cast<std::size_t>(lb)];
            if (spec.bucket_of(preds[i]) == lb) ++correct_counts[static_cast<std::size_t>(lb)];
        }
    };
    fill_buckets(cfg.acc7, rep.acc7, rep.acc7_label_counts, rep.acc7_correct_counts);
    fill_buckets(cfg.acc5, rep.acc5, rep.acc5_label_counts, rep.acc5_correct_counts);
    fill_buckets(cfg.acc3, rep.acc3, rep.acc3_label_counts, rep.acc3_correct_counts);
    return rep;
}

std::string MetricsReport::to_json() const {
    nlohmann::json j;
    j["acc2_nonneg"] = acc2_nonneg;
    j["acc2_posneg"] = acc2_posneg;
    j["acc3"] = acc3;
    j["acc5"] = acc5;
    j["acc7"] = acc7;
    j["bucket_counts"] = {
        {"acc3", {{"labels", acc3_label_counts}, {"correct", acc3_correct_counts}}},
        {"acc5", {{"labels", acc5_label_counts}, {"correct", acc5_correct_counts}}},
        {"acc7", {{"labels", acc7_label_counts}, {"correct", acc7_correct_counts}}},
    };
    j["corr"] = corr;
    j["corr_degenerate"] = corr_degenerate;
    j["f1_nonneg"] = f1_nonneg;
    j["f1_pos_only_nonneg"] = f1_pos_only_nonneg;
    j["f1_pos_only_posneg"] = f1_pos_only_posneg;
    j["f1_posneg"] = f1_posneg;
    j["mae"] = mae;
    j["n"] = n;
    j["posneg_count"] = posneg_count;
    j["posneg_degenerate"] = posneg_degenerate;
    return j.dump();
}

void write_pairs_csv(const std::string& path, std::span<const float> preds,
                     std::span<const float> labels) {
    require_pairs(preds, labels, "write_pairs_csv");
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw ValidationError("cannot open '" + path + "' for writing");
    f << "pred,label\n";
    f.precision(9);
    for (std::size_t i = 0; i < preds.size(); ++i) f << preds[i] << "," << labels[i] << "\n";
}

} // namespace almt
