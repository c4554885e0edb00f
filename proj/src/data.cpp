#include "almt/data.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "almt/binio.hpp"

namespace almt {

double label_range_lo(LabelRange r) { return r == LabelRange::mosi_style ? -3.0 : -1.0; }
double label_range_hi(LabelRange r) { return r == LabelRange::mosi_style ? 3.0 : 1.0; }

const char* label_range_name(LabelRange r) {
    return r == LabelRange::mosi_style ? "mosi" : "sims";
}

LabelRange label_range_from_name(const std::string& name) {
    if (name == "mosi") return LabelRange::mosi_style;
    if (name == "sims") return LabelRange::sims_style;
    throw ValidationError("unknown label range '" + name + "' (valid: mosi, sims)");
}

void Dataset::validate() const {
    if (samples.empty()) return;
    const double lo = label_range_lo(label_range), hi = label_range_hi(label_range);
    const Sample& first = samples.front();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& s = samples[i];
        for (Modality m : {Modality::language, Modality::visual, Modality::audio}) {
            if (s.features(m).shape() != first.features(m).shape())
                throw ValidationError("dataset: sample " + std::to_string(i) + " " +
                                      modality_name(m) + " shape " + s.features(m).shape().str() +
                                      " differs from sample 0 " + first.features(m).shape().str());
            if (!s.features(m).all_finite())
                throw ValidationError("dataset: sample " + std::to_string(i) + " " +
                                      modality_name(m) + " contains non-finite values");
        }
        if (!std::isfinite(s.label) || s.label < lo || s.label > hi)
            throw ValidationError("dataset: sample " + std::to_string(i) + " label " +
                                  std::to_string(s.label) + " outside declared range [" +
                                  std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
}

ModelConfig::PerModality Dataset::dims() const {
    if (samples.empty()) throw ValidationError("dataset: no samples to take dims from");
    const Sample& s = samples.front();
    return {s.language.cols(), s.visual.cols(), s.audio.cols()};
}

ModelConfig::PerModality Dataset::lens() const {
    if (samples.empty()) throw ValidationError("dataset: no samples to take lengths from");
    const Sample& s = samples.front();
    return {s.language.rows(), s.visual.rows(), s.audio.rows()};
}

namespace {

constexpr char kMagic[4] = {'M', 'M', 'F', '1'};

using binio::put_f32;
using binio::put_u32;

} // namespace

void write_mmf(const Dataset& dataset, const std::string& path) {
    dataset.validate();
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, static_cast<std::uint32_t>(dataset.samples.size()));
    put_u32(out, static_cast<std::uint32_t>(dataset.label_range));
    for (const Sample& s : dataset.samples) {
        put_f32(out, s.label);
        for (Modality m : {Modality::language, Modality::visual, Modality::audio}) {
            const Tensor& t = s.features(m);
            put_u32(out, static_cast<std::uint32_t>(t.rows()));
            put_u32(out, static_cast<std::uint32_t>(t.cols()));
            for (std::int64_t i = 0; i < t.numel(); ++i) put_f32(out, t.data()[i]);
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ValidationError("mmf: cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw ValidationError("mmf: write to '" + path + "' failed");
}

Dataset read_mmf(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("mmf: cannot open '" + path + "' for reading");
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    binio::Reader r{buf, 0, "mmf"};
    r.need(4, "magic");
    if (std::memcmp(buf.data(), kMagic, 4) != 0)
        throw FormatError("mmf: bad magic at byte 0 in '" + path + "'");
    r.at = 4;
    const std::uint32_t count = r.u32("sample count");
    const std::uint32_t range_code = r.u32("label range code");
    if (range_code > 1)
        throw FormatError("mmf: unknown label range code " + std::to_string(range_code) +
                          " at byte 8");

    Dataset ds;
    ds.label_range = static_cast<LabelRange>(range_code);
    ds.samples.reserve(count);
    for (std::uint32_t si = 0; si < count; ++si) {
        Sample s;
        s.label = r.f32("label");
        for (Modality m : {Modality::language, Modality::visual, Modality::audio}) {
            const std::uint32_t rows = r.u32("block rows");
            const std::uint32_t cols = r.u32("block cols");
            if (rows == 0 || cols == 0)
                throw FormatError("mmf: zero extent in sample " + std::to_string(si) + " at byte " +
                                  std::to_string(r.at - 8));
            std::vector<float> values(static_cast<std::size_t>(rows) * cols);
            for (auto& v : values) v = r.f32("block payload");
            Tensor t = Tensor::from({static_cast<int>(rows), static_cast<int>(cols)},
                                    std::move(values));
            (m == Modality::language ? s.language : m == Modality::visual ? s.visual : s.audio) = t;
        }
        ds.samples.push_back(std::move(s));
    }
    if (r.at != buf.size())
        throw FormatError("mmf: " + std::to_string(buf.size() - r.at) +
                          " trailing bytes at byte " + std::to_string(r.at));
    ds.validate();
    return ds;
}

void SynthConfig::validate() const {
    if (n_samples < 0) throw ValidationError("synth: n_samples must be >= 0");
    if (relevance_rho < 0.0 || relevance_rho > 1.0)
        throw ValidationError("synth: relevance_rho must be in [0, 1]");
    if (noise_sigma < 0.0) throw ValidationError("synth: noise_sigma must be >= 0");
    for (Modality m : {Modality::language, Modality::visual, Modality::audio}) {
        if (dims.get(m) < 1 || lens.get(m) < 1)
            throw ValidationError(std::string("synth: dims/lens for ") + modality_name(m) +
                                  " must be positive");
    }
}

namespace {

// Per-row unit direction vectors, drawn once per dataset.
std::vector<std::vector<float>> draw_directions(int rows, int cols, Rng& rng) {
    std::vector<std::vector<float>> w(static_cast<std::size_t>(rows));
    for (auto& row : w) {
        row.resize(static_cast<std::size_t>(cols));
        double norm2 = 0.0;
        for (auto& v : row) {
            v = static_cast<float>(rng.normal());
            norm2 += static_cast<double>(v) * v;
        }
        const double inv = 1.0 / std::sqrt(std::max(norm2, 1e-30));
        for (auto& v : row) v = static_cast<float>(v * inv);
    }
    return w;
}

} // namespace

Dataset generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const double lo = label_range_lo(cfg.label_range), hi = label_range_hi(cfg.label_range);

    auto dirs_l = draw_directions(cfg.lens.language, cfg.dims.language, rng);
    auto dirs_v = draw_directions(cfg.lens.visual, cfg.dims.visual, rng);
    auto dirs_a = draw_directions(cfg.lens.audio, cfg.dims.audio, rng);

    Dataset ds;
    ds.label_range = cfg.label_range;
    ds.samples.reserve(static_cast<std::size_t>(cfg.n_samples));
    for (int si = 0; si < cfg.n_samples; ++si) {
        Sample s;
        const double y = rng.uniform(lo, hi);
        s.label = static_cast<float>(y);

        s.language = Tensor::zeros({cfg.lens.language, cfg.dims.language});
        for (int i = 0; i < cfg.lens.language; ++i)
            for (int j = 0; j < cfg.dims.language; ++j)
                s.language.at(i, j) = static_cast<float>(
                    y * dirs_l[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] +
                    rng.normal(0.0, 0.1));

        auto fill_aux = [&](Tensor& t, int rows, int cols,
                            const std::vector<std::vector<float>>& dirs) {
            t = Tensor::zeros({rows, cols});
            for (int i = 0; i < rows; ++i) {
                const bool signal = rng.uniform01() < cfg.relevance_rho;
                for (int j = 0; j < cols; ++j)
                    t.at(i, j) = signal
                                     ? static_cast<float>(
                                           y * dirs[static_cast<std::size_t>(i)]
                                                   [static_cast<std::size_t>(j)])
                                     : static_cast<float>(rng.normal(0.0, cfg.noise_sigma));
            }
        };
        fill_aux(s.visual, cfg.lens.visual, cfg.dims.visual, dirs_v);
        fill_aux(s.audio, cfg.lens.audio, cfg.dims.audio, dirs_a);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

SplitResult split_dataset(const Dataset& dataset, const SplitFractions& fractions,
                          std::uint64_t seed) {
    const double sum = fractions.train + fractions.valid + fractions.test;
    if (fractions.train <= 0.0 || fractions.valid <= 0.0 || fractions.test <= 0.0)
        throw ValidationError("split: fractions must be positive");
    if (sum > 1.0 + 1e-9) throw ValidationError("split: fractions sum to more than 1");

    const std::size_t n = dataset.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order.begin(), order.end());

    const auto n_train = static_cast<std::size_t>(fractions.train * static_cast<double>(n));
    const auto n_valid = static_cast<std::size_t>(fractions.valid * static_cast<double>(n));
    const std::size_t n_test = sum >= 1.0 - 1e-9
                                   ? n - n_train - n_valid
                                   : static_cast<std::size_t>(fractions.test * static_cast<double>(n));
    if (n_train == 0) throw ValidationError("split: train partition is empty");

    SplitResult out;
    out.train.split = Split::train;
    out.valid.split = Split::valid;
    out.test.split = Split::test;
    for (Dataset* d : {&out.train, &out.valid, &out.test}) d->label_range = dataset.label_range;
    for (std::size_t i = 0; i < n_train; ++i) out.train.samples.push_back(dataset.samples[order[i]]);
    for (std::size_t i = 0; i < n_valid; ++i)
        out.valid.samples.push_back(dataset.samples[order[n_train + i]]);
    for (std::size_t i = 0; i < n_test; ++i)
        out.test.samples.push_back(dataset.samples[order[n_train + n_valid + i]]);
    return out;
}

std::vector<std::vector<std::size_t>> iterate_batches(std::size_t n_samples, int batch_size,
                                                      std::optional<std::uint64_t> shuffle_seed) {
    if (batch_size < 1) throw ValidationError("iterate_batches: batch_size must be >= 1");
    std::vector<std::size_t> order(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) order[i] = i;
    if (shuffle_seed.has_value()) {
        Rng rng(*shuffle_seed);
        rng.shuffle(order.begin(), order.end());
    }
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t at = 0; at < n_samples; at += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(n_samples, at + static_cast<std::size_t>(batch_size));
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

Sample inject_frame_noise(const Sample& sample, Modality modality, int frame_index,
                          double amplitude, std::uint64_t seed) {
    if (amplitude < 0.0) throw ValidationError("inject_frame_noise: amplitude must be >= 0");
    Sample out = sample;
    out.language = sample.language.clone();
    out.visual = sample.visual.clone();
    out.audio = sample.audio.clone();
    Tensor& t = modality == Modality::language ? out.language
                : modality == Modality::visual ? out.visual
                                               : out.audio;
    if (frame_index < 0 || frame_index >= t.rows())
        throw ValidationError(std::string("inject_frame_noise: frame ") +
                              std::to_string(frame_index) + " out of range for " +
                              modality_name(modality) + " length " + std::to_string(t.rows()));
    if (amplitude == 0.0) return out;
    Rng rng(seed);
    for (int j = 0; j < t.cols(); ++j)
        t.at(frame_index, j) += static_cast<float>(rng.normal(0.0, amplitude));
    return out;
}

} // namespace almt
