#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "almt/model.hpp"
#include "almt/tensor.hpp"

namespace almt {

// Declared label range of a dataset; the on-disk code is part of the MMF
// format (0 -> [-3, 3], 1 -> [-1, 1]).
enum class LabelRange : std::uint32_t { mosi_style = 0, sims_style = 1 };

double label_range_lo(LabelRange r);
double label_range_hi(LabelRange r);
const char* label_range_name(LabelRange r);
LabelRange label_range_from_name(const std::string& name);

// One labeled multimodal instance: three feature matrices plus a sentiment
// score inside the declared range.
struct Sample {
    Tensor language; // [T_l x d_l]
    Tensor visual;   // [T_v x d_v]
    Tensor audio;    // [T_a x d_a]
    float label = 0.0f;

    const Tensor& features(Modality m) const {
        switch (m) {
            case Modality::language: return language;
            case Modality::visual: return visual;
            default: return audio;
        }
    }
};

enum class Split { train, valid, test, all };

struct Dataset {
    std::vector<Sample> samples;
    Split split = Split::all;
    LabelRange label_range = LabelRange::mosi_style;

    std::size_t size() const { return samples.size(); }

    // Validates uniform shapes and in-range finite labels; throws ValidationError.
    void validate() const;

    ModelConfig::PerModality dims() const;
    ModelConfig::PerModality lens() const;
};

// MMF, the on-disk container: magic "MMF1", u32 sample count, u32 label
// range code; then per sample a f32 label followed by language, visual and
// audio blocks, each (u32 T, u32 d, T*d f32 row-major). Little-endian
// throughout; round trips are bit-exact.
void write_mmf(const Dataset& dataset, const std::string& path);
Dataset read_mmf(const std::string& path);

// Synthetic generation. Labels are uniform in the declared range; language
// rows carry the label along fixed per-row unit directions plus N(0, 0.1^2)
// noise; each auxiliary frame carries the label with probability
// relevance_rho and is otherwise pure N(0, noise_sigma^2) noise.
struct SynthConfig {
    int n_samples = 0;
    ModelConfig::PerModality lens{8, 8, 8};
    ModelConfig::PerModality dims{32, 8, 4};
    LabelRange label_range = LabelRange::sims_style;
    double relevance_rho = 1.0;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

Dataset generate_synthetic(const SynthConfig& cfg);

struct SplitFractions {
    double train = 0.7;
    double valid = 0.15;
    double test = 0.15;
};

struct SplitResult {
    Dataset train, valid, test;
};

SplitResult split_dataset(const Dataset& dataset, const SplitFractions& fractions,
                          std::uint64_t seed);

// Index batches covering the dataset exactly once; the last batch may be
// short. No seed preserves the original order.
std::vector<std::vector<std::size_t>> iterate_batches(std::size_t n_samples, int batch_size,
                                                      std::optional<std::uint64_t> shuffle_seed);

// Copy of the sample with N(0, amplitude^2) noise added to exactly one
// feature row of the chosen modality.
Sample inject_frame_noise(const Sample& sample, Modality modality, int frame_index,
                          double amplitude, std::uint64_t seed);

} // namespace almt
