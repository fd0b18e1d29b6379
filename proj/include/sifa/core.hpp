#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sifa/errors.hpp"

namespace sifa {

// Background + the four foreground structures (AA, LAC, LVC, MYO).
inline constexpr int kNumClasses = 5;
inline constexpr const char* kClassNames[kNumClasses] = {"BG", "AA", "LAC", "LVC", "MYO"};

enum class DomainTag : uint8_t {
    source,
    target,
    synthesized_target, // generator output rendered in target appearance
    reconstructed_source,
};

const char* to_string(DomainTag tag);

// Single-channel 2D intensity image. H and W must be positive multiples of 8;
// the encoder downsamples three times by 2.
struct Image {
    int h = 0;
    int w = 0;
    std::vector<float> data; // row-major, h*w
    DomainTag domain = DomainTag::source;

    Image() = default;
    Image(int h_, int w_, DomainTag d = DomainTag::source)
        : h(h_), w(w_), data(static_cast<size_t>(h_) * w_, 0.0f), domain(d) {}

    float& at(int r, int c) { return data[static_cast<size_t>(r) * w + c]; }
    float at(int r, int c) const { return data[static_cast<size_t>(r) * w + c]; }
    bool empty() const { return data.empty(); }
};

// Integer class map, entries in {0..K-1}, same extent as its paired image.
struct LabelMask {
    int h = 0;
    int w = 0;
    int num_classes = kNumClasses;
    std::vector<uint8_t> data;

    LabelMask() = default;
    LabelMask(int h_, int w_, int k = kNumClasses)
        : h(h_), w(w_), num_classes(k), data(static_cast<size_t>(h_) * w_, 0) {}

    uint8_t& at(int r, int c) { return data[static_cast<size_t>(r) * w + c]; }
    uint8_t at(int r, int c) const { return data[static_cast<size_t>(r) * w + c]; }
};

// Per-pixel class probabilities, channel-major (k, h, w).
struct SoftPrediction {
    int h = 0;
    int w = 0;
    int num_classes = kNumClasses;
    std::vector<float> probs;

    SoftPrediction() = default;
    SoftPrediction(int h_, int w_, int k)
        : h(h_), w(w_), num_classes(k), probs(static_cast<size_t>(k) * h_ * w_, 0.0f) {}

    float& at(int k, int r, int c) {
        return probs[(static_cast<size_t>(k) * h + r) * w + c];
    }
    float at(int k, int r, int c) const {
        return probs[(static_cast<size_t>(k) * h + r) * w + c];
    }
};

// Trade-off coefficients of the total objective plus the Dice-term weight
// inside the segmentation loss.
struct LossWeights {
    double lambda_adv_s = 1.0;
    double lambda_cyc = 10.0;
    double lambda_seg = 1.0;
    double lambda_adv_p = 1.0;
    double lambda_adv_s_tilde = 1.0;
    double alpha = 1.0;
};

struct Sample {
    Image image;
    std::optional<LabelMask> mask;
};

// Zero mean, unit (population) variance per slice. Constant inputs map to
// all-zeros instead of dividing by zero.
Image normalize_zscore(const Image& image);

SoftPrediction one_hot(const LabelMask& mask, int num_classes);

// Throws ConfigError naming the first offending field.
void validate_loss_weights(const LossWeights& w);

LabelMask argmax_classes(const SoftPrediction& p);

} // namespace sifa
