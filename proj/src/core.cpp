#include "sifa/core.hpp"

#include <cmath>

namespace sifa {

const char* to_string(DomainTag tag) {
    switch (tag) {
        case DomainTag::source: return "source";
        case DomainTag::target: return "target";
        case DomainTag::synthesized_target: return "synthesized_target";
        case DomainTag::reconstructed_source: return "reconstructed_source";
    }
    return "?";
}

Image normalize_zscore(const Image& image) {
    if (image.empty()) throw InvalidInput("normalize_zscore: empty image");
    const size_t n = image.data.size();
    double mean = 0.0;
    for (float v : image.data) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (float v : image.data) {
        const double d = v - mean;
        var += d * d;
    }
    var /= static_cast<double>(n);

    Image out(image.h, image.w, image.domain);
    if (var == 0.0) return out; // constant slice: all zeros
    const double inv = 1.0 / std::sqrt(var);
    for (size_t i = 0; i < n; ++i)
        out.data[i] = static_cast<float>((image.data[i] - mean) * inv);
    return out;
}

SoftPrediction one_hot(const LabelMask& mask, int num_classes) {
    SoftPrediction out(mask.h, mask.w, num_classes);
    for (int r = 0; r < mask.h; ++r) {
        for (int c = 0; c < mask.w; ++c) {
            const int label = mask.at(r, c);
            if (label >= num_classes)
                throw InvalidInput("one_hot: label " + std::to_string(label) +
                                   " >= K=" + std::to_string(num_classes) + " at (" +
                                   std::to_string(r) + "," + std::to_string(c) + ")");
            out.at(label, r, c) = 1.0f;
        }
    }
    return out;
}

void validate_loss_weights(const LossWeights& w) {
    auto check = [](double v, const char* name) {
        if (!(v >= 0.0)) throw ConfigError(name, std::string(name) + " must be nonnegative");
    };
    check(w.lambda_adv_s, "lambda_adv_s");
    check(w.lambda_cyc, "lambda_cyc");
    check(w.lambda_seg, "lambda_seg");
    check(w.lambda_adv_p, "lambda_adv_p");
    check(w.lambda_adv_s_tilde, "lambda_adv_s_tilde");
    check(w.alpha, "alpha");
    if (w.lambda_seg == 0.0)
        throw ConfigError("lambda_seg", "lambda_seg must be positive: without it no supervised signal exists");
}

LabelMask argmax_classes(const SoftPrediction& p) {
    LabelMask out(p.h, p.w, p.num_classes);
    for (int r = 0; r < p.h; ++r) {
        for (int c = 0; c < p.w; ++c) {
            int best = 0;
            float bv = p.at(0, r, c);
            for (int k = 1; k < p.num_classes; ++k) {
                const float v = p.at(k, r, c);
                if (v > bv) {
                    bv = v;
                    best = k;
                }
            }
            out.at(r, c) = static_cast<uint8_t>(best);
        }
    }
    return out;
}

} // namespace sifa
