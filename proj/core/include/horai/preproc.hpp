#pragma once
#include <vector>

#include "horai/fft.hpp"
#include "horai/tensor.hpp"

namespace horai {

// Per-window normalization statistics, kept so predictions can be mapped back
// to the input scale.
struct NormStats {
    float mean = 0.0f;
    float std = 1.0f;  // population std, clamped from below by eps
    float eps = 1e-5f;
    bool degenerate = false;  // constant window: std underflowed to eps
};

struct Normalized {
    std::vector<float> values;
    NormStats stats;
};

// Frequency-band partition of a normalized window. The low band keeps bins
// [0, cutoff_tau), the mid-high band keeps [cutoff_tau, L/2]; the DC bin is
// always low.
struct FrequencyBandSplit {
    float alpha = 0.05f;
    int cutoff_tau = 1;
    std::vector<std::uint8_t> low_mask;      // length L/2+1
    std::vector<std::uint8_t> midhigh_mask;  // complement of low_mask
    std::vector<float> low_series;           // length L
    std::vector<float> midhigh_series;       // length L
};

struct PatchSequence {
    int patch_size = 48;
    int num_patches = 0;
    Tensor patches;  // num_patches x patch_size
};

Normalized instance_normalize(const std::vector<float>& window, float eps = 1e-5f);
std::vector<float> denormalize(const std::vector<float>& normalized, const NormStats& stats);
float denormalize_value(float v, const NormStats& stats);

FrequencyBandSplit split_frequency_bands(const std::vector<float>& normalized, float alpha);

PatchSequence patchify(const std::vector<float>& sequence, int patch_size);
std::vector<float> unpatch(const PatchSequence& ps);

// Channel-independent batch variants; results bit-identical to looping the
// univariate calls.
std::vector<Normalized> instance_normalize_channels(const std::vector<std::vector<float>>& channels,
                                                    float eps = 1e-5f);

}  // namespace horai
