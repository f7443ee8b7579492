#include "horai/preproc.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace horai {

Normalized instance_normalize(const std::vector<float>& window, float eps) {
    if (window.size() < 2)
        throw ValueError("instance_normalize: window length " + std::to_string(window.size()) +
                         " < 2");
    double mu = 0.0;
    for (float v : window) {
        if (!std::isfinite(v)) throw ValueError("instance_normalize: non-finite input");
        mu += v;
    }
    mu /= static_cast<double>(window.size());
    double var = 0.0;
    for (float v : window) {
        const double d = v - mu;
        var += d * d;
    }
    var /= static_cast<double>(window.size());
    const float sigma = static_cast<float>(std::sqrt(var));

    Normalized out;
    out.stats.mean = static_cast<float>(mu);
    out.stats.eps = eps;
    out.stats.degenerate = sigma < eps;
    out.stats.std = std::max(sigma, eps);
    out.values.resize(window.size());
    const float inv = 1.0f / out.stats.std;
    for (std::size_t i = 0; i < window.size(); ++i)
        out.values[i] = (window[i] - out.stats.mean) * inv;
    return out;
}

std::vector<float> denormalize(const std::vector<float>& normalized, const NormStats& stats) {
    std::vector<float> out(normalized.size());
    for (std::size_t i = 0; i < normalized.size(); ++i)
        out[i] = normalized[i] * stats.std + stats.mean;
    return out;
}

float denormalize_value(float v, const NormStats& stats) { return v * stats.std + stats.mean; }

FrequencyBandSplit split_frequency_bands(const std::vector<float>& normalized, float alpha) {
    if (!(alpha > 0.0f) || alpha > 1.0f)
        throw ConfigError("band split alpha must be in (0,1], got " + std::to_string(alpha));
    const int L = static_cast<int>(normalized.size());
    Spectrum spec = rfft(normalized);
    const int bins = spec.bins();

    FrequencyBandSplit split;
    split.alpha = alpha;
    split.cutoff_tau = std::max(1, static_cast<int>(std::floor(alpha * static_cast<float>(bins))));
    split.low_mask.assign(static_cast<std::size_t>(bins), 0);
    split.midhigh_mask.assign(static_cast<std::size_t>(bins), 0);
    for (int k = 0; k < bins; ++k) {
        if (k < split.cutoff_tau)
            split.low_mask[static_cast<std::size_t>(k)] = 1;
        else
            split.midhigh_mask[static_cast<std::size_t>(k)] = 1;
    }

    Spectrum low = spec, mh = spec;
    for (int k = 0; k < bins; ++k) {
        if (!split.low_mask[static_cast<std::size_t>(k)]) {
            low.re[k] = 0.0f;
            low.im[k] = 0.0f;
        }
        if (!split.midhigh_mask[static_cast<std::size_t>(k)]) {
            mh.re[k] = 0.0f;
            mh.im[k] = 0.0f;
        }
    }
    split.low_series = irfft(low);
    split.midhigh_series = irfft(mh);
    (void)L;
    return split;
}

PatchSequence patchify(const std::vector<float>& sequence, int patch_size) {
    const int L = static_cast<int>(sequence.size());
    if (patch_size <= 0) throw ConfigError("patch size must be positive");
    if (L % patch_size != 0)
        throw ConfigError("sequence length " + std::to_string(L) + " not divisible by patch size " +
                          std::to_string(patch_size));
    PatchSequence ps;
    ps.patch_size = patch_size;
    ps.num_patches = L / patch_size;
    ps.patches = Tensor({ps.num_patches, patch_size});
    for (int i = 0; i < ps.num_patches; ++i)
        for (int j = 0; j < patch_size; ++j)
            ps.patches.at(i, j) = sequence[static_cast<std::size_t>(i) * patch_size + j];
    return ps;
}

std::vector<float> unpatch(const PatchSequence& ps) {
    std::vector<float> out(static_cast<std::size_t>(ps.num_patches) * ps.patch_size);
    for (int i = 0; i < ps.num_patches; ++i)
        for (int j = 0; j < ps.patch_size; ++j)
            out[static_cast<std::size_t>(i) * ps.patch_size + j] = ps.patches.at(i, j);
    return out;
}

std::vector<Normalized> instance_normalize_channels(const std::vector<std::vector<float>>& channels,
                                                    float eps) {
    std::vector<Normalized> out;
    out.reserve(channels.size());
    for (const auto& ch : channels) out.push_back(instance_normalize(ch, eps));
    return out;
}

}  // namespace horai
