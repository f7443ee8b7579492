#include "horai/model.hpp"

namespace horai {

TextMode text_mode_from_string(const std::string& s) {
    if (s == "full") return TextMode::kFull;
    if (s == "endogenous") return TextMode::kEndogenous;
    if (s == "exogenous") return TextMode::kExogenous;
    if (s == "random") return TextMode::kRandom;
    if (s == "none") return TextMode::kNone;
    throw ConfigError("unknown text_mode '" + s + "'");
}

std::string to_string(TextMode m) {
    switch (m) {
        case TextMode::kFull: return "full";
        case TextMode::kEndogenous: return "endogenous";
        case TextMode::kExogenous: return "exogenous";
        case TextMode::kRandom: return "random";
        case TextMode::kNone: return "none";
    }
    return "full";
}

DecoderConfig ModelConfig::decoder_config() const {
    DecoderConfig dc;
    dc.n_layers = dec_layers;
    dc.d_model = d_model;
    dc.n_heads = dec_heads;
    dc.n_experts = n_experts;
    dc.top_k = top_k;
    dc.ffn_hidden = ffn_hidden;
    dc.no_moe_ffn = ablation.no_moe_ffn;
    dc.no_freq_router = ablation.no_freq_router;
    return dc;
}

void ModelConfig::validate() const {
    if (context_len < 2 || patch_size < 1)
        throw ConfigError("context_len and patch_size must be positive");
    if (context_len % patch_size != 0)
        throw ConfigError("context length " + std::to_string(context_len) +
                          " not divisible by patch size " + std::to_string(patch_size));
    if (!(alpha > 0.0f) || alpha > 1.0f) throw ConfigError("alpha must be in (0,1]");
    if (d_model % dec_heads) throw ConfigError("d_model must be divisible by dec_heads");
    if (img_size % img_patch) throw ConfigError("img_size must be divisible by img_patch");
    if (vocab_size < 4) throw ConfigError("vocab_size too small");
    if (text_len < 1) throw ConfigError("text_len must be positive");
    encoder.validate();
    decoder_config().validate();
}

MultimodalSample build_sample(const std::vector<float>& raw_window, const std::string& window_id,
                              const ModelConfig& cfg, const Vocab& vocab,
                              const std::string& exogenous_text, TextMode mode,
                              std::uint64_t text_seed) {
    if (static_cast<int>(raw_window.size()) != cfg.context_len)
        throw ShapeError("build_sample: window length " + std::to_string(raw_window.size()) +
                         " != context " + std::to_string(cfg.context_len));
    MultimodalSample s;
    s.window_id = window_id;

    Normalized norm = instance_normalize(raw_window);
    s.stats = norm.stats;
    FrequencyBandSplit split = split_frequency_bands(norm.values, cfg.alpha);
    s.patches_norm = patchify(norm.values, cfg.patch_size).patches;
    s.patches_low = patchify(split.low_series, cfg.patch_size).patches;
    s.patches_mh = patchify(split.midhigh_series, cfg.patch_size).patches;

    s.image = rasterize(norm.values, cfg.img_size, cfg.img_size);

    // Text is described in normalized units; period and stationarity are
    // scale-free, the slope is per normalized step.
    const std::string endo = render_endogenous_text(analyze_patterns(norm.values));
    std::string channel;
    switch (mode) {
        case TextMode::kFull: channel = combine_text(endo, exogenous_text); break;
        case TextMode::kEndogenous: channel = endo; break;
        case TextMode::kExogenous: channel = exogenous_text; break;
        case TextMode::kRandom: channel.clear(); break;
        case TextMode::kNone: channel.clear(); break;
    }
    if (mode == TextMode::kRandom) {
        const int matched = tokenize(combine_text(endo, exogenous_text), vocab, cfg.text_len)
                                .real_length();
        Rng rng(Rng::mix(text_seed, std::hash<std::string>{}(window_id)));
        s.text = random_tokens(matched, vocab, cfg.text_len, rng);
    } else {
        s.text = tokenize(channel, vocab, cfg.text_len);
    }
    return s;
}

HoraiModel::HoraiModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(seed);
    ts_encoder_ = std::make_unique<TsEncoder>(store_, cfg_.encoder, cfg_.patch_size,
                                              cfg_.num_patches(), rng);
    if (cfg_.ablation.no_modality) {
        ts_proj_w_ = &FusionBlock::make_series_projection(store_, cfg_.encoder.d_ts, cfg_.d_model,
                                                          rng);
        ts_proj_b_ = &store_.create_with("fusion.ts_proj.b", Tensor::zeros({1, cfg_.d_model}));
    } else {
        text_encoder_ = std::make_unique<TextEncoder>(store_, cfg_.encoder, cfg_.vocab_size,
                                                      cfg_.text_len, rng);
        img_encoder_ = std::make_unique<ImageEncoder>(store_, cfg_.encoder, cfg_.img_size,
                                                      cfg_.img_size, cfg_.img_patch, rng);
        fusion_ = std::make_unique<FusionBlock>(store_, cfg_.encoder.d_ts, cfg_.encoder.d_text,
                                                cfg_.encoder.d_img, cfg_.d_model, rng);
    }
    decoder_ = std::make_unique<Decoder>(store_, cfg_.decoder_config(), cfg_.patch_size, rng);

    if (cfg_.encoder.freeze_ts) store_.set_trainable_prefix("ts_encoder.", false);
    if (cfg_.encoder.freeze_text) store_.set_trainable_prefix("text_encoder.", false);
    if (cfg_.encoder.freeze_img) store_.set_trainable_prefix("img_encoder.", false);
}

HoraiModel::Forward HoraiModel::forward(Tape& t, const MultimodalSample& sample,
                                        bool want_aux) const {
    PatchSequence norm{cfg_.patch_size, sample.patches_norm.rows(), sample.patches_norm};
    PatchSequence low{cfg_.patch_size, sample.patches_low.rows(), sample.patches_low};
    PatchSequence mh{cfg_.patch_size, sample.patches_mh.rows(), sample.patches_mh};
    SeriesEmbeddings series = encode_series(t, *ts_encoder_, norm, low, mh);

    Forward fwd;
    ValueId fused;
    if (cfg_.ablation.no_modality) {
        fused = linear(t, series.e_ts, *ts_proj_w_, ts_proj_b_);
    } else {
        ValueId e_text = text_encoder_->encode(t, sample.text);
        ValueId e_img = img_encoder_->encode(t, sample.image);
        auto res = fusion_->fuse(t, series.e_ts, series.e_low, series.e_mh, e_text, e_img,
                                 cfg_.ablation.modality_exchange);
        fused = res.e_fused;
        fwd.flow = res.diag;
    }
    fwd.e_fused = fused;
    auto dec = decoder_->forward(t, fused, want_aux);
    fwd.predictions = dec.predictions;
    fwd.decisions = std::move(dec.decisions);
    fwd.aux_importance = dec.aux_importance;
    return fwd;
}

}  // namespace horai
