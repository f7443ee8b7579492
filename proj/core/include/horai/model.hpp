#pragma once
#include <memory>
#include <string>

#include "horai/decoder.hpp"
#include "horai/encoders.hpp"
#include "horai/fusion.hpp"
#include "horai/modality.hpp"
#include "horai/preproc.hpp"

namespace horai {

struct AblationSwitches {
    bool no_modality = false;       // fused representation is the projected series alone
    bool modality_exchange = false; // swap which band stream aligns with which modality
    bool no_moe_ffn = false;        // single FFN replaces the expert mixture
    bool no_freq_router = false;    // temporal-only router
};

enum class TextMode { kFull, kEndogenous, kExogenous, kRandom, kNone };

TextMode text_mode_from_string(const std::string& s);
std::string to_string(TextMode m);

struct ModelConfig {
    int context_len = 576;  // L
    int patch_size = 48;    // S
    float alpha = 0.05f;
    int d_model = 128;
    EncoderConfig encoder;
    int dec_layers = 6;
    int dec_heads = 4;
    int n_experts = 8;
    int top_k = 2;
    int ffn_hidden = 0;  // 0 -> 4*d_model
    int vocab_size = 4096;
    int text_len = 128;
    int img_size = 64;
    int img_patch = 8;
    AblationSwitches ablation;

    int num_patches() const { return context_len / patch_size; }
    DecoderConfig decoder_config() const;
    void validate() const;
};

// One aligned training/inference unit: three patched band streams, tokenized
// text, rasterized image, and the statistics to undo the normalization.
struct MultimodalSample {
    std::string window_id;
    Tensor patches_norm;  // N x S
    Tensor patches_low;
    Tensor patches_mh;
    TokenizedText text;
    LinePlotImage image;
    NormStats stats;
    std::string family;  // generator family tag for routing diagnostics
};

// Full deterministic synthesis of one sample from a raw window.
MultimodalSample build_sample(const std::vector<float>& raw_window, const std::string& window_id,
                              const ModelConfig& cfg, const Vocab& vocab,
                              const std::string& exogenous_text, TextMode mode,
                              std::uint64_t text_seed);

class HoraiModel {
  public:
    HoraiModel(ModelConfig cfg, std::uint64_t seed);

    struct Forward {
        ValueId predictions;  // N x S, row i predicts patch i+1
        ValueId e_fused;
        std::vector<RouterDecision> decisions;
        FlowDiagnostics flow;
        ValueId aux_importance;  // valid only when want_aux was set
    };

    Forward forward(Tape& t, const MultimodalSample& sample, bool want_aux = false) const;

    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    const ModelConfig& config() const { return cfg_; }
    std::size_t parameter_count() const { return store_.total_count(); }

  private:
    ModelConfig cfg_;
    ParamStore store_;
    std::unique_ptr<TsEncoder> ts_encoder_;
    std::unique_ptr<TextEncoder> text_encoder_;  // absent under no_modality
    std::unique_ptr<ImageEncoder> img_encoder_;  // absent under no_modality
    std::unique_ptr<FusionBlock> fusion_;        // absent under no_modality
    Parameter* ts_proj_w_ = nullptr;             // no_modality path
    Parameter* ts_proj_b_ = nullptr;
    std::unique_ptr<Decoder> decoder_;
};

}  // namespace horai
