#pragma once
#include <vector>

#include "horai/blocks.hpp"
#include "horai/tape.hpp"

namespace horai {

struct DecoderConfig {
    int n_layers = 6;
    int d_model = 128;
    int n_heads = 4;
    int n_experts = 8;  // M
    int top_k = 2;      // K
    int ffn_hidden = 0; // 0 -> 4 * d_model
    bool no_moe_ffn = false;      // single FFN instead of the expert mixture
    bool no_freq_router = false;  // drop the frequency branch; gate pinned to 1

    int hidden() const { return ffn_hidden > 0 ? ffn_hidden : 4 * d_model; }
    void validate() const {
        if (n_layers < 1) throw ConfigError("decoder needs at least one layer");
        if (d_model % n_heads) throw ConfigError("d_model must be divisible by n_heads");
        if (top_k < 1 || top_k > n_experts)
            throw ConfigError("top_k must satisfy 1 <= K <= n_experts");
    }
};

// Concrete routing outcome for one token at one layer.
struct RouterDecision {
    std::vector<float> h_r;          // router representation, d_model
    std::vector<float> raw_weights;  // M pre-softmax logits
    std::vector<int> selected;       // K indices, descending weight, ties to lower index
    std::vector<float> mix_weights;  // restricted softmax over selected, sums to 1
};

// Picks the K largest entries; equal weights resolve toward the lower index.
std::vector<int> top_k_indices(const std::vector<float>& weights, int k);

class Decoder {
  public:
    Decoder(ParamStore& ps, const DecoderConfig& cfg, int patch_size, Rng& rng);

    struct Forward {
        ValueId h_final;      // N x d_model after the last block
        ValueId predictions;  // N x S next-patch predictions
        std::vector<RouterDecision> decisions;  // layer-major, token-minor
        ValueId aux_importance;  // load-balance penalty; valid only when requested
    };

    Forward forward(Tape& t, ValueId e_fused, bool want_aux = false) const;

    // Pieces exposed for direct testing.
    ValueId causal_block(Tape& t, ValueId x, int layer) const;  // x + MHA(LN(x)), causal
    ValueId moe_block(Tape& t, ValueId h, int layer, std::vector<RouterDecision>* decisions,
                      std::vector<ValueId>* full_softmax = nullptr) const;
    ValueId project_tokens(Tape& t, ValueId h_final) const;

    const DecoderConfig& config() const { return cfg_; }

  private:
    struct RouterParams {
        FfnParams temporal;
        FfnParams frequency;  // unset when no_freq_router
        Parameter *gate_w = nullptr, *gate_b = nullptr;
        Parameter *logit_w = nullptr, *logit_b = nullptr;
    };
    struct Layer {
        LayerNormParams ln_attn;
        AttentionParams attn;
        LayerNormParams ln_out;
        RouterParams router;
        std::vector<FfnParams> experts;  // M entries; a single entry when no_moe_ffn
    };

    struct RoutedToken {
        RouterDecision decision;
        ValueId mix;     // [1, K] on the tape
        ValueId logits;  // [1, M] pre-softmax router weights
    };
    RoutedToken route_token(Tape& t, ValueId h_token, const Layer& layer) const;

    DecoderConfig cfg_;
    Parameter *proj_w_, *proj_b_;
    std::vector<Layer> layers_;
};

}  // namespace horai
