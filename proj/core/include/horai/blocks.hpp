#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "horai/tape.hpp"

namespace horai {

// Parameter bundles for the tape-built transformer pieces. Pointers refer
// into a ParamStore owned by the model.
struct LayerNormParams {
    Parameter* gain = nullptr;
    Parameter* bias = nullptr;
};

struct AttentionParams {
    Parameter *wq = nullptr, *bq = nullptr;
    Parameter *wk = nullptr, *bk = nullptr;
    Parameter *wv = nullptr, *bv = nullptr;
    Parameter *wo = nullptr, *bo = nullptr;
};

struct FfnParams {
    Parameter *w1 = nullptr, *b1 = nullptr;
    Parameter *w2 = nullptr, *b2 = nullptr;
};

struct BlockParams {
    LayerNormParams ln1, ln2;
    AttentionParams attn;
    FfnParams ffn;
};

constexpr float kWeightInitStd = 0.02f;

LayerNormParams make_layer_norm(ParamStore& ps, const std::string& prefix, int d);
AttentionParams make_attention(ParamStore& ps, const std::string& prefix, int d, Rng& rng);
FfnParams make_ffn(ParamStore& ps, const std::string& prefix, int d_in, int hidden, int d_out,
                   Rng& rng);
BlockParams make_block(ParamStore& ps, const std::string& prefix, int d, int ffn_hidden, Rng& rng);

// x*W + b. b may be null.
ValueId linear(Tape& t, ValueId x, Parameter& w, Parameter* b);

ValueId layer_norm_of(Tape& t, ValueId x, const LayerNormParams& p);

// Single-head scaled dot-product attention core: softmax(QK^T * scale) V.
// `causal` restricts row i to keys j <= i; `key_allowed`, when given, drops
// keys with byte 0 for every query. Rows left with no keys output zeros.
ValueId attention_core(Tape& t, ValueId q, ValueId k, ValueId v, float scale, bool causal,
                       const std::vector<std::uint8_t>* key_allowed);

// Multi-head attention sublayer (projections + heads + output projection).
ValueId multihead_attention(Tape& t, ValueId x, const AttentionParams& p, int n_heads, bool causal,
                            const std::vector<std::uint8_t>* key_allowed);

// Two-layer gelu feed-forward.
ValueId ffn_of(Tape& t, ValueId x, const FfnParams& p);

// Pre-layer-norm residual block: x + MHA(LN(x)), then + FFN(LN(.)).
ValueId encoder_block(Tape& t, ValueId x, const BlockParams& p, int n_heads,
                      const std::vector<std::uint8_t>* key_allowed);

}  // namespace horai
