#include "horai/blocks.hpp"

#include <cmath>

namespace horai {

LayerNormParams make_layer_norm(ParamStore& ps, const std::string& prefix, int d) {
    LayerNormParams p;
    p.gain = &ps.create_with(prefix + ".gain", Tensor::full({1, d}, 1.0f));
    p.bias = &ps.create_with(prefix + ".bias", Tensor::zeros({1, d}));
    return p;
}

AttentionParams make_attention(ParamStore& ps, const std::string& prefix, int d, Rng& rng) {
    AttentionParams p;
    p.wq = &ps.create(prefix + ".wq", {d, d}, kWeightInitStd, rng);
    p.bq = &ps.create_with(prefix + ".bq", Tensor::zeros({1, d}));
    p.wk = &ps.create(prefix + ".wk", {d, d}, kWeightInitStd, rng);
    p.bk = &ps.create_with(prefix + ".bk", Tensor::zeros({1, d}));
    p.wv = &ps.create(prefix + ".wv", {d, d}, kWeightInitStd, rng);
    p.bv = &ps.create_with(prefix + ".bv", Tensor::zeros({1, d}));
    p.wo = &ps.create(prefix + ".wo", {d, d}, kWeightInitStd, rng);
    p.bo = &ps.create_with(prefix + ".bo", Tensor::zeros({1, d}));
    return p;
}

FfnParams make_ffn(ParamStore& ps, const std::string& prefix, int d_in, int hidden, int d_out,
                   Rng& rng) {
    FfnParams p;
    p.w1 = &ps.create(prefix + ".w1", {d_in, hidden}, kWeightInitStd, rng);
    p.b1 = &ps.create_with(prefix + ".b1", Tensor::zeros({1, hidden}));
    p.w2 = &ps.create(prefix + ".w2", {hidden, d_out}, kWeightInitStd, rng);
    p.b2 = &ps.create_with(prefix + ".b2", Tensor::zeros({1, d_out}));
    return p;
}

BlockParams make_block(ParamStore& ps, const std::string& prefix, int d, int ffn_hidden,
                       Rng& rng) {
    BlockParams p;
    p.ln1 = make_layer_norm(ps, prefix + ".ln1", d);
    p.ln2 = make_layer_norm(ps, prefix + ".ln2", d);
    p.attn = make_attention(ps, prefix + ".attn", d, rng);
    p.ffn = make_ffn(ps, prefix + ".ffn", d, ffn_hidden, d, rng);
    return p;
}

ValueId linear(Tape& t, ValueId x, Parameter& w, Parameter* b) {
    ValueId y = t.matmul(x, t.param(w));
    if (b) y = t.add_rowvec(y, t.param(*b));
    return y;
}

ValueId layer_norm_of(Tape& t, ValueId x, const LayerNormParams& p) {
    return t.layer_norm(x, t.param(*p.gain), t.param(*p.bias));
}

ValueId attention_core(Tape& t, ValueId q, ValueId k, ValueId v, float scale, bool causal,
                       const std::vector<std::uint8_t>* key_allowed) {
    const int nq = t.rows(q);
    const int nk = t.rows(k);
    ValueId scores = t.scale(t.matmul(q, k, false, true), scale);
    if (!causal && !key_allowed) return t.matmul(t.softmax_rows(scores), v);

    std::vector<std::uint8_t> mask(static_cast<std::size_t>(nq) * nk, 1);
    for (int i = 0; i < nq; ++i)
        for (int j = 0; j < nk; ++j) {
            bool ok = true;
            if (causal) ok = j <= i;
            if (ok && key_allowed) ok = (*key_allowed)[static_cast<std::size_t>(j)] != 0;
            mask[static_cast<std::size_t>(i) * nk + j] = ok ? 1 : 0;
        }
    return t.matmul(t.masked_softmax_rows(scores, mask), v);
}

ValueId multihead_attention(Tape& t, ValueId x, const AttentionParams& p, int n_heads, bool causal,
                            const std::vector<std::uint8_t>* key_allowed) {
    const int d = t.cols(x);
    if (d % n_heads != 0) throw ConfigError("width not divisible by head count");
    const int dh = d / n_heads;
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

    ValueId q = linear(t, x, *p.wq, p.bq);
    ValueId k = linear(t, x, *p.wk, p.bk);
    ValueId v = linear(t, x, *p.wv, p.bv);

    ValueId heads;
    for (int h = 0; h < n_heads; ++h) {
        ValueId qh = t.slice_cols(q, h * dh, (h + 1) * dh);
        ValueId kh = t.slice_cols(k, h * dh, (h + 1) * dh);
        ValueId vh = t.slice_cols(v, h * dh, (h + 1) * dh);
        ValueId ctx = attention_core(t, qh, kh, vh, scale, causal, key_allowed);
        heads = h == 0 ? ctx : t.concat_cols(heads, ctx);
    }
    return linear(t, heads, *p.wo, p.bo);
}

ValueId ffn_of(Tape& t, ValueId x, const FfnParams& p) {
    ValueId h = t.gelu(linear(t, x, *p.w1, p.b1));
    return linear(t, h, *p.w2, p.b2);
}

ValueId encoder_block(Tape& t, ValueId x, const BlockParams& p, int n_heads,
                      const std::vector<std::uint8_t>* key_allowed) {
    ValueId a = t.add(x, multihead_attention(t, layer_norm_of(t, x, p.ln1), p.attn, n_heads,
                                             /*causal=*/false, key_allowed));
    return t.add(a, ffn_of(t, layer_norm_of(t, a, p.ln2), p.ffn));
}

}  // namespace horai
