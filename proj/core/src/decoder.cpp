#include "horai/decoder.hpp"

#include <algorithm>
#include <numeric>

namespace horai {

std::vector<int> top_k_indices(const std::vector<float>& weights, int k) {
    std::vector<int> order(weights.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (weights[static_cast<std::size_t>(a)] != weights[static_cast<std::size_t>(b)])
            return weights[static_cast<std::size_t>(a)] > weights[static_cast<std::size_t>(b)];
        return a < b;
    });
    order.resize(static_cast<std::size_t>(k));
    return order;
}

Decoder::Decoder(ParamStore& ps, const DecoderConfig& cfg, int patch_size, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    const int d = cfg_.d_model;
    for (int l = 0; l < cfg_.n_layers; ++l) {
        const std::string prefix = "decoder.layer" + std::to_string(l);
        Layer layer;
        layer.ln_attn = make_layer_norm(ps, prefix + ".ln_attn", d);
        layer.attn = make_attention(ps, prefix + ".attn", d, rng);
        layer.ln_out = make_layer_norm(ps, prefix + ".ln_out", d);
        if (cfg_.no_moe_ffn) {
            layer.experts.push_back(make_ffn(ps, prefix + ".ffn", d, cfg_.hidden(), d, rng));
        } else {
            layer.router.temporal = make_ffn(ps, prefix + ".router.temp", d, d, d, rng);
            if (!cfg_.no_freq_router) {
                layer.router.frequency =
                    make_ffn(ps, prefix + ".router.freq", d / 2 + 1, d, d, rng);
                layer.router.gate_w =
                    &ps.create(prefix + ".router.gate.w", {2 * d, d}, kWeightInitStd, rng);
                layer.router.gate_b =
                    &ps.create_with(prefix + ".router.gate.b", Tensor::zeros({1, d}));
            }
            layer.router.logit_w =
                &ps.create(prefix + ".router.logits.w", {d, cfg_.n_experts}, kWeightInitStd, rng);
            layer.router.logit_b =
                &ps.create_with(prefix + ".router.logits.b", Tensor::zeros({1, cfg_.n_experts}));
            for (int e = 0; e < cfg_.n_experts; ++e)
                layer.experts.push_back(make_ffn(ps, prefix + ".expert" + std::to_string(e), d,
                                                 cfg_.hidden(), d, rng));
        }
        layers_.push_back(std::move(layer));
    }
    proj_w_ = &ps.create("decoder.proj.w", {d, patch_size}, kWeightInitStd, rng);
    proj_b_ = &ps.create_with("decoder.proj.b", Tensor::zeros({1, patch_size}));
}

ValueId Decoder::causal_block(Tape& t, ValueId x, int layer) const {
    const Layer& L = layers_[static_cast<std::size_t>(layer)];
    ValueId normed = layer_norm_of(t, x, L.ln_attn);
    return t.add(x, multihead_attention(t, normed, L.attn, cfg_.n_heads, /*causal=*/true, nullptr));
}

Decoder::RoutedToken Decoder::route_token(Tape& t, ValueId h_token, const Layer& layer) const {
    RoutedToken out;
    ValueId h_temp = ffn_of(t, h_token, layer.router.temporal);
    ValueId h_r;
    if (cfg_.no_freq_router) {
        h_r = h_temp;  // gate pinned to 1: temporal branch only
    } else {
        ValueId mags = t.rfft_magnitude_rows(h_token);
        ValueId h_freq = ffn_of(t, mags, layer.router.frequency);
        ValueId gate = t.sigmoid(
            linear(t, t.concat_cols(h_temp, h_freq), *layer.router.gate_w, layer.router.gate_b));
        ValueId ones = t.constant(Tensor::full({1, cfg_.d_model}, 1.0f));
        h_r = t.add(t.mul(gate, h_temp), t.mul(t.sub(ones, gate), h_freq));
    }
    ValueId logits = linear(t, h_r, *layer.router.logit_w, layer.router.logit_b);

    const Tensor& raw = t.value(logits);
    out.decision.h_r = t.value(h_r).data;
    out.decision.raw_weights = raw.data;
    out.decision.selected = top_k_indices(raw.data, cfg_.top_k);
    out.mix = t.softmax_rows(t.gather_cols(logits, out.decision.selected));
    out.decision.mix_weights = t.value(out.mix).data;
    out.logits = logits;
    return out;
}

ValueId Decoder::moe_block(Tape& t, ValueId h, int layer, std::vector<RouterDecision>* decisions,
                           std::vector<ValueId>* full_softmax) const {
    const Layer& L = layers_[static_cast<std::size_t>(layer)];
    ValueId mixture;
    if (cfg_.no_moe_ffn) {
        mixture = ffn_of(t, h, L.experts[0]);
    } else {
        const int n = t.rows(h);
        std::vector<ValueId> rows;
        rows.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            ValueId h_i = t.slice_rows(h, i, i + 1);
            RoutedToken routed = route_token(t, h_i, L);
            if (full_softmax) full_softmax->push_back(t.softmax_rows(routed.logits));
            ValueId acc;
            for (int k = 0; k < cfg_.top_k; ++k) {
                ValueId expert_out =
                    ffn_of(t, h_i, L.experts[static_cast<std::size_t>(routed.decision.selected[k])]);
                ValueId weighted = t.mul_rowwise(expert_out, t.slice_cols(routed.mix, k, k + 1));
                acc = k == 0 ? weighted : t.add(acc, weighted);
            }
            rows.push_back(acc);
            if (decisions) decisions->push_back(std::move(routed.decision));
        }
        mixture = t.stack_rows(rows);
    }
    return layer_norm_of(t, t.add(h, mixture), L.ln_out);
}

ValueId Decoder::project_tokens(Tape& t, ValueId h_final) const {
    return linear(t, h_final, *proj_w_, proj_b_);
}

Decoder::Forward Decoder::forward(Tape& t, ValueId e_fused, bool want_aux) const {
    Forward fwd;
    std::vector<ValueId> softmaxes;
    ValueId x = e_fused;
    for (int l = 0; l < cfg_.n_layers; ++l) {
        ValueId h = causal_block(t, x, l);
        x = moe_block(t, h, l, &fwd.decisions, want_aux && !cfg_.no_moe_ffn ? &softmaxes : nullptr);
    }
    fwd.h_final = x;
    fwd.predictions = project_tokens(t, x);
    if (want_aux && !softmaxes.empty()) {
        // importance penalty: M * sum_j mean_tokens(p_j)^2; uniform routing
        // minimizes it at 1.
        ValueId stacked = t.stack_rows(softmaxes);
        ValueId importance = t.scale(t.sum_rows(stacked),
                                     1.0f / static_cast<float>(softmaxes.size()));
        fwd.aux_importance =
            t.scale(t.sum_all(t.mul(importance, importance)), static_cast<float>(cfg_.n_experts));
    }
    return fwd;
}

}  // namespace horai
