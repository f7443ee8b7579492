#include "horai/fusion.hpp"

namespace horai {

ValueId flow_attention(Tape& t, ValueId queries, ValueId keys, ValueId values, float epsilon_flow,
                       FlowDiagnostics* diag) {
    if (t.rows(queries) < 1 || t.rows(keys) < 1)
        throw ShapeError("flow_attention: empty query or key set");
    if (t.cols(queries) != t.cols(keys) || t.cols(keys) != t.cols(values) ||
        t.rows(keys) != t.rows(values))
        throw ShapeError("flow_attention: width or key/value count mismatch");

    ValueId phi_q = t.sigmoid(queries);
    ValueId phi_k = t.sigmoid(keys);

    ValueId key_mass = t.sum_rows(phi_k);                      // [1,D]
    ValueId incoming = t.matmul(phi_q, key_mass, false, true); // [Nq,1]
    if (diag) {
        const Tensor& raw = t.value(incoming);
        for (float x : raw.data)
            if (x < epsilon_flow) ++diag->clamped_flows;
    }
    ValueId guarded = t.clamp_min(incoming, epsilon_flow);
    ValueId q_norm = t.div_rowwise(phi_q, guarded);  // phi(Q_i)/I_i

    ValueId competition = t.matmul(phi_k, t.sum_rows(q_norm), false, true);  // [Nk,1]
    ValueId soft = t.transpose(t.softmax_rows(t.transpose(competition)));    // [Nk,1]

    ValueId weighted_v = t.mul_rowwise(values, soft);         // softmax(Ohat) . V
    ValueId mixed = t.matmul(phi_k, weighted_v, true, false); // [D,D]
    return t.matmul(q_norm, mixed);                           // [Nq,D]
}

FusionBlock::FusionBlock(ParamStore& ps, int d_ts, int d_text, int d_img, int d_model, Rng& rng)
    : d_model_(d_model) {
    q_w_ = &ps.create("fusion.q_proj.w", {d_ts, d_model}, kWeightInitStd, rng);
    q_b_ = &ps.create_with("fusion.q_proj.b", Tensor::zeros({1, d_model}));
    k_text_w_ = &ps.create("fusion.k_text.w", {d_text, d_model}, kWeightInitStd, rng);
    k_text_b_ = &ps.create_with("fusion.k_text.b", Tensor::zeros({1, d_model}));
    v_text_w_ = &ps.create("fusion.v_text.w", {d_text, d_model}, kWeightInitStd, rng);
    v_text_b_ = &ps.create_with("fusion.v_text.b", Tensor::zeros({1, d_model}));
    k_img_w_ = &ps.create("fusion.k_img.w", {d_img, d_model}, kWeightInitStd, rng);
    k_img_b_ = &ps.create_with("fusion.k_img.b", Tensor::zeros({1, d_model}));
    v_img_w_ = &ps.create("fusion.v_img.w", {d_img, d_model}, kWeightInitStd, rng);
    v_img_b_ = &ps.create_with("fusion.v_img.b", Tensor::zeros({1, d_model}));
    ts_w_ = &make_series_projection(ps, d_ts, d_model, rng);
    ts_b_ = &ps.create_with("fusion.ts_proj.b", Tensor::zeros({1, d_model}));
    gate_w_ = &ps.create("fusion.gate.w", {2 * d_model, d_model}, kWeightInitStd, rng);
    gate_b_ = &ps.create_with("fusion.gate.b", Tensor::zeros({1, d_model}));
}

Parameter& FusionBlock::make_series_projection(ParamStore& ps, int d_ts, int d_model, Rng& rng) {
    if (d_ts == d_model) {
        Tensor eye({d_ts, d_model});
        for (int i = 0; i < d_ts; ++i) eye.at(i, i) = 1.0f;
        return ps.create_with("fusion.ts_proj.w", std::move(eye));
    }
    return ps.create("fusion.ts_proj.w", {d_ts, d_model}, kWeightInitStd, rng);
}

ValueId FusionBlock::project_series(Tape& t, ValueId e_ts) const {
    return linear(t, e_ts, *ts_w_, ts_b_);
}

FusionBlock::Result FusionBlock::fuse(Tape& t, ValueId e_ts, ValueId e_low, ValueId e_mh,
                                      ValueId e_text, ValueId e_img,
                                      bool modality_exchange) const {
    ValueId text_queries = modality_exchange ? e_mh : e_low;
    ValueId img_queries = modality_exchange ? e_low : e_mh;

    Result res;
    ValueId q_text = linear(t, text_queries, *q_w_, q_b_);
    ValueId k_text = linear(t, e_text, *k_text_w_, k_text_b_);
    ValueId v_text = linear(t, e_text, *v_text_w_, v_text_b_);
    res.aligned_text = flow_attention(t, q_text, k_text, v_text, epsilon_flow, &res.diag);

    ValueId q_img = linear(t, img_queries, *q_w_, q_b_);
    ValueId k_img = linear(t, e_img, *k_img_w_, k_img_b_);
    ValueId v_img = linear(t, e_img, *v_img_w_, v_img_b_);
    res.aligned_img = flow_attention(t, q_img, k_img, v_img, epsilon_flow, &res.diag);

    ValueId gate_in = t.concat_cols(res.aligned_img, res.aligned_text);
    res.gate = t.sigmoid(linear(t, gate_in, *gate_w_, gate_b_));

    const int n = t.rows(res.gate);
    ValueId ones = t.constant(Tensor::full({n, d_model_}, 1.0f));
    res.e_mm = t.add(t.mul(res.gate, res.aligned_img),
                     t.mul(t.sub(ones, res.gate), res.aligned_text));
    res.e_fused = t.add(res.e_mm, project_series(t, e_ts));
    return res;
}

}  // namespace horai
