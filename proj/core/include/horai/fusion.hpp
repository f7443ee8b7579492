#pragma once
#include "horai/blocks.hpp"
#include "horai/tape.hpp"

namespace horai {

struct FlowDiagnostics {
    int clamped_flows = 0;  // incoming-flow entries that hit the epsilon guard
};

// Linear-complexity flow attention. phi = elementwise sigmoid. Per query i
// and key j:
//   I_i    = phi(Q_i) . sum_j phi(K_j)          (incoming flow, eps-clamped)
//   O_j    = phi(K_j) . sum_i phi(Q_i)          (outgoing flow, diagnostic)
//   Ohat_j = phi(K_j) . sum_i phi(Q_i)/I_i      (competition)
//   out_i  = (phi(Q_i)/I_i) (phi(K)^T (softmax_j(Ohat) . V))
// Never materializes an Nq x Nk matrix; cost is O((Nq+Nk) D + D^2).
ValueId flow_attention(Tape& t, ValueId queries, ValueId keys, ValueId values,
                       float epsilon_flow = 1e-6f, FlowDiagnostics* diag = nullptr);

// Cross-modal alignment (shared query projection from the band streams) and
// the adaptive gated fusion producing E_fused.
class FusionBlock {
  public:
    FusionBlock(ParamStore& ps, int d_ts, int d_text, int d_img, int d_model, Rng& rng);

    struct Result {
        ValueId e_fused;
        ValueId aligned_text;
        ValueId aligned_img;
        ValueId e_mm;  // gated img/text mix before the series term; diagnostic
        ValueId gate;
        FlowDiagnostics diag;
    };

    // modality_exchange swaps which band stream queries which modality.
    Result fuse(Tape& t, ValueId e_ts, ValueId e_low, ValueId e_mh, ValueId e_text, ValueId e_img,
                bool modality_exchange = false) const;

    // The learned d_ts -> d_model map on its own; the no-modality path is
    // exactly this projection.
    ValueId project_series(Tape& t, ValueId e_ts) const;

    static Parameter& make_series_projection(ParamStore& ps, int d_ts, int d_model, Rng& rng);

    float epsilon_flow = 1e-6f;

  private:
    int d_model_;
    Parameter *q_w_, *q_b_;
    Parameter *k_text_w_, *k_text_b_, *v_text_w_, *v_text_b_;
    Parameter *k_img_w_, *k_img_b_, *v_img_w_, *v_img_b_;
    Parameter *ts_w_, *ts_b_;
    Parameter *gate_w_, *gate_b_;
};

}  // namespace horai
