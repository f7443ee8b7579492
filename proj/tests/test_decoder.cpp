#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "horai/decoder.hpp"
#include "oracles.hpp"

using namespace horai;

namespace {

Tensor random_tensor(horai::Shape shape, unsigned seed, float scale = 1.0f) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    for (float& v : t.data) v = rng.uniform(-scale, scale);
    return t;
}

DecoderConfig tiny_cfg(int m = 4, int k = 2) {
    DecoderConfig cfg;
    cfg.n_layers = 1;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.n_experts = m;
    cfg.top_k = k;
    cfg.ffn_hidden = 16;
    return cfg;
}

// Forces every token to the given logits by zeroing the router input path.
void pin_router_logits(ParamStore& ps, const std::vector<float>& logits) {
    for (float& v : ps.get("decoder.layer0.router.logits.w").value.data) v = 0.0f;
    Parameter& b = ps.get("decoder.layer0.router.logits.b");
    for (std::size_t i = 0; i < logits.size(); ++i) b.value.data[i] = logits[i];
}

}  // namespace

TEST_CASE("top-k selection orders by weight with ties to the lower index") {
    CHECK(top_k_indices({2.0f, 1.0f, 3.0f}, 2) == std::vector<int>{2, 0});
    CHECK(top_k_indices({1.0f, 1.0f, 1.0f, 1.0f}, 2) == std::vector<int>{0, 1});
    CHECK(top_k_indices({-1.0f, 5.0f, 5.0f}, 1) == std::vector<int>{1});
}

TEST_CASE("hand-checked restricted softmax for logits [2,1,3], K=2") {
    ParamStore ps;
    Rng rng(1);
    Decoder dec(ps, tiny_cfg(3, 2), 4, rng);
    pin_router_logits(ps, {2.0f, 1.0f, 3.0f});
    Tape t;
    std::vector<RouterDecision> decisions;
    dec.moe_block(t, t.constant(random_tensor({2, 8}, 2)), 0, &decisions);
    REQUIRE(decisions.size() == 2);
    for (const auto& d : decisions) {
        CHECK(d.selected == std::vector<int>{2, 0});
        CHECK(d.mix_weights[0] == doctest::Approx(0.73105858).epsilon(1e-6));
        CHECK(d.mix_weights[1] == doctest::Approx(0.26894142).epsilon(1e-6));
    }
}

TEST_CASE("tied logits break toward lower indices with equal weights") {
    ParamStore ps;
    Rng rng(3);
    Decoder dec(ps, tiny_cfg(4, 2), 4, rng);
    pin_router_logits(ps, {1.0f, 1.0f, 1.0f, 1.0f});
    Tape t;
    std::vector<RouterDecision> decisions;
    dec.moe_block(t, t.constant(random_tensor({1, 8}, 4)), 0, &decisions);
    CHECK(decisions[0].selected == std::vector<int>{0, 1});
    CHECK(decisions[0].mix_weights[0] == 0.5f);
    CHECK(decisions[0].mix_weights[1] == 0.5f);
}

TEST_CASE("K equal to M reproduces the dense softmax mixture") {
    ParamStore ps;
    Rng rng(5);
    Decoder dec(ps, tiny_cfg(4, 4), 4, rng);
    Tensor h = random_tensor({3, 8}, 6);
    Tape t;
    std::vector<RouterDecision> decisions;
    ValueId out = dec.moe_block(t, t.constant(h), 0, &decisions);

    for (int i = 0; i < 3; ++i) {
        // full softmax equals the restriction when K = M
        const auto& d = decisions[static_cast<std::size_t>(i)];
        double mx = *std::max_element(d.raw_weights.begin(), d.raw_weights.end());
        double z = 0.0;
        for (float w : d.raw_weights) z += std::exp(w - mx);
        for (int k = 0; k < 4; ++k) {
            const double expect = std::exp(d.raw_weights[d.selected[k]] - mx) / z;
            CHECK(d.mix_weights[k] == doctest::Approx(expect).epsilon(1e-6));
        }

        // mixture itself matches the brute-force dense oracle (pre-residual).
        std::vector<float> h_row(8);
        for (int c = 0; c < 8; ++c) h_row[c] = h.at(i, c);
        auto ref = oracles::dense_moe_reference(h_row, d.raw_weights, ps, "decoder.layer0", 4);
        // reconstruct the mixture from the block output: out = LN(h + mix)
        // instead, recompute mix from the tape by subtracting h before LN; the
        // block is LN(h+mix), so compare through the same LN applied to the
        // oracle sum.
        std::vector<double> pre(8);
        for (int c = 0; c < 8; ++c) pre[c] = h.at(i, c) + ref[c];
        double mu = 0.0;
        for (double x : pre) mu += x;
        mu /= 8.0;
        double var = 0.0;
        for (double x : pre) var += (x - mu) * (x - mu);
        var /= 8.0;
        const Parameter& gain = ps.get("decoder.layer0.ln_out.gain");
        const Parameter& bias = ps.get("decoder.layer0.ln_out.bias");
        for (int c = 0; c < 8; ++c) {
            const double expect =
                (pre[c] - mu) / std::sqrt(var + 1e-5) * gain.value.data[c] + bias.value.data[c];
            CHECK(t.value(out).at(i, c) == doctest::Approx(expect).epsilon(0).scale(0).epsilon(1e-5));
        }
    }
}

TEST_CASE("K=1 routes each token to exactly its argmax expert") {
    ParamStore ps;
    Rng rng(7);
    Decoder dec(ps, tiny_cfg(4, 1), 4, rng);
    Tensor h = random_tensor({2, 8}, 8);
    Tape t;
    std::vector<RouterDecision> decisions;
    ValueId out = dec.moe_block(t, t.constant(h), 0, &decisions);
    for (const auto& d : decisions) {
        CHECK(d.mix_weights.size() == 1);
        CHECK(d.mix_weights[0] == 1.0f);
        const int argmax = top_k_indices(d.raw_weights, 1)[0];
        CHECK(d.selected[0] == argmax);
    }
    (void)out;
}

TEST_CASE("identical experts make routing irrelevant") {
    ParamStore ps;
    Rng rng(9);
    Decoder dec(ps, tiny_cfg(4, 2), 4, rng);
    // copy expert 0 into the rest
    for (int e = 1; e < 4; ++e)
        for (const char* leaf : {".w1", ".b1", ".w2", ".b2"})
            ps.get("decoder.layer0.expert" + std::to_string(e) + leaf).value =
                ps.get(std::string("decoder.layer0.expert0") + leaf).value;

    Tensor h = random_tensor({3, 8}, 10);
    Tape t;
    pin_router_logits(ps, {0.0f, 1.0f, 2.0f, 3.0f});
    ValueId out_a = dec.moe_block(t, t.constant(h), 0, nullptr);
    pin_router_logits(ps, {9.0f, -1.0f, 0.5f, 0.0f});
    ValueId out_b = dec.moe_block(t, t.constant(h), 0, nullptr);
    const Tensor& a = t.value(out_a);
    const Tensor& b = t.value(out_b);
    for (std::size_t i = 0; i < a.data.size(); ++i)
        CHECK(a.data[i] == doctest::Approx(b.data[i]).epsilon(1e-6));
}

TEST_CASE("mix weights form a simplex for random tokens") {
    ParamStore ps;
    Rng rng(11);
    Decoder dec(ps, tiny_cfg(8, 3), 4, rng);
    Tape t;
    std::vector<RouterDecision> decisions;
    dec.moe_block(t, t.constant(random_tensor({6, 8}, 12, 2.0f)), 0, &decisions);
    for (const auto& d : decisions) {
        float sum = 0.0f;
        for (float w : d.mix_weights) {
            CHECK(w >= 0.0f);
            sum += w;
        }
        CHECK(std::fabs(sum - 1.0f) < 1e-6f);
    }
}

TEST_CASE("attention core with one token returns its value row") {
    Tape t;
    Tensor x = random_tensor({1, 4}, 13);
    ValueId v = t.constant(x);
    ValueId out = attention_core(t, v, v, v, 0.5f, /*causal=*/true, nullptr);
    CHECK(t.value(out).data == x.data);
}

TEST_CASE("identity-projection causal attention matches the dense oracle") {
    Tape t;
    Tensor x = random_tensor({5, 4}, 14);
    ValueId v = t.constant(x);
    const float scale = 0.5f;
    const Tensor& out = t.value(attention_core(t, v, v, v, scale, /*causal=*/true, nullptr));
    for (int i = 0; i < 5; ++i) {
        // softmax over scores x_i . x_j * scale, j <= i
        std::vector<double> w(static_cast<std::size_t>(i) + 1);
        double mx = -1e300;
        for (int j = 0; j <= i; ++j) {
            double s = 0.0;
            for (int c = 0; c < 4; ++c) s += static_cast<double>(x.at(i, c)) * x.at(j, c);
            w[static_cast<std::size_t>(j)] = s * scale;
            mx = std::max(mx, w[static_cast<std::size_t>(j)]);
        }
        double z = 0.0;
        for (double& s : w) {
            s = std::exp(s - mx);
            z += s;
        }
        for (int c = 0; c < 4; ++c) {
            double expect = 0.0;
            for (int j = 0; j <= i; ++j) expect += w[static_cast<std::size_t>(j)] / z * x.at(j, c);
            CHECK(out.at(i, c) == doctest::Approx(expect).epsilon(1e-5));
        }
    }
}

TEST_CASE("suffix perturbations leave earlier decoder rows bit-identical") {
    ParamStore ps;
    Rng rng(15);
    DecoderConfig cfg = tiny_cfg(4, 2);
    cfg.n_layers = 2;
    Decoder dec(ps, cfg, 4, rng);

    Tensor base = random_tensor({6, 8}, 16);
    for (int cut = 1; cut < 6; ++cut) {
        Tensor perturbed = base;
        for (int i = cut; i < 6; ++i)
            for (int c = 0; c < 8; ++c) perturbed.at(i, c) += 0.37f * (i + c + 1);
        Tape ta, tb;
        auto fa = dec.forward(ta, ta.constant(base));
        auto fb = dec.forward(tb, tb.constant(perturbed));
        const Tensor& pa = ta.value(fa.predictions);
        const Tensor& pb = tb.value(fb.predictions);
        for (int i = 0; i < cut; ++i)
            for (int c = 0; c < 4; ++c) {
                REQUIRE_MESSAGE(pa.at(i, c) == pb.at(i, c), "cut " << cut << " row " << i);
            }
    }
}

TEST_CASE("token projection is a plain linear map with the configured shapes") {
    ParamStore ps;
    Rng rng(17);
    DecoderConfig cfg;
    cfg.n_layers = 1;
    cfg.d_model = 128;
    cfg.n_experts = 2;
    cfg.top_k = 1;
    Decoder dec(ps, cfg, 48, rng);
    Tape t;
    ValueId zero = t.constant(Tensor::zeros({12, 128}));
    const Tensor& pred = t.value(dec.project_tokens(t, zero));
    CHECK(pred.rows() == 12);
    CHECK(pred.cols() == 48);
    for (float v : pred.data) CHECK(v == 0.0f);  // zero weights times zero input, zero bias
}

TEST_CASE("only selected experts receive gradient from a token") {
    ParamStore ps;
    Rng rng(19);
    Decoder dec(ps, tiny_cfg(4, 2), 4, rng);
    Tensor h = random_tensor({1, 8}, 20);
    Tape t;
    std::vector<RouterDecision> decisions;
    ValueId out = dec.moe_block(t, t.input([&] {
                                    Tensor v = h;
                                    v.requires_grad = true;
                                    return v;
                                }()),
                                0, &decisions);
    t.backward(t.mean_all(out));
    auto grads = t.gradients();
    REQUIRE(decisions.size() == 1);
    const auto& sel = decisions[0].selected;
    for (int e = 0; e < 4; ++e) {
        const bool selected = std::find(sel.begin(), sel.end(), e) != sel.end();
        const std::string name = "decoder.layer0.expert" + std::to_string(e) + ".w1";
        bool any_nonzero = false;
        if (auto it = grads.find(name); it != grads.end())
            for (float v : it->second.data) any_nonzero |= v != 0.0f;
        CHECK(any_nonzero == selected);
    }
}

TEST_CASE("finite differences pass through route and mixture") {
    ParamStore ps;
    Rng rng(21);
    Decoder dec(ps, tiny_cfg(4, 2), 4, rng);
    Tensor h = random_tensor({2, 8}, 22);
    // spread the logits so the +/-1e-3 probes cannot flip the selection
    {
        Parameter& b = ps.get("decoder.layer0.router.logits.b");
        const float spread[4] = {0.3f, 0.1f, -0.2f, -0.4f};
        for (int e = 0; e < 4; ++e) b.value.data[e] = spread[e];
    }
    {
        Tape t;
        std::vector<RouterDecision> decisions;
        dec.moe_block(t, t.constant(h), 0, &decisions);
        for (const auto& d : decisions) {
            auto order = top_k_indices(d.raw_weights, 3);
            const float margin = d.raw_weights[order[1]] - d.raw_weights[order[2]];
            REQUIRE(margin > 0.02f);
        }
    }

    Tensor w = random_tensor({2, 8}, 23);
    auto res = oracles::check_gradients(ps, [&](Tape& t) {
        ValueId out = dec.moe_block(t, t.constant(h), 0, nullptr);
        return t.mean_all(t.mul(out, t.constant(w)));
    });
    REQUIRE_MESSAGE(res.max_rel_err < 1e-3, "worst " << res.worst);
}

TEST_CASE("no_moe_ffn and no_freq_router variants build and run") {
    ParamStore ps1;
    Rng r1(25);
    DecoderConfig plain = tiny_cfg(4, 2);
    plain.no_moe_ffn = true;
    Decoder d1(ps1, plain, 4, r1);

    ParamStore ps2;
    Rng r2(25);
    Decoder d2(ps2, tiny_cfg(4, 2), 4, r2);
    CHECK(ps1.total_count() < ps2.total_count());  // mixture replaced by one FFN

    ParamStore ps3;
    Rng r3(25);
    DecoderConfig nofreq = tiny_cfg(4, 2);
    nofreq.no_freq_router = true;
    Decoder d3(ps3, nofreq, 4, r3);

    Tensor x = random_tensor({3, 8}, 26);
    Tape t1, t3;
    CHECK(t1.value(d1.forward(t1, t1.constant(x)).predictions).rows() == 3);
    auto f3 = d3.forward(t3, t3.constant(x));
    CHECK(t3.value(f3.predictions).rows() == 3);
    CHECK_FALSE(f3.decisions.empty());
}
