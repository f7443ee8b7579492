#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "horai/encoders.hpp"
#include "oracles.hpp"

using namespace horai;

namespace {

EncoderConfig small_cfg() {
    EncoderConfig cfg;
    cfg.d_ts = 16;
    cfg.d_text = 8;
    cfg.d_img = 8;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    return cfg;
}

PatchSequence random_patches(int n, int s, unsigned seed) {
    Rng rng(seed);
    PatchSequence ps;
    ps.patch_size = s;
    ps.num_patches = n;
    ps.patches = Tensor({n, s});
    for (float& v : ps.patches.data) v = rng.uniform(-1.0f, 1.0f);
    return ps;
}

}  // namespace

TEST_CASE("series encoder output shape follows the configuration") {
    ParamStore store;
    Rng rng(1);
    EncoderConfig cfg;
    cfg.d_ts = 128;
    TsEncoder enc(store, cfg, 48, 12, rng);
    Tape t;
    auto patches = random_patches(12, 48, 2);
    ValueId e = enc.encode(t, patches.patches);
    CHECK(t.rows(e) == 12);
    CHECK(t.cols(e) == 128);
}

TEST_CASE("the three streams share one encoder: identical inputs, identical outputs") {
    ParamStore store;
    Rng rng(3);
    TsEncoder enc(store, small_cfg(), 8, 6, rng);
    PatchSequence zero;
    zero.patch_size = 8;
    zero.num_patches = 6;
    zero.patches = Tensor::zeros({6, 8});
    Tape t;
    auto emb = encode_series(t, enc, zero, zero, zero);
    CHECK(t.value(emb.e_ts).data == t.value(emb.e_low).data);
    CHECK(t.value(emb.e_ts).data == t.value(emb.e_mh).data);
}

TEST_CASE("mismatched stream shapes are rejected") {
    ParamStore store;
    Rng rng(4);
    TsEncoder enc(store, small_cfg(), 8, 6, rng);
    auto a = random_patches(6, 8, 5);
    auto b = random_patches(4, 8, 6);
    Tape t;
    CHECK_THROWS_AS(encode_series(t, enc, a, a, b), ShapeError);
}

TEST_CASE("permuting patches changes the encoding") {
    ParamStore store;
    Rng rng(7);
    TsEncoder enc(store, small_cfg(), 8, 6, rng);
    auto patches = random_patches(4, 8, 8);
    Tensor swapped = patches.patches;
    for (int j = 0; j < 8; ++j) std::swap(swapped.at(0, j), swapped.at(1, j));
    Tape t;
    const Tensor& e1 = t.value(enc.encode(t, patches.patches));
    const Tensor& e2 = t.value(enc.encode(t, swapped));
    CHECK(e1.data != e2.data);
}

TEST_CASE("text encoder zeroes pad rows and masks them from attention") {
    ParamStore store;
    Rng rng(9);
    TextEncoder enc(store, small_cfg(), 32, 10, rng);

    TokenizedText all_pad;
    all_pad.vocab_size = 32;
    all_pad.token_ids.assign(10, Vocab::kPadId);
    Tape t;
    const Tensor& e = t.value(enc.encode(t, all_pad));
    CHECK(e.rows() == 10);
    CHECK(e.cols() == 8);
    for (float v : e.data) CHECK(v == 0.0f);

    TokenizedText text;
    text.vocab_size = 32;
    text.token_ids = {5, 7, 9, 0, 0, 0, 0, 0, 0, 0};
    const Tensor& e1 = t.value(enc.encode(t, text));
    const Tensor& e2 = t.value(enc.encode(t, text));
    CHECK(e1.data == e2.data);  // identical sequences, identical embeddings
    for (int r = 3; r < 10; ++r)
        for (int c = 0; c < 8; ++c) CHECK(e1.at(r, c) == 0.0f);

    // the pad embedding vector can never leak into any output row
    Parameter& table = store.get("text_encoder.embed");
    for (int c = 0; c < 8; ++c) table.value.at(Vocab::kPadId, c) += 10.0f;
    const Tensor& e3 = t.value(enc.encode(t, text));
    for (std::size_t i = 0; i < e1.data.size(); ++i) CHECK(e1.data[i] == e3.data[i]);
}

TEST_CASE("swapping two tokens changes their embedding rows") {
    ParamStore store;
    Rng rng(10);
    TextEncoder enc(store, small_cfg(), 32, 6, rng);
    TokenizedText a, b;
    a.token_ids = {4, 9, 2, 0, 0, 0};
    b.token_ids = {9, 4, 2, 0, 0, 0};
    Tape t;
    const Tensor& ea = t.value(enc.encode(t, a));
    const Tensor& eb = t.value(enc.encode(t, b));
    bool row0_differs = false;
    for (int c = 0; c < 8; ++c) row0_differs |= ea.at(0, c) != eb.at(0, c);
    CHECK(row0_differs);
}

TEST_CASE("out-of-vocabulary ids raise an index error") {
    ParamStore store;
    Rng rng(11);
    TextEncoder enc(store, small_cfg(), 16, 4, rng);
    TokenizedText bad;
    bad.token_ids = {3, 16, 0, 0};
    Tape t;
    CHECK_THROWS_AS(enc.encode(t, bad), IndexError);
}

TEST_CASE("image encoder patch arithmetic") {
    ParamStore store;
    Rng rng(13);
    ImageEncoder enc(store, small_cfg(), 64, 64, 8, rng);
    CHECK(enc.num_patches() == 64);

    LinePlotImage img;
    img.height = 64;
    img.width = 64;
    img.pixels.assign(64 * 64, 0.0f);
    Tape t;
    const Tensor& e = t.value(enc.encode(t, img));
    CHECK(e.rows() == 64);
    CHECK(e.cols() == 8);
    const Tensor& e2 = t.value(enc.encode(t, img));
    CHECK(e.data == e2.data);  // all-zero image is a pure function of positions
}

TEST_CASE("indivisible image dimensions are a config error") {
    ParamStore store;
    Rng rng(14);
    CHECK_THROWS_AS(ImageEncoder(store, small_cfg(), 60, 64, 8, rng), ConfigError);
}

TEST_CASE("horizontally flipped image encodes differently") {
    ParamStore store;
    Rng rng(15);
    ImageEncoder enc(store, small_cfg(), 16, 16, 8, rng);
    LinePlotImage img;
    img.height = 16;
    img.width = 16;
    img.pixels.assign(256, 0.0f);
    img.at(3, 2) = 1.0f;
    img.at(9, 5) = 1.0f;
    LinePlotImage flipped = img;
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c) flipped.at(r, c) = img.at(r, 15 - c);
    Tape t;
    CHECK(t.value(enc.encode(t, img)).data != t.value(enc.encode(t, flipped)).data);
}

TEST_CASE("gradient reaches one parameter in each unfrozen stack") {
    ParamStore store;
    Rng rng(17);
    EncoderConfig cfg = small_cfg();
    cfg.n_layers = 1;
    TsEncoder ts(store, cfg, 4, 3, rng);
    TextEncoder text(store, cfg, 16, 4, rng);
    ImageEncoder img(store, cfg, 8, 8, 8, rng);

    auto patches = random_patches(3, 4, 18);
    TokenizedText tok;
    tok.token_ids = {3, 5, 0, 0};
    LinePlotImage pic;
    pic.height = 8;
    pic.width = 8;
    pic.pixels.assign(64, 0.0f);
    pic.at(1, 1) = 1.0f;

    Tape t;
    ValueId loss = t.mean_all(t.mul(ts.encode(t, patches.patches), ts.encode(t, patches.patches)));
    loss = t.add(loss, t.mean_all(text.encode(t, tok)));
    loss = t.add(loss, t.mean_all(img.encode(t, pic)));
    t.backward(loss);
    auto grads = t.gradients();

    auto nonzero = [&](const std::string& name) {
        const Tensor& g = grads.at(name);
        for (float v : g.data)
            if (v != 0.0f) return true;
        return false;
    };
    CHECK(nonzero("ts_encoder.proj.w"));
    CHECK(nonzero("text_encoder.embed"));
    CHECK(nonzero("img_encoder.proj.w"));
}

TEST_CASE("finite differences agree for a small encoder loss") {
    ParamStore store;
    Rng rng(19);
    EncoderConfig cfg;
    cfg.d_ts = 8;
    cfg.d_text = 8;
    cfg.d_img = 8;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    TsEncoder ts(store, cfg, 4, 2, rng);
    auto patches = random_patches(2, 4, 20);
    auto res = oracles::check_gradients(store, [&](Tape& t) {
        ValueId e = ts.encode(t, patches.patches);
        return t.mean_all(t.mul(e, e));
    });
    REQUIRE_MESSAGE(res.max_rel_err < 1e-3, "worst " << res.worst);
}

TEST_CASE("freezing by prefix marks parameters untrainable") {
    ParamStore store;
    Rng rng(21);
    TextEncoder enc(store, small_cfg(), 16, 4, rng);
    store.set_trainable_prefix("text_encoder.", false);
    CHECK_FALSE(store.get("text_encoder.embed").trainable);
    CHECK_FALSE(store.get("text_encoder.block0.attn.wq").trainable);
}
