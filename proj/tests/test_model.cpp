#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "horai/checkpoint.hpp"
#include "horai/model.hpp"

using namespace horai;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.context_len = 64;
    cfg.patch_size = 16;
    cfg.alpha = 0.1f;
    cfg.d_model = 16;
    cfg.encoder.d_ts = 16;
    cfg.encoder.d_text = 8;
    cfg.encoder.d_img = 8;
    cfg.encoder.n_layers = 1;
    cfg.encoder.n_heads = 2;
    cfg.dec_layers = 1;
    cfg.dec_heads = 2;
    cfg.n_experts = 4;
    cfg.top_k = 2;
    cfg.ffn_hidden = 32;
    cfg.vocab_size = 64;
    cfg.text_len = 16;
    cfg.img_size = 16;
    cfg.img_patch = 8;
    return cfg;
}

std::vector<float> sine_window(int n, float period, unsigned seed) {
    Rng rng(seed);
    std::vector<float> x(n);
    for (int t = 0; t < n; ++t)
        x[t] = std::sin(6.2831853f * t / period) + 0.05f * rng.normal();
    return x;
}

Vocab tiny_vocab() {
    return Vocab::build({"the series shows an increasing decreasing flat trend slope per step a "
                         "dominant period of steps is present seasonal strength there no clear "
                         "seasonality volatility stationary non 0 1 2 3 4 5 6 7 8 9 16 48"},
                        64);
}

}  // namespace

TEST_CASE("sample synthesis produces aligned shapes") {
    ModelConfig cfg = tiny_config();
    Vocab vocab = tiny_vocab();
    auto sample = build_sample(sine_window(64, 16.0f, 1), "w0", cfg, vocab, "", TextMode::kFull, 7);
    CHECK(sample.patches_norm.rows() == 4);
    CHECK(sample.patches_norm.cols() == 16);
    CHECK(sample.patches_low.shape == sample.patches_norm.shape);
    CHECK(sample.patches_mh.shape == sample.patches_norm.shape);
    CHECK(static_cast<int>(sample.text.token_ids.size()) == 16);
    CHECK(sample.image.height == 16);
    // band additivity survives the patch round trip
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 16; ++j)
            CHECK(std::fabs(sample.patches_low.at(i, j) + sample.patches_mh.at(i, j) -
                            sample.patches_norm.at(i, j)) < 1e-5f);
}

TEST_CASE("text modes wire the expected channels") {
    ModelConfig cfg = tiny_config();
    Vocab vocab = tiny_vocab();
    auto window = sine_window(64, 16.0f, 2);

    auto full = build_sample(window, "w1", cfg, vocab, "storm ahead", TextMode::kFull, 7);
    auto endo = build_sample(window, "w1", cfg, vocab, "storm ahead", TextMode::kEndogenous, 7);
    auto exo = build_sample(window, "w1", cfg, vocab, "storm ahead", TextMode::kExogenous, 7);
    auto rnd = build_sample(window, "w1", cfg, vocab, "storm ahead", TextMode::kRandom, 7);
    auto none = build_sample(window, "w1", cfg, vocab, "storm ahead", TextMode::kNone, 7);

    CHECK(full.text.real_length() > endo.text.real_length());  // separator + exogenous words
    bool has_sep = false;
    for (int id : full.text.token_ids) has_sep |= id == Vocab::kSepId;
    CHECK(has_sep);
    CHECK(exo.text.real_length() == 2);
    CHECK(none.text.real_length() == 0);
    CHECK(rnd.text.real_length() == full.text.real_length());  // matched length
    auto rnd2 = build_sample(window, "w1", cfg, vocab, "storm ahead", TextMode::kRandom, 7);
    CHECK(rnd.text.token_ids == rnd2.text.token_ids);  // seeded
}

TEST_CASE("model forward has the contract shapes and is deterministic") {
    ModelConfig cfg = tiny_config();
    HoraiModel model(cfg, 11);
    Vocab vocab = tiny_vocab();
    auto sample = build_sample(sine_window(64, 16.0f, 3), "w2", cfg, vocab, "", TextMode::kFull, 7);

    Tape t1, t2;
    auto f1 = model.forward(t1, sample);
    auto f2 = model.forward(t2, sample);
    CHECK(t1.rows(f1.predictions) == 4);
    CHECK(t1.cols(f1.predictions) == 16);
    CHECK(t1.value(f1.predictions).data == t2.value(f2.predictions).data);
    CHECK_FALSE(f1.decisions.empty());
}

TEST_CASE("no_modality ignores the text and image channels entirely") {
    ModelConfig cfg = tiny_config();
    cfg.ablation.no_modality = true;
    HoraiModel model(cfg, 13);
    Vocab vocab = tiny_vocab();
    auto window = sine_window(64, 16.0f, 4);
    auto a = build_sample(window, "w3", cfg, vocab, "", TextMode::kFull, 7);
    auto b = a;
    b.text.token_ids.assign(16, Vocab::kPadId);
    for (float& p : b.image.pixels) p = 1.0f - p;

    Tape ta, tb;
    CHECK(ta.value(model.forward(ta, a).predictions).data ==
          tb.value(model.forward(tb, b).predictions).data);

    // and with the identity-initialized projection, e_fused is exactly the
    // series embedding path (no modality terms added)
    ModelConfig full_cfg = tiny_config();
    HoraiModel full(full_cfg, 13);
    CHECK(model.parameter_count() < full.parameter_count());
}

TEST_CASE("ablation parameter-count contracts") {
    ModelConfig cfg = tiny_config();
    HoraiModel full(cfg, 17);

    ModelConfig exch = cfg;
    exch.ablation.modality_exchange = true;
    HoraiModel exchanged(exch, 17);
    CHECK(exchanged.parameter_count() == full.parameter_count());

    ModelConfig nomoe = cfg;
    nomoe.ablation.no_moe_ffn = true;
    HoraiModel single(nomoe, 17);
    CHECK(single.parameter_count() < full.parameter_count());

    ModelConfig nofreq = cfg;
    nofreq.ablation.no_freq_router = true;
    HoraiModel temporal(nofreq, 17);
    CHECK(temporal.parameter_count() < full.parameter_count());
}

TEST_CASE("modality exchange changes the forward output") {
    ModelConfig cfg = tiny_config();
    HoraiModel a(cfg, 19);
    ModelConfig swapped = cfg;
    swapped.ablation.modality_exchange = true;
    HoraiModel b(swapped, 19);

    Vocab vocab = tiny_vocab();
    auto sample = build_sample(sine_window(64, 16.0f, 5), "w4", cfg, vocab, "", TextMode::kFull, 7);
    Tape ta, tb;
    CHECK(ta.value(a.forward(ta, sample).predictions).data !=
          tb.value(b.forward(tb, sample).predictions).data);
}

TEST_CASE("checkpoint round-trip reproduces the probe forward bit-identically") {
    ModelConfig cfg = tiny_config();
    HoraiModel model(cfg, 23);
    Vocab vocab = tiny_vocab();
    auto sample = build_sample(sine_window(64, 16.0f, 6), "w5", cfg, vocab, "", TextMode::kFull, 7);

    Tape t0;
    auto before = t0.value(model.forward(t0, sample).predictions).data;

    const std::string path = "/tmp/horai_test_ckpt.bin";
    save_checkpoint(model, path, model_config_to_json(cfg), "12345");

    HoraiModel reloaded(cfg, 999);  // different init seed
    auto info = load_checkpoint(reloaded, path);
    CHECK(info.rng_state == "12345");
    ModelConfig parsed = model_config_from_json(info.config_json);
    CHECK(parsed.d_model == cfg.d_model);
    CHECK(parsed.n_experts == cfg.n_experts);

    Tape t1;
    CHECK(t1.value(reloaded.forward(t1, sample).predictions).data == before);

    // save -> load -> save is byte-identical
    const std::string path2 = "/tmp/horai_test_ckpt2.bin";
    save_checkpoint(reloaded, path2, model_config_to_json(cfg), "12345");
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string c1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string c2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(c1 == c2);
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("corrupted checkpoints are rejected whole") {
    ModelConfig cfg = tiny_config();
    HoraiModel model(cfg, 29);
    const std::string path = "/tmp/horai_test_ckpt3.bin";
    save_checkpoint(model, path, "-", "-");

    // truncate the payload
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 64));
    out.close();

    HoraiModel victim(cfg, 31);
    Tape probe;
    Vocab vocab = tiny_vocab();
    auto sample = build_sample(sine_window(64, 16.0f, 8), "w6", cfg, vocab, "", TextMode::kFull, 7);
    auto before = probe.value(victim.forward(probe, sample).predictions).data;
    CHECK_THROWS_AS(load_checkpoint(victim, path), CorruptionError);
    Tape after;
    CHECK(after.value(victim.forward(after, sample).predictions).data == before);  // no partial load
    std::remove(path.c_str());
}

TEST_CASE("shape conflicts name the offending tensor") {
    ModelConfig cfg = tiny_config();
    HoraiModel model(cfg, 37);
    const std::string path = "/tmp/horai_test_ckpt4.bin";
    save_checkpoint(model, path, "-", "-");

    ModelConfig bigger = cfg;
    bigger.n_experts = 8;  // more experts, extra tensors
    HoraiModel other(bigger, 37);
    CHECK_THROWS_AS(load_checkpoint(other, path), Error);

    ModelConfig wider = cfg;
    wider.ffn_hidden = 64;  // same tensor names, different shapes
    HoraiModel other2(wider, 37);
    try {
        load_checkpoint(other2, path);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("expert") != std::string::npos);
    }
    std::remove(path.c_str());
}
