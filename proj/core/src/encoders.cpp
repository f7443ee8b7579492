#include "horai/encoders.hpp"

namespace horai {

// ---------------------------------------------------------------------------
// TsEncoder
// ---------------------------------------------------------------------------

TsEncoder::TsEncoder(ParamStore& ps, const EncoderConfig& cfg, int patch_size, int max_patches,
                     Rng& rng)
    : d_(cfg.d_ts), n_heads_(cfg.n_heads), patch_size_(patch_size), max_patches_(max_patches) {
    cfg.validate();
    proj_w_ = &ps.create("ts_encoder.proj.w", {patch_size, d_}, kWeightInitStd, rng);
    proj_b_ = &ps.create_with("ts_encoder.proj.b", Tensor::zeros({1, d_}));
    pos_ = &ps.create("ts_encoder.pos", {max_patches, d_}, kWeightInitStd, rng);
    for (int l = 0; l < cfg.n_layers; ++l)
        blocks_.push_back(make_block(ps, "ts_encoder.block" + std::to_string(l), d_, 4 * d_, rng));
}

ValueId TsEncoder::encode(Tape& t, const Tensor& patches) const {
    if (patches.cols() != patch_size_)
        throw ShapeError("ts encoder expects patch size " + std::to_string(patch_size_) + ", got " +
                         std::to_string(patches.cols()));
    const int n = patches.rows();
    if (n < 1 || n > max_patches_)
        throw ShapeError("ts encoder got " + std::to_string(n) + " patches, max " +
                         std::to_string(max_patches_));
    ValueId x = linear(t, t.constant(patches), *proj_w_, proj_b_);
    x = t.add(x, t.slice_rows(t.param(*pos_), 0, n));
    for (const auto& b : blocks_) x = encoder_block(t, x, b, n_heads_, nullptr);
    return x;
}

SeriesEmbeddings encode_series(Tape& t, const TsEncoder& enc, const PatchSequence& norm,
                               const PatchSequence& low, const PatchSequence& mh) {
    if (norm.num_patches != low.num_patches || norm.num_patches != mh.num_patches ||
        norm.patch_size != low.patch_size || norm.patch_size != mh.patch_size)
        throw ShapeError("encode_series: the three patch streams disagree on N or S");
    SeriesEmbeddings out;
    out.e_ts = enc.encode(t, norm.patches);
    out.e_low = enc.encode(t, low.patches);
    out.e_mh = enc.encode(t, mh.patches);
    return out;
}

// ---------------------------------------------------------------------------
// TextEncoder
// ---------------------------------------------------------------------------

TextEncoder::TextEncoder(ParamStore& ps, const EncoderConfig& cfg, int vocab_size, int max_len,
                         Rng& rng)
    : d_(cfg.d_text), n_heads_(cfg.n_heads), vocab_size_(vocab_size), max_len_(max_len) {
    cfg.validate();
    table_ = &ps.create("text_encoder.embed", {vocab_size, d_}, kWeightInitStd, rng);
    pos_ = &ps.create("text_encoder.pos", {max_len, d_}, kWeightInitStd, rng);
    for (int l = 0; l < cfg.n_layers; ++l)
        blocks_.push_back(make_block(ps, "text_encoder.block" + std::to_string(l), d_, 4 * d_, rng));
}

ValueId TextEncoder::encode(Tape& t, const TokenizedText& text) const {
    if (static_cast<int>(text.token_ids.size()) != max_len_)
        throw ShapeError("text encoder expects length " + std::to_string(max_len_) + ", got " +
                         std::to_string(text.token_ids.size()));
    ValueId x = t.embedding(t.param(*table_), text.token_ids);
    x = t.add(x, t.param(*pos_));

    std::vector<std::uint8_t> allowed(text.token_ids.size());
    Tensor keep({max_len_, 1});
    for (std::size_t i = 0; i < text.token_ids.size(); ++i) {
        const bool real = text.token_ids[i] != text.pad_id;
        allowed[i] = real ? 1 : 0;
        keep.data[i] = real ? 1.0f : 0.0f;
    }
    for (const auto& b : blocks_) x = encoder_block(t, x, b, n_heads_, &allowed);
    // pad rows carry a zeroed output row
    return t.mul_rowwise(x, t.constant(keep));
}

// ---------------------------------------------------------------------------
// ImageEncoder
// ---------------------------------------------------------------------------

ImageEncoder::ImageEncoder(ParamStore& ps, const EncoderConfig& cfg, int img_h, int img_w,
                           int patch, Rng& rng)
    : d_(cfg.d_img), n_heads_(cfg.n_heads), img_h_(img_h), img_w_(img_w), patch_(patch) {
    cfg.validate();
    if (img_h % patch != 0 || img_w % patch != 0)
        throw ConfigError("image " + std::to_string(img_h) + "x" + std::to_string(img_w) +
                          " not divisible by patch " + std::to_string(patch));
    n_patches_ = (img_h / patch) * (img_w / patch);
    proj_w_ = &ps.create("img_encoder.proj.w", {patch * patch, d_}, kWeightInitStd, rng);
    proj_b_ = &ps.create_with("img_encoder.proj.b", Tensor::zeros({1, d_}));
    pos_ = &ps.create("img_encoder.pos", {n_patches_, d_}, kWeightInitStd, rng);
    for (int l = 0; l < cfg.n_layers; ++l)
        blocks_.push_back(make_block(ps, "img_encoder.block" + std::to_string(l), d_, 4 * d_, rng));
}

ValueId ImageEncoder::encode(Tape& t, const LinePlotImage& image) const {
    if (image.height != img_h_ || image.width != img_w_)
        throw ShapeError("image encoder expects " + std::to_string(img_h_) + "x" +
                         std::to_string(img_w_));
    const int rows = img_h_ / patch_, cols = img_w_ / patch_;
    Tensor flat({n_patches_, patch_ * patch_});
    int r = 0;
    for (int pr = 0; pr < rows; ++pr)
        for (int pc = 0; pc < cols; ++pc, ++r) {
            int k = 0;
            for (int y = 0; y < patch_; ++y)
                for (int x = 0; x < patch_; ++x, ++k)
                    flat.at(r, k) = image.at(pr * patch_ + y, pc * patch_ + x);
        }
    ValueId x = linear(t, t.constant(flat), *proj_w_, proj_b_);
    x = t.add(x, t.param(*pos_));
    for (const auto& b : blocks_) x = encoder_block(t, x, b, n_heads_, nullptr);
    return x;
}

}  // namespace horai
