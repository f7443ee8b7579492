#pragma once
#include <string>
#include <vector>

#include "horai/blocks.hpp"
#include "horai/modality.hpp"
#include "horai/preproc.hpp"
#include "horai/tape.hpp"

namespace horai {

struct EncoderConfig {
    int d_ts = 128;
    int d_text = 64;
    int d_img = 64;
    int n_layers = 2;
    int n_heads = 4;
    bool freeze_ts = false;
    bool freeze_text = false;
    bool freeze_img = false;

    void validate() const {
        if (n_layers < 1) throw ConfigError("encoder depth must be >= 1");
        if (d_ts % n_heads || d_text % n_heads || d_img % n_heads)
            throw ConfigError("encoder widths must be divisible by n_heads");
    }
};

// One patch-projection encoder shared across the norm/low/mid-high streams.
class TsEncoder {
  public:
    TsEncoder(ParamStore& ps, const EncoderConfig& cfg, int patch_size, int max_patches, Rng& rng);

    // patches: N x S with N <= max_patches. Output N x d_ts.
    ValueId encode(Tape& t, const Tensor& patches) const;

    int width() const { return d_; }

  private:
    int d_, n_heads_, patch_size_, max_patches_;
    Parameter *proj_w_, *proj_b_, *pos_;
    std::vector<BlockParams> blocks_;
};

struct SeriesEmbeddings {
    ValueId e_ts, e_low, e_mh;
};

// Applies the shared encoder to the three band streams; all three must agree
// on patch count and size.
SeriesEmbeddings encode_series(Tape& t, const TsEncoder& enc, const PatchSequence& norm,
                               const PatchSequence& low, const PatchSequence& mh);

class TextEncoder {
  public:
    TextEncoder(ParamStore& ps, const EncoderConfig& cfg, int vocab_size, int max_len, Rng& rng);

    // Output: max_len x d_text; pad rows are zeroed and masked out of
    // attention.
    ValueId encode(Tape& t, const TokenizedText& text) const;

    int width() const { return d_; }

  private:
    int d_, n_heads_, vocab_size_, max_len_;
    Parameter *table_, *pos_;
    std::vector<BlockParams> blocks_;
};

class ImageEncoder {
  public:
    ImageEncoder(ParamStore& ps, const EncoderConfig& cfg, int img_h, int img_w, int patch,
                 Rng& rng);

    ValueId encode(Tape& t, const LinePlotImage& image) const;

    int width() const { return d_; }
    int num_patches() const { return n_patches_; }

  private:
    int d_, n_heads_, img_h_, img_w_, patch_, n_patches_;
    Parameter *proj_w_, *proj_b_, *pos_;
    std::vector<BlockParams> blocks_;
};

}  // namespace horai
