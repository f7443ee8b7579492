#pragma once
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "horai/tensor.hpp"

namespace horai {

// Grayscale line plot of one window. 1.0 = line, 0.0 = background.
struct LinePlotImage {
    int height = 64;
    int width = 64;
    std::vector<float> pixels;  // row-major, height*width

    float& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * width + c]; }
    float at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * width + c]; }
};

// Min-max scales the window to [0, height-1] (larger values on higher rows),
// spreads x uniformly over [0, width-1] and connects consecutive points with
// Bresenham segments. A constant window draws the mid-height row
// (height-1)/2 rounded half away from zero, then flipped: row 3 on an 8-row
// canvas.
LinePlotImage rasterize(const std::vector<float>& window, int height = 64, int width = 64);

// Summary statistics feeding the endogenous text.
struct PatternReport {
    float trend_slope = 0.0f;               // least-squares slope per step
    std::optional<int> dominant_period;     // in [2, L/2] when present
    float seasonal_strength = 0.0f;         // spectral energy share of the peak bin
    float volatility = 0.0f;                // std of first differences
    bool stationarity_flag = true;          // half-window variance ratio within factor 2
};

// Period detection runs on the detrended window so a pure trend does not
// masquerade as bin-1 seasonality. A period is declared when the peak non-DC
// bin holds more than `period_energy_threshold` of the non-DC energy.
PatternReport analyze_patterns(const std::vector<float>& window,
                               float period_energy_threshold = 0.2f);

std::string render_endogenous_text(const PatternReport& report);

// ---------------------------------------------------------------------------
// Text channel
// ---------------------------------------------------------------------------

// Frequency-ranked word-piece vocabulary with three reserved ids. Stored as
// UTF-8 text, one token per line; the line number is the id.
class Vocab {
  public:
    static constexpr int kPadId = 0;
    static constexpr int kUnkId = 1;
    static constexpr int kSepId = 2;

    static Vocab build(const std::vector<std::string>& corpus, int max_size = 4096);
    static Vocab load(const std::string& path);
    void save(const std::string& path) const;

    int id(const std::string& token) const;  // kUnkId when absent
    const std::string& token(int id) const;
    int size() const { return static_cast<int>(tokens_.size()); }

  private:
    std::vector<std::string> tokens_;
    std::map<std::string, int> index_;
    void add(const std::string& tok);
};

// Lowercases and splits into alphanumeric runs; "[sep]" survives as a single
// token. Punctuation separates and is dropped.
std::vector<std::string> split_words(const std::string& text);

struct TokenizedText {
    std::vector<int> token_ids;  // fixed length, pad-suffixed
    int vocab_size = 0;
    int pad_id = Vocab::kPadId;
    int unk_id = Vocab::kUnkId;

    int real_length() const {
        int n = 0;
        while (n < static_cast<int>(token_ids.size()) && token_ids[n] != pad_id) ++n;
        return n;
    }
};

TokenizedText tokenize(const std::string& text, const Vocab& vocab, int max_len = 128);
std::string detokenize(const TokenizedText& t, const Vocab& vocab);

// Seeded random token ids (reserved ids excluded), for the random-text
// ablation channel.
TokenizedText random_tokens(int real_len, const Vocab& vocab, int max_len, Rng& rng);

// ---------------------------------------------------------------------------
// Exogenous ingest
// ---------------------------------------------------------------------------

struct ExogenousText {
    std::map<std::string, std::string> by_window;  // window_id -> text
    std::vector<std::string> warnings;
};

// JSONL, one {"window_id": ..., "text": ...} object per line. Malformed lines
// raise ParseError naming the line; duplicate ids keep the last value and are
// reported in warnings.
ExogenousText ingest_exogenous(const std::string& path);

// endo + " [SEP] " + exo; just endo when exo is empty.
std::string combine_text(const std::string& endogenous, const std::string& exogenous);

}  // namespace horai
