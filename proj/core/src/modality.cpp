#include "horai/modality.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "horai/fft.hpp"

namespace horai {

namespace {

// Locale-independent fixed-point formatting.
std::string format_fixed(float v, int precision) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), static_cast<double>(v),
                             std::chars_format::fixed, precision);
    return std::string(buf, res.ptr);
}

void draw_segment(LinePlotImage& img, int x0, int y0, int x1, int y1) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        img.at(y0, x0) = 1.0f;
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

}  // namespace

LinePlotImage rasterize(const std::vector<float>& window, int height, int width) {
    const int L = static_cast<int>(window.size());
    if (L < 2) throw ValueError("rasterize: window length " + std::to_string(L) + " < 2");
    if (height < 8 || width < 8)
        throw ConfigError("rasterize: canvas must be at least 8x8, got " + std::to_string(height) +
                          "x" + std::to_string(width));

    float lo = window[0], hi = window[0];
    for (float v : window) {
        if (!std::isfinite(v)) throw ValueError("rasterize: non-finite input");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const float span = hi - lo;

    LinePlotImage img;
    img.height = height;
    img.width = width;
    img.pixels.assign(static_cast<std::size_t>(height) * width, 0.0f);

    auto to_px = [&](int i) {
        const int x = static_cast<int>(
            std::lround(static_cast<double>(i) * (width - 1) / (L - 1)));
        const float norm = span > 0.0f ? (window[i] - lo) / span : 0.5f;
        const int level = static_cast<int>(std::lround(static_cast<double>(norm) * (height - 1)));
        return std::pair<int, int>(x, height - 1 - level);
    };

    auto [px, py] = to_px(0);
    for (int i = 1; i < L; ++i) {
        auto [x, y] = to_px(i);
        draw_segment(img, px, py, x, y);
        px = x;
        py = y;
    }
    return img;
}

PatternReport analyze_patterns(const std::vector<float>& window, float period_energy_threshold) {
    const int L = static_cast<int>(window.size());
    if (L < 8) throw ValueError("analyze_patterns: window length " + std::to_string(L) + " < 8");

    PatternReport rep;

    // Least-squares line fit.
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (int t = 0; t < L; ++t) {
        sx += t;
        sy += window[t];
        sxx += static_cast<double>(t) * t;
        sxy += static_cast<double>(t) * window[t];
    }
    const double denom = L * sxx - sx * sx;
    const double slope = (L * sxy - sx * sy) / denom;
    const double intercept = (sy - slope * sx) / L;
    rep.trend_slope = static_cast<float>(slope);

    // Spectral peak of the detrended residual.
    std::vector<float> resid(window.size());
    for (int t = 0; t < L; ++t)
        resid[t] = window[t] - static_cast<float>(intercept + slope * t);
    auto mag = rfft_magnitudes(resid);
    double total = 0.0;
    int peak = 0;
    double peak_energy = 0.0;
    for (std::size_t k = 1; k < mag.size(); ++k) {
        const double e = static_cast<double>(mag[k]) * mag[k];
        total += e;
        if (e > peak_energy) {
            peak_energy = e;
            peak = static_cast<int>(k);
        }
    }
    if (total > 1e-10 * L) {
        const float share = static_cast<float>(peak_energy / total);
        rep.seasonal_strength = share;
        const int period = static_cast<int>(std::lround(static_cast<double>(L) / peak));
        if (share > period_energy_threshold && period >= 2 && period <= L / 2)
            rep.dominant_period = period;
    }

    // Volatility: population std of first differences.
    double dmu = 0.0;
    for (int t = 1; t < L; ++t) dmu += window[t] - window[t - 1];
    dmu /= (L - 1);
    double dvar = 0.0;
    for (int t = 1; t < L; ++t) {
        const double d = (window[t] - window[t - 1]) - dmu;
        dvar += d * d;
    }
    rep.volatility = static_cast<float>(std::sqrt(dvar / (L - 1)));

    // Half-window variance ratio within a factor of 2.
    const int half = L / 2;
    auto var_of = [&](int a, int b) {
        double mu = 0.0;
        for (int t = a; t < b; ++t) mu += window[t];
        mu /= (b - a);
        double v = 0.0;
        for (int t = a; t < b; ++t) v += (window[t] - mu) * (window[t] - mu);
        return v / (b - a);
    };
    const double v1 = var_of(0, half), v2 = var_of(half, L);
    constexpr double kEps = 1e-12;
    if (v1 < kEps && v2 < kEps)
        rep.stationarity_flag = true;
    else
        rep.stationarity_flag = std::max(v1, v2) <= 2.0 * std::min(v1, v2) + kEps;
    return rep;
}

std::string render_endogenous_text(const PatternReport& report) {
    std::string out;
    constexpr float kSlopeThreshold = 1e-3f;
    if (report.trend_slope > kSlopeThreshold)
        out += "The series shows an increasing trend (slope " + format_fixed(report.trend_slope, 3) +
               " per step).";
    else if (report.trend_slope < -kSlopeThreshold)
        out += "The series shows a decreasing trend (slope " + format_fixed(report.trend_slope, 3) +
               " per step).";
    else
        out += "The series is flat (slope " + format_fixed(report.trend_slope, 3) + " per step).";

    if (report.dominant_period)
        out += " A dominant period of " + std::to_string(*report.dominant_period) +
               " steps is present (seasonal strength " +
               format_fixed(report.seasonal_strength, 2) + ").";
    else
        out += " There is no clear seasonality.";

    out += " Volatility is " + format_fixed(report.volatility, 3) + " per step.";
    out += report.stationarity_flag ? " The series is stationary."
                                    : " The series is non-stationary.";
    return out;
}

// ---------------------------------------------------------------------------
// Vocab and tokenizer
// ---------------------------------------------------------------------------

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string chunk;
    auto flush_runs = [&](const std::string& piece) {
        if (piece == "[sep]") {
            words.push_back(piece);
            return;
        }
        std::string run;
        for (char c : piece) {
            if (std::isalnum(static_cast<unsigned char>(c))) {
                run += c;
            } else if (!run.empty()) {
                words.push_back(run);
                run.clear();
            }
        }
        if (!run.empty()) words.push_back(run);
    };
    for (char raw : text) {
        const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!chunk.empty()) {
                flush_runs(chunk);
                chunk.clear();
            }
        } else {
            chunk += c;
        }
    }
    if (!chunk.empty()) flush_runs(chunk);
    return words;
}

void Vocab::add(const std::string& tok) {
    index_[tok] = static_cast<int>(tokens_.size());
    tokens_.push_back(tok);
}

Vocab Vocab::build(const std::vector<std::string>& corpus, int max_size) {
    if (max_size < 4) throw ConfigError("vocab size must be at least 4");
    std::map<std::string, long> counts;
    for (const auto& text : corpus)
        for (const auto& w : split_words(text))
            if (w != "[sep]") ++counts[w];

    std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;  // deterministic tie-break
    });

    Vocab v;
    v.add("<pad>");
    v.add("<unk>");
    v.add("[sep]");
    for (const auto& [tok, cnt] : ranked) {
        if (v.size() >= max_size) break;
        v.add(tok);
    }
    return v;
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open vocab file " + path);
    Vocab v;
    std::string line;
    while (std::getline(in, line)) v.add(line);
    if (v.size() < 3 || v.tokens_[0] != "<pad>" || v.tokens_[1] != "<unk>" ||
        v.tokens_[2] != "[sep]")
        throw ParseError("vocab file " + path + " missing reserved tokens");
    return v;
}

void Vocab::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write vocab file " + path);
    for (const auto& t : tokens_) out << t << "\n";
}

int Vocab::id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || id >= size()) throw IndexError("vocab id " + std::to_string(id));
    return tokens_[static_cast<std::size_t>(id)];
}

TokenizedText tokenize(const std::string& text, const Vocab& vocab, int max_len) {
    if (max_len < 1) throw ConfigError("tokenize: max_len must be positive");
    TokenizedText t;
    t.vocab_size = vocab.size();
    t.token_ids.assign(static_cast<std::size_t>(max_len), Vocab::kPadId);
    const auto words = split_words(text);
    int n = 0;
    for (const auto& w : words) {
        if (n >= max_len) break;
        t.token_ids[static_cast<std::size_t>(n++)] = vocab.id(w);
    }
    return t;
}

std::string detokenize(const TokenizedText& t, const Vocab& vocab) {
    std::string out;
    for (int id : t.token_ids) {
        if (id == Vocab::kPadId) break;
        if (!out.empty()) out += ' ';
        out += vocab.token(id);
    }
    return out;
}

TokenizedText random_tokens(int real_len, const Vocab& vocab, int max_len, Rng& rng) {
    TokenizedText t;
    t.vocab_size = vocab.size();
    t.token_ids.assign(static_cast<std::size_t>(max_len), Vocab::kPadId);
    const int n = std::min(real_len, max_len);
    const int lo = 3;  // skip reserved ids
    if (vocab.size() <= lo) throw ConfigError("vocab too small for random tokens");
    for (int i = 0; i < n; ++i)
        t.token_ids[static_cast<std::size_t>(i)] =
            lo + static_cast<int>(rng.index(static_cast<std::size_t>(vocab.size() - lo)));
    return t;
}

// ---------------------------------------------------------------------------
// Exogenous ingest
// ---------------------------------------------------------------------------

ExogenousText ingest_exogenous(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open exogenous file " + path);
    ExogenousText out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("window_id") ||
            !j.contains("text") || !j["window_id"].is_string() || !j["text"].is_string())
            throw ParseError("exogenous line " + std::to_string(lineno) +
                             ": expected {\"window_id\": str, \"text\": str}");
        const std::string id = j["window_id"].get<std::string>();
        if (out.by_window.count(id))
            out.warnings.push_back("line " + std::to_string(lineno) + ": duplicate window_id '" +
                                   id + "', keeping the later text");
        out.by_window[id] = j["text"].get<std::string>();
    }
    return out;
}

std::string combine_text(const std::string& endogenous, const std::string& exogenous) {
    if (exogenous.empty()) return endogenous;
    return endogenous + " [SEP] " + exogenous;
}

}  // namespace horai
