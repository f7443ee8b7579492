#pragma once
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "horai/error.hpp"

namespace horai {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) {
        if (d < 0) throw ShapeError("negative dimension");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

// Dense row-major 32-bit float tensor. Rank 0 (scalar), 1 and 2 are used
// throughout; rank is not otherwise restricted.
struct Tensor {
    Shape shape;
    std::vector<float> data;
    bool requires_grad = false;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(shape_numel(shape), 0.0f) {}
    Tensor(Shape s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
        if (shape_numel(shape) != data.size())
            throw ShapeError("buffer size " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
    static Tensor full(Shape s, float v) {
        Tensor t(std::move(s));
        for (float& x : t.data) x = v;
        return t;
    }
    static Tensor scalar(float v) { return Tensor({1, 1}, {v}); }
    static Tensor row(std::vector<float> v) {
        int n = static_cast<int>(v.size());
        return Tensor({1, n}, std::move(v));
    }
    static Tensor col(std::vector<float> v) {
        int n = static_cast<int>(v.size());
        return Tensor({n, 1}, std::move(v));
    }

    std::size_t numel() const { return data.size(); }
    int rows() const { return shape.empty() ? 1 : shape[0]; }
    int cols() const {
        if (shape.size() < 2) return shape.empty() ? 1 : shape[0];
        return shape[1];
    }

    float& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
    float at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

// Deterministic RNG wrapper. Gaussian draws always consume exactly two engine
// words (Box-Muller without spare caching) so the engine state alone captures
// the stream position; that is what checkpoints persist.
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) : engine_(static_cast<std::mt19937::result_type>(seed)) {}

    float uniform() {  // [0, 1)
        return static_cast<float>(engine_() >> 8) * (1.0f / 16777216.0f);
    }
    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

    float normal(float mean = 0.0f, float stddev = 1.0f) {
        // u1 in (0,1] to keep log() finite.
        float u1 = (static_cast<float>(engine_() >> 8) + 1.0f) * (1.0f / 16777216.0f);
        float u2 = static_cast<float>(engine_() >> 8) * (1.0f / 16777216.0f);
        float r = std::sqrt(-2.0f * std::log(u1));
        return mean + stddev * r * std::cos(6.2831853071795865f * u2);
    }

    std::uint32_t next_u32() { return engine_(); }

    // Uniform integer in [0, n)
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

    std::mt19937& engine() { return engine_; }
    const std::mt19937& engine() const { return engine_; }

    // Derive an independent deterministic child stream; used so that per-record
    // generation does not depend on generation order.
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
        std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL + salt * 0xbf58476d1ce4e5b9ULL);
        x ^= x >> 30;
        x *= 0xbf58476d1ce4e5b9ULL;
        x ^= x >> 27;
        x *= 0x94d049bb133111ebULL;
        x ^= x >> 31;
        return x;
    }

  private:
    std::mt19937 engine_;
};

}  // namespace horai
