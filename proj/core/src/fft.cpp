#include "horai/fft.hpp"

#include <cmath>
#include <cstdint>
#include <mutex>
#include <unordered_map>

namespace horai {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// Iterative radix-2 Cooley-Tukey. a.size() must be a power of two.
void fft_pow2(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                std::complex<double> u = a[i + k];
                std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        const double inv = 1.0 / static_cast<double>(n);
        for (auto& x : a) x *= inv;
    }
}

struct BluesteinPlan {
    std::vector<std::complex<double>> chirp;      // w_n = exp(-i*pi*n^2/L)
    std::vector<std::complex<double>> filter_fft; // FFT of the padded conjugate chirp
    std::size_t m = 0;                            // convolution length (power of two)
};

// Plans are immutable once built; the cache is guarded for concurrent forward
// evaluation.
const BluesteinPlan& bluestein_plan(std::size_t n) {
    static std::mutex mu;
    static std::unordered_map<std::size_t, BluesteinPlan> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;

    BluesteinPlan plan;
    plan.m = next_pow2(2 * n - 1);
    plan.chirp.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        // k^2 mod 2n keeps the angle argument small for large k.
        const std::uint64_t k2 = (static_cast<std::uint64_t>(k) * k) % (2 * n);
        const double ang = kPi * static_cast<double>(k2) / static_cast<double>(n);
        plan.chirp[k] = std::complex<double>(std::cos(ang), -std::sin(ang));
    }
    std::vector<std::complex<double>> filt(plan.m, {0.0, 0.0});
    filt[0] = std::conj(plan.chirp[0]);
    for (std::size_t k = 1; k < n; ++k) {
        filt[k] = std::conj(plan.chirp[k]);
        filt[plan.m - k] = std::conj(plan.chirp[k]);
    }
    fft_pow2(filt, false);
    plan.filter_fft = std::move(filt);
    return cache.emplace(n, std::move(plan)).first->second;
}

void fft_bluestein(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    const BluesteinPlan& plan = bluestein_plan(n);

    if (inverse)
        for (auto& x : a) x = std::conj(x);

    std::vector<std::complex<double>> buf(plan.m, {0.0, 0.0});
    for (std::size_t k = 0; k < n; ++k) buf[k] = a[k] * plan.chirp[k];
    fft_pow2(buf, false);
    for (std::size_t k = 0; k < plan.m; ++k) buf[k] *= plan.filter_fft[k];
    fft_pow2(buf, true);
    for (std::size_t k = 0; k < n; ++k) a[k] = buf[k] * plan.chirp[k];

    if (inverse) {
        const double inv = 1.0 / static_cast<double>(n);
        for (auto& x : a) x = std::conj(x) * inv;
    }
}

}  // namespace

void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
    if (a.size() < 2) return;  // DFT of a single point is the identity
    if (is_pow2(a.size()))
        fft_pow2(a, inverse);
    else
        fft_bluestein(a, inverse);
}

Spectrum rfft(const std::vector<float>& signal) {
    const int L = static_cast<int>(signal.size());
    if (L < 2) throw ValueError("rfft: signal length " + std::to_string(L) + " < 2");

    std::vector<std::complex<double>> a(signal.size());
    for (std::size_t i = 0; i < signal.size(); ++i) a[i] = {static_cast<double>(signal[i]), 0.0};
    fft_inplace(a, false);

    Spectrum s;
    s.length = L;
    const int bins = s.bins();
    s.re.resize(bins);
    s.im.resize(bins);
    for (int k = 0; k < bins; ++k) {
        s.re[k] = static_cast<float>(a[k].real());
        s.im[k] = static_cast<float>(a[k].imag());
    }
    // Exact by conjugate symmetry of a real signal; clear the float residue.
    s.im[0] = 0.0f;
    if (s.has_nyquist()) s.im[bins - 1] = 0.0f;
    return s;
}

std::vector<float> irfft(const Spectrum& spectrum) {
    const int L = spectrum.length;
    if (L < 2) throw ValueError("irfft: spectrum length " + std::to_string(L) + " < 2");
    const int bins = L / 2 + 1;
    if (static_cast<int>(spectrum.re.size()) != bins || static_cast<int>(spectrum.im.size()) != bins)
        throw ValueError("irfft: expected " + std::to_string(bins) + " coefficients, got " +
                         std::to_string(spectrum.re.size()));

    float scale = 0.0f;
    for (int k = 0; k < bins; ++k)
        scale = std::max({scale, std::fabs(spectrum.re[k]), std::fabs(spectrum.im[k])});
    const float tol = 1e-6f * std::max(1.0f, scale);
    if (std::fabs(spectrum.im[0]) > tol)
        throw ValueError("irfft: DC coefficient has nonzero imaginary part");
    if (spectrum.has_nyquist() && std::fabs(spectrum.im[bins - 1]) > tol)
        throw ValueError("irfft: Nyquist coefficient has nonzero imaginary part");

    std::vector<std::complex<double>> a(static_cast<std::size_t>(L));
    for (int k = 0; k < bins; ++k)
        a[k] = {static_cast<double>(spectrum.re[k]), static_cast<double>(spectrum.im[k])};
    for (int k = bins; k < L; ++k) a[k] = std::conj(a[L - k]);
    fft_inplace(a, true);

    std::vector<float> out(static_cast<std::size_t>(L));
    for (int i = 0; i < L; ++i) out[i] = static_cast<float>(a[i].real());
    return out;
}

std::vector<float> rfft_magnitudes(const std::vector<float>& signal) {
    Spectrum s = rfft(signal);
    std::vector<float> mag(s.re.size());
    for (std::size_t k = 0; k < mag.size(); ++k)
        mag[k] = std::hypot(s.re[k], s.im[k]);
    return mag;
}

}  // namespace horai
