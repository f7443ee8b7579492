#pragma once
#include <complex>
#include <vector>

#include "horai/error.hpp"

namespace horai {

// Half spectrum of a real signal in real-FFT layout: DC first, Nyquist last
// when the source length is even. floor(L/2)+1 coefficient pairs.
struct Spectrum {
    int length = 0;  // source signal length L
    std::vector<float> re;
    std::vector<float> im;

    int bins() const { return length / 2 + 1; }
    bool has_nyquist() const { return length % 2 == 0; }
};

// Forward real FFT. L >= 2; any length (radix-2 when L is a power of two,
// Bluestein otherwise).
Spectrum rfft(const std::vector<float>& signal);

// Inverse of rfft. Rejects spectra whose DC (or Nyquist, for even L)
// imaginary part is not zero.
std::vector<float> irfft(const Spectrum& spectrum);

// Coefficient magnitudes |c_k|, k = 0..L/2.
std::vector<float> rfft_magnitudes(const std::vector<float>& signal);

// In-place complex DFT of arbitrary length, double precision. Exposed for the
// router FFT branch and for tests.
void fft_inplace(std::vector<std::complex<double>>& a, bool inverse);

}  // namespace horai
