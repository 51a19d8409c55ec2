#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace autodiag {

constexpr bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

size_t next_pow2(size_t n);

// In-place forward FFT, radix-2 decimation-in-time. Size must be a power
// of two. Twiddles are computed from a per-call table of direct sin/cos
// evaluations, which keeps accumulated error near machine epsilon.
void fft_inplace(std::vector<std::complex<double>>& a);

// Real-input FFT. x is zero-padded (or truncated) to nfft, which must be
// a power of two. Returns the nfft/2 + 1 non-redundant bins.
std::vector<std::complex<double>> rfft(std::span<const double> x, size_t nfft);
std::vector<std::complex<double>> rfft(std::span<const float> x, size_t nfft);

// Magnitudes of rfft output.
std::vector<double> rfft_magnitude(std::span<const double> x, size_t nfft);

// Periodic Hann window of length n.
std::vector<double> hann_window(size_t n);

}  // namespace autodiag
