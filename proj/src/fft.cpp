#include "autodiag/fft.hpp"

#include <cmath>

#include "autodiag/errors.hpp"

namespace autodiag {

size_t next_pow2(size_t n) {
    size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

void fft_inplace(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    if (n <= 1) return;
    if (!is_pow2(n)) throw ConfigError("fft size must be a power of two");

    // bit reversal permutation
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }

    // twiddle table w[k] = exp(-2*pi*i*k/n), k in [0, n/2)
    std::vector<std::complex<double>> w(n / 2);
    const double step = -2.0 * M_PI / static_cast<double>(n);
    for (size_t k = 0; k < n / 2; ++k) {
        const double ang = step * static_cast<double>(k);
        w[k] = {std::cos(ang), std::sin(ang)};
    }

    for (size_t len = 2; len <= n; len <<= 1) {
        const size_t stride = n / len;
        for (size_t i = 0; i < n; i += len) {
            for (size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w[k * stride];
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
            }
        }
    }
}

namespace {

template <typename T>
std::vector<std::complex<double>> rfft_impl(std::span<const T> x, size_t nfft) {
    if (!is_pow2(nfft)) throw ConfigError("fft size must be a power of two");
    std::vector<std::complex<double>> a(nfft);
    const size_t m = std::min(x.size(), nfft);
    for (size_t i = 0; i < m; ++i) a[i] = static_cast<double>(x[i]);
    fft_inplace(a);
    a.resize(nfft / 2 + 1);
    return a;
}

}  // namespace

std::vector<std::complex<double>> rfft(std::span<const double> x, size_t nfft) {
    return rfft_impl(x, nfft);
}

std::vector<std::complex<double>> rfft(std::span<const float> x, size_t nfft) {
    return rfft_impl(x, nfft);
}

std::vector<double> rfft_magnitude(std::span<const double> x, size_t nfft) {
    auto spec = rfft(x, nfft);
    std::vector<double> mag(spec.size());
    for (size_t i = 0; i < spec.size(); ++i) mag[i] = std::abs(spec[i]);
    return mag;
}

std::vector<double> hann_window(size_t n) {
    std::vector<double> w(n);
    for (size_t i = 0; i < n; ++i) {
        w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n));
    }
    return w;
}

}  // namespace autodiag
