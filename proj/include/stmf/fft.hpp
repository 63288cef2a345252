#pragma once

#include <complex>
#include <vector>

namespace stmf {

// Thin wrappers over FFTW (double precision, complex transforms).
// Plans are cached per size behind a mutex; execution uses the new-array
// interface and is safe to call from several threads at once.

// forward: X[k] = sum_j x[j] e^{-2πi jk/N}; inverse applies 1/N.
void fft_1d(std::vector<std::complex<double>>& data, bool inverse);

// rows x cols, row-major; same conventions per axis.
void fft_2d(std::vector<std::complex<double>>& data, size_t rows, size_t cols, bool inverse);

// signed integer frequency for bin j of an N-point transform
inline long fft_freq(size_t j, size_t n) {
    return (j <= n / 2) ? static_cast<long>(j) : static_cast<long>(j) - static_cast<long>(n);
}

} // namespace stmf
