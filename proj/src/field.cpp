#include "stmf/field.hpp"
#include "stmf/fft.hpp"

#include <cmath>
#include <complex>

namespace stmf {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

std::vector<std::complex<double>> to_complex(const Tensor& t) {
    std::vector<std::complex<double>> c(t.size());
    for (size_t i = 0; i < t.size(); ++i) c[i] = t[i];
    return c;
}

Tensor to_real(const std::vector<std::complex<double>>& c, const std::vector<size_t>& shape) {
    Tensor t(shape);
    for (size_t i = 0; i < c.size(); ++i) t[i] = c[i].real();
    return t;
}
} // namespace

Tensor spectral_deriv(const Tensor& t, size_t axis, double extent) {
    auto c = to_complex(t);
    if (t.ndim() == 1) {
        const size_t n = t.dim(0);
        fft_1d(c, false);
        for (size_t j = 0; j < n; ++j) {
            double k = kTwoPi * static_cast<double>(fft_freq(j, n)) / extent;
            if (2 * j == n) k = 0.0; // Nyquist derivative is ill-defined; drop it
            c[j] *= std::complex<double>(0.0, k);
        }
        fft_1d(c, true);
    } else {
        const size_t rows = t.dim(0), cols = t.dim(1);
        fft_2d(c, rows, cols, false);
        for (size_t r = 0; r < rows; ++r)
            for (size_t cc = 0; cc < cols; ++cc) {
                size_t j = (axis == 0) ? r : cc;
                size_t n = (axis == 0) ? rows : cols;
                double k = kTwoPi * static_cast<double>(fft_freq(j, n)) / extent;
                if (2 * j == n) k = 0.0;
                c[r * cols + cc] *= std::complex<double>(0.0, k);
            }
        fft_2d(c, rows, cols, true);
    }
    return to_real(c, t.shape());
}

Tensor spectral_laplacian(const Tensor& t, double extent) {
    auto c = to_complex(t);
    if (t.ndim() == 1) {
        const size_t n = t.dim(0);
        fft_1d(c, false);
        for (size_t j = 0; j < n; ++j) {
            double k = kTwoPi * static_cast<double>(fft_freq(j, n)) / extent;
            c[j] *= -k * k;
        }
        fft_1d(c, true);
    } else {
        const size_t rows = t.dim(0), cols = t.dim(1);
        fft_2d(c, rows, cols, false);
        for (size_t r = 0; r < rows; ++r)
            for (size_t cc = 0; cc < cols; ++cc) {
                double kx = kTwoPi * static_cast<double>(fft_freq(r, rows)) / extent;
                double ky = kTwoPi * static_cast<double>(fft_freq(cc, cols)) / extent;
                c[r * cols + cc] *= -(kx * kx + ky * ky);
            }
        fft_2d(c, rows, cols, true);
    }
    return to_real(c, t.shape());
}

Tensor spectral_shift(const Tensor& t, const std::vector<double>& offset, double extent) {
    auto c = to_complex(t);
    if (t.ndim() == 1) {
        const size_t n = t.dim(0);
        fft_1d(c, false);
        for (size_t j = 0; j < n; ++j) {
            double k = kTwoPi * static_cast<double>(fft_freq(j, n)) / extent;
            // u(x - s) has coefficients e^{-iks} û_k for the e^{+ikx} basis;
            // offset[a] > 0 moves the field content toward +x
            c[j] *= std::exp(std::complex<double>(0.0, -k * offset[0]));
        }
        fft_1d(c, true);
    } else {
        const size_t rows = t.dim(0), cols = t.dim(1);
        fft_2d(c, rows, cols, false);
        for (size_t r = 0; r < rows; ++r)
            for (size_t cc = 0; cc < cols; ++cc) {
                double kx = kTwoPi * static_cast<double>(fft_freq(r, rows)) / extent;
                double ky = kTwoPi * static_cast<double>(fft_freq(cc, cols)) / extent;
                c[r * cols + cc] *=
                    std::exp(std::complex<double>(0.0, -(kx * offset[0] + ky * offset[1])));
            }
        fft_2d(c, rows, cols, true);
    }
    return to_real(c, t.shape());
}

Tensor fd_deriv(const Tensor& t, size_t axis, double spacing, bool periodic) {
    Tensor out(t.shape());
    const double inv2h = 1.0 / (2.0 * spacing);
    if (t.ndim() == 1) {
        const long n = static_cast<long>(t.dim(0));
        for (long i = 0; i < n; ++i) {
            if (periodic) {
                out[i] = (t[(i + 1) % n] - t[(i - 1 + n) % n]) * inv2h;
            } else if (i == 0) {
                out[i] = (-3.0 * t[0] + 4.0 * t[1] - t[2]) * inv2h;
            } else if (i == n - 1) {
                out[i] = (3.0 * t[n - 1] - 4.0 * t[n - 2] + t[n - 3]) * inv2h;
            } else {
                out[i] = (t[i + 1] - t[i - 1]) * inv2h;
            }
        }
    } else {
        const long rows = static_cast<long>(t.dim(0));
        const long cols = static_cast<long>(t.dim(1));
        auto get = [&](long r, long c) { return t.data()[r * cols + c]; };
        for (long r = 0; r < rows; ++r)
            for (long c = 0; c < cols; ++c) {
                long i = (axis == 0) ? r : c;
                long n = (axis == 0) ? rows : cols;
                auto v = [&](long ii) { return (axis == 0) ? get(ii, c) : get(r, ii); };
                double d;
                if (periodic) d = (v((i + 1) % n) - v((i - 1 + n) % n)) * inv2h;
                else if (i == 0) d = (-3.0 * v(0) + 4.0 * v(1) - v(2)) * inv2h;
                else if (i == n - 1) d = (3.0 * v(n - 1) - 4.0 * v(n - 2) + v(n - 3)) * inv2h;
                else d = (v(i + 1) - v(i - 1)) * inv2h;
                out.data()[r * cols + c] = d;
            }
    }
    return out;
}

Tensor fd_laplacian(const Tensor& t, double spacing, bool periodic) {
    Tensor out(t.shape());
    const double invh2 = 1.0 / (spacing * spacing);
    if (t.ndim() == 1) {
        const long n = static_cast<long>(t.dim(0));
        for (long i = 0; i < n; ++i) {
            double um, up;
            if (periodic) {
                um = t[(i - 1 + n) % n];
                up = t[(i + 1) % n];
            } else if (i == 0 || i == n - 1) {
                // one-sided 2nd derivative: u'' ≈ (2u0 - 5u1 + 4u2 - u3)/h²
                long s = (i == 0) ? 1 : -1;
                out[i] = (2.0 * t[i] - 5.0 * t[i + s] + 4.0 * t[i + 2 * s] - t[i + 3 * s]) * invh2;
                continue;
            } else {
                um = t[i - 1];
                up = t[i + 1];
            }
            out[i] = (um - 2.0 * t[i] + up) * invh2;
        }
    } else {
        const long rows = static_cast<long>(t.dim(0));
        const long cols = static_cast<long>(t.dim(1));
        auto get = [&](long r, long c) { return t.data()[r * cols + c]; };
        auto d2 = [&](long i, long n, auto v) -> double {
            if (periodic) return (v((i - 1 + n) % n) - 2.0 * v(i) + v((i + 1) % n)) * invh2;
            if (i == 0) return (2.0 * v(0) - 5.0 * v(1) + 4.0 * v(2) - v(3)) * invh2;
            if (i == n - 1)
                return (2.0 * v(n - 1) - 5.0 * v(n - 2) + 4.0 * v(n - 3) - v(n - 4)) * invh2;
            return (v(i - 1) - 2.0 * v(i) + v(i + 1)) * invh2;
        };
        for (long r = 0; r < rows; ++r)
            for (long c = 0; c < cols; ++c) {
                double lx = d2(r, rows, [&](long ii) { return get(ii, c); });
                double ly = d2(c, cols, [&](long ii) { return get(r, ii); });
                out.data()[r * cols + c] = lx + ly;
            }
    }
    return out;
}

Tensor shift_cells_periodic(const Tensor& t, const std::vector<long>& cells) {
    Tensor out(t.shape());
    if (t.ndim() == 1) {
        const long n = static_cast<long>(t.dim(0));
        const long s = ((cells[0] % n) + n) % n;
        for (long i = 0; i < n; ++i) out[i] = t[(i - s + n) % n];
    } else {
        const long rows = static_cast<long>(t.dim(0));
        const long cols = static_cast<long>(t.dim(1));
        const long sr = ((cells[0] % rows) + rows) % rows;
        const long sc = ((cells[1] % cols) + cols) % cols;
        for (long r = 0; r < rows; ++r)
            for (long c = 0; c < cols; ++c)
                out.data()[r * cols + c] =
                    t.data()[((r - sr + rows) % rows) * cols + ((c - sc + cols) % cols)];
    }
    return out;
}

} // namespace stmf
