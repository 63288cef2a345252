#include "stmf/randfield.hpp"
#include "stmf/fft.hpp"
#include "stmf/rng.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>

namespace stmf {

namespace {

// CN(0, S): independent re/im with variance S/2 each
std::complex<double> draw_mode(uint64_t seed, long j1, long j2, double S) {
    Rng rng(mix_seed(seed, static_cast<uint64_t>(j1 + (1 << 20)),
                     static_cast<uint64_t>(j2 + (1 << 20))));
    double s = std::sqrt(0.5 * S);
    return {s * rng.normal(), s * rng.normal()};
}
} // namespace

double grf_default_sigma(double alpha, double tau, int dim) {
    return std::pow(tau, alpha - 0.5 * dim);
}

static void validate(const GrfParams& p) {
    if (p.dim != 1 && p.dim != 2) throw std::invalid_argument("GrfParams: dim must be 1 or 2");
    if (p.res < 2) throw std::invalid_argument("GrfParams: resolution must be >= 2");
    if (!(p.alpha > 0.5 * p.dim))
        throw std::invalid_argument("GrfParams: need alpha > dim/2 for finite variance");
    if (p.sigma < 0.0) throw std::invalid_argument("GrfParams: sigma must be >= 0");
}

Field sample_grf(const GrfParams& p) {
    validate(p);
    const size_t n = p.res;
    auto S_of = [&](double k2) {
        return p.sigma * p.sigma * std::pow(4.0 * std::pow(3.14159265358979323846, 2.0) * k2 +
                                                p.tau * p.tau,
                                            -p.alpha);
    };

    if (p.dim == 1) {
        std::vector<std::complex<double>> c(n, 0.0);
        // draw positive frequencies; Nyquist and k=0 stay zero
        for (size_t j = 1; 2 * j < n; ++j) {
            double S = S_of(static_cast<double>(j) * static_cast<double>(j));
            auto z = draw_mode(p.seed, static_cast<long>(j), 0, S);
            c[j] = z;
            c[n - j] = std::conj(z);
        }
        fft_1d(c, true);
        Tensor out({n});
        for (size_t i = 0; i < n; ++i) out[i] = c[i].real() * static_cast<double>(n);
        return Field(std::move(out));
    }

    std::vector<std::complex<double>> c(n * n, 0.0);
    const long half = static_cast<long>(n) / 2;
    auto put = [&](long j1, long j2, std::complex<double> v) {
        size_t r = static_cast<size_t>((j1 + static_cast<long>(n)) % static_cast<long>(n));
        size_t cc = static_cast<size_t>((j2 + static_cast<long>(n)) % static_cast<long>(n));
        c[r * n + cc] = v;
    };
    // canonical half-space j1 > 0, plus the row j1 = 0 with j2 > 0
    for (long j1 = -half + 1; j1 < half; ++j1) {
        for (long j2 = -half + 1; j2 < half; ++j2) {
            bool canonical = (j1 > 0) || (j1 == 0 && j2 > 0);
            if (!canonical) continue;
            double S = S_of(static_cast<double>(j1 * j1 + j2 * j2));
            auto z = draw_mode(p.seed, j1, j2, S);
            put(j1, j2, z);
            put(-j1, -j2, std::conj(z));
        }
    }
    fft_2d(c, n, n, true);
    Tensor out({n, n});
    const double scale = static_cast<double>(n) * static_cast<double>(n);
    for (size_t i = 0; i < n * n; ++i) out[i] = c[i].real() * scale;
    return Field(std::move(out));
}

OodSetting ood_setting_from_name(const std::string& name) {
    if (name == "smooth") return OodSetting::Smooth;
    if (name == "low-freq") return OodSetting::LowFreq;
    if (name == "smooth-amp") return OodSetting::SmoothAmp;
    if (name == "smooth-low-tau") return OodSetting::SmoothLowTau;
    throw std::invalid_argument("unknown OOD setting: " + name);
}

const char* ood_setting_name(OodSetting s) {
    switch (s) {
    case OodSetting::Smooth: return "smooth";
    case OodSetting::LowFreq: return "low-freq";
    case OodSetting::SmoothAmp: return "smooth-amp";
    case OodSetting::SmoothLowTau: return "smooth-low-tau";
    }
    return "?";
}

GrfParams ood_variant(const GrfParams& base, OodSetting setting) {
    GrfParams p = base;
    switch (setting) {
    case OodSetting::Smooth: p.alpha = 3.5; break;
    case OodSetting::LowFreq: p.tau = 10.0; break;
    case OodSetting::SmoothAmp: p.alpha = 3.0; p.sigma = 61.25; break;
    case OodSetting::SmoothLowTau: p.alpha = 3.5; p.tau = 5.0; break;
    }
    return p;
}

} // namespace stmf
