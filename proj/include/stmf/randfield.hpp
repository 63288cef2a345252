#pragma once

#include "stmf/field.hpp"

#include <cstdint>
#include <string>

namespace stmf {

// Periodic Gaussian random field with spectral density
//   S(k) = sigma^2 (4 pi^2 |k|^2 + tau^2)^(-alpha),  k integer frequency.
// Fourier coefficients are i.i.d. complex Gaussian CN(0, S(k)),
// Hermitian-symmetrized, k=0 zeroed (mean-zero fields); sigma multiplies the
// coefficient amplitude, i.e. it sits outside the square root of S.
// Coefficients are drawn from per-frequency streams, so a field sampled at a
// finer resolution with the same seed extends the coarse one.
struct GrfParams {
    int dim = 1;          // 1 or 2
    size_t res = 128;
    double alpha = 2.5;   // smoothness exponent (the 1-D datasets call it gamma)
    double tau = 7.0;     // inverse length-scale
    double sigma = 49.0;
    uint64_t seed = 0;
};

// The convention sigma = tau^(alpha - dim/2) reproduces the stated
// sigma = 7^2 for the 1-D alpha=2.5, tau=7 configuration.
double grf_default_sigma(double alpha, double tau, int dim);

Field sample_grf(const GrfParams& params);

enum class OodSetting { Smooth, LowFreq, SmoothAmp, SmoothLowTau };

OodSetting ood_setting_from_name(const std::string& name);
const char* ood_setting_name(OodSetting s);

// Parameter shifts for the out-of-distribution initial-condition studies:
//   smooth:         alpha=3.5
//   low-freq:       tau=10
//   smooth-amp:     alpha=3.0, sigma=61.25
//   smooth-low-tau: alpha=3.5, tau=5
// Unlisted parameters stay at the base values.
GrfParams ood_variant(const GrfParams& base, OodSetting setting);

} // namespace stmf
