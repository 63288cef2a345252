#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stmf/fft.hpp"
#include "stmf/randfield.hpp"
#include "stmf/tensor.hpp"

#include <cmath>
#include <complex>

using namespace stmf;

TEST_CASE("sigma zero gives the zero field") {
    GrfParams p;
    p.sigma = 0.0;
    p.seed = 5;
    Field f = sample_grf(p);
    CHECK(max_abs(f.values) == 0.0);
}

TEST_CASE("same seed reproduces the field exactly") {
    GrfParams p;
    p.seed = 1234;
    Field a = sample_grf(p);
    Field b = sample_grf(p);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a.at(i) == b.at(i));
}

TEST_CASE("default sigma convention matches the stated 1-D value") {
    CHECK(grf_default_sigma(2.5, 7.0, 1) == doctest::Approx(49.0));
}

TEST_CASE("1-D spectrum has log-log slope -2*alpha in the mid band") {
    GrfParams p;
    p.dim = 1;
    p.res = 128;
    p.alpha = 2.5;
    p.tau = 7.0;
    p.sigma = 49.0;

    const int nsamples = 200;
    const size_t n = p.res;
    std::vector<double> power(n / 2, 0.0);
    for (int s = 0; s < nsamples; ++s) {
        p.seed = 1000 + s;
        Field f = sample_grf(p);
        std::vector<std::complex<double>> c(n);
        for (size_t i = 0; i < n; ++i) c[i] = f.at(i);
        fft_1d(c, false);
        for (size_t j = 1; j < n / 2; ++j)
            power[j] += std::norm(c[j] / static_cast<double>(n));
    }
    // least-squares slope of log(power) vs log(j) over j in [8, 32]
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (size_t j = 8; j <= 32; ++j) {
        double x = std::log(static_cast<double>(j));
        double y = std::log(power[j] / nsamples);
        sx += x; sy += y; sxx += x * x; sxy += x * y;
        ++m;
    }
    double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    CHECK(slope == doctest::Approx(-5.0).epsilon(0.08)); // -2*alpha within +-0.4
}

TEST_CASE("sample mean is zero within Monte-Carlo error") {
    GrfParams p;
    p.dim = 1;
    p.res = 64;
    // per-field spatial mean is exactly zero (k=0 zeroed); check a few fields
    for (int s = 0; s < 5; ++s) {
        p.seed = 50 + s;
        Field f = sample_grf(p);
        CHECK(std::abs(mean_val(f.values)) < 1e-10);
    }
}

TEST_CASE("larger alpha carries less high-frequency energy") {
    auto band_energy = [](double alpha) {
        GrfParams p;
        p.dim = 1;
        p.res = 128;
        p.alpha = alpha;
        p.tau = 7.0;
        p.sigma = 49.0;
        double e = 0.0;
        for (int s = 0; s < 100; ++s) {
            p.seed = 900 + s;
            Field f = sample_grf(p);
            std::vector<std::complex<double>> c(p.res);
            for (size_t i = 0; i < p.res; ++i) c[i] = f.at(i);
            fft_1d(c, false);
            for (size_t j = 20; j < 60; ++j) e += std::norm(c[j]);
        }
        return e;
    };
    double e25 = band_energy(2.5);
    double e30 = band_energy(3.0);
    double e35 = band_energy(3.5);
    CHECK(e30 < e25);
    CHECK(e35 < e30);
}

TEST_CASE("finer resolution extends the same sample") {
    GrfParams p;
    p.dim = 1;
    p.res = 64;
    p.seed = 77;
    Field coarse = sample_grf(p);
    p.res = 128;
    Field fine = sample_grf(p);
    // shared grid points agree up to the (tiny) energy of the added band
    double maxdiff = 0.0;
    for (size_t i = 0; i < 64; ++i)
        maxdiff = std::max(maxdiff, std::abs(coarse.at(i) - fine.at(2 * i)));
    CHECK(maxdiff < 1e-2 * std::max(1.0, max_abs(coarse.values)));
}

TEST_CASE("2-D field is sampled and self-consistent") {
    GrfParams p;
    p.dim = 2;
    p.res = 32;
    p.alpha = 2.5;
    p.tau = 7.0;
    p.sigma = grf_default_sigma(2.5, 7.0, 2);
    p.seed = 3;
    Field f = sample_grf(p);
    CHECK(f.ndim() == 2);
    CHECK(all_finite(f.values));
    CHECK(std::abs(mean_val(f.values)) < 1e-10);
    Field g = sample_grf(p);
    for (size_t i = 0; i < f.size(); ++i) CHECK(f.at(i) == g.at(i));
}

TEST_CASE("ood variants change exactly the listed parameters") {
    GrfParams base;
    base.alpha = 2.5;
    base.tau = 7.0;
    base.sigma = 49.0;

    GrfParams s = ood_variant(base, OodSetting::Smooth);
    CHECK(s.alpha == 3.5);
    CHECK(s.tau == 7.0);
    CHECK(s.sigma == 49.0);

    GrfParams lf = ood_variant(base, OodSetting::LowFreq);
    CHECK(lf.alpha == 2.5);
    CHECK(lf.tau == 10.0);
    CHECK(lf.sigma == 49.0);

    GrfParams sa = ood_variant(base, OodSetting::SmoothAmp);
    CHECK(sa.alpha == 3.0);
    CHECK(sa.sigma == 61.25);
    CHECK(sa.tau == 7.0);

    GrfParams st = ood_variant(base, OodSetting::SmoothLowTau);
    CHECK(st.alpha == 3.5);
    CHECK(st.tau == 5.0);
    CHECK(st.sigma == 49.0);
}

TEST_CASE("ood setting names round trip") {
    for (auto s : {OodSetting::Smooth, OodSetting::LowFreq, OodSetting::SmoothAmp,
                   OodSetting::SmoothLowTau})
        CHECK(ood_setting_from_name(ood_setting_name(s)) == s);
    CHECK_THROWS(ood_setting_from_name("bogus"));
}

TEST_CASE("invalid parameters are rejected") {
    GrfParams p;
    p.alpha = 0.4; // below dim/2
    CHECK_THROWS(sample_grf(p));
    p = GrfParams{};
    p.sigma = -1.0;
    CHECK_THROWS(sample_grf(p));
    p = GrfParams{};
    p.res = 1;
    CHECK_THROWS(sample_grf(p));
}
