#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stmf/classical.hpp"
#include "stmf/rng.hpp"

#include <cmath>
#include <filesystem>

using namespace stmf;
namespace fs = std::filesystem;

namespace {
constexpr double kPi = 3.14159265358979323846;

Field sine_field_1d(size_t n, double freq = 1.0, double amp = 1.0) {
    Tensor t({n});
    for (size_t i = 0; i < n; ++i)
        t[i] = amp * std::sin(2.0 * kPi * freq * static_cast<double>(i) / n);
    return Field(std::move(t));
}
} // namespace

// ------------------------------------------------------------- burgers

TEST_CASE("burgers: constant initial data stays constant") {
    Field u0(Tensor({64}, 0.7));
    BurgersOptions opt;
    opt.n_save = 5;
    auto traj = burgers_solve(u0, opt);
    REQUIRE(traj.size() == 5);
    for (const auto& f : traj)
        for (size_t i = 0; i < f.size(); ++i) CHECK(f.at(i) == doctest::Approx(0.7).epsilon(1e-13));
}

TEST_CASE("burgers: trajectory starts at the initial condition") {
    GrfParams g;
    g.res = 64;
    g.seed = 9;
    Field u0 = sample_grf(g);
    BurgersOptions opt;
    opt.n_save = 3;
    auto traj = burgers_solve(u0, opt);
    for (size_t i = 0; i < u0.size(); ++i) CHECK(traj[0].at(i) == u0.at(i));
}

TEST_CASE("burgers: heat-dominated regime decays like the heat kernel") {
    const size_t n = 64;
    Field u0 = sine_field_1d(n, 1.0, 1e-3); // tiny amplitude: advection negligible
    BurgersOptions opt;
    opt.nu = 0.5;
    opt.T = 0.1;
    opt.n_save = 11;
    auto traj = burgers_solve(u0, opt);
    double prev = max_abs(traj[0].values);
    for (size_t s = 1; s < traj.size(); ++s) {
        double cur = max_abs(traj[s].values);
        CHECK(cur < prev);
        prev = cur;
    }
    // analytic heat decay exp(-4 pi^2 nu t)
    double expect = 1e-3 * std::exp(-4.0 * kPi * kPi * opt.nu * opt.T);
    CHECK(max_abs(traj.back().values) == doctest::Approx(expect).epsilon(1e-3));
}

TEST_CASE("burgers: self-convergence order is at least 1.8") {
    GrfParams g;
    g.res = 128;
    g.seed = 31;
    Field u0 = sample_grf(g);

    auto run = [&](size_t steps) {
        BurgersOptions opt;
        opt.T = 0.5;
        opt.n_save = 2;
        opt.steps_per_interval = steps;
        return burgers_solve(u0, opt).back();
    };
    Field c1 = run(64), c2 = run(128), c4 = run(256);
    double e1 = 0.0, e2 = 0.0;
    for (size_t i = 0; i < c1.size(); ++i) {
        e1 = std::max(e1, std::abs(c1.at(i) - c4.at(i)));
        e2 = std::max(e2, std::abs(c2.at(i) - c4.at(i)));
    }
    double order = std::log2(e1 / e2);
    CHECK(order >= 1.8);
}

TEST_CASE("burgers: spatial mean is conserved") {
    GrfParams g;
    g.res = 128;
    g.seed = 12;
    Field u0 = sample_grf(g);
    // shift the mean away from zero to make the check non-trivial
    Field shifted(add_scalar(u0.values, 0.37));
    BurgersOptions opt;
    opt.n_save = 5;
    auto traj = burgers_solve(shifted, opt);
    double m0 = mean_val(traj[0].values);
    for (const auto& f : traj) CHECK(std::abs(mean_val(f.values) - m0) < 1e-10);
}

TEST_CASE("burgers: rejects bad inputs") {
    Field u0(Tensor({64}, 0.0));
    BurgersOptions opt;
    opt.nu = 0.0;
    CHECK_THROWS(burgers_solve(u0, opt));
    Field tiny(Tensor({4}, 0.0));
    CHECK_THROWS(burgers_solve(tiny, BurgersOptions{}));
}

// ------------------------------------------------------------- navier-stokes

TEST_CASE("ns2d: single mode decays at the Stokes rate") {
    const size_t n = 32;
    Tensor w({n, n});
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
            w.at2(i, j) = std::sin(2.0 * kPi * static_cast<double>(i) / n);
    Field w0(std::move(w));
    NsOptions opt;
    opt.nu = 0.05;
    opt.T = 0.1;
    opt.dt = 1e-4;
    opt.n_save = 3;
    opt.forcing = false;
    auto traj = ns_vorticity_solve(w0, opt);
    // w(t) = exp(-nu (2 pi)^2 t) w0 for the |k| = 1 mode
    double expect = std::exp(-opt.nu * 4.0 * kPi * kPi * opt.T);
    double got = max_abs(traj.back().values) / max_abs(w0.values);
    CHECK(got == doctest::Approx(expect).epsilon(0.01));
}

TEST_CASE("ns2d: forced flow approaches the steady Stokes response") {
    const size_t n = 32;
    Field w0 = Field::zeros_2d(n);
    NsOptions opt;
    opt.nu = 0.5;
    opt.T = 0.5;
    opt.dt = 2e-4;
    opt.n_save = 3;
    auto traj = ns_vorticity_solve(w0, opt);
    // steady response of the diagonal-mode forcing: w = q / (8 pi^2 nu)
    Field q = ns_forcing(n);
    Field expect(scale(q.values, 1.0 / (8.0 * kPi * kPi * opt.nu)));
    CHECK(rel_l2(traj.back().values, expect.values) < 5e-3);
}

TEST_CASE("ns2d: unforced enstrophy is non-increasing") {
    GrfParams g;
    g.dim = 2;
    g.res = 32;
    g.alpha = 2.5;
    g.tau = 7.0;
    g.sigma = grf_default_sigma(2.5, 7.0, 2);
    g.seed = 4;
    Field w0 = sample_grf(g);
    NsOptions opt;
    opt.T = 0.05;
    opt.dt = 2e-4;
    opt.n_save = 6;
    opt.forcing = false;
    auto traj = ns_vorticity_solve(w0, opt);
    double prev = dot(traj[0].values, traj[0].values);
    for (size_t s = 1; s < traj.size(); ++s) {
        double cur = dot(traj[s].values, traj[s].values);
        CHECK(cur <= prev * (1.0 + 1e-12));
        prev = cur;
    }
}

TEST_CASE("ns2d: rejects non-mean-zero vorticity") {
    Field w0(Tensor({32, 32}, 1.0));
    CHECK_THROWS(ns_vorticity_solve(w0, NsOptions{}));
}

// ------------------------------------------------------------- darcy / poisson

TEST_CASE("darcy with unit coefficient equals poisson with source -1") {
    const size_t n = 24;
    Field a(Tensor({n, n}, 1.0));
    Field u_darcy = darcy_solve(a, 1.0, 1e-14);
    Field qf(Tensor({n, n}, -1.0));
    Field u_poisson = poisson_solve(qf, 1e-14);
    double diff = 0.0;
    for (size_t i = 0; i < u_darcy.size(); ++i)
        diff = std::max(diff, std::abs(u_darcy.at(i) - u_poisson.at(i)));
    CHECK(diff < 1e-10);
}

TEST_CASE("darcy satisfies the discrete maximum principle") {
    Rng rng(55);
    for (int trial = 0; trial < 50; ++trial) {
        GrfParams g;
        g.dim = 2;
        g.res = 16;
        g.alpha = 2.0;
        g.tau = 3.0;
        g.sigma = 3.0;
        g.seed = rng.next_u64();
        Field galpha = sample_grf(g);
        Field a(exp_t(galpha.values));
        Field u = darcy_solve(a);
        for (size_t i = 1; i + 1 < g.res; ++i)
            for (size_t j = 1; j + 1 < g.res; ++j) CHECK(u.at(i, j) > 0.0);
    }
}

TEST_CASE("darcy sparse solve matches the dense oracle") {
    GrfParams g;
    g.dim = 2;
    g.res = 16;
    g.alpha = 2.0;
    g.tau = 3.0;
    g.sigma = 3.0;
    g.seed = 77;
    Field galpha = sample_grf(g);
    Field a(exp_t(galpha.values));
    Field u_cg = darcy_solve(a, 1.0, 1e-14);
    Field u_dense = darcy_solve_dense(a, 1.0);
    double diff = 0.0;
    for (size_t i = 0; i < u_cg.size(); ++i)
        diff = std::max(diff, std::abs(u_cg.at(i) - u_dense.at(i)));
    CHECK(diff < 1e-10);
}

TEST_CASE("darcy rejects non-positive coefficients") {
    Field a(Tensor({16, 16}, 1.0));
    a.at(5, 5) = 0.0;
    CHECK_THROWS(darcy_solve(a));
}

TEST_CASE("darcy/poisson residuals are small after solve") {
    GrfParams g;
    g.dim = 2;
    g.res = 32;
    g.alpha = 2.0;
    g.tau = 3.0;
    g.sigma = 3.0;
    g.seed = 13;
    Field galpha = sample_grf(g);
    Field a(exp_t(galpha.values));
    Field u = darcy_solve(a);
    CHECK(darcy_residual_inf(a, u) < 1e-8);

    Field q = sample_grf(g);
    Field up = poisson_solve(q);
    CHECK(poisson_residual_inf(q, up) < 1e-8);
}

TEST_CASE("poisson: zero source gives zero solution") {
    Field q(Tensor({16, 16}, 0.0));
    Field u = poisson_solve(q);
    CHECK(max_abs(u.values) == 0.0);
}

TEST_CASE("poisson: analytic eigenfunction at res 64 within 2e-3, order 2") {
    auto solve_err = [](size_t n) {
        Tensor q({n, n});
        double h = 1.0 / static_cast<double>(n - 1);
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < n; ++j)
                q.at2(i, j) = -2.0 * kPi * kPi * std::sin(kPi * i * h) * std::sin(kPi * j * h);
        Field u = poisson_solve(Field(std::move(q)), 1e-13);
        double err = 0.0;
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < n; ++j)
                err = std::max(err, std::abs(u.at(i, j) -
                                             std::sin(kPi * i * h) * std::sin(kPi * j * h)));
        return err;
    };
    double e64 = solve_err(64);
    CHECK(e64 <= 2e-3);
    double e16 = solve_err(16);
    double e32 = solve_err(32);
    double order1 = std::log2(e16 / e32);
    double order2 = std::log2(e32 / e64);
    CHECK(order1 == doctest::Approx(2.0).epsilon(0.1));
    CHECK(order2 == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("poisson is linear in the source") {
    GrfParams g;
    g.dim = 2;
    g.res = 24;
    g.alpha = 2.0;
    g.tau = 3.0;
    g.sigma = 3.0;
    g.seed = 2;
    Field q1 = sample_grf(g);
    g.seed = 3;
    Field q2 = sample_grf(g);
    Field u1 = poisson_solve(q1, 1e-14);
    Field u2 = poisson_solve(q2, 1e-14);
    Field u12 = poisson_solve(Field(add(q1.values, q2.values)), 1e-14);
    Field sum12(add(u1.values, u2.values));
    double diff = 0.0;
    for (size_t i = 0; i < u12.size(); ++i)
        diff = std::max(diff, std::abs(u12.at(i) - sum12.at(i)));
    CHECK(diff < 1e-12);
}

// ------------------------------------------------------------- harmonic extension

TEST_CASE("harmonic extension: constant boundary is a fixed point") {
    const size_t n = 16;
    Field b(Tensor({n, n}, 3.5));
    Field u = harmonic_extension(b, 1);
    for (size_t i = 0; i < u.size(); ++i) CHECK(u.at(i) == doctest::Approx(3.5).epsilon(1e-15));
}

TEST_CASE("harmonic extension: linear boundary converges to the linear field") {
    const size_t n = 32;
    Tensor b({n, n}, 0.0);
    double h = 1.0 / static_cast<double>(n - 1);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
            if (i == 0 || j == 0 || i == n - 1 || j == n - 1) b.at2(i, j) = i * h;
    Field u = harmonic_extension(Field(std::move(b)), 2000);
    double err = 0.0;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) err = std::max(err, std::abs(u.at(i, j) - i * h));
    CHECK(err < 1e-2);
}

TEST_CASE("harmonic extension: laplace residual decreases monotonically") {
    const size_t n = 24;
    Rng rng(8);
    Tensor b({n, n}, 0.0);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
            if (i == 0 || j == 0 || i == n - 1 || j == n - 1) b.at2(i, j) = rng.normal();
    Field bf(std::move(b));

    auto residual = [&](const Field& u) {
        double r = 0.0;
        for (size_t i = 1; i + 1 < n; ++i)
            for (size_t j = 1; j + 1 < n; ++j) {
                double v = u.at(i - 1, j) + u.at(i + 1, j) + u.at(i, j - 1) + u.at(i, j + 1) -
                           4.0 * u.at(i, j);
                r += v * v;
            }
        return std::sqrt(r);
    };
    double prev = 1e300;
    for (int iters : {1, 5, 20, 50, 100}) {
        double r = residual(harmonic_extension(bf, iters));
        CHECK(r <= prev * (1.0 + 1e-12));
        prev = r;
    }
}

// ------------------------------------------------------------- datasets

TEST_CASE("dataset split ratio 7:2:1") {
    GenConfig cfg = default_gen_config("poisson");
    cfg.n = 10;
    cfg.res = 16;
    cfg.seed = 1;
    Dataset ds = gen_dataset(cfg);
    CHECK(ds.train_idx.size() == 7);
    CHECK(ds.val_idx.size() == 2);
    CHECK(ds.test_idx.size() == 1);
    // no index in two splits
    std::vector<char> seen(ds.size(), 0);
    for (auto v : {&ds.train_idx, &ds.val_idx, &ds.test_idx})
        for (size_t i : *v) {
            CHECK(!seen[i]);
            seen[i] = 1;
        }
}

TEST_CASE("dataset generation is byte-identical across runs") {
    GenConfig cfg = default_gen_config("burgers");
    cfg.n = 4;
    cfg.res = 32;
    cfg.n_save = 5;
    cfg.seed = 42;
    cfg.grf.res = 32;
    fs::path base = fs::temp_directory_path() / "stmf_ds_test";
    fs::remove_all(base);
    Dataset a = gen_dataset(cfg);
    Dataset b = gen_dataset(cfg);
    write_dataset(a, base / "a");
    write_dataset(b, base / "b");
    CHECK(files_identical(base / "a" / "inputs.stmf", base / "b" / "inputs.stmf"));
    CHECK(files_identical(base / "a" / "targets.stmf", base / "b" / "targets.stmf"));
}

TEST_CASE("burgers manifest records the generation parameters") {
    GenConfig cfg = default_gen_config("burgers");
    cfg.n = 2;
    cfg.res = 128;
    cfg.n_save = 3;
    cfg.seed = 7;
    Dataset ds = gen_dataset(cfg);
    CHECK(ds.params.at("grf").at("alpha").get<double>() == 2.5);
    CHECK(ds.params.at("grf").at("tau").get<double>() == 7.0);
    CHECK(ds.params.at("grf").at("sigma").get<double>() == 49.0);
    CHECK(ds.params.at("nu").get<double>() == 0.01);
    CHECK(ds.params.at("res").get<size_t>() == 128);
    CHECK(ds.params.at("T").get<double>() == 1.0);
}

TEST_CASE("dataset write/load round trip") {
    GenConfig cfg = default_gen_config("darcy");
    cfg.n = 3;
    cfg.res = 16;
    cfg.seed = 5;
    Dataset ds = gen_dataset(cfg);
    fs::path dir = fs::temp_directory_path() / "stmf_ds_rt";
    fs::remove_all(dir);
    write_dataset(ds, dir);
    Dataset r = load_dataset(dir);
    CHECK(r.pde == "darcy");
    CHECK(r.size() == 3);
    for (size_t i = 0; i < ds.inputs[0].size(); ++i)
        CHECK(r.inputs[0][i] == ds.inputs[0][i]);
    for (size_t i = 0; i < ds.targets[2].size(); ++i)
        CHECK(r.targets[2][i] == ds.targets[2][i]);
}
