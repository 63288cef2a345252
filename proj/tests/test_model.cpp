#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stmf/model.hpp"
#include "stmf/randfield.hpp"
#include "stmf/rng.hpp"

#include <cmath>
#include <filesystem>

using namespace stmf;
namespace fs = std::filesystem;

namespace {
GridPair grid_1d(size_t res, double tau = 0.2, double t = 0.6, long off = 0) {
    GridPair gp;
    gp.offset_cells = {off};
    gp.res = res;
    gp.dim = 1;
    gp.periodic = true;
    gp.tau = tau;
    gp.t = t;
    return gp;
}

Model tiny_burgers_model(uint64_t seed = 3, size_t res = 32) {
    ModelConfig cfg = default_model_config("burgers", res);
    cfg.hidden = {24};
    cfg.fourier_feats = 3;
    cfg.pool_bins = 8;
    cfg.spec_modes = 4;
    cfg.seed = seed;
    Model m = init_model(cfg);
    m.stats.u_mean = 0.0;
    m.stats.u_std = 0.5;
    m.stats.out_scale = 0.5;
    return m;
}

Tensor random_field_1d(size_t res, uint64_t seed) {
    GrfParams g;
    g.res = res;
    g.seed = seed;
    return sample_grf(g).values;
}
} // namespace

TEST_CASE("fresh model output is finite and bounded") {
    Model m = tiny_burgers_model();
    Tensor u = random_field_1d(32, 5);
    Tensor out = model_forward(m, u, nullptr, grid_1d(32));
    CHECK(all_finite(out));
    CHECK(max_abs(out) < 10.0);
}

TEST_CASE("identical inputs give identical outputs") {
    Model m = tiny_burgers_model();
    Tensor u = random_field_1d(32, 6);
    Tensor a = model_forward(m, u, nullptr, grid_1d(32));
    Tensor b = model_forward(m, u, nullptr, grid_1d(32));
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("static configuration has no time channels") {
    ModelConfig dyn = default_model_config("burgers", 32);
    ModelConfig stat = default_model_config("darcy", 32);
    // dynamic: u + ff(xi) + ff(x) + tau + t + z; static: u0 + a + ff(x) + z
    CHECK(dyn.gamma == 1);
    CHECK(stat.gamma == 0);
    size_t dyn_ff = 2 * dyn.fourier_feats * 1;
    CHECK(dyn.input_dim() == 1 + 2 * dyn_ff + 2 + dyn.z_dim());
    size_t stat_ff = 2 * stat.fourier_feats * 2;
    CHECK(stat.input_dim() == 1 + 1 + stat_ff + stat.z_dim());
    CHECK_THROWS(model_jvp_tau(init_model(stat), Tensor({32, 32}, 0.0), nullptr, grid_1d(32)));
}

TEST_CASE("parameter count stays at desk scale") {
    for (const char* pde : {"burgers", "ns2d", "darcy", "poisson"}) {
        Model m = init_model(default_model_config(pde, 64));
        CHECK(m.param_count() <= 200000);
        CHECK(m.param_count() > 1000);
    }
}

TEST_CASE("jvp_tau vanishes when the tau column is dead") {
    Model m = tiny_burgers_model();
    // zero the first-layer rows belonging to the tau channel
    size_t ffw = 2 * m.cfg.fourier_feats;
    size_t tau_row = 1 + 2 * ffw; // u | ff(xi) | ff(x) | tau
    Tensor& W0 = m.params[0];
    for (size_t j = 0; j < W0.dim(1); ++j) W0.at2(tau_row, j) = 0.0;
    Tensor u = random_field_1d(32, 7);
    auto [val, tan] = model_jvp_tau(m, u, nullptr, grid_1d(32));
    CHECK(max_abs(tan) == 0.0);
}

TEST_CASE("jvp_tau matches central differences") {
    Model m = tiny_burgers_model();
    Tensor u = random_field_1d(32, 8);
    GridPair gp = grid_1d(32);
    auto [val, tan] = model_jvp_tau(m, u, nullptr, gp);
    const double h = 1e-5;
    GridPair gp_p = gp, gp_m = gp;
    gp_p.tau += h;
    gp_m.tau -= h;
    Tensor fp = model_forward(m, u, nullptr, gp_p);
    Tensor fm = model_forward(m, u, nullptr, gp_m);
    for (size_t i = 0; i < tan.size(); ++i) {
        double fd = (fp[i] - fm[i]) / (2.0 * h);
        CHECK(std::abs(tan[i] - fd) / std::max(std::abs(fd), 1e-10) < 1e-6);
    }
}

TEST_CASE("jvp_u: zero direction, FD match and exact linearity") {
    Model m = tiny_burgers_model();
    Tensor u = random_field_1d(32, 9);
    GridPair gp = grid_1d(32);

    Tensor zero({32}, 0.0);
    auto [v0, t0] = model_jvp_u(m, u, nullptr, gp, zero);
    CHECK(max_abs(t0) == 0.0);

    Rng rng(10);
    Tensor dir({32});
    for (size_t i = 0; i < 32; ++i) dir[i] = rng.normal();
    auto [val, tan] = model_jvp_u(m, u, nullptr, gp, dir);
    const double h = 1e-5;
    Tensor up = add(u, scale(dir, h));
    Tensor um = sub(u, scale(dir, h));
    Tensor fp = model_forward(m, up, nullptr, gp);
    Tensor fm = model_forward(m, um, nullptr, gp);
    for (size_t i = 0; i < tan.size(); ++i) {
        double fd = (fp[i] - fm[i]) / (2.0 * h);
        CHECK(std::abs(tan[i] - fd) / std::max(std::abs(fd), 1e-8) < 1e-6);
    }

    auto [v2, t2] = model_jvp_u(m, u, nullptr, gp, scale(dir, 2.5));
    for (size_t i = 0; i < tan.size(); ++i)
        CHECK(t2[i] == doctest::Approx(2.5 * tan[i]).epsilon(1e-14));
}

TEST_CASE("taped forward agrees with the plain forward bitwise") {
    Model m = tiny_burgers_model();
    Tensor u = random_field_1d(32, 11);
    GridPair gp = grid_1d(32, 0.1, 0.8);
    Tensor plain = model_forward(m, u, nullptr, gp);

    Tape tape;
    std::vector<Var> pv;
    for (const auto& p : m.params) pv.push_back(tape.leaf(p, true));
    Var uv = tape.constant(u);
    Var out = model_forward_taped(m, tape, pv, uv, std::nullopt, gp);
    const Tensor& taped = tape.value(out);
    for (size_t i = 0; i < plain.size(); ++i) CHECK(taped[i] == plain[i]);
}

TEST_CASE("batched taped forward matches per-pair evaluation") {
    Model m = tiny_burgers_model();
    Tape tape;
    std::vector<Var> pv;
    for (const auto& p : m.params) pv.push_back(tape.leaf(p, true));

    std::vector<TapedRequest> reqs;
    std::vector<Tensor> anchors;
    for (int k = 0; k < 3; ++k) {
        anchors.push_back(random_field_1d(32, 100 + k));
        TapedRequest rq{tape.constant(anchors.back()), std::nullopt,
                        grid_1d(32, 0.1 * k, 0.2 + 0.2 * k, k)};
        reqs.push_back(rq);
    }
    std::vector<size_t> offs;
    Var all = model_forward_taped_batch(m, tape, pv, reqs, &offs);
    REQUIRE(offs.size() == 3);
    for (int k = 0; k < 3; ++k) {
        Tensor single = model_forward(m, anchors[k], nullptr, reqs[k].gp);
        const Tensor& batch = tape.value(all);
        for (size_t i = 0; i < 32; ++i)
            CHECK(batch[offs[k] + i] == doctest::Approx(single[i]).epsilon(1e-15));
    }
}

TEST_CASE("model gradients flow through the taped forward") {
    Model m = tiny_burgers_model();
    Tensor u = random_field_1d(32, 12);
    GridPair gp = grid_1d(32);
    Tape tape;
    std::vector<Var> pv;
    for (const auto& p : m.params) pv.push_back(tape.leaf(p, true));
    Var uv = tape.constant(u);
    Var out = model_forward_taped(m, tape, pv, uv, std::nullopt, gp);
    Var loss = mean(mul(out, out));
    tape.backward(loss);

    // finite-difference check one weight
    Tensor g0 = tape.grad(pv[0]);
    const double h = 1e-6;
    Model mp = m, mm = m;
    mp.params[0][5] += h;
    mm.params[0][5] -= h;
    Tensor op = model_forward(mp, u, nullptr, gp);
    Tensor om = model_forward(mm, u, nullptr, gp);
    double fd = (mean_val(mul(op, op)) - mean_val(mul(om, om))) / (2.0 * h);
    CHECK(g0[5] == doctest::Approx(fd).epsilon(1e-4));
}

TEST_CASE("C1 smoothness: finite-difference second derivatives stay bounded") {
    Model m = tiny_burgers_model();
    Tensor u = random_field_1d(32, 13);
    Rng rng(14);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        GridPair gp = grid_1d(32, 0.3, 0.7);
        Tensor dir({32});
        for (size_t i = 0; i < 32; ++i) dir[i] = rng.normal();
        const double h = 1e-4;
        Tensor f0 = model_forward(m, u, nullptr, gp);
        Tensor fp = model_forward(m, add(u, scale(dir, h)), nullptr, gp);
        Tensor fm = model_forward(m, sub(u, scale(dir, h)), nullptr, gp);
        for (size_t i = 0; i < 32; ++i)
            worst = std::max(worst, std::abs(fp[i] - 2.0 * f0[i] + fm[i]) / (h * h));
    }
    CHECK(worst < 1e4); // smooth activations: curvature bounded on compact boxes
}

TEST_CASE("checkpoint round trip reproduces forward outputs bitwise") {
    Model m = tiny_burgers_model(77);
    Checkpoint ck;
    ck.cfg = m.cfg;
    ck.stats = m.stats;
    ck.params = m.params;
    for (const auto& p : m.params) {
        ck.adam_m.push_back(Tensor(p.shape(), 0.125));
        ck.adam_v.push_back(Tensor(p.shape(), 0.5));
    }
    ck.adam_t = 42;
    ck.epoch = 7;
    ck.best_val = 0.0123;
    ck.seed = 99;

    fs::path dir = fs::temp_directory_path() / "stmf_ckpt_test";
    fs::remove_all(dir);
    save_checkpoint(dir, ck);
    Checkpoint r = load_checkpoint(dir);
    CHECK(r.epoch == 7);
    CHECK(r.adam_t == 42);
    CHECK(r.best_val == ck.best_val);
    CHECK(r.adam_v[2][0] == 0.5);

    Model m2 = model_from_checkpoint(r);
    Tensor u = random_field_1d(32, 15);
    Tensor a = model_forward(m, u, nullptr, grid_1d(32));
    Tensor b = model_forward(m2, u, nullptr, grid_1d(32));
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("ModelEval adapter consistency") {
    Model m = tiny_burgers_model();
    Tensor u_tau = random_field_1d(32, 16);
    ModelEval eval(m, u_tau, std::nullopt);
    GridPair gp = grid_1d(32, 0.2, 0.5, 2);

    Tensor direct = model_forward(m, shift_cells_periodic(u_tau, {2}), nullptr, gp);
    Tensor via = eval.m(gp);
    for (size_t i = 0; i < direct.size(); ++i) CHECK(via[i] == direct[i]);
    CHECK(eval.pairwise());
}

TEST_CASE("static model evaluates on coefficient fields") {
    ModelConfig cfg = default_model_config("darcy", 16);
    cfg.hidden = {16};
    cfg.seed = 5;
    Model m = init_model(cfg);
    Tensor u0({16, 16}, 0.0);
    Tensor a({16, 16}, 1.3);
    GridPair gp;
    gp.offset_cells = {0, 0};
    gp.res = 16;
    gp.dim = 2;
    gp.periodic = false;
    Tensor out = model_forward(m, u0, &a, gp);
    CHECK(out.ndim() == 2);
    CHECK(all_finite(out));
    ModelEval eval(m, u0, a);
    CHECK(!eval.pairwise());
    CHECK(max_abs(eval.jvp_tau(gp)) == 0.0);
}
