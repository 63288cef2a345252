#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stmf/dual.hpp"
#include "stmf/rng.hpp"
#include "stmf/tape.hpp"
#include "stmf/tensor.hpp"

#include <cmath>

using namespace stmf;

namespace {

Tensor broadcast_rows_like(const Tensor& row, const Tensor& m) {
    return broadcast_rows(row, m.dim(0));
}
Dual broadcast_rows_like(const Dual& row, const Dual& m) {
    return broadcast_rows(row, m.val.dim(0));
}
Var broadcast_rows_like(Var row, Var m) {
    return broadcast_rows(row, row.tape->value(m).dim(0));
}

// small 2-layer tanh net used as the generic differentiable map in the
// forward/reverse consistency checks
template <typename T>
T toy_net(const T& W1, const T& b1, const T& W2, const T& b2, const T& x) {
    T h = tanh_t(add(matmul(x, W1), broadcast_rows_like(b1, x)));
    return add(matmul(h, W2), broadcast_rows_like(b2, h));
}

Tensor rand_tensor(std::vector<size_t> shape, Rng& rng, double s = 1.0) {
    Tensor t(shape);
    for (size_t i = 0; i < t.size(); ++i) t[i] = s * rng.normal();
    return t;
}

} // namespace

TEST_CASE("jvp of elementwise square") {
    // f(u) = u*u at u=[3] along dir=[1] -> tangent [6]
    Dual u(Tensor::vector({3.0}), Tensor::vector({1.0}));
    Dual y = mul(u, u);
    CHECK(y.val[0] == doctest::Approx(9.0));
    CHECK(y.tan[0] == doctest::Approx(6.0));
}

TEST_CASE("jvp of a linear map is exact") {
    Rng rng(7);
    Tensor W = rand_tensor({3, 3}, rng);
    Tensor v = rand_tensor({1, 3}, rng);
    Tensor x = rand_tensor({1, 3}, rng);
    Dual xd(x, v);
    Dual y = matmul(xd, Dual::constant(W));
    Tensor expect = matmul(v, W);
    for (size_t i = 0; i < 3; ++i) CHECK(y.tan[i] == doctest::Approx(expect[i]).epsilon(1e-15));
}

TEST_CASE("jvp matches central finite differences on a tanh net") {
    Rng rng(11);
    Tensor W1 = rand_tensor({4, 8}, rng, 0.5);
    Tensor b1 = rand_tensor({8}, rng, 0.1);
    Tensor W2 = rand_tensor({8, 2}, rng, 0.5);
    Tensor b2 = rand_tensor({2}, rng, 0.1);
    Tensor x = rand_tensor({1, 4}, rng);
    Tensor dir = rand_tensor({1, 4}, rng);

    auto eval = [&](const Tensor& xin) {
        return toy_net<Tensor>(W1, b1, W2, b2, xin);
    };
    Dual yd = toy_net<Dual>(Dual::constant(W1), Dual::constant(b1), Dual::constant(W2),
                            Dual::constant(b2), Dual(x, dir));

    const double h = 1e-5;
    Tensor xp = add(x, scale(dir, h));
    Tensor xm = sub(x, scale(dir, h));
    Tensor fd = scale(sub(eval(xp), eval(xm)), 1.0 / (2.0 * h));
    for (size_t i = 0; i < fd.size(); ++i) {
        double denom = std::max(std::abs(fd[i]), 1e-12);
        CHECK(std::abs(yd.tan[i] - fd[i]) / denom < 1e-6);
    }
}

TEST_CASE("grad of squared norm") {
    Tape tape;
    Var p = tape.leaf(Tensor::vector({1.0, 2.0}), true);
    Var loss = sum(mul(p, p));
    tape.backward(loss);
    CHECK(tape.grad(p)[0] == doctest::Approx(2.0));
    CHECK(tape.grad(p)[1] == doctest::Approx(4.0));
}

TEST_CASE("grad of unused parameter is zero") {
    Tape tape;
    Var used = tape.leaf(Tensor::vector({2.0}), true);
    Var unused = tape.leaf(Tensor::vector({5.0, 5.0}), true);
    Var loss = sum(mul(used, used));
    tape.backward(loss);
    CHECK(tape.grad(unused)[0] == 0.0);
    CHECK(tape.grad(unused)[1] == 0.0);
}

TEST_CASE("forward/reverse consistency on a random 2-layer net") {
    Rng rng(23);
    Tensor W1 = rand_tensor({3, 6}, rng, 0.6);
    Tensor b1 = rand_tensor({6}, rng, 0.1);
    Tensor W2 = rand_tensor({6, 1}, rng, 0.6);
    Tensor b2 = rand_tensor({1}, rng, 0.1);
    Tensor x = rand_tensor({2, 3}, rng);

    // scalar loss L(params) = sum(net(x)^2)
    auto loss_dual = [&](const Dual& w1, const Dual& bb1, const Dual& w2, const Dual& bb2) {
        Dual y = toy_net<Dual>(w1, bb1, w2, bb2, Dual::constant(x));
        return sum(mul(y, y));
    };

    Tape tape;
    Var w1 = tape.leaf(W1, true);
    Var bb1 = tape.leaf(b1, true);
    Var w2 = tape.leaf(W2, true);
    Var bb2 = tape.leaf(b2, true);
    Var y = toy_net<Var>(w1, bb1, w2, bb2, tape.constant(x));
    Var L = sum(mul(y, y));
    tape.backward(L);

    for (int trial = 0; trial < 5; ++trial) {
        Tensor v1 = rand_tensor({3, 6}, rng);
        Tensor v2 = rand_tensor({6}, rng);
        Tensor v3 = rand_tensor({6, 1}, rng);
        Tensor v4 = rand_tensor({1}, rng);
        Dual Ld = loss_dual(Dual(W1, v1), Dual(b1, v2), Dual(W2, v3), Dual(b2, v4));
        double fwd = Ld.tan[0];
        double rev = dot(tape.grad(w1), v1) + dot(tape.grad(bb1), v2) +
                     dot(tape.grad(w2), v3) + dot(tape.grad(bb2), v4);
        CHECK(std::abs(fwd - rev) / std::max(std::abs(fwd), 1e-12) < 1e-8);
    }
}

TEST_CASE("stop_gradient blocks reverse flow") {
    // d/dx [stop(x) * x] at x=3 is 3, not 6
    Tape tape;
    Var x = tape.leaf(Tensor::vector({3.0}), true);
    Var y = sum(mul(stop_gradient(x), x));
    tape.backward(y);
    CHECK(tape.grad(x)[0] == doctest::Approx(3.0));
}

TEST_CASE("stop_gradient kills forward tangents") {
    Dual x(Tensor::vector({3.0}), Tensor::vector({1.0}));
    Dual y = stop_gradient(x);
    CHECK(y.tan[0] == 0.0);
}

TEST_CASE("stop_gradient regression target expands as expected") {
    // L = (w*x - stop(t))^2 on a 1-param net: dL/dw = 2 (w x - t) x
    const double w = 0.7, x = 1.3, t = 2.0;
    Tape tape;
    Var wv = tape.leaf(Tensor::vector({w}), true);
    Var xv = tape.constant(Tensor::vector({x}));
    Var tv = stop_gradient(tape.constant(Tensor::vector({t})));
    Var r = sub(mul(wv, xv), tv);
    Var L = sum(mul(r, r));
    tape.backward(L);
    CHECK(tape.grad(wv)[0] == doctest::Approx(2.0 * (w * x - t) * x).epsilon(1e-14));
}

TEST_CASE("jvp of composition follows the chain rule exactly") {
    Rng rng(5);
    Tensor x = rand_tensor({1, 4}, rng);
    Tensor dir = rand_tensor({1, 4}, rng);
    Tensor W = rand_tensor({4, 4}, rng, 0.5);

    // g(f(x)) with f = tanh(xW), g = sum of squares, composed in one pass
    Dual f = tanh_t(matmul(Dual(x, dir), Dual::constant(W)));
    Dual g = sum(mul(f, f));

    // two-stage: jvp of g applied to the (value, tangent) of f
    Dual g2 = sum(mul(Dual(f.val, f.tan), Dual(f.val, f.tan)));
    CHECK(g.tan[0] == g2.tan[0]); // bitwise equal, same primitives
}

TEST_CASE("taped evaluation is deterministic") {
    Rng rng(99);
    Tensor W = rand_tensor({5, 5}, rng);
    Tensor x = rand_tensor({2, 5}, rng);
    auto run = [&]() {
        Tape tape;
        Var wv = tape.leaf(W, true);
        Var y = sum(tanh_t(matmul(tape.constant(x), wv)));
        tape.backward(y);
        return std::make_pair(tape.value(y)[0], tape.grad(wv)[7]);
    };
    auto a = run();
    auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
}

TEST_CASE("exp primitive differentiates both ways") {
    Tape tape;
    Var x = tape.leaf(Tensor::vector({0.3}), true);
    Var y = sum(exp_t(x));
    tape.backward(y);
    CHECK(tape.grad(x)[0] == doctest::Approx(std::exp(0.3)).epsilon(1e-14));

    Dual xd(Tensor::vector({0.3}), Tensor::vector({2.0}));
    CHECK(exp_t(xd).tan[0] == doctest::Approx(2.0 * std::exp(0.3)).epsilon(1e-14));
}

TEST_CASE("non-finite values are detectable as an error state") {
    Tensor t = Tensor::vector({1.0, 2.0});
    CHECK(all_finite(t));
    t[1] = std::numeric_limits<double>::infinity();
    CHECK(!all_finite(t));
    CHECK_THROWS(require_finite(t, "test tensor"));
}
