#pragma once

#include "stmf/tensor.hpp"

#include <cmath>

namespace stmf {

// Forward-mode pair (primal, tangent). One dual pass through a map built
// from these overloads yields the exact directional derivative; this is how
// the tau- and u-direction JVPs are evaluated.
struct Dual {
    Tensor val;
    Tensor tan;

    Dual() = default;
    Dual(Tensor v, Tensor t) : val(std::move(v)), tan(std::move(t)) {
        if (!val.same_shape(tan))
            throw std::invalid_argument("Dual: primal/tangent shape mismatch");
    }
    // constant: zero tangent
    static Dual constant(Tensor v) {
        Tensor z(v.shape(), 0.0);
        return Dual(std::move(v), std::move(z));
    }
};

inline Dual add(const Dual& a, const Dual& b) { return {add(a.val, b.val), add(a.tan, b.tan)}; }
inline Dual sub(const Dual& a, const Dual& b) { return {sub(a.val, b.val), sub(a.tan, b.tan)}; }

inline Dual mul(const Dual& a, const Dual& b) {
    return {mul(a.val, b.val), add(mul(a.tan, b.val), mul(a.val, b.tan))};
}

inline Dual scale(const Dual& a, double s) { return {scale(a.val, s), scale(a.tan, s)}; }
inline Dual add_scalar(const Dual& a, double s) { return {add_scalar(a.val, s), a.tan}; }

inline Dual tanh_t(const Dual& a) {
    Tensor y = tanh_t(a.val);
    Tensor t(a.val.shape());
    for (size_t i = 0; i < y.size(); ++i) t[i] = (1.0 - y[i] * y[i]) * a.tan[i];
    return {std::move(y), std::move(t)};
}

inline Dual exp_t(const Dual& a) {
    Tensor y = exp_t(a.val);
    Tensor t = mul(y, a.tan);
    return {std::move(y), std::move(t)};
}

inline Dual matmul(const Dual& a, const Dual& b) {
    return {matmul(a.val, b.val), add(matmul(a.tan, b.val), matmul(a.val, b.tan))};
}

inline Dual sum(const Dual& a) { return {sum(a.val), sum(a.tan)}; }
inline Dual mean(const Dual& a) { return {mean(a.val), mean(a.tan)}; }

inline Dual slice(const Dual& a, size_t offset, size_t len) {
    return {slice(a.val, offset, len), slice(a.tan, offset, len)};
}

inline Dual concat(const Dual& a, const Dual& b) {
    return {concat(a.val, b.val), concat(a.tan, b.tan)};
}

inline Dual concat_cols(const Dual& a, const Dual& b) {
    return {concat_cols(a.val, b.val), concat_cols(a.tan, b.tan)};
}

inline Dual broadcast_rows(const Dual& row, size_t nrows) {
    return {broadcast_rows(row.val, nrows), broadcast_rows(row.tan, nrows)};
}

inline Dual reshape(const Dual& a, std::vector<size_t> shape) {
    return {reshape(a.val, shape), reshape(a.tan, std::move(shape))};
}

// value passes through, tangent is killed
inline Dual stop_gradient(const Dual& a) { return Dual::constant(a.val); }

inline Tensor value_of(const Dual& a) { return a.val; }

// ---- the same generic surface for plain tensors, so one templated map
// body serves plain eval, dual eval and taped eval ----
inline Tensor stop_gradient(const Tensor& a) { return a; }
inline Tensor value_of(const Tensor& a) { return a; }

} // namespace stmf
