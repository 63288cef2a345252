#include "stmf/tensor.hpp"

#include <cmath>
#include <sstream>

namespace stmf {

std::string shape_str(const std::vector<size_t>& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

static void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out(a.shape());
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a.shape());
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a.shape());
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

Tensor scale(const Tensor& a, double s) {
    Tensor out(a.shape());
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
    return out;
}

Tensor add_scalar(const Tensor& a, double s) {
    Tensor out(a.shape());
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] + s;
    return out;
}

Tensor tanh_t(const Tensor& a) {
    Tensor out(a.shape());
    for (size_t i = 0; i < a.size(); ++i) out[i] = std::tanh(a[i]);
    return out;
}

Tensor exp_t(const Tensor& a) {
    Tensor out(a.shape());
    for (size_t i = 0; i < a.size(); ++i) out[i] = std::exp(a[i]);
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
        throw std::invalid_argument("matmul: need (m,k)x(k,n), got " +
                                    shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out({m, n}, 0.0);
    const double* A = a.data();
    const double* B = b.data();
    double* C = out.data();
    for (size_t i = 0; i < m; ++i) {
        const double* Ai = A + i * k;
        double* Ci = C + i * n;
        for (size_t p = 0; p < k; ++p) {
            const double aip = Ai[p];
            if (aip == 0.0) continue;
            const double* Bp = B + p * n;
            for (size_t j = 0; j < n; ++j) Ci[j] += aip * Bp[j];
        }
    }
    return out;
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i];
    return Tensor::scalar(s);
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw std::invalid_argument("mean: empty tensor");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i];
    return Tensor::scalar(s / static_cast<double>(a.size()));
}

Tensor slice(const Tensor& a, size_t offset, size_t len) {
    if (offset + len > a.size()) throw std::invalid_argument("slice: out of range");
    Tensor out({len});
    for (size_t i = 0; i < len; ++i) out[i] = a[offset + i];
    return out;
}

Tensor concat(const Tensor& a, const Tensor& b) {
    Tensor out({a.size() + b.size()});
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i];
    for (size_t i = 0; i < b.size(); ++i) out[a.size() + i] = b[i];
    return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(0) != b.dim(0))
        throw std::invalid_argument("concat_cols: need 2-D with equal rows");
    const size_t r = a.dim(0), ca = a.dim(1), cb = b.dim(1);
    Tensor out({r, ca + cb});
    for (size_t i = 0; i < r; ++i) {
        for (size_t j = 0; j < ca; ++j) out.at2(i, j) = a.at2(i, j);
        for (size_t j = 0; j < cb; ++j) out.at2(i, ca + j) = b.at2(i, j);
    }
    return out;
}

Tensor reshape(const Tensor& a, std::vector<size_t> shape) {
    if (Tensor::numel_of(shape) != a.size())
        throw std::invalid_argument("reshape: element count mismatch");
    Tensor out(std::move(shape));
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i];
    return out;
}

Tensor broadcast_rows(const Tensor& row, size_t nrows) {
    if (row.ndim() != 1) throw std::invalid_argument("broadcast_rows: need 1-D input");
    const size_t c = row.size();
    Tensor out({nrows, c});
    for (size_t i = 0; i < nrows; ++i)
        for (size_t j = 0; j < c; ++j) out.at2(i, j) = row[j];
    return out;
}

double dot(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "dot");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const Tensor& a) { return std::sqrt(dot(a, a)); }

double max_abs(const Tensor& a) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i]));
    return m;
}

double mean_val(const Tensor& a) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i];
    return s / static_cast<double>(a.size());
}

double rel_l2(const Tensor& pred, const Tensor& truth) {
    check_same_shape(pred, truth, "rel_l2");
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double d = pred[i] - truth[i];
        num += d * d;
        den += truth[i] * truth[i];
    }
    if (den == 0.0) return std::sqrt(num);
    return std::sqrt(num / den);
}

bool all_finite(const Tensor& a) {
    for (size_t i = 0; i < a.size(); ++i)
        if (!std::isfinite(a[i])) return false;
    return true;
}

void require_finite(const Tensor& a, const char* what) {
    if (!all_finite(a))
        throw std::runtime_error(std::string("non-finite values in ") + what);
}

} // namespace stmf
