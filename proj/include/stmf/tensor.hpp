#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace stmf {

// Dense row-major f64 tensor. All numerics in this project run in double;
// the bound checks need the headroom.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<size_t> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(numel_of(shape_), fill) {}

    Tensor(std::vector<size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (numel_of(shape_) != data_.size())
            throw std::invalid_argument("Tensor: shape/data size mismatch");
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor vector(std::initializer_list<double> vs) {
        return Tensor({vs.size()}, std::vector<double>(vs));
    }

    const std::vector<size_t>& shape() const { return shape_; }
    size_t ndim() const { return shape_.size(); }
    size_t size() const { return data_.size(); }
    size_t dim(size_t i) const { return shape_.at(i); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    double& at2(size_t r, size_t c) { return data_[r * shape_[1] + c]; }
    double at2(size_t r, size_t c) const { return data_[r * shape_[1] + c]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    static size_t numel_of(const std::vector<size_t>& shape) {
        size_t n = 1;
        for (size_t d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

private:
    std::vector<size_t> shape_;
    std::vector<double> data_;
};

std::string shape_str(const std::vector<size_t>& s);

// ---- elementwise / linear algebra on plain tensors ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor tanh_t(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor matmul(const Tensor& a, const Tensor& b); // 2-D only
Tensor sum(const Tensor& a);                     // -> scalar tensor
Tensor mean(const Tensor& a);                    // -> scalar tensor
Tensor slice(const Tensor& a, size_t offset, size_t len);    // flat slice
Tensor concat(const Tensor& a, const Tensor& b);             // flat concat
Tensor concat_cols(const Tensor& a, const Tensor& b);        // 2-D, same rows
Tensor broadcast_rows(const Tensor& row, size_t nrows);      // 1-D -> 2-D tile
Tensor reshape(const Tensor& a, std::vector<size_t> shape);  // same data

double dot(const Tensor& a, const Tensor& b);
double norm2(const Tensor& a);
double max_abs(const Tensor& a);
double mean_val(const Tensor& a);
double rel_l2(const Tensor& pred, const Tensor& truth);

bool all_finite(const Tensor& a);
// Throws if any entry is NaN/Inf. Used at module boundaries; a non-finite
// tensor is an error state, never a value.
void require_finite(const Tensor& a, const char* what);

} // namespace stmf
