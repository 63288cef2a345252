#pragma once

#include "stmf/tensor.hpp"

#include <array>
#include <vector>

namespace stmf {

// Grid-sampled state on the unit interval/square. 1-D fields are periodic
// with res samples at i/res; 2-D fields include boundary nodes at
// i/(res-1) when non-periodic (Darcy/Poisson) or are periodic like 1-D (NS).
struct Field {
    Tensor values;     // (res) or (res,res)
    size_t res = 0;
    double extent = 1.0;

    Field() = default;
    explicit Field(Tensor v, double ext = 1.0) : values(std::move(v)), extent(ext) {
        if (values.ndim() == 1) res = values.dim(0);
        else if (values.ndim() == 2 && values.dim(0) == values.dim(1)) res = values.dim(0);
        else throw std::invalid_argument("Field: need (n) or (n,n) tensor");
    }
    static Field zeros_1d(size_t res) { return Field(Tensor({res}, 0.0)); }
    static Field zeros_2d(size_t res) { return Field(Tensor({res, res}, 0.0)); }

    size_t ndim() const { return values.ndim(); }
    size_t size() const { return values.size(); }
    double& at(size_t i) { return values[i]; }
    double at(size_t i) const { return values[i]; }
    double& at(size_t i, size_t j) { return values.at2(i, j); }
    double at(size_t i, size_t j) const { return values.at2(i, j); }
};

// ---- periodic spectral operators (grid at i/res, spacing extent/res) ----

// d/dx along the given axis (0 = rows/"x1", 1 = cols/"x2")
Tensor spectral_deriv(const Tensor& t, size_t axis, double extent = 1.0);
Tensor spectral_laplacian(const Tensor& t, double extent = 1.0);
// translate by a (possibly fractional) offset in physical units per axis
Tensor spectral_shift(const Tensor& t, const std::vector<double>& offset, double extent = 1.0);

// ---- finite-difference operators (2nd order) ----

// central interior, one-sided 2nd-order at non-periodic boundaries
Tensor fd_deriv(const Tensor& t, size_t axis, double spacing, bool periodic);
Tensor fd_laplacian(const Tensor& t, double spacing, bool periodic);

// integer-cell shift: out[i] = t[i - cells] with periodic wrap
Tensor shift_cells_periodic(const Tensor& t, const std::vector<long>& cells);

// grid spacing of a field: periodic grids use extent/res, bounded grids
// extent/(res-1)
inline double grid_spacing(const Field& f, bool periodic) {
    return periodic ? f.extent / static_cast<double>(f.res)
                    : f.extent / static_cast<double>(f.res - 1);
}

} // namespace stmf
