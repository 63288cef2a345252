#include "stmf/meanflow.hpp"
#include "stmf/classical.hpp"
#include "stmf/fft.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>

namespace stmf {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

// stable l - l_t = l_s^2 / (l + l_t); the naive difference cancels for
// small spatial legs and would corrupt the gap-order measurements
double l_minus_lt(double l, double l_t, double l_s) {
    if (l + l_t == 0.0) return 0.0;
    return l_s * l_s / (l + l_t);
}

Tensor shift_cells_clamped(const Tensor& t, const std::vector<long>& cells) {
    Tensor out(t.shape());
    if (t.ndim() == 1) {
        const long n = static_cast<long>(t.dim(0));
        for (long i = 0; i < n; ++i) {
            long s = std::clamp(i - cells[0], 0L, n - 1);
            out[i] = t[s];
        }
    } else {
        const long rows = static_cast<long>(t.dim(0));
        const long cols = static_cast<long>(t.dim(1));
        for (long r = 0; r < rows; ++r)
            for (long c = 0; c < cols; ++c) {
                long sr = std::clamp(r - cells[0], 0L, rows - 1);
                long sc = std::clamp(c - cells[1], 0L, cols - 1);
                out.data()[r * cols + c] = t.data()[sr * cols + sc];
            }
    }
    return out;
}

// anchor-side sample: value at xi = x - offset, indexed by the target x
Tensor sample_at_xi(const Tensor& t, const GridPair& gp) {
    if (gp.periodic) return shift_cells_periodic(t, gp.offset_cells);
    return shift_cells_clamped(t, gp.offset_cells);
}

Tensor grad_axis(const Tensor& u, size_t axis, const GridPair& gp) {
    if (gp.periodic) return spectral_deriv(u, axis, 1.0);
    return fd_deriv(u, axis, gp.h(), false);
}

std::vector<long> unit_cells(int dim, int axis, long v) {
    std::vector<long> c(dim, 0);
    c[axis] = v;
    return c;
}

std::vector<long> add_cells(const std::vector<long>& a, const std::vector<long>& b) {
    std::vector<long> c(a.size());
    for (size_t i = 0; i < a.size(); ++i) c[i] = a[i] + b[i];
    return c;
}
} // namespace

// ---------------------------------------------------------------- geometry

PathSegment path_length(const std::vector<double>& xi, double tau,
                        const std::vector<double>& x, double t) {
    if (xi.size() != x.size())
        throw std::invalid_argument("path_length: coordinate dimension mismatch");
    for (double v : xi)
        if (!std::isfinite(v)) throw std::invalid_argument("path_length: non-finite anchor");
    for (double v : x)
        if (!std::isfinite(v)) throw std::invalid_argument("path_length: non-finite target");
    PathSegment s;
    s.xi = xi;
    s.x = x;
    s.tau = tau;
    s.t = t;
    s.l_t = t - tau;
    double ss = 0.0;
    for (size_t i = 0; i < x.size(); ++i) ss += (x[i] - xi[i]) * (x[i] - xi[i]);
    s.l_s = std::sqrt(ss);
    s.l = std::sqrt(s.l_t * s.l_t + s.l_s * s.l_s);
    return s;
}

Tensor valid_mask(const GridPair& gp, long extra_cells) {
    std::vector<size_t> shape =
        (gp.dim == 1) ? std::vector<size_t>{gp.res} : std::vector<size_t>{gp.res, gp.res};
    if (gp.periodic) return Tensor(shape, 1.0);
    long margin = extra_cells;
    for (long c : gp.offset_cells) margin = std::max(margin, std::labs(c) + extra_cells);
    Tensor m(shape, 0.0);
    const long n = static_cast<long>(gp.res);
    if (gp.dim == 1) {
        for (long i = std::max(1L, margin); i < n - std::max(1L, margin); ++i) m[i] = 1.0;
    } else {
        for (long i = std::max(1L, margin); i < n - std::max(1L, margin); ++i)
            for (long j = std::max(1L, margin); j < n - std::max(1L, margin); ++j)
                m.at2(i, j) = 1.0;
    }
    return m;
}

double masked_mean_sq(const Tensor& r, const Tensor& mask) {
    double s = 0.0, w = 0.0;
    for (size_t i = 0; i < r.size(); ++i) {
        s += mask[i] * r[i] * r[i];
        w += mask[i];
    }
    if (w == 0.0) throw std::runtime_error("masked_mean_sq: empty mask");
    return s / w;
}

// ---------------------------------------------------------------- pde specs

PdeSpec pde_burgers(double nu) {
    PdeSpec p;
    p.kind = "burgers";
    p.gamma = 1;
    p.dim = 1;
    p.periodic = true;
    p.nu = nu;
    p.has_gsplit = true;
    return p;
}

PdeSpec pde_advection(std::vector<double> c) {
    PdeSpec p;
    p.kind = "advection";
    p.gamma = 1;
    p.dim = static_cast<int>(c.size());
    p.periodic = true;
    p.wave_speed = std::move(c);
    p.has_gsplit = true;
    return p;
}

PdeSpec pde_ns2d(double nu, bool forcing) {
    PdeSpec p;
    p.kind = "ns2d";
    p.gamma = 1;
    p.dim = 2;
    p.periodic = true;
    p.nu = nu;
    p.forcing = forcing;
    p.has_gsplit = true;
    return p;
}

PdeSpec pde_darcy(Tensor a) {
    PdeSpec p;
    p.kind = "darcy";
    p.gamma = 0;
    p.dim = 2;
    p.periodic = false;
    p.coef = std::move(a);
    p.has_gsplit = true;
    return p;
}

PdeSpec pde_poisson(Tensor q) {
    PdeSpec p;
    p.kind = "poisson";
    p.gamma = 0;
    p.dim = 2;
    p.periodic = false;
    p.coef = std::move(q);
    p.has_gsplit = true;
    return p;
}

PdeSpec make_pde_for(const std::string& kind, const Tensor* sample_input, double nu) {
    if (kind == "burgers") return pde_burgers(nu);
    if (kind == "ns2d") return pde_ns2d(nu);
    if (kind == "darcy") {
        if (!sample_input) throw std::invalid_argument("darcy pde needs the coefficient field");
        return pde_darcy(*sample_input);
    }
    if (kind == "poisson") {
        if (!sample_input) throw std::invalid_argument("poisson pde needs the source field");
        return pde_poisson(*sample_input);
    }
    throw std::invalid_argument("unsupported pde kind: " + kind);
}

namespace {
// velocity from vorticity through the streamfunction, spectral
void ns_velocity(const Tensor& w, Tensor& vx, Tensor& vy) {
    const size_t n = w.dim(0);
    std::vector<std::complex<double>> wh(n * n);
    for (size_t i = 0; i < n * n; ++i) wh[i] = w[i];
    fft_2d(wh, n, n, false);
    std::vector<std::complex<double>> vxh(n * n), vyh(n * n);
    for (size_t r = 0; r < n; ++r)
        for (size_t c = 0; c < n; ++c) {
            double kx = kTwoPi * static_cast<double>(fft_freq(r, n));
            double ky = kTwoPi * static_cast<double>(fft_freq(c, n));
            double k2 = kx * kx + ky * ky;
            std::complex<double> psi = (k2 > 0.0) ? wh[r * n + c] / k2 : 0.0;
            vxh[r * n + c] = std::complex<double>(0.0, ky) * psi;
            vyh[r * n + c] = std::complex<double>(0.0, -kx) * psi;
        }
    fft_2d(vxh, n, n, true);
    fft_2d(vyh, n, n, true);
    vx = Tensor(w.shape());
    vy = Tensor(w.shape());
    for (size_t i = 0; i < n * n; ++i) {
        vx[i] = vxh[i].real();
        vy[i] = vyh[i].real();
    }
}
} // namespace

Tensor pde_rhs(const PdeSpec& pde, const Tensor& u) {
    if (pde.kind == "burgers") {
        Tensor ux = spectral_deriv(u, 0);
        Tensor uxx = spectral_laplacian(u);
        Tensor f(u.shape());
        for (size_t i = 0; i < u.size(); ++i) f[i] = -u[i] * ux[i] + pde.nu * uxx[i];
        return f;
    }
    if (pde.kind == "advection") {
        Tensor f(u.shape(), 0.0);
        for (int d = 0; d < pde.dim; ++d) {
            Tensor ud = spectral_deriv(u, static_cast<size_t>(d));
            for (size_t i = 0; i < u.size(); ++i) f[i] -= pde.wave_speed[d] * ud[i];
        }
        return f;
    }
    if (pde.kind == "ns2d") {
        Tensor vx, vy;
        ns_velocity(u, vx, vy);
        Tensor wx = spectral_deriv(u, 0);
        Tensor wy = spectral_deriv(u, 1);
        Tensor lap = spectral_laplacian(u);
        Tensor f(u.shape());
        for (size_t i = 0; i < u.size(); ++i)
            f[i] = -(vx[i] * wx[i] + vy[i] * wy[i]) + pde.nu * lap[i];
        if (pde.forcing) {
            Field q = ns_forcing(u.dim(0));
            for (size_t i = 0; i < u.size(); ++i) f[i] += q.at(i);
        }
        return f;
    }
    if (pde.kind == "darcy") {
        Field af(pde.coef);
        Field uf(u);
        Tensor op = darcy_apply(af, uf); // -div(a grad u)
        Tensor f(u.shape(), 0.0);
        const size_t res = u.dim(0);
        for (size_t i = 1; i + 1 < res; ++i)
            for (size_t j = 1; j + 1 < res; ++j) f.at2(i, j) = 1.0 - op.at2(i, j);
        return f;
    }
    if (pde.kind == "poisson") {
        const size_t res = u.dim(0);
        double h = 1.0 / static_cast<double>(res - 1);
        Tensor lap = fd_laplacian(u, h, false);
        Tensor f(u.shape(), 0.0);
        for (size_t i = 1; i + 1 < res; ++i)
            for (size_t j = 1; j + 1 < res; ++j) f.at2(i, j) = lap.at2(i, j) - pde.coef.at2(i, j);
        return f;
    }
    throw std::invalid_argument("pde_rhs: unsupported kind " + pde.kind);
}

std::vector<Tensor> gsplit_g(const PdeSpec& pde, const Tensor& u_at_xi) {
    if (!pde.has_gsplit) throw std::invalid_argument("pde has no g/h split");
    if (pde.kind == "burgers") return {scale(u_at_xi, -1.0)};
    if (pde.kind == "advection") {
        std::vector<Tensor> g;
        for (int d = 0; d < pde.dim; ++d)
            g.push_back(Tensor(u_at_xi.shape(), -pde.wave_speed[d]));
        return g;
    }
    if (pde.kind == "ns2d") {
        Tensor vx, vy;
        ns_velocity(u_at_xi, vx, vy);
        return {scale(vx, -1.0), scale(vy, -1.0)};
    }
    if (pde.kind == "darcy") {
        double h = 1.0 / static_cast<double>(pde.coef.dim(0) - 1);
        return {fd_deriv(pde.coef, 0, h, false), fd_deriv(pde.coef, 1, h, false)};
    }
    if (pde.kind == "poisson") {
        std::vector<Tensor> g;
        for (int d = 0; d < pde.dim; ++d) g.push_back(Tensor(u_at_xi.shape(), 0.0));
        return g;
    }
    throw std::invalid_argument("gsplit_g: unsupported kind " + pde.kind);
}

Tensor gsplit_h(const PdeSpec& pde, const Tensor& u) {
    if (pde.kind == "burgers") return scale(spectral_laplacian(u), pde.nu);
    if (pde.kind == "advection") return Tensor(u.shape(), 0.0);
    if (pde.kind == "ns2d") {
        Tensor h = scale(spectral_laplacian(u), pde.nu);
        if (pde.forcing) {
            Field q = ns_forcing(u.dim(0));
            h = add(h, q.values);
        }
        return h;
    }
    if (pde.kind == "darcy") {
        double hx = 1.0 / static_cast<double>(u.dim(0) - 1);
        Tensor lap = fd_laplacian(u, hx, false);
        Tensor out(u.shape());
        for (size_t i = 0; i < u.size(); ++i) out[i] = pde.coef[i] * lap[i] + 1.0;
        return out;
    }
    if (pde.kind == "poisson") {
        double hx = 1.0 / static_cast<double>(u.dim(0) - 1);
        Tensor lap = fd_laplacian(u, hx, false);
        return sub(lap, pde.coef);
    }
    throw std::invalid_argument("gsplit_h: unsupported kind " + pde.kind);
}

double gsplit_opnorm(const PdeSpec& pde, const Tensor& u_at_xi) {
    auto g = gsplit_g(pde, u_at_xi);
    double m = 0.0;
    for (size_t i = 0; i < u_at_xi.size(); ++i) {
        double s = 0.0;
        for (const auto& gd : g) s += gd[i] * gd[i];
        m = std::max(m, s);
    }
    return std::sqrt(m);
}

// ---------------------------------------------------------------- oracles

AdvectionOracle::AdvectionOracle(Tensor u0, std::vector<double> c)
    : u0_(std::move(u0)), c_(std::move(c)) {
    if ((u0_.ndim() == 1 && c_.size() != 1) || (u0_.ndim() == 2 && c_.size() != 2))
        throw std::invalid_argument("AdvectionOracle: wave speed dimension mismatch");
}

Tensor AdvectionOracle::m(const GridPair& gp) const {
    std::vector<double> off_t(c_.size()), off_a(c_.size());
    auto delta = gp.offset_phys();
    for (size_t d = 0; d < c_.size(); ++d) {
        off_t[d] = c_[d] * gp.t;
        off_a[d] = delta[d] + c_[d] * gp.tau;
    }
    Tensor ut = spectral_shift(u0_, off_t);
    Tensor ua = spectral_shift(u0_, off_a);
    return scale(sub(ut, ua), 1.0 / gp.l());
}

Tensor AdvectionOracle::jvp_u(const GridPair& gp, const Tensor& dir) const {
    std::vector<double> off(c_.size());
    auto delta = gp.offset_phys();
    for (size_t d = 0; d < c_.size(); ++d) off[d] = c_[d] * gp.l_t() - delta[d];
    Tensor moved = spectral_shift(dir, off);
    return scale(sub(moved, dir), 1.0 / gp.l());
}

Tensor AdvectionOracle::jvp_tau(const GridPair& gp) const {
    // the value-partial dm/dtau of Eq-(7): the anchor state is held fixed,
    // tau varies only through l and the target-side sample point x - c l_t
    const double l = gp.l();
    std::vector<double> off_t(c_.size());
    for (size_t d = 0; d < c_.size(); ++d) off_t[d] = c_[d] * gp.t;
    Tensor acc(u0_.shape(), 0.0);
    for (size_t d = 0; d < c_.size(); ++d) {
        Tensor g = spectral_deriv(u0_, d);
        Tensor gs = spectral_shift(g, off_t);
        for (size_t i = 0; i < acc.size(); ++i) acc[i] += c_[d] * gs[i];
    }
    Tensor mm = m(gp);
    Tensor out(u0_.shape());
    const double lt = gp.l_t();
    for (size_t i = 0; i < out.size(); ++i) out[i] = acc[i] / l + mm[i] * lt / (l * l);
    return out;
}

LinearFieldOracle::LinearFieldOracle(double a, std::vector<double> b, size_t res, int dim,
                                     bool periodic)
    : a_(a), b_(std::move(b)), res_(res), dim_(dim), periodic_(periodic) {}

Tensor LinearFieldOracle::field_values() const {
    double h = periodic_ ? 1.0 / res_ : 1.0 / (res_ - 1);
    if (dim_ == 1) {
        Tensor t({res_});
        for (size_t i = 0; i < res_; ++i) t[i] = a_ + b_[0] * i * h;
        return t;
    }
    Tensor t({res_, res_});
    for (size_t i = 0; i < res_; ++i)
        for (size_t j = 0; j < res_; ++j) t.at2(i, j) = a_ + b_[0] * i * h + b_[1] * j * h;
    return t;
}

Tensor LinearFieldOracle::m(const GridPair& gp) const {
    auto delta = gp.offset_phys();
    double v = 0.0;
    for (size_t d = 0; d < delta.size(); ++d) v += b_[d] * delta[d];
    std::vector<size_t> shape =
        (dim_ == 1) ? std::vector<size_t>{res_} : std::vector<size_t>{res_, res_};
    return Tensor(shape, v / gp.l());
}

Tensor LinearFieldOracle::jvp_u(const GridPair& gp, const Tensor& dir) const {
    std::vector<long> back(gp.offset_cells.size());
    for (size_t d = 0; d < back.size(); ++d) back[d] = -gp.offset_cells[d];
    Tensor moved = periodic_ ? shift_cells_periodic(dir, back) : shift_cells_clamped(dir, back);
    return scale(sub(moved, dir), 1.0 / gp.l());
}

Tensor LinearFieldOracle::jvp_tau(const GridPair& gp) const {
    (void)gp;
    std::vector<size_t> shape =
        (dim_ == 1) ? std::vector<size_t>{res_} : std::vector<size_t>{res_, res_};
    return Tensor(shape, 0.0);
}

// ---------------------------------------------------------------- K and reconstruction

Tensor reconstruct_state(const Tensor& u_anchor, const Tensor& m_field, double l_t, double l,
                         ReconstructMode mode) {
    if (!u_anchor.same_shape(m_field))
        throw std::invalid_argument("reconstruct_state: shape mismatch");
    double mult = 1.0;
    switch (mode) {
    case ReconstructMode::FixedGrid: mult = l_t; break;
    case ReconstructMode::Generalized: mult = l; break;
    case ReconstructMode::Static: mult = 1.0; break;
    }
    return add(u_anchor, scale(m_field, mult));
}

Tensor apply_K(const Tensor& v, const std::function<Tensor(const Tensor&)>& jvp_u, double l) {
    if (l == 0.0) return v;
    return add(v, scale(jvp_u(v), l));
}

Tensor apply_K_inverse(const Tensor& v, const std::function<Tensor(const Tensor&)>& jvp_u,
                       double l, int J, bool* diverged) {
    Tensor acc = v;
    Tensor term = v;
    const double v0 = norm2(v);
    if (diverged) *diverged = false;
    for (int j = 1; j <= J; ++j) {
        term = scale(jvp_u(term), -l);
        // a term outgrowing the input signals a non-contractive l dm/du
        if (norm2(term) > v0 && diverged) *diverged = true;
        acc = add(acc, term);
    }
    return acc;
}

// ---------------------------------------------------------------- residual internals

namespace {

Tensor anchor_sample(const MeanFlowEval& eval, const GridPair& gp, const Tensor& t) {
    if (eval.pairwise()) return sample_at_xi(t, gp);
    return t; // static evaluators keep everything on the native grid
}

// numerical gradients of the anchor state, sampled at the anchor points
std::vector<Tensor> anchor_grads(const MeanFlowEval& eval, const GridPair& gp,
                                 const Tensor& u_tau) {
    std::vector<Tensor> g;
    for (int d = 0; d < gp.dim; ++d)
        g.push_back(anchor_sample(eval, gp, grad_axis(u_tau, static_cast<size_t>(d), gp)));
    return g;
}

struct XiDerivs {
    std::vector<Tensor> dm_dxi;  // per axis, the coordinate-partial
    Tensor lap_m;                // laplacian in xi, only filled when requested
};

// The residual formulas use the coordinate-partial dm/dxi of the predictor,
// i.e. the anchor-state inputs held fixed. Anchor-shift differences move the
// state inputs along with xi, so the chain contribution (dm/du) grad(u)
// is removed afterwards: partial = total_FD - jvp_u(grad u at xi).
XiDerivs xi_derivatives(const MeanFlowEval& eval, const GridPair& gp, const Tensor& m0,
                        const std::vector<Tensor>& g_at_xi, bool need_lap) {
    XiDerivs out;
    const double h = gp.h();
    if (eval.pairwise()) {
        if (need_lap) out.lap_m = Tensor(m0.shape(), 0.0);
        for (int d = 0; d < gp.dim; ++d) {
            // moving the anchor by +h along axis d shrinks the offset
            Tensor mp = eval.m(gp.with_offset(add_cells(gp.offset_cells, unit_cells(gp.dim, d, -1))));
            Tensor mm = eval.m(gp.with_offset(add_cells(gp.offset_cells, unit_cells(gp.dim, d, +1))));
            Tensor total = scale(sub(mp, mm), 1.0 / (2.0 * h));
            out.dm_dxi.push_back(sub(total, eval.jvp_u(gp, g_at_xi[d])));
            if (need_lap) {
                for (size_t i = 0; i < m0.size(); ++i)
                    out.lap_m[i] += (mp[i] - 2.0 * m0[i] + mm[i]) / (h * h);
            }
        }
    } else {
        for (int d = 0; d < gp.dim; ++d) {
            Tensor total = fd_deriv(m0, static_cast<size_t>(d), h, gp.periodic);
            out.dm_dxi.push_back(sub(total, eval.jvp_u(gp, g_at_xi[d])));
        }
        if (need_lap) out.lap_m = fd_laplacian(m0, h, gp.periodic);
    }
    return out;
}

} // namespace

// ---------------------------------------------------------------- residuals

Tensor temporal_residual(const MeanFlowEval& eval, const Tensor& u_tau, const PdeSpec& pde,
                         const GridPair& gp) {
    const double l = gp.l();
    Tensor m0 = eval.m(gp);
    Tensor f = anchor_sample(eval, gp, pde_rhs(pde, u_tau));
    Tensor Kf = apply_K(f, [&](const Tensor& v) { return eval.jvp_u(gp, v); }, l);
    Tensor r = sub(m0, Kf);
    if (pde.gamma != 0) {
        Tensor dmdtau = eval.jvp_tau(gp);
        r = sub(r, scale(dmdtau, static_cast<double>(pde.gamma) * gp.l_t()));
    }
    return r;
}

std::vector<Tensor> spatial_residual(const MeanFlowEval& eval, const Tensor& u_tau,
                                     const PdeSpec& pde, const GridPair& gp, Tensor* mask_out) {
    bool nonzero = false;
    for (long c : gp.offset_cells) nonzero |= (c != 0);
    if (!nonzero)
        throw std::invalid_argument("spatial_residual: anchor offset must be at least one cell");
    const double l = gp.l(), ls = gp.l_s();
    auto delta = gp.offset_phys();

    Tensor m0 = eval.m(gp);
    std::vector<Tensor> g_phys = anchor_grads(eval, gp, u_tau);
    std::vector<Tensor> g_chain =
        eval.anchor_input() ? anchor_grads(eval, gp, *eval.anchor_input()) : g_phys;
    XiDerivs xd = xi_derivatives(eval, gp, m0, g_chain, false);

    std::vector<Tensor> r;
    for (int d = 0; d < gp.dim; ++d) {
        Tensor Kg = apply_K(g_phys[d], [&](const Tensor& v) { return eval.jvp_u(gp, v); }, l);
        Tensor rd(m0.shape());
        for (size_t i = 0; i < rd.size(); ++i)
            rd[i] = ls * Kg[i] - m0[i] * delta[d] + ls * ls * xd.dm_dxi[d][i];
        r.push_back(std::move(rd));
    }
    if (mask_out) *mask_out = valid_mask(gp);
    (void)pde;
    return r;
}

Tensor st_residual(const MeanFlowEval& eval, const Tensor& u_tau, const PdeSpec& pde,
                   const GridPair& gp, bool substitute, int neumann_J) {
    const double l = gp.l(), lt = gp.l_t();
    const double gamma = static_cast<double>(pde.gamma);
    Tensor m0 = eval.m(gp);
    auto jvp = [&](const Tensor& v) { return eval.jvp_u(gp, v); };

    Tensor Kf;
    if (!substitute) {
        Tensor f = anchor_sample(eval, gp, pde_rhs(pde, u_tau));
        Kf = apply_K(f, jvp, l);
    } else {
        // first-order gradients through Eq-(8, first line):
        //   K grad(u)_d = m delta_d / l - l dm/dxi_d
        auto delta = gp.offset_phys();
        std::vector<Tensor> g_phys = anchor_grads(eval, gp, u_tau);
        std::vector<Tensor> g_chain =
            eval.anchor_input() ? anchor_grads(eval, gp, *eval.anchor_input()) : g_phys;
        XiDerivs xd = xi_derivatives(eval, gp, m0, g_chain, false);
        auto gvec = gsplit_g(pde, anchor_sample(eval, gp, u_tau));
        Kf = Tensor(m0.shape(), 0.0);
        for (int d = 0; d < gp.dim; ++d) {
            for (size_t i = 0; i < Kf.size(); ++i) {
                double Kgrad = m0[i] * delta[d] / l - l * xd.dm_dxi[d][i];
                Kf[i] += Kgrad * gvec[d][i];
            }
        }
        // second-order content of h through the Laplacian constraint;
        // advection has h = 0 and needs nothing further
        if (pde.kind != "advection") {
            Tensor lap_u = second_order_constraint(eval, u_tau, gp, neumann_J);
            Tensor h_sub;
            if (pde.kind == "burgers") {
                h_sub = scale(lap_u, pde.nu);
            } else if (pde.kind == "ns2d") {
                h_sub = scale(lap_u, pde.nu);
                if (pde.forcing) h_sub = add(h_sub, ns_forcing(u_tau.dim(0)).values);
            } else if (pde.kind == "darcy") {
                Tensor coef = anchor_sample(eval, gp, pde.coef);
                h_sub = add_scalar(mul(coef, lap_u), 1.0);
            } else if (pde.kind == "poisson") {
                h_sub = sub(lap_u, anchor_sample(eval, gp, pde.coef));
            } else {
                throw std::invalid_argument("st_residual: no substitution for " + pde.kind);
            }
            Kf = add(Kf, apply_K(h_sub, jvp, l));
        }
    }

    Tensor r(m0.shape());
    for (size_t i = 0; i < r.size(); ++i) r[i] = lt * m0[i] - l * Kf[i];
    if (pde.gamma != 0) {
        Tensor dmdtau = eval.jvp_tau(gp);
        for (size_t i = 0; i < r.size(); ++i) r[i] -= gamma * l * l * dmdtau[i];
    }
    return r;
}

Tensor second_order_constraint(const MeanFlowEval& eval, const Tensor& u_tau,
                               const GridPair& gp, int neumann_J) {
    const double l = gp.l(), ls = gp.l_s();
    if (l == 0.0) throw std::invalid_argument("second_order_constraint: degenerate segment l=0");
    const double n = static_cast<double>(gp.dim);
    auto delta = gp.offset_phys();

    Tensor m0 = eval.m(gp);
    const Tensor& chain_src = eval.anchor_input() ? *eval.anchor_input() : u_tau;
    std::vector<Tensor> g_chain = anchor_grads(eval, gp, chain_src);
    XiDerivs xd = xi_derivatives(eval, gp, m0, g_chain, true);
    auto jvp = [&](const Tensor& v) { return eval.jvp_u(gp, v); };

    // Lap(m) in the partial convention of the constraint: the second-order
    // chain through the anchor state carries the (dm/du) Lap(u) piece that
    // belongs to the K side, so it is removed with the measured Lap(u).
    Tensor lap_u = anchor_sample(
        eval, gp,
        gp.periodic ? spectral_laplacian(chain_src) : fd_laplacian(chain_src, gp.h(), false));
    Tensor lap_chain = jvp(lap_u);
    Tensor lap_m_partial(m0.shape());
    for (size_t i = 0; i < m0.size(); ++i)
        lap_m_partial[i] = 0.5 * (xd.lap_m[i] - lap_chain[i]);

    Tensor alpha(m0.shape());
    for (size_t i = 0; i < alpha.size(); ++i)
        alpha[i] = n * m0[i] - (ls * ls) / (l * l) * m0[i] + 2.0 * l * l * lap_m_partial[i];

    Tensor jm = jvp(m0);
    Tensor beta(m0.shape(), 0.0);
    for (int d = 0; d < gp.dim; ++d)
        for (size_t i = 0; i < beta.size(); ++i) beta[i] -= xd.dm_dxi[d][i] * delta[d];
    for (size_t i = 0; i < beta.size(); ++i) beta[i] -= (ls * ls) / l * jm[i];

    bool diverged = false;
    Tensor Kinv_beta = apply_K_inverse(beta, jvp, l, neumann_J, &diverged);
    Tensor rhs(m0.shape());
    for (size_t i = 0; i < rhs.size(); ++i) rhs[i] = -(alpha[i] + 2.0 * Kinv_beta[i]);
    bool diverged2 = false;
    Tensor implied = apply_K_inverse(rhs, jvp, l, neumann_J, &diverged2);
    if (diverged || diverged2)
        throw std::runtime_error("second_order_constraint: Neumann series diverged");
    return scale(implied, 1.0 / l);
}

double total_loss(double data_loss, double r_temp_sq, double r_spac_sq, double lambda_t,
                  double lambda_s, int gamma) {
    if (lambda_t < 0.0 || lambda_s < 0.0)
        throw std::invalid_argument("total_loss: negative weights");
    double s = data_loss + lambda_s * r_spac_sq;
    if (gamma != 0) s += lambda_t * r_temp_sq;
    return s;
}

// ---------------------------------------------------------------- decoupling

DecouplingTerms decoupling_terms(const MeanFlowEval& eval, const Tensor& u_tau,
                                 const PdeSpec& pde, const GridPair& gp) {
    if (!pde.has_gsplit) throw std::invalid_argument("decoupling_terms: pde has no g/h split");
    const double l = gp.l(), lt = gp.l_t(), ls = gp.l_s();
    if (!(ls > 0.0)) throw std::invalid_argument("decoupling_terms: needs a spatial leg");
    const double gamma = static_cast<double>(pde.gamma);
    const double lml = l_minus_lt(l, lt, ls); // l - l_t, stable
    auto delta = gp.offset_phys();
    auto jvp = [&](const Tensor& v) { return eval.jvp_u(gp, v); };

    Tensor m0 = eval.m(gp);
    std::vector<Tensor> g_phys = anchor_grads(eval, gp, u_tau);
    std::vector<Tensor> g_chain =
        eval.anchor_input() ? anchor_grads(eval, gp, *eval.anchor_input()) : g_phys;
    XiDerivs xd = xi_derivatives(eval, gp, m0, g_chain, false);
    Tensor dmdtau = (gamma != 0.0) ? eval.jvp_tau(gp) : Tensor(m0.shape(), 0.0);

    Tensor u_xi = anchor_sample(eval, gp, u_tau);
    auto gvec = gsplit_g(pde, u_xi);
    Tensor h_native = gsplit_h(pde, u_tau);
    Tensor h = anchor_sample(eval, gp, h_native);
    Tensor Kh = apply_K(h, jvp, l);

    std::vector<Tensor> Kg(gp.dim);
    for (int d = 0; d < gp.dim; ++d) Kg[d] = apply_K(g_phys[d], jvp, l);

    // split K f = sum_d (K grad u)_d g_d + K h
    Tensor Kf(m0.shape(), 0.0);
    for (int d = 0; d < gp.dim; ++d)
        for (size_t i = 0; i < Kf.size(); ++i) Kf[i] += Kg[d][i] * gvec[d][i];
    Kf = add(Kf, Kh);

    Tensor r_temp(m0.shape()), r_mf(m0.shape());
    for (size_t i = 0; i < m0.size(); ++i) {
        r_temp[i] = m0[i] - Kf[i] - gamma * lt * dmdtau[i];
        r_mf[i] = lt * m0[i] - l * Kf[i] - gamma * l * l * dmdtau[i];
    }

    std::vector<Tensor> r_spac(gp.dim);
    for (int d = 0; d < gp.dim; ++d) {
        r_spac[d] = Tensor(m0.shape());
        for (size_t i = 0; i < m0.size(); ++i)
            r_spac[d][i] = ls * Kg[d][i] - m0[i] * delta[d] + ls * ls * xd.dm_dxi[d][i];
    }

    // remainder: ((l_t-l)/l_s) [m delta - l_s^2 dm/dxi].g + (l_t-l) K h
    //            + (l_t^2 - gamma l^2) dm/dtau
    const double coef = -lml / ls; // (l_t - l)/l_s
    const double tcoef = (gamma != 0.0) ? -(ls * ls) : lt * lt; // l_t^2 - gamma l^2, stable
    Tensor rem(m0.shape(), 0.0);
    for (int d = 0; d < gp.dim; ++d)
        for (size_t i = 0; i < rem.size(); ++i)
            rem[i] += coef * (m0[i] * delta[d] - ls * ls * xd.dm_dxi[d][i]) * gvec[d][i];
    for (size_t i = 0; i < rem.size(); ++i)
        rem[i] += -lml * Kh[i] + tcoef * dmdtau[i];

    // exactness of the decomposition r_mf = l_t r_temp + coef * r_spac.g + rem,
    // measured against the size of the decomposition pieces
    double idmax = 0.0, scale_ref = 1e-300;
    for (size_t i = 0; i < m0.size(); ++i) {
        double recon = lt * r_temp[i] + rem[i];
        double piece = std::max(std::abs(lt * r_temp[i]), std::abs(rem[i]));
        for (int d = 0; d < gp.dim; ++d) {
            recon += coef * r_spac[d][i] * gvec[d][i];
            piece = std::max(piece, std::abs(coef * r_spac[d][i] * gvec[d][i]));
        }
        idmax = std::max(idmax, std::abs(recon - r_mf[i]));
        scale_ref = std::max({scale_ref, piece, std::abs(r_mf[i])});
    }

    Tensor mask = valid_mask(gp);
    DecouplingTerms out;
    out.lhs = masked_mean_sq(r_mf, mask);
    out.c1 = 3.0 * lt * lt;
    out.g_opnorm = gsplit_opnorm(pde, u_xi);
    out.c2 = 3.0 * (lml / ls * out.g_opnorm) * (lml / ls * out.g_opnorm);
    out.r_temp_sq = masked_mean_sq(r_temp, mask);
    out.r_spac_sq = 0.0;
    for (int d = 0; d < gp.dim; ++d) out.r_spac_sq += masked_mean_sq(r_spac[d], mask);
    out.eps = 3.0 * masked_mean_sq(rem, mask);
    out.identity_err = idmax / std::max(scale_ref, 1e-30);
    return out;
}

double advection_identity_residual(const std::function<double(double)>& u0, double c, double xi,
                                   double tau, double x, double t, double fd_step) {
    auto mval = [&](double xi_, double tau_) {
        double lt = t - tau_;
        double lsd = x - xi_;
        double l = std::sqrt(lt * lt + lsd * lsd);
        return (u0(x - c * t) - u0(xi_ - c * tau_)) / l;
    };
    double m = mval(xi, tau);
    double dmdxi = (mval(xi + fd_step, tau) - mval(xi - fd_step, tau)) / (2.0 * fd_step);
    double dmdtau = (mval(xi, tau + fd_step) - mval(xi, tau - fd_step)) / (2.0 * fd_step);
    double lt = t - tau;
    double lsd = x - xi;
    double l2 = lt * lt + lsd * lsd;
    return (lt + lsd * c) * m - l2 * (dmdxi * c + dmdtau);
}

} // namespace stmf
