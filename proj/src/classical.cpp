#include "stmf/classical.hpp"
#include "stmf/fft.hpp"
#include "stmf/parallel.hpp"
#include "stmf/rng.hpp"

#include <cmath>
#include <complex>
#include <iostream>
#include <mutex>

namespace stmf {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
using cvec = std::vector<std::complex<double>>;

void dealias_23_1d(cvec& c) {
    const size_t n = c.size();
    const size_t cutoff = n / 3;
    for (size_t j = 0; j < n; ++j)
        if (static_cast<size_t>(std::labs(fft_freq(j, n))) > cutoff) c[j] = 0.0;
}

void dealias_23_2d(cvec& c, size_t n) {
    const size_t cutoff = n / 3;
    for (size_t r = 0; r < n; ++r)
        for (size_t cc = 0; cc < n; ++cc) {
            if (static_cast<size_t>(std::labs(fft_freq(r, n))) > cutoff ||
                static_cast<size_t>(std::labs(fft_freq(cc, n))) > cutoff)
                c[r * n + cc] = 0.0;
        }
}

[[noreturn]] void blow_up(const char* solver, double t, double maxval) {
    throw std::runtime_error(std::string(solver) + ": solution blew up at t=" +
                             std::to_string(t) + " (max |u| = " + std::to_string(maxval) + ")");
}
} // namespace

// ---------------------------------------------------------------- burgers

std::vector<Field> burgers_solve(const Field& u0, const BurgersOptions& opt) {
    if (u0.ndim() != 1) throw std::invalid_argument("burgers_solve: need 1-D field");
    if (u0.res < 8) throw std::invalid_argument("burgers_solve: res must be >= 8");
    if (!(opt.nu > 0.0)) throw std::invalid_argument("burgers_solve: nu must be positive");
    if (opt.n_save < 2) throw std::invalid_argument("burgers_solve: n_save must be >= 2");
    require_finite(u0.values, "burgers initial condition");

    const size_t n = u0.res;
    const double h = 1.0 / static_cast<double>(n);

    std::vector<double> k(n), diff(n);
    for (size_t j = 0; j < n; ++j) {
        k[j] = kTwoPi * static_cast<double>(fft_freq(j, n));
        diff[j] = -opt.nu * k[j] * k[j];
    }

    cvec uh(n);
    for (size_t i = 0; i < n; ++i) uh[i] = u0.at(i);
    fft_1d(uh, false);

    // -1/2 d/dx (u^2), computed de-aliased in physical space
    cvec work(n), usq(n);
    auto nonlinear = [&](const cvec& state, cvec& out) {
        work = state;
        dealias_23_1d(work);
        fft_1d(work, true);
        for (size_t i = 0; i < n; ++i) {
            double u = work[i].real();
            usq[i] = u * u;
        }
        fft_1d(usq, false);
        for (size_t j = 0; j < n; ++j)
            out[j] = std::complex<double>(0.0, -0.5 * k[j]) * usq[j];
        dealias_23_1d(out);
    };

    std::vector<Field> traj;
    traj.reserve(opt.n_save);
    traj.push_back(u0);

    cvec k1(n), k2(n), up(n), cur(n);
    const double save_dt = opt.T / static_cast<double>(opt.n_save - 1);
    double t = 0.0;
    for (size_t s = 1; s < opt.n_save; ++s) {
        // current physical state, for the CFL-based step choice
        cur = uh;
        fft_1d(cur, true);
        double umax = 0.0;
        for (size_t i = 0; i < n; ++i) umax = std::max(umax, std::abs(cur[i].real()));
        size_t steps = opt.steps_per_interval;
        if (steps == 0) {
            double dt_target = opt.cfl * h / std::max(1.0, umax);
            steps = static_cast<size_t>(std::ceil(save_dt / dt_target));
        }
        const double dt = save_dt / static_cast<double>(steps);

        for (size_t st = 0; st < steps; ++st) {
            nonlinear(uh, k1);
            for (size_t j = 0; j < n; ++j) {
                double ap = 1.0 + 0.5 * dt * diff[j];
                double am = 1.0 - 0.5 * dt * diff[j];
                up[j] = (ap * uh[j] + dt * k1[j]) / am;
            }
            nonlinear(up, k2);
            for (size_t j = 0; j < n; ++j) {
                double ap = 1.0 + 0.5 * dt * diff[j];
                double am = 1.0 - 0.5 * dt * diff[j];
                uh[j] = (ap * uh[j] + 0.5 * dt * (k1[j] + k2[j])) / am;
            }
        }
        t += save_dt;

        cur = uh;
        fft_1d(cur, true);
        Tensor snap({n});
        double m = 0.0;
        for (size_t i = 0; i < n; ++i) {
            snap[i] = cur[i].real();
            m = std::max(m, std::abs(snap[i]));
        }
        if (!all_finite(snap) || m > 1e8) blow_up("burgers_solve", t, m);
        traj.emplace_back(std::move(snap));
    }
    return traj;
}

// ---------------------------------------------------------------- ns2d

Field ns_forcing(size_t res) {
    Tensor q({res, res});
    for (size_t i = 0; i < res; ++i)
        for (size_t j = 0; j < res; ++j) {
            double x = static_cast<double>(i) / res;
            double y = static_cast<double>(j) / res;
            q.at2(i, j) = 0.1 * (std::sin(kTwoPi * (x + y)) + std::cos(kTwoPi * (x + y)));
        }
    return Field(std::move(q));
}

std::vector<Field> ns_vorticity_solve(const Field& w0, const NsOptions& opt) {
    if (w0.ndim() != 2) throw std::invalid_argument("ns_vorticity_solve: need 2-D field");
    if (w0.res < 8) throw std::invalid_argument("ns_vorticity_solve: res must be >= 8");
    if (std::abs(mean_val(w0.values)) > 1e-8)
        throw std::invalid_argument("ns_vorticity_solve: vorticity must be mean-zero");
    if (opt.n_save < 2) throw std::invalid_argument("ns_vorticity_solve: n_save must be >= 2");
    require_finite(w0.values, "ns initial vorticity");

    const size_t n = w0.res;
    const size_t nn = n * n;
    const double h = 1.0 / static_cast<double>(n);

    std::vector<double> kx(nn), ky(nn), k2(nn), diff(nn);
    for (size_t r = 0; r < n; ++r)
        for (size_t c = 0; c < n; ++c) {
            size_t id = r * n + c;
            kx[id] = kTwoPi * static_cast<double>(fft_freq(r, n));
            ky[id] = kTwoPi * static_cast<double>(fft_freq(c, n));
            k2[id] = kx[id] * kx[id] + ky[id] * ky[id];
            diff[id] = -opt.nu * k2[id];
        }

    cvec qh(nn, 0.0);
    if (opt.forcing) {
        Field q = ns_forcing(n);
        for (size_t i = 0; i < nn; ++i) qh[i] = q.at(i);
        fft_2d(qh, n, n, false);
    }

    cvec wh(nn);
    for (size_t i = 0; i < nn; ++i) wh[i] = w0.at(i);
    fft_2d(wh, n, n, false);

    cvec vx(nn), vy(nn), wx(nn), wy(nn);
    bool cfl_warned = false;
    double max_speed = 0.0;
    auto nonlinear = [&](const cvec& state, cvec& out) {
        for (size_t i = 0; i < nn; ++i) {
            std::complex<double> psi = (k2[i] > 0.0) ? state[i] / k2[i] : 0.0;
            vx[i] = std::complex<double>(0.0, ky[i]) * psi;  // u = d(psi)/dy
            vy[i] = std::complex<double>(0.0, -kx[i]) * psi; // v = -d(psi)/dx
            wx[i] = std::complex<double>(0.0, kx[i]) * state[i];
            wy[i] = std::complex<double>(0.0, ky[i]) * state[i];
        }
        dealias_23_2d(vx, n);
        dealias_23_2d(vy, n);
        dealias_23_2d(wx, n);
        dealias_23_2d(wy, n);
        fft_2d(vx, n, n, true);
        fft_2d(vy, n, n, true);
        fft_2d(wx, n, n, true);
        fft_2d(wy, n, n, true);
        for (size_t i = 0; i < nn; ++i) {
            double sp = std::hypot(vx[i].real(), vy[i].real());
            max_speed = std::max(max_speed, sp);
            out[i] = -(vx[i].real() * wx[i].real() + vy[i].real() * wy[i].real());
        }
        fft_2d(out, n, n, false);
        for (size_t i = 0; i < nn; ++i) out[i] += qh[i];
        dealias_23_2d(out, n);
        out[0] = 0.0; // advection and forcing are mean-free; keep it exact
    };

    std::vector<Field> traj;
    traj.reserve(opt.n_save);
    traj.push_back(w0);

    cvec k1(nn), k2h(nn), wp(nn), cur(nn);
    const double save_dt = opt.T / static_cast<double>(opt.n_save - 1);
    double t = 0.0;
    for (size_t s = 1; s < opt.n_save; ++s) {
        size_t steps = static_cast<size_t>(std::ceil(save_dt / opt.dt - 1e-12));
        const double dt = save_dt / static_cast<double>(steps);
        for (size_t st = 0; st < steps; ++st) {
            max_speed = 0.0;
            nonlinear(wh, k1);
            if (!cfl_warned && max_speed * dt / h > 1.0) {
                std::cerr << "[ns_vorticity_solve] CFL warning: max|v|*dt/h = "
                          << max_speed * dt / h << " > 1 at t=" << t << "\n";
                cfl_warned = true;
            }
            for (size_t i = 0; i < nn; ++i) {
                double ap = 1.0 + 0.5 * dt * diff[i];
                double am = 1.0 - 0.5 * dt * diff[i];
                wp[i] = (ap * wh[i] + dt * k1[i]) / am;
            }
            nonlinear(wp, k2h);
            for (size_t i = 0; i < nn; ++i) {
                double ap = 1.0 + 0.5 * dt * diff[i];
                double am = 1.0 - 0.5 * dt * diff[i];
                wh[i] = (ap * wh[i] + 0.5 * dt * (k1[i] + k2h[i])) / am;
            }
            t += dt;
        }

        cur = wh;
        fft_2d(cur, n, n, true);
        Tensor snap({n, n});
        double m = 0.0;
        for (size_t i = 0; i < nn; ++i) {
            snap[i] = cur[i].real();
            m = std::max(m, std::abs(snap[i]));
        }
        if (!all_finite(snap) || m > 1e8) blow_up("ns_vorticity_solve", t, m);
        traj.emplace_back(std::move(snap));
    }
    return traj;
}

// ---------------------------------------------------------------- CG

size_t cg_solve(const std::function<void(const Tensor&, Tensor&)>& apply_A, const Tensor& b,
                Tensor& x, const Tensor& jacobi_diag, double tol, size_t max_iter) {
    const size_t n = b.size();
    Tensor r(b.shape()), z(b.shape()), p(b.shape()), Ap(b.shape());
    apply_A(x, Ap);
    for (size_t i = 0; i < n; ++i) r[i] = b[i] - Ap[i];
    for (size_t i = 0; i < n; ++i) z[i] = r[i] / jacobi_diag[i];
    p = z;
    double rz = dot(r, z);
    const double bnorm = std::max(norm2(b), 1e-300);
    size_t it = 0;
    for (; it < max_iter; ++it) {
        if (norm2(r) / bnorm <= tol) break;
        apply_A(p, Ap);
        double alpha = rz / dot(p, Ap);
        for (size_t i = 0; i < n; ++i) x[i] += alpha * p[i];
        for (size_t i = 0; i < n; ++i) r[i] -= alpha * Ap[i];
        for (size_t i = 0; i < n; ++i) z[i] = r[i] / jacobi_diag[i];
        double rz_new = dot(r, z);
        double beta = rz_new / rz;
        rz = rz_new;
        for (size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    return it;
}

// ---------------------------------------------------------------- darcy

namespace {

// face-averaged coefficients for the flux form, arithmetic mean
struct DarcyOperator {
    const Field& a;
    size_t res;
    double invh2;

    DarcyOperator(const Field& af)
        : a(af), res(af.res),
          invh2(static_cast<double>((af.res - 1) * (af.res - 1))) {}

    double face(size_t i1, size_t j1, size_t i2, size_t j2) const {
        return 0.5 * (a.at(i1, j1) + a.at(i2, j2));
    }

    // x holds interior unknowns, (res-2)^2, row-major over i=1..res-2
    void apply(const Tensor& x, Tensor& out) const {
        const size_t m = res - 2;
        auto xv = [&](size_t i, size_t j) -> double {
            if (i == 0 || j == 0 || i == res - 1 || j == res - 1) return 0.0;
            return x[(i - 1) * m + (j - 1)];
        };
        for (size_t i = 1; i + 1 < res; ++i)
            for (size_t j = 1; j + 1 < res; ++j) {
                double an = face(i, j, i - 1, j), as = face(i, j, i + 1, j);
                double aw = face(i, j, i, j - 1), ae = face(i, j, i, j + 1);
                double v = (an + as + aw + ae) * xv(i, j) - an * xv(i - 1, j) -
                           as * xv(i + 1, j) - aw * xv(i, j - 1) - ae * xv(i, j + 1);
                out[(i - 1) * m + (j - 1)] = v * invh2;
            }
    }

    Tensor diag() const {
        const size_t m = res - 2;
        Tensor d({m * m});
        for (size_t i = 1; i + 1 < res; ++i)
            for (size_t j = 1; j + 1 < res; ++j) {
                double an = face(i, j, i - 1, j), as = face(i, j, i + 1, j);
                double aw = face(i, j, i, j - 1), ae = face(i, j, i, j + 1);
                d[(i - 1) * m + (j - 1)] = (an + as + aw + ae) * invh2;
            }
        return d;
    }
};

void check_darcy_input(const Field& a) {
    if (a.ndim() != 2) throw std::invalid_argument("darcy_solve: need 2-D coefficient field");
    if (a.res < 8) throw std::invalid_argument("darcy_solve: res must be >= 8");
    for (size_t i = 0; i < a.size(); ++i)
        if (!(a.at(i) > 0.0))
            throw std::invalid_argument("darcy_solve: coefficient must be positive everywhere");
}

Field interior_to_field(const Tensor& x, size_t res) {
    Tensor u({res, res}, 0.0);
    const size_t m = res - 2;
    for (size_t i = 1; i + 1 < res; ++i)
        for (size_t j = 1; j + 1 < res; ++j) u.at2(i, j) = x[(i - 1) * m + (j - 1)];
    return Field(std::move(u));
}

} // namespace

Field darcy_solve(const Field& a, double q, double tol) {
    check_darcy_input(a);
    const size_t res = a.res;
    const size_t m = res - 2;
    DarcyOperator op(a);
    Tensor b({m * m}, q);
    Tensor x({m * m}, 0.0);
    Tensor d = op.diag();
    size_t iters = cg_solve([&](const Tensor& v, Tensor& out) { op.apply(v, out); }, b, x, d,
                            tol, 50 * m * m);
    (void)iters;
    Field u = interior_to_field(x, res);
    require_finite(u.values, "darcy solution");
    return u;
}

Field darcy_solve_dense(const Field& a, double q) {
    check_darcy_input(a);
    if (a.res > 34) throw std::invalid_argument("darcy_solve_dense: oracle limited to res <= 34");
    const size_t res = a.res;
    const size_t m = res - 2;
    const size_t N = m * m;
    DarcyOperator op(a);

    // assemble columns by applying the operator to unit vectors
    std::vector<double> A(N * N, 0.0);
    Tensor e({N}, 0.0), col({N});
    for (size_t j = 0; j < N; ++j) {
        e[j] = 1.0;
        op.apply(e, col);
        for (size_t i = 0; i < N; ++i) A[i * N + j] = col[i];
        e[j] = 0.0;
    }
    std::vector<double> b(N, q);

    // LU with partial pivoting
    std::vector<size_t> piv(N);
    for (size_t i = 0; i < N; ++i) piv[i] = i;
    for (size_t k = 0; k < N; ++k) {
        size_t pk = k;
        double best = std::abs(A[piv[k] * N + k]);
        for (size_t i = k + 1; i < N; ++i) {
            double v = std::abs(A[piv[i] * N + k]);
            if (v > best) { best = v; pk = i; }
        }
        if (best == 0.0) throw std::runtime_error("darcy_solve_dense: singular system");
        std::swap(piv[k], piv[pk]);
        const size_t rk = piv[k];
        for (size_t i = k + 1; i < N; ++i) {
            const size_t ri = piv[i];
            double f = A[ri * N + k] / A[rk * N + k];
            A[ri * N + k] = f;
            for (size_t j = k + 1; j < N; ++j) A[ri * N + j] -= f * A[rk * N + j];
        }
    }
    std::vector<double> y(N), xs(N);
    for (size_t i = 0; i < N; ++i) {
        double s = b[piv[i]];
        for (size_t j = 0; j < i; ++j) s -= A[piv[i] * N + j] * y[j];
        y[i] = s;
    }
    for (size_t ii = N; ii-- > 0;) {
        double s = y[ii];
        for (size_t j = ii + 1; j < N; ++j) s -= A[piv[ii] * N + j] * xs[j];
        xs[ii] = s / A[piv[ii] * N + ii];
    }
    Tensor x({N});
    for (size_t i = 0; i < N; ++i) x[i] = xs[i];
    return interior_to_field(x, res);
}

Tensor darcy_apply(const Field& a, const Field& u) {
    const size_t res = a.res;
    const size_t m = res - 2;
    DarcyOperator op(a);
    Tensor x({m * m});
    for (size_t i = 1; i + 1 < res; ++i)
        for (size_t j = 1; j + 1 < res; ++j) x[(i - 1) * m + (j - 1)] = u.at(i, j);
    Tensor Ax({m * m});
    op.apply(x, Ax);
    Tensor out({res, res}, 0.0);
    for (size_t i = 1; i + 1 < res; ++i)
        for (size_t j = 1; j + 1 < res; ++j) out.at2(i, j) = Ax[(i - 1) * m + (j - 1)];
    return out;
}

double darcy_residual_inf(const Field& a, const Field& u, double q) {
    DarcyOperator op(a);
    const size_t m = a.res - 2;
    Tensor x({m * m});
    for (size_t i = 1; i + 1 < a.res; ++i)
        for (size_t j = 1; j + 1 < a.res; ++j) x[(i - 1) * m + (j - 1)] = u.at(i, j);
    Tensor Ax({m * m});
    op.apply(x, Ax);
    double r = 0.0;
    for (size_t i = 0; i < m * m; ++i) r = std::max(r, std::abs(Ax[i] - q));
    return r;
}

// ---------------------------------------------------------------- poisson

Field poisson_solve(const Field& q, double tol) {
    if (q.ndim() != 2) throw std::invalid_argument("poisson_solve: need 2-D source field");
    if (q.res < 8) throw std::invalid_argument("poisson_solve: res must be >= 8");
    const size_t res = q.res;
    const size_t m = res - 2;
    const double invh2 = static_cast<double>((res - 1) * (res - 1));

    // solve -Lap u = -q (SPD form of Lap u = q)
    auto apply = [&](const Tensor& x, Tensor& out) {
        auto xv = [&](size_t i, size_t j) -> double {
            if (i == 0 || j == 0 || i == res - 1 || j == res - 1) return 0.0;
            return x[(i - 1) * m + (j - 1)];
        };
        for (size_t i = 1; i + 1 < res; ++i)
            for (size_t j = 1; j + 1 < res; ++j)
                out[(i - 1) * m + (j - 1)] =
                    (4.0 * xv(i, j) - xv(i - 1, j) - xv(i + 1, j) - xv(i, j - 1) -
                     xv(i, j + 1)) * invh2;
    };
    Tensor b({m * m});
    for (size_t i = 1; i + 1 < res; ++i)
        for (size_t j = 1; j + 1 < res; ++j) b[(i - 1) * m + (j - 1)] = -q.at(i, j);
    Tensor x({m * m}, 0.0);
    Tensor d({m * m}, 4.0 * invh2);
    cg_solve(apply, b, x, d, tol, 50 * m * m);
    Field u = interior_to_field(x, res);
    require_finite(u.values, "poisson solution");
    return u;
}

double poisson_residual_inf(const Field& q, const Field& u) {
    const size_t res = q.res;
    const double invh2 = static_cast<double>((res - 1) * (res - 1));
    double r = 0.0;
    for (size_t i = 1; i + 1 < res; ++i)
        for (size_t j = 1; j + 1 < res; ++j) {
            double lap = (u.at(i - 1, j) + u.at(i + 1, j) + u.at(i, j - 1) + u.at(i, j + 1) -
                          4.0 * u.at(i, j)) * invh2;
            r = std::max(r, std::abs(lap - q.at(i, j)));
        }
    return r;
}

// ---------------------------------------------------------------- harmonic extension

Field harmonic_extension(const Field& boundary_values, int iters) {
    if (boundary_values.ndim() != 2)
        throw std::invalid_argument("harmonic_extension: need 2-D field");
    if (iters < 1) throw std::invalid_argument("harmonic_extension: iters must be >= 1");
    const size_t res = boundary_values.res;

    Field u = boundary_values;
    double bmean = 0.0;
    size_t bcount = 0;
    for (size_t i = 0; i < res; ++i)
        for (size_t j = 0; j < res; ++j)
            if (i == 0 || j == 0 || i == res - 1 || j == res - 1) {
                bmean += u.at(i, j);
                ++bcount;
            }
    bmean /= static_cast<double>(bcount);
    for (size_t i = 1; i + 1 < res; ++i)
        for (size_t j = 1; j + 1 < res; ++j) u.at(i, j) = bmean;

    Tensor next = u.values;
    for (int it = 0; it < iters; ++it) {
        for (size_t i = 1; i + 1 < res; ++i)
            for (size_t j = 1; j + 1 < res; ++j)
                next.at2(i, j) = 0.25 * (u.at(i - 1, j) + u.at(i + 1, j) + u.at(i, j - 1) +
                                         u.at(i, j + 1));
        std::swap(u.values, next);
    }
    return u;
}

// ---------------------------------------------------------------- datasets

GenConfig default_gen_config(const std::string& pde) {
    GenConfig c;
    c.pde = pde;
    if (pde == "burgers") {
        c.n = 1000;
        c.res = 128;
        c.n_save = 33;
        c.nu = 0.01;
        c.T = 1.0;
        c.grf = GrfParams{1, c.res, 2.5, 7.0, 49.0, 0};
    } else if (pde == "ns2d") {
        c.n = 200;   // desk scale
        c.res = 64;  // desk scale (128 in the source protocol)
        c.n_save = 11;
        c.nu = 1e-3;
        c.T = 1.0;
        c.dt = 1e-4;
        c.grf = GrfParams{2, c.res, 2.5, 7.0, grf_default_sigma(2.5, 7.0, 2), 0};
    } else if (pde == "darcy") {
        c.n = 300;
        c.res = 64;  // desk scale
        c.grf = GrfParams{2, c.res, 2.0, 3.0, grf_default_sigma(2.0, 3.0, 2), 0};
    } else if (pde == "poisson") {
        c.n = 300;
        c.res = 64;  // desk scale
        c.grf = GrfParams{2, c.res, 2.0, 3.0, grf_default_sigma(2.0, 3.0, 2), 0};
    } else {
        throw std::invalid_argument("unknown pde: " + pde);
    }
    return c;
}

void assign_splits(Dataset& ds) {
    const size_t n = ds.inputs.size();
    const size_t ntrain = static_cast<size_t>(std::floor(0.7 * static_cast<double>(n)));
    const size_t nval = static_cast<size_t>(std::floor(0.2 * static_cast<double>(n)));
    ds.train_idx.clear();
    ds.val_idx.clear();
    ds.test_idx.clear();
    for (size_t i = 0; i < n; ++i) {
        if (i < ntrain) ds.train_idx.push_back(i);
        else if (i < ntrain + nval) ds.val_idx.push_back(i);
        else ds.test_idx.push_back(i);
    }
}

Dataset gen_dataset(const GenConfig& cfg) {
    if (cfg.n < 1) throw std::invalid_argument("gen_dataset: need n >= 1");
    GrfParams grf = cfg.grf;
    grf.res = cfg.res;
    if (cfg.ood) grf = ood_variant(grf, *cfg.ood);

    Dataset ds;
    ds.pde = cfg.pde;
    ds.seed = cfg.seed;
    ds.inputs.resize(cfg.n);
    ds.targets.resize(cfg.n);

    auto one = [&](size_t i) {
        GrfParams g = grf;
        g.seed = mix_seed(cfg.seed, i);
        if (cfg.pde == "burgers") {
            Field u0 = sample_grf(g);
            BurgersOptions opt;
            opt.nu = cfg.nu;
            opt.T = cfg.T;
            opt.n_save = cfg.n_save;
            auto traj = burgers_solve(u0, opt);
            Tensor tr({traj.size(), cfg.res});
            for (size_t s = 0; s < traj.size(); ++s)
                for (size_t x = 0; x < cfg.res; ++x) tr[s * cfg.res + x] = traj[s].at(x);
            ds.inputs[i] = u0.values;
            ds.targets[i] = std::move(tr);
        } else if (cfg.pde == "ns2d") {
            Field w0 = sample_grf(g);
            NsOptions opt;
            opt.nu = cfg.nu;
            opt.T = cfg.T;
            opt.dt = cfg.dt;
            opt.n_save = cfg.n_save;
            auto traj = ns_vorticity_solve(w0, opt);
            Tensor tr({traj.size(), cfg.res, cfg.res});
            const size_t nn = cfg.res * cfg.res;
            for (size_t s = 0; s < traj.size(); ++s)
                for (size_t x = 0; x < nn; ++x) tr[s * nn + x] = traj[s].at(x);
            ds.inputs[i] = w0.values;
            ds.targets[i] = std::move(tr);
        } else if (cfg.pde == "darcy") {
            Field galpha = sample_grf(g);
            Field a(exp_t(galpha.values));
            Field u = darcy_solve(a, 1.0);
            ds.inputs[i] = a.values;
            ds.targets[i] = u.values;
        } else if (cfg.pde == "poisson") {
            Field q = sample_grf(g);
            Field u = poisson_solve(q);
            ds.inputs[i] = q.values;
            ds.targets[i] = u.values;
        } else {
            throw std::invalid_argument("unknown pde: " + cfg.pde);
        }
    };
    parallel_for(cfg.n, one);

    assign_splits(ds);
    ds.params = {{"pde", cfg.pde},
                 {"n", cfg.n},
                 {"res", cfg.res},
                 {"seed", cfg.seed},
                 {"n_save", cfg.n_save},
                 {"nu", cfg.nu},
                 {"T", cfg.T},
                 {"dt", cfg.dt},
                 {"grf", {{"dim", grf.dim},
                          {"alpha", grf.alpha},
                          {"tau", grf.tau},
                          {"sigma", grf.sigma}}},
                 {"ood", cfg.ood ? ood_setting_name(*cfg.ood) : "none"}};
    return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    const size_t n = ds.inputs.size();
    // stacked inputs: (n, input shape...)
    std::vector<size_t> ishape = {n};
    for (size_t d : ds.inputs[0].shape()) ishape.push_back(d);
    Tensor inputs(ishape);
    const size_t isz = ds.inputs[0].size();
    for (size_t i = 0; i < n; ++i)
        for (size_t k = 0; k < isz; ++k) inputs[i * isz + k] = ds.inputs[i][k];

    std::vector<size_t> tshape = {n};
    for (size_t d : ds.targets[0].shape()) tshape.push_back(d);
    Tensor targets(tshape);
    const size_t tsz = ds.targets[0].size();
    for (size_t i = 0; i < n; ++i)
        for (size_t k = 0; k < tsz; ++k) targets[i * tsz + k] = ds.targets[i][k];

    write_stmf1(dir / "inputs.stmf", inputs);
    write_stmf1(dir / "targets.stmf", targets);

    json manifest = {{"format", "stmf-dataset-v1"},
                     {"pde", ds.pde},
                     {"n", n},
                     {"seed", ds.seed},
                     {"params", ds.params},
                     {"splits", {{"train", ds.train_idx},
                                 {"val", ds.val_idx},
                                 {"test", ds.test_idx}}},
                     {"files", {{"inputs", "inputs.stmf"}, {"targets", "targets.stmf"}}}};
    manifest["config_hash"] = hex_u64(config_hash(ds.params));
    // manifest written last marks the dataset complete
    write_json(dir / "manifest.json", manifest);
}

Dataset load_dataset(const std::filesystem::path& dir) {
    json manifest = read_json(dir / "manifest.json");
    Dataset ds;
    ds.pde = manifest.at("pde").get<std::string>();
    ds.seed = manifest.at("seed").get<uint64_t>();
    ds.params = manifest.at("params");
    ds.train_idx = manifest.at("splits").at("train").get<std::vector<size_t>>();
    ds.val_idx = manifest.at("splits").at("val").get<std::vector<size_t>>();
    ds.test_idx = manifest.at("splits").at("test").get<std::vector<size_t>>();

    Tensor inputs = read_stmf1(dir / manifest.at("files").at("inputs").get<std::string>());
    Tensor targets = read_stmf1(dir / manifest.at("files").at("targets").get<std::string>());
    const size_t n = inputs.dim(0);
    std::vector<size_t> ishape(inputs.shape().begin() + 1, inputs.shape().end());
    std::vector<size_t> tshape(targets.shape().begin() + 1, targets.shape().end());
    const size_t isz = Tensor::numel_of(ishape);
    const size_t tsz = Tensor::numel_of(tshape);
    ds.inputs.resize(n);
    ds.targets.resize(n);
    for (size_t i = 0; i < n; ++i) {
        Tensor in(ishape);
        for (size_t k = 0; k < isz; ++k) in[k] = inputs[i * isz + k];
        ds.inputs[i] = std::move(in);
        Tensor tg(tshape);
        for (size_t k = 0; k < tsz; ++k) tg[k] = targets[i * tsz + k];
        ds.targets[i] = std::move(tg);
    }
    return ds;
}

} // namespace stmf
