#pragma once

#include "stmf/field.hpp"
#include "stmf/io.hpp"
#include "stmf/randfield.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace stmf {

// ---- time-dependent solvers (periodic, pseudo-spectral) ----

struct BurgersOptions {
    double nu = 0.01;
    double T = 1.0;
    size_t n_save = 33;       // snapshots including the initial state
    double cfl = 0.25;
    size_t steps_per_interval = 0; // 0 = choose from the CFL target
};

// du/dt + d(u^2/2)/dx = nu uxx on [0,1) periodic. Fourier collocation with
// 2/3 de-aliasing, Crank-Nicolson diffusion and a Heun step on the advection.
// trajectory[0] == u0; snapshot k sits at time k*T/(n_save-1).
std::vector<Field> burgers_solve(const Field& u0, const BurgersOptions& opt);

struct NsOptions {
    double nu = 1e-3;
    double T = 1.0;
    double dt = 1e-4;
    size_t n_save = 11;       // snapshots including the initial state
    bool forcing = true;      // q = 0.1 (sin(2pi(x+y)) + cos(2pi(x+y)))
};

// 2-D vorticity equation, pseudo-spectral with de-aliasing and Crank-Nicolson
// diffusion; velocity recovered from the streamfunction each step. Requires
// mean(w0) = 0. Emits a CFL warning on stderr if max|v| dt/h exceeds 1.
std::vector<Field> ns_vorticity_solve(const Field& w0, const NsOptions& opt);

Field ns_forcing(size_t res);

// ---- steady solvers (bounded grid with res x res nodes, u = 0 on the rim) ----

// -div(a grad u) = q, flux-form five-point stencil with arithmetic face
// averages; conjugate gradient with Jacobi preconditioning.
Field darcy_solve(const Field& a, double q = 1.0, double tol = 1e-12);
// dense LU oracle for small grids (res <= 32)
Field darcy_solve_dense(const Field& a, double q = 1.0);

// Lap u = q with the five-point stencil and homogeneous Dirichlet values.
Field poisson_solve(const Field& q, double tol = 1e-12);

// residual of the discrete system the solver assembled, infinity norm
double darcy_residual_inf(const Field& a, const Field& u, double q = 1.0);
double poisson_residual_inf(const Field& q, const Field& u);

// flux-form -div(a grad u) on the full grid (boundary ring left zero)
Tensor darcy_apply(const Field& a, const Field& u);

// Jacobi-averaged interior fill of the boundary ring of `boundary_values`;
// interior starts from the boundary mean, boundary pixels never move.
Field harmonic_extension(const Field& boundary_values, int iters = 100);

// ---- dataset generation ----

struct GenConfig {
    std::string pde;          // burgers | ns2d | darcy | poisson
    size_t n = 1000;
    size_t res = 128;
    uint64_t seed = 0;
    size_t n_save = 33;
    double nu = 0.01;
    double T = 1.0;
    double dt = 1e-4;
    GrfParams grf;            // per-sample seed is derived from seed + index
    std::optional<OodSetting> ood; // applied to grf before sampling
};

// desk-scale defaults per PDE (the generation protocols of the four
// synthetic benchmarks; ns2d/darcy/poisson run at reduced resolution)
GenConfig default_gen_config(const std::string& pde);

struct Dataset {
    std::string pde;
    std::vector<Tensor> inputs;   // IC / coefficient / source field per sample
    std::vector<Tensor> targets;  // trajectory (n_save, ...) or steady field
    std::vector<size_t> train_idx, val_idx, test_idx;
    json params;
    uint64_t seed = 0;

    size_t size() const { return inputs.size(); }
    bool dynamic() const { return pde == "burgers" || pde == "ns2d"; }
    size_t traj_len() const { return dynamic() ? targets.front().dim(0) : 1; }
};

// 7:2:1 split by index: train = floor(0.7 n), val = floor(0.2 n), rest test
void assign_splits(Dataset& ds);

Dataset gen_dataset(const GenConfig& cfg);
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// ---- shared linear-solver helpers ----

// preconditioned conjugate gradient on an SPD operator given as a callback
size_t cg_solve(const std::function<void(const Tensor&, Tensor&)>& apply_A, const Tensor& b,
                Tensor& x, const Tensor& jacobi_diag, double tol, size_t max_iter);

} // namespace stmf
