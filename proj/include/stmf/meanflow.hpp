#pragma once

#include "stmf/field.hpp"
#include "stmf/tensor.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace stmf {

// ---- path geometry ----

// Straight segment from anchor (xi, tau) to target (x, t) with
// l = sqrt(l_t^2 + l_s^2), l_t = t - tau, l_s = |x - xi|.
struct PathSegment {
    std::vector<double> xi;
    double tau = 0.0;
    std::vector<double> x;
    double t = 0.0;
    double l = 0.0, l_t = 0.0, l_s = 0.0;
};

PathSegment path_length(const std::vector<double>& xi, double tau,
                        const std::vector<double>& x, double t);

// A uniform family of segments over the grid: every target x has its anchor
// at x - offset_cells * h, with common times (tau, t).
struct GridPair {
    std::vector<long> offset_cells; // per spatial axis
    double tau = 0.0;
    double t = 0.0;
    size_t res = 0;
    int dim = 1;
    bool periodic = true;

    double h() const {
        return periodic ? 1.0 / static_cast<double>(res)
                        : 1.0 / static_cast<double>(res - 1);
    }
    double l_t() const { return t - tau; }
    double l_s() const {
        double s = 0.0;
        for (long c : offset_cells) s += static_cast<double>(c) * static_cast<double>(c);
        return std::sqrt(s) * h();
    }
    double l() const {
        double lt = l_t(), ls = l_s();
        return std::sqrt(lt * lt + ls * ls);
    }
    std::vector<double> offset_phys() const {
        std::vector<double> o(offset_cells.size());
        for (size_t d = 0; d < o.size(); ++d) o[d] = static_cast<double>(offset_cells[d]) * h();
        return o;
    }
    GridPair with_offset(std::vector<long> cells) const {
        GridPair g = *this;
        g.offset_cells = std::move(cells);
        return g;
    }
};

// valid-region mask for bounded grids: 1 where the anchor (and the +-1 cell
// probes around it) stay inside the domain, plus the Dirichlet rim excluded.
// Periodic grids are all-ones.
Tensor valid_mask(const GridPair& gp, long extra_cells = 1);

double masked_mean_sq(const Tensor& r, const Tensor& mask);

// ---- PDE right-hand sides ----

struct PdeSpec {
    std::string kind;               // burgers | ns2d | darcy | poisson | advection
    int gamma = 1;                  // 1 time-dependent, 0 static
    int dim = 1;
    bool periodic = true;
    double nu = 0.0;                // burgers / ns2d viscosity
    std::vector<double> wave_speed; // advection
    Tensor coef;                    // darcy a-field / poisson q-field
    bool forcing = false;           // ns2d forcing on
    bool has_gsplit = false;        // f = grad(u).g + h available
};

PdeSpec pde_burgers(double nu = 0.01);
PdeSpec pde_advection(std::vector<double> c);
PdeSpec pde_ns2d(double nu = 1e-3, bool forcing = true);
PdeSpec pde_darcy(Tensor a);
PdeSpec pde_poisson(Tensor q);
PdeSpec make_pde_for(const std::string& kind, const Tensor* sample_input, double nu);

// f[u] on the native grid: gamma du/dt = f for dynamic kinds, f = 0 at the
// solution for static kinds. Spectral derivatives on periodic kinds,
// 2nd-order finite differences otherwise. Evaluated on detached fields.
Tensor pde_rhs(const PdeSpec& pde, const Tensor& u);

// the split f = grad(u).g + h for the decoupling analysis
std::vector<Tensor> gsplit_g(const PdeSpec& pde, const Tensor& u_at_xi);
Tensor gsplit_h(const PdeSpec& pde, const Tensor& u_native);
// operator-norm estimate of g over the batch: max_i |g(i)|_2
double gsplit_opnorm(const PdeSpec& pde, const Tensor& u_at_xi);

// ---- the mean-flow evaluator surface ----

// Everything the residuals need from a mean-flow predictor on a grid pair:
// the m-field, the directional derivative along an anchor-state direction,
// and the tau-derivative. Implemented by the neural model and by the
// analytic oracles used in verification.
class MeanFlowEval {
public:
    virtual ~MeanFlowEval() = default;
    virtual Tensor m(const GridPair& gp) const = 0;
    virtual Tensor jvp_u(const GridPair& gp, const Tensor& dir) const = 0;
    virtual Tensor jvp_tau(const GridPair& gp) const = 0;
    // static-mode evaluators ignore the pair geometry; residuals then use
    // grid gradients of the m-field instead of anchor-shift differences
    virtual bool pairwise() const { return true; }
    // the field feeding the evaluator's u-channels when it differs from the
    // physics anchor state (static models consume u0, not the reconstruction)
    virtual const Tensor* anchor_input() const { return nullptr; }
};

// exact mean flow of u(y, s) = u0(y - c s) on a periodic grid
class AdvectionOracle : public MeanFlowEval {
public:
    AdvectionOracle(Tensor u0, std::vector<double> c);
    Tensor m(const GridPair& gp) const override;
    Tensor jvp_u(const GridPair& gp, const Tensor& dir) const override;
    Tensor jvp_tau(const GridPair& gp) const override;

private:
    Tensor u0_;
    std::vector<double> c_;
};

// exact mean flow of the time-independent affine field u(y) = a + b.y
class LinearFieldOracle : public MeanFlowEval {
public:
    LinearFieldOracle(double a, std::vector<double> b, size_t res, int dim, bool periodic);
    Tensor m(const GridPair& gp) const override;
    Tensor jvp_u(const GridPair& gp, const Tensor& dir) const override;
    Tensor jvp_tau(const GridPair& gp) const override;
    Tensor field_values() const; // u sampled on the grid

private:
    double a_;
    std::vector<double> b_;
    size_t res_;
    int dim_;
    bool periodic_;
};

// test helper: m-field and jvps supplied as callbacks
class LambdaEval : public MeanFlowEval {
public:
    std::function<Tensor(const GridPair&)> m_fn;
    std::function<Tensor(const GridPair&, const Tensor&)> jvp_u_fn;
    std::function<Tensor(const GridPair&)> jvp_tau_fn;
    bool is_pairwise = true;

    Tensor m(const GridPair& gp) const override { return m_fn(gp); }
    Tensor jvp_u(const GridPair& gp, const Tensor& dir) const override {
        return jvp_u_fn ? jvp_u_fn(gp, dir) : Tensor(dir.shape(), 0.0);
    }
    Tensor jvp_tau(const GridPair& gp) const override {
        return jvp_tau_fn ? jvp_tau_fn(gp) : Tensor(m_fn(gp).shape(), 0.0);
    }
    bool pairwise() const override { return is_pairwise; }
};

// ---- reconstruction and the K operator ----

enum class ReconstructMode { FixedGrid, Generalized, Static };

// u_anchor + mult * m with mult = l_t (fixed grid), l (generalized), 1 (static)
Tensor reconstruct_state(const Tensor& u_anchor, const Tensor& m_field, double l_t, double l,
                         ReconstructMode mode);

// K v = v + l (dm/du) v
Tensor apply_K(const Tensor& v, const std::function<Tensor(const Tensor&)>& jvp_u, double l);

// truncated Neumann series K^{-1} v ~= sum_{j<=J} (-l dm/du)^j v.
// Flags divergence when a term stops shrinking.
Tensor apply_K_inverse(const Tensor& v, const std::function<Tensor(const Tensor&)>& jvp_u,
                       double l, int J, bool* diverged = nullptr);

// ---- residuals ----

// r_temp = m - K f - gamma l_t dm/dtau  (all pieces detached values)
Tensor temporal_residual(const MeanFlowEval& eval, const Tensor& u_tau, const PdeSpec& pde,
                         const GridPair& gp);

// r_spac per spatial axis: l_s K grad(u) - m (x-xi) + l_s^2 dm/dxi.
// grad(u) is the numerical gradient of the anchor field; dm/dxi comes from
// anchor-shift differences (pairwise evaluators) or grid gradients of the
// m-field (static evaluators).
std::vector<Tensor> spatial_residual(const MeanFlowEval& eval, const Tensor& u_tau,
                                     const PdeSpec& pde, const GridPair& gp,
                                     Tensor* mask_out = nullptr);

// r_mf = l_t m - l K f - gamma l^2 dm/dtau. With substitute, grad(u) in f is
// replaced through the first-order spatial constraint and Lap(u) through the
// second-order one (Neumann-inverted K, depth J).
Tensor st_residual(const MeanFlowEval& eval, const Tensor& u_tau, const PdeSpec& pde,
                   const GridPair& gp, bool substitute, int neumann_J = 2);

// constraint-implied Laplacian of the anchor state:
//   Delta u = K^{-1} [ -(alpha + 2 K^{-1} beta) ] / l
Tensor second_order_constraint(const MeanFlowEval& eval, const Tensor& u_tau,
                               const GridPair& gp, int neumann_J = 2);

// weighted total objective; the temporal term is dropped for static systems
double total_loss(double data_loss, double r_temp_sq, double r_spac_sq, double lambda_t,
                  double lambda_s, int gamma);

// ---- decoupling bound pieces (Thm-level bookkeeping) ----

struct DecouplingTerms {
    double lhs = 0.0;        // mean r_mf^2
    double c1 = 0.0;         // 3 l_t^2
    double c2 = 0.0;         // 3 ((l - l_t)/l_s |g|_op)^2
    double r_temp_sq = 0.0;  // mean r_temp^2
    double r_spac_sq = 0.0;  // mean |r_spac|^2
    double eps = 0.0;        // 3 mean |remainder|^2, the structural term
    double identity_err = 0.0; // | r_mf - (decomposition) | consistency check
    double g_opnorm = 0.0;
    double rhs() const { return c1 * r_temp_sq + c2 * r_spac_sq + eps; }
    bool holds(double rtol = 1e-9, double atol = 1e-12) const {
        return lhs <= rhs() * (1.0 + rtol) + atol;
    }
};

// Evaluates every term of |r_mf|^2 <= c1 |r_temp|^2 + c2 |r_spac|^2 + eps
// with the split K f, so the decomposition is exact up to roundoff.
DecouplingTerms decoupling_terms(const MeanFlowEval& eval, const Tensor& u_tau,
                                 const PdeSpec& pde, const GridPair& gp);

// pointwise advection identity of the analytic mean flow:
//   [t - tau + (x-xi).c] m - l^2 (dm/dxi . c + dm/dtau) = 0
// with u0 given analytically and the m-derivatives by central differences.
double advection_identity_residual(const std::function<double(double)>& u0, double c,
                                   double xi, double tau, double x, double t, double fd_step);

} // namespace stmf
