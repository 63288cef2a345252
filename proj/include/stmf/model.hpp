#pragma once

#include "stmf/dual.hpp"
#include "stmf/io.hpp"
#include "stmf/meanflow.hpp"
#include "stmf/tape.hpp"

#include <filesystem>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

namespace stmf {

// The mean-flow predictor: a per-point coordinate MLP with sinusoidal
// coordinate features plus a low-dimensional global encoding of the anchor
// state (strided bin averages and a few Fourier coefficients). Pointwise
// channels follow the training-loop input layout
//   dynamic: [u(xi), ff(xi), ff(x), tau, t | z(u)]
//   static:  [u0(x), a(x), ff(x) | z(u0), z(a)]
// Parameter shapes are resolution independent; the encodings are rebuilt
// for whatever grid the model is evaluated on.
struct ModelConfig {
    std::string pde = "burgers"; // burgers | ns2d | darcy | poisson | advection
    int dim = 1;
    int gamma = 1;               // 0 = static specialization (no tau/t channels)
    bool periodic = true;
    bool has_coef = false;       // darcy / poisson coefficient channel
    size_t res = 128;            // training grid (records provenance)
    std::vector<size_t> hidden = {96, 96};
    size_t fourier_feats = 4;    // per axis, frequencies 1,2,4,...
    size_t pool_bins = 16;       // total bins (per-axis side derived in 2-D)
    size_t spec_modes = 12;      // 1-D mode count; 2-D uses a side of 4
    uint64_t seed = 0;

    size_t input_dim() const;
    size_t z_dim() const;
    json to_json() const;
    static ModelConfig from_json(const json& j);
};

ModelConfig default_model_config(const std::string& pde, size_t res);

struct ModelStats {
    double u_mean = 0.0, u_std = 1.0;
    double coef_mean = 0.0, coef_std = 1.0;
    double out_scale = 1.0;
};

struct Model {
    ModelConfig cfg;
    ModelStats stats;
    std::vector<Tensor> params; // W0,b0,W1,b1,...,Wout,bout

    size_t param_count() const;
    double flops_per_eval(size_t npoints) const;
};

Model init_model(const ModelConfig& cfg);

// ---- forward surfaces ----

// plain evaluation of the m-field. u_anchor is the raw (unnormalized) state
// sampled at the anchor points; gp supplies the pair geometry for the
// coordinate features.
Tensor model_forward(const Model& m, const Tensor& u_anchor, const Tensor* coef,
                     const GridPair& gp);

// one forward-mode pass with tangent 1 on the tau channel
std::pair<Tensor, Tensor> model_jvp_tau(const Model& m, const Tensor& u_anchor,
                                        const Tensor* coef, const GridPair& gp);

// one forward-mode pass with tangent `dir` on the anchor-state channels
std::pair<Tensor, Tensor> model_jvp_u(const Model& m, const Tensor& u_anchor,
                                      const Tensor* coef, const GridPair& gp,
                                      const Tensor& dir);

// taped evaluation for training; u_anchor/coef enter as tape vars so input
// gradients (the inverse problem) come for free
Var model_forward_taped(const Model& m, Tape& tape, const std::vector<Var>& params,
                        Var u_anchor, std::optional<Var> coef, const GridPair& gp);

// ---- batched taped evaluation (one MLP pass over stacked pair blocks) ----

struct TapedRequest {
    Var u_anchor;             // flattened anchor field on the tape
    std::optional<Var> coef;
    GridPair gp;
};
// returns the stacked m column (sum_npoints x 1); block i starts at row
// offsets[i] with npoints(i) rows
Var model_forward_taped_batch(const Model& m, Tape& tape, const std::vector<Var>& params,
                              const std::vector<TapedRequest>& reqs,
                              std::vector<size_t>* row_offsets);

// ---- the MeanFlowEval adapter used by residuals and verification ----

class ModelEval : public MeanFlowEval {
public:
    // dynamic: u_tau is the anchor-time snapshot on the native grid
    // static:  u_tau is the network input field u0
    ModelEval(const Model& model, Tensor u_tau, std::optional<Tensor> coef);

    Tensor m(const GridPair& gp) const override;
    Tensor jvp_u(const GridPair& gp, const Tensor& dir) const override;
    Tensor jvp_tau(const GridPair& gp) const override;
    bool pairwise() const override { return model_.cfg.gamma != 0; }
    const Tensor* anchor_input() const override { return &u_tau_; }

    Tensor anchor_at(const GridPair& gp) const; // shifted anchor field

private:
    const Model& model_;
    Tensor u_tau_;
    std::optional<Tensor> coef_;
};

// ---- checkpointing ----

struct Checkpoint {
    ModelConfig cfg;
    ModelStats stats;
    std::vector<Tensor> params;
    std::vector<Tensor> adam_m, adam_v;
    size_t adam_t = 0;
    size_t epoch = 0;
    double best_val = std::numeric_limits<double>::infinity();
    uint64_t seed = 0;
};

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

Model model_from_checkpoint(const Checkpoint& ck);

} // namespace stmf
