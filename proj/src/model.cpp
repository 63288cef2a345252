#include "stmf/model.hpp"
#include "stmf/rng.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <sstream>

namespace stmf {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

size_t spec_feat_count(int dim, size_t spec_modes) {
    if (dim == 1) return 2 * spec_modes;
    const size_t side = 4;
    return 2 * (side * side - 1);
}

// constant per-(grid, offset) feature blocks
struct Features {
    Tensor coord;  // (npoints, ncoord)
    Tensor z_u;    // (npoints, zu): pooling(+spectral) applied to the u channel
    Tensor z_coef; // (npoints, zc): static coefficient encodings; empty otherwise
    size_t npoints = 0;
};

void fill_pool_cols(Tensor& mat, size_t col0, int dim, size_t res, size_t bins) {
    const size_t npoints = (dim == 1) ? res : res * res;
    if (dim == 1) {
        for (size_t b = 0; b < bins; ++b) {
            size_t lo = b * res / bins, hi = (b + 1) * res / bins;
            double w = 1.0 / static_cast<double>(hi - lo);
            for (size_t i = lo; i < hi; ++i) mat.at2(i, col0 + b) = w;
        }
    } else {
        size_t side = 1;
        while (side * side < bins) ++side;
        for (size_t i = 0; i < res; ++i)
            for (size_t j = 0; j < res; ++j) {
                size_t bi = i * side / res, bj = j * side / res;
                mat.at2(i * res + j, col0 + bi * side + bj) = 1.0;
            }
        for (size_t b = 0; b < side * side; ++b) {
            double s = 0.0;
            for (size_t p = 0; p < npoints; ++p) s += mat.at2(p, col0 + b);
            if (s > 0)
                for (size_t p = 0; p < npoints; ++p) mat.at2(p, col0 + b) /= s;
        }
    }
}

void fill_spec_cols(Tensor& mat, size_t col0, int dim, size_t res, size_t spec_modes,
                    bool periodic) {
    const size_t npoints = (dim == 1) ? res : res * res;
    const double norm = 2.0 / static_cast<double>(npoints);
    auto coord = [&](size_t i) {
        return periodic ? static_cast<double>(i) / res : static_cast<double>(i) / (res - 1);
    };
    if (dim == 1) {
        for (size_t k = 1; k <= spec_modes; ++k)
            for (size_t i = 0; i < res; ++i) {
                double ph = kTwoPi * k * coord(i);
                mat.at2(i, col0 + 2 * (k - 1)) = norm * std::cos(ph);
                mat.at2(i, col0 + 2 * (k - 1) + 1) = norm * std::sin(ph);
            }
    } else {
        const size_t side = 4;
        size_t c = col0;
        for (size_t k1 = 0; k1 < side; ++k1)
            for (size_t k2 = 0; k2 < side; ++k2) {
                if (k1 == 0 && k2 == 0) continue;
                for (size_t i = 0; i < res; ++i)
                    for (size_t j = 0; j < res; ++j) {
                        double ph = kTwoPi * (k1 * coord(i) + k2 * coord(j));
                        mat.at2(i * res + j, c) = norm * std::cos(ph);
                        mat.at2(i * res + j, c + 1) = norm * std::sin(ph);
                    }
                c += 2;
            }
    }
}

void fill_ff_cols(Tensor& mat, size_t col0, int dim, size_t res, size_t nf, bool periodic,
                  const std::vector<double>& shift) {
    auto coord = [&](size_t i) {
        return periodic ? static_cast<double>(i) / res : static_cast<double>(i) / (res - 1);
    };
    const size_t npoints = (dim == 1) ? res : res * res;
    for (size_t p = 0; p < npoints; ++p) {
        double xy[2] = {0.0, 0.0};
        if (dim == 1) {
            xy[0] = coord(p) - shift[0];
        } else {
            xy[0] = coord(p / res) - shift[0];
            xy[1] = coord(p % res) - shift[1];
        }
        size_t c = col0;
        for (int a = 0; a < dim; ++a) {
            double f = 1.0;
            for (size_t k = 0; k < nf; ++k) {
                double ph = kTwoPi * f * xy[a];
                mat.at2(p, c++) = std::sin(ph);
                mat.at2(p, c++) = std::cos(ph);
                f *= 2.0;
            }
        }
    }
}

std::mutex feat_mutex;
std::map<std::string, Features>& feat_cache() {
    static std::map<std::string, Features> cache;
    return cache;
}

const Features& features_for(const ModelConfig& cfg, const GridPair& gp) {
    std::ostringstream key;
    key << cfg.dim << ":" << gp.res << ":" << gp.periodic << ":" << cfg.gamma << ":"
        << cfg.fourier_feats << ":" << cfg.pool_bins << ":" << cfg.spec_modes;
    if (cfg.gamma != 0)
        for (long c : gp.offset_cells) key << ":" << c;

    std::lock_guard<std::mutex> lock(feat_mutex);
    auto it = feat_cache().find(key.str());
    if (it != feat_cache().end()) return it->second;

    Features F;
    const size_t res = gp.res;
    F.npoints = (cfg.dim == 1) ? res : res * res;
    const size_t nf = cfg.fourier_feats;
    const size_t ffw = 2 * nf * static_cast<size_t>(cfg.dim);

    if (cfg.gamma != 0) {
        F.coord = Tensor({F.npoints, 2 * ffw}, 0.0);
        auto delta = gp.offset_phys();
        fill_ff_cols(F.coord, 0, cfg.dim, res, nf, gp.periodic, delta); // ff(xi)
        fill_ff_cols(F.coord, ffw, cfg.dim, res, nf, gp.periodic,
                     std::vector<double>(cfg.dim, 0.0)); // ff(x)
        F.z_u = Tensor({F.npoints, cfg.pool_bins + spec_feat_count(cfg.dim, cfg.spec_modes)}, 0.0);
        fill_pool_cols(F.z_u, 0, cfg.dim, res, cfg.pool_bins);
        fill_spec_cols(F.z_u, cfg.pool_bins, cfg.dim, res, cfg.spec_modes, gp.periodic);
    } else {
        F.coord = Tensor({F.npoints, ffw}, 0.0);
        fill_ff_cols(F.coord, 0, cfg.dim, res, nf, gp.periodic,
                     std::vector<double>(cfg.dim, 0.0));
        F.z_u = Tensor({F.npoints, cfg.pool_bins}, 0.0);
        fill_pool_cols(F.z_u, 0, cfg.dim, res, cfg.pool_bins);
        F.z_coef =
            Tensor({F.npoints, cfg.pool_bins + spec_feat_count(cfg.dim, cfg.spec_modes)}, 0.0);
        fill_pool_cols(F.z_coef, 0, cfg.dim, res, cfg.pool_bins);
        fill_spec_cols(F.z_coef, cfg.pool_bins, cfg.dim, res, cfg.spec_modes, gp.periodic);
    }
    auto [pos, ok] = feat_cache().emplace(key.str(), std::move(F));
    (void)ok;
    return pos->second;
}

size_t rows_of(const Tensor& t) { return t.dim(0); }
size_t rows_of(const Dual& d) { return d.val.dim(0); }
size_t rows_of(Var v) { return v.tape->value(v).dim(0); }

// the (npoints x input_dim) block for one evaluation; T is Tensor, Dual or Var
template <typename T, typename WrapFn>
T assemble_block(const ModelConfig& cfg, const ModelStats& stats, const T& u_flat,
                 const T* coef_flat, const T* tau_in, const T* t_in, const Features& F,
                 WrapFn&& wrap) {
    const size_t n = F.npoints;
    T u_norm = scale(add_scalar(u_flat, -stats.u_mean), 1.0 / stats.u_std);

    T X = reshape(u_norm, {n, 1});
    if (cfg.has_coef) {
        T c_norm = scale(add_scalar(*coef_flat, -stats.coef_mean), 1.0 / stats.coef_std);
        X = concat_cols(X, reshape(c_norm, {n, 1}));
    }
    X = concat_cols(X, wrap(F.coord));
    if (cfg.gamma != 0) {
        X = concat_cols(X, broadcast_rows(reshape(*tau_in, {1}), n));
        X = concat_cols(X, broadcast_rows(reshape(*t_in, {1}), n));
    }
    T z = matmul(reshape(u_norm, {1, n}), wrap(F.z_u));
    if (cfg.gamma == 0) {
        T c_norm = scale(add_scalar(*coef_flat, -stats.coef_mean), 1.0 / stats.coef_std);
        z = concat_cols(z, matmul(reshape(c_norm, {1, n}), wrap(F.z_coef)));
    }
    return concat_cols(X, broadcast_rows(reshape(z, {cfg.z_dim()}), n));
}

template <typename T>
T mlp_apply(const ModelConfig& cfg, const ModelStats& stats, const std::vector<T>& params,
            const T& X) {
    T H = X;
    const size_t nlayers = params.size() / 2;
    for (size_t li = 0; li < nlayers; ++li) {
        H = add(matmul(H, params[2 * li]), broadcast_rows(params[2 * li + 1], rows_of(H)));
        if (li + 1 < nlayers) H = tanh_t(H);
    }
    (void)cfg;
    return scale(H, stats.out_scale);
}

std::vector<size_t> field_shape(const ModelConfig& cfg, size_t res) {
    return (cfg.dim == 1) ? std::vector<size_t>{res} : std::vector<size_t>{res, res};
}

Tensor wrap_plain(const Tensor& t) { return t; }

} // namespace

size_t ModelConfig::z_dim() const {
    size_t sf = spec_feat_count(dim, spec_modes);
    if (gamma != 0) return pool_bins + sf;
    return pool_bins + pool_bins + sf;
}

size_t ModelConfig::input_dim() const {
    const size_t ffw = 2 * fourier_feats * static_cast<size_t>(dim);
    if (gamma != 0) return 1 + 2 * ffw + 2 + z_dim();
    return 1 + (has_coef ? 1 : 0) + ffw + z_dim();
}

json ModelConfig::to_json() const {
    return json{{"pde", pde},
                {"dim", dim},
                {"gamma", gamma},
                {"periodic", periodic},
                {"has_coef", has_coef},
                {"res", res},
                {"hidden", hidden},
                {"fourier_feats", fourier_feats},
                {"pool_bins", pool_bins},
                {"spec_modes", spec_modes},
                {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const json& j) {
    ModelConfig c;
    c.pde = j.at("pde").get<std::string>();
    c.dim = j.at("dim").get<int>();
    c.gamma = j.at("gamma").get<int>();
    c.periodic = j.at("periodic").get<bool>();
    c.has_coef = j.at("has_coef").get<bool>();
    c.res = j.at("res").get<size_t>();
    c.hidden = j.at("hidden").get<std::vector<size_t>>();
    c.fourier_feats = j.at("fourier_feats").get<size_t>();
    c.pool_bins = j.at("pool_bins").get<size_t>();
    c.spec_modes = j.at("spec_modes").get<size_t>();
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

ModelConfig default_model_config(const std::string& pde, size_t res) {
    ModelConfig c;
    c.pde = pde;
    c.res = res;
    if (pde == "burgers" || pde == "advection") {
        c.dim = 1;
        c.gamma = 1;
        c.periodic = true;
    } else if (pde == "ns2d") {
        c.dim = 2;
        c.gamma = 1;
        c.periodic = true;
    } else if (pde == "darcy" || pde == "poisson") {
        c.dim = 2;
        c.gamma = 0;
        c.periodic = false;
        c.has_coef = true;
        c.spec_modes = 4;
    } else {
        throw std::invalid_argument("default_model_config: unknown pde " + pde);
    }
    return c;
}

size_t Model::param_count() const {
    size_t n = 0;
    for (const auto& p : params) n += p.size();
    return n;
}

double Model::flops_per_eval(size_t npoints) const {
    double f = 2.0 * static_cast<double>(npoints) * static_cast<double>(cfg.z_dim());
    size_t in = cfg.input_dim();
    for (size_t h : cfg.hidden) {
        f += 2.0 * static_cast<double>(npoints * in * h);
        in = h;
    }
    f += 2.0 * static_cast<double>(npoints * in);
    return f;
}

Model init_model(const ModelConfig& cfg) {
    if (cfg.hidden.empty()) throw std::invalid_argument("init_model: need >= 1 hidden layer");
    Model m;
    m.cfg = cfg;
    size_t in = cfg.input_dim();
    std::vector<size_t> widths = cfg.hidden;
    widths.push_back(1);
    for (size_t li = 0; li < widths.size(); ++li) {
        size_t out = widths[li];
        Rng rng(mix_seed(cfg.seed, 0x6d6f64ull, li));
        double s = 1.0 / std::sqrt(static_cast<double>(in));
        if (li + 1 == widths.size()) s *= 0.1; // initial m near zero: persistence start
        Tensor W({in, out});
        for (size_t i = 0; i < W.size(); ++i) W[i] = rng.uniform(-s, s);
        m.params.push_back(std::move(W));
        m.params.push_back(Tensor({out}, 0.0));
        in = out;
    }
    return m;
}

Tensor model_forward(const Model& m, const Tensor& u_anchor, const Tensor* coef,
                     const GridPair& gp) {
    const Features& F = features_for(m.cfg, gp);
    Tensor u_flat = reshape(u_anchor, {u_anchor.size()});
    Tensor coef_flat, tau, t;
    if (m.cfg.has_coef) coef_flat = reshape(*coef, {coef->size()});
    tau = Tensor::scalar(gp.tau);
    t = Tensor::scalar(gp.t);
    Tensor X = assemble_block(m.cfg, m.stats, u_flat, m.cfg.has_coef ? &coef_flat : nullptr,
                              &tau, &t, F, wrap_plain);
    Tensor out = mlp_apply(m.cfg, m.stats, m.params, X);
    Tensor field = reshape(out, field_shape(m.cfg, gp.res));
    require_finite(field, "model output");
    return field;
}

std::pair<Tensor, Tensor> model_jvp_tau(const Model& m, const Tensor& u_anchor,
                                        const Tensor* coef, const GridPair& gp) {
    if (m.cfg.gamma == 0)
        throw std::invalid_argument("model_jvp_tau: static model has no tau channel");
    const Features& F = features_for(m.cfg, gp);
    auto wrap = [](const Tensor& t) { return Dual::constant(t); };
    Dual u = Dual::constant(reshape(u_anchor, {u_anchor.size()}));
    Dual coef_flat;
    if (m.cfg.has_coef) coef_flat = Dual::constant(reshape(*coef, {coef->size()}));
    Dual tau(Tensor::scalar(gp.tau), Tensor::scalar(1.0));
    Dual t = Dual::constant(Tensor::scalar(gp.t));
    std::vector<Dual> params;
    params.reserve(m.params.size());
    for (const auto& p : m.params) params.push_back(Dual::constant(p));
    Dual X = assemble_block(m.cfg, m.stats, u, m.cfg.has_coef ? &coef_flat : nullptr, &tau, &t,
                            F, wrap);
    Dual out = mlp_apply(m.cfg, m.stats, params, X);
    auto shape = field_shape(m.cfg, gp.res);
    return {reshape(out.val, shape), reshape(out.tan, shape)};
}

std::pair<Tensor, Tensor> model_jvp_u(const Model& m, const Tensor& u_anchor,
                                      const Tensor* coef, const GridPair& gp,
                                      const Tensor& dir) {
    const Features& F = features_for(m.cfg, gp);
    auto wrap = [](const Tensor& t) { return Dual::constant(t); };
    Dual u(reshape(u_anchor, {u_anchor.size()}), reshape(dir, {dir.size()}));
    Dual coef_flat;
    if (m.cfg.has_coef) coef_flat = Dual::constant(reshape(*coef, {coef->size()}));
    Dual tau = Dual::constant(Tensor::scalar(gp.tau));
    Dual t = Dual::constant(Tensor::scalar(gp.t));
    std::vector<Dual> params;
    params.reserve(m.params.size());
    for (const auto& p : m.params) params.push_back(Dual::constant(p));
    Dual X = assemble_block(m.cfg, m.stats, u, m.cfg.has_coef ? &coef_flat : nullptr, &tau, &t,
                            F, wrap);
    Dual out = mlp_apply(m.cfg, m.stats, params, X);
    auto shape = field_shape(m.cfg, gp.res);
    return {reshape(out.val, shape), reshape(out.tan, shape)};
}

Var model_forward_taped(const Model& m, Tape& tape, const std::vector<Var>& params,
                        Var u_anchor, std::optional<Var> coef, const GridPair& gp) {
    const Features& F = features_for(m.cfg, gp);
    auto wrap = [&tape](const Tensor& t) { return tape.constant(t); };
    Var u_flat = reshape(u_anchor, {tape.value(u_anchor).size()});
    Var coef_flat{};
    if (m.cfg.has_coef) coef_flat = reshape(*coef, {tape.value(*coef).size()});
    Var tau = tape.constant(Tensor::scalar(gp.tau));
    Var t = tape.constant(Tensor::scalar(gp.t));
    Var X = assemble_block(m.cfg, m.stats, u_flat, m.cfg.has_coef ? &coef_flat : nullptr, &tau,
                           &t, F, wrap);
    Var out = mlp_apply(m.cfg, m.stats, params, X);
    return reshape(out, field_shape(m.cfg, gp.res));
}

Var model_forward_taped_batch(const Model& m, Tape& tape, const std::vector<Var>& params,
                              const std::vector<TapedRequest>& reqs,
                              std::vector<size_t>* row_offsets) {
    if (reqs.empty()) throw std::invalid_argument("taped batch: no requests");
    auto wrap = [&tape](const Tensor& t) { return tape.constant(t); };
    Var Xall{};
    size_t rows = 0;
    if (row_offsets) row_offsets->clear();
    const size_t in_dim = m.cfg.input_dim();
    for (size_t r = 0; r < reqs.size(); ++r) {
        const auto& rq = reqs[r];
        const Features& F = features_for(m.cfg, rq.gp);
        Var u_flat = reshape(rq.u_anchor, {tape.value(rq.u_anchor).size()});
        Var coef_flat{};
        if (m.cfg.has_coef) coef_flat = reshape(*rq.coef, {tape.value(*rq.coef).size()});
        Var tau = tape.constant(Tensor::scalar(rq.gp.tau));
        Var t = tape.constant(Tensor::scalar(rq.gp.t));
        Var X = assemble_block(m.cfg, m.stats, u_flat, m.cfg.has_coef ? &coef_flat : nullptr,
                               &tau, &t, F, wrap);
        if (row_offsets) row_offsets->push_back(rows);
        rows += F.npoints;
        Xall = (r == 0) ? X : concat(Xall, X);
    }
    Xall = reshape(Xall, {rows, in_dim});
    Var out = mlp_apply(m.cfg, m.stats, params, Xall);
    return reshape(out, {rows});
}

// ---------------------------------------------------------------- ModelEval

ModelEval::ModelEval(const Model& model, Tensor u_tau, std::optional<Tensor> coef)
    : model_(model), u_tau_(std::move(u_tau)), coef_(std::move(coef)) {}

Tensor ModelEval::anchor_at(const GridPair& gp) const {
    if (model_.cfg.gamma == 0) return u_tau_;
    return shift_cells_periodic(u_tau_, gp.offset_cells);
}

Tensor ModelEval::m(const GridPair& gp) const {
    return model_forward(model_, anchor_at(gp), coef_ ? &*coef_ : nullptr, gp);
}

Tensor ModelEval::jvp_u(const GridPair& gp, const Tensor& dir) const {
    return model_jvp_u(model_, anchor_at(gp), coef_ ? &*coef_ : nullptr, gp, dir).second;
}

Tensor ModelEval::jvp_tau(const GridPair& gp) const {
    if (model_.cfg.gamma == 0) return Tensor(u_tau_.shape(), 0.0);
    return model_jvp_tau(model_, anchor_at(gp), coef_ ? &*coef_ : nullptr, gp).second;
}

// ---------------------------------------------------------------- checkpoints

namespace {
Tensor flatten_all(const std::vector<Tensor>& ts) {
    size_t n = 0;
    for (const auto& t : ts) n += t.size();
    Tensor out({n});
    size_t o = 0;
    for (const auto& t : ts)
        for (size_t i = 0; i < t.size(); ++i) out[o++] = t[i];
    return out;
}

std::vector<Tensor> unflatten_all(const Tensor& flat, const std::vector<std::vector<size_t>>& shapes) {
    std::vector<Tensor> out;
    size_t o = 0;
    for (const auto& s : shapes) {
        Tensor t(s);
        for (size_t i = 0; i < t.size(); ++i) t[i] = flat[o++];
        out.push_back(std::move(t));
    }
    if (o != flat.size()) throw std::runtime_error("checkpoint: parameter payload mismatch");
    return out;
}
} // namespace

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ck) {
    std::filesystem::create_directories(dir);
    write_stmf1(dir / "params.stmf", flatten_all(ck.params));
    write_stmf1(dir / "adam_m.stmf", flatten_all(ck.adam_m));
    write_stmf1(dir / "adam_v.stmf", flatten_all(ck.adam_v));
    json shapes = json::array();
    for (const auto& p : ck.params) shapes.push_back(p.shape());
    json meta = {{"format", "stmf-checkpoint-v1"},
                 {"model", ck.cfg.to_json()},
                 {"stats", {{"u_mean", ck.stats.u_mean},
                            {"u_std", ck.stats.u_std},
                            {"coef_mean", ck.stats.coef_mean},
                            {"coef_std", ck.stats.coef_std},
                            {"out_scale", ck.stats.out_scale}}},
                 {"param_shapes", shapes},
                 {"adam_t", ck.adam_t},
                 {"epoch", ck.epoch},
                 {"best_val", ck.best_val},
                 {"seed", ck.seed}};
    meta["config_hash"] = hex_u64(config_hash(ck.cfg.to_json()));
    write_json(dir / "checkpoint.json", meta);
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    json meta = read_json(dir / "checkpoint.json");
    Checkpoint ck;
    ck.cfg = ModelConfig::from_json(meta.at("model"));
    ck.stats.u_mean = meta.at("stats").at("u_mean").get<double>();
    ck.stats.u_std = meta.at("stats").at("u_std").get<double>();
    ck.stats.coef_mean = meta.at("stats").at("coef_mean").get<double>();
    ck.stats.coef_std = meta.at("stats").at("coef_std").get<double>();
    ck.stats.out_scale = meta.at("stats").at("out_scale").get<double>();
    ck.adam_t = meta.at("adam_t").get<size_t>();
    ck.epoch = meta.at("epoch").get<size_t>();
    ck.best_val = meta.at("best_val").get<double>();
    ck.seed = meta.at("seed").get<uint64_t>();
    std::vector<std::vector<size_t>> shapes =
        meta.at("param_shapes").get<std::vector<std::vector<size_t>>>();
    ck.params = unflatten_all(read_stmf1(dir / "params.stmf"), shapes);
    ck.adam_m = unflatten_all(read_stmf1(dir / "adam_m.stmf"), shapes);
    ck.adam_v = unflatten_all(read_stmf1(dir / "adam_v.stmf"), shapes);
    return ck;
}

Model model_from_checkpoint(const Checkpoint& ck) {
    Model m;
    m.cfg = ck.cfg;
    m.stats = ck.stats;
    m.params = ck.params;
    return m;
}

} // namespace stmf
