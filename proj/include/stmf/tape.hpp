#pragma once

#include "stmf/tensor.hpp"

#include <memory>
#include <vector>

namespace stmf {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
// Never share across tapes or across threads.
struct Var {
    Tape* tape = nullptr;
    int id = -1;
};

// Record of primitive ops for one evaluation. backward() replays the tape in
// reverse and accumulates gradients into the leaves that asked for them.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value, bool requires_grad);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    const Tensor& value(Var v) const { return nodes_[v.id].value; }

    // Gradient of a scalar output w.r.t. every grad-requiring leaf.
    // Cleared and recomputed on each call.
    void backward(Var loss);

    // valid after backward(); zero tensor if no gradient reached the leaf
    const Tensor& grad(Var leaf) const;

    size_t num_nodes() const { return nodes_.size(); }

    // ---- primitives ----
    friend Var add(Var a, Var b);
    friend Var sub(Var a, Var b);
    friend Var mul(Var a, Var b);
    friend Var scale(Var a, double s);
    friend Var add_scalar(Var a, double s);
    friend Var tanh_t(Var a);
    friend Var exp_t(Var a);
    friend Var matmul(Var a, Var b);
    friend Var sum(Var a);
    friend Var mean(Var a);
    friend Var slice(Var a, size_t offset, size_t len);
    friend Var concat(Var a, Var b);
    friend Var concat_cols(Var a, Var b);
    friend Var broadcast_rows(Var row, size_t nrows);
    friend Var reshape(Var a, std::vector<size_t> shape);
    friend Var stop_gradient(Var a);

private:
    enum class Op {
        Leaf, Add, Sub, Mul, Scale, AddScalar, Tanh, Exp, Matmul,
        Sum, Mean, Slice, Concat, ConcatCols, BroadcastRows, Reshape, StopGrad
    };

    struct Node {
        Op op;
        int a = -1, b = -1;
        Tensor value;
        double sarg = 0.0;   // scale factor / offset for slice
        size_t uarg = 0;     // len for slice / nrows
        bool requires_grad = false;
        Tensor grad;
        bool has_grad = false;
    };

    int push(Node n);
    void accumulate(int id, const Tensor& g);

    std::vector<Node> nodes_;
};

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var tanh_t(Var a);
Var exp_t(Var a);
Var matmul(Var a, Var b);
Var sum(Var a);
Var mean(Var a);
Var slice(Var a, size_t offset, size_t len);
Var concat(Var a, Var b);
Var concat_cols(Var a, Var b);
Var broadcast_rows(Var row, size_t nrows);
Var reshape(Var a, std::vector<size_t> shape);
Var stop_gradient(Var a);

inline Tensor value_of(Var v) { return v.tape->value(v); }

} // namespace stmf
