#include "stmf/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace stmf {

int Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    return Var{this, push(std::move(n))};
}

static Tape* tape_of(Var a, Var b) {
    if (a.tape != b.tape) throw std::invalid_argument("tape: vars belong to different tapes");
    return a.tape;
}

Var add(Var a, Var b) {
    Tape* t = tape_of(a, b);
    Tape::Node n;
    n.op = Tape::Op::Add;
    n.a = a.id; n.b = b.id;
    n.value = add(t->value(a), t->value(b));
    return Var{t, t->push(std::move(n))};
}

Var sub(Var a, Var b) {
    Tape* t = tape_of(a, b);
    Tape::Node n;
    n.op = Tape::Op::Sub;
    n.a = a.id; n.b = b.id;
    n.value = sub(t->value(a), t->value(b));
    return Var{t, t->push(std::move(n))};
}

Var mul(Var a, Var b) {
    Tape* t = tape_of(a, b);
    Tape::Node n;
    n.op = Tape::Op::Mul;
    n.a = a.id; n.b = b.id;
    n.value = mul(t->value(a), t->value(b));
    return Var{t, t->push(std::move(n))};
}

Var scale(Var a, double s) {
    Tape* t = a.tape;
    Tape::Node n;
    n.op = Tape::Op::Scale;
    n.a = a.id; n.sarg = s;
    n.value = scale(t->value(a), s);
    return Var{t, t->push(std::move(n))};
}

Var add_scalar(Var a, double s) {
    Tape* t = a.tape;
    Tape::Node n;
    n.op = Tape::Op::AddScalar;
    n.a = a.id; n.sarg = s;
    n.value = add_scalar(t->value(a), s);
    return Var{t, t->push(std::move(n))};
}

Var tanh_t(Var a) {
    Tape* t = a.tape;
    Tape::Node n;
    n.op = Tape::Op::Tanh;
    n.a = a.id;
    n.value = tanh_t(t->value(a));
    return Var{t, t->push(std::move(n))};
}

Var exp_t(Var a) {
    Tape* t = a.tape;
    Tape::Node n;
    n.op = Tape::Op::Exp;
    n.a = a.id;
    n.value = exp_t(t->value(a));
    return Var{t, t->push(std::move(n))};
}

Var matmul(Var a, Var b) {
    Tape* t = tape_of(a, b);
    Tape::Node n;
    n.op = Tape::Op::Matmul;
    n.a = a.id; n.b = b.id;
    n.value = matmul(t->value(a), t->value(b));
    return Var{t, t->push(std::move(n))};
}

Var sum(Var a) {
    Tape* t = a.tape;
    Tape::Node n;
    n.op = Tape::Op::Sum;
    n.a = a.id;
    n.value = sum(t->value(a));
    return Var{t, t->push(std::move(n))};
}

Var mean(Var a) {
    Tape* t = a.tape;
    Tape::Node n;
    n.op = Tape::Op::Mean;
    n.a = a.id;
    n.value = mean(t->value(a));
    return Var{t, t->push(std::move(n))};
}

Var slice(Var a, size_t offset, size_t len) {
    Tape* t = a.tape;
    Tape::Node n;
    n.op = Tape::Op::Slice;
    n.a = a.id; n.sarg = static_cast<double>(offset); n.uarg = len;
    n.value = slice(t->value(a), offset, len);
    return Var{t, t->push(std::move(n))};
}

Var concat(Var a, Var b) {
    Tape* t = tape_of(a, b);
    Tape::Node n;
    n.op = Tape::Op::Concat;
    n.a = a.id; n.b = b.id;
    n.value = concat(t->value(a), t->value(b));
    return Var{t, t->push(std::move(n))};
}

Var concat_cols(Var a, Var b) {
    Tape* t = tape_of(a, b);
    Tape::Node n;
    n.op = Tape::Op::ConcatCols;
    n.a = a.id; n.b = b.id;
    n.value = concat_cols(t->value(a), t->value(b));
    return Var{t, t->push(std::move(n))};
}

Var broadcast_rows(Var row, size_t nrows) {
    Tape* t = row.tape;
    Tape::Node n;
    n.op = Tape::Op::BroadcastRows;
    n.a = row.id; n.uarg = nrows;
    n.value = broadcast_rows(t->value(row), nrows);
    return Var{t, t->push(std::move(n))};
}

Var reshape(Var a, std::vector<size_t> shape) {
    Tape* t = a.tape;
    Tape::Node n;
    n.op = Tape::Op::Reshape;
    n.a = a.id;
    n.value = reshape(t->value(a), std::move(shape));
    return Var{t, t->push(std::move(n))};
}

Var stop_gradient(Var a) {
    Tape* t = a.tape;
    Tape::Node n;
    n.op = Tape::Op::StopGrad;
    n.a = a.id;
    n.value = t->value(a);
    return Var{t, t->push(std::move(n))};
}

void Tape::accumulate(int id, const Tensor& g) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
        n.grad = g;
        n.has_grad = true;
    } else {
        for (size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
    }
}

void Tape::backward(Var loss) {
    if (loss.tape != this) throw std::invalid_argument("backward: var from another tape");
    if (value(loss).size() != 1) throw std::invalid_argument("backward: loss must be scalar");

    // a node is live if some grad-requiring leaf is reachable through it;
    // StopGrad cuts the chain
    std::vector<char> live(nodes_.size(), 0);
    for (size_t i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        if (n.op == Op::Leaf) live[i] = n.requires_grad ? 1 : 0;
        else if (n.op == Op::StopGrad) live[i] = 0;
        else live[i] = (n.a >= 0 && live[n.a]) || (n.b >= 0 && live[n.b]);
    }

    for (Node& n : nodes_) { n.has_grad = false; n.grad = Tensor(); }
    accumulate(loss.id, Tensor(value(loss).shape(), 1.0));

    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.has_grad || !live[id]) {
            if (n.op != Op::Leaf) { n.grad = Tensor(); n.has_grad = false; }
            continue;
        }
        const Tensor& g = n.grad;
        switch (n.op) {
        case Op::Leaf:
        case Op::StopGrad:
            break;
        case Op::Add:
            if (live[n.a]) accumulate(n.a, g);
            if (live[n.b]) accumulate(n.b, g);
            break;
        case Op::Sub:
            if (live[n.a]) accumulate(n.a, g);
            if (live[n.b]) accumulate(n.b, scale(g, -1.0));
            break;
        case Op::Mul:
            if (live[n.a]) accumulate(n.a, mul(g, nodes_[n.b].value));
            if (live[n.b]) accumulate(n.b, mul(g, nodes_[n.a].value));
            break;
        case Op::Scale:
            accumulate(n.a, scale(g, n.sarg));
            break;
        case Op::AddScalar:
            accumulate(n.a, g);
            break;
        case Op::Tanh: {
            Tensor d(n.value.shape());
            for (size_t i = 0; i < d.size(); ++i)
                d[i] = (1.0 - n.value[i] * n.value[i]) * g[i];
            accumulate(n.a, d);
            break;
        }
        case Op::Exp:
            accumulate(n.a, mul(g, n.value));
            break;
        case Op::Matmul: {
            const Tensor& A = nodes_[n.a].value;
            const Tensor& B = nodes_[n.b].value;
            // dA = g B^T, dB = A^T g
            const size_t m = A.dim(0), k = A.dim(1), nn = B.dim(1);
            if (live[n.a]) {
                Tensor dA({m, k}, 0.0);
                for (size_t i = 0; i < m; ++i)
                    for (size_t j = 0; j < nn; ++j) {
                        const double gij = g.at2(i, j);
                        if (gij == 0.0) continue;
                        for (size_t p = 0; p < k; ++p) dA.at2(i, p) += gij * B.at2(p, j);
                    }
                accumulate(n.a, dA);
            }
            if (live[n.b]) {
                Tensor dB({k, nn}, 0.0);
                for (size_t i = 0; i < m; ++i)
                    for (size_t p = 0; p < k; ++p) {
                        const double aip = A.at2(i, p);
                        if (aip == 0.0) continue;
                        for (size_t j = 0; j < nn; ++j) dB.at2(p, j) += aip * g.at2(i, j);
                    }
                accumulate(n.b, dB);
            }
            break;
        }
        case Op::Sum:
            accumulate(n.a, Tensor(nodes_[n.a].value.shape(), g[0]));
            break;
        case Op::Mean:
            accumulate(n.a, Tensor(nodes_[n.a].value.shape(),
                                   g[0] / static_cast<double>(nodes_[n.a].value.size())));
            break;
        case Op::Slice: {
            Tensor d(nodes_[n.a].value.shape(), 0.0);
            const size_t off = static_cast<size_t>(n.sarg);
            for (size_t i = 0; i < n.uarg; ++i) d[off + i] = g[i];
            accumulate(n.a, d);
            break;
        }
        case Op::Concat: {
            const size_t na = nodes_[n.a].value.size();
            const size_t nb = nodes_[n.b].value.size();
            if (live[n.a]) {
                Tensor da(nodes_[n.a].value.shape());
                for (size_t i = 0; i < na; ++i) da[i] = g[i];
                accumulate(n.a, da);
            }
            if (live[n.b]) {
                Tensor db(nodes_[n.b].value.shape());
                for (size_t i = 0; i < nb; ++i) db[i] = g[na + i];
                accumulate(n.b, db);
            }
            break;
        }
        case Op::ConcatCols: {
            const Tensor& A = nodes_[n.a].value;
            const Tensor& B = nodes_[n.b].value;
            const size_t r = A.dim(0), ca = A.dim(1), cb = B.dim(1);
            if (live[n.a]) {
                Tensor da({r, ca});
                for (size_t i = 0; i < r; ++i)
                    for (size_t j = 0; j < ca; ++j) da.at2(i, j) = g.at2(i, j);
                accumulate(n.a, da);
            }
            if (live[n.b]) {
                Tensor db({r, cb});
                for (size_t i = 0; i < r; ++i)
                    for (size_t j = 0; j < cb; ++j) db.at2(i, j) = g.at2(i, ca + j);
                accumulate(n.b, db);
            }
            break;
        }
        case Op::Reshape:
            accumulate(n.a, reshape(g, nodes_[n.a].value.shape()));
            break;
        case Op::BroadcastRows: {
            const size_t c = nodes_[n.a].value.size();
            Tensor d({c}, 0.0);
            for (size_t i = 0; i < n.uarg; ++i)
                for (size_t j = 0; j < c; ++j) d[j] += g.at2(i, j);
            accumulate(n.a, d);
            break;
        }
        }
        // free interior gradients as soon as consumed to bound memory
        if (n.op != Op::Leaf) { n.grad = Tensor(); n.has_grad = false; }
    }
}

const Tensor& Tape::grad(Var leaf) const {
    const Node& n = nodes_[leaf.id];
    if (n.op != Op::Leaf || !n.requires_grad)
        throw std::invalid_argument("grad: not a grad-requiring leaf");
    static thread_local Tensor zero;
    if (!n.has_grad) {
        zero = Tensor(n.value.shape(), 0.0);
        return zero;
    }
    return n.grad;
}

} // namespace stmf
