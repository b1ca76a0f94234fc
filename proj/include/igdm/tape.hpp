#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "igdm/tensor.hpp"

namespace igdm {

using node_id = std::size_t;

enum class op_kind : std::uint8_t {
    leaf,
    add,
    sub,
    mul,       // elementwise
    maximum,   // elementwise max; ties send the gradient to the first input
    matmul,    // (m x n) . (n) -> (m)
    relu,      // subgradient at 0 is 0
    softplus,
    exp,
    sqrt,      // subgradient at 0 is 0
    logsumexp, // all elements -> scalar, max-shifted for stability
    sum,       // all elements -> scalar
    scale,     // by a compile-time constant stored on the node
    log_softmax,
};

enum class leaf_kind : std::uint8_t { none, param, input, constant };

struct tape_node {
    op_kind op = op_kind::leaf;
    node_id a = 0;
    node_id b = 0;
    double c = 0.0;  // scale factor
    leaf_kind leaf = leaf_kind::none;
    tensor value;
};

// Gradients keyed by the leaf's node id.  Absent lookups throw: a silent
// zero would hide a wiring bug in the caller.
class gradient_map {
  public:
    void set(node_id id, tensor grad) { grads_[id] = std::move(grad); }

    const tensor& at(node_id id) const {
        auto it = grads_.find(id);
        if (it == grads_.end()) {
            throw std::out_of_range("gradient_map: no gradient recorded for leaf " +
                                    std::to_string(id));
        }
        return it->second;
    }

    bool contains(node_id id) const { return grads_.count(id) != 0; }
    std::size_t size() const { return grads_.size(); }

    auto begin() const { return grads_.begin(); }
    auto end() const { return grads_.end(); }

  private:
    std::map<node_id, tensor> grads_;
};

// Append-only record of a forward computation.  Node ids are indices into
// the node vector, so every node's inputs precede it and a single reverse
// sweep is a valid backpropagation order.
class tape {
  public:
    tape() { nodes_.reserve(64); }

    node_id leaf(tensor value, leaf_kind kind) {
        if (kind == leaf_kind::none) throw std::invalid_argument("tape: leaf needs a leaf kind");
        tape_node n;
        n.op = op_kind::leaf;
        n.leaf = kind;
        n.value = std::move(value);
        return push(std::move(n));
    }

    node_id constant(double v) { return leaf(tensor::scalar(v), leaf_kind::constant); }

    node_id add(node_id x, node_id y) { return binary(op_kind::add, x, y); }
    node_id sub(node_id x, node_id y) { return binary(op_kind::sub, x, y); }
    node_id mul(node_id x, node_id y) { return binary(op_kind::mul, x, y); }
    node_id maximum(node_id x, node_id y) { return binary(op_kind::maximum, x, y); }

    node_id matmul(node_id w, node_id x) {
        const tensor& tw = value(w);
        const tensor& tx = value(x);
        if (tw.rank() != 2 || tx.rank() != 1 || tw.shape()[1] != tx.shape()[0]) {
            throw std::invalid_argument("tape: matmul expects (m x n) . (n)");
        }
        tape_node n;
        n.op = op_kind::matmul;
        n.a = w;
        n.b = x;
        n.value = eval_matmul(tw, tx);
        return push(std::move(n));
    }

    node_id relu(node_id x) { return unary(op_kind::relu, x); }
    node_id softplus(node_id x) { return unary(op_kind::softplus, x); }
    node_id exp(node_id x) { return unary(op_kind::exp, x); }
    node_id sqrt(node_id x) { return unary(op_kind::sqrt, x); }

    node_id logsumexp(node_id x) { return unary(op_kind::logsumexp, x); }
    node_id sum(node_id x) { return unary(op_kind::sum, x); }

    node_id scale(node_id x, double c) {
        tape_node n;
        n.op = op_kind::scale;
        n.a = x;
        n.c = c;
        n.value = eval_scale(value(x), c);
        return push(std::move(n));
    }

    node_id log_softmax(node_id x) {
        if (value(x).rank() != 1) {
            throw std::invalid_argument("tape: log_softmax expects a vector");
        }
        return unary(op_kind::log_softmax, x);
    }

    const tensor& value(node_id id) const {
        if (id >= nodes_.size()) throw std::out_of_range("tape: node id out of range");
        return nodes_[id].value;
    }

    std::size_t size() const { return nodes_.size(); }

    bool is_leaf(node_id id) const {
        return id < nodes_.size() && nodes_[id].op == op_kind::leaf;
    }

    leaf_kind kind_of(node_id id) const { return nodes_[id].leaf; }

    // Overwrites a leaf's value in place (shape must match).  Used by attack
    // loops that re-evaluate the same graph at a shifted input.
    void set_leaf(node_id id, tensor v) {
        if (!is_leaf(id)) throw std::invalid_argument("tape: set_leaf on a non-leaf node");
        check_same_shape(nodes_[id].value, v, "tape::set_leaf");
        nodes_[id].value = std::move(v);
    }

    // Recomputes every non-leaf node from its inputs with the same kernels
    // that produced the recorded values, so a replay is bit-identical.
    void replay_forward() {
        for (tape_node& n : nodes_) {
            if (n.op == op_kind::leaf) continue;
            n.value = eval(n);
        }
    }

    gradient_map backprop_scalar(node_id out, const std::vector<node_id>& wrt) const {
        if (out >= nodes_.size()) throw std::out_of_range("tape: output node out of range");
        if (!nodes_[out].value.is_scalar()) {
            throw std::invalid_argument("tape: backprop_scalar needs a scalar output node");
        }
        return backprop_seeded(out, tensor::scalar(1.0), wrt);
    }

    // Vector-Jacobian product: adjoint of `out` seeded with `seed`.  This is
    // what row-extraction for Jacobians uses (seed = basis vector).
    gradient_map backprop_seeded(node_id out, const tensor& seed,
                                 const std::vector<node_id>& wrt) const {
        if (out >= nodes_.size()) throw std::out_of_range("tape: output node out of range");
        check_same_shape(nodes_[out].value, seed, "tape::backprop_seeded");
        for (node_id id : wrt) {
            if (id >= nodes_.size()) {
                throw std::out_of_range("tape: wrt leaf " + std::to_string(id) + " does not exist");
            }
            if (!is_leaf(id)) {
                throw std::invalid_argument("tape: wrt node " + std::to_string(id) +
                                            " is not a leaf");
            }
        }

        std::vector<tensor> adj(out + 1);
        std::vector<bool> live(out + 1, false);
        adj[out] = seed;
        live[out] = true;

        for (node_id i = out + 1; i-- > 0;) {
            if (!live[i]) continue;
            const tape_node& n = nodes_[i];
            const tensor& g = adj[i];
            switch (n.op) {
                case op_kind::leaf:
                    break;
                case op_kind::add:
                    accumulate(adj, live, n.a, g);
                    accumulate(adj, live, n.b, g);
                    break;
                case op_kind::sub: {
                    accumulate(adj, live, n.a, g);
                    tensor neg = scaled(g, -1.0);
                    accumulate(adj, live, n.b, neg);
                    break;
                }
                case op_kind::mul: {
                    tensor ga = g, gb = g;
                    const tensor& va = nodes_[n.a].value;
                    const tensor& vb = nodes_[n.b].value;
                    for (std::size_t k = 0; k < ga.numel(); ++k) ga[k] *= vb[k];
                    for (std::size_t k = 0; k < gb.numel(); ++k) gb[k] *= va[k];
                    accumulate(adj, live, n.a, ga);
                    accumulate(adj, live, n.b, gb);
                    break;
                }
                case op_kind::maximum: {
                    const tensor& va = nodes_[n.a].value;
                    const tensor& vb = nodes_[n.b].value;
                    tensor ga = tensor::zeros(va.shape());
                    tensor gb = tensor::zeros(vb.shape());
                    for (std::size_t k = 0; k < va.numel(); ++k) {
                        if (va[k] >= vb[k]) ga[k] = g[k];
                        else gb[k] = g[k];
                    }
                    accumulate(adj, live, n.a, ga);
                    accumulate(adj, live, n.b, gb);
                    break;
                }
                case op_kind::matmul: {
                    const tensor& w = nodes_[n.a].value;
                    const tensor& x = nodes_[n.b].value;
                    std::size_t m = w.shape()[0], k = w.shape()[1];
                    tensor gw = tensor::zeros({m, k});
                    tensor gx = tensor::zeros({k});
                    for (std::size_t r = 0; r < m; ++r) {
                        for (std::size_t c = 0; c < k; ++c) {
                            gw.at2(r, c) = g[r] * x[c];
                        }
                    }
                    for (std::size_t c = 0; c < k; ++c) {
                        double s = 0.0;
                        for (std::size_t r = 0; r < m; ++r) s += w.at2(r, c) * g[r];
                        gx[c] = s;
                    }
                    accumulate(adj, live, n.a, gw);
                    accumulate(adj, live, n.b, gx);
                    break;
                }
                case op_kind::relu: {
                    const tensor& vx = nodes_[n.a].value;
                    tensor gx = tensor::zeros(vx.shape());
                    for (std::size_t k = 0; k < vx.numel(); ++k) {
                        if (vx[k] > 0.0) gx[k] = g[k];
                    }
                    accumulate(adj, live, n.a, gx);
                    break;
                }
                case op_kind::softplus: {
                    const tensor& vx = nodes_[n.a].value;
                    tensor gx = g;
                    for (std::size_t k = 0; k < vx.numel(); ++k) gx[k] *= sigmoid(vx[k]);
                    accumulate(adj, live, n.a, gx);
                    break;
                }
                case op_kind::exp: {
                    tensor gx = g;
                    for (std::size_t k = 0; k < gx.numel(); ++k) gx[k] *= n.value[k];
                    accumulate(adj, live, n.a, gx);
                    break;
                }
                case op_kind::sqrt: {
                    tensor gx = g;
                    for (std::size_t k = 0; k < gx.numel(); ++k) {
                        gx[k] = n.value[k] > 0.0 ? gx[k] / (2.0 * n.value[k]) : 0.0;
                    }
                    accumulate(adj, live, n.a, gx);
                    break;
                }
                case op_kind::logsumexp: {
                    const tensor& vx = nodes_[n.a].value;
                    tensor gx = softmax_flat(vx);
                    double gs = g.item();
                    for (std::size_t k = 0; k < gx.numel(); ++k) gx[k] *= gs;
                    accumulate(adj, live, n.a, gx);
                    break;
                }
                case op_kind::sum: {
                    const tensor& vx = nodes_[n.a].value;
                    tensor gx = tensor::zeros(vx.shape());
                    double gs = g.item();
                    for (std::size_t k = 0; k < gx.numel(); ++k) gx[k] = gs;
                    accumulate(adj, live, n.a, gx);
                    break;
                }
                case op_kind::scale: {
                    tensor gx = scaled(g, n.c);
                    accumulate(adj, live, n.a, gx);
                    break;
                }
                case op_kind::log_softmax: {
                    // y = x - lse(x); xbar = gbar - softmax(x) * sum(gbar)
                    double gs = 0.0;
                    for (std::size_t k = 0; k < g.numel(); ++k) gs += g[k];
                    tensor gx = g;
                    for (std::size_t k = 0; k < gx.numel(); ++k) {
                        gx[k] -= std::exp(n.value[k]) * gs;
                    }
                    accumulate(adj, live, n.a, gx);
                    break;
                }
            }
        }

        gradient_map out_map;
        for (node_id id : wrt) {
            if (id <= out && live[id]) {
                out_map.set(id, std::move(adj[id]));
            } else {
                out_map.set(id, tensor::zeros(nodes_[id].value.shape()));
            }
        }
        return out_map;
    }

  private:
    node_id push(tape_node n) {
        nodes_.push_back(std::move(n));
        return nodes_.size() - 1;
    }

    node_id unary(op_kind op, node_id x) {
        tape_node n;
        n.op = op;
        n.a = x;
        n.value = eval_unary(op, value(x));
        return push(std::move(n));
    }

    node_id binary(op_kind op, node_id x, node_id y) {
        const tensor& vx = value(x);
        const tensor& vy = value(y);
        check_same_shape(vx, vy, "tape: elementwise op");
        tape_node n;
        n.op = op;
        n.a = x;
        n.b = y;
        n.value = eval_binary(op, vx, vy);
        return push(std::move(n));
    }

    tensor eval(const tape_node& n) const {
        switch (n.op) {
            case op_kind::add:
            case op_kind::sub:
            case op_kind::mul:
            case op_kind::maximum:
                return eval_binary(n.op, nodes_[n.a].value, nodes_[n.b].value);
            case op_kind::matmul:
                return eval_matmul(nodes_[n.a].value, nodes_[n.b].value);
            case op_kind::scale:
                return eval_scale(nodes_[n.a].value, n.c);
            case op_kind::leaf:
                return n.value;
            default:
                return eval_unary(n.op, nodes_[n.a].value);
        }
    }

    static tensor eval_binary(op_kind op, const tensor& a, const tensor& b) {
        tensor out = a;
        switch (op) {
            case op_kind::add:
                for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b[i];
                break;
            case op_kind::sub:
                for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b[i];
                break;
            case op_kind::mul:
                for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b[i];
                break;
            case op_kind::maximum:
                for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::max(out[i], b[i]);
                break;
            default:
                throw std::logic_error("tape: not a binary op");
        }
        return out;
    }

    static tensor eval_matmul(const tensor& w, const tensor& x) {
        std::size_t m = w.shape()[0], k = w.shape()[1];
        tensor out = tensor::zeros({m});
        for (std::size_t r = 0; r < m; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < k; ++c) s += w.at2(r, c) * x[c];
            out[r] = s;
        }
        return out;
    }

    static tensor eval_scale(const tensor& a, double c) { return scaled(a, c); }

    static tensor eval_unary(op_kind op, const tensor& x) {
        switch (op) {
            case op_kind::relu: {
                tensor out = x;
                for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::max(out[i], 0.0);
                return out;
            }
            case op_kind::softplus: {
                tensor out = x;
                for (std::size_t i = 0; i < out.numel(); ++i) out[i] = softplus_stable(out[i]);
                return out;
            }
            case op_kind::exp: {
                tensor out = x;
                for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::exp(out[i]);
                return out;
            }
            case op_kind::sqrt: {
                tensor out = x;
                for (std::size_t i = 0; i < out.numel(); ++i) {
                    if (out[i] < 0.0) throw std::invalid_argument("tape: sqrt of negative value");
                    out[i] = std::sqrt(out[i]);
                }
                return out;
            }
            case op_kind::logsumexp:
                return tensor::scalar(logsumexp_flat(x));
            case op_kind::sum: {
                double s = 0.0;
                for (std::size_t i = 0; i < x.numel(); ++i) s += x[i];
                return tensor::scalar(s);
            }
            case op_kind::log_softmax: {
                double m = logsumexp_flat(x);
                tensor out = x;
                for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= m;
                return out;
            }
            default:
                throw std::logic_error("tape: not a unary op");
        }
    }

    static void accumulate(std::vector<tensor>& adj, std::vector<bool>& live, node_id id,
                           const tensor& g) {
        if (!live[id]) {
            adj[id] = g;
            live[id] = true;
        } else {
            for (std::size_t i = 0; i < g.numel(); ++i) adj[id][i] += g[i];
        }
    }

    std::vector<tape_node> nodes_;
};

}  // namespace igdm
