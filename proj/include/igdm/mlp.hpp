#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "igdm/rng.hpp"
#include "igdm/tape.hpp"
#include "igdm/tensor.hpp"

namespace igdm {

enum class activation : std::uint8_t { relu = 0, softplus = 1 };

struct architecture {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden;
    std::size_t num_classes = 0;
    activation act = activation::relu;

    std::size_t layer_count() const { return hidden.size() + 1; }

    // Width of layer i's output (layers indexed 0..layer_count-1).
    std::size_t out_dim(std::size_t layer) const {
        return layer < hidden.size() ? hidden[layer] : num_classes;
    }

    std::size_t in_dim(std::size_t layer) const {
        return layer == 0 ? input_dim : hidden[layer - 1];
    }

    void validate() const {
        if (input_dim < 1) throw std::invalid_argument("architecture: input_dim must be >= 1");
        if (num_classes < 2) throw std::invalid_argument("architecture: num_classes must be >= 2");
        for (std::size_t w : hidden) {
            if (w < 1) throw std::invalid_argument("architecture: hidden width must be >= 1");
        }
    }
};

inline bool operator==(const architecture& a, const architecture& b) {
    return a.input_dim == b.input_dim && a.hidden == b.hidden &&
           a.num_classes == b.num_classes && a.act == b.act;
}

// Weights are (out_dim x in_dim) matrices, biases (out_dim) vectors, stored
// in layer order.
struct param_set {
    std::vector<tensor> weights;
    std::vector<tensor> biases;

    std::size_t layer_count() const { return weights.size(); }
};

inline void check_params(const architecture& arch, const param_set& params) {
    if (params.weights.size() != arch.layer_count() || params.biases.size() != arch.layer_count()) {
        throw std::invalid_argument("param_set: layer count does not match architecture");
    }
    for (std::size_t l = 0; l < arch.layer_count(); ++l) {
        const auto& ws = params.weights[l].shape();
        const auto& bs = params.biases[l].shape();
        if (ws.size() != 2 || ws[0] != arch.out_dim(l) || ws[1] != arch.in_dim(l)) {
            throw std::invalid_argument("param_set: weight shape mismatch at layer " +
                                        std::to_string(l));
        }
        if (bs.size() != 1 || bs[0] != arch.out_dim(l)) {
            throw std::invalid_argument("param_set: bias shape mismatch at layer " +
                                        std::to_string(l));
        }
    }
}

// Glorot-uniform weights, zero biases.  Entries are drawn row-major in layer
// order from one seeded stream, so the same seed is bit-identical everywhere.
inline param_set init_mlp(const architecture& arch, std::uint64_t seed) {
    arch.validate();
    param_set p;
    rng r(seed);
    for (std::size_t l = 0; l < arch.layer_count(); ++l) {
        std::size_t fan_out = arch.out_dim(l), fan_in = arch.in_dim(l);
        double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        tensor w = tensor::zeros({fan_out, fan_in});
        for (std::size_t i = 0; i < w.numel(); ++i) w[i] = r.uniform(-bound, bound);
        p.weights.push_back(std::move(w));
        p.biases.push_back(tensor::zeros({fan_out}));
    }
    return p;
}

inline void check_input(const architecture& arch, const tensor& x) {
    if (x.rank() != 1 || x.shape()[0] != arch.input_dim) {
        throw std::invalid_argument("forward: expected input of shape (" +
                                    std::to_string(arch.input_dim) + "), got rank " +
                                    std::to_string(x.rank()) + " with " +
                                    std::to_string(x.numel()) + " elements");
    }
}

// Plain forward pass.  The arithmetic mirrors the taped kernels operation for
// operation (matvec accumulation order, bias add, activation), so plain and
// taped evaluations of the same parameters agree bit for bit.
inline tensor forward(const architecture& arch, const param_set& params, const tensor& x) {
    check_params(arch, params);
    check_input(arch, x);
    tensor a = x;
    for (std::size_t l = 0; l < arch.layer_count(); ++l) {
        const tensor& w = params.weights[l];
        std::size_t m = w.shape()[0], n = w.shape()[1];
        tensor z = tensor::zeros({m});
        for (std::size_t r = 0; r < m; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < n; ++c) s += w.at2(r, c) * a[c];
            z[r] = s;
        }
        for (std::size_t r = 0; r < m; ++r) z[r] += params.biases[l][r];
        if (l + 1 < arch.layer_count()) {
            if (arch.act == activation::relu) {
                for (std::size_t r = 0; r < m; ++r) z[r] = std::max(z[r], 0.0);
            } else {
                for (std::size_t r = 0; r < m; ++r) z[r] = softplus_stable(z[r]);
            }
        }
        a = std::move(z);
    }
    return a;
}

// Pre-activation vectors of each hidden layer; lets tests and diagnostics
// check which affine region of a relu network a point sits in.
inline std::vector<tensor> forward_preacts(const architecture& arch, const param_set& params,
                                           const tensor& x) {
    check_params(arch, params);
    check_input(arch, x);
    std::vector<tensor> pre;
    tensor a = x;
    for (std::size_t l = 0; l < arch.layer_count(); ++l) {
        const tensor& w = params.weights[l];
        std::size_t m = w.shape()[0], n = w.shape()[1];
        tensor z = tensor::zeros({m});
        for (std::size_t r = 0; r < m; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < n; ++c) s += w.at2(r, c) * a[c];
            z[r] = s + params.biases[l][r];
        }
        if (l + 1 < arch.layer_count()) {
            pre.push_back(z);
            if (arch.act == activation::relu) {
                for (std::size_t r = 0; r < m; ++r) z[r] = std::max(z[r], 0.0);
            } else {
                for (std::size_t r = 0; r < m; ++r) z[r] = softplus_stable(z[r]);
            }
        }
        a = std::move(z);
    }
    return pre;
}

// Registers every parameter tensor as a tape leaf in (W0, b0, W1, b1, ...)
// order.  Recording params first gives them stable ids (0..2L-1) on every
// per-sample tape, which is what gradient accumulation across samples keys on.
inline std::vector<node_id> add_param_leaves(tape& tp, const param_set& params, leaf_kind kind) {
    std::vector<node_id> ids;
    ids.reserve(params.layer_count() * 2);
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
        ids.push_back(tp.leaf(params.weights[l], kind));
        ids.push_back(tp.leaf(params.biases[l], kind));
    }
    return ids;
}

// Records the forward pass on an existing tape against already-registered
// parameter leaves; returns the logits node.
inline node_id record_forward(tape& tp, const architecture& arch,
                              const std::vector<node_id>& param_leaves, node_id input) {
    if (param_leaves.size() != arch.layer_count() * 2) {
        throw std::invalid_argument("record_forward: wrong number of parameter leaves");
    }
    if (tp.value(input).rank() != 1 || tp.value(input).shape()[0] != arch.input_dim) {
        throw std::invalid_argument("record_forward: input node has wrong shape");
    }
    node_id a = input;
    for (std::size_t l = 0; l < arch.layer_count(); ++l) {
        node_id z = tp.add(tp.matmul(param_leaves[2 * l], a), param_leaves[2 * l + 1]);
        if (l + 1 < arch.layer_count()) {
            a = arch.act == activation::relu ? tp.relu(z) : tp.softplus(z);
        } else {
            a = z;
        }
    }
    return a;
}

struct recorded_forward {
    tape tp;
    std::vector<node_id> param_leaves;
    node_id input = 0;
    node_id logits = 0;
};

inline recorded_forward record_mlp(const architecture& arch, const param_set& params,
                                   const tensor& x, leaf_kind param_kind = leaf_kind::param) {
    check_params(arch, params);
    check_input(arch, x);
    recorded_forward rf;
    rf.param_leaves = add_param_leaves(rf.tp, params, param_kind);
    rf.input = rf.tp.leaf(x, leaf_kind::input);
    rf.logits = record_forward(rf.tp, arch, rf.param_leaves, rf.input);
    return rf;
}

// K x d Jacobian of the logits with respect to the input, extracted with one
// recorded forward pass and K seeded reverse sweeps.
inline tensor input_jacobian(const architecture& arch, const param_set& params, const tensor& x) {
    recorded_forward rf = record_mlp(arch, params, x, leaf_kind::constant);
    std::size_t k = arch.num_classes, d = arch.input_dim;
    tensor jac = tensor::zeros({k, d});
    std::vector<node_id> wrt{rf.input};
    for (std::size_t row = 0; row < k; ++row) {
        tensor seed = tensor::zeros({k});
        seed[row] = 1.0;
        gradient_map g = rf.tp.backprop_seeded(rf.logits, seed, wrt);
        const tensor& gx = g.at(rf.input);
        for (std::size_t col = 0; col < d; ++col) jac.at2(row, col) = gx[col];
    }
    return jac;
}

// Convenience bundle used by attacks, losses and diagnostics.
struct mlp {
    architecture arch;
    param_set params;
};

inline tensor forward(const mlp& m, const tensor& x) { return forward(m.arch, m.params, x); }

inline tensor input_jacobian(const mlp& m, const tensor& x) {
    return input_jacobian(m.arch, m.params, x);
}

}  // namespace igdm
