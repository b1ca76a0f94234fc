#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "igdm/mlp.hpp"
#include "igdm/rng.hpp"
#include "igdm/tensor.hpp"

namespace igdm::testutil {

inline tensor random_tensor(const std::vector<std::size_t>& shape, rng& r, double lo = -1.0,
                            double hi = 1.0) {
    tensor t = tensor::zeros(shape);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = r.uniform(lo, hi);
    return t;
}

// A small random architecture: depth <= 3 hidden layers, width <= max_width.
inline architecture random_arch(rng& r, std::size_t input_dim, std::size_t num_classes,
                                std::size_t max_depth, std::size_t max_width, activation act) {
    architecture a;
    a.input_dim = input_dim;
    a.num_classes = num_classes;
    a.act = act;
    std::size_t depth = 1 + r.below(max_depth);
    for (std::size_t i = 0; i < depth; ++i) a.hidden.push_back(2 + r.below(max_width - 1));
    return a;
}

inline mlp random_mlp(rng& r, std::size_t input_dim, std::size_t num_classes,
                      std::size_t max_depth, std::size_t max_width, activation act) {
    mlp m;
    m.arch = random_arch(r, input_dim, num_classes, max_depth, max_width, act);
    m.params = init_mlp(m.arch, r.next_u64());
    return m;
}

inline double rel_err(double got, double want) {
    return std::fabs(got - want) / std::max(1.0, std::fabs(want));
}

inline tensor mat_vec(const tensor& w, const tensor& v) {
    tensor out = tensor::zeros({w.shape()[0]});
    for (std::size_t i = 0; i < w.shape()[0]; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < w.shape()[1]; ++j) acc += w.at2(i, j) * v[j];
        out[i] = acc;
    }
    return out;
}

// An exactly affine "MLP": zero hidden layers, logits = Wx + b.
inline mlp affine_model(rng& r, std::size_t input_dim, std::size_t num_classes) {
    mlp m;
    m.arch.input_dim = input_dim;
    m.arch.num_classes = num_classes;
    m.arch.act = activation::relu;  // irrelevant, no hidden layers
    m.params.weights.push_back(random_tensor({num_classes, input_dim}, r));
    m.params.biases.push_back(random_tensor({num_classes}, r, -0.5, 0.5));
    return m;
}

}  // namespace igdm::testutil
