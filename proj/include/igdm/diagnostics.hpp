#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "igdm/attack.hpp"
#include "igdm/data.hpp"
#include "igdm/mlp.hpp"
#include "igdm/rng.hpp"
#include "igdm/tensor.hpp"

namespace igdm {

// Input-gradient probes: the gradient of the cross-entropy at the true label
// (the usual choice) or of the largest logit, which is exactly positively
// homogeneous in the final layer and therefore scale-robust.
enum class gradient_probe : std::uint8_t { ce_true_label, max_logit };

struct linearity_probe_config {
    double noise_magnitude = 8.0 / 255.0;
    std::size_t num_probes = 4;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(noise_magnitude > 0.0)) {
            throw std::invalid_argument("linearity_probe_config: noise_magnitude must be > 0");
        }
        if (num_probes < 1) {
            throw std::invalid_argument("linearity_probe_config: num_probes must be >= 1");
        }
    }
};

inline std::size_t argmax_lowest(const tensor& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.numel(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

inline tensor input_gradient(const mlp& m, const tensor& x, int y, gradient_probe probe) {
    recorded_forward rf = record_mlp(m.arch, m.params, x, leaf_kind::constant);
    std::vector<node_id> wrt{rf.input};
    if (probe == gradient_probe::ce_true_label) {
        node_id ce = cross_entropy_node(rf.tp, rf.logits, y);
        return rf.tp.backprop_scalar(ce, wrt).at(rf.input);
    }
    tensor seed = tensor::zeros({m.arch.num_classes});
    seed[argmax_lowest(rf.tp.value(rf.logits))] = 1.0;
    return rf.tp.backprop_seeded(rf.logits, seed, wrt).at(rf.input);
}

// || f(x+eps) - f(x) - J eps ||_2 / || f(x+eps) ||_2 — the share of the
// perturbed output that the local linearization fails to explain.
inline double remainder_proportion(const architecture& arch, const param_set& params,
                                   const tensor& x, const tensor& epsilon_noise) {
    check_input(arch, x);
    check_same_shape(x, epsilon_noise, "remainder_proportion");
    tensor x_pert = x;
    for (std::size_t i = 0; i < x_pert.numel(); ++i) x_pert[i] += epsilon_noise[i];
    tensor f_pert = forward(arch, params, x_pert);
    tensor f_base = forward(arch, params, x);
    tensor jac = input_jacobian(arch, params, x);
    std::size_t k = arch.num_classes, d = arch.input_dim;
    tensor resid = f_pert;
    for (std::size_t r = 0; r < k; ++r) {
        double je = 0.0;
        for (std::size_t c = 0; c < d; ++c) je += jac.at2(r, c) * epsilon_noise[c];
        resid[r] -= f_base[r] + je;
    }
    double den = l2_norm(f_pert);
    if (den == 0.0) {
        throw std::invalid_argument("remainder_proportion: zero output norm at perturbed point");
    }
    return l2_norm(resid) / den;
}

inline double remainder_proportion(const mlp& m, const tensor& x, const tensor& eps) {
    return remainder_proportion(m.arch, m.params, x, eps);
}

inline double pointwise_distance(const mlp& teacher, const mlp& student, const tensor& x,
                                 const tensor& delta) {
    detail::check_pair(student, &teacher);
    tensor pt = apply_delta(x, delta);
    return l2_norm(sub(forward(teacher, pt), forward(student, pt)));
}

inline double gradient_distance(const mlp& teacher, const mlp& student, const dataset& ds,
                                gradient_probe probe) {
    detail::check_pair(student, &teacher);
    if (ds.size() == 0) throw std::invalid_argument("gradient_distance: empty dataset");
    double sum = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        tensor x = ds.row(i);
        tensor gt = input_gradient(teacher, x, ds.labels[i], probe);
        tensor gs = input_gradient(student, x, ds.labels[i], probe);
        sum += l2_norm(sub(gt, gs));
    }
    return sum / static_cast<double>(ds.size());
}

struct cosine_stats {
    double mean = 0.0;
    std::size_t used = 0;
    std::size_t skipped = 0;  // samples where either gradient norm < 1e-12
};

inline cosine_stats gradient_cosine_stats(const mlp& teacher, const mlp& student,
                                          const dataset& ds, gradient_probe probe) {
    detail::check_pair(student, &teacher);
    cosine_stats st;
    double sum = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        tensor x = ds.row(i);
        tensor gt = input_gradient(teacher, x, ds.labels[i], probe);
        tensor gs = input_gradient(student, x, ds.labels[i], probe);
        double nt = l2_norm(gt), ns = l2_norm(gs);
        if (nt < 1e-12 || ns < 1e-12) {
            ++st.skipped;
            continue;
        }
        double c = dot(gt, gs) / (nt * ns);
        sum += std::min(std::max(c, -1.0), 1.0);
        ++st.used;
    }
    if (st.used == 0) {
        throw std::invalid_argument("gradient_cosine: every sample had a degenerate gradient");
    }
    st.mean = sum / static_cast<double>(st.used);
    return st;
}

inline double gradient_cosine(const mlp& teacher, const mlp& student, const dataset& ds,
                              gradient_probe probe) {
    return gradient_cosine_stats(teacher, student, ds, probe).mean;
}

// Teacher/student alignment summary over one dataset.  gd/gc use the
// cross-entropy probe; the max-logit versions ride along for reports.
// pw_uniform averages pointwise distances under uniform noise draws,
// pw_adv under attacks crafted with the run's inner objective, and
// remainder measures the student's own local linearity.
struct alignment_report {
    double gd = 0.0;
    double gc = 0.0;
    double pw_uniform = 0.0;
    double pw_adv = 0.0;
    double remainder = 0.0;
    double gd_logit = 0.0;
    double gc_logit = 0.0;
    std::size_t gc_skipped = 0;
    std::size_t gc_logit_skipped = 0;
};

inline alignment_report make_alignment_report(const mlp& teacher, const mlp& student,
                                              const dataset& ds, const attack_config& atk,
                                              inner_kind inner,
                                              const linearity_probe_config& probe,
                                              std::uint64_t seed) {
    detail::check_pair(student, &teacher);
    probe.validate();
    atk.validate();
    if (ds.size() == 0) throw std::invalid_argument("alignment_report: empty dataset");
    ds.validate();

    alignment_report rep;
    rep.gd = gradient_distance(teacher, student, ds, gradient_probe::ce_true_label);
    cosine_stats cs = gradient_cosine_stats(teacher, student, ds, gradient_probe::ce_true_label);
    rep.gc = cs.mean;
    rep.gc_skipped = cs.skipped;
    rep.gd_logit = gradient_distance(teacher, student, ds, gradient_probe::max_logit);
    cosine_stats cl = gradient_cosine_stats(teacher, student, ds, gradient_probe::max_logit);
    rep.gc_logit = cl.mean;
    rep.gc_logit_skipped = cl.skipped;

    inner_objective obj{inner, &student, &teacher};
    std::size_t d = ds.dim();
    double pw_u = 0.0, pw_a = 0.0, rem = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        tensor x = ds.row(i);
        double u_acc = 0.0, r_acc = 0.0;
        for (std::size_t p = 0; p < probe.num_probes; ++p) {
            rng ru(derive_seed(probe.seed, {0x0FF5E7ull, i, p}));
            tensor du = tensor::zeros({d});
            for (std::size_t j = 0; j < d; ++j) {
                du[j] = ru.uniform(-probe.noise_magnitude, probe.noise_magnitude);
            }
            u_acc += pointwise_distance(teacher, student, x, du);
            rng rr(derive_seed(probe.seed, {0x4E41Dull, i, p}));
            tensor dr = tensor::zeros({d});
            for (std::size_t j = 0; j < d; ++j) {
                dr[j] = rr.uniform(-probe.noise_magnitude, probe.noise_magnitude);
            }
            r_acc += remainder_proportion(student, x, dr);
        }
        pw_u += u_acc / static_cast<double>(probe.num_probes);
        rem += r_acc / static_cast<double>(probe.num_probes);
        tensor da = pgd(obj, x, ds.labels[i], atk, seed ^ static_cast<std::uint64_t>(i));
        pw_a += pointwise_distance(teacher, student, x, da);
    }
    rep.pw_uniform = pw_u / static_cast<double>(ds.size());
    rep.pw_adv = pw_a / static_cast<double>(ds.size());
    rep.remainder = rem / static_cast<double>(ds.size());
    return rep;
}

}  // namespace igdm
