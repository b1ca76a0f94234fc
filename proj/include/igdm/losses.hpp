#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "igdm/mlp.hpp"
#include "igdm/tape.hpp"
#include "igdm/tensor.hpp"

namespace igdm {

enum class ad_kind : std::uint8_t {
    pgd_at,
    trades,
    ard,
    rslad,
    adaad,
    trades_reg,
    igdm_trades_like,
};

enum class surrogate_kind : std::uint8_t { kl, l1, l2 };

// Which discrepancy term rides on the ramp next to the base loss.  `igdm`
// matches logit differences against the teacher; `trades_like` and
// `trades_reg` are the teacher-free ablations; `direct_fd` matches
// finite-difference input Jacobians row-wise.
enum class igdm_variant : std::uint8_t { igdm, trades_like, trades_reg, direct_fd };

struct loss_spec {
    ad_kind kind = ad_kind::pgd_at;
    double igdm_alpha = 0.0;
    surrogate_kind surrogate = surrogate_kind::kl;
    double temperature = 1.0;   // ard only
    double trades_beta = 6.0;
    double mix_lambda = 1.0;    // distillation kinds; 1 = pure distillation
    igdm_variant variant = igdm_variant::igdm;
    bool kl_reverse = false;    // swap prediction/target in every KL
    double direct_fd_step = 1e-4;

    void validate() const {
        if (igdm_alpha < 0.0) throw std::invalid_argument("loss_spec: igdm_alpha must be >= 0");
        if (!(temperature > 0.0)) throw std::invalid_argument("loss_spec: temperature must be > 0");
        if (trades_beta < 0.0) throw std::invalid_argument("loss_spec: trades_beta must be >= 0");
        if (mix_lambda < 0.0 || mix_lambda > 1.0) {
            throw std::invalid_argument("loss_spec: mix_lambda must be in [0, 1]");
        }
        if (!(direct_fd_step > 0.0)) {
            throw std::invalid_argument("loss_spec: direct_fd_step must be > 0");
        }
    }
};

// Linear warm-up of the discrepancy weight: weight_at(e) = alpha * e / total,
// 0-based, so epoch 0 trains on the base loss alone.
struct ramp_schedule {
    double alpha = 0.0;
    std::size_t total_epochs = 1;

    double weight_at(std::size_t epoch) const {
        if (total_epochs < 1) throw std::invalid_argument("ramp_schedule: total_epochs must be >= 1");
        if (epoch >= total_epochs) {
            throw std::invalid_argument("ramp_schedule: epoch " + std::to_string(epoch) +
                                        " is beyond total_epochs " + std::to_string(total_epochs));
        }
        return alpha * static_cast<double>(epoch) / static_cast<double>(total_epochs);
    }
};

inline double combined_loss(double ad_value, double igdm_value, const ramp_schedule& ramp,
                            std::size_t epoch) {
    return ad_value + ramp.weight_at(epoch) * igdm_value;
}

// ---- plain scalar losses ----

inline double cross_entropy(const tensor& logits, int y) {
    if (logits.rank() != 1) throw std::invalid_argument("cross_entropy: logits must be a vector");
    if (y < 0 || static_cast<std::size_t>(y) >= logits.shape()[0]) {
        throw std::invalid_argument("cross_entropy: label out of range");
    }
    return logsumexp_flat(logits) - logits[static_cast<std::size_t>(y)];
}

// KL(q || p) with q from q_logits (the target) and p from p_logits (the
// prediction), both tempered by tau: sum_k q_k (log q_k - log p_k).
inline double kl_div(const tensor& p_logits, const tensor& q_logits, double tau) {
    check_same_shape(p_logits, q_logits, "kl_div");
    if (p_logits.rank() != 1) throw std::invalid_argument("kl_div: logits must be vectors");
    if (!(tau > 0.0)) throw std::invalid_argument("kl_div: tau must be > 0");
    tensor p = scaled(p_logits, 1.0 / tau);
    tensor q = scaled(q_logits, 1.0 / tau);
    double lse_p = logsumexp_flat(p);
    double lse_q = logsumexp_flat(q);
    double out = 0.0;
    for (std::size_t k = 0; k < p.numel(); ++k) {
        double log_qk = q[k] - lse_q;
        double log_pk = p[k] - lse_p;
        out += std::exp(log_qk) * (log_qk - log_pk);
    }
    return out;
}

// Discrepancy between two same-shape vectors; `a` is the target side (for kl
// it is softmax-normalized into the reference distribution).
inline double surrogate_distance(surrogate_kind kind, const tensor& a, const tensor& b) {
    check_same_shape(a, b, "surrogate_distance");
    switch (kind) {
        case surrogate_kind::kl:
            return kl_div(b, a, 1.0);
        case surrogate_kind::l1: {
            double s = 0.0;
            for (std::size_t i = 0; i < a.numel(); ++i) s += std::fabs(a[i] - b[i]);
            return s;
        }
        case surrogate_kind::l2: {
            double s = 0.0;
            for (std::size_t i = 0; i < a.numel(); ++i) {
                double d = a[i] - b[i];
                s += d * d;
            }
            return std::sqrt(s);
        }
    }
    throw std::logic_error("surrogate_distance: unknown kind");
}

// ---- tape-node builders (gradients flow through every student branch) ----

inline node_id cross_entropy_node(tape& tp, node_id logits, int y) {
    const tensor& v = tp.value(logits);
    if (v.rank() != 1) throw std::invalid_argument("cross_entropy_node: logits must be a vector");
    if (y < 0 || static_cast<std::size_t>(y) >= v.shape()[0]) {
        throw std::invalid_argument("cross_entropy_node: label out of range");
    }
    tensor onehot = tensor::zeros(v.shape());
    onehot[static_cast<std::size_t>(y)] = 1.0;
    node_id pick = tp.sum(tp.mul(logits, tp.leaf(onehot, leaf_kind::constant)));
    return tp.sub(tp.logsumexp(logits), pick);
}

// KL(q || p) as tape nodes; differentiates through whichever side is not a
// constant leaf.  p_logits is the prediction, q_logits the target.
inline node_id kl_node(tape& tp, node_id p_logits, node_id q_logits, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("kl_node: tau must be > 0");
    node_id lsp = tp.log_softmax(tp.scale(p_logits, 1.0 / tau));
    node_id lsq = tp.log_softmax(tp.scale(q_logits, 1.0 / tau));
    node_id q = tp.exp(lsq);
    return tp.sum(tp.mul(q, tp.sub(lsq, lsp)));
}

// surrogate_distance as tape nodes; `target`/`pred` mirror the plain version's
// (a, b) argument order.
inline node_id surrogate_node(tape& tp, surrogate_kind kind, node_id target, node_id pred) {
    switch (kind) {
        case surrogate_kind::kl:
            return kl_node(tp, pred, target, 1.0);
        case surrogate_kind::l1: {
            node_id d = tp.sub(target, pred);
            return tp.sum(tp.maximum(d, tp.scale(d, -1.0)));
        }
        case surrogate_kind::l2: {
            node_id d = tp.sub(target, pred);
            return tp.sqrt(tp.sum(tp.mul(d, d)));
        }
    }
    throw std::logic_error("surrogate_node: unknown kind");
}

namespace detail {

inline void check_pair(const mlp& student, const mlp* teacher) {
    if (teacher == nullptr) return;
    if (teacher->arch.num_classes != student.arch.num_classes ||
        teacher->arch.input_dim != student.arch.input_dim) {
        throw std::invalid_argument("loss: teacher and student disagree on input dim or classes");
    }
}

inline tensor shifted(const tensor& x, const tensor& delta, double sign) {
    check_same_shape(x, delta, "loss: delta shape");
    tensor out = x;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += sign * delta[i];
    return out;
}

}  // namespace detail

// One sample's full loss graph: base adversarial/distillation loss plus the
// ramped discrepancy term.  Student parameters are leaves 0..2L-1 so batch
// accumulation can key on stable ids; the teacher contributes constants only
// (its parameters are never differentiated).
struct sample_loss_graph {
    tape tp;
    std::vector<node_id> param_leaves;
    node_id total = 0;
    double total_value = 0.0;
    double ad_value = 0.0;
    double igdm_value = 0.0;  // unweighted discrepancy; 0 when the ramp weight is 0
};

inline sample_loss_graph build_sample_loss(const mlp& student, const mlp* teacher,
                                           const tensor& x, const tensor& delta, int y,
                                           const loss_spec& spec, double ramp_weight) {
    spec.validate();
    check_params(student.arch, student.params);
    check_input(student.arch, x);
    detail::check_pair(student, teacher);

    const bool teacher_needed_for_ad = spec.kind == ad_kind::ard || spec.kind == ad_kind::rslad ||
                                       spec.kind == ad_kind::adaad;
    const bool teacher_needed_for_variant =
        ramp_weight != 0.0 &&
        (spec.variant == igdm_variant::igdm || spec.variant == igdm_variant::direct_fd);
    if ((teacher_needed_for_ad || teacher_needed_for_variant) && teacher == nullptr) {
        throw std::invalid_argument("loss: this configuration requires a teacher model");
    }

    sample_loss_graph g;
    g.param_leaves = add_param_leaves(g.tp, student.params, leaf_kind::param);

    tensor x_plus = detail::shifted(x, delta, 1.0);
    tensor x_minus = detail::shifted(x, delta, -1.0);

    // Student forwards recorded lazily and shared between the base loss and
    // the discrepancy term.
    std::optional<node_id> s_clean, s_plus, s_minus;
    auto student_at = [&](const tensor& pt, std::optional<node_id>& slot) {
        if (!slot) {
            node_id in = g.tp.leaf(pt, leaf_kind::input);
            slot = record_forward(g.tp, student.arch, g.param_leaves, in);
        }
        return *slot;
    };
    auto teacher_const = [&](const tensor& pt) {
        return g.tp.leaf(forward(*teacher, pt), leaf_kind::constant);
    };

    auto kl_directed = [&](node_id pred, node_id target, double tau) {
        return spec.kl_reverse ? kl_node(g.tp, target, pred, tau) : kl_node(g.tp, pred, target, tau);
    };
    auto surrogate_directed = [&](node_id target, node_id pred) {
        return spec.kl_reverse ? surrogate_node(g.tp, spec.surrogate, pred, target)
                               : surrogate_node(g.tp, spec.surrogate, target, pred);
    };

    node_id ad = 0;
    double lam = spec.mix_lambda;
    switch (spec.kind) {
        case ad_kind::pgd_at:
            ad = cross_entropy_node(g.tp, student_at(x_plus, s_plus), y);
            break;
        case ad_kind::trades: {
            node_id sc = student_at(x, s_clean);
            node_id sp = student_at(x_plus, s_plus);
            node_id ce = cross_entropy_node(g.tp, sc, y);
            node_id kl = kl_directed(sp, sc, 1.0);
            ad = g.tp.add(ce, g.tp.scale(kl, spec.trades_beta));
            break;
        }
        case ad_kind::ard: {
            node_id sc = student_at(x, s_clean);
            node_id sp = student_at(x_plus, s_plus);
            node_id tc = teacher_const(x);
            node_id ce = cross_entropy_node(g.tp, sc, y);
            node_id kl = kl_directed(sp, tc, spec.temperature);
            ad = g.tp.add(g.tp.scale(ce, 1.0 - lam),
                          g.tp.scale(kl, lam * spec.temperature * spec.temperature));
            break;
        }
        case ad_kind::rslad: {
            node_id sp = student_at(x_plus, s_plus);
            node_id sc = student_at(x, s_clean);
            node_id t_clean = teacher_const(x);
            node_id kl_adv = kl_directed(sp, t_clean, 1.0);
            node_id kl_clean = kl_directed(sc, t_clean, 1.0);
            ad = g.tp.add(g.tp.scale(kl_adv, lam), g.tp.scale(kl_clean, 1.0 - lam));
            break;
        }
        case ad_kind::adaad: {
            node_id sp = student_at(x_plus, s_plus);
            node_id tp_adv = teacher_const(x_plus);
            node_id sc = student_at(x, s_clean);
            node_id tc = teacher_const(x);
            node_id kl_adv = kl_directed(sp, tp_adv, 1.0);
            node_id kl_clean = kl_directed(sc, tc, 1.0);
            ad = g.tp.add(g.tp.scale(kl_adv, lam), g.tp.scale(kl_clean, 1.0 - lam));
            break;
        }
        case ad_kind::trades_reg: {
            node_id sc = student_at(x, s_clean);
            node_id sp = student_at(x_plus, s_plus);
            ad = g.tp.scale(surrogate_directed(sc, sp), spec.igdm_alpha);
            break;
        }
        case ad_kind::igdm_trades_like: {
            node_id sm = student_at(x_minus, s_minus);
            node_id sp = student_at(x_plus, s_plus);
            ad = g.tp.scale(surrogate_directed(sm, sp), spec.igdm_alpha);
            break;
        }
    }
    g.ad_value = g.tp.value(ad).item();

    node_id total = ad;
    if (ramp_weight != 0.0) {
        node_id term = 0;
        switch (spec.variant) {
            case igdm_variant::igdm: {
                node_id sp = student_at(x_plus, s_plus);
                node_id sm = student_at(x_minus, s_minus);
                node_id s_diff = g.tp.sub(sp, sm);
                tensor t_diff = sub(forward(*teacher, x_plus), forward(*teacher, x_minus));
                node_id t_leaf = g.tp.leaf(t_diff, leaf_kind::constant);
                term = surrogate_directed(t_leaf, s_diff);
                break;
            }
            case igdm_variant::trades_like: {
                node_id sm = student_at(x_minus, s_minus);
                node_id sp = student_at(x_plus, s_plus);
                term = surrogate_directed(sm, sp);
                break;
            }
            case igdm_variant::trades_reg: {
                node_id sc = student_at(x, s_clean);
                node_id sp = student_at(x_plus, s_plus);
                term = surrogate_directed(sc, sp);
                break;
            }
            case igdm_variant::direct_fd: {
                if (spec.surrogate == surrogate_kind::kl) {
                    throw std::invalid_argument(
                        "loss: direct_fd training supports l1/l2 surrogates only");
                }
                // Columns of the student's FD Jacobian vs the teacher's exact
                // one, assembled row-wise without ever materializing rows.
                std::size_t d = student.arch.input_dim;
                std::size_t k = student.arch.num_classes;
                double h = spec.direct_fd_step;
                tensor jt = input_jacobian(*teacher, x);
                std::optional<node_id> row_sq;  // l2: per-class sum of squares
                std::optional<node_id> acc;     // l1: running scalar sum
                for (std::size_t i = 0; i < d; ++i) {
                    tensor xp = x, xm = x;
                    xp[i] += h;
                    xm[i] -= h;
                    node_id in_p = g.tp.leaf(xp, leaf_kind::constant);
                    node_id in_m = g.tp.leaf(xm, leaf_kind::constant);
                    node_id out_p = record_forward(g.tp, student.arch, g.param_leaves, in_p);
                    node_id out_m = record_forward(g.tp, student.arch, g.param_leaves, in_m);
                    node_id col = g.tp.scale(g.tp.sub(out_p, out_m), 1.0 / (2.0 * h));
                    tensor jt_col = tensor::zeros({k});
                    for (std::size_t r = 0; r < k; ++r) jt_col[r] = jt.at2(r, i);
                    node_id err = g.tp.sub(col, g.tp.leaf(jt_col, leaf_kind::constant));
                    if (spec.surrogate == surrogate_kind::l2) {
                        node_id sq = g.tp.mul(err, err);
                        row_sq = row_sq ? g.tp.add(*row_sq, sq) : sq;
                    } else {
                        node_id a = g.tp.sum(g.tp.maximum(err, g.tp.scale(err, -1.0)));
                        acc = acc ? g.tp.add(*acc, a) : a;
                    }
                }
                term = spec.surrogate == surrogate_kind::l2 ? g.tp.sum(g.tp.sqrt(*row_sq)) : *acc;
                break;
            }
        }
        g.igdm_value = g.tp.value(term).item();
        total = g.tp.add(ad, g.tp.scale(term, ramp_weight));
    }
    g.total = total;
    g.total_value = g.tp.value(total).item();
    return g;
}

// ---- value-level loss operations ----

// Base adversarial/distillation loss for one sample.  Uses the same graph
// assembly the trainer records, so values agree bit for bit with training.
inline double ad_outer_loss(ad_kind kind, const mlp& student, const mlp* teacher, const tensor& x,
                            const tensor& delta, int y, const loss_spec& spec) {
    loss_spec s = spec;
    s.kind = kind;
    return build_sample_loss(student, teacher, x, delta, y, s, 0.0).ad_value;
}

// Unweighted discrepancy between the student's and teacher's logit
// differences across x+delta / x-delta.
inline double igdm_loss(const mlp& student, const mlp& teacher, const tensor& x,
                        const tensor& delta, const loss_spec& spec) {
    spec.validate();
    detail::check_pair(student, &teacher);
    check_input(student.arch, x);
    tensor x_plus = detail::shifted(x, delta, 1.0);
    tensor x_minus = detail::shifted(x, delta, -1.0);

    tape tp;
    std::vector<node_id> leaves = add_param_leaves(tp, student.params, leaf_kind::param);
    node_id in_p = tp.leaf(x_plus, leaf_kind::input);
    node_id in_m = tp.leaf(x_minus, leaf_kind::input);
    node_id out_p = record_forward(tp, student.arch, leaves, in_p);
    node_id out_m = record_forward(tp, student.arch, leaves, in_m);
    node_id s_diff = tp.sub(out_p, out_m);
    tensor t_diff = sub(forward(teacher, x_plus), forward(teacher, x_minus));
    node_id t_leaf = tp.leaf(t_diff, leaf_kind::constant);
    node_id term = spec.kl_reverse ? surrogate_node(tp, spec.surrogate, s_diff, t_leaf)
                                   : surrogate_node(tp, spec.surrogate, t_leaf, s_diff);
    return tp.value(term).item();
}

// Row-wise discrepancy between finite-difference student input Jacobian and
// the teacher's exact one, weighted by igdm_alpha.  All input coordinates are
// probed.
inline double direct_gradient_loss(const mlp& student, const mlp& teacher, const tensor& x,
                                   const loss_spec& spec, double h) {
    spec.validate();
    if (!(h > 0.0)) throw std::invalid_argument("direct_gradient_loss: h must be > 0");
    detail::check_pair(student, &teacher);
    check_input(student.arch, x);
    std::size_t d = student.arch.input_dim;
    std::size_t k = student.arch.num_classes;
    tensor js = tensor::zeros({k, d});
    for (std::size_t i = 0; i < d; ++i) {
        tensor xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        tensor fp = forward(student, xp);
        tensor fm = forward(student, xm);
        for (std::size_t r = 0; r < k; ++r) js.at2(r, i) = (fp[r] - fm[r]) / (2.0 * h);
    }
    tensor jt = input_jacobian(teacher, x);
    double total = 0.0;
    for (std::size_t r = 0; r < k; ++r) {
        tensor rt = tensor::zeros({d}), rs = tensor::zeros({d});
        for (std::size_t i = 0; i < d; ++i) {
            rt[i] = jt.at2(r, i);
            rs[i] = js.at2(r, i);
        }
        total += spec.kl_reverse ? surrogate_distance(spec.surrogate, rs, rt)
                                 : surrogate_distance(spec.surrogate, rt, rs);
    }
    return spec.igdm_alpha * total;
}

}  // namespace igdm
