#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "igdm/losses.hpp"
#include "igdm/mlp.hpp"
#include "igdm/rng.hpp"
#include "igdm/tape.hpp"
#include "igdm/tensor.hpp"

namespace igdm {

// Inner maximization objectives.  pgd_ce raises the student's cross-entropy;
// the kl kinds raise divergence from an anchor distribution: the student's
// own clean prediction (trades_kl), the teacher's clean prediction
// (rslad_kl), or the teacher evaluated at the same perturbed point
// (adaad_kl, where the gradient flows through the teacher branch too).
enum class inner_kind : std::uint8_t { pgd_ce, trades_kl, rslad_kl, adaad_kl };

struct attack_config {
    double epsilon = 8.0 / 255.0;
    double step_size = 2.0 / 255.0;
    std::size_t steps = 10;
    bool random_start = true;
    double clamp_lo = 0.0;
    double clamp_hi = 1.0;

    void validate() const {
        if (!(epsilon > 0.0)) throw std::invalid_argument("attack_config: epsilon must be > 0");
        if (!(step_size > 0.0)) throw std::invalid_argument("attack_config: step_size must be > 0");
        if (steps < 1) throw std::invalid_argument("attack_config: steps must be >= 1");
        if (!(clamp_lo < clamp_hi)) throw std::invalid_argument("attack_config: empty clamp range");
    }
};

struct inner_objective {
    inner_kind kind = inner_kind::pgd_ce;
    const mlp* student = nullptr;
    const mlp* teacher = nullptr;  // rslad_kl and adaad_kl only
};

namespace detail {

inline void check_objective(const inner_objective& obj, const tensor& x, int y) {
    if (obj.student == nullptr) throw std::invalid_argument("attack: objective needs a student");
    check_input(obj.student->arch, x);
    if (y < 0 || static_cast<std::size_t>(y) >= obj.student->arch.num_classes) {
        throw std::invalid_argument("attack: label out of range");
    }
    if ((obj.kind == inner_kind::rslad_kl || obj.kind == inner_kind::adaad_kl) &&
        obj.teacher == nullptr) {
        throw std::invalid_argument("attack: this inner objective needs a teacher");
    }
    if (obj.teacher != nullptr) check_pair(*obj.student, obj.teacher);
}

// The objective recorded once per sample; attack steps move the input leaf
// and replay instead of rebuilding the graph.
struct objective_tape {
    tape tp;
    node_id input = 0;
    node_id value = 0;
};

inline objective_tape build_objective(const inner_objective& obj, const tensor& x,
                                      const tensor& start_point, int y) {
    objective_tape ot;
    std::vector<node_id> s_leaves =
        add_param_leaves(ot.tp, obj.student->params, leaf_kind::constant);
    ot.input = ot.tp.leaf(start_point, leaf_kind::input);
    node_id s_out = record_forward(ot.tp, obj.student->arch, s_leaves, ot.input);
    switch (obj.kind) {
        case inner_kind::pgd_ce:
            ot.value = cross_entropy_node(ot.tp, s_out, y);
            break;
        case inner_kind::trades_kl: {
            node_id anchor = ot.tp.leaf(forward(*obj.student, x), leaf_kind::constant);
            ot.value = kl_node(ot.tp, s_out, anchor, 1.0);
            break;
        }
        case inner_kind::rslad_kl: {
            node_id anchor = ot.tp.leaf(forward(*obj.teacher, x), leaf_kind::constant);
            ot.value = kl_node(ot.tp, s_out, anchor, 1.0);
            break;
        }
        case inner_kind::adaad_kl: {
            std::vector<node_id> t_leaves =
                add_param_leaves(ot.tp, obj.teacher->params, leaf_kind::constant);
            node_id t_out = record_forward(ot.tp, obj.teacher->arch, t_leaves, ot.input);
            ot.value = kl_node(ot.tp, s_out, t_out, 1.0);
            break;
        }
    }
    return ot;
}

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace detail

// Value of the inner objective at x + delta (recorded on a tape, so the
// input gradient is available to attack loops).
inline double objective_value(const inner_objective& obj, const tensor& x, const tensor& delta,
                              int y) {
    detail::check_objective(obj, x, y);
    check_same_shape(x, delta, "objective_value");
    tensor pt = x;
    for (std::size_t i = 0; i < pt.numel(); ++i) pt[i] += delta[i];
    detail::objective_tape ot = detail::build_objective(obj, x, pt, y);
    return ot.tp.value(ot.value).item();
}

// Projected signed-gradient ascent in the l-inf ball of radius epsilon.
// Returns delta with x + delta inside [clamp_lo, clamp_hi] and
// |delta_i| <= epsilon.  Deterministic in (inputs, seed).
inline tensor pgd(const inner_objective& obj, const tensor& x, int y, const attack_config& cfg,
                  std::uint64_t seed) {
    cfg.validate();
    detail::check_objective(obj, x, y);
    for (std::size_t i = 0; i < x.numel(); ++i) {
        if (x[i] < cfg.clamp_lo || x[i] > cfg.clamp_hi) {
            throw std::invalid_argument("pgd: x outside clamp range");
        }
    }

    std::size_t d = x.numel();
    tensor delta = tensor::zeros(x.shape());
    if (cfg.random_start) {
        rng r(derive_seed(seed, {0xA71AC0ull}));
        for (std::size_t i = 0; i < d; ++i) delta[i] = r.uniform(-cfg.epsilon, cfg.epsilon);
    }

    tensor pt = x;
    for (std::size_t i = 0; i < d; ++i) pt[i] += delta[i];
    detail::objective_tape ot = detail::build_objective(obj, x, pt, y);
    std::vector<node_id> wrt{ot.input};

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        gradient_map g = ot.tp.backprop_scalar(ot.value, wrt);
        const tensor& gx = g.at(ot.input);
        for (std::size_t i = 0; i < d; ++i) {
            double v = delta[i] + cfg.step_size * detail::sign(gx[i]);
            v = std::min(std::max(v, -cfg.epsilon), cfg.epsilon);
            double moved = std::min(std::max(x[i] + v, cfg.clamp_lo), cfg.clamp_hi);
            delta[i] = moved - x[i];
            pt[i] = moved;
        }
        if (step + 1 < cfg.steps) {
            ot.tp.set_leaf(ot.input, pt);
            ot.tp.replay_forward();
        }
    }
    return delta;
}

// Single signed-gradient step of size epsilon from delta = 0; shares the pgd
// code path, so it is bit-identical to pgd with steps=1, no random start.
inline tensor fgsm(const inner_objective& obj, const tensor& x, int y, const attack_config& cfg) {
    attack_config one = cfg;
    one.steps = 1;
    one.step_size = cfg.epsilon;
    one.random_start = false;
    return pgd(obj, x, y, one, 0);
}

inline tensor apply_delta(const tensor& x, const tensor& delta) {
    tensor out = x;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += delta[i];
    return out;
}

}  // namespace igdm
