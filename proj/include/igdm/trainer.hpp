#pragma once

#include <bit>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "igdm/attack.hpp"
#include "igdm/data.hpp"
#include "igdm/diagnostics.hpp"
#include "igdm/errors.hpp"
#include "igdm/losses.hpp"
#include "igdm/mlp.hpp"
#include "igdm/rng.hpp"
#include "igdm/tensor.hpp"

namespace igdm {

struct train_config {
    std::uint64_t seed = 0;
    std::size_t epochs = 1;
    std::size_t batch_size = 128;
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::vector<std::size_t> lr_drop_epochs;
    double lr_drop_factor = 0.1;
    bool natural = false;  // skip the inner maximization, train at delta = 0
    inner_kind inner = inner_kind::pgd_ce;
    attack_config attack;       // training attack (clamp range comes from the data)
    inner_kind eval_inner = inner_kind::pgd_ce;
    attack_config eval_attack;  // robustness evaluation attack
    loss_spec loss;
    bool diagnostics = false;   // per-epoch gd/gc/remainder on the holdout
    linearity_probe_config probe;
    std::size_t diag_max_samples = 256;
    gradient_probe diag_probe = gradient_probe::ce_true_label;

    train_config() {
        eval_attack.steps = 20;
        eval_attack.step_size = attack.epsilon / 8.0;
    }

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("train_config: epochs must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("train_config: batch_size must be >= 1");
        if (!(lr > 0.0)) throw std::invalid_argument("train_config: lr must be > 0");
        if (momentum < 0.0 || momentum >= 1.0) {
            throw std::invalid_argument("train_config: momentum must be in [0, 1)");
        }
        if (weight_decay < 0.0) throw std::invalid_argument("train_config: weight_decay must be >= 0");
        if (!(lr_drop_factor > 0.0)) {
            throw std::invalid_argument("train_config: lr_drop_factor must be > 0");
        }
        attack.validate();
        eval_attack.validate();
        loss.validate();
        probe.validate();
        if (diag_max_samples < 1) {
            throw std::invalid_argument("train_config: diag_max_samples must be >= 1");
        }
    }
};

// One row of the per-epoch metrics table.  gd/gc/remainder are NaN whenever
// the run cannot produce them (no teacher, diagnostics off).
struct metric_record {
    std::size_t epoch = 0;
    double loss_total = 0.0;
    double loss_ad = 0.0;
    double loss_igdm = 0.0;
    double clean_acc = 0.0;
    double pgd_acc = 0.0;
    double gd = 0.0;
    double gc = 0.0;
    double remainder = 0.0;
    double lr = 0.0;
};

struct train_history {
    std::vector<metric_record> records;
    param_set final_params;
    double wall_seconds = 0.0;
    std::vector<double> epoch_seconds;
};

inline double lr_at_epoch(const train_config& cfg, std::size_t epoch) {
    double lr = cfg.lr;
    for (std::size_t drop : cfg.lr_drop_epochs) {
        if (drop <= epoch) lr *= cfg.lr_drop_factor;
    }
    return lr;
}

// v <- momentum * v + (g + wd * theta); theta <- theta - lr * v.
// Gradients are keyed by the stable leaf ids 0..2L-1 that build_sample_loss
// assigns (W0, b0, W1, b1, ...).
inline void sgd_step(param_set& params, const gradient_map& grads, param_set& velocity, double lr,
                     double momentum, double weight_decay) {
    if (velocity.layer_count() != params.layer_count()) {
        throw std::invalid_argument("sgd_step: velocity layout does not match params");
    }
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
        for (int part = 0; part < 2; ++part) {
            tensor& theta = part == 0 ? params.weights[l] : params.biases[l];
            tensor& vel = part == 0 ? velocity.weights[l] : velocity.biases[l];
            const tensor& g = grads.at(2 * l + static_cast<std::size_t>(part));
            check_same_shape(theta, g, "sgd_step");
            check_same_shape(theta, vel, "sgd_step");
            for (std::size_t i = 0; i < theta.numel(); ++i) {
                vel[i] = momentum * vel[i] + (g[i] + weight_decay * theta[i]);
                theta[i] -= lr * vel[i];
            }
        }
    }
}

inline param_set zeros_like(const param_set& p) {
    param_set z;
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
        z.weights.push_back(tensor::zeros(p.weights[l].shape()));
        z.biases.push_back(tensor::zeros(p.biases[l].shape()));
    }
    return z;
}

inline int predict(const mlp& m, const tensor& x) {
    return static_cast<int>(argmax_lowest(forward(m, x)));
}

struct eval_result {
    double clean_acc = 0.0;
    double robust_acc = 0.0;
};

// Accuracy over the listed samples; robust accuracy attacks each sample with
// a per-sample seed of base_seed XOR original-index.  Without an attack the
// robust accuracy equals the clean accuracy.
inline eval_result evaluate_subset(const mlp& m, const dataset& ds,
                                   const std::vector<std::size_t>& idx,
                                   const attack_config* atk, const inner_objective* obj,
                                   std::uint64_t base_seed) {
    if (idx.empty()) throw std::invalid_argument("evaluate: empty sample set");
    std::size_t clean_ok = 0, robust_ok = 0;
    for (std::size_t i : idx) {
        tensor x = ds.row(i);
        int y = ds.labels[i];
        if (predict(m, x) == y) ++clean_ok;
        if (atk != nullptr) {
            tensor delta = pgd(*obj, x, y, *atk, base_seed ^ static_cast<std::uint64_t>(i));
            if (predict(m, apply_delta(x, delta)) == y) ++robust_ok;
        } else if (predict(m, x) == y) {
            ++robust_ok;
        }
    }
    eval_result r;
    r.clean_acc = static_cast<double>(clean_ok) / static_cast<double>(idx.size());
    r.robust_acc = static_cast<double>(robust_ok) / static_cast<double>(idx.size());
    return r;
}

inline eval_result evaluate(const mlp& m, const dataset& ds, const attack_config* atk,
                            std::uint64_t seed = 0) {
    std::vector<std::size_t> idx(ds.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    inner_objective obj{inner_kind::pgd_ce, &m, nullptr};
    attack_config clamped;
    if (atk != nullptr) {
        clamped = *atk;
        clamped.clamp_lo = ds.clamp_lo;
        clamped.clamp_hi = ds.clamp_hi;
    }
    return evaluate_subset(m, ds, idx, atk != nullptr ? &clamped : nullptr, &obj, seed);
}

namespace detail {

inline dataset subset_view(const dataset& ds, const std::vector<std::size_t>& idx) {
    dataset out;
    out.inputs = tensor::zeros({idx.size(), ds.dim()});
    out.labels.resize(idx.size());
    out.num_classes = ds.num_classes;
    out.clamp_lo = ds.clamp_lo;
    out.clamp_hi = ds.clamp_hi;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < ds.dim(); ++j) out.inputs.at2(i, j) = ds.inputs.at2(idx[i], j);
        out.labels[i] = ds.labels[idx[i]];
    }
    return out;
}

}  // namespace detail

// Adversarial training / distillation loop.  The teacher, when present, is
// read-only throughout.  Every random draw is derived functionally from
// (cfg.seed, purpose, epoch, batch, sample), so two runs with equal configs
// are bit-identical and computing extra diagnostics can never shift the
// training trajectory.
inline train_history run_training(mlp& student, const mlp* teacher, const dataset& ds,
                                  const train_config& cfg) {
    cfg.validate();
    ds.validate();
    check_params(student.arch, student.params);
    if (student.arch.input_dim != ds.dim() || student.arch.num_classes != ds.num_classes) {
        throw std::invalid_argument("run_training: student does not match dataset dims");
    }
    if (teacher != nullptr) {
        check_params(teacher->arch, teacher->params);
        detail::check_pair(student, teacher);
    }
    const bool teacher_needed = cfg.loss.kind == ad_kind::ard || cfg.loss.kind == ad_kind::rslad ||
                                cfg.loss.kind == ad_kind::adaad ||
                                (cfg.loss.igdm_alpha > 0.0 &&
                                 (cfg.loss.variant == igdm_variant::igdm ||
                                  cfg.loss.variant == igdm_variant::direct_fd)) ||
                                cfg.inner == inner_kind::rslad_kl ||
                                cfg.inner == inner_kind::adaad_kl;
    if (teacher_needed && teacher == nullptr) {
        throw std::invalid_argument("run_training: configuration requires a teacher");
    }

    std::size_t n = ds.size();
    std::size_t n_hold = n / 5;
    if (n_hold < 1 || n - n_hold < 1) {
        throw std::invalid_argument("run_training: dataset too small for an 80/20 split");
    }
    std::size_t n_train = n - n_hold;
    std::vector<std::size_t> hold_idx(n_hold);
    for (std::size_t i = 0; i < n_hold; ++i) hold_idx[i] = n_train + i;

    attack_config atk = cfg.attack;
    atk.clamp_lo = ds.clamp_lo;
    atk.clamp_hi = ds.clamp_hi;
    attack_config eval_atk = cfg.eval_attack;
    eval_atk.clamp_lo = ds.clamp_lo;
    eval_atk.clamp_hi = ds.clamp_hi;

    ramp_schedule ramp{cfg.loss.igdm_alpha, cfg.epochs};
    param_set velocity = zeros_like(student.params);
    std::size_t n_slots = student.arch.layer_count() * 2;

    train_history hist;
    auto t_start = std::chrono::steady_clock::now();

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto t_epoch = std::chrono::steady_clock::now();
        double lr_e = lr_at_epoch(cfg, epoch);
        double w = ramp.weight_at(epoch);
        double sum_total = 0.0, sum_ad = 0.0, sum_igdm = 0.0;

        auto slices = batches(n_train, cfg.batch_size, cfg.seed, epoch);
        for (std::size_t b = 0; b < slices.size(); ++b) {
            std::uint64_t batch_seed = derive_seed(cfg.seed, {0xA77ACCull, epoch, b});
            std::vector<tensor> acc;
            acc.reserve(n_slots);
            for (std::size_t l = 0; l < student.arch.layer_count(); ++l) {
                acc.push_back(tensor::zeros(student.params.weights[l].shape()));
                acc.push_back(tensor::zeros(student.params.biases[l].shape()));
            }
            for (std::size_t idx : slices[b]) {
                tensor x = ds.row(idx);
                int y = ds.labels[idx];
                tensor delta = tensor::zeros(x.shape());
                if (!cfg.natural) {
                    inner_objective obj{cfg.inner, &student, teacher};
                    delta = pgd(obj, x, y, atk, batch_seed ^ static_cast<std::uint64_t>(idx));
                }
                sample_loss_graph g =
                    build_sample_loss(student, teacher, x, delta, y, cfg.loss, w);
                gradient_map gm = g.tp.backprop_scalar(g.total, g.param_leaves);
                for (std::size_t s = 0; s < n_slots; ++s) {
                    const tensor& gs = gm.at(g.param_leaves[s]);
                    for (std::size_t i = 0; i < acc[s].numel(); ++i) acc[s][i] += gs[i];
                }
                sum_total += g.total_value;
                sum_ad += g.ad_value;
                sum_igdm += g.igdm_value;
            }
            double inv = 1.0 / static_cast<double>(slices[b].size());
            gradient_map mean_grads;
            for (std::size_t s = 0; s < n_slots; ++s) mean_grads.set(s, scaled(acc[s], inv));
            sgd_step(student.params, mean_grads, velocity, lr_e, cfg.momentum, cfg.weight_decay);
        }

        metric_record rec;
        rec.epoch = epoch;
        rec.loss_total = sum_total / static_cast<double>(n_train);
        rec.loss_ad = sum_ad / static_cast<double>(n_train);
        rec.loss_igdm = sum_igdm / static_cast<double>(n_train);
        rec.lr = lr_e;

        inner_objective eval_obj{cfg.eval_inner, &student, teacher};
        std::uint64_t eval_seed = derive_seed(cfg.seed, {0xE7A1ull, epoch});
        eval_result er = evaluate_subset(student, ds, hold_idx, &eval_atk, &eval_obj, eval_seed);
        rec.clean_acc = er.clean_acc;
        rec.pgd_acc = er.robust_acc;

        rec.gd = std::nan("");
        rec.gc = std::nan("");
        rec.remainder = std::nan("");
        if (cfg.diagnostics) {
            std::size_t n_diag = std::min(cfg.diag_max_samples, n_hold);
            std::vector<std::size_t> diag_idx(hold_idx.begin(),
                                              hold_idx.begin() + static_cast<std::ptrdiff_t>(n_diag));
            dataset diag_ds = detail::subset_view(ds, diag_idx);
            if (teacher != nullptr) {
                rec.gd = gradient_distance(*teacher, student, diag_ds, cfg.diag_probe);
                try {
                    rec.gc = gradient_cosine_stats(*teacher, student, diag_ds, cfg.diag_probe).mean;
                } catch (const std::invalid_argument&) {
                    // every probe gradient degenerated this epoch; the metric
                    // is unavailable rather than fatal
                    rec.gc = std::nan("");
                }
            }
            double rem = 0.0;
            std::size_t rem_cnt = 0;
            for (std::size_t i = 0; i < diag_ds.size(); ++i) {
                tensor x = diag_ds.row(i);
                for (std::size_t p = 0; p < cfg.probe.num_probes; ++p) {
                    rng rr(derive_seed(cfg.probe.seed, {0x4E41Dull, epoch, diag_idx[i], p}));
                    tensor eps = tensor::zeros(x.shape());
                    for (std::size_t j = 0; j < eps.numel(); ++j) {
                        eps[j] = rr.uniform(-cfg.probe.noise_magnitude, cfg.probe.noise_magnitude);
                    }
                    rem += remainder_proportion(student, x, eps);
                    ++rem_cnt;
                }
            }
            rec.remainder = rem / static_cast<double>(rem_cnt);
        }

        hist.records.push_back(rec);
        hist.epoch_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_epoch).count());
    }

    hist.final_params = student.params;
    hist.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return hist;
}

// ---- checkpoint format ----
// "IGDMCKPT" + version byte 1 + activation byte + u32le input_dim
// + u32le hidden count + u32le hidden widths + u32le num_classes
// + f64le parameters in (W0 row-major, b0, W1, b1, ...) order.

namespace detail {

inline void write_u32_le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32_le(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw io_error("checkpoint: truncated read in " + path);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

inline void write_f64_le(std::ostream& out, double v) {
    std::uint64_t u = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline double read_f64_le(std::istream& in, const std::string& path) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw io_error("checkpoint: truncated read in " + path);
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= std::uint64_t(b[i]) << (8 * i);
    return std::bit_cast<double>(u);
}

}  // namespace detail

constexpr char checkpoint_magic[8] = {'I', 'G', 'D', 'M', 'C', 'K', 'P', 'T'};
constexpr unsigned char checkpoint_version = 1;

inline void save_checkpoint(const std::string& path, const architecture& arch,
                            const param_set& params) {
    check_params(arch, params);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("checkpoint: cannot write " + path);
    out.write(checkpoint_magic, 8);
    unsigned char ver = checkpoint_version;
    out.write(reinterpret_cast<const char*>(&ver), 1);
    unsigned char act = static_cast<unsigned char>(arch.act);
    out.write(reinterpret_cast<const char*>(&act), 1);
    detail::write_u32_le(out, static_cast<std::uint32_t>(arch.input_dim));
    detail::write_u32_le(out, static_cast<std::uint32_t>(arch.hidden.size()));
    for (std::size_t h : arch.hidden) detail::write_u32_le(out, static_cast<std::uint32_t>(h));
    detail::write_u32_le(out, static_cast<std::uint32_t>(arch.num_classes));
    for (std::size_t l = 0; l < arch.layer_count(); ++l) {
        for (std::size_t i = 0; i < params.weights[l].numel(); ++i) {
            detail::write_f64_le(out, params.weights[l][i]);
        }
        for (std::size_t i = 0; i < params.biases[l].numel(); ++i) {
            detail::write_f64_le(out, params.biases[l][i]);
        }
    }
    if (!out) throw io_error("checkpoint: short write to " + path);
}

inline mlp load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::string(magic, 8) != std::string(checkpoint_magic, 8)) {
        throw format_error("checkpoint: " + path + " lacks the IGDMCKPT magic");
    }
    unsigned char ver = 0, act = 0;
    in.read(reinterpret_cast<char*>(&ver), 1);
    in.read(reinterpret_cast<char*>(&act), 1);
    if (!in) throw io_error("checkpoint: truncated read in " + path);
    if (ver != checkpoint_version) {
        throw format_error("checkpoint: " + path + " has version " + std::to_string(int(ver)) +
                           ", expected " + std::to_string(int(checkpoint_version)));
    }
    if (act > 1) throw format_error("checkpoint: " + path + " has an unknown activation tag");

    mlp m;
    m.arch.act = static_cast<activation>(act);
    m.arch.input_dim = detail::read_u32_le(in, path);
    std::uint32_t n_hidden = detail::read_u32_le(in, path);
    for (std::uint32_t i = 0; i < n_hidden; ++i) {
        m.arch.hidden.push_back(detail::read_u32_le(in, path));
    }
    m.arch.num_classes = detail::read_u32_le(in, path);
    m.arch.validate();

    for (std::size_t l = 0; l < m.arch.layer_count(); ++l) {
        tensor w = tensor::zeros({m.arch.out_dim(l), m.arch.in_dim(l)});
        for (std::size_t i = 0; i < w.numel(); ++i) w[i] = detail::read_f64_le(in, path);
        tensor b = tensor::zeros({m.arch.out_dim(l)});
        for (std::size_t i = 0; i < b.numel(); ++i) b[i] = detail::read_f64_le(in, path);
        for (std::size_t i = 0; i < w.numel(); ++i) {
            if (!std::isfinite(w[i])) throw format_error("checkpoint: non-finite value in " + path);
        }
        for (std::size_t i = 0; i < b.numel(); ++i) {
            if (!std::isfinite(b[i])) throw format_error("checkpoint: non-finite value in " + path);
        }
        m.params.weights.push_back(std::move(w));
        m.params.biases.push_back(std::move(b));
    }
    char extra;
    in.read(&extra, 1);
    if (in.gcount() != 0) throw format_error("checkpoint: trailing bytes in " + path);
    return m;
}

}  // namespace igdm
