#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "igdm/data.hpp"
#include "igdm/errors.hpp"
#include "igdm/trainer.hpp"

namespace igdm {

// Parsed, path-resolved run description.  Every relative path in the file is
// interpreted relative to the config file itself, so a run directory can be
// invoked from anywhere.
struct data_config {
    bool synthetic = true;
    synthetic_spec spec;
    std::string images;  // resolved path, IDX images
    std::string labels;  // resolved path, IDX labels
};

struct model_config {
    bool present = false;
    std::vector<std::size_t> hidden;
    activation act = activation::relu;
    std::uint64_t init_seed = 0;
    std::string checkpoint;  // resolved; when set, load instead of init
};

struct run_config {
    std::uint64_t seed = 0;
    std::string output_dir;  // resolved
    data_config data;
    model_config model;
    std::string teacher_checkpoint;  // resolved, empty when absent
    train_config train;              // attack, eval_attack, loss and probe live here
    std::string snapshot;            // pretty-printed copy of the parsed file
};

namespace detail {

using json = nlohmann::json;

inline void expect_keys(const json& obj, const std::string& where,
                        const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw config_error("config: " + where + " must be a JSON object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (allowed.find(it.key()) == allowed.end()) {
            throw config_error("config: unknown key '" + it.key() + "' in " + where);
        }
    }
}

template <typename T>
T get_as(const json& obj, const std::string& where, const std::string& key) {
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw config_error("config: bad value for '" + key + "' in " + where + ": " + e.what());
    }
}

template <typename T>
T get_or(const json& obj, const std::string& where, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    return get_as<T>(obj, where, key);
}

inline std::string enum_error(const std::string& key, const std::string& got,
                              const std::string& valid) {
    return "config: '" + key + "' has unknown value '" + got + "' (valid: " + valid + ")";
}

inline synthetic_kind parse_data_kind(const std::string& s) {
    if (s == "gaussian_mixture") return synthetic_kind::gaussian_mixture;
    if (s == "two_spirals") return synthetic_kind::two_spirals;
    throw config_error(enum_error("data.kind", s, "gaussian_mixture, two_spirals"));
}

inline activation parse_activation(const std::string& s) {
    if (s == "relu") return activation::relu;
    if (s == "softplus") return activation::softplus;
    throw config_error(enum_error("activation", s, "relu, softplus"));
}

inline ad_kind parse_ad_kind(const std::string& s) {
    if (s == "pgd_at") return ad_kind::pgd_at;
    if (s == "trades") return ad_kind::trades;
    if (s == "ard") return ad_kind::ard;
    if (s == "rslad") return ad_kind::rslad;
    if (s == "adaad") return ad_kind::adaad;
    if (s == "trades_reg") return ad_kind::trades_reg;
    if (s == "igdm_trades_like") return ad_kind::igdm_trades_like;
    throw config_error(enum_error(
        "loss.ad_kind", s, "pgd_at, trades, ard, rslad, adaad, trades_reg, igdm_trades_like"));
}

inline surrogate_kind parse_surrogate(const std::string& s) {
    if (s == "kl") return surrogate_kind::kl;
    if (s == "l1") return surrogate_kind::l1;
    if (s == "l2") return surrogate_kind::l2;
    throw config_error(enum_error("loss.surrogate", s, "kl, l1, l2"));
}

inline igdm_variant parse_variant(const std::string& s) {
    if (s == "igdm") return igdm_variant::igdm;
    if (s == "trades_like") return igdm_variant::trades_like;
    if (s == "trades_reg") return igdm_variant::trades_reg;
    if (s == "direct_fd") return igdm_variant::direct_fd;
    throw config_error(
        enum_error("loss.igdm_variant", s, "igdm, trades_like, trades_reg, direct_fd"));
}

inline inner_kind parse_inner(const std::string& key, const std::string& s) {
    if (s == "pgd_ce") return inner_kind::pgd_ce;
    if (s == "trades_kl") return inner_kind::trades_kl;
    if (s == "rslad_kl") return inner_kind::rslad_kl;
    if (s == "adaad_kl") return inner_kind::adaad_kl;
    throw config_error(enum_error(key, s, "pgd_ce, trades_kl, rslad_kl, adaad_kl"));
}

inline gradient_probe parse_probe_kind(const std::string& s) {
    if (s == "ce_true_label") return gradient_probe::ce_true_label;
    if (s == "max_logit") return gradient_probe::max_logit;
    throw config_error(enum_error("train.diag_probe", s, "ce_true_label, max_logit"));
}

inline std::string resolve_path(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path fp(p);
    if (fp.is_absolute()) return fp.lexically_normal().string();
    return (base / fp).lexically_normal().string();
}

inline void parse_attack_section(const json& obj, const std::string& where, attack_config& atk) {
    expect_keys(obj, where, {"epsilon", "step_size", "steps", "random_start", "kind"});
    atk.epsilon = get_or<double>(obj, where, "epsilon", atk.epsilon);
    atk.step_size = get_or<double>(obj, where, "step_size", atk.step_size);
    atk.steps = get_or<std::size_t>(obj, where, "steps", atk.steps);
    atk.random_start = get_or<bool>(obj, where, "random_start", atk.random_start);
}

}  // namespace detail

inline run_config parse_run_config(const std::string& path) {
    namespace fs = std::filesystem;
    using detail::json;

    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("config: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();

    json root;
    try {
        root = json::parse(buf.str());
    } catch (const json::parse_error& e) {
        throw config_error("config: " + path + " is not valid JSON: " + e.what());
    }

    fs::path base = fs::path(path).parent_path();
    if (base.empty()) base = ".";

    run_config rc;
    detail::expect_keys(root, "top level",
                        {"seed", "output_dir", "data", "model", "teacher", "attack",
                         "eval_attack", "loss", "train", "probe"});
    rc.seed = detail::get_or<std::uint64_t>(root, "top level", "seed", 0);
    if (root.contains("output_dir")) {
        rc.output_dir =
            detail::resolve_path(base, detail::get_as<std::string>(root, "top level", "output_dir"));
    }

    if (!root.contains("data")) throw config_error("config: missing required section 'data'");
    {
        const json& d = root["data"];
        detail::expect_keys(d, "data",
                            {"kind", "num_classes", "dim", "samples_per_class", "noise_scale",
                             "seed", "images", "labels"});
        bool file_backed = d.contains("images") || d.contains("labels");
        if (file_backed) {
            if (!d.contains("images") || !d.contains("labels")) {
                throw config_error("config: data needs both 'images' and 'labels'");
            }
            if (d.contains("kind")) {
                throw config_error("config: data cannot mix 'kind' with 'images'/'labels'");
            }
            rc.data.synthetic = false;
            rc.data.images =
                detail::resolve_path(base, detail::get_as<std::string>(d, "data", "images"));
            rc.data.labels =
                detail::resolve_path(base, detail::get_as<std::string>(d, "data", "labels"));
        } else {
            if (!d.contains("kind")) throw config_error("config: data needs 'kind'");
            rc.data.synthetic = true;
            rc.data.spec.kind =
                detail::parse_data_kind(detail::get_as<std::string>(d, "data", "kind"));
            rc.data.spec.num_classes =
                detail::get_or<std::size_t>(d, "data", "num_classes", rc.data.spec.num_classes);
            rc.data.spec.dim = detail::get_or<std::size_t>(d, "data", "dim", rc.data.spec.dim);
            rc.data.spec.samples_per_class = detail::get_or<std::size_t>(
                d, "data", "samples_per_class", rc.data.spec.samples_per_class);
            rc.data.spec.noise_scale =
                detail::get_or<double>(d, "data", "noise_scale", rc.data.spec.noise_scale);
            rc.data.spec.seed = detail::get_or<std::uint64_t>(d, "data", "seed", rc.seed);
        }
    }

    if (root.contains("model")) {
        const json& m = root["model"];
        detail::expect_keys(m, "model", {"hidden", "activation", "init_seed", "checkpoint"});
        rc.model.present = true;
        if (m.contains("checkpoint")) {
            rc.model.checkpoint =
                detail::resolve_path(base, detail::get_as<std::string>(m, "model", "checkpoint"));
            if (m.contains("hidden") || m.contains("activation") || m.contains("init_seed")) {
                throw config_error(
                    "config: model 'checkpoint' excludes 'hidden'/'activation'/'init_seed'");
            }
        } else {
            if (!m.contains("hidden")) throw config_error("config: model needs 'hidden'");
            rc.model.hidden = detail::get_as<std::vector<std::size_t>>(m, "model", "hidden");
            rc.model.act = detail::parse_activation(
                detail::get_or<std::string>(m, "model", "activation", "relu"));
            rc.model.init_seed = detail::get_or<std::uint64_t>(m, "model", "init_seed", rc.seed);
        }
    }

    if (root.contains("teacher")) {
        const json& t = root["teacher"];
        detail::expect_keys(t, "teacher", {"checkpoint"});
        if (!t.contains("checkpoint")) throw config_error("config: teacher needs 'checkpoint'");
        rc.teacher_checkpoint =
            detail::resolve_path(base, detail::get_as<std::string>(t, "teacher", "checkpoint"));
    }

    if (root.contains("attack")) {
        const detail::json& a = root["attack"];
        if (a.contains("kind")) {
            throw config_error("config: 'kind' belongs in eval_attack, not attack");
        }
        detail::parse_attack_section(a, "attack", rc.train.attack);
    }
    // eval attack defaults: training epsilon, 20 steps, epsilon/8 step size
    rc.train.eval_attack = rc.train.attack;
    rc.train.eval_attack.steps = 20;
    rc.train.eval_attack.step_size = rc.train.attack.epsilon / 8.0;
    if (root.contains("eval_attack")) {
        const detail::json& a = root["eval_attack"];
        detail::parse_attack_section(a, "eval_attack", rc.train.eval_attack);
        if (a.contains("kind")) {
            rc.train.eval_inner = detail::parse_inner(
                "eval_attack.kind", detail::get_as<std::string>(a, "eval_attack", "kind"));
        }
    }

    if (root.contains("loss")) {
        const json& l = root["loss"];
        detail::expect_keys(l, "loss",
                            {"ad_kind", "igdm_alpha", "surrogate", "temperature", "trades_beta",
                             "mix_lambda", "igdm_variant", "kl_reverse", "direct_fd_step"});
        loss_spec& ls = rc.train.loss;
        if (l.contains("ad_kind")) {
            ls.kind = detail::parse_ad_kind(detail::get_as<std::string>(l, "loss", "ad_kind"));
        }
        ls.igdm_alpha = detail::get_or<double>(l, "loss", "igdm_alpha", ls.igdm_alpha);
        if (l.contains("surrogate")) {
            ls.surrogate =
                detail::parse_surrogate(detail::get_as<std::string>(l, "loss", "surrogate"));
        }
        ls.temperature = detail::get_or<double>(l, "loss", "temperature", ls.temperature);
        ls.trades_beta = detail::get_or<double>(l, "loss", "trades_beta", ls.trades_beta);
        ls.mix_lambda = detail::get_or<double>(l, "loss", "mix_lambda", ls.mix_lambda);
        if (l.contains("igdm_variant")) {
            ls.variant =
                detail::parse_variant(detail::get_as<std::string>(l, "loss", "igdm_variant"));
        }
        ls.kl_reverse = detail::get_or<bool>(l, "loss", "kl_reverse", ls.kl_reverse);
        ls.direct_fd_step = detail::get_or<double>(l, "loss", "direct_fd_step", ls.direct_fd_step);
    }

    if (root.contains("train")) {
        const json& t = root["train"];
        detail::expect_keys(t, "train",
                            {"epochs", "batch_size", "lr", "momentum", "weight_decay",
                             "lr_drop_epochs", "lr_drop_factor", "natural", "inner_kind",
                             "diagnostics", "diag_max_samples", "diag_probe"});
        train_config& tc = rc.train;
        tc.seed = rc.seed;
        tc.epochs = detail::get_or<std::size_t>(t, "train", "epochs", tc.epochs);
        tc.batch_size = detail::get_or<std::size_t>(t, "train", "batch_size", tc.batch_size);
        tc.lr = detail::get_or<double>(t, "train", "lr", tc.lr);
        tc.momentum = detail::get_or<double>(t, "train", "momentum", tc.momentum);
        tc.weight_decay = detail::get_or<double>(t, "train", "weight_decay", tc.weight_decay);
        if (t.contains("lr_drop_epochs")) {
            tc.lr_drop_epochs =
                detail::get_as<std::vector<std::size_t>>(t, "train", "lr_drop_epochs");
        }
        tc.lr_drop_factor = detail::get_or<double>(t, "train", "lr_drop_factor", tc.lr_drop_factor);
        tc.natural = detail::get_or<bool>(t, "train", "natural", tc.natural);
        if (t.contains("inner_kind")) {
            tc.inner = detail::parse_inner("train.inner_kind",
                                           detail::get_as<std::string>(t, "train", "inner_kind"));
        }
        tc.diagnostics = detail::get_or<bool>(t, "train", "diagnostics", tc.diagnostics);
        tc.diag_max_samples =
            detail::get_or<std::size_t>(t, "train", "diag_max_samples", tc.diag_max_samples);
        if (t.contains("diag_probe")) {
            tc.diag_probe = detail::parse_probe_kind(
                detail::get_as<std::string>(t, "train", "diag_probe"));
        }
    } else {
        rc.train.seed = rc.seed;
    }

    if (root.contains("probe")) {
        const json& p = root["probe"];
        detail::expect_keys(p, "probe", {"noise_magnitude", "num_probes", "seed"});
        rc.train.probe.noise_magnitude =
            detail::get_or<double>(p, "probe", "noise_magnitude", rc.train.probe.noise_magnitude);
        rc.train.probe.num_probes =
            detail::get_or<std::size_t>(p, "probe", "num_probes", rc.train.probe.num_probes);
        rc.train.probe.seed = detail::get_or<std::uint64_t>(p, "probe", "seed", rc.seed);
    } else {
        rc.train.probe.seed = rc.seed;
    }

    try {
        rc.train.validate();
        if (rc.data.synthetic) rc.data.spec.validate();
    } catch (const std::invalid_argument& e) {
        throw config_error(std::string("config: ") + e.what());
    }

    rc.snapshot = root.dump(2) + "\n";
    return rc;
}

inline dataset load_run_dataset(const run_config& rc) {
    if (rc.data.synthetic) return gen_synthetic(rc.data.spec);
    return load_idx(rc.data.images, rc.data.labels);
}

// Build the model named by the config: load its checkpoint when given one,
// otherwise initialize fresh weights matched to the dataset's shape.
inline mlp make_run_model(const run_config& rc, const dataset& ds) {
    if (!rc.model.present) throw config_error("config: missing required section 'model'");
    if (!rc.model.checkpoint.empty()) {
        mlp m = load_checkpoint(rc.model.checkpoint);
        if (m.arch.input_dim != ds.dim() || m.arch.num_classes != ds.num_classes) {
            throw config_error("config: model checkpoint does not match the dataset dims");
        }
        return m;
    }
    architecture arch;
    arch.input_dim = ds.dim();
    arch.hidden = rc.model.hidden;
    arch.num_classes = ds.num_classes;
    arch.act = rc.model.act;
    arch.validate();
    mlp m;
    m.arch = arch;
    m.params = init_mlp(arch, rc.model.init_seed);
    return m;
}

inline mlp load_run_teacher(const run_config& rc, const dataset& ds) {
    if (rc.teacher_checkpoint.empty()) {
        throw config_error("config: this command requires a teacher checkpoint");
    }
    mlp t = load_checkpoint(rc.teacher_checkpoint);
    if (t.arch.input_dim != ds.dim() || t.arch.num_classes != ds.num_classes) {
        throw config_error("config: teacher checkpoint does not match the dataset dims");
    }
    return t;
}

}  // namespace igdm
