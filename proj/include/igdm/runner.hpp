#pragma once

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "igdm/config.hpp"
#include "igdm/diagnostics.hpp"
#include "igdm/errors.hpp"
#include "igdm/metrics.hpp"
#include "igdm/trainer.hpp"

namespace igdm {

namespace detail {

inline void prepare_output_dir(run_config& rc, const std::string& override_dir) {
    if (!override_dir.empty()) rc.output_dir = override_dir;
    if (rc.output_dir.empty()) {
        throw config_error("config: 'output_dir' is required (or pass --output-dir)");
    }
    std::filesystem::create_directories(rc.output_dir);
    write_text_file(rc.output_dir + "/config.json", rc.snapshot);
}

inline void require_no_teacher_loss(const run_config& rc) {
    const loss_spec& ls = rc.train.loss;
    bool needs = ls.kind == ad_kind::ard || ls.kind == ad_kind::rslad ||
                 ls.kind == ad_kind::adaad ||
                 (ls.igdm_alpha > 0.0 && (ls.variant == igdm_variant::igdm ||
                                          ls.variant == igdm_variant::direct_fd)) ||
                 rc.train.inner == inner_kind::rslad_kl || rc.train.inner == inner_kind::adaad_kl;
    if (needs) {
        throw config_error("config: train-teacher cannot use a teacher-dependent loss or attack");
    }
}

inline nlohmann::json record_json(const metric_record& r) {
    nlohmann::json j;
    j["epoch"] = r.epoch;
    j["loss_total"] = r.loss_total;
    j["loss_ad"] = r.loss_ad;
    j["loss_igdm"] = r.loss_igdm;
    j["clean_acc"] = r.clean_acc;
    j["pgd_acc"] = r.pgd_acc;
    j["gd"] = r.gd;
    j["gc"] = r.gc;
    j["remainder"] = r.remainder;
    j["lr"] = r.lr;
    return j;
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

inline void finish_training_run(const run_config& rc, const mlp& model,
                                const train_history& hist, const char* command) {
    save_checkpoint(rc.output_dir + "/model.ckpt", model.arch, model.params);
    write_metrics(rc.output_dir + "/metrics.csv", hist.records);
    write_training_charts(rc.output_dir, hist.records);
    const metric_record& last = hist.records.back();
    nlohmann::json j;
    j["command"] = command;
    j["epochs"] = hist.records.size();
    j["wall_seconds"] = hist.wall_seconds;
    j["mean_epoch_seconds"] = hist.wall_seconds / static_cast<double>(hist.records.size());
    j["final"] = record_json(last);
    write_json(rc.output_dir + "/report.json", j);
    std::cout << command << ": clean_acc=" << last.clean_acc << " pgd_acc=" << last.pgd_acc
              << " (" << rc.output_dir << ")\n";
}

inline int cmd_train_teacher(const std::string& config_path, const std::string& out_override) {
    run_config rc = parse_run_config(config_path);
    prepare_output_dir(rc, out_override);
    if (!rc.teacher_checkpoint.empty()) {
        throw config_error("config: train-teacher does not take a 'teacher' section");
    }
    require_no_teacher_loss(rc);
    dataset ds = load_run_dataset(rc);
    mlp model = make_run_model(rc, ds);
    train_history hist = run_training(model, nullptr, ds, rc.train);
    finish_training_run(rc, model, hist, "train-teacher");
    return 0;
}

inline int cmd_distill(const std::string& config_path, const std::string& out_override) {
    run_config rc = parse_run_config(config_path);
    prepare_output_dir(rc, out_override);
    dataset ds = load_run_dataset(rc);
    mlp teacher = load_run_teacher(rc, ds);
    mlp student = make_run_model(rc, ds);
    train_history hist = run_training(student, &teacher, ds, rc.train);
    finish_training_run(rc, student, hist, "distill");
    return 0;
}

inline int cmd_attack_eval(const std::string& config_path, const std::string& out_override) {
    run_config rc = parse_run_config(config_path);
    prepare_output_dir(rc, out_override);
    dataset ds = load_run_dataset(rc);
    mlp model = make_run_model(rc, ds);
    bool teacher_needed =
        rc.train.eval_inner == inner_kind::rslad_kl || rc.train.eval_inner == inner_kind::adaad_kl;
    mlp teacher;
    if (!rc.teacher_checkpoint.empty()) teacher = load_run_teacher(rc, ds);
    if (teacher_needed && rc.teacher_checkpoint.empty()) {
        throw config_error("config: this eval_attack.kind requires a teacher checkpoint");
    }

    attack_config atk = rc.train.eval_attack;
    atk.clamp_lo = ds.clamp_lo;
    atk.clamp_hi = ds.clamp_hi;
    inner_objective obj{rc.train.eval_inner, &model,
                        rc.teacher_checkpoint.empty() ? nullptr : &teacher};
    std::vector<std::size_t> idx(ds.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    eval_result er = evaluate_subset(model, ds, idx, &atk, &obj, rc.seed);

    nlohmann::json j;
    j["command"] = "attack-eval";
    j["samples"] = ds.size();
    j["clean_acc"] = er.clean_acc;
    j["robust_acc"] = er.robust_acc;
    j["epsilon"] = atk.epsilon;
    j["step_size"] = atk.step_size;
    j["steps"] = atk.steps;
    j["random_start"] = atk.random_start;
    write_json(rc.output_dir + "/report.json", j);
    std::cout << "attack-eval: clean_acc=" << er.clean_acc << " robust_acc=" << er.robust_acc
              << " (" << rc.output_dir << ")\n";
    return 0;
}

inline int cmd_probe_linearity(const std::string& config_path, const std::string& out_override) {
    run_config rc = parse_run_config(config_path);
    prepare_output_dir(rc, out_override);
    dataset ds = load_run_dataset(rc);
    mlp model = make_run_model(rc, ds);

    const linearity_probe_config& pc = rc.train.probe;
    std::ofstream csv(rc.output_dir + "/linearity.csv", std::ios::binary | std::ios::trunc);
    if (!csv) throw io_error("cannot write " + rc.output_dir + "/linearity.csv");
    csv << "sample,probe,remainder\n";
    double sum = 0.0, lo = 0.0, hi = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        tensor x = ds.row(i);
        for (std::size_t p = 0; p < pc.num_probes; ++p) {
            rng rr(derive_seed(pc.seed, {0x4E41Dull, i, p}));
            tensor eps = tensor::zeros(x.shape());
            for (std::size_t j = 0; j < eps.numel(); ++j) {
                eps[j] = rr.uniform(-pc.noise_magnitude, pc.noise_magnitude);
            }
            double rem = remainder_proportion(model, x, eps);
            csv << i << ',' << p << ',' << format_full(rem) << '\n';
            if (count == 0) {
                lo = hi = rem;
            } else {
                lo = std::min(lo, rem);
                hi = std::max(hi, rem);
            }
            sum += rem;
            ++count;
        }
    }
    if (!csv) throw io_error("short write to " + rc.output_dir + "/linearity.csv");

    nlohmann::json j;
    j["command"] = "probe-linearity";
    j["samples"] = ds.size();
    j["num_probes"] = pc.num_probes;
    j["noise_magnitude"] = pc.noise_magnitude;
    j["mean_remainder"] = sum / static_cast<double>(count);
    j["min_remainder"] = lo;
    j["max_remainder"] = hi;
    write_json(rc.output_dir + "/report.json", j);
    std::cout << "probe-linearity: mean_remainder=" << sum / static_cast<double>(count) << " ("
              << rc.output_dir << ")\n";
    return 0;
}

inline int cmd_align_metrics(const std::string& config_path, const std::string& out_override) {
    run_config rc = parse_run_config(config_path);
    prepare_output_dir(rc, out_override);
    dataset ds = load_run_dataset(rc);
    mlp teacher = load_run_teacher(rc, ds);
    mlp student = make_run_model(rc, ds);

    attack_config atk = rc.train.attack;
    atk.clamp_lo = ds.clamp_lo;
    atk.clamp_hi = ds.clamp_hi;
    linearity_probe_config pc = rc.train.probe;
    alignment_report rep =
        make_alignment_report(teacher, student, ds, atk, rc.train.inner, pc, rc.seed);

    write_alignment_csv(rc.output_dir + "/align.csv", rep);
    nlohmann::json j;
    j["command"] = "align-metrics";
    j["samples"] = ds.size();
    j["gd"] = rep.gd;
    j["gc"] = rep.gc;
    j["pw_uniform"] = rep.pw_uniform;
    j["pw_adv"] = rep.pw_adv;
    j["remainder"] = rep.remainder;
    j["gd_logit"] = rep.gd_logit;
    j["gc_logit"] = rep.gc_logit;
    j["gc_skipped"] = rep.gc_skipped;
    j["gc_logit_skipped"] = rep.gc_logit_skipped;
    write_json(rc.output_dir + "/report.json", j);
    std::cout << "align-metrics: gd=" << rep.gd << " gc=" << rep.gc << " (" << rc.output_dir
              << ")\n";
    return 0;
}

inline int cmd_report(const std::string& out_dir, const std::vector<std::string>& run_dirs) {
    namespace fs = std::filesystem;
    if (run_dirs.empty()) throw config_error("report: at least one run directory is required");
    fs::create_directories(out_dir);

    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    struct run_data {
        std::string name;
        std::string color;
        std::vector<metric_record> records;
    };
    std::vector<run_data> runs;
    for (std::size_t i = 0; i < run_dirs.size(); ++i) {
        run_data rd;
        fs::path p(run_dirs[i]);
        rd.name = p.filename().string().empty() ? p.string() : p.filename().string();
        rd.color = palette[i % (sizeof palette / sizeof palette[0])];
        rd.records = read_metrics((p / "metrics.csv").string());
        if (rd.records.empty()) {
            throw format_error("report: " + run_dirs[i] + "/metrics.csv has no rows");
        }
        runs.push_back(std::move(rd));
    }

    auto chart = [&](const std::string& file, const std::string& title, auto field) {
        std::vector<chart_series> ss;
        for (const run_data& rd : runs) {
            chart_series s;
            s.label = rd.name;
            s.color = rd.color;
            for (const metric_record& r : rd.records) s.values.push_back(field(r));
            ss.push_back(std::move(s));
        }
        write_text_file(out_dir + "/" + file, render_line_chart(title, ss));
    };
    chart("robust_accuracy_vs_epoch.svg", "held-out robust accuracy vs epoch",
          [](const metric_record& r) { return r.pgd_acc; });
    chart("clean_accuracy_vs_epoch.svg", "held-out clean accuracy vs epoch",
          [](const metric_record& r) { return r.clean_acc; });
    chart("gd_vs_epoch.svg", "gradient distance vs epoch",
          [](const metric_record& r) { return r.gd; });
    chart("gc_vs_epoch.svg", "gradient cosine vs epoch",
          [](const metric_record& r) { return r.gc; });
    chart("remainder_vs_epoch.svg", "remainder proportion vs epoch",
          [](const metric_record& r) { return r.remainder; });
    chart("loss_vs_epoch.svg", "training loss vs epoch",
          [](const metric_record& r) { return r.loss_total; });

    nlohmann::json j;
    j["command"] = "report";
    j["runs"] = nlohmann::json::array();
    for (const run_data& rd : runs) {
        nlohmann::json rj;
        rj["name"] = rd.name;
        rj["epochs"] = rd.records.size();
        rj["final"] = record_json(rd.records.back());
        double best = rd.records.front().pgd_acc;
        for (const metric_record& r : rd.records) best = std::max(best, r.pgd_acc);
        rj["best_pgd_acc"] = best;
        j["runs"].push_back(rj);
    }
    write_json(out_dir + "/summary.json", j);
    std::cout << "report: " << runs.size() << " runs summarized (" << out_dir << ")\n";
    return 0;
}

}  // namespace detail

// Entry point behind the executable.  args excludes the program name.
// Exit codes: 0 success, 1 configuration/usage error, 2 runtime failure.
inline int run_command(const std::vector<std::string>& args) {
    CLI::App app{"indirect gradient distillation laboratory"};
    app.require_subcommand(1);

    struct sub_opts {
        std::string config;
        std::string output_dir;
    };
    auto add_config_sub = [&](const char* name, const char* desc) {
        CLI::App* sub = app.add_subcommand(name, desc);
        auto opts = std::make_shared<sub_opts>();
        sub->add_option("--config", opts->config, "JSON run configuration")->required();
        sub->add_option("--output-dir", opts->output_dir, "override the config's output_dir");
        return std::make_pair(sub, opts);
    };
    auto [tt, tt_o] = add_config_sub("train-teacher", "adversarially train a model from scratch");
    auto [di, di_o] = add_config_sub("distill", "train a student against a frozen teacher");
    auto [ae, ae_o] = add_config_sub("attack-eval", "evaluate clean and robust accuracy");
    auto [pl, pl_o] = add_config_sub("probe-linearity", "measure Taylor remainder proportions");
    auto [am, am_o] = add_config_sub("align-metrics", "teacher/student alignment diagnostics");

    CLI::App* rp = app.add_subcommand("report", "aggregate metrics from finished runs");
    std::string report_out;
    std::vector<std::string> report_runs;
    rp->add_option("--out", report_out, "directory for comparison charts")->required();
    rp->add_option("runs", report_runs, "run directories containing metrics.csv")->required();

    std::vector<const char*> argv;
    argv.push_back("igdm");
    for (const std::string& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (tt->parsed()) return detail::cmd_train_teacher(tt_o->config, tt_o->output_dir);
        if (di->parsed()) return detail::cmd_distill(di_o->config, di_o->output_dir);
        if (ae->parsed()) return detail::cmd_attack_eval(ae_o->config, ae_o->output_dir);
        if (pl->parsed()) return detail::cmd_probe_linearity(pl_o->config, pl_o->output_dir);
        if (am->parsed()) return detail::cmd_align_metrics(am_o->config, am_o->output_dir);
        if (rp->parsed()) return detail::cmd_report(report_out, report_runs);
        std::cerr << "error: no subcommand\n";
        return 1;
    } catch (const config_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}

}  // namespace igdm
