// Training-loop behavior: optimizer arithmetic, schedules, determinism,
// holdout policy, diagnostic side-effect freedom, and checkpoint IO.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "igdm/data.hpp"
#include "igdm/trainer.hpp"

using namespace igdm;
namespace fs = std::filesystem;

namespace {

// equal numbers, treating NaN as equal to NaN (metrics use NaN as "absent")
bool same_num(double a, double b) {
    return (std::isnan(a) && std::isnan(b)) || a == b;
}

bool params_bit_equal(const param_set& a, const param_set& b) {
    if (a.layer_count() != b.layer_count()) return false;
    for (std::size_t l = 0; l < a.layer_count(); ++l) {
        if (!bit_equal(a.weights[l], b.weights[l])) return false;
        if (!bit_equal(a.biases[l], b.biases[l])) return false;
    }
    return true;
}

void require_same_records(const std::vector<metric_record>& a,
                          const std::vector<metric_record>& b, bool include_diag) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        INFO("epoch " << i);
        REQUIRE(a[i].epoch == b[i].epoch);
        REQUIRE(same_num(a[i].loss_total, b[i].loss_total));
        REQUIRE(same_num(a[i].loss_ad, b[i].loss_ad));
        REQUIRE(same_num(a[i].loss_igdm, b[i].loss_igdm));
        REQUIRE(same_num(a[i].clean_acc, b[i].clean_acc));
        REQUIRE(same_num(a[i].pgd_acc, b[i].pgd_acc));
        REQUIRE(same_num(a[i].lr, b[i].lr));
        if (include_diag) {
            REQUIRE(same_num(a[i].gd, b[i].gd));
            REQUIRE(same_num(a[i].gc, b[i].gc));
            REQUIRE(same_num(a[i].remainder, b[i].remainder));
        }
    }
}

dataset small_mixture(std::uint64_t seed) {
    synthetic_spec spec;
    spec.kind = synthetic_kind::gaussian_mixture;
    spec.num_classes = 2;
    spec.dim = 4;
    spec.samples_per_class = 25;  // n = 50: 40 train / 10 holdout
    spec.noise_scale = 0.15;
    spec.seed = seed;
    return gen_synthetic(spec);
}

architecture student_arch() {
    architecture a;
    a.input_dim = 4;
    a.hidden = {6};
    a.num_classes = 2;
    a.act = activation::relu;
    return a;
}

mlp fresh_student(std::uint64_t seed) {
    mlp m;
    m.arch = student_arch();
    m.params = init_mlp(m.arch, seed);
    return m;
}

mlp fresh_teacher(std::uint64_t seed) {
    mlp m;
    m.arch = student_arch();
    m.arch.hidden = {8};
    m.params = init_mlp(m.arch, seed);
    return m;
}

train_config quick_config() {
    train_config cfg;
    cfg.seed = 11;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    cfg.lr = 0.1;
    cfg.attack.epsilon = 0.05;
    cfg.attack.step_size = 0.02;
    cfg.attack.steps = 3;
    cfg.eval_attack = cfg.attack;
    cfg.eval_attack.steps = 4;
    return cfg;
}

fs::path scratch_dir() {
    fs::path p = fs::temp_directory_path() / "igdm_trainer_tests";
    fs::create_directories(p);
    return p;
}

std::vector<unsigned char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::vector<unsigned char>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    REQUIRE(out.good());
}

}  // namespace

TEST_CASE("learning rate schedule applies each drop from its epoch onward", "[trainer]") {
    train_config cfg;
    cfg.lr = 0.1;
    cfg.lr_drop_epochs = {3, 6};
    cfg.lr_drop_factor = 0.1;
    for (std::size_t e = 0; e < 3; ++e) REQUIRE(lr_at_epoch(cfg, e) == 0.1);
    for (std::size_t e = 3; e < 6; ++e) REQUIRE(lr_at_epoch(cfg, e) == 0.1 * 0.1);
    for (std::size_t e = 6; e < 9; ++e) REQUIRE(lr_at_epoch(cfg, e) == 0.1 * 0.1 * 0.1);

    // drops listed out of order still all apply
    cfg.lr_drop_epochs = {6, 3};
    REQUIRE(lr_at_epoch(cfg, 7) == 0.1 * 0.1 * 0.1);
}

TEST_CASE("sgd_step follows the momentum and weight-decay recurrence", "[trainer]") {
    param_set params;
    params.weights.push_back(tensor({1, 2}, {1.0, -2.0}));
    params.biases.push_back(tensor({1}, {0.5}));
    param_set velocity = zeros_like(params);

    gradient_map grads;
    grads.set(0, tensor({1, 2}, {0.3, -0.1}));
    grads.set(1, tensor({1}, {0.2}));

    const double lr = 0.1, mu = 0.9, wd = 0.01;
    // scalar replica of the documented update, same operation order
    double w[2] = {1.0, -2.0}, vw[2] = {0.0, 0.0};
    double b = 0.5, vb = 0.0;
    const double gw[2] = {0.3, -0.1}, gb = 0.2;
    for (int step = 0; step < 3; ++step) {
        for (int i = 0; i < 2; ++i) {
            vw[i] = mu * vw[i] + (gw[i] + wd * w[i]);
            w[i] -= lr * vw[i];
        }
        vb = mu * vb + (gb + wd * b);
        b -= lr * vb;
        sgd_step(params, grads, velocity, lr, mu, wd);
        REQUIRE(params.weights[0][0] == w[0]);
        REQUIRE(params.weights[0][1] == w[1]);
        REQUIRE(params.biases[0][0] == b);
        REQUIRE(velocity.weights[0][0] == vw[0]);
        REQUIRE(velocity.biases[0][0] == vb);
    }

    param_set bad_vel;  // wrong layout
    REQUIRE_THROWS_AS(sgd_step(params, grads, bad_vel, lr, mu, wd), std::invalid_argument);

    gradient_map missing;
    missing.set(0, tensor({1, 2}, {0.3, -0.1}));
    param_set vel2 = zeros_like(params);
    REQUIRE_THROWS_AS(sgd_step(params, missing, vel2, lr, mu, wd), std::out_of_range);
}

TEST_CASE("prediction ties resolve to the lowest class index", "[trainer]") {
    mlp m;
    m.arch = student_arch();
    m.params = init_mlp(m.arch, 0);
    for (tensor& w : m.params.weights) {
        for (std::size_t i = 0; i < w.numel(); ++i) w[i] = 0.0;
    }
    // all logits are identically zero, so every prediction is class 0
    dataset ds;
    ds.num_classes = 2;
    ds.inputs = tensor({3, 4}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.1, 0.2, 0.3});
    ds.labels = {0, 0, 0};
    REQUIRE(evaluate(m, ds, nullptr).clean_acc == 1.0);
    ds.labels = {1, 1, 1};
    REQUIRE(evaluate(m, ds, nullptr).clean_acc == 0.0);
}

TEST_CASE("evaluation without an attack reports robust equal to clean", "[trainer]") {
    rng r(5);
    mlp m = testutil::random_mlp(r, 4, 2, 2, 8, activation::relu);
    dataset ds = small_mixture(3);
    eval_result er = evaluate(m, ds, nullptr);
    REQUIRE(er.robust_acc == er.clean_acc);

    std::vector<std::size_t> none;
    inner_objective obj{inner_kind::pgd_ce, &m, nullptr};
    REQUIRE_THROWS_AS(evaluate_subset(m, ds, none, nullptr, &obj, 0), std::invalid_argument);
}

TEST_CASE("training runs are bit-deterministic for a fixed config", "[trainer]") {
    dataset ds = small_mixture(7);
    mlp teacher = fresh_teacher(21);
    train_config cfg = quick_config();
    cfg.loss.kind = ad_kind::ard;
    cfg.loss.igdm_alpha = 0.5;
    cfg.loss.variant = igdm_variant::igdm;
    cfg.loss.surrogate = surrogate_kind::l2;
    cfg.diagnostics = true;
    cfg.probe.num_probes = 2;

    mlp s1 = fresh_student(9);
    train_history h1 = run_training(s1, &teacher, ds, cfg);
    mlp s2 = fresh_student(9);
    train_history h2 = run_training(s2, &teacher, ds, cfg);

    require_same_records(h1.records, h2.records, true);
    REQUIRE(params_bit_equal(h1.final_params, h2.final_params));
    REQUIRE(params_bit_equal(s1.params, s2.params));
    REQUIRE(h1.epoch_seconds.size() == cfg.epochs);

    // a different seed takes a different trajectory
    train_config other = cfg;
    other.seed = 12;
    mlp s3 = fresh_student(9);
    train_history h3 = run_training(s3, &teacher, ds, other);
    REQUIRE_FALSE(params_bit_equal(h1.final_params, h3.final_params));
}

TEST_CASE("a zero discrepancy weight reproduces the base trajectory bit-exactly", "[trainer]") {
    dataset ds = small_mixture(13);
    mlp teacher = fresh_teacher(31);
    train_config base = quick_config();
    base.loss.kind = ad_kind::ard;
    base.loss.igdm_alpha = 0.0;
    base.loss.variant = igdm_variant::igdm;

    mlp s1 = fresh_student(4);
    train_history h1 = run_training(s1, &teacher, ds, base);

    // with zero alpha the variant choice is inert: even the combination that
    // would throw if ever evaluated (direct_fd under kl) must never be built
    train_config alt = base;
    alt.loss.variant = igdm_variant::direct_fd;
    alt.loss.surrogate = surrogate_kind::kl;
    mlp s2 = fresh_student(4);
    train_history h2 = run_training(s2, &teacher, ds, alt);

    require_same_records(h1.records, h2.records, true);
    REQUIRE(params_bit_equal(h1.final_params, h2.final_params));
    for (const metric_record& rec : h1.records) REQUIRE(rec.loss_igdm == 0.0);

    // a ramped run matches at epoch 0 (weight 0 there) and departs afterwards
    train_config ramped = base;
    ramped.loss.igdm_alpha = 0.8;
    ramped.loss.surrogate = surrogate_kind::l2;
    mlp s3 = fresh_student(4);
    train_history h3 = run_training(s3, &teacher, ds, ramped);
    REQUIRE(h3.records[0].loss_total == h1.records[0].loss_total);
    REQUIRE(h3.records[0].loss_igdm == 0.0);
    REQUIRE(h3.records[0].clean_acc == h1.records[0].clean_acc);
    REQUIRE(h3.records[1].loss_igdm > 0.0);
    REQUIRE_FALSE(params_bit_equal(h1.final_params, h3.final_params));
}

TEST_CASE("the teacher is read-only during distillation", "[trainer]") {
    dataset ds = small_mixture(17);
    mlp teacher = fresh_teacher(41);
    param_set before = teacher.params;

    train_config cfg = quick_config();
    cfg.loss.kind = ad_kind::rslad;
    cfg.loss.igdm_alpha = 0.3;
    cfg.loss.surrogate = surrogate_kind::l1;
    cfg.inner = inner_kind::rslad_kl;

    mlp s = fresh_student(6);
    run_training(s, &teacher, ds, cfg);
    REQUIRE(params_bit_equal(before, teacher.params));
}

TEST_CASE("natural training ignores the attack configuration", "[trainer]") {
    dataset ds = small_mixture(19);
    train_config a = quick_config();
    a.natural = true;
    train_config b = a;
    b.attack.epsilon = 0.3;       // training attack differs in every field,
    b.attack.step_size = 0.1;     // but natural mode never runs it
    b.attack.steps = 9;
    b.attack.random_start = false;

    mlp s1 = fresh_student(2);
    train_history h1 = run_training(s1, nullptr, ds, a);
    mlp s2 = fresh_student(2);
    train_history h2 = run_training(s2, nullptr, ds, b);
    require_same_records(h1.records, h2.records, true);
    REQUIRE(params_bit_equal(h1.final_params, h2.final_params));

    // adversarial training with the same seed takes a different path
    train_config adv = a;
    adv.natural = false;
    mlp s3 = fresh_student(2);
    train_history h3 = run_training(s3, nullptr, ds, adv);
    REQUIRE_FALSE(params_bit_equal(h1.final_params, h3.final_params));
}

TEST_CASE("the holdout is the last fifth of the dataset", "[trainer]") {
    // four identical training samples labeled 0 and one holdout sample; the
    // model trains to predict class 0 everywhere, so the recorded accuracy
    // tells us exactly which sample was held out
    dataset ds;
    ds.num_classes = 2;
    ds.inputs = tensor::zeros({5, 2});
    ds.labels = {0, 0, 0, 0, 1};

    architecture arch;
    arch.input_dim = 2;
    arch.hidden = {};
    arch.num_classes = 2;
    arch.act = activation::relu;

    train_config cfg;
    cfg.seed = 3;
    cfg.epochs = 10;
    cfg.lr = 0.5;
    cfg.weight_decay = 0.0;
    cfg.natural = true;

    mlp s;
    s.arch = arch;
    s.params = init_mlp(arch, 15);
    train_history h = run_training(s, nullptr, ds, cfg);
    for (const metric_record& rec : h.records) REQUIRE(rec.clean_acc == 0.0);

    // flipping only the held-out label flips the recorded accuracy
    dataset ds2 = ds;
    ds2.labels[4] = 0;
    mlp s2;
    s2.arch = arch;
    s2.params = init_mlp(arch, 15);
    train_history h2 = run_training(s2, nullptr, ds2, cfg);
    for (const metric_record& rec : h2.records) REQUIRE(rec.clean_acc == 1.0);

    // training samples were identical, so the trajectories coincide
    REQUIRE(params_bit_equal(h.final_params, h2.final_params));
}

TEST_CASE("learning-rate drops land in the recorded schedule", "[trainer]") {
    dataset ds = small_mixture(23);
    train_config cfg = quick_config();
    cfg.epochs = 4;
    cfg.natural = true;
    cfg.lr = 0.1;
    cfg.lr_drop_epochs = {2};
    cfg.lr_drop_factor = 0.5;

    mlp s = fresh_student(1);
    train_history h = run_training(s, nullptr, ds, cfg);
    REQUIRE(h.records[0].lr == 0.1);
    REQUIRE(h.records[1].lr == 0.1);
    REQUIRE(h.records[2].lr == 0.05);
    REQUIRE(h.records[3].lr == 0.05);
    for (std::size_t e = 0; e < 4; ++e) REQUIRE(h.records[e].epoch == e);
}

TEST_CASE("metrics are NaN exactly when a diagnostic is unavailable", "[trainer]") {
    dataset ds = small_mixture(29);

    SECTION("diagnostics disabled") {
        train_config cfg = quick_config();
        cfg.diagnostics = false;
        mlp s = fresh_student(8);
        train_history h = run_training(s, nullptr, ds, cfg);
        for (const metric_record& rec : h.records) {
            REQUIRE(std::isnan(rec.gd));
            REQUIRE(std::isnan(rec.gc));
            REQUIRE(std::isnan(rec.remainder));
            REQUIRE(std::isfinite(rec.clean_acc));
            REQUIRE(std::isfinite(rec.pgd_acc));
            REQUIRE(std::isfinite(rec.loss_total));
        }
    }

    SECTION("diagnostics without a teacher") {
        train_config cfg = quick_config();
        cfg.diagnostics = true;
        cfg.probe.num_probes = 2;
        mlp s = fresh_student(8);
        train_history h = run_training(s, nullptr, ds, cfg);
        for (const metric_record& rec : h.records) {
            REQUIRE(std::isnan(rec.gd));   // alignment needs a teacher
            REQUIRE(std::isnan(rec.gc));
            REQUIRE(std::isfinite(rec.remainder));
        }
    }

    SECTION("diagnostics with a teacher") {
        train_config cfg = quick_config();
        cfg.diagnostics = true;
        cfg.probe.num_probes = 2;
        cfg.loss.kind = ad_kind::ard;
        mlp teacher = fresh_teacher(51);
        mlp s = fresh_student(8);
        train_history h = run_training(s, &teacher, ds, cfg);
        for (const metric_record& rec : h.records) {
            REQUIRE(std::isfinite(rec.gd));
            REQUIRE(std::isfinite(rec.gc));
            REQUIRE(std::isfinite(rec.remainder));
        }
    }
}

TEST_CASE("diagnostics never alter the training trajectory", "[trainer]") {
    dataset ds = small_mixture(37);
    mlp teacher = fresh_teacher(61);
    train_config on = quick_config();
    on.loss.kind = ad_kind::adaad;
    on.loss.igdm_alpha = 0.4;
    on.loss.surrogate = surrogate_kind::l2;
    on.diagnostics = true;
    on.probe.num_probes = 2;
    train_config off = on;
    off.diagnostics = false;

    mlp s1 = fresh_student(14);
    train_history h1 = run_training(s1, &teacher, ds, on);
    mlp s2 = fresh_student(14);
    train_history h2 = run_training(s2, &teacher, ds, off);

    require_same_records(h1.records, h2.records, false);
    REQUIRE(params_bit_equal(h1.final_params, h2.final_params));
    REQUIRE(std::isfinite(h1.records.back().gd));
    REQUIRE(std::isnan(h2.records.back().gd));
}

TEST_CASE("run_training validates its inputs", "[trainer]") {
    dataset ds = small_mixture(43);
    mlp s = fresh_student(5);

    SECTION("dataset too small for a holdout") {
        dataset tiny;
        tiny.num_classes = 2;
        tiny.inputs = tensor::zeros({4, 4});
        tiny.labels = {0, 1, 0, 1};
        train_config cfg = quick_config();
        REQUIRE_THROWS_AS(run_training(s, nullptr, tiny, cfg), std::invalid_argument);
    }

    SECTION("student and dataset disagree on dimensions") {
        mlp wide;
        wide.arch = student_arch();
        wide.arch.input_dim = 7;
        wide.params = init_mlp(wide.arch, 1);
        train_config cfg = quick_config();
        REQUIRE_THROWS_AS(run_training(wide, nullptr, ds, cfg), std::invalid_argument);
    }

    SECTION("distillation losses require a teacher") {
        train_config cfg = quick_config();
        cfg.loss.kind = ad_kind::ard;
        REQUIRE_THROWS_AS(run_training(s, nullptr, ds, cfg), std::invalid_argument);
    }

    SECTION("teacher-guided inner attacks require a teacher") {
        train_config cfg = quick_config();
        cfg.inner = inner_kind::rslad_kl;
        REQUIRE_THROWS_AS(run_training(s, nullptr, ds, cfg), std::invalid_argument);
    }

    SECTION("the teacher-difference variant requires a teacher") {
        train_config cfg = quick_config();
        cfg.loss.igdm_alpha = 0.5;
        cfg.loss.variant = igdm_variant::igdm;
        cfg.loss.surrogate = surrogate_kind::l2;
        REQUIRE_THROWS_AS(run_training(s, nullptr, ds, cfg), std::invalid_argument);
    }

    SECTION("the self-difference variant runs without a teacher") {
        train_config cfg = quick_config();
        cfg.epochs = 2;
        cfg.loss.igdm_alpha = 0.5;
        cfg.loss.variant = igdm_variant::trades_like;
        cfg.loss.surrogate = surrogate_kind::l2;
        mlp s2 = fresh_student(5);
        train_history h = run_training(s2, nullptr, ds, cfg);
        REQUIRE(h.records.size() == 2);
        REQUIRE(h.records[1].loss_igdm >= 0.0);
    }

    SECTION("config validation failures surface") {
        train_config cfg = quick_config();
        cfg.epochs = 0;
        REQUIRE_THROWS_AS(run_training(s, nullptr, ds, cfg), std::invalid_argument);
    }
}

TEST_CASE("checkpoints round-trip bit-identically", "[trainer][checkpoint]") {
    fs::path dir = scratch_dir();
    rng r(71);
    for (int trial = 0; trial < 6; ++trial) {
        activation act = trial % 2 == 0 ? activation::relu : activation::softplus;
        mlp m = testutil::random_mlp(r, 3 + trial % 3, 2 + trial % 3, 3, 9, act);
        fs::path p = dir / ("roundtrip_" + std::to_string(trial) + ".ckpt");
        save_checkpoint(p.string(), m.arch, m.params);

        // documented layout fixes the byte count exactly
        std::size_t total = 0;
        for (std::size_t l = 0; l < m.arch.layer_count(); ++l) {
            total += m.params.weights[l].numel() + m.params.biases[l].numel();
        }
        REQUIRE(fs::file_size(p) == 10 + 4 * (3 + m.arch.hidden.size()) + 8 * total);

        mlp back = load_checkpoint(p.string());
        REQUIRE(back.arch.input_dim == m.arch.input_dim);
        REQUIRE(back.arch.hidden == m.arch.hidden);
        REQUIRE(back.arch.num_classes == m.arch.num_classes);
        REQUIRE(back.arch.act == m.arch.act);
        REQUIRE(params_bit_equal(back.params, m.params));

        // saving the reloaded model reproduces the file byte-for-byte
        fs::path p2 = dir / ("roundtrip_again_" + std::to_string(trial) + ".ckpt");
        save_checkpoint(p2.string(), back.arch, back.params);
        REQUIRE(slurp(p) == slurp(p2));
    }
}

TEST_CASE("checkpoint loading rejects malformed files", "[trainer][checkpoint]") {
    fs::path dir = scratch_dir();
    rng r(73);
    mlp m = testutil::random_mlp(r, 3, 2, 2, 5, activation::relu);
    fs::path good = dir / "good.ckpt";
    save_checkpoint(good.string(), m.arch, m.params);
    std::vector<unsigned char> bytes = slurp(good);

    SECTION("missing file") {
        REQUIRE_THROWS_AS(load_checkpoint((dir / "no_such.ckpt").string()), io_error);
    }
    SECTION("unwritable path") {
        REQUIRE_THROWS_AS(save_checkpoint("/no_such_dir/x.ckpt", m.arch, m.params), io_error);
    }
    SECTION("wrong magic") {
        auto bad = bytes;
        bad[0] = 'X';
        fs::path p = dir / "bad_magic.ckpt";
        spit(p, bad);
        REQUIRE_THROWS_AS(load_checkpoint(p.string()), format_error);
    }
    SECTION("unknown version") {
        auto bad = bytes;
        bad[8] = 2;
        fs::path p = dir / "bad_version.ckpt";
        spit(p, bad);
        REQUIRE_THROWS_AS(load_checkpoint(p.string()), format_error);
    }
    SECTION("unknown activation tag") {
        auto bad = bytes;
        bad[9] = 7;
        fs::path p = dir / "bad_act.ckpt";
        spit(p, bad);
        REQUIRE_THROWS_AS(load_checkpoint(p.string()), format_error);
    }
    SECTION("truncated parameters") {
        auto bad = bytes;
        bad.resize(bad.size() - 5);
        fs::path p = dir / "truncated.ckpt";
        spit(p, bad);
        REQUIRE_THROWS_AS(load_checkpoint(p.string()), io_error);
    }
    SECTION("trailing bytes") {
        auto bad = bytes;
        bad.push_back(0);
        fs::path p = dir / "trailing.ckpt";
        spit(p, bad);
        REQUIRE_THROWS_AS(load_checkpoint(p.string()), format_error);
    }
    SECTION("non-finite parameter") {
        auto bad = bytes;
        // overwrite the final f64 with +infinity (little-endian)
        const unsigned char inf[8] = {0, 0, 0, 0, 0, 0, 0xF0, 0x7F};
        for (int i = 0; i < 8; ++i) bad[bad.size() - 8 + static_cast<std::size_t>(i)] = inf[i];
        fs::path p = dir / "nonfinite.ckpt";
        spit(p, bad);
        REQUIRE_THROWS_AS(load_checkpoint(p.string()), format_error);
    }
}

TEST_CASE("a trained model survives a checkpoint round trip", "[trainer][checkpoint]") {
    dataset ds = small_mixture(47);
    train_config cfg = quick_config();
    cfg.epochs = 2;
    mlp s = fresh_student(77);
    run_training(s, nullptr, ds, cfg);

    fs::path p = scratch_dir() / "trained.ckpt";
    save_checkpoint(p.string(), s.arch, s.params);
    mlp back = load_checkpoint(p.string());
    REQUIRE(params_bit_equal(back.params, s.params));

    // identical on every input we try, bit for bit
    for (std::size_t i = 0; i < ds.size(); ++i) {
        REQUIRE(bit_equal(forward(back, ds.row(i)), forward(s, ds.row(i))));
    }
}
