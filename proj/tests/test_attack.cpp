#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <stdexcept>

#include "igdm/attack.hpp"
#include "igdm/losses.hpp"
#include "igdm/mlp.hpp"
#include "igdm/rng.hpp"

#include "helpers.hpp"

using namespace igdm;
using Catch::Approx;

TEST_CASE("attack config validation", "[attack]") {
    attack_config c;
    REQUIRE_NOTHROW(c.validate());
    attack_config bad = c;
    bad.epsilon = 0.0;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = c;
    bad.step_size = -1.0;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = c;
    bad.steps = 0;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = c;
    bad.clamp_lo = 1.0;
    bad.clamp_hi = 0.0;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("crafted deltas respect the ball and the clamp box", "[attack][property]") {
    rng r(161803);
    int improved = 0, total = 0;
    for (int trial = 0; trial < 300; ++trial) {
        std::size_t d = 2 + r.below(6);
        std::size_t k = 2 + r.below(3);
        activation act = trial % 2 == 0 ? activation::relu : activation::softplus;
        mlp m = testutil::random_mlp(r, d, k, 3, 10, act);
        tensor x = testutil::random_tensor({d}, r, 0.0, 1.0);
        int y = static_cast<int>(r.below(k));

        attack_config cfg;
        cfg.epsilon = r.uniform(0.005, 0.15);
        cfg.step_size = cfg.epsilon / (1.0 + static_cast<double>(r.below(8)));
        cfg.steps = 1 + r.below(10);
        cfg.random_start = r.below(2) == 0;

        inner_objective obj{inner_kind::pgd_ce, &m, nullptr};
        tensor delta = pgd(obj, x, y, cfg, r.next_u64());
        REQUIRE(linf_norm(delta) <= cfg.epsilon + 1e-12);
        tensor adv = apply_delta(x, delta);
        for (std::size_t i = 0; i < adv.numel(); ++i) {
            REQUIRE(adv[i] >= cfg.clamp_lo - 1e-12);
            REQUIRE(adv[i] <= cfg.clamp_hi + 1e-12);
        }
        if (!cfg.random_start) {
            double before = objective_value(obj, x, tensor::zeros({d}), y);
            double after = objective_value(obj, x, delta, y);
            if (after >= before) ++improved;
            ++total;
        }
    }
    // without a random start, ascent from zero should almost always help
    REQUIRE(total > 50);
    REQUIRE(static_cast<double>(improved) / static_cast<double>(total) > 0.9);
}

TEST_CASE("fgsm equals single-step pgd bit-exactly", "[attack][property]") {
    rng r(2718);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t d = 2 + r.below(5);
        mlp m = testutil::random_mlp(r, d, 3, 2, 8,
                                     trial % 2 == 0 ? activation::relu : activation::softplus);
        tensor x = testutil::random_tensor({d}, r, 0.1, 0.9);
        int y = static_cast<int>(r.below(3));
        attack_config cfg;
        cfg.epsilon = 0.05;
        inner_objective obj{inner_kind::pgd_ce, &m, nullptr};

        tensor g = fgsm(obj, x, y, cfg);
        attack_config one = cfg;
        one.steps = 1;
        one.step_size = cfg.epsilon;
        one.random_start = false;
        tensor p = pgd(obj, x, y, one, 0);
        REQUIRE(bit_equal(g, p));
    }
}

TEST_CASE("fgsm sign on an affine two-class model", "[attack][oracle]") {
    // logits = Wx + b with K = 2 and label 0: grad_x CE = p1 (w1 - w0),
    // so the fgsm direction is exactly sign(w1 - w0) where nonzero.
    rng r(99);
    mlp m = testutil::affine_model(r, 6, 2);
    tensor x = testutil::random_tensor({6}, r, 0.3, 0.7);
    attack_config cfg;
    cfg.epsilon = 0.01;
    inner_objective obj{inner_kind::pgd_ce, &m, nullptr};
    tensor delta = fgsm(obj, x, 0, cfg);
    for (std::size_t i = 0; i < 6; ++i) {
        double dw = m.params.weights[0].at2(1, i) - m.params.weights[0].at2(0, i);
        if (dw == 0.0) continue;
        REQUIRE(delta[i] == Approx(cfg.epsilon * (dw > 0 ? 1.0 : -1.0)));
    }
}

TEST_CASE("random start is seeded and contained", "[attack][property]") {
    rng r(404);
    mlp m = testutil::random_mlp(r, 4, 3, 2, 8, activation::softplus);
    tensor x = testutil::random_tensor({4}, r, 0.2, 0.8);
    attack_config cfg;
    cfg.epsilon = 0.05;
    cfg.steps = 3;
    cfg.random_start = true;
    inner_objective obj{inner_kind::pgd_ce, &m, nullptr};

    tensor d1 = pgd(obj, x, 1, cfg, 123);
    tensor d2 = pgd(obj, x, 1, cfg, 123);
    tensor d3 = pgd(obj, x, 1, cfg, 124);
    REQUIRE(bit_equal(d1, d2));
    REQUIRE_FALSE(bit_equal(d1, d3));
}

TEST_CASE("objective values match the plain loss functions", "[attack][oracle]") {
    rng r(515);
    mlp student = testutil::random_mlp(r, 5, 3, 2, 8, activation::softplus);
    mlp teacher = testutil::random_mlp(r, 5, 3, 2, 12, activation::softplus);
    tensor x = testutil::random_tensor({5}, r, 0.2, 0.8);
    tensor delta = testutil::random_tensor({5}, r, -0.03, 0.03);
    tensor adv = apply_delta(x, delta);
    int y = 1;

    inner_objective ce{inner_kind::pgd_ce, &student, nullptr};
    REQUIRE(objective_value(ce, x, delta, y) ==
            Approx(cross_entropy(forward(student, adv), y)).epsilon(1e-12));

    inner_objective tr{inner_kind::trades_kl, &student, nullptr};
    REQUIRE(objective_value(tr, x, delta, y) ==
            Approx(kl_div(forward(student, adv), forward(student, x), 1.0)).epsilon(1e-12));

    inner_objective rs{inner_kind::rslad_kl, &student, &teacher};
    REQUIRE(objective_value(rs, x, delta, y) ==
            Approx(kl_div(forward(student, adv), forward(teacher, x), 1.0)).epsilon(1e-12));

    inner_objective ad{inner_kind::adaad_kl, &student, &teacher};
    REQUIRE(objective_value(ad, x, delta, y) ==
            Approx(kl_div(forward(student, adv), forward(teacher, adv), 1.0)).epsilon(1e-12));
}

TEST_CASE("adaad objective differentiates through the teacher branch", "[attack]") {
    // A student with all-zero parameters has constant logits, so any x-gradient
    // must come from the teacher side of the KL.  adaad perturbs the teacher
    // input too and should move; rslad anchors the teacher at x and must not.
    rng r(606);
    mlp teacher = testutil::random_mlp(r, 4, 3, 2, 10, activation::softplus);
    mlp student;
    student.arch = teacher.arch;
    student.params = init_mlp(student.arch, 1);
    for (tensor& w : student.params.weights) {
        for (std::size_t i = 0; i < w.numel(); ++i) w[i] = 0.0;
    }
    tensor x = testutil::random_tensor({4}, r, 0.3, 0.7);
    attack_config cfg;
    cfg.epsilon = 0.05;
    cfg.step_size = 0.01;
    cfg.steps = 5;
    cfg.random_start = false;

    inner_objective ada{inner_kind::adaad_kl, &student, &teacher};
    tensor moved = pgd(ada, x, 0, cfg, 0);
    REQUIRE(l2_norm(moved) > 0.0);

    inner_objective rsl{inner_kind::rslad_kl, &student, &teacher};
    tensor frozen = pgd(rsl, x, 0, cfg, 0);
    REQUIRE(l2_norm(frozen) == 0.0);  // sign(0) = 0 keeps delta at the origin
}

TEST_CASE("attack input validation", "[attack][errors]") {
    rng r(7);
    mlp m = testutil::random_mlp(r, 3, 2, 1, 4, activation::relu);
    attack_config cfg;
    cfg.epsilon = 0.05;
    inner_objective obj{inner_kind::pgd_ce, &m, nullptr};

    tensor outside({3}, {0.5, 1.5, 0.5});
    REQUIRE_THROWS_AS(pgd(obj, outside, 0, cfg, 0), std::invalid_argument);
    tensor x({3}, {0.5, 0.5, 0.5});
    REQUIRE_THROWS_AS(pgd(obj, x, 5, cfg, 0), std::invalid_argument);  // label range
    inner_objective no_student{inner_kind::pgd_ce, nullptr, nullptr};
    REQUIRE_THROWS_AS(pgd(no_student, x, 0, cfg, 0), std::invalid_argument);
    inner_objective needs_teacher{inner_kind::rslad_kl, &m, nullptr};
    REQUIRE_THROWS_AS(pgd(needs_teacher, x, 0, cfg, 0), std::invalid_argument);
}
