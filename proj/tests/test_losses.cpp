#include <cmath>
#include <doctest.h>

#include "fd2cl/losses.hpp"
#include "fd2cl/rng.hpp"

using namespace fd2cl;
using num::Tensor;
using num::Tape;

TEST_CASE("bce hand values") {
    SUBCASE("logit 0 gives ln 2") {
        const Tensor z({1}, {0.0});
        CHECK(losses::bce_loss_value(z, Tensor({1}, {0.0})) ==
              doctest::Approx(0.693147).epsilon(1e-5));
        CHECK(losses::bce_loss_value(z, Tensor({1}, {1.0})) ==
              doctest::Approx(0.693147).epsilon(1e-5));
    }
    SUBCASE("saturated correct logit") {
        CHECK(losses::bce_loss_value(Tensor({1}, {20.0}), Tensor({1}, {1.0})) < 1e-8);
    }
    SUBCASE("two-sample batch") {
        const Tensor z({2}, {1.0, -1.0});
        const Tensor y({2}, {1.0, 0.0});
        CHECK(losses::bce_loss_value(z, y) == doctest::Approx(0.313262).epsilon(1e-5));
    }
    SUBCASE("extreme logits stay finite") {
        const Tensor z({2}, {700.0, -700.0});
        const Tensor y({2}, {0.0, 1.0});
        CHECK(std::isfinite(losses::bce_loss_value(z, y)));
    }
}

TEST_CASE("ewc penalty") {
    SUBCASE("theta equals snapshot") {
        Tensor th({3}, {0.1, 0.2, 0.3});
        std::vector<const Tensor*> t{&th}, ts{&th};
        Tensor fr = Tensor::full({3}, 1.0), ff = Tensor::full({3}, 2.0);
        std::vector<const Tensor*> frv{&fr}, ffv{&ff};
        CHECK(losses::ewc_penalty_value(t, ts, frv, ffv) == 0.0);
    }

    SUBCASE("single-parameter hand case") {
        Tensor th({1}, {1.0}), ts({1}, {0.5});
        Tensor fr({1}, {1.0}), ff({1}, {3.0});
        std::vector<const Tensor*> a{&th}, b{&ts}, c{&fr}, d{&ff};
        // (1 + 3) * 0.5^2 = 1.0
        CHECK(losses::ewc_penalty_value(a, b, c, d) == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("random 100-parameter case matches explicit loop") {
        rng::Xoshiro256pp gen(33);
        Tensor th({100}), ts({100}), fr({100}), ff({100});
        for (int i = 0; i < 100; ++i) {
            th[i] = gen.uniform(-1, 1);
            ts[i] = gen.uniform(-1, 1);
            fr[i] = gen.uniform(0, 2);
            ff[i] = gen.uniform(0, 2);
        }
        double oracle = 0.0;
        for (int i = 0; i < 100; ++i)
            oracle += (fr[i] + ff[i]) * (th[i] - ts[i]) * (th[i] - ts[i]);
        std::vector<const Tensor*> a{&th}, b{&ts}, c{&fr}, d{&ff};
        CHECK(std::abs(losses::ewc_penalty_value(a, b, c, d) - oracle) < 1e-12);
    }

    SUBCASE("index-set mismatch is a state error") {
        Tensor th({3}), ts({2});
        Tensor fr({3}), ff({3});
        std::vector<const Tensor*> a{&th}, b{&ts}, c{&fr}, d{&ff};
        CHECK_THROWS_AS((void)losses::ewc_penalty_value(a, b, c, d), StateError);
    }

    SUBCASE("tape op agrees with value path and is differentiable") {
        rng::Xoshiro256pp gen(34);
        Tensor th({4, 3}), ts({4, 3}), fr({4, 3}), ff({4, 3});
        for (std::int64_t i = 0; i < th.size(); ++i) {
            th[i] = gen.uniform(-1, 1);
            ts[i] = gen.uniform(-1, 1);
            fr[i] = gen.uniform(0, 1);
            ff[i] = gen.uniform(0, 1);
        }
        auto loss_fn = [&](std::vector<Tensor>* grads) -> double {
            Tape t;
            auto v = t.leaf(th, true);
            auto p = losses::ewc_penalty_op(t, {v}, {&ts}, {&fr}, {&ff});
            if (grads) {
                t.backward(p);
                grads->assign({t.grad(v)});
            }
            return t.value(p).item();
        };
        std::vector<const Tensor*> a{&th}, b{&ts}, c{&fr}, d{&ff};
        CHECK(std::abs(loss_fn(nullptr) - losses::ewc_penalty_value(a, b, c, d)) < 1e-12);
        auto report = num::grad_check(loss_fn, {&th}, 1e-5, 1e-6);
        CHECK(report.max_rel_err < 1e-6);
    }
}

TEST_CASE("align loss") {
    const int d = 4;
    Tensor t_real({1, d}), t_fake({1, d});
    t_real[0] = 1.0;  // e0
    t_fake[1] = 1.0;  // e1

    SUBCASE("feature equals its anchor") {
        Tensor f({2, d});
        f.at(0, 0) = 1.0;  // real row matches t_real
        f.at(1, 1) = 1.0;  // fake row matches t_fake
        const Tensor y({2}, {0.0, 1.0});
        CHECK(losses::align_loss_value(f, y, t_real, t_fake) == doctest::Approx(0.0));
    }

    SUBCASE("orthogonal features give 1") {
        Tensor f({2, d});
        f.at(0, 2) = 1.0;
        f.at(1, 3) = 1.0;
        const Tensor y({2}, {0.0, 1.0});
        CHECK(losses::align_loss_value(f, y, t_real, t_fake) == doctest::Approx(1.0));
    }

    SUBCASE("anti-aligned features give 2") {
        Tensor f({2, d});
        f.at(0, 0) = -1.0;
        f.at(1, 1) = -1.0;
        const Tensor y({2}, {0.0, 1.0});
        CHECK(losses::align_loss_value(f, y, t_real, t_fake) == doctest::Approx(2.0));
    }

    SUBCASE("batch permutation invariance") {
        rng::Xoshiro256pp gen(35);
        const int b = 6;
        Tensor f({b, d});
        Tensor y({b});
        for (int i = 0; i < b; ++i) {
            double norm = 0.0;
            for (int j = 0; j < d; ++j) {
                f.at(i, j) = gen.normal();
                norm += f.at(i, j) * f.at(i, j);
            }
            norm = std::sqrt(norm);
            for (int j = 0; j < d; ++j) f.at(i, j) /= norm;
            y[i] = gen.below(2);
        }
        const double base = losses::align_loss_value(f, y, t_real, t_fake);
        // reverse the batch
        Tensor fr({b, d}), yr({b});
        for (int i = 0; i < b; ++i) {
            yr[i] = y[b - 1 - i];
            for (int j = 0; j < d; ++j) fr.at(i, j) = f.at(b - 1 - i, j);
        }
        CHECK(losses::align_loss_value(fr, yr, t_real, t_fake) ==
              doctest::Approx(base).epsilon(1e-12));
    }

    SUBCASE("non-unit rows violate the contract") {
        Tensor f({1, d});
        f.at(0, 0) = 0.9;
        const Tensor y({1}, {0.0});
        CHECK_THROWS_AS((void)losses::align_loss_value(f, y, t_real, t_fake), ContractError);
    }
}

TEST_CASE("orth loss") {
    Tensor g1({4}, {1.0, 0.0, 0.0, 0.0});
    Tensor g2({4}, {0.0, 2.0, 0.0, 0.0});
    Tensor d1({4}, {1.0, 0.0, 0.0, 0.0});
    Tensor d2({4}, {0.0, 1.0, 0.0, 0.0});

    SUBCASE("empty cache gives 0") {
        std::vector<const Tensor*> g{&g1, &g2}, c{nullptr, nullptr};
        CHECK(losses::orth_loss(g, c) == 0.0);
    }
    SUBCASE("orthogonal gradients give 0") {
        Tensor gperp({4}, {0.0, 0.0, 3.0, 0.0});
        std::vector<const Tensor*> g{&gperp, &gperp}, c{&d1, &d2};
        CHECK(losses::orth_loss(g, c) == doctest::Approx(0.0));
    }
    SUBCASE("parallel gradients give 1") {
        std::vector<const Tensor*> g{&g1, &g2}, c{&d1, &d2};
        CHECK(losses::orth_loss(g, c) == doctest::Approx(1.0));
    }
    SUBCASE("mean over cached tensors only") {
        std::vector<const Tensor*> g{&g1, &g2}, c{&d1, nullptr};
        CHECK(losses::orth_loss(g, c) == doctest::Approx(1.0));
    }
}

TEST_CASE("loss breakdown composition identity") {
    losses::LossBreakdown bd;
    bd.bce = 0.4;
    bd.ewc = 2.0;
    bd.orth = 0.25;
    bd.align = 0.8;
    bd.lambda_ewc_eff = 100.0;
    bd.lambda_orth = 0.1;
    bd.lambda_align = 0.5;
    bd.total = bd.composed();
    CHECK(bd.composition_ok());
    bd.total += 1e-6;
    CHECK(!bd.composition_ok());
}
