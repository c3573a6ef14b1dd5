#include <cmath>
#include <doctest.h>

#include "fd2cl/rng.hpp"
#include "fd2cl/tensor.hpp"

using namespace fd2cl;
using num::Tensor;
using num::Tape;

namespace {

Tensor random_tensor(std::vector<int> shape, rng::Xoshiro256pp& gen, double lo = -1.0,
                     double hi = 1.0) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = gen.uniform(lo, hi);
    return t;
}

// Independent element-by-element triple-loop product.
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
    Tensor c({a.rows(), b.cols()});
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (int k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
            c.at(i, j) = s;
        }
    return c;
}

}  // namespace

TEST_CASE("matmul identity and zeros") {
    rng::Xoshiro256pp gen(42);
    const Tensor a = random_tensor({3, 3}, gen);
    const Tensor out = num::matmul_value(Tensor::identity(3), a);
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(out[i] == a[i]);

    const Tensor z = num::matmul_value(a, Tensor::zeros({3, 4}));
    for (std::int64_t i = 0; i < z.size(); ++i) CHECK(z[i] == 0.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
    rng::Xoshiro256pp gen(7);
    const Tensor a = random_tensor({4, 5}, gen);
    const Tensor b = random_tensor({5, 3}, gen);
    const Tensor got = num::matmul_value(a, b);
    const Tensor want = matmul_oracle(a, b);
    for (std::int64_t i = 0; i < got.size(); ++i)
        CHECK(std::abs(got[i] - want[i]) < 1e-12);
}

TEST_CASE("matmul shape mismatch throws") {
    Tensor a({2, 3});
    Tensor b({4, 2});
    CHECK_THROWS_AS((void)num::matmul_value(a, b), DimensionError);
}

TEST_CASE("matmul is bit-deterministic") {
    rng::Xoshiro256pp gen(99);
    const Tensor a = random_tensor({8, 16}, gen);
    const Tensor b = random_tensor({16, 8}, gen);
    const Tensor c1 = num::matmul_value(a, b);
    const Tensor c2 = num::matmul_value(a, b);
    for (std::int64_t i = 0; i < c1.size(); ++i) CHECK(c1[i] == c2[i]);
}

TEST_CASE("gelu values") {
    CHECK(num::gelu_scalar(0.0) == 0.0);
    CHECK(std::abs(num::gelu_scalar(10.0) - 10.0) < 1e-6);

    // derivative at 0.5 vs central finite difference
    const double h = 1e-5;
    const double fd = (num::gelu_scalar(0.5 + h) - num::gelu_scalar(0.5 - h)) / (2 * h);
    const double an = num::gelu_grad_scalar(0.5);
    CHECK(std::abs(fd - an) / std::max(std::abs(fd), std::abs(an)) < 1e-6);
}

TEST_CASE("grad_check on a quadratic loss") {
    Tensor theta({2}, {1.0, 2.0});
    auto loss_fn = [&](std::vector<Tensor>* grads) -> double {
        Tape t;
        auto v = t.leaf(theta, true);
        auto loss = t.sum(t.mul(v, v));
        if (grads) {
            t.backward(loss);
            grads->clear();
            grads->push_back(t.grad(v));
        }
        return t.value(loss).item();
    };
    std::vector<Tensor> g;
    loss_fn(&g);
    CHECK(g[0][0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(g[0][1] == doctest::Approx(4.0).epsilon(1e-12));

    auto report = num::grad_check(loss_fn, {&theta}, 1e-5, 1e-8);
    CHECK(report.max_rel_err < 1e-8);
    CHECK(report.entries_checked == 2);
}

TEST_CASE("grad_check on a constant loss reports zero error") {
    Tensor theta({3}, {0.3, -0.7, 1.1});
    auto loss_fn = [&](std::vector<Tensor>* grads) -> double {
        Tape t;
        auto v = t.leaf(theta, true);
        auto loss = t.mean(t.scale_shift(v, 0.0, 5.0));
        if (grads) {
            t.backward(loss);
            grads->clear();
            grads->push_back(t.grad(v).empty() ? Tensor(theta.shape()) : t.grad(v));
        }
        return t.value(loss).item();
    };
    auto report = num::grad_check(loss_fn, {&theta}, 1e-5, 1e-8);
    CHECK(report.max_rel_err == 0.0);
}

TEST_CASE("grad_check rejects non-finite losses") {
    Tensor theta({1}, {2.0});
    auto loss_fn = [&](std::vector<Tensor>*) -> double {
        return std::numeric_limits<double>::quiet_NaN();
    };
    CHECK_THROWS_AS((void)num::grad_check(loss_fn, {&theta}, 1e-5, 1e-4), NumericalError);
}

// Every differentiable primitive, checked against central finite differences
// on randomized inputs.
TEST_CASE("primitive gradients match finite differences") {
    rng::Xoshiro256pp gen(2024);

    auto check = [&](const char* name,
                     const std::function<Tape::Var(Tape&, Tape::Var)>& build, Tensor x0) {
        CAPTURE(name);
        auto loss_fn = [&](std::vector<Tensor>* grads) -> double {
            Tape t;
            auto x = t.leaf(x0, true);
            auto y = build(t, x);
            // random but fixed linear functional to get a scalar
            rng::Xoshiro256pp wgen(555);
            Tensor w(t.value(y).shape());
            for (std::int64_t i = 0; i < w.size(); ++i) w[i] = wgen.uniform(-1, 1);
            auto loss = t.sum(t.mul_const(y, std::move(w)));
            if (grads) {
                t.backward(loss);
                grads->clear();
                grads->push_back(t.grad(x).empty() ? Tensor(x0.shape()) : t.grad(x));
            }
            return t.value(loss).item();
        };
        auto report = num::grad_check(loss_fn, {&x0}, 1e-5, 1e-4);
        CHECK_MESSAGE(report.max_rel_err < 1e-4, name, " max_rel_err=", report.max_rel_err);
    };

    check("gelu", [](Tape& t, Tape::Var x) { return t.gelu(x); },
          random_tensor({3, 4}, gen, -2, 2));
    check("tanh", [](Tape& t, Tape::Var x) { return t.tanh(x); },
          random_tensor({3, 4}, gen, -2, 2));
    check("scale_shift", [](Tape& t, Tape::Var x) { return t.scale_shift(x, -1.7, 0.3); },
          random_tensor({2, 5}, gen));
    check("row_l2_normalize",
          [](Tape& t, Tape::Var x) { return t.row_l2_normalize(x, 1e-12); },
          random_tensor({4, 6}, gen, 0.2, 1.5));
    check("mean", [](Tape& t, Tape::Var x) { return t.mean(x); },
          random_tensor({5, 2}, gen));

    {
        rng::Xoshiro256pp g2(11);
        Tensor b0 = random_tensor({6, 3}, g2);
        check("matmul-left",
              [&](Tape& t, Tape::Var x) { return t.matmul(x, t.constant(b0)); },
              random_tensor({4, 6}, g2));
        Tensor a0 = random_tensor({4, 6}, g2);
        check("matmul-right",
              [&](Tape& t, Tape::Var x) { return t.matmul(t.constant(a0), x); },
              random_tensor({6, 3}, g2));
        Tensor m0 = random_tensor({4, 3}, g2);
        check("mul", [&](Tape& t, Tape::Var x) { return t.mul(x, t.constant(m0)); },
              random_tensor({4, 3}, g2));
        Tensor rows0 = random_tensor({5, 3}, g2);
        check("add_row_broadcast",
              [&](Tape& t, Tape::Var x) {
                  return t.add_row_broadcast(t.constant(rows0), x);
              },
              random_tensor({1, 3}, g2));
        Tensor mid0 = random_tensor({3, 2}, g2);
        check("concat_cols",
              [&](Tape& t, Tape::Var x) {
                  return t.concat_cols({x, t.constant(mid0), x});
              },
              random_tensor({3, 4}, g2));
    }

    {
        // bce with logits vs finite differences
        rng::Xoshiro256pp g3(31);
        Tensor labels({6});
        for (int i = 0; i < 6; ++i) labels[i] = i % 2;
        Tensor z0 = random_tensor({6}, g3, -3, 3);
        auto loss_fn = [&](std::vector<Tensor>* grads) -> double {
            Tape t;
            auto z = t.leaf(z0, true);
            auto loss = t.bce_with_logits(z, labels);
            if (grads) {
                t.backward(loss);
                grads->clear();
                grads->push_back(t.grad(z));
            }
            return t.value(loss).item();
        };
        auto report = num::grad_check(loss_fn, {&z0}, 1e-5, 1e-6);
        CHECK(report.max_rel_err < 1e-6);
    }
}

TEST_CASE("tape rejects non-finite results") {
    Tape t;
    auto x = t.leaf(Tensor({1}, {1e308}), true);
    CHECK_THROWS_AS((void)t.add(x, x), NumericalError);
}

TEST_CASE("backward visits nodes once and accumulates fan-out") {
    // y = x + x: dy/dx = 2
    Tape t;
    auto x = t.leaf(Tensor::scalar(3.0), true);
    auto y = t.add(x, x);
    t.backward(y);
    CHECK(t.grad(x).item() == 2.0);
}
