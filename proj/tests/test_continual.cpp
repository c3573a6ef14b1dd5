#include <cmath>
#include <doctest.h>
#include <limits>
#include <sstream>

#include "fd2cl/continual.hpp"

using namespace fd2cl;
using num::Tensor;
using num::Tape;

namespace {

model::ModelDims test_dims() {
    model::ModelDims d;
    d.c = 3;
    d.h = 32;
    d.w = 32;
    d.d = 16;
    d.h1 = 32;
    d.h2 = 16;
    d.rank = 2;
    d.alpha = 8.0;
    return d;
}

config::RunConfig test_config(int epochs = 3) {
    config::RunConfig cfg = config::default_protocol2(11);
    cfg.model = test_dims();
    cfg.optim.epochs_per_task = epochs;
    cfg.optim.batch = 32;
    for (auto& t : cfg.tasks) t.counts = {64, 32, 32};
    return cfg;
}

synth::Dataset tiny_manual_dataset(int n_real, int n_fake) {
    synth::TaskSpec spec;
    synth::Dataset ds;
    ds.spec = spec;
    for (int i = 0; i < n_real; ++i) {
        synth::Sample s;
        s.image = synth::gen_real(spec.real, static_cast<std::uint64_t>(i));
        s.label = 0;
        s.split = 0;
        ds.samples.push_back(std::move(s));
    }
    for (int i = 0; i < n_fake; ++i) {
        synth::Sample s;
        s.image = synth::gen_fake(spec.real, spec.fake, static_cast<std::uint64_t>(i));
        s.label = 1;
        s.split = 0;
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (std::int64_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

}  // namespace

TEST_CASE("schedules ramp as specified") {
    continual::Schedules s{22000.0, 0.2, 0.1};
    CHECK(s.lambda_at(0, 15) == 0.0);
    CHECK(s.lambda_at(14, 15) == doctest::Approx(22000.0));
    CHECK(s.lambda_at(7, 15) == doctest::Approx(22000.0 * 7.0 / 14.0));
    CHECK(s.tau_at(0, 15) == doctest::Approx(0.2));
    CHECK(s.tau_at(14, 15) == doctest::Approx(0.1));
}

TEST_CASE("fisher estimation") {
    SUBCASE("saturated correct logits give vanishing fisher") {
        auto m = model::ModelState::init(test_dims(), 3);
        // zero head weights and a huge positive bias: p(fake) ~ 1 exactly
        m.head_w2 = Tensor({m.dims.h2, 1});
        m.head_b2 = Tensor({1, 1}, {40.0});
        auto ds = tiny_manual_dataset(0, 4);
        auto fisher = continual::estimate_fisher(m, ds, 1, true);
        for (const auto& f : fisher)
            for (std::int64_t i = 0; i < f.size(); ++i) CHECK(f[i] < 1e-12);
    }

    SUBCASE("two-sample class equals the per-sample loop oracle") {
        auto m = model::ModelState::init(test_dims(), 4);
        auto ds = tiny_manual_dataset(1, 2);
        auto fisher = continual::estimate_fisher(m, ds, 1, true);

        const auto ewc_idx = model::ewc_param_indices(m);
        std::vector<Tensor> oracle;
        {
            auto refs = model::trainable_params(m);
            for (std::size_t i : ewc_idx) oracle.emplace_back(refs[i].tensor->shape());
        }
        for (int sample = 1; sample <= 2; ++sample) {  // the two fake samples
            Tape t;
            model::ForwardOptions opts;
            const auto& img = ds.samples[static_cast<std::size_t>(sample)].image;
            Tensor batch({1, 3, 32, 32});
            for (std::int64_t i = 0; i < img.size(); ++i) batch[i] = img[i];
            auto fv = model::forward(t, m, batch, opts);
            auto loss = t.bce_with_logits(fv.logits, Tensor({1}, {1.0}));
            t.backward(loss);
            for (std::size_t k = 0; k < ewc_idx.size(); ++k) {
                const Tensor& g = t.grad(fv.params[ewc_idx[k]]);
                if (g.empty()) continue;
                for (std::int64_t e = 0; e < g.size(); ++e)
                    oracle[k][e] += g[e] * g[e] / 2.0;
            }
        }
        for (std::size_t k = 0; k < oracle.size(); ++k)
            for (std::int64_t e = 0; e < oracle[k].size(); ++e)
                CHECK(std::abs(fisher[k][e] - oracle[k][e]) < 1e-12);
    }

    SUBCASE("fisher entries are nonnegative on random models") {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            auto m = model::ModelState::init(test_dims(), 100 + seed);
            auto ds = tiny_manual_dataset(2, 2);
            for (int cls = 0; cls <= 1; ++cls) {
                auto fisher = continual::estimate_fisher(m, ds, cls, true);
                for (const auto& f : fisher)
                    for (std::int64_t i = 0; i < f.size(); ++i) CHECK(f[i] >= 0.0);
            }
        }
    }

    SUBCASE("empty class partition is a data error") {
        auto m = model::ModelState::init(test_dims(), 5);
        auto ds = tiny_manual_dataset(2, 0);
        CHECK_THROWS_AS((void)continual::estimate_fisher(m, ds, 1, true), DataError);
    }
}

TEST_CASE("fisher accumulation") {
    auto make = [](double v) {
        std::vector<Tensor> f;
        f.push_back(Tensor::full({2}, v));
        return f;
    };

    SUBCASE("first task is taken verbatim") {
        continual::ContinualState cs;
        continual::accumulate_fisher(cs, make(2.0), make(5.0), config::FisherMode::RunningMean);
        CHECK(cs.fisher.real[0][0] == 2.0);
        CHECK(cs.fisher.fake[0][0] == 5.0);
    }

    SUBCASE("two tasks average") {
        continual::ContinualState cs;
        continual::accumulate_fisher(cs, make(2.0), make(2.0), config::FisherMode::RunningMean);
        continual::accumulate_fisher(cs, make(4.0), make(4.0), config::FisherMode::RunningMean);
        CHECK(cs.fisher.real[0][0] == doctest::Approx(3.0));
    }

    SUBCASE("running mean is permutation-independent") {
        const double vals[3] = {1.0, 5.0, 9.0};
        const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                 {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
        double first = 0.0;
        for (int p = 0; p < 6; ++p) {
            continual::ContinualState cs;
            for (int k = 0; k < 3; ++k)
                continual::accumulate_fisher(cs, make(vals[perms[p][k]]),
                                             make(vals[perms[p][k]]),
                                             config::FisherMode::RunningMean);
            if (p == 0) first = cs.fisher.real[0][0];
            CHECK(cs.fisher.real[0][0] == doctest::Approx(first).epsilon(1e-12));
        }
    }

    SUBCASE("latest-only replaces") {
        continual::ContinualState cs;
        continual::accumulate_fisher(cs, make(2.0), make(2.0), config::FisherMode::LatestOnly);
        continual::accumulate_fisher(cs, make(4.0), make(4.0), config::FisherMode::LatestOnly);
        CHECK(cs.fisher.real[0][0] == 4.0);
    }

    SUBCASE("index-set mismatch is a state error") {
        continual::ContinualState cs;
        continual::accumulate_fisher(cs, make(1.0), make(1.0), config::FisherMode::RunningMean);
        std::vector<Tensor> wrong;
        wrong.push_back(Tensor::full({3}, 1.0));
        std::vector<Tensor> wrong2;
        wrong2.push_back(Tensor::full({3}, 1.0));
        CHECK_THROWS_AS(
            continual::accumulate_fisher(cs, std::move(wrong), std::move(wrong2),
                                         config::FisherMode::RunningMean),
            StateError);
    }
}

TEST_CASE("gradient projection") {
    rng::Xoshiro256pp gen(55);

    SUBCASE("absent direction passes through bitwise") {
        Tensor g({4}, {1.0, -2.0, 3.0, 0.5});
        const Tensor before = g;
        CHECK(!continual::project_gradient(g, Tensor(), 0.1));
        CHECK(bit_equal(g, before));
    }

    SUBCASE("parallel gradient projects to zero") {
        Tensor dir({3}, {1.0, 0.0, 0.0});
        Tensor g({3}, {2.0, 0.0, 0.0});
        CHECK(continual::project_gradient(g, dir, 0.5));
        for (int i = 0; i < 3; ++i) CHECK(std::abs(g[i]) < 1e-15);
    }

    SUBCASE("below-threshold cosine passes through bitwise") {
        Tensor dir({2}, {1.0, 0.0});
        Tensor g({2}, {0.05, 1.0});  // cos ~ 0.05
        const Tensor before = g;
        CHECK(!continual::project_gradient(g, dir, 0.2));
        CHECK(bit_equal(g, before));
    }

    SUBCASE("randomized pythagoras and orthogonality") {
        for (int rep = 0; rep < 200; ++rep) {
            const int n = 2 + static_cast<int>(gen.below(16));
            Tensor dir({n}), g({n});
            for (int i = 0; i < n; ++i) {
                dir[i] = gen.normal();
                g[i] = gen.normal() * 3.0;
            }
            const double dn = dir.l2_norm();
            for (int i = 0; i < n; ++i) dir[i] /= dn;
            const double tau = gen.uniform(0.0, 0.5);

            const double gnorm = g.l2_norm();
            const double proj = num::dot(g, dir);
            const Tensor before = g;
            const bool fired = continual::project_gradient(g, dir, tau);
            if (!fired) {
                CHECK(bit_equal(g, before));
                continue;
            }
            CHECK(std::abs(num::dot(g, dir)) <= 1e-10 * gnorm);
            CHECK(std::abs(g.l2_norm() * g.l2_norm() + proj * proj - gnorm * gnorm) <= 1e-9);
            CHECK(g.l2_norm() <= gnorm + 1e-12);
        }
    }
}

TEST_CASE("gradient cache updates") {
    SUBCASE("first task stores the normalized direction") {
        continual::GradCache cache;
        std::vector<Tensor> grads;
        grads.push_back(Tensor({2}, {3.0, 4.0}));
        continual::update_cache(cache, grads);
        CHECK(cache.dirs[0][0] == doctest::Approx(0.6));
        CHECK(cache.dirs[0][1] == doctest::Approx(0.8));
        CHECK(cache.completed_tasks == 1);
    }

    SUBCASE("orthogonal second task lands at 45 degrees") {
        continual::GradCache cache;
        std::vector<Tensor> g1, g2;
        g1.push_back(Tensor({2}, {2.0, 0.0}));
        g2.push_back(Tensor({2}, {0.0, 7.0}));
        continual::update_cache(cache, g1);
        continual::update_cache(cache, g2);
        const double c = std::sqrt(2.0) / 2.0;
        CHECK(cache.dirs[0][0] == doctest::Approx(c).epsilon(1e-9));
        CHECK(cache.dirs[0][1] == doctest::Approx(c).epsilon(1e-9));
    }

    SUBCASE("entries stay unit-norm; tiny gradients are skipped") {
        continual::GradCache cache;
        std::vector<Tensor> g1;
        g1.push_back(Tensor({3}, {1.0, 2.0, -2.0}));
        g1.push_back(Tensor({2}, {1e-15, 0.0}));  // below threshold: stays absent
        continual::update_cache(cache, g1);
        CHECK(std::abs(cache.dirs[0].l2_norm() - 1.0) < 1e-9);
        CHECK(cache.dirs[1].empty());
    }
}

TEST_CASE("train_task contracts") {
    auto cfg = test_config(2);
    auto ds = synth::generate_dataset(cfg.tasks[0]);

    SUBCASE("first task: no EWC, no projection, report is complete") {
        auto m = model::ModelState::init(cfg.model, cfg.seed);
        continual::ContinualState cs;
        std::uint64_t step = 0;
        std::ostringstream csv;
        auto report = continual::train_task(m, cs, ds, cfg, 0, &csv, step);
        CHECK(report.epochs.size() == 2);
        for (const auto& e : report.epochs) CHECK(e.ewc == 0.0);
        CHECK(cs.completed_tasks == 1);
        CHECK(cs.snapshot.present());
        CHECK(cs.fisher.present());
        CHECK(step == 4);  // 64 train / batch 32 = 2 steps x 2 epochs
    }

    SUBCASE("identical seeds give bit-identical task reports and weights") {
        auto run = [&] {
            auto m = model::ModelState::init(cfg.model, cfg.seed);
            continual::ContinualState cs;
            std::uint64_t step = 0;
            auto report = continual::train_task(m, cs, ds, cfg, 0, nullptr, step);
            return std::make_pair(continual::task_report_to_json(report).dump(), m);
        };
        auto [r1, m1] = run();
        auto [r2, m2] = run();
        CHECK(r1 == r2);
        CHECK(bit_equal(m1.head_w1, m2.head_w1));
        CHECK(bit_equal(m1.adapters[0][0].a, m2.adapters[0][0].a));
        CHECK(bit_equal(m1.gate.gain, m2.gate.gain));
    }

    SUBCASE("frozen weights stay bit-identical through training") {
        auto m = model::ModelState::init(cfg.model, cfg.seed);
        const Tensor w1 = m.enc_w1, w2 = m.enc_w2;
        const Tensor ar = m.anchor_real;
        continual::ContinualState cs;
        std::uint64_t step = 0;
        (void)continual::train_task(m, cs, ds, cfg, 0, nullptr, step);
        CHECK(bit_equal(m.enc_w1, w1));
        CHECK(bit_equal(m.enc_w2, w2));
        CHECK(bit_equal(m.anchor_real, ar));
    }

    SUBCASE("no_ewc logs zero penalties and skips consolidation") {
        auto cfg2 = cfg;
        cfg2.ablation.no_ewc = true;
        auto m = model::ModelState::init(cfg2.model, cfg2.seed);
        continual::ContinualState cs;
        std::uint64_t step = 0;
        std::ostringstream csv;
        (void)continual::train_task(m, cs, ds, cfg2, 0, &csv, step);
        (void)continual::train_task(m, cs, ds, cfg2, 1, &csv, step);
        CHECK(!cs.snapshot.present());
        CHECK(!cs.fisher.present());
        std::istringstream lines(csv.str());
        std::string line;
        while (std::getline(lines, line)) {
            // column 5 is the ewc term
            std::istringstream cols(line);
            std::string tok;
            for (int i = 0; i < 5; ++i) std::getline(cols, tok, ',');
            CHECK(tok == "0");
        }
    }
}

TEST_CASE("run_protocol") {
    auto cfg = test_config(2);

    SUBCASE("two identical tasks show negligible forgetting") {
        auto specs = cfg.tasks;
        config::RunConfig cfg2 = cfg;
        cfg2.optim.epochs_per_task = 8;
        cfg2.tasks = {specs[0], specs[0]};
        std::vector<synth::Dataset> tasks;
        for (const auto& s : cfg2.tasks) tasks.push_back(synth::generate_dataset(s));
        auto m = model::ModelState::init(cfg2.model, cfg2.seed);
        auto pr = continual::run_protocol(m, tasks, cfg2, nullptr);
        CHECK(pr.matrix.at(1, 0) >= pr.matrix.at(0, 0) - 0.02);
    }

    SUBCASE("permuted order yields a complete lower-triangular matrix") {
        config::RunConfig cfg3 = cfg;
        cfg3.tasks = {cfg.tasks[2], cfg.tasks[0], cfg.tasks[1]};
        std::vector<synth::Dataset> tasks;
        for (const auto& s : cfg3.tasks) tasks.push_back(synth::generate_dataset(s));
        auto m = model::ModelState::init(cfg3.model, cfg3.seed);
        auto pr = continual::run_protocol(m, tasks, cfg3, nullptr);
        CHECK(pr.matrix.tasks() == 3);
        CHECK(pr.matrix.complete());
        CHECK(pr.final_aucs.size() == 3);
        CHECK(pr.thresholds.size() == 3);
    }

    SUBCASE("fewer than two tasks is rejected") {
        std::vector<synth::Dataset> tasks;
        tasks.push_back(synth::generate_dataset(cfg.tasks[0]));
        auto m = model::ModelState::init(cfg.model, cfg.seed);
        CHECK_THROWS_AS((void)continual::run_protocol(m, tasks, cfg, nullptr), ConfigError);
    }
}

TEST_CASE("non-finite state aborts with batch diagnostics") {
    auto cfg = test_config(1);
    auto ds = synth::generate_dataset(cfg.tasks[0]);
    auto m = model::ModelState::init(cfg.model, cfg.seed);
    m.head_w1[0] = std::numeric_limits<double>::infinity();
    continual::ContinualState cs;
    std::uint64_t step = 0;
    try {
        (void)continual::train_task(m, cs, ds, cfg, 0, nullptr, step);
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("task 0") != std::string::npos);
        CHECK(msg.find("batch") != std::string::npos);
    }
}

TEST_CASE("naive flags bypass both mechanisms entirely") {
    auto cfg = test_config(2);
    cfg.ablation.no_ewc = true;
    cfg.ablation.no_ogc = true;
    auto ds0 = synth::generate_dataset(cfg.tasks[0]);
    auto ds1 = synth::generate_dataset(cfg.tasks[1]);
    auto m = model::ModelState::init(cfg.model, cfg.seed);
    continual::ContinualState cs;
    std::uint64_t step = 0;
    std::ostringstream csv;
    (void)continual::train_task(m, cs, ds0, cfg, 0, &csv, step);
    (void)continual::train_task(m, cs, ds1, cfg, 1, &csv, step);
    CHECK(!cs.snapshot.present());
    CHECK(!cs.fisher.present());
    CHECK(!cs.cache.any());
    CHECK(cs.cache.completed_tasks == 0);
    // every logged ewc and orth entry is zero
    std::istringstream lines(csv.str());
    std::string line;
    while (std::getline(lines, line)) {
        std::istringstream cols(line);
        std::string tok;
        std::vector<std::string> parts;
        while (std::getline(cols, tok, ',')) parts.push_back(tok);
        CHECK(parts[4] == "0");  // ewc
        CHECK(parts[5] == "0");  // orth
    }
}
