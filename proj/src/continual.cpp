#include "fd2cl/continual.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace fd2cl::continual {

using num::Tensor;
using num::Tape;

namespace {

enum SeedStream : std::uint64_t {
    kShuffleStream = 0x53485546ULL,  // "SHUF"
    kDropoutStream = 0x44524f50ULL,  // "DROP"
};

Tensor gather_batch(const synth::Dataset& ds, const std::vector<int>& idx, int from,
                    int count) {
    const auto& shape = ds.samples.front().image.shape();
    Tensor batch({count, shape[0], shape[1], shape[2]});
    const std::int64_t stride = ds.samples.front().image.size();
    for (int b = 0; b < count; ++b) {
        const Tensor& img = ds.samples[static_cast<std::size_t>(idx[static_cast<std::size_t>(from + b)])].image;
        for (std::int64_t i = 0; i < stride; ++i) batch[b * stride + i] = img[i];
    }
    return batch;
}

Tensor gather_labels(const synth::Dataset& ds, const std::vector<int>& idx, int from,
                     int count) {
    Tensor labels({count});
    for (int b = 0; b < count; ++b)
        labels[b] = ds.samples[static_cast<std::size_t>(idx[static_cast<std::size_t>(from + b)])].label;
    return labels;
}

// Batch boundaries over n samples; a trailing single sample is folded into
// the previous batch so alignment statistics never see a batch of one.
std::vector<std::pair<int, int>> batch_ranges(int n, int batch) {
    std::vector<std::pair<int, int>> out;
    int at = 0;
    while (at < n) {
        int take = std::min(batch, n - at);
        if (n - (at + take) == 1) take += 1;
        out.emplace_back(at, take);
        at += take;
    }
    return out;
}

void init_optimizer(OptimizerState& st, const std::vector<model::ParamRef>& params) {
    for (const auto& p : params) {
        st.m.emplace_back(p.tensor->shape());
        st.v.emplace_back(p.tensor->shape());
        st.t.push_back(0);
    }
}

void adam_step(OptimizerState& st, std::size_t i, Tensor& param, const Tensor& g,
               const config::OptimConfig& oc) {
    ++st.t[i];
    const double bc1 = 1.0 - std::pow(oc.beta1, static_cast<double>(st.t[i]));
    const double bc2 = 1.0 - std::pow(oc.beta2, static_cast<double>(st.t[i]));
    for (std::int64_t k = 0; k < param.size(); ++k) {
        st.m[i][k] = oc.beta1 * st.m[i][k] + (1.0 - oc.beta1) * g[k];
        st.v[i][k] = oc.beta2 * st.v[i][k] + (1.0 - oc.beta2) * g[k] * g[k];
        const double mhat = st.m[i][k] / bc1;
        const double vhat = st.v[i][k] / bc2;
        param[k] -= oc.lr * mhat / (std::sqrt(vhat) + oc.eps);
    }
}

std::vector<num::Tensor> snapshot_tensors(model::ModelState& m,
                                          const std::vector<std::size_t>& indices) {
    auto params = model::trainable_params(m);
    std::vector<Tensor> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(*params[i].tensor);
    return out;
}

}  // namespace

bool GradCache::any() const {
    for (const auto& d : dirs)
        if (!d.empty()) return true;
    return false;
}

double Schedules::lambda_at(int epoch, int epochs_per_task) const {
    if (epochs_per_task <= 1) return lambda_ewc_base;
    return lambda_ewc_base * static_cast<double>(epoch) /
           static_cast<double>(epochs_per_task - 1);
}

double Schedules::tau_at(int epoch, int epochs_per_task) const {
    if (epochs_per_task <= 1) return tau_end;
    const double f = static_cast<double>(epoch) / static_cast<double>(epochs_per_task - 1);
    return tau_start + (tau_end - tau_start) * f;
}

std::vector<num::Tensor> estimate_fisher(model::ModelState& m, const synth::Dataset& data,
                                         int class_label, bool freq_branches) {
    std::vector<int> idx;
    for (int i : data.indices_of(synth::Split::Train))
        if (data.samples[static_cast<std::size_t>(i)].label == class_label) idx.push_back(i);
    if (idx.empty())
        throw DataError("estimate_fisher: no samples of class " + std::to_string(class_label));

    const auto ewc_idx = model::ewc_param_indices(m);
    auto params = model::trainable_params(m);
    std::vector<Tensor> fisher;
    for (std::size_t i : ewc_idx) fisher.emplace_back(params[i].tensor->shape());

    // Per-sample gradients (not batched): expectation of squared per-sample
    // scores of log p(y = class | x).
    for (int sample : idx) {
        Tape t;
        model::ForwardOptions opts;
        opts.train_mode = false;
        opts.freq_branches = freq_branches;
        const Tensor batch = gather_batch(data, {sample}, 0, 1);
        auto fv = model::forward(t, m, batch, opts);
        Tensor label({1});
        label[0] = class_label;
        // d(log p)/dtheta = -d(bce)/dtheta for a single sample; squares agree.
        Tape::Var loss = t.bce_with_logits(fv.logits, label);
        t.backward(loss);
        for (std::size_t k = 0; k < ewc_idx.size(); ++k) {
            const Tensor& g = t.grad(fv.params[ewc_idx[k]]);
            if (g.empty()) continue;
            for (std::int64_t e = 0; e < g.size(); ++e) fisher[k][e] += g[e] * g[e];
        }
    }
    const double n = static_cast<double>(idx.size());
    for (auto& f : fisher)
        for (std::int64_t e = 0; e < f.size(); ++e) f[e] /= n;
    return fisher;
}

void accumulate_fisher(ContinualState& cs, std::vector<num::Tensor> new_real,
                       std::vector<num::Tensor> new_fake, config::FisherMode mode) {
    if (new_real.size() != new_fake.size())
        throw StateError("accumulate_fisher: real/fake index sets differ");
    if (!cs.fisher.present() || mode == config::FisherMode::LatestOnly) {
        if (cs.fisher.present() && cs.fisher.real.size() != new_real.size())
            throw StateError("accumulate_fisher: index set changed between tasks");
        cs.fisher.real = std::move(new_real);
        cs.fisher.fake = std::move(new_fake);
        cs.fisher.accumulated_tasks =
            mode == config::FisherMode::LatestOnly ? cs.fisher.accumulated_tasks + 1 : 1;
        return;
    }
    if (cs.fisher.real.size() != new_real.size())
        throw StateError("accumulate_fisher: index set changed between tasks");
    const double k = static_cast<double>(cs.fisher.accumulated_tasks);
    for (std::size_t i = 0; i < new_real.size(); ++i) {
        if (!cs.fisher.real[i].same_shape(new_real[i]) ||
            !cs.fisher.fake[i].same_shape(new_fake[i]))
            throw StateError("accumulate_fisher: tensor shape changed between tasks");
        for (std::int64_t e = 0; e < new_real[i].size(); ++e) {
            cs.fisher.real[i][e] = (k * cs.fisher.real[i][e] + new_real[i][e]) / (k + 1.0);
            cs.fisher.fake[i][e] = (k * cs.fisher.fake[i][e] + new_fake[i][e]) / (k + 1.0);
        }
    }
    cs.fisher.accumulated_tasks += 1;
}

bool project_gradient(Tensor& g, const Tensor& dir_unit, double tau) {
    if (dir_unit.empty()) return false;
    if (g.size() != dir_unit.size())
        throw StateError("project_gradient: direction size mismatch");
    const double gn = g.l2_norm();
    if (gn < 1e-300) return false;
    const double proj = num::dot(g, dir_unit);
    const double cosv = proj / gn;
    if (std::abs(cosv) <= tau) return false;
    for (std::int64_t i = 0; i < g.size(); ++i) g[i] -= proj * dir_unit[i];
    return true;
}

void update_cache(GradCache& cache, const std::vector<Tensor>& task_mean_grads) {
    if (cache.dirs.empty()) cache.dirs.resize(task_mean_grads.size());
    if (cache.dirs.size() != task_mean_grads.size())
        throw StateError("update_cache: adapter tensor count changed");
    const double n = static_cast<double>(cache.completed_tasks);
    for (std::size_t i = 0; i < task_mean_grads.size(); ++i) {
        const Tensor& tg = task_mean_grads[i];
        const double norm = tg.l2_norm();
        if (norm < 1e-12) continue;
        Tensor blended = cache.dirs[i].empty() ? Tensor(tg.shape()) : cache.dirs[i];
        for (std::int64_t e = 0; e < tg.size(); ++e)
            blended[e] = n * blended[e] + tg[e] / norm;
        const double bn = blended.l2_norm();
        if (bn < 1e-12) continue;  // cancellation: keep the previous direction
        for (std::int64_t e = 0; e < blended.size(); ++e) blended[e] /= bn;
        cache.dirs[i] = std::move(blended);
    }
    cache.completed_tasks += 1;
}

std::vector<int> split_labels(const synth::Dataset& data, synth::Split split) {
    std::vector<int> labels;
    for (int i : data.indices_of(split))
        labels.push_back(data.samples[static_cast<std::size_t>(i)].label);
    return labels;
}

std::vector<double> eval_scores(model::ModelState& m, const synth::Dataset& data,
                                synth::Split split, int batch_size, bool freq_branches) {
    const std::vector<int> idx = data.indices_of(split);
    if (idx.empty()) throw DataError("eval_scores: empty split");
    // Whole-split batches (capped) stabilize the batch alignment statistics
    // that the frozen per-task thresholds depend on.
    const int eval_batch = std::min<int>(std::max(batch_size, 128),
                                         static_cast<int>(idx.size()));
    std::vector<double> scores;
    scores.reserve(idx.size());
    for (const auto& [from, count] : batch_ranges(static_cast<int>(idx.size()), eval_batch)) {
        Tape t;
        model::ForwardOptions opts;
        opts.train_mode = false;
        opts.freq_branches = freq_branches;
        auto fv = model::forward(t, m, gather_batch(data, idx, from, count), opts);
        const Tensor& logits = t.value(fv.logits);
        for (int b = 0; b < count; ++b) scores.push_back(num::sigmoid(logits[b]));
    }
    return scores;
}

nlohmann::json task_report_to_json(const TaskReport& r) {
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : r.epochs) {
        epochs.push_back({{"epoch", e.epoch},
                          {"bce", e.bce},
                          {"ewc", e.ewc},
                          {"orth", e.orth},
                          {"align", e.align},
                          {"total", e.total},
                          {"val_acc", e.val_acc}});
    }
    return nlohmann::json{{"task_pos", r.task_pos},     {"task_id", r.task_id},
                          {"best_epoch", r.best_epoch}, {"best_val_acc", r.best_val_acc},
                          {"threshold", r.threshold},   {"epochs", epochs}};
}

TaskReport train_task(model::ModelState& m, ContinualState& cs,
                      const synth::Dataset& task_data, const config::RunConfig& cfg,
                      int task_pos, std::ostream* loss_csv, std::uint64_t& global_step,
                      OptimizerState* optim) {
    const auto& ab = cfg.ablation;
    const bool use_ewc = !ab.no_ewc;
    const bool use_ogc = !ab.no_ogc;
    const bool freq = !ab.no_freq;
    const int epochs = cfg.optim.epochs_per_task;

    Schedules sched{cfg.loss.lambda_ewc, cfg.loss.tau_start, cfg.loss.tau_end};
    auto params = model::trainable_params(m);
    const auto adapter_idx = model::adapter_param_indices(m);
    const auto ewc_idx = model::ewc_param_indices(m);
    OptimizerState local_optim;
    OptimizerState& adam = optim ? *optim : local_optim;
    if (!adam.initialized()) init_optimizer(adam, params);

    if (use_ogc && cs.cache.dirs.empty()) cs.cache.dirs.resize(adapter_idx.size());

    const std::vector<int> train_idx = task_data.indices_of(synth::Split::Train);
    if (train_idx.empty()) throw DataError("train_task: empty train split");

    auto dropout_rng = rng::Xoshiro256pp::from_stream(
        cfg.seed, kDropoutStream ^ (static_cast<std::uint64_t>(task_pos) << 32));

    // Epoch-summed raw adapter gradients feed the cache update at task end.
    std::vector<Tensor> task_grad_sum;
    for (std::size_t i : adapter_idx) task_grad_sum.emplace_back(params[i].tensor->shape());
    std::int64_t task_steps = 0;

    // Previous-step adapter gradients: the held-constant surrogate for the
    // orthogonality penalty.
    std::vector<Tensor> prev_grads(adapter_idx.size());

    TaskReport report;
    report.task_pos = task_pos;
    report.task_id = task_data.spec.task_id;
    report.best_val_acc = -1.0;

    std::vector<Tensor> best_weights;

    for (int epoch = 0; epoch < epochs; ++epoch) {
        const double lambda_ewc_eff =
            (use_ewc && cs.snapshot.present()) ? sched.lambda_at(epoch, epochs) : 0.0;
        const double tau = sched.tau_at(epoch, epochs);

        std::vector<int> order = train_idx;
        auto shuffle_rng = rng::Xoshiro256pp::from_stream(
            cfg.seed, kShuffleStream ^ (static_cast<std::uint64_t>(task_pos) << 32) ^
                          static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        EpochStats estats;
        estats.epoch = epoch;
        int epoch_steps = 0;

        for (const auto& [from, count] : batch_ranges(static_cast<int>(order.size()), cfg.optim.batch)) {
            const Tensor batch = gather_batch(task_data, order, from, count);
            const Tensor labels = gather_labels(task_data, order, from, count);
            const Tensor mask =
                model::make_dropout_mask(count, m.dims.h2, model::kDropoutProb, dropout_rng);

            losses::LossBreakdown bd;
            bd.lambda_ewc_eff = lambda_ewc_eff;
            bd.lambda_orth = ab.no_ogc ? 0.0 : cfg.loss.lambda_orth;
            bd.lambda_align = ab.no_align ? 0.0 : cfg.loss.lambda_align;

            Tape t;
            model::ForwardVars fv;
            try {
                model::ForwardOptions opts;
                opts.train_mode = true;
                opts.dropout_mask = &mask;
                opts.freq_branches = freq;
                fv = model::forward(t, m, batch, opts);

                Tape::Var loss = losses::bce_loss(t, fv.logits, labels);
                bd.bce = t.value(loss).item();

                if (use_ewc && cs.snapshot.present()) {
                    std::vector<Tape::Var> theta;
                    std::vector<const Tensor*> tstar, fr, ff;
                    for (std::size_t k = 0; k < ewc_idx.size(); ++k) {
                        theta.push_back(fv.params[ewc_idx[k]]);
                        tstar.push_back(&cs.snapshot.theta_star[k]);
                        fr.push_back(&cs.fisher.real[k]);
                        ff.push_back(&cs.fisher.fake[k]);
                    }
                    Tape::Var ewc = losses::ewc_penalty_op(t, theta, tstar, fr, ff);
                    bd.ewc = t.value(ewc).item();
                    if (lambda_ewc_eff != 0.0)
                        loss = t.add(loss, t.scale_shift(ewc, lambda_ewc_eff, 0.0));
                }

                if (bd.lambda_align != 0.0) {
                    Tape::Var al = losses::align_loss_op(t, fv.f_align, labels, m.anchor_real,
                                                         m.anchor_fake);
                    bd.align = t.value(al).item();
                    loss = t.add(loss, t.scale_shift(al, bd.lambda_align, 0.0));
                } else {
                    bd.align = losses::align_loss_value(t.value(fv.f_align), labels,
                                                        m.anchor_real, m.anchor_fake);
                }

                if (use_ogc) {
                    std::vector<const Tensor*> gptrs, dptrs;
                    for (std::size_t k = 0; k < adapter_idx.size(); ++k) {
                        gptrs.push_back(prev_grads[k].empty() ? nullptr : &prev_grads[k]);
                        dptrs.push_back(cs.cache.dirs[k].empty() ? nullptr : &cs.cache.dirs[k]);
                    }
                    bd.orth = losses::orth_loss(gptrs, dptrs);
                }

                bd.total = t.value(loss).item() + bd.lambda_orth * bd.orth;
                if (!bd.composition_ok())
                    throw StateError("train_task: loss composition identity violated");
                t.backward(loss);
            } catch (const NumericalError& e) {
                throw NumericalError(std::string(e.what()) + " [task " +
                                     std::to_string(task_pos) + ", epoch " +
                                     std::to_string(epoch) + ", batch starting at shuffled index " +
                                     std::to_string(from) + "]");
            }

            // First-task contract: no EWC penalty and no projection can fire.
            if (cs.completed_tasks == 0 && bd.ewc != 0.0)
                throw StateError("train_task: EWC penalty nonzero before any snapshot");

            int fired = 0;
            for (std::size_t k = 0; k < adapter_idx.size(); ++k) {
                const Tensor& g = t.grad(fv.params[adapter_idx[k]]);
                Tensor gp = g.empty() ? Tensor(params[adapter_idx[k]].tensor->shape()) : g;
                prev_grads[k] = gp;
                for (std::int64_t e = 0; e < gp.size(); ++e) task_grad_sum[k][e] += gp[e];
                if (use_ogc && project_gradient(gp, cs.cache.dirs[k], tau)) ++fired;
                adam_step(adam, adapter_idx[k], *params[adapter_idx[k]].tensor, gp, cfg.optim);
            }
            if (cs.completed_tasks == 0 && fired != 0)
                throw StateError("train_task: projection fired with an empty cache");

            // EWC-set parameters always receive unprojected gradients.
            for (std::size_t i : ewc_idx) {
                const Tensor& g = t.grad(fv.params[i]);
                if (g.empty()) continue;
                adam_step(adam, i, *params[i].tensor, g, cfg.optim);
            }

            ++task_steps;
            ++epoch_steps;
            ++global_step;
            estats.bce += bd.bce;
            estats.ewc += bd.ewc;
            estats.orth += bd.orth;
            estats.align += bd.align;
            estats.total += bd.total;
            if (loss_csv) {
                (*loss_csv) << global_step << ',' << task_pos << ',' << epoch << ','
                            << std::setprecision(17) << bd.bce << ',' << bd.ewc << ','
                            << bd.orth << ',' << bd.align << ',' << bd.total << '\n';
            }
        }

        estats.bce /= epoch_steps;
        estats.ewc /= epoch_steps;
        estats.orth /= epoch_steps;
        estats.align /= epoch_steps;
        estats.total /= epoch_steps;

        const auto val_scores = eval_scores(m, task_data, synth::Split::Val, cfg.optim.batch, freq);
        const auto val_labels = split_labels(task_data, synth::Split::Val);
        estats.val_acc = metrics::select_threshold(val_scores, val_labels).accuracy;
        report.epochs.push_back(estats);

        if (estats.val_acc > report.best_val_acc) {
            report.best_val_acc = estats.val_acc;
            report.best_epoch = epoch;
            best_weights.clear();
            for (const auto& p : params) best_weights.push_back(*p.tensor);
        }
    }

    // Restore the best-validation weights before consolidation.
    for (std::size_t i = 0; i < params.size(); ++i) *params[i].tensor = best_weights[i];

    const auto val_scores = eval_scores(m, task_data, synth::Split::Val, cfg.optim.batch, freq);
    const auto val_labels = split_labels(task_data, synth::Split::Val);
    report.threshold = metrics::select_threshold(val_scores, val_labels).threshold;

    if (use_ewc) {
        auto f_real = estimate_fisher(m, task_data, 0, freq);
        auto f_fake = estimate_fisher(m, task_data, 1, freq);
        accumulate_fisher(cs, std::move(f_real), std::move(f_fake), cfg.fisher_mode);
        cs.snapshot.theta_star = snapshot_tensors(m, ewc_idx);
    }
    if (use_ogc) {
        std::vector<Tensor> task_mean = task_grad_sum;
        for (auto& tg : task_mean)
            for (std::int64_t e = 0; e < tg.size(); ++e)
                tg[e] /= static_cast<double>(task_steps);
        update_cache(cs.cache, task_mean);
    }
    cs.completed_tasks += 1;
    return report;
}

ProtocolResult run_protocol(model::ModelState& m, const std::vector<synth::Dataset>& tasks,
                            const config::RunConfig& cfg, std::ostream* loss_csv) {
    if (tasks.size() < 2) throw ConfigError("run_protocol: at least 2 tasks required");
    const auto census0 = model::parameter_census(m);
    ContinualState cs;
    ProtocolResult pr;
    OptimizerState optim;
    std::uint64_t global_step = 0;
    const bool freq = !cfg.ablation.no_freq;

    for (std::size_t t = 0; t < tasks.size(); ++t) {
        pr.reports.push_back(train_task(m, cs, tasks[t], cfg, static_cast<int>(t), loss_csv,
                                        global_step, &optim));
        pr.thresholds.push_back(pr.reports.back().threshold);

        if (model::parameter_census(m) != census0)
            throw StateError("run_protocol: parameter census changed after task " +
                             std::to_string(t));

        std::vector<double> row;
        for (std::size_t i = 0; i <= t; ++i) {
            const auto scores =
                eval_scores(m, tasks[i], synth::Split::Test, cfg.optim.batch, freq);
            const auto labels = split_labels(tasks[i], synth::Split::Test);
            row.push_back(metrics::accuracy(scores, labels, pr.thresholds[i]));
        }
        pr.matrix.push_row(std::move(row));
    }

    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const auto scores = eval_scores(m, tasks[i], synth::Split::Test, cfg.optim.batch, freq);
        const auto labels = split_labels(tasks[i], synth::Split::Test);
        pr.final_aucs.push_back(metrics::auc(scores, labels));
    }
    return pr;
}

}  // namespace fd2cl::continual
