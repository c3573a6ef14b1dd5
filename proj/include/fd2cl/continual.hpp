#ifndef FD2CL_CONTINUAL_HPP
#define FD2CL_CONTINUAL_HPP

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <json.hpp>

#include "fd2cl/config.hpp"
#include "fd2cl/losses.hpp"
#include "fd2cl/metrics.hpp"
#include "fd2cl/model.hpp"
#include "fd2cl/synthdata.hpp"

namespace fd2cl::continual {

// Class-aware Fisher information over the EWC parameter set (phase gate and
// classifier head), one tensor per parameter, entries >= 0.
struct FisherInfo {
    std::vector<num::Tensor> real;
    std::vector<num::Tensor> fake;
    int accumulated_tasks = 0;
    bool present() const { return !real.empty(); }
};

// EWC anchor: copy of the EWC parameter set at the end of a completed task.
struct Snapshot {
    std::vector<num::Tensor> theta_star;
    bool present() const { return !theta_star.empty(); }
};

// One unit-norm historical direction per adapter tensor. An empty tensor
// means no direction has been cached for that slot yet.
struct GradCache {
    std::vector<num::Tensor> dirs;
    int completed_tasks = 0;
    bool any() const;
};

// Per-task coefficient schedules: the EWC coefficient ramps linearly from 0
// at epoch 0 to the base value at the final epoch; the projection threshold
// tau moves linearly from tau_start to tau_end.
struct Schedules {
    double lambda_ewc_base = 22000.0;
    double tau_start = 0.2;
    double tau_end = 0.1;

    double lambda_at(int epoch, int epochs_per_task) const;
    double tau_at(int epoch, int epochs_per_task) const;
};

struct ContinualState {
    FisherInfo fisher;
    Snapshot snapshot;
    GradCache cache;
    int completed_tasks = 0;
};

// Mean of squared per-sample gradients of log p(y = class | x) over the given
// class's train-split samples, taken w.r.t. the EWC parameter set.
std::vector<num::Tensor> estimate_fisher(model::ModelState& m, const synth::Dataset& data,
                                         int class_label, bool freq_branches);

// Running elementwise mean across completed tasks (or replacement, when the
// configured mode is latest-only).
void accumulate_fisher(ContinualState& cs, std::vector<num::Tensor> new_real,
                       std::vector<num::Tensor> new_fake, config::FisherMode mode);

// Eq.-6 style projection of one flattened gradient against a unit direction.
// Fires only when |cos(g, dir)| exceeds tau; otherwise g is left untouched.
bool project_gradient(num::Tensor& g, const num::Tensor& dir_unit, double tau);

// dir <- normalize(n * dir + normalize(task_mean_grad)) per adapter tensor,
// where n is the completed-task count; tensors with negligible task gradients
// keep their previous direction.
void update_cache(GradCache& cache, const std::vector<num::Tensor>& task_mean_grads);

// Adam moments, one slot per trainable tensor, persistent across the whole
// task stream.
struct OptimizerState {
    std::vector<num::Tensor> m, v;
    std::vector<std::int64_t> t;
    bool initialized() const { return !m.empty(); }
};

struct EpochStats {
    int epoch = 0;
    double bce = 0.0, ewc = 0.0, orth = 0.0, align = 0.0, total = 0.0;
    double val_acc = 0.0;
};

struct TaskReport {
    int task_pos = 0;
    int task_id = 0;
    int best_epoch = 0;
    double best_val_acc = 0.0;
    double threshold = 0.5;  // frozen for all later evaluations of this task
    std::vector<EpochStats> epochs;
};

nlohmann::json task_report_to_json(const TaskReport& r);

// Scores (sigmoid of logits) for a split, evaluated in deterministic batch
// order with dropout disabled.
std::vector<double> eval_scores(model::ModelState& m, const synth::Dataset& data,
                                synth::Split split, int batch_size, bool freq_branches);
std::vector<int> split_labels(const synth::Dataset& data, synth::Split split);

// One task of the sequential protocol: seeded minibatch epochs under the full
// objective, per-step projection of adapter gradients, best-validation weight
// tracking, then Fisher estimation, snapshotting and cache update.
TaskReport train_task(model::ModelState& m, ContinualState& cs,
                      const synth::Dataset& task_data, const config::RunConfig& cfg,
                      int task_pos, std::ostream* loss_csv, std::uint64_t& global_step,
                      OptimizerState* optim = nullptr);

struct ProtocolResult {
    metrics::TaskMatrix matrix;
    std::vector<TaskReport> reports;
    std::vector<double> thresholds;
    std::vector<double> final_aucs;  // per task, after the last task
};

ProtocolResult run_protocol(model::ModelState& m, const std::vector<synth::Dataset>& tasks,
                            const config::RunConfig& cfg, std::ostream* loss_csv);

}  // namespace fd2cl::continual

#endif
