#ifndef FD2CL_RUNNER_HPP
#define FD2CL_RUNNER_HPP

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "fd2cl/config.hpp"
#include "fd2cl/continual.hpp"

namespace fd2cl::runner {

// Process exit codes used by the CLI front end.
enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kMissingInput = 2,
    kNumericalAbort = 3,
};

// Writes one dataset directory per task under cfg.data_dir (task_<id>/) and
// prints each manifest digest. Refuses to overwrite non-empty directories
// unless force is set.
void cmd_gen(const config::RunConfig& cfg, bool force, std::ostream& out);

// Executes the sequential protocol and writes the run directory: resolved
// config echo, final checkpoint, task matrix, metrics.json, task reports,
// per-step loss CSV and the stage-layout accuracy table. Returns the result
// for in-process callers.
continual::ProtocolResult cmd_train(const config::RunConfig& cfg, std::ostream& out);

// Evaluates the run's final checkpoint under the 4 perturbation kinds at 5
// intensity levels on every task's test split; writes robustness.csv (rows
// kind,level, columns per task plus average AUC) plus a monotonicity
// diagnostic listing. Cells may be evaluated by FD2CL_THREADS workers.
void cmd_robust(const config::RunConfig& cfg, const std::filesystem::path& run_dir,
                std::ostream& out);

// Merges metrics.json files from run directories into a side-by-side CSV
// (sorted by AA descending) and a plain-text summary on `out`.
void cmd_report(const std::vector<std::filesystem::path>& run_dirs, std::ostream& out,
                const std::filesystem::path& csv_path = {});

}  // namespace fd2cl::runner

#endif
