#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fd2cl/runner.hpp"

namespace {

using fd2cl::config::RunConfig;

struct CommonOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

RunConfig resolve_config(const CommonOpts& opts) {
    RunConfig cfg = opts.config_path.empty()
                        ? fd2cl::config::default_protocol2(opts.seed_set ? opts.seed : 1)
                        : fd2cl::config::load_config_file(opts.config_path);
    if (opts.seed_set) cfg.seed = opts.seed;
    return cfg;
}

std::vector<std::size_t> parse_order(const std::string& order, std::size_t n_tasks) {
    std::vector<std::size_t> perm;
    std::stringstream ss(order);
    std::string tok;
    while (std::getline(ss, tok, ',')) perm.push_back(std::stoul(tok));
    if (perm.size() != n_tasks)
        throw fd2cl::ConfigError("--order must list each task index exactly once");
    std::vector<bool> seen(n_tasks, false);
    for (std::size_t i : perm) {
        if (i >= n_tasks || seen[i])
            throw fd2cl::ConfigError("--order must be a permutation of 0.." +
                                     std::to_string(n_tasks - 1));
        seen[i] = true;
    }
    return perm;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continual deepfake-detection experiment runner"};
    app.require_subcommand(1);

    CommonOpts common;
    bool force = false;
    std::string order;
    std::string out_dir_override;
    std::string run_dir;
    std::vector<std::string> report_dirs;
    std::string report_csv;
    bool no_ewc = false, no_freq = false, no_align = false, no_ogc = false, naive = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "JSON config file");
        sub->add_option("--seed", common.seed, "Override the config seed")
            ->each([&](const std::string&) { common.seed_set = true; });
    };

    CLI::App* gen = app.add_subcommand("gen", "Generate the per-task dataset directories");
    add_common(gen);
    gen->add_flag("--force", force, "Overwrite existing non-empty dataset directories");

    CLI::App* train = app.add_subcommand("train", "Run the sequential training protocol");
    add_common(train);
    train->add_option("--order", order, "Comma-separated task order permutation, e.g. 3,1,2,0");
    train->add_option("--out", out_dir_override, "Override the run output directory");
    train->add_flag("--no-ewc", no_ewc, "Disable the EWC penalty and Fisher estimation");
    train->add_flag("--no-freq", no_freq, "Feed the spatial view to all three branches");
    train->add_flag("--no-align", no_align, "Disable the anchor alignment loss");
    train->add_flag("--no-ogc", no_ogc, "Disable gradient projection and the cache");
    train->add_flag("--naive", naive, "Plain sequential fine-tuning (no EWC, no OGC)");

    CLI::App* robust = app.add_subcommand("robust", "Perturbation-grid AUC evaluation");
    add_common(robust);
    robust->add_option("--run", run_dir, "Run directory holding the trained checkpoint")
        ->required();

    CLI::App* report = app.add_subcommand("report", "Merge metrics from run directories");
    report->add_option("dirs", report_dirs, "Run directories")->required();
    report->add_option("--out", report_csv, "Also write the comparison CSV to this path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            RunConfig cfg = resolve_config(common);
            fd2cl::runner::cmd_gen(cfg, force, std::cout);
        } else if (train->parsed()) {
            RunConfig cfg = resolve_config(common);
            if (naive) {
                cfg.ablation.no_ewc = true;
                cfg.ablation.no_ogc = true;
            }
            if (no_ewc) cfg.ablation.no_ewc = true;
            if (no_freq) cfg.ablation.no_freq = true;
            if (no_align) cfg.ablation.no_align = true;
            if (no_ogc) cfg.ablation.no_ogc = true;
            if (!order.empty()) {
                const auto perm = parse_order(order, cfg.tasks.size());
                std::vector<fd2cl::synth::TaskSpec> reordered;
                for (std::size_t i : perm) reordered.push_back(cfg.tasks[i]);
                cfg.tasks = std::move(reordered);
            }
            if (!out_dir_override.empty()) cfg.out_dir = out_dir_override;
            fd2cl::runner::cmd_train(cfg, std::cout);
        } else if (robust->parsed()) {
            RunConfig cfg = resolve_config(common);
            fd2cl::runner::cmd_robust(cfg, run_dir, std::cout);
        } else if (report->parsed()) {
            std::vector<std::filesystem::path> dirs(report_dirs.begin(), report_dirs.end());
            fd2cl::runner::cmd_report(dirs, std::cout, report_csv);
        }
    } catch (const fd2cl::NumericalError& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return fd2cl::runner::kNumericalAbort;
    } catch (const fd2cl::FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return fd2cl::runner::kMissingInput;
    } catch (const fd2cl::DataError& e) {
        std::cerr << "missing or invalid input: " << e.what() << "\n";
        return fd2cl::runner::kMissingInput;
    } catch (const fd2cl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return fd2cl::runner::kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return fd2cl::runner::kUsage;
    }
    return fd2cl::runner::kOk;
}
