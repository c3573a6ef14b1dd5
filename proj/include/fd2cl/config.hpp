#ifndef FD2CL_CONFIG_HPP
#define FD2CL_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "fd2cl/model.hpp"
#include "fd2cl/synthdata.hpp"

namespace fd2cl::config {

struct OptimConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int batch = 32;
    int epochs_per_task = 25;
};

struct LossConfig {
    double lambda_ewc = 22000.0;  // base coefficient, ramped within each task
    double lambda_orth = 0.1;
    double lambda_align = 0.5;
    double tau_start = 0.2;  // projection threshold schedule per task
    double tau_end = 0.1;
};

struct Ablation {
    bool no_ewc = false;
    bool no_freq = false;
    bool no_align = false;
    bool no_ogc = false;
};

enum class FisherMode { RunningMean, LatestOnly };

struct RunConfig {
    int version = 1;
    std::uint64_t seed = 1;
    model::ModelDims model;
    OptimConfig optim;
    LossConfig loss;
    Ablation ablation;
    FisherMode fisher_mode = FisherMode::RunningMean;
    std::string data_dir = "data";
    std::string out_dir = "runs/default";
    std::vector<synth::TaskSpec> tasks;

    std::string method_label() const;
};

// Strict parse: unknown keys anywhere in the document are rejected.
RunConfig parse_config(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);
RunConfig load_config_file(const std::filesystem::path& path);

// The default 4-task forgery-type-incremental configuration: one shared real
// generator, a different fake artifact family per task.
RunConfig default_protocol2(std::uint64_t seed);

}  // namespace fd2cl::config

#endif
