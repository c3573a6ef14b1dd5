#include "fd2cl/config.hpp"

#include <fstream>
#include <set>

namespace fd2cl::config {

using json = nlohmann::json;

namespace {

void require_keys(const json& j, const std::set<std::string>& allowed,
                  const std::string& where) {
    if (!j.is_object()) throw ConfigError("config: " + where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key()))
            throw ConfigError("config: unknown key \"" + it.key() + "\" in " + where);
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

synth::TaskSpec parse_task(const json& j, int pos) {
    const std::string where = "tasks[" + std::to_string(pos) + "]";
    require_keys(j, {"task_id", "real", "fake", "counts", "fake_budget", "seed"}, where);
    synth::TaskSpec s;
    s.task_id = get_or(j, "task_id", pos);
    if (j.contains("real")) {
        require_keys(j.at("real"), {"seed", "blobs", "smoothness"}, where + ".real");
        s.real.seed = get_or<std::uint64_t>(j.at("real"), "seed", s.real.seed);
        s.real.blobs = get_or(j.at("real"), "blobs", s.real.blobs);
        s.real.smoothness = get_or(j.at("real"), "smoothness", s.real.smoothness);
    }
    if (j.contains("fake")) {
        require_keys(j.at("fake"), {"kind", "strength", "seed"}, where + ".fake");
        if (!j.at("fake").contains("kind"))
            throw ConfigError("config: " + where + ".fake.kind is required");
        s.fake.kind = synth::artifact_from_string(j.at("fake").at("kind").get<std::string>());
        s.fake.strength = get_or(j.at("fake"), "strength", s.fake.strength);
        s.fake.seed = get_or<std::uint64_t>(j.at("fake"), "seed", s.fake.seed);
    } else {
        throw ConfigError("config: " + where + ".fake is required");
    }
    if (j.contains("counts")) {
        require_keys(j.at("counts"), {"train", "val", "test"}, where + ".counts");
        s.counts.train = get_or(j.at("counts"), "train", s.counts.train);
        s.counts.val = get_or(j.at("counts"), "val", s.counts.val);
        s.counts.test = get_or(j.at("counts"), "test", s.counts.test);
    }
    s.fake_budget = get_or(j, "fake_budget", 0);
    s.seed = get_or<std::uint64_t>(j, "seed", static_cast<std::uint64_t>(1000 + pos));
    return s;
}

json task_to_json(const synth::TaskSpec& s) {
    return json{
        {"task_id", s.task_id},
        {"real", {{"seed", s.real.seed}, {"blobs", s.real.blobs}, {"smoothness", s.real.smoothness}}},
        {"fake",
         {{"kind", synth::to_string(s.fake.kind)}, {"strength", s.fake.strength}, {"seed", s.fake.seed}}},
        {"counts",
         {{"train", s.counts.train}, {"val", s.counts.val}, {"test", s.counts.test}}},
        {"fake_budget", s.fake_budget},
        {"seed", s.seed},
    };
}

}  // namespace

std::string RunConfig::method_label() const {
    if (ablation.no_ewc && ablation.no_ogc && ablation.no_freq) return "naive_no_freq";
    if (ablation.no_ewc && ablation.no_ogc) return "naive";
    std::string label = "full";
    if (ablation.no_ewc) label = "no_ewc";
    if (ablation.no_freq) label += "_no_freq";
    if (ablation.no_align) label += "_no_align";
    if (ablation.no_ogc) label += "_no_ogc";
    return label;
}

RunConfig parse_config(const json& j) {
    require_keys(j, {"version", "seed", "model", "optim", "loss", "ablation", "fisher_mode",
                     "data_dir", "out_dir", "tasks"},
                 "top level");
    RunConfig cfg;
    cfg.version = get_or(j, "version", 1);
    if (cfg.version != 1)
        throw ConfigError("config: unsupported version " + std::to_string(cfg.version));
    cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);

    if (j.contains("model")) {
        const json& m = j.at("model");
        require_keys(m, {"d", "h1", "h2", "rank", "alpha", "image_c", "image_h", "image_w"},
                     "model");
        cfg.model.d = get_or(m, "d", cfg.model.d);
        cfg.model.h1 = get_or(m, "h1", cfg.model.h1);
        cfg.model.h2 = get_or(m, "h2", cfg.model.h2);
        cfg.model.rank = get_or(m, "rank", cfg.model.rank);
        cfg.model.alpha = get_or(m, "alpha", cfg.model.alpha);
        cfg.model.c = get_or(m, "image_c", cfg.model.c);
        cfg.model.h = get_or(m, "image_h", cfg.model.h);
        cfg.model.w = get_or(m, "image_w", cfg.model.w);
    }
    if (j.contains("optim")) {
        const json& o = j.at("optim");
        require_keys(o, {"lr", "beta1", "beta2", "eps", "batch", "epochs_per_task"}, "optim");
        cfg.optim.lr = get_or(o, "lr", cfg.optim.lr);
        cfg.optim.beta1 = get_or(o, "beta1", cfg.optim.beta1);
        cfg.optim.beta2 = get_or(o, "beta2", cfg.optim.beta2);
        cfg.optim.eps = get_or(o, "eps", cfg.optim.eps);
        cfg.optim.batch = get_or(o, "batch", cfg.optim.batch);
        cfg.optim.epochs_per_task = get_or(o, "epochs_per_task", cfg.optim.epochs_per_task);
        if (cfg.optim.batch < 2) throw ConfigError("config: optim.batch must be >= 2");
        if (cfg.optim.epochs_per_task < 1)
            throw ConfigError("config: optim.epochs_per_task must be >= 1");
    }
    if (j.contains("loss")) {
        const json& l = j.at("loss");
        require_keys(l, {"lambda_ewc", "lambda_orth", "lambda_align", "tau_start", "tau_end"},
                     "loss");
        cfg.loss.lambda_ewc = get_or(l, "lambda_ewc", cfg.loss.lambda_ewc);
        cfg.loss.lambda_orth = get_or(l, "lambda_orth", cfg.loss.lambda_orth);
        cfg.loss.lambda_align = get_or(l, "lambda_align", cfg.loss.lambda_align);
        cfg.loss.tau_start = get_or(l, "tau_start", cfg.loss.tau_start);
        cfg.loss.tau_end = get_or(l, "tau_end", cfg.loss.tau_end);
    }
    if (j.contains("ablation")) {
        const json& a = j.at("ablation");
        require_keys(a, {"no_ewc", "no_freq", "no_align", "no_ogc"}, "ablation");
        cfg.ablation.no_ewc = get_or(a, "no_ewc", false);
        cfg.ablation.no_freq = get_or(a, "no_freq", false);
        cfg.ablation.no_align = get_or(a, "no_align", false);
        cfg.ablation.no_ogc = get_or(a, "no_ogc", false);
    }
    if (j.contains("fisher_mode")) {
        const std::string mode = j.at("fisher_mode").get<std::string>();
        if (mode == "running-mean")
            cfg.fisher_mode = FisherMode::RunningMean;
        else if (mode == "latest-only")
            cfg.fisher_mode = FisherMode::LatestOnly;
        else
            throw ConfigError("config: fisher_mode must be running-mean or latest-only");
    }
    cfg.data_dir = get_or<std::string>(j, "data_dir", cfg.data_dir);
    cfg.out_dir = get_or<std::string>(j, "out_dir", cfg.out_dir);

    if (!j.contains("tasks") || !j.at("tasks").is_array() || j.at("tasks").empty())
        throw ConfigError("config: tasks must be a non-empty array");
    int pos = 0;
    for (const auto& t : j.at("tasks")) cfg.tasks.push_back(parse_task(t, pos++));
    return cfg;
}

nlohmann::json to_json(const RunConfig& cfg) {
    json tasks = json::array();
    for (const auto& t : cfg.tasks) tasks.push_back(task_to_json(t));
    return json{
        {"version", cfg.version},
        {"seed", cfg.seed},
        {"model",
         {{"d", cfg.model.d},
          {"h1", cfg.model.h1},
          {"h2", cfg.model.h2},
          {"rank", cfg.model.rank},
          {"alpha", cfg.model.alpha},
          {"image_c", cfg.model.c},
          {"image_h", cfg.model.h},
          {"image_w", cfg.model.w}}},
        {"optim",
         {{"lr", cfg.optim.lr},
          {"beta1", cfg.optim.beta1},
          {"beta2", cfg.optim.beta2},
          {"eps", cfg.optim.eps},
          {"batch", cfg.optim.batch},
          {"epochs_per_task", cfg.optim.epochs_per_task}}},
        {"loss",
         {{"lambda_ewc", cfg.loss.lambda_ewc},
          {"lambda_orth", cfg.loss.lambda_orth},
          {"lambda_align", cfg.loss.lambda_align},
          {"tau_start", cfg.loss.tau_start},
          {"tau_end", cfg.loss.tau_end}}},
        {"ablation",
         {{"no_ewc", cfg.ablation.no_ewc},
          {"no_freq", cfg.ablation.no_freq},
          {"no_align", cfg.ablation.no_align},
          {"no_ogc", cfg.ablation.no_ogc}}},
        {"fisher_mode",
         cfg.fisher_mode == FisherMode::RunningMean ? "running-mean" : "latest-only"},
        {"data_dir", cfg.data_dir},
        {"out_dir", cfg.out_dir},
        {"tasks", tasks},
    };
}

RunConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config file is not valid JSON: " + std::string(e.what()));
    }
    return parse_config(j);
}

RunConfig default_protocol2(std::uint64_t seed) {
    RunConfig cfg;
    cfg.seed = seed;
    const std::uint64_t real_seed = 77;  // shared: only the fake domain changes
    const synth::ArtifactKind kinds[4] = {
        synth::ArtifactKind::HighFreqCheckerboard,
        synth::ArtifactKind::PhaseJitter,
        synth::ArtifactKind::BlendBoundary,
        synth::ArtifactKind::SpectralSlope,
    };
    const double strengths[4] = {0.05, 1.0, 1.0, 2.0};
    for (int k = 0; k < 4; ++k) {
        synth::TaskSpec t;
        t.task_id = k;
        t.real.seed = real_seed;
        t.real.blobs = 3;
        t.real.smoothness = 0.85;
        t.fake.kind = kinds[k];
        t.fake.strength = strengths[k];
        t.fake.seed = 9000 + static_cast<std::uint64_t>(k);
        t.counts = {192, 64, 64};
        t.seed = 1000 + static_cast<std::uint64_t>(k);
        cfg.tasks.push_back(t);
    }
    return cfg;
}

}  // namespace fd2cl::config
