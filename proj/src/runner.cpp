#include "fd2cl/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include "fd2cl/checkpoint.hpp"
#include "fd2cl/metrics.hpp"

namespace fd2cl::runner {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path task_dir(const config::RunConfig& cfg, const synth::TaskSpec& spec) {
    return fs::path(cfg.data_dir) / ("task_" + std::to_string(spec.task_id));
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

std::string fmt(double v) {
    std::ostringstream ss;
    ss << std::setprecision(17) << v;
    return ss.str();
}

json task_matrix_json(const metrics::TaskMatrix& m) {
    json rows = json::array();
    for (const auto& r : m.rows()) rows.push_back(r);
    return json{{"tasks", m.tasks()}, {"rows", rows}};
}

std::string stage_table_csv(const std::string& method, const metrics::TaskMatrix& m) {
    const int t = m.tasks();
    std::ostringstream ss;
    ss << "method,stage";
    for (int i = 0; i < t; ++i) ss << ",task_" << i;
    ss << ",avg\n";
    for (int stage = 0; stage < t; ++stage) {
        ss << method << ",task" << (stage + 1);
        double sum = 0.0;
        for (int i = 0; i < t; ++i) {
            if (i <= stage) {
                ss << ',' << fmt(m.at(stage, i));
                sum += m.at(stage, i);
            } else {
                ss << ",-";
            }
        }
        ss << ',' << fmt(sum / (stage + 1)) << '\n';
    }
    return ss.str();
}

int worker_count(std::size_t cells) {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
    if (const char* env = std::getenv("FD2CL_THREADS")) {
        const int cap = std::atoi(env);
        if (cap > 0) n = std::min(n, cap);
    }
    return std::max(1, std::min<int>(n, static_cast<int>(cells)));
}

}  // namespace

void cmd_gen(const config::RunConfig& cfg, bool force, std::ostream& out) {
    for (const auto& spec : cfg.tasks) {
        const fs::path dir = task_dir(cfg, spec);
        if (fs::exists(dir) && !fs::is_empty(dir) && !force)
            throw ConfigError("gen: " + dir.string() +
                              " exists and is not empty (use --force to overwrite)");
        synth::Dataset ds = synth::generate_dataset(spec);
        synth::write_dataset(ds, dir);

        std::ifstream mf(dir / "manifest.json");
        json manifest;
        mf >> manifest;
        out << dir.string() << ": samples=" << manifest.at("samples").get<std::uint64_t>()
            << " crc32=" << manifest.at("crc32").get<std::uint32_t>() << "\n";
    }
}

continual::ProtocolResult cmd_train(const config::RunConfig& cfg, std::ostream& out) {
    std::vector<synth::Dataset> tasks;
    for (const auto& spec : cfg.tasks) {
        const fs::path dir = task_dir(cfg, spec);
        if (!fs::exists(dir / "data.bin"))
            throw DataError("train: missing dataset directory " + dir.string() +
                            " (run gen first)");
        tasks.push_back(synth::read_dataset(dir));
    }

    const fs::path run_dir(cfg.out_dir);
    fs::create_directories(run_dir);
    write_text(run_dir / "config.json", config::to_json(cfg).dump(2) + "\n");

    std::ofstream log(run_dir / "run.log", std::ios::trunc);
    const auto t0 = std::chrono::steady_clock::now();

    std::ostringstream loss_csv;
    loss_csv << "step,task,epoch,bce,ewc,orth,align,total\n";

    model::ModelState m = model::ModelState::init(cfg.model, cfg.seed);
    continual::ProtocolResult pr = continual::run_protocol(m, tasks, cfg, &loss_csv);

    write_text(run_dir / "train_log.csv", loss_csv.str());
    model::save_checkpoint(m, run_dir / "checkpoints" / "final.fd2cl");
    write_text(run_dir / "task_matrix.json", task_matrix_json(pr.matrix).dump(2) + "\n");

    json reports = json::array();
    for (const auto& r : pr.reports) reports.push_back(continual::task_report_to_json(r));
    write_text(run_dir / "reports.json", reports.dump(2) + "\n");

    const double aa = metrics::average_accuracy(pr.matrix);
    const double af = metrics::average_forgetting(pr.matrix);
    double auc_avg = 0.0;
    for (double a : pr.final_aucs) auc_avg += a;
    auc_avg /= static_cast<double>(pr.final_aucs.size());

    json metrics_doc{
        {"schema", 1},
        {"method", cfg.method_label()},
        {"seed", cfg.seed},
        {"aa", aa},
        {"af", af},
        {"auc", pr.final_aucs},
        {"auc_avg", auc_avg},
        {"thresholds", pr.thresholds},
        {"task_matrix", task_matrix_json(pr.matrix)},
    };
    write_text(run_dir / "metrics.json", metrics_doc.dump(2) + "\n");
    write_text(run_dir / "stage_table.csv", stage_table_csv(cfg.method_label(), pr.matrix));

    const auto dt = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    log << "train completed in " << dt << " ms\n";

    out << "run " << cfg.method_label() << " seed " << cfg.seed << ": AA=" << aa
        << " AF=" << af << " AUC=" << auc_avg << "\n";
    return pr;
}

void cmd_robust(const config::RunConfig& cfg, const std::filesystem::path& run_dir,
                std::ostream& out) {
    const fs::path ckpt = run_dir / "checkpoints" / "final.fd2cl";
    if (!fs::exists(ckpt)) throw DataError("robust: missing checkpoint " + ckpt.string());
    model::ModelState m = model::load_checkpoint(ckpt);

    std::vector<synth::Dataset> tasks;
    for (const auto& spec : cfg.tasks) {
        const fs::path dir = task_dir(cfg, spec);
        if (!fs::exists(dir / "data.bin"))
            throw DataError("robust: missing dataset directory " + dir.string());
        tasks.push_back(synth::read_dataset(dir));
    }

    const synth::PerturbKind kinds[4] = {
        synth::PerturbKind::BlockDropout, synth::PerturbKind::GridShuffle,
        synth::PerturbKind::GaussianNoise, synth::PerturbKind::MedianBlur};
    constexpr int kLevels = 5;
    const std::size_t t_count = tasks.size();

    struct Cell {
        int kind, level, task;
    };
    std::vector<Cell> cells;
    for (int k = 0; k < 4; ++k)
        for (int level = 0; level < kLevels; ++level)
            for (std::size_t task = 0; task < t_count; ++task)
                cells.push_back({k, level, static_cast<int>(task)});
    std::vector<double> aucs(cells.size(), 0.0);

    auto eval_cell = [&](const Cell& c) -> double {
        const synth::Dataset& ds = tasks[static_cast<std::size_t>(c.task)];
        const auto idx = ds.indices_of(synth::Split::Test);
        synth::Dataset perturbed;
        perturbed.spec = ds.spec;
        for (std::size_t pos = 0; pos < idx.size(); ++pos) {
            const auto& s = ds.samples[static_cast<std::size_t>(idx[pos])];
            synth::Sample p;
            // Per-sample seed fixed by (run seed, task, position) so results
            // do not depend on worker scheduling.
            const std::uint64_t seed =
                cfg.seed ^ (static_cast<std::uint64_t>(c.task) << 32) ^ pos;
            p.image = synth::perturb(s.image, kinds[c.kind], c.level, seed);
            p.label = s.label;
            p.split = static_cast<std::uint8_t>(synth::Split::Test);
            perturbed.samples.push_back(std::move(p));
        }
        const auto scores = continual::eval_scores(m, perturbed, synth::Split::Test,
                                                   cfg.optim.batch, !cfg.ablation.no_freq);
        const auto labels = continual::split_labels(perturbed, synth::Split::Test);
        return metrics::auc(scores, labels);
    };

    const int workers = worker_count(cells.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int wkr = 0; wkr < workers; ++wkr) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= cells.size()) return;
                aucs[i] = eval_cell(cells[i]);
            }
        });
    }
    for (auto& th : pool) th.join();

    std::ostringstream csv;
    csv << "kind,level";
    for (std::size_t task = 0; task < t_count; ++task) csv << ",task_" << task;
    csv << ",avg\n";
    std::ostringstream notes;
    std::vector<double> prev_avg(4, -1.0);
    std::size_t at = 0;
    for (int k = 0; k < 4; ++k) {
        for (int level = 0; level < kLevels; ++level) {
            csv << synth::to_string(kinds[k]) << ',' << level;
            double sum = 0.0;
            for (std::size_t task = 0; task < t_count; ++task, ++at) {
                csv << ',' << fmt(aucs[at]);
                sum += aucs[at];
            }
            const double avg = sum / static_cast<double>(t_count);
            csv << ',' << fmt(avg) << '\n';
            if (level > 0 && prev_avg[k] >= 0.0 && avg > prev_avg[k] + 0.05)
                notes << "non-monotone: " << synth::to_string(kinds[k]) << " level " << level
                      << " avg AUC " << fmt(avg) << " exceeds level " << (level - 1) << " ("
                      << fmt(prev_avg[k]) << ") by more than 0.05\n";
            prev_avg[k] = avg;
        }
    }
    write_text(run_dir / "robustness.csv", csv.str());
    const std::string note_str =
        notes.str().empty() ? "monotonicity: no level increased avg AUC by more than 0.05\n"
                            : notes.str();
    write_text(run_dir / "robustness_notes.txt", note_str);
    out << "robust: wrote " << (run_dir / "robustness.csv").string() << "\n" << note_str;
}

void cmd_report(const std::vector<std::filesystem::path>& run_dirs, std::ostream& out,
                const std::filesystem::path& csv_path) {
    if (run_dirs.empty()) throw ConfigError("report: at least one run directory required");
    struct Row {
        std::string method;
        std::uint64_t seed;
        double aa, af, auc_avg;
    };
    std::vector<Row> rows;
    for (const auto& dir : run_dirs) {
        std::ifstream in(dir / "metrics.json");
        if (!in) throw DataError("report: missing metrics.json in " + dir.string());
        json j;
        try {
            in >> j;
        } catch (const json::exception&) {
            throw ConfigError("report: invalid metrics.json in " + dir.string());
        }
        if (!j.contains("schema") || j.at("schema").get<int>() != 1)
            throw ConfigError("report: incompatible metrics schema in run " + dir.string());
        rows.push_back({j.at("method").get<std::string>(), j.at("seed").get<std::uint64_t>(),
                        j.at("aa").get<double>(), j.at("af").get<double>(),
                        j.at("auc_avg").get<double>()});
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.aa > b.aa; });

    std::ostringstream csv;
    csv << "method,seed,aa,af,auc_avg\n";
    for (const auto& r : rows)
        csv << r.method << ',' << r.seed << ',' << fmt(r.aa) << ',' << fmt(r.af) << ','
            << fmt(r.auc_avg) << '\n';
    if (!csv_path.empty()) write_text(csv_path, csv.str());

    out << csv.str();
    out << "\nsummary (by AA):\n";
    for (const auto& r : rows) {
        out << "  " << std::left << std::setw(24) << r.method << " AA=" << std::setprecision(4)
            << r.aa << " AF=" << r.af << " AUC=" << r.auc_avg << "\n";
    }
}

}  // namespace fd2cl::runner
