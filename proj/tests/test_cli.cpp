#include <cstdlib>
#include <doctest.h>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fd2cl/runner.hpp"

using namespace fd2cl;
namespace fs = std::filesystem;

namespace {

config::RunConfig small_cli_config(const fs::path& root) {
    config::RunConfig cfg = config::default_protocol2(21);
    cfg.model.d = 8;
    cfg.model.h1 = 16;
    cfg.model.h2 = 8;
    cfg.model.rank = 2;
    cfg.optim.epochs_per_task = 2;
    cfg.tasks.resize(2);
    for (auto& t : cfg.tasks) t.counts = {64, 32, 32};
    cfg.data_dir = (root / "data").string();
    cfg.out_dir = (root / "run").string();
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("config parsing is strict") {
    auto base = config::to_json(config::default_protocol2(3));

    SUBCASE("round-trip") {
        auto cfg = config::parse_config(base);
        CHECK(cfg.seed == 3);
        CHECK(cfg.tasks.size() == 4);
        CHECK(config::to_json(cfg) == base);
    }

    SUBCASE("unknown top-level key rejected") {
        auto j = base;
        j["learning_rate"] = 0.1;
        CHECK_THROWS_AS((void)config::parse_config(j), ConfigError);
    }

    SUBCASE("unknown nested key rejected") {
        auto j = base;
        j["optim"]["momentum"] = 0.9;
        CHECK_THROWS_AS((void)config::parse_config(j), ConfigError);
    }

    SUBCASE("invalid artifact kind names the field") {
        auto j = base;
        j["tasks"][1]["fake"]["kind"] = "Invented";
        try {
            (void)config::parse_config(j);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("Invented") != std::string::npos);
        }
    }

    SUBCASE("bad fisher mode rejected") {
        auto j = base;
        j["fisher_mode"] = "sometimes";
        CHECK_THROWS_AS((void)config::parse_config(j), ConfigError);
    }

    SUBCASE("empty task list rejected") {
        auto j = base;
        j["tasks"] = nlohmann::json::array();
        CHECK_THROWS_AS((void)config::parse_config(j), ConfigError);
    }
}

TEST_CASE("gen, train, robust, report pipeline") {
    const fs::path root = fs::temp_directory_path() / "fd2cl_cli_test";
    fs::remove_all(root);
    auto cfg = small_cli_config(root);

    std::ostringstream out;
    runner::cmd_gen(cfg, false, out);
    CHECK(fs::exists(fs::path(cfg.data_dir) / "task_0" / "manifest.json"));
    CHECK(fs::exists(fs::path(cfg.data_dir) / "task_1" / "data.bin"));
    CHECK(out.str().find("crc32=") != std::string::npos);

    SUBCASE("gen refuses to overwrite without force, allows with force") {
        std::ostringstream o2;
        CHECK_THROWS_AS(runner::cmd_gen(cfg, false, o2), ConfigError);
        const std::string before = slurp(fs::path(cfg.data_dir) / "task_0" / "data.bin");
        runner::cmd_gen(cfg, true, o2);
        CHECK(slurp(fs::path(cfg.data_dir) / "task_0" / "data.bin") == before);
    }

    SUBCASE("train writes the full run directory and is byte-deterministic") {
        std::ostringstream o3;
        runner::cmd_train(cfg, o3);
        const fs::path run(cfg.out_dir);
        for (const char* f : {"config.json", "metrics.json", "task_matrix.json",
                              "reports.json", "train_log.csv", "stage_table.csv"})
            CHECK(fs::exists(run / f));
        CHECK(fs::exists(run / "checkpoints" / "final.fd2cl"));

        const std::string metrics1 = slurp(run / "metrics.json");
        const std::string matrix1 = slurp(run / "task_matrix.json");

        auto cfg2 = cfg;
        cfg2.out_dir = (root / "run2").string();
        std::ostringstream o4;
        runner::cmd_train(cfg2, o4);
        CHECK(slurp(fs::path(cfg2.out_dir) / "metrics.json") == metrics1);
        CHECK(slurp(fs::path(cfg2.out_dir) / "task_matrix.json") == matrix1);

        SUBCASE("robust emits the complete grid with identity level 0") {
            std::ostringstream o5;
            runner::cmd_robust(cfg, fs::path(cfg.out_dir), o5);
            const std::string csv = slurp(run / "robustness.csv");
            std::istringstream lines(csv);
            std::string line;
            std::getline(lines, line);
            CHECK(line == "kind,level,task_0,task_1,avg");
            int rows = 0;
            std::vector<std::string> level0;
            while (std::getline(lines, line)) {
                ++rows;
                if (line.find(",0,") != std::string::npos) level0.push_back(line);
            }
            CHECK(rows == 20);  // 4 kinds x 5 levels
            REQUIRE(level0.size() == 4);
            // level-0 AUC columns equal across kinds (identity perturbation)
            const std::string suffix0 = level0[0].substr(level0[0].find(",0,"));
            for (const auto& l : level0) CHECK(l.substr(l.find(",0,")) == suffix0);

            // worker count must not affect the output bytes
            setenv("FD2CL_THREADS", "1", 1);
            std::ostringstream o5b;
            runner::cmd_robust(cfg, fs::path(cfg.out_dir), o5b);
            unsetenv("FD2CL_THREADS");
            CHECK(slurp(run / "robustness.csv") == csv);
        }

        SUBCASE("report merges runs sorted by AA") {
            std::ostringstream o6;
            runner::cmd_report({fs::path(cfg.out_dir), fs::path(cfg2.out_dir)}, o6);
            const std::string text = o6.str();
            CHECK(text.find("method,seed,aa,af,auc_avg") != std::string::npos);
            CHECK(text.find("summary (by AA):") != std::string::npos);
        }

        SUBCASE("report rejects incompatible schemas naming the run") {
            const fs::path bad = root / "bad_run";
            fs::create_directories(bad);
            std::ofstream(bad / "metrics.json") << R"({"schema": 99})";
            try {
                std::ostringstream o7;
                runner::cmd_report({bad}, o7);
                FAIL("expected ConfigError");
            } catch (const ConfigError& e) {
                CHECK(std::string(e.what()).find("bad_run") != std::string::npos);
            }
        }
    }

    SUBCASE("robust without a checkpoint is a missing-input error") {
        auto cfg3 = cfg;
        cfg3.out_dir = (root / "no_such_run").string();
        std::ostringstream o8;
        CHECK_THROWS_AS(runner::cmd_robust(cfg3, fs::path(cfg3.out_dir), o8), DataError);
    }

    fs::remove_all(root);
}

#ifdef FD2CL_BIN
TEST_CASE("binary exit codes") {
    const fs::path root = fs::temp_directory_path() / "fd2cl_exit_test";
    fs::remove_all(root);
    fs::create_directories(root);

    auto run_cmd = [&](const std::string& args) {
        const std::string cmd = std::string(FD2CL_BIN) + " " + args + " > /dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        return WEXITSTATUS(status);
    };

    // usage error: bad config file
    {
        std::ofstream(root / "bad.json") << "{\"version\": 1, \"bogus\": true}";
        CHECK(run_cmd("gen --config " + (root / "bad.json").string()) == 1);
    }
    // missing input: train without datasets
    {
        auto cfg = small_cli_config(root / "fresh");
        std::ofstream(root / "ok.json") << config::to_json(cfg).dump(2);
        CHECK(run_cmd("train --config " + (root / "ok.json").string()) == 2);
        // robust without checkpoint
        CHECK(run_cmd("robust --config " + (root / "ok.json").string() + " --run " +
                      (root / "nope").string()) == 2);
    }
    fs::remove_all(root);
}
#endif
