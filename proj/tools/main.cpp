#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "mmcaps/errors.hpp"
#include "runconfig.hpp"

int main(int argc, char** argv) {
    CLI::App app{"multimodal capsule embedding tool"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "run";
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::vector<std::string> overrides;
    CLI::App* train = app.add_subcommand("train", "train a model and write a checkpoint");
    train->add_option("--config", config_path, "JSON run config");
    train->add_option("--seed", seed, "override every RNG seed")
        ->each([&](const std::string&) { seed_given = true; });
    train->add_option("--out", out_dir, "output directory")->capture_default_str();
    train->add_option("--set", overrides, "extra key=value config overrides");

    std::string checkpoint_path, data_dir, modalities = "vt", task = "retrieval", report_path;
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a data directory");
    eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval->add_option("--data", data_dir, "directory holding test_*.mmcf files")->required();
    eval->add_option("--modalities", modalities, "vt or vat")->capture_default_str();
    eval->add_option("--task", task, "retrieval or localization")->capture_default_str();
    eval->add_option("--out", report_path, "also write the JSON report here");

    std::string grid_path, bench_out = "bench.csv";
    CLI::App* bench = app.add_subcommand("bench", "run a timing grid and write CSV + JSON");
    bench->add_option("--grid", grid_path, "JSON grid file")->required();
    bench->add_option("--out", bench_out, "CSV output path")->capture_default_str();

    std::string ins_checkpoint, ins_data;
    long capsule = -1;
    std::size_t top_n = 5;
    CLI::App* inspect = app.add_subcommand("inspect", "top activating clips per capsule");
    inspect->add_option("--checkpoint", ins_checkpoint, "checkpoint file")->required();
    inspect->add_option("--data", ins_data, "directory holding test_*.mmcf files")->required();
    inspect->add_option("--capsule", capsule, "capsule index; omit for all");
    inspect->add_option("--top", top_n, "clips per capsule")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (train->parsed()) {
            mmtool::RunConfig cfg = config_path.empty() ? mmtool::profile_defaults("desk")
                                                        : mmtool::load_run_config(config_path);
            for (const std::string& kv : overrides) mmtool::apply_override(cfg, kv);
            if (seed_given) mmtool::set_seed(cfg, seed);
            mmtool::cmd_train(cfg, out_dir);
        } else if (eval->parsed()) {
            mmtool::cmd_eval(checkpoint_path, data_dir, modalities, task, report_path);
        } else if (bench->parsed()) {
            mmtool::cmd_bench(grid_path, bench_out);
        } else if (inspect->parsed()) {
            mmtool::cmd_inspect(ins_checkpoint, ins_data, capsule, top_n);
        }
    } catch (const mmcaps::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
