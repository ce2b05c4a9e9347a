#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "stsm/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitShape = 3;

struct CommonArgs {
    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "experiment config file (key=value lines)")
        ->required();
    cmd->add_option("--out", args.out_dir, "output directory (overrides config)");
    cmd->add_option("--seed", args.seed, "seed (overrides config)");
}

stsm::ExperimentConfig load_config(const CommonArgs& args) {
    stsm::ExperimentConfig cfg = stsm::parse_experiment_config(args.config_path);
    if (args.out_dir) cfg.out_dir = *args.out_dir;
    if (args.seed) cfg.seed = *args.seed;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef _OPENMP
    // Keep the default worker count modest; OMP_NUM_THREADS still wins.
    if (!std::getenv("OMP_NUM_THREADS")) {
        omp_set_num_threads(std::min(8, omp_get_max_threads()));
    }
#endif

    CLI::App app{"spatio-temporal channel-shift experiments"};
    app.require_subcommand(1);

    CommonArgs train_args, alpha_args, pattern_args, cost_args, bench_args;
    CLI::App* train = app.add_subcommand("train", "train on the synthetic motion task");
    add_common(train, train_args);
    CLI::App* sweep_alpha =
        app.add_subcommand("sweep-alpha", "train once per shifted-fraction value");
    add_common(sweep_alpha, alpha_args);
    CLI::App* sweep_pattern = app.add_subcommand("sweep-pattern", "train once per shift pattern");
    add_common(sweep_pattern, pattern_args);
    CLI::App* cost = app.add_subcommand("cost", "print the multiply-add/parameter report");
    add_common(cost, cost_args);
    CLI::App* bench =
        app.add_subcommand("bench-shift", "time the shift implementations against the reference");
    add_common(bench, bench_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            const stsm::ExperimentConfig cfg = load_config(train_args);
            const stsm::RunRecord record = stsm::cmd_train(cfg, &std::cout);
            std::cout << "final_accuracy " << record.final_accuracy << "\n";
        } else if (sweep_alpha->parsed()) {
            std::cout << stsm::cmd_sweep_alpha(load_config(alpha_args), &std::cout);
        } else if (sweep_pattern->parsed()) {
            std::cout << stsm::cmd_sweep_pattern(load_config(pattern_args), &std::cout);
        } else if (cost->parsed()) {
            stsm::cmd_cost(load_config(cost_args), &std::cout);
        } else if (bench->parsed()) {
            stsm::cmd_bench_shift(load_config(bench_args), &std::cout);
        }
    } catch (const stsm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const stsm::FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const stsm::ShapeError& e) {
        std::cerr << "shape error: " << e.what() << "\n";
        return kExitShape;
    } catch (const stsm::ContractError& e) {
        std::cerr << "contract error: " << e.what() << "\n";
        return kExitShape;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
