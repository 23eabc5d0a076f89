// Command-line front end: `run` executes a configured experiment, `optimize`
// prints optimal censoring policies for a list of energy budgets.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <omp.h>

#include "CLI11.hpp"
#include "cqcd/censoring.hpp"
#include "cqcd/error.hpp"
#include "cqcd/experiments.hpp"

namespace {

constexpr const char* kOutDirEnv = "CQCD_OUT_DIR";

int run_command(const std::string& config_path, std::string out_dir, const std::optional<std::uint64_t>& seed,
                int workers) {
    std::ifstream in(config_path);
    if (!in) {
        std::cerr << "error: cannot read config " << config_path << "\n";
        return 2;
    }
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();

    auto cfg = cqcd::parse_run_config(text);
    if (seed) cfg.base.seed = *seed;
    if (workers > 0) {
        cfg.base.workers = workers;
        omp_set_num_threads(workers);
    }
    if (out_dir.empty()) {
        const char* env = std::getenv(kOutDirEnv);
        out_dir = env && *env ? env : "out";
        out_dir += "/" + std::string(cqcd::to_string(cfg.experiment));
    }

    const auto report = cqcd::run_experiment(cfg, out_dir, config_path, text);
    for (const auto& f : report.files) std::cout << "wrote " << f.string() << "\n";
    std::printf("wall time %.2f s\n", report.wall_seconds);
    if (report.degraded) {
        for (const auto& d : report.diagnostics) std::cerr << "degraded: " << d << "\n";
        return 3;
    }
    return 0;
}

int optimize_command(const std::vector<double>& epsilons, double grid, double mu0, double mu1, double sigma) {
    const auto pair = cqcd::gaussian_mean_shift(mu0, mu1, sigma);
    const auto start = std::chrono::steady_clock::now();
    for (double eps : epsilons) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto policy = cqcd::optimize_policy(pair, eps, grid);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << cqcd::serialize(policy);
        std::printf("post_censoring_kl=%.12g\nwall_seconds=%.6f\n\n", cqcd::post_censoring_kl(policy, pair), secs);
    }
    const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("total_wall_seconds=%.6f\n", total);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quickest change detection with a censoring sensor"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run an experiment described by a JSON config");
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    int workers = 0;
    run->add_option("--config", config_path, "experiment config (JSON)")->required();
    run->add_option("--out", out_dir, std::string("output directory (default: $") + kOutDirEnv + "/<experiment>)");
    run->add_option("--seed", seed, "override the config seed");
    run->add_option("--workers", workers, "worker threads (0: OpenMP default)")->check(CLI::NonNegativeNumber);

    auto* opt = app.add_subcommand("optimize", "print the optimal censoring policy per energy budget");
    std::vector<double> epsilons;
    double grid = 1e-3;
    double mu0 = 0.0;
    double mu1 = 1.0;
    double sigma = 1.0;
    opt->add_option("--eps", epsilons, "energy budgets, comma separated")->required()->delimiter(',');
    opt->add_option("--grid", grid, "sweep spacing of the left endpoint")->check(CLI::PositiveNumber);
    opt->add_option("--mu0", mu0, "pre-change mean");
    opt->add_option("--mu1", mu1, "post-change mean");
    opt->add_option("--sigma", sigma, "common standard deviation")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return run_command(config_path, out_dir, seed, workers);
        return optimize_command(epsilons, grid, mu0, mu1, sigma);
    } catch (const cqcd::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
