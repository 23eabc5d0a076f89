#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cqcd/experiments.hpp"
#include "json.hpp"

using namespace cqcd;
namespace fs = std::filesystem;

namespace {

std::string schema_message(const std::string& text) {
    try {
        parse_run_config(text);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::SchemaError);
        return e.what();
    }
    FAIL("config accepted: " << text);
    return {};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("cqcd_test_" + name);
    fs::remove_all(dir);
    return dir;
}

const char* kSmallSweep = R"({
  "experiment": "example1",
  "target_arl": 100,
  "runs": 100,
  "delay_runs": 200,
  "energy_runs": 2,
  "energy_horizon": 2000,
  "seed": 5
})";

}  // namespace

TEST_CASE("fnv1a reference values") {
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("named experiments resolve their defaults") {
    const auto e1 = parse_run_config(R"({"experiment": "example1"})");
    CHECK(e1.epsilons.size() == 10);
    CHECK(e1.policies == std::vector<PolicyChoice>{PolicyChoice::Censoring, PolicyChoice::Random});
    CHECK(e1.base.target_arl == 6500.0);
    const auto e2 = parse_run_config(R"({"experiment": "example2"})");
    CHECK(e2.policies[1] == PolicyChoice::DeCusum);
    const auto e3 = parse_run_config(R"({"experiment": "example3"})");
    CHECK(e3.base.epsilon == 0.1);
    CHECK(e3.trace.change_point == 20);
    CHECK(e3.trace.thresholds.at(PolicyChoice::Censoring) == 690.0);
    CHECK(e3.trace.thresholds.at(PolicyChoice::Random) == 101.0);
    CHECK(e3.trace.thresholds.at(PolicyChoice::DeCusum) == 98.0);
    const auto e4 = parse_run_config(R"({"experiment": "example4"})");
    CHECK(e4.base.detector == DetectorKind::Srp);
    CHECK(e4.base.target_arl == 1500.0);
    const auto custom = parse_run_config(
        R"({"experiment": "custom", "policy": "random", "epsilon": 0.25, "seed": 18446744073709551615,
            "pair": {"mu0": 1, "mu1": 2, "sigma": 0.5}, "threshold": 40})");
    CHECK(custom.base.policy == PolicyChoice::Random);
    CHECK(custom.base.epsilon == 0.25);
    CHECK(custom.base.seed == 18446744073709551615ULL);
    CHECK(custom.base.pair.sigma == 0.5);
    CHECK(*custom.threshold == 40.0);
}

TEST_CASE("schema errors name the offending key") {
    CHECK(schema_message(R"({"experiment": "example1", "epsilon": 1.5})").find("epsilon") != std::string::npos);
    CHECK(schema_message(R"({"experiment": "example1", "epsilons": [0.5, 0]})").find("epsilons") != std::string::npos);
    CHECK(schema_message(R"({"experiment": "example9"})").find("experiment") != std::string::npos);
    CHECK(schema_message(R"({"epsilon": 0.5})").find("experiment") != std::string::npos);
    CHECK(schema_message(R"({"experiment": "custom", "runs": 0})").find("runs") != std::string::npos);
    CHECK(schema_message(R"({"experiment": "custom", "runs": 2.5})").find("runs") != std::string::npos);
    CHECK(schema_message(R"({"experiment": "custom", "seed": -3})").find("seed") != std::string::npos);
    CHECK(schema_message(R"({"experiment": "custom", "pair": {"sigma": 0}})").find("pair.sigma") != std::string::npos);
    CHECK(schema_message(R"({"experiment": "custom", "epsilonn": 0.2})").find("epsilonn") != std::string::npos);
    CHECK(schema_message(R"({"experiment": "custom", "policy": "greedy"})").find("policy") != std::string::npos);
    CHECK(schema_message(R"({"experiment": "custom", "target_arl": 1})").find("target_arl") != std::string::npos);
    CHECK(schema_message(R"({"experiment": "custom", "change_points": []})").find("change_points") != std::string::npos);
    CHECK(schema_message(R"({"experiment": "example4", "policies": ["de_cusum"]})").find("policies") != std::string::npos);
    CHECK(schema_message(R"({"experiment": "example3", "trace": {"length": 5}})").find("trace.length") != std::string::npos);
    CHECK(schema_message("{not json").find("config") != std::string::npos);
}

TEST_CASE("example3 traces: three paths and the change at k = 20") {
    const auto cfg = parse_run_config(R"({"experiment": "example3", "seed": 3})");
    const auto dir = scratch("example3");
    const auto report = run_experiment(cfg, dir);
    CHECK_FALSE(report.degraded);
    const std::string csv = slurp(dir / "fig4.csv");
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    CHECK(line == "k,regime,censoring,random,de_cusum");
    int rows = 0;
    int first_post = -1;
    while (std::getline(lines, line)) {
        const int k = std::stoi(line.substr(0, line.find(',')));
        if (first_post < 0 && line.find(",post,") != std::string::npos) first_post = k;
        ++rows;
    }
    CHECK(rows == cfg.trace.length + 1);
    CHECK(first_post == 20);
    CHECK(fs::exists(dir / "fig4.dat"));
    CHECK(slurp(dir / "fig4.gp").find("set arrow from 20") != std::string::npos);

    const auto set = sample_traces(cfg.base, 0.1, cfg.trace);
    CHECK(set.log_thresholds.at(PolicyChoice::DeCusum) == doctest::Approx(std::log(98.0)));
    // DE-CuSum starts by observing, and its skip phase climbs by mu per slot.
    const double mu = 0.5 / 9.0;
    for (std::size_t k = 1; k + 1 < set.points.size(); ++k) {
        if (set.points[k].de_cusum < 0.0) {
            CHECK(set.points[k + 1].de_cusum == doctest::Approx(std::min(set.points[k].de_cusum + mu, 0.0)));
        }
    }
}

TEST_CASE("example1 sweep: 10 x 2 rows, manifest and deterministic CSV") {
    const auto cfg = parse_run_config(kSmallSweep);
    const auto dir = scratch("example1");
    const auto report = run_experiment(cfg, dir, "inline", kSmallSweep);
    CHECK_FALSE(report.degraded);
    const std::string csv = slurp(dir / "fig2.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 20);

    const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest["experiment"] == "example1");
    CHECK(manifest["seed"] == 5);
    CHECK(manifest["config_hash"].get<std::string>().size() == 16);
    CHECK(manifest["versions"].contains("cqcd"));
    CHECK(manifest["versions"].contains("eigen"));
    std::vector<std::string> listed = manifest["files"];
    for (const auto& entry : fs::directory_iterator(dir)) {
        CHECK(std::find(listed.begin(), listed.end(), entry.path().filename().string()) != listed.end());
    }
    CHECK(listed.size() == 4);  // csv, dat, gp, manifest
    CHECK(slurp(dir / "fig2.dat").find("# policy random") != std::string::npos);

    auto again = parse_run_config(kSmallSweep);
    again.base.workers = 3;
    const auto dir2 = scratch("example1_again");
    run_experiment(again, dir2);
    CHECK(slurp(dir2 / "fig2.csv") == csv);
}

TEST_CASE("custom run reports degradation from run-cap hits") {
    const char* text = R"({"experiment": "custom", "policy": "full_send", "pair": {"mu0": 0, "mu1": 0, "sigma": 1},
                           "threshold": 2, "target_arl": 20, "runs": 30, "delay_runs": 30,
                           "energy_runs": 1, "energy_horizon": 100})";
    const auto dir = scratch("custom_degraded");
    const auto report = run_experiment(parse_run_config(text), dir);
    CHECK(report.degraded);
    CHECK_FALSE(report.diagnostics.empty());
    const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest["degraded"] == true);
    CHECK(fs::exists(dir / "results.csv"));
}
