#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cqcd/simulation.hpp"

namespace cqcd {

enum class ExperimentName { Example1, Example2, Example3, Example4, Custom };

std::string_view to_string(ExperimentName name) noexcept;

/// Sample-path settings for example3.
struct TraceSpec {
    int change_point = 20;
    int length = 150;
    std::map<PolicyChoice, double> thresholds{
        {PolicyChoice::Censoring, 690.0}, {PolicyChoice::Random, 101.0}, {PolicyChoice::DeCusum, 98.0}};
};

/// A parsed run configuration. See configs/README.md for the schema.
struct RunConfig {
    ExperimentName experiment = ExperimentName::Custom;
    ExperimentConfig base;
    std::vector<double> epsilons;
    std::vector<PolicyChoice> policies;
    TraceSpec trace;
    /// Custom runs only: measure at this threshold instead of calibrating.
    std::optional<double> threshold;
};

/// Parses and validates JSON text. Throws SchemaError whose message starts
/// with the offending key.
RunConfig parse_run_config(const std::string& json_text);

/// Defaults for a named experiment (what an otherwise empty config resolves to).
RunConfig default_run_config(ExperimentName name);

struct RunReport {
    std::vector<std::filesystem::path> files;
    double wall_seconds = 0.0;
    bool degraded = false;
    std::vector<std::string> diagnostics;
};

/// Runs the experiment, writes its CSV, gnuplot data and script, and a
/// manifest.json listing every emitted file into `out_dir`.
RunReport run_experiment(const RunConfig& config, const std::filesystem::path& out_dir,
                         const std::string& config_source = {}, const std::string& config_text = {});

struct TracePoint {
    int k = 0;
    double censoring = 0.0;
    double random = 0.0;
    double de_cusum = 0.0;
};

struct TraceSet {
    std::vector<TracePoint> points;
    std::map<PolicyChoice, int> stop_times;  // 0 when no alarm inside the window
    std::map<PolicyChoice, double> log_thresholds;
};

/// One shared observation stream per scheme with the change at
/// trace.change_point; all statistics reported in log domain.
TraceSet sample_traces(const ExperimentConfig& base, double epsilon, const TraceSpec& trace);

/// 64-bit FNV-1a, used for the manifest's config hash.
std::uint64_t fnv1a(const std::string& text);

}  // namespace cqcd
