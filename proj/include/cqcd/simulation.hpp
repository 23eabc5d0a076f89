#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cqcd/censoring.hpp"
#include "cqcd/detectors.hpp"
#include "cqcd/model.hpp"

namespace cqcd {

enum class PolicyChoice { Censoring, Random, DeCusum, FullSend };
enum class DetectorKind { Cusum, Srp };
enum class Quantity { Arl, WorstDelay, EnergyRate };

std::string_view to_string(PolicyChoice policy) noexcept;
std::string_view to_string(DetectorKind detector) noexcept;
std::string_view to_string(Quantity quantity) noexcept;
PolicyChoice parse_policy_choice(std::string_view text);
DetectorKind parse_detector_kind(std::string_view text);

/// Replica loops run on OpenMP workers by default; Serial is the reference path.
enum class Execution { Parallel, Serial };

/// Gaussian mean shift N(mu0, sigma^2) -> N(mu1, sigma^2).
struct PairSpec {
    double mu0 = 0.0;
    double mu1 = 1.0;
    double sigma = 1.0;

    DistributionPair build() const { return gaussian_mean_shift(mu0, mu1, sigma); }
};

struct ExperimentConfig {
    PairSpec pair;
    PolicyChoice policy = PolicyChoice::Censoring;
    double epsilon = 1.0;
    DetectorKind detector = DetectorKind::Cusum;
    double target_arl = 6500.0;
    /// Change times probed for stationary policies (1 = change before the first sample).
    std::vector<int> change_points{1};
    /// Change times probed for DE-CuSum, whose delay depends on the phase at the change.
    std::vector<int> de_cusum_change_points{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    int runs = 2000;        // pre-change replicas per ARL estimate
    int delay_runs = 5000;  // post-change replicas per change time
    int energy_runs = 20;
    int energy_horizon = 50000;
    std::uint64_t seed = 1;
    double optimizer_step = 1e-3;
    double srp_grid_step = 0.1;
    /// Replica cap, as a multiple of target_arl.
    double cap_factor = 100.0;
    int workers = 0;  // 0: OpenMP default

    /// Throws InvalidParameter naming the offending field.
    void validate() const;
    const std::vector<int>& probed_change_points() const;
};

struct PerformanceEstimate {
    Quantity quantity = Quantity::Arl;
    double mean = 0.0;
    double half_width_95 = 0.0;
    int runs = 0;
    int cap_hits = 0;
    int change_point = 0;  // WorstDelay only: the maximizing change time
    std::string warning;   // non-empty when cap hits exceed 1% of runs

    bool reliable() const { return warning.empty(); }
};

/// Mean and normal-approximation 95% half width of a sample.
PerformanceEstimate summarize(Quantity quantity, const std::vector<double>& values);

struct CalibrationResult {
    double threshold = 0.0;
    PerformanceEstimate arl;
    int evaluations = 0;
};

/// Result of one replica: stopping time (1-based), whether the cap was hit,
/// and how many false alarms were redrawn before a valid delay sample.
struct ReplicaOutcome {
    long long stop = 0;
    bool capped = false;
    int restarts = 0;
};

/// One policy/detector combination under Monte Carlo. Replica `i` of each
/// quantity draws from its own stream derived from (seed, quantity, change
/// time, i), so results do not depend on the number of workers, and every
/// threshold probed during calibration sees the same sample paths.
class Experiment {
public:
    explicit Experiment(ExperimentConfig config);
    /// Runs a given stationary censoring policy (config.policy and epsilon are ignored).
    Experiment(ExperimentConfig config, CensoringPolicy policy);

    const ExperimentConfig& config() const { return config_; }
    const DistributionPair& pair() const { return pair_; }
    /// Censoring rule in force (full-send for DE-CuSum, which decides by itself).
    const CensoringPolicy& policy() const { return policy_; }
    bool is_de_cusum() const { return de_cusum_; }
    double de_cusum_increment() const { return mu_inc_; }

    PerformanceEstimate estimate_arl(double threshold_a, Execution exec = Execution::Parallel) const;
    PerformanceEstimate estimate_worst_delay(double threshold_a, Execution exec = Execution::Parallel) const;
    PerformanceEstimate estimate_energy_rate(Execution exec = Execution::Parallel) const;
    CalibrationResult calibrate_threshold(Execution exec = Execution::Parallel) const;

    /// Single replica with the change at `change_point` (0 = never). Exposed for tests.
    ReplicaOutcome replica(double threshold_a, int change_point, long long cap, Rng& rng) const;

private:
    const DiscreteDistribution& srp_start_law(double threshold_a) const;
    std::vector<ReplicaOutcome> replicate(double threshold_a, int change_point, int count, std::uint64_t purpose,
                                          Execution exec) const;

    ExperimentConfig config_;
    DistributionPair pair_;
    CensoringPolicy policy_;
    bool de_cusum_ = false;
    double mu_inc_ = 0.0;
    mutable std::map<double, DiscreteDistribution> srp_laws_;
};

PerformanceEstimate estimate_arl(const ExperimentConfig& config, double threshold_a);
PerformanceEstimate estimate_worst_delay(const ExperimentConfig& config, double threshold_a);
PerformanceEstimate estimate_energy_rate(const ExperimentConfig& config);
CalibrationResult calibrate_threshold(const ExperimentConfig& config);

struct TradeoffRow {
    double epsilon = 0.0;
    PolicyChoice policy = PolicyChoice::Censoring;
    DetectorKind detector = DetectorKind::Cusum;
    double threshold = 0.0;
    PerformanceEstimate arl;
    PerformanceEstimate delay;
    PerformanceEstimate energy;
    int runs = 0;
    std::uint64_t seed = 0;
};

/// For every epsilon and policy: calibrate to the common target ARL, then
/// measure worst delay and energy rate. SRP rows use the integral-equation
/// solver (zero-width intervals, runs = 0); energy is still simulated.
std::vector<TradeoffRow> run_tradeoff_sweep(const ExperimentConfig& base, const std::vector<double>& epsilons,
                                            const std::vector<PolicyChoice>& policies);

bool degraded(const TradeoffRow& row);

/// Header plus one line per row, columns:
/// epsilon,policy,detector,threshold,arl_mean,arl_ci,delay_mean,delay_ci,energy_rate,runs,seed
void write_csv(std::ostream& os, const std::vector<TradeoffRow>& rows);

}  // namespace cqcd
