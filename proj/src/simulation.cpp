#include "cqcd/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <ostream>

#include <omp.h>

#include "cqcd/error.hpp"
#include "cqcd/srp_numerics.hpp"

namespace cqcd {

namespace {

constexpr double kZ95 = 1.959963984540054;
constexpr double kCalibrationTolerance = 0.05;
constexpr double kThresholdFloor = 1.0;
constexpr double kThresholdCeiling = 1e12;

// Stream purposes; folded into the replica stream index.
constexpr std::uint64_t kArlStream = 1;
constexpr std::uint64_t kDelayStream = 2;
constexpr std::uint64_t kEnergyStream = 3;

std::uint64_t stream_index(std::uint64_t purpose, int change_point, int replica) {
    return (purpose << 56) ^ (static_cast<std::uint64_t>(change_point) << 32) ^ static_cast<std::uint32_t>(replica);
}

void require(bool ok, const char* field, const char* what) {
    if (!ok) {
        throw Error(ErrorKind::InvalidParameter, std::string(field) + ": " + what);
    }
}

std::string cap_warning(int cap_hits, int runs) {
    if (cap_hits * 100 <= runs) {
        return {};
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "unreliable estimate: %d of %d replicas hit the run cap", cap_hits, runs);
    return buf;
}

}  // namespace

std::string_view to_string(PolicyChoice policy) noexcept {
    switch (policy) {
        case PolicyChoice::Censoring: return "censoring";
        case PolicyChoice::Random: return "random";
        case PolicyChoice::DeCusum: return "de_cusum";
        case PolicyChoice::FullSend: return "full_send";
    }
    return "unknown";
}

std::string_view to_string(DetectorKind detector) noexcept {
    return detector == DetectorKind::Cusum ? "cusum" : "srp";
}

std::string_view to_string(Quantity quantity) noexcept {
    switch (quantity) {
        case Quantity::Arl: return "ARL";
        case Quantity::WorstDelay: return "WorstDelay";
        case Quantity::EnergyRate: return "EnergyRate";
    }
    return "unknown";
}

PolicyChoice parse_policy_choice(std::string_view text) {
    for (auto p : {PolicyChoice::Censoring, PolicyChoice::Random, PolicyChoice::DeCusum, PolicyChoice::FullSend}) {
        if (text == to_string(p)) {
            return p;
        }
    }
    throw Error(ErrorKind::InvalidParameter, "policy: unknown kind '" + std::string(text) + "'");
}

DetectorKind parse_detector_kind(std::string_view text) {
    if (text == "cusum") return DetectorKind::Cusum;
    if (text == "srp") return DetectorKind::Srp;
    throw Error(ErrorKind::InvalidParameter, "detector: unknown kind '" + std::string(text) + "'");
}

void ExperimentConfig::validate() const {
    require(pair.sigma > 0.0 && std::isfinite(pair.sigma), "sigma", "must be positive");
    require(std::isfinite(pair.mu0) && std::isfinite(pair.mu1), "mu", "means must be finite");
    require(epsilon > 0.0 && epsilon <= 1.0, "epsilon", "must be in (0, 1]");
    require(target_arl > 1.0 && std::isfinite(target_arl), "target_arl", "must exceed 1");
    require(!change_points.empty(), "change_points", "must be nonempty");
    require(!de_cusum_change_points.empty(), "de_cusum_change_points", "must be nonempty");
    for (int nu : change_points) require(nu >= 1, "change_points", "entries must be >= 1");
    for (int nu : de_cusum_change_points) require(nu >= 1, "de_cusum_change_points", "entries must be >= 1");
    require(runs >= 1, "runs", "must be >= 1");
    require(delay_runs >= 1, "delay_runs", "must be >= 1");
    require(energy_runs >= 1, "energy_runs", "must be >= 1");
    require(energy_horizon >= 1, "energy_horizon", "must be >= 1");
    require(optimizer_step > 0.0, "optimizer_step", "must be positive");
    require(srp_grid_step > 0.0, "srp_grid_step", "must be positive");
    require(cap_factor >= 1.0, "cap_factor", "must be >= 1");
    require(workers >= 0, "workers", "must be >= 0");
}

const std::vector<int>& ExperimentConfig::probed_change_points() const {
    return policy == PolicyChoice::DeCusum && epsilon < 1.0 ? de_cusum_change_points : change_points;
}

PerformanceEstimate summarize(Quantity quantity, const std::vector<double>& values) {
    PerformanceEstimate est;
    est.quantity = quantity;
    est.runs = static_cast<int>(values.size());
    if (values.empty()) {
        return est;
    }
    double sum = 0.0;
    for (double v : values) sum += v;
    const double n = static_cast<double>(values.size());
    est.mean = sum / n;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - est.mean) * (v - est.mean);
        est.half_width_95 = kZ95 * std::sqrt(ss / (n - 1.0) / n);
    }
    return est;
}

Experiment::Experiment(ExperimentConfig config) : config_(std::move(config)), pair_(config_.pair.build()) {
    config_.validate();
    const double eps = config_.epsilon;
    switch (config_.policy) {
        case PolicyChoice::Censoring:
            policy_ = optimize_policy(pair_, eps, config_.optimizer_step);
            break;
        case PolicyChoice::Random:
            policy_ = random_policy(eps);
            break;
        case PolicyChoice::FullSend:
            policy_ = full_send_policy();
            break;
        case PolicyChoice::DeCusum:
            policy_ = full_send_policy();
            if (eps < 1.0) {
                if (config_.detector != DetectorKind::Cusum) {
                    throw Error(ErrorKind::InvalidParameter, "detector: DE-CuSum runs only with the cusum detector");
                }
                de_cusum_ = true;
                mu_inc_ = de_cusum_mu(pair_, eps);
            }
            break;
    }
}

Experiment::Experiment(ExperimentConfig config, CensoringPolicy policy)
    : config_(std::move(config)), pair_(config_.pair.build()), policy_(policy) {
    config_.validate();
    config_.policy = policy_.kind == PolicyKind::Random ? PolicyChoice::Random : PolicyChoice::Censoring;
    config_.epsilon = policy_.epsilon;
}

const DiscreteDistribution& Experiment::srp_start_law(double threshold_a) const {
    auto it = srp_laws_.find(threshold_a);
    if (it == srp_laws_.end()) {
        const auto kernel = build_srp_kernel(pair_, policy_, threshold_a, config_.srp_grid_step, Regime::PreChange);
        const auto qsd = quasi_stationary(kernel);
        it = srp_laws_.emplace(threshold_a, to_distribution(kernel.grid, qsd.probs)).first;
    }
    return it->second;
}

ReplicaOutcome Experiment::replica(double threshold_a, int change_point, long long cap, Rng& rng) const {
    ReplicaOutcome out;
    const auto regime_at = [change_point](long long k) {
        return change_point > 0 && k >= change_point ? Regime::PostChange : Regime::PreChange;
    };
    const auto censored_llr = [&](Regime regime) {
        const auto obs = apply_policy(policy_, pair_.sample(regime, rng), rng);
        return censored_log_lr(policy_, pair_, obs);
    };

    // Restart after every false alarm (stop before the change).
    for (;;) {
        long long k = 0;
        bool stopped = false;
        if (de_cusum_) {
            auto st = de_cusum_start(mu_inc_, threshold_a);
            while (!stopped && k < cap) {
                ++k;
                st = de_cusum_step(st, pair_, regime_at(k), rng).state;
                stopped = crossed(st);
            }
        } else if (config_.detector == DetectorKind::Srp) {
            auto st = srp_init(srp_start_law(threshold_a), threshold_a, rng);
            while (!stopped && k < cap) {
                ++k;
                st = srp_step(st, std::exp(censored_llr(regime_at(k))));
                stopped = crossed(st);
            }
        } else {
            auto st = cusum_start(threshold_a);
            while (!stopped && k < cap) {
                ++k;
                st = cusum_step_log(st, censored_llr(regime_at(k)));
                stopped = crossed(st);
            }
        }
        out.stop = k;
        out.capped = !stopped;
        if (change_point == 0 || !stopped || k >= change_point) {
            return out;
        }
        ++out.restarts;
    }
}

std::vector<ReplicaOutcome> Experiment::replicate(double threshold_a, int change_point, int count,
                                                  std::uint64_t purpose, Execution exec) const {
    if (config_.detector == DetectorKind::Srp && !de_cusum_) {
        srp_start_law(threshold_a);  // fill the cache before workers read it
    }
    const auto cap = static_cast<long long>(std::ceil(config_.cap_factor * config_.target_arl));
    std::vector<ReplicaOutcome> out(static_cast<std::size_t>(count));
    const auto one = [&](int i) {
        Rng rng = Rng::stream(config_.seed, stream_index(purpose, change_point, i));
        out[static_cast<std::size_t>(i)] = replica(threshold_a, change_point, cap, rng);
    };
    if (exec == Execution::Serial) {
        for (int i = 0; i < count; ++i) one(i);
        return out;
    }
    const int threads = config_.workers > 0 ? config_.workers : omp_get_max_threads();
    // Exceptions must not escape an OpenMP region; keep the first and rethrow.
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 8) num_threads(threads)
    for (int i = 0; i < count; ++i) {
        try {
            one(i);
        } catch (...) {
#pragma omp critical(cqcd_replica_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

PerformanceEstimate Experiment::estimate_arl(double threshold_a, Execution exec) const {
    if (!(threshold_a > 0.0)) {
        throw Error(ErrorKind::InvalidParameter, "threshold must be positive");
    }
    const auto outcomes = replicate(threshold_a, 0, config_.runs, kArlStream, exec);
    std::vector<double> values;
    values.reserve(outcomes.size());
    int caps = 0;
    for (const auto& o : outcomes) {
        values.push_back(static_cast<double>(o.stop));
        caps += o.capped ? 1 : 0;
    }
    auto est = summarize(Quantity::Arl, values);
    est.cap_hits = caps;
    est.warning = cap_warning(caps, est.runs);
    return est;
}

PerformanceEstimate Experiment::estimate_worst_delay(double threshold_a, Execution exec) const {
    if (!(threshold_a > 0.0)) {
        throw Error(ErrorKind::InvalidParameter, "threshold must be positive");
    }
    PerformanceEstimate worst;
    bool first = true;
    for (int nu : config_.probed_change_points()) {
        const auto outcomes = replicate(threshold_a, nu, config_.delay_runs, kDelayStream, exec);
        std::vector<double> values;
        values.reserve(outcomes.size());
        int caps = 0;
        for (const auto& o : outcomes) {
            values.push_back(static_cast<double>(o.stop - nu + 1));
            caps += o.capped ? 1 : 0;
        }
        auto est = summarize(Quantity::WorstDelay, values);
        est.cap_hits = caps;
        est.change_point = nu;
        est.warning = cap_warning(caps, est.runs);
        if (first || est.mean > worst.mean) {
            worst = est;
            first = false;
        }
    }
    return worst;
}

PerformanceEstimate Experiment::estimate_energy_rate(Execution exec) const {
    const int runs = config_.energy_runs;
    const int horizon = config_.energy_horizon;
    std::vector<double> rates(static_cast<std::size_t>(runs));
    const auto one = [&](int i) {
        Rng rng = Rng::stream(config_.seed, stream_index(kEnergyStream, 0, i));
        long long sent = 0;
        if (de_cusum_) {
            // No threshold: the skip/observe cycle runs freely over the horizon.
            auto st = de_cusum_start(mu_inc_, std::numeric_limits<double>::infinity());
            for (int k = 0; k < horizon; ++k) {
                const auto step = de_cusum_step(st, pair_, Regime::PreChange, rng);
                st = step.state;
                sent += step.sent ? 1 : 0;
            }
        } else {
            for (int k = 0; k < horizon; ++k) {
                sent += apply_policy(policy_, pair_.sample(Regime::PreChange, rng), rng).sent ? 1 : 0;
            }
        }
        rates[static_cast<std::size_t>(i)] = static_cast<double>(sent) / horizon;
    };
    if (exec == Execution::Serial) {
        for (int i = 0; i < runs; ++i) one(i);
    } else {
        const int threads = config_.workers > 0 ? config_.workers : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(threads)
        for (int i = 0; i < runs; ++i) one(i);
    }
    return summarize(Quantity::EnergyRate, rates);
}

CalibrationResult Experiment::calibrate_threshold(Execution exec) const {
    const double target = config_.target_arl;
    CalibrationResult result;
    const auto probe = [&](double a) {
        ++result.evaluations;
        return estimate_arl(a, exec);
    };
    const auto close_enough = [&](const PerformanceEstimate& e) {
        return std::abs(e.mean / target - 1.0) <= kCalibrationTolerance;
    };
    const auto accept = [&](double a, PerformanceEstimate e) {
        result.threshold = a;
        result.arl = std::move(e);
        return result;
    };

    // Bracket [lo, hi] with ARL(lo) < target <= ARL(hi), stepping by 4x in A.
    double lo = std::clamp(target / 10.0, kThresholdFloor, kThresholdCeiling);
    auto e_lo = probe(lo);
    if (close_enough(e_lo)) return accept(lo, e_lo);
    double hi = lo;
    auto e_hi = e_lo;
    if (e_lo.mean < target) {
        while (e_hi.mean < target) {
            lo = hi;
            e_lo = e_hi;
            if (hi >= kThresholdCeiling) {
                throw Error(ErrorKind::CalibrationFailure, "no threshold up to 1e12 reaches the target ARL");
            }
            hi = std::min(hi * 4.0, kThresholdCeiling);
            e_hi = probe(hi);
            if (close_enough(e_hi)) return accept(hi, e_hi);
        }
    } else {
        while (e_lo.mean >= target) {
            hi = lo;
            e_hi = e_lo;
            if (lo <= kThresholdFloor) {
                throw Error(ErrorKind::CalibrationFailure, "even threshold 1 exceeds the target ARL");
            }
            lo = std::max(lo / 4.0, kThresholdFloor);
            e_lo = probe(lo);
            if (close_enough(e_lo)) return accept(lo, e_lo);
        }
    }

    // Bisection on log A, accelerated by interpolating log ARL (Illinois rule
    // keeps a stale endpoint from stalling the bracket).
    double f_lo = std::log(std::max(e_lo.mean, 1.0) / target);
    double f_hi = std::log(e_hi.mean / target);
    int stale = 0;
    for (int iter = 0; iter < 60; ++iter) {
        const double la = std::log(lo);
        const double lb = std::log(hi);
        double lm = 0.5 * (la + lb);
        if (f_hi > f_lo) {
            const double interp = la - f_lo * (lb - la) / (f_hi - f_lo);
            // Fall back to the midpoint when interpolation hugs an endpoint.
            if (interp > la + 0.02 * (lb - la) && interp < lb - 0.02 * (lb - la)) lm = interp;
        }
        const double mid = std::exp(lm);
        auto e_mid = probe(mid);
        if (close_enough(e_mid)) return accept(mid, e_mid);
        const double f_mid = std::log(std::max(e_mid.mean, 1.0) / target);
        if (e_mid.mean < target) {
            lo = mid;
            f_lo = f_mid;
            if (stale == -1) f_hi *= 0.5;
            stale = -1;
        } else {
            hi = mid;
            f_hi = f_mid;
            if (stale == 1) f_lo *= 0.5;
            stale = 1;
        }
        if (hi / lo < 1.0 + 1e-9) break;
    }
    throw Error(ErrorKind::CalibrationFailure, "threshold search did not reach 5% of the target ARL");
}

PerformanceEstimate estimate_arl(const ExperimentConfig& config, double threshold_a) {
    return Experiment(config).estimate_arl(threshold_a);
}

PerformanceEstimate estimate_worst_delay(const ExperimentConfig& config, double threshold_a) {
    return Experiment(config).estimate_worst_delay(threshold_a);
}

PerformanceEstimate estimate_energy_rate(const ExperimentConfig& config) {
    return Experiment(config).estimate_energy_rate();
}

CalibrationResult calibrate_threshold(const ExperimentConfig& config) {
    return Experiment(config).calibrate_threshold();
}

std::vector<TradeoffRow> run_tradeoff_sweep(const ExperimentConfig& base, const std::vector<double>& epsilons,
                                            const std::vector<PolicyChoice>& policies) {
    std::vector<TradeoffRow> rows;
    for (double eps : epsilons) {
        for (PolicyChoice kind : policies) {
            ExperimentConfig cfg = base;
            cfg.epsilon = eps;
            cfg.policy = kind;
            const Experiment exp(cfg);
            TradeoffRow row;
            row.epsilon = eps;
            row.policy = kind;
            row.detector = cfg.detector;
            row.seed = cfg.seed;
            if (cfg.detector == DetectorKind::Srp) {
                const auto cal = calibrate_srp(exp.pair(), exp.policy(), cfg.target_arl, cfg.srp_grid_step);
                row.threshold = cal.performance.threshold;
                row.arl.quantity = Quantity::Arl;
                row.arl.mean = cal.performance.arl;
                row.delay.quantity = Quantity::WorstDelay;
                row.delay.mean = cal.performance.add;
                row.delay.change_point = 1;
            } else {
                const auto cal = exp.calibrate_threshold();
                row.threshold = cal.threshold;
                row.arl = cal.arl;
                row.delay = exp.estimate_worst_delay(cal.threshold);
                row.runs = cfg.runs;
            }
            row.energy = exp.estimate_energy_rate();
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

bool degraded(const TradeoffRow& row) {
    return !row.arl.reliable() || !row.delay.reliable() || !row.energy.reliable();
}

void write_csv(std::ostream& os, const std::vector<TradeoffRow>& rows) {
    os << "epsilon,policy,detector,threshold,arl_mean,arl_ci,delay_mean,delay_ci,energy_rate,runs,seed\n";
    char buf[512];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.6g,%s,%s,%.10g,%.10g,%.6g,%.10g,%.6g,%.6g,%d,%llu\n", r.epsilon,
                      std::string(to_string(r.policy)).c_str(), std::string(to_string(r.detector)).c_str(),
                      r.threshold, r.arl.mean, r.arl.half_width_95, r.delay.mean, r.delay.half_width_95,
                      r.energy.mean, r.runs, static_cast<unsigned long long>(r.seed));
        os << buf;
    }
}

}  // namespace cqcd
