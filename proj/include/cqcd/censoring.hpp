#pragma once

#include <string>
#include <string_view>

#include "cqcd/model.hpp"
#include "cqcd/rng.hpp"

namespace cqcd {

enum class PolicyKind { Interval, Random };

/// Sensor-side censoring rule plus its energy budget.
///
/// Interval policies withhold observations in the closed no-send region
/// [no_send_lo, no_send_hi]; the cached region probabilities give the
/// likelihood ratio the decision maker assigns to a missing sample. Random
/// policies send each sample with probability epsilon, independently of it,
/// so a missing sample carries no information.
struct CensoringPolicy {
    PolicyKind kind = PolicyKind::Interval;
    double no_send_lo = 0.0;
    double no_send_hi = 0.0;
    double epsilon = 1.0;
    double p0_region = 0.0;  // P_inf(no send)
    double p1_region = 0.0;  // P_1(no send)

    /// ln(p1_region / p0_region); DegeneratePolicy when p0_region == 0.
    double no_send_log_lr() const;
    bool sends_everything() const;
};

/// Either a transmitted observation or the no-send symbol.
struct CensoredObservation {
    bool sent = false;
    double value = 0.0;

    static CensoredObservation Sent(double x) { return {true, x}; }
    static CensoredObservation NoSend() { return {false, 0.0}; }
};

CensoringPolicy full_send_policy();
/// Interval policy with region probabilities computed from the pair's Simpson
/// tables. Throws InvalidParameter for lo > hi or epsilon outside (0, 1], and
/// InfeasibleBudget when the send probability exceeds epsilon by more than 1e-6.
CensoringPolicy interval_policy(const DistributionPair& pair, double lo, double hi, double epsilon);
CensoringPolicy random_policy(double epsilon);

/// `u` is the auxiliary uniform draw used by random policies (send iff u <= epsilon).
CensoredObservation apply_policy(const CensoringPolicy& policy, double x, double u = 0.0);
/// Draws the auxiliary uniform from `rng` only for random policies.
CensoredObservation apply_policy(const CensoringPolicy& policy, double x, Rng& rng);

double censored_log_lr(const CensoringPolicy& policy, const DistributionPair& pair,
                       const CensoredObservation& obs);

/// K-L divergence between the post- and pre-change laws of the censored stream.
double post_censoring_kl(const CensoringPolicy& policy, const DistributionPair& pair);

/// Post-censoring K-L for a no-send set made of the union of intervals
/// [lo_i, hi_i] (disjoint, ascending). Used to probe non-interval policies.
double union_region_kl(const DistributionPair& pair, const double* lo, const double* hi, int count);

/// Right endpoint b with P_inf([a, b]) = 1 - epsilon (to 1e-6 or better).
/// Throws NoSolution when the mass to the right of `a` is insufficient.
double solve_companion_bound(const DistributionPair& pair, double a, double epsilon);

/// Best single no-send interval [a, b_a] for the budget: sweeps a over the
/// pair's search range with spacing `grid_step`, solves b_a from the equality
/// energy constraint, and keeps the largest post-censoring K-L (first index
/// wins ties). OpenMP-parallel over the sweep.
CensoringPolicy optimize_policy(const DistributionPair& pair, double epsilon, double grid_step);
/// Single-threaded reference for optimize_policy; results are identical.
CensoringPolicy optimize_policy_serial(const DistributionPair& pair, double epsilon, double grid_step);

/// Plain-text key=value record, one key per line.
std::string serialize(const CensoringPolicy& policy);
CensoringPolicy parse_policy(std::string_view text);

}  // namespace cqcd
