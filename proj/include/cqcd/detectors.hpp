#pragma once

#include <limits>
#include <vector>

#include "cqcd/model.hpp"
#include "cqcd/rng.hpp"

namespace cqcd {

/// CuSum statistic in ratio domain, S_k = max(S_{k-1}, 1) * L_k, with its
/// logarithm carried alongside so very large thresholds never overflow.
struct CusumState {
    double s = 0.0;
    double log_s = -std::numeric_limits<double>::infinity();
    double threshold = 1.0;
};

/// Shiryaev-Roberts statistic R_k = (1 + R_{k-1}) * L_k.
struct SrpState {
    double r = 0.0;
    double threshold = 1.0;
};

/// Data-efficient CuSum in log domain with h = infinity: while w < 0 the
/// statistic climbs by mu_inc per slot without observing; otherwise it adds the
/// log-likelihood ratio of a fresh observation. `threshold` is the ratio-domain
/// A, compared as w >= ln A.
struct DeCusumState {
    double w = 0.0;
    double mu_inc = 0.0;
    double threshold = 1.0;

    bool taking_observations() const { return w >= 0.0; }
};

/// Probability mass on grid nodes (e.g. a discretized quasi-stationary law).
struct DiscreteDistribution {
    std::vector<double> nodes;
    std::vector<double> probs;
};

CusumState cusum_start(double threshold);
/// `clr` is the censored likelihood ratio (not its log). Negative -> InvalidInput.
CusumState cusum_step(const CusumState& state, double clr);
/// Same recursion driven by the log of the censored likelihood ratio.
CusumState cusum_step_log(const CusumState& state, double log_clr);

SrpState srp_start(double r0, double threshold);
SrpState srp_step(const SrpState& state, double clr);
/// R_0 by inverse-cdf sampling of `qsd` on its nodes. InvalidDistribution when
/// probabilities are negative or do not sum to one (1e-9).
SrpState srp_init(const DiscreteDistribution& qsd, double threshold, Rng& rng);

struct DeCusumStep {
    DeCusumState state;
    bool sent = false;
};

DeCusumState de_cusum_start(double mu_inc, double threshold);
DeCusumStep de_cusum_step(const DeCusumState& state, const DistributionPair& pair, Regime regime, Rng& rng);
/// Observation-mode update with an already drawn log-likelihood ratio.
DeCusumState de_cusum_observe(const DeCusumState& state, double llr);
/// Skip-mode update: climb by mu_inc, capped at zero.
DeCusumState de_cusum_skip(const DeCusumState& state);

/// Deterministic increment (eps / (1 - eps)) * D(f0 || f1).
double de_cusum_mu(const DistributionPair& pair, double epsilon);

bool crossed(const CusumState& state);
bool crossed(const SrpState& state);
bool crossed(const DeCusumState& state);

}  // namespace cqcd
