#include "cqcd/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cqcd/error.hpp"

namespace cqcd {

namespace {

void check_threshold(double threshold) {
    if (!(threshold > 0.0)) {
        throw Error(ErrorKind::InvalidParameter, "threshold must be positive");
    }
}

void check_ratio(double clr) {
    if (!(clr >= 0.0)) {
        throw Error(ErrorKind::InvalidInput, "likelihood ratio must be nonnegative");
    }
}

}  // namespace

CusumState cusum_start(double threshold) {
    check_threshold(threshold);
    CusumState st;
    st.threshold = threshold;
    return st;
}

CusumState cusum_step(const CusumState& state, double clr) {
    check_ratio(clr);
    CusumState next = state;
    next.s = std::max(state.s, 1.0) * clr;
    next.log_s = std::max(state.log_s, 0.0) + std::log(clr);
    return next;
}

CusumState cusum_step_log(const CusumState& state, double log_clr) {
    CusumState next = state;
    next.log_s = std::max(state.log_s, 0.0) + log_clr;
    next.s = std::exp(next.log_s);
    return next;
}

SrpState srp_start(double r0, double threshold) {
    check_threshold(threshold);
    if (!(r0 >= 0.0)) {
        throw Error(ErrorKind::InvalidParameter, "SRP start must be nonnegative");
    }
    return SrpState{r0, threshold};
}

SrpState srp_step(const SrpState& state, double clr) {
    check_ratio(clr);
    return SrpState{(1.0 + state.r) * clr, state.threshold};
}

SrpState srp_init(const DiscreteDistribution& qsd, double threshold, Rng& rng) {
    check_threshold(threshold);
    if (qsd.nodes.empty() || qsd.nodes.size() != qsd.probs.size()) {
        throw Error(ErrorKind::InvalidDistribution, "qsd needs one probability per node");
    }
    double total = 0.0;
    for (double p : qsd.probs) {
        if (!(p >= 0.0)) {
            throw Error(ErrorKind::InvalidDistribution, "qsd has a negative probability");
        }
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw Error(ErrorKind::InvalidDistribution, "qsd is not normalized");
    }
    const double u = rng.uniform() * total;
    double acc = 0.0;
    std::size_t pick = qsd.nodes.size() - 1;
    for (std::size_t i = 0; i < qsd.probs.size(); ++i) {
        acc += qsd.probs[i];
        if (u < acc) {
            pick = i;
            break;
        }
    }
    // Zero-probability tail nodes are never chosen.
    while (pick > 0 && qsd.probs[pick] == 0.0) {
        --pick;
    }
    return SrpState{qsd.nodes[pick], threshold};
}

DeCusumState de_cusum_start(double mu_inc, double threshold) {
    check_threshold(threshold);
    if (!(mu_inc > 0.0)) {
        throw Error(ErrorKind::InvalidParameter, "DE-CuSum increment must be positive");
    }
    return DeCusumState{0.0, mu_inc, threshold};
}

DeCusumState de_cusum_observe(const DeCusumState& state, double llr) {
    DeCusumState next = state;
    next.w = state.w + llr;
    return next;
}

DeCusumState de_cusum_skip(const DeCusumState& state) {
    DeCusumState next = state;
    next.w = std::min(state.w + state.mu_inc, 0.0);
    return next;
}

DeCusumStep de_cusum_step(const DeCusumState& state, const DistributionPair& pair, Regime regime, Rng& rng) {
    if (!state.taking_observations()) {
        return {de_cusum_skip(state), false};
    }
    const double x = pair.sample(regime, rng);
    return {de_cusum_observe(state, pair.log_lr(x)), true};
}

double de_cusum_mu(const DistributionPair& pair, double epsilon) {
    if (!(epsilon > 0.0 && epsilon <= 1.0)) {
        throw Error(ErrorKind::InvalidParameter, "epsilon must be in (0, 1]");
    }
    if (epsilon >= 1.0) {
        throw Error(ErrorKind::InvalidParameter, "DE-CuSum increment undefined at epsilon = 1 (division by zero)");
    }
    return epsilon / (1.0 - epsilon) * reverse_kl_divergence(pair);
}

bool crossed(const CusumState& state) {
    if (std::isinf(state.s)) {
        return state.log_s >= std::log(state.threshold);
    }
    return state.s >= state.threshold;
}

bool crossed(const SrpState& state) { return state.r >= state.threshold; }

bool crossed(const DeCusumState& state) { return state.w >= std::log(state.threshold); }

}  // namespace cqcd
