#include "cqcd/censoring.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <vector>

namespace cqcd {

namespace {

constexpr double kEnergySlack = 1e-6;

void check_epsilon(double epsilon) {
    if (!(epsilon > 0.0 && epsilon <= 1.0)) {
        throw Error(ErrorKind::InvalidParameter, "epsilon must be in (0, 1]");
    }
}

double xlogy_ratio(double p1, double p0) {
    if (p1 <= 0.0) {
        return 0.0;
    }
    return p1 * std::log(p1 / p0);
}

void require_monotone(const DistributionPair& pair) {
    if (pair.lr_shape() == LrShape::NonMonotone) {
        throw Error(ErrorKind::UnsupportedModel,
                    "observation-space optimizer requires a monotone likelihood ratio");
    }
}

// Post-censoring K-L of the no-send interval [a, b] given its masses.
double interval_kl(const DistributionPair& pair, double total, double a, double b, double p0, double p1) {
    if (p0 <= 0.0) {
        return total;
    }
    return total - pair.llr_moment_post(a, b) + xlogy_ratio(p1, p0);
}

double total_llr_moment(const DistributionPair& pair) {
    return pair.llr_moment_post(pair.support_lo(), pair.support_hi());
}

}  // namespace

double CensoringPolicy::no_send_log_lr() const {
    if (kind == PolicyKind::Random) {
        return 0.0;
    }
    if (!(p0_region > 0.0)) {
        throw Error(ErrorKind::DegeneratePolicy, "no-send region has zero pre-change probability");
    }
    if (!(p1_region > 0.0)) {
        return -std::numeric_limits<double>::infinity();
    }
    return std::log(p1_region / p0_region);
}

bool CensoringPolicy::sends_everything() const {
    return kind == PolicyKind::Interval ? p0_region == 0.0 && p1_region == 0.0 : epsilon >= 1.0;
}

CensoringPolicy full_send_policy() {
    const double ninf = -std::numeric_limits<double>::infinity();
    return CensoringPolicy{PolicyKind::Interval, ninf, ninf, 1.0, 0.0, 0.0};
}

CensoringPolicy interval_policy(const DistributionPair& pair, double lo, double hi, double epsilon) {
    check_epsilon(epsilon);
    if (!(lo <= hi)) {
        throw Error(ErrorKind::InvalidParameter, "no-send region needs lo <= hi");
    }
    CensoringPolicy p{PolicyKind::Interval, lo, hi, epsilon, 0.0, 0.0};
    p.p0_region = std::min(1.0, pair.mass(Regime::PreChange, lo, hi));
    p.p1_region = std::min(1.0, pair.mass(Regime::PostChange, lo, hi));
    if (1.0 - p.p0_region > epsilon + kEnergySlack) {
        throw Error(ErrorKind::InfeasibleBudget, "interval sends more often than the energy budget allows");
    }
    return p;
}

CensoringPolicy random_policy(double epsilon) {
    check_epsilon(epsilon);
    return CensoringPolicy{PolicyKind::Random, 0.0, 0.0, epsilon, 1.0 - epsilon, 1.0 - epsilon};
}

CensoredObservation apply_policy(const CensoringPolicy& policy, double x, double u) {
    if (policy.kind == PolicyKind::Random) {
        return u <= policy.epsilon ? CensoredObservation::Sent(x) : CensoredObservation::NoSend();
    }
    if (policy.no_send_lo <= x && x <= policy.no_send_hi) {
        return CensoredObservation::NoSend();
    }
    return CensoredObservation::Sent(x);
}

CensoredObservation apply_policy(const CensoringPolicy& policy, double x, Rng& rng) {
    const double u = policy.kind == PolicyKind::Random ? rng.uniform() : 0.0;
    return apply_policy(policy, x, u);
}

double censored_log_lr(const CensoringPolicy& policy, const DistributionPair& pair,
                       const CensoredObservation& obs) {
    return obs.sent ? pair.log_lr(obs.value) : policy.no_send_log_lr();
}

double post_censoring_kl(const CensoringPolicy& policy, const DistributionPair& pair) {
    const double total = total_llr_moment(pair);
    if (policy.kind == PolicyKind::Random) {
        return policy.epsilon * total;
    }
    if (policy.sends_everything()) {
        return total;
    }
    return interval_kl(pair, total, policy.no_send_lo, policy.no_send_hi, policy.p0_region, policy.p1_region);
}

double union_region_kl(const DistributionPair& pair, const double* lo, const double* hi, int count) {
    const double total = total_llr_moment(pair);
    double p0 = 0.0;
    double p1 = 0.0;
    double inside = 0.0;
    for (int i = 0; i < count; ++i) {
        p0 += pair.mass(Regime::PreChange, lo[i], hi[i]);
        p1 += pair.mass(Regime::PostChange, lo[i], hi[i]);
        inside += pair.llr_moment_post(lo[i], hi[i]);
    }
    if (p0 <= 0.0) {
        return total;
    }
    return total - inside + xlogy_ratio(p1, p0);
}

double solve_companion_bound(const DistributionPair& pair, double a, double epsilon) {
    check_epsilon(epsilon);
    const double target = 1.0 - epsilon;
    if (target <= 0.0) {
        return a;
    }
    const double hi_end = pair.support_hi();
    const double available = pair.mass(Regime::PreChange, a, hi_end);
    if (!(a < hi_end) || available < target) {
        throw Error(ErrorKind::NoSolution, "not enough pre-change mass to the right of a");
    }
    double lo = a;
    double hi = hi_end;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double m = pair.mass(Regime::PreChange, a, mid);
        if (m < target) {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo <= 1e-13 * (1.0 + std::abs(mid))) {
            break;
        }
    }
    return hi;
}

namespace {

struct SweepSetup {
    double total = 0.0;
    std::size_t count = 0;
};

SweepSetup sweep_setup(const DistributionPair& pair, double epsilon, double grid_step) {
    check_epsilon(epsilon);
    if (!(grid_step > 0.0)) {
        throw Error(ErrorKind::InvalidParameter, "grid_step must be positive");
    }
    require_monotone(pair);
    SweepSetup s;
    s.total = total_llr_moment(pair);
    s.count = static_cast<std::size_t>(std::floor((pair.search_hi() - pair.search_lo()) / grid_step + 1e-9)) + 1;
    return s;
}

// Value of candidate i, or NaN when a_i cannot carry 1 - epsilon of mass.
double candidate_value(const DistributionPair& pair, double epsilon, double a, double total, double* b_out) {
    const double target = 1.0 - epsilon;
    if (pair.mass(Regime::PreChange, a, pair.support_hi()) < target) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    const double b = solve_companion_bound(pair, a, epsilon);
    *b_out = b;
    const double p0 = pair.mass(Regime::PreChange, a, b);
    const double p1 = pair.mass(Regime::PostChange, a, b);
    return interval_kl(pair, total, a, b, p0, p1);
}

CensoringPolicy finish(const DistributionPair& pair, double epsilon, double a, double b) {
    return interval_policy(pair, a, b, epsilon);
}

}  // namespace

CensoringPolicy optimize_policy_serial(const DistributionPair& pair, double epsilon, double grid_step) {
    const SweepSetup s = sweep_setup(pair, epsilon, grid_step);
    if (epsilon >= 1.0) {
        return full_send_policy();
    }
    double best = -std::numeric_limits<double>::infinity();
    double best_a = 0.0;
    double best_b = 0.0;
    bool found = false;
    for (std::size_t i = 0; i < s.count; ++i) {
        const double a = pair.search_lo() + static_cast<double>(i) * grid_step;
        double b = a;
        const double v = candidate_value(pair, epsilon, a, s.total, &b);
        if (std::isnan(v)) {
            continue;
        }
        if (!found || v > best) {
            best = v;
            best_a = a;
            best_b = b;
            found = true;
        }
    }
    if (!found) {
        throw Error(ErrorKind::InfeasibleBudget, "no feasible left endpoint on the search grid");
    }
    return finish(pair, epsilon, best_a, best_b);
}

CensoringPolicy optimize_policy(const DistributionPair& pair, double epsilon, double grid_step) {
    const SweepSetup s = sweep_setup(pair, epsilon, grid_step);
    if (epsilon >= 1.0) {
        return full_send_policy();
    }
    std::vector<double> value(s.count);
    std::vector<double> right(s.count);
    const auto n = static_cast<long long>(s.count);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < n; ++i) {
        const double a = pair.search_lo() + static_cast<double>(i) * grid_step;
        double b = a;
        value[static_cast<std::size_t>(i)] = candidate_value(pair, epsilon, a, s.total, &b);
        right[static_cast<std::size_t>(i)] = b;
    }
    std::size_t best = s.count;
    for (std::size_t i = 0; i < s.count; ++i) {
        if (std::isnan(value[i])) {
            continue;
        }
        if (best == s.count || value[i] > value[best]) {
            best = i;
        }
    }
    if (best == s.count) {
        throw Error(ErrorKind::InfeasibleBudget, "no feasible left endpoint on the search grid");
    }
    const double a = pair.search_lo() + static_cast<double>(best) * grid_step;
    return finish(pair, epsilon, a, right[best]);
}

std::string serialize(const CensoringPolicy& policy) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "kind=%s\na=%.17g\nb=%.17g\nepsilon=%.17g\np0_region=%.17g\np1_region=%.17g\n",
                  policy.kind == PolicyKind::Random ? "random" : "interval", policy.no_send_lo,
                  policy.no_send_hi, policy.epsilon, policy.p0_region, policy.p1_region);
    return buf;
}

namespace {

double parse_real(const std::string& key, const std::string& text) {
    if (text == "-inf") {
        return -std::numeric_limits<double>::infinity();
    }
    if (text == "inf") {
        return std::numeric_limits<double>::infinity();
    }
    double v = 0.0;
    const auto* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, v);
    if (res.ec != std::errc{} || res.ptr != end) {
        throw Error(ErrorKind::InvalidInput, "policy record: bad value for " + key);
    }
    return v;
}

}  // namespace

CensoringPolicy parse_policy(std::string_view text) {
    std::map<std::string, std::string> kv;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) {
            eol = text.size();
        }
        const auto line = text.substr(pos, eol - pos);
        pos = eol + 1;
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorKind::InvalidInput, "policy record: line without '='");
        }
        kv[std::string(line.substr(0, eq))] = std::string(line.substr(eq + 1));
    }
    for (const char* key : {"kind", "a", "b", "epsilon", "p0_region", "p1_region"}) {
        if (!kv.count(key)) {
            throw Error(ErrorKind::InvalidInput, std::string("policy record: missing ") + key);
        }
    }
    CensoringPolicy p;
    if (kv["kind"] == "random") {
        p.kind = PolicyKind::Random;
    } else if (kv["kind"] == "interval") {
        p.kind = PolicyKind::Interval;
    } else {
        throw Error(ErrorKind::InvalidInput, "policy record: unknown kind " + kv["kind"]);
    }
    p.no_send_lo = parse_real("a", kv["a"]);
    p.no_send_hi = parse_real("b", kv["b"]);
    p.epsilon = parse_real("epsilon", kv["epsilon"]);
    p.p0_region = parse_real("p0_region", kv["p0_region"]);
    p.p1_region = parse_real("p1_region", kv["p1_region"]);
    return p;
}

}  // namespace cqcd
