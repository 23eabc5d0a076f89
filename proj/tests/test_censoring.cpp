#include "doctest.h"

#include <cmath>
#include <random>

#include "cqcd/censoring.hpp"
#include "oracles.hpp"

using namespace cqcd;

namespace {

const DistributionPair& unit() {
    static const auto pair = gaussian_mean_shift(0.0, 1.0, 1.0);
    return pair;
}

ErrorKind kind_of(const auto& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an Error");
    return ErrorKind::InvalidInput;
}

double region_mass(const CensoringPolicy& p) { return oracle::normal_cdf(p.no_send_hi) - oracle::normal_cdf(p.no_send_lo); }

}  // namespace

TEST_CASE("apply_policy: closed no-send interval") {
    const auto full = full_send_policy();
    for (double x : {-5.0, -1.0, 0.0, 0.5, 3.0}) {
        const auto obs = apply_policy(full, x);
        CHECK(obs.sent);
        CHECK(obs.value == x);
    }
    const auto p = optimize_policy(unit(), 0.5, 1e-3);
    const double inside = 0.5 * (p.no_send_lo + p.no_send_hi);
    CHECK_FALSE(apply_policy(p, inside).sent);
    CHECK_FALSE(apply_policy(p, p.no_send_lo).sent);
    CHECK_FALSE(apply_policy(p, p.no_send_hi).sent);
    CHECK(apply_policy(p, std::nextafter(p.no_send_lo, -10.0)).sent);
    CHECK(apply_policy(p, std::nextafter(p.no_send_hi, 10.0)).sent);
}

TEST_CASE("censored_log_lr") {
    CHECK(censored_log_lr(full_send_policy(), unit(), CensoredObservation::Sent(0.5)) == doctest::Approx(0.0));
    CHECK(censored_log_lr(full_send_policy(), unit(), CensoredObservation::Sent(2.0)) == doctest::Approx(1.5));

    SUBCASE("equal-mass region is uninformative") {
        // Symmetric about 0.5, so f0 and f1 give it the same mass.
        const auto p = interval_policy(unit(), -0.7, 1.7, 1.0);
        CHECK(p.p0_region == doctest::Approx(p.p1_region).epsilon(1e-12));
        CHECK(std::abs(censored_log_lr(p, unit(), CensoredObservation::NoSend())) < 1e-10);
    }
    SUBCASE("optimal region at eps = 0.1 against the erfc oracle") {
        const auto p = optimize_policy(unit(), 0.1, 1e-3);
        const double p0 = oracle::normal_cdf(p.no_send_hi) - oracle::normal_cdf(p.no_send_lo);
        const double p1 = oracle::normal_cdf(p.no_send_hi - 1.0) - oracle::normal_cdf(p.no_send_lo - 1.0);
        CHECK(censored_log_lr(p, unit(), CensoredObservation::NoSend()) == doctest::Approx(std::log(p1 / p0)).epsilon(1e-9));
        CHECK(p.p0_region == doctest::Approx(p0).epsilon(1e-10));
        CHECK(p.p1_region == doctest::Approx(p1).epsilon(1e-10));
    }
    SUBCASE("zero-probability region") {
        CensoringPolicy p;
        p.kind = PolicyKind::Interval;
        p.no_send_lo = p.no_send_hi = 0.0;
        p.p0_region = p.p1_region = 0.0;
        CHECK(kind_of([&] { censored_log_lr(p, unit(), CensoredObservation::NoSend()); }) ==
              ErrorKind::DegeneratePolicy);
    }
}

TEST_CASE("post_censoring_kl: boundary cases and closed form") {
    CHECK(post_censoring_kl(full_send_policy(), unit()) == doctest::Approx(0.5).epsilon(1e-9));
    const auto all = interval_policy(unit(), unit().support_lo(), unit().support_hi(), 1.0);
    CHECK(std::abs(post_censoring_kl(all, unit())) < 1e-9);

    const auto half = optimize_policy(unit(), 0.5, 1e-3);
    const double kl = post_censoring_kl(half, unit());
    CHECK(kl > 0.25);  // random transmission at eps = 0.5 delivers 0.5 * 0.5
    CHECK(kl < 0.5);
    CHECK(kl == doctest::Approx(oracle::interval_kl(1.0, half.no_send_lo, half.no_send_hi)).epsilon(1e-9));
}

TEST_CASE("solve_companion_bound") {
    CHECK(solve_companion_bound(unit(), 0.3, 1.0) == 0.3);
    const double b = solve_companion_bound(unit(), -3.5, 0.5);
    CHECK(std::abs(b - oracle::companion(-3.5, 0.5)) < 1e-6);
    CHECK(std::abs(oracle::normal_cdf(b) - oracle::normal_cdf(-3.5) - 0.5) < 1e-6);
    CHECK(b == doctest::Approx(0.000583).epsilon(0.05));
    CHECK(kind_of([] { solve_companion_bound(unit(), 1.0, 0.5); }) == ErrorKind::NoSolution);
}

TEST_CASE("optimize_policy: equality constraint and brute-force optimality") {
    const auto full = optimize_policy(unit(), 1.0, 1e-3);
    CHECK(full.sends_everything());
    CHECK(post_censoring_kl(full, unit()) == doctest::Approx(0.5).epsilon(1e-9));

    const auto p = optimize_policy(unit(), 0.1, 1e-3);
    CHECK(std::abs(region_mass(p) - 0.9) < 1e-6);
    CHECK(std::abs(p.p0_region - 0.9) < 1e-6);
    CHECK(p.kind == PolicyKind::Interval);
    const double got = post_censoring_kl(p, unit());

    // Every single interval on a 0.01 grid, scored by the closed form.
    double best = 0.0;
    for (double a = -3.5; a <= 4.5; a += 0.01) {
        if (oracle::normal_cdf(-a) < 0.9) break;
        best = std::max(best, oracle::interval_kl(1.0, a, oracle::companion(a, 0.9)));
    }
    CHECK(got >= best - 1e-9);
    CHECK(got == doctest::Approx(0.34118).epsilon(1e-4));
}

TEST_CASE("optimize_policy: errors") {
    CHECK(kind_of([] { optimize_policy(unit(), 0.0, 1e-3); }) == ErrorKind::InvalidParameter);
    CHECK(kind_of([] { optimize_policy(unit(), 1.2, 1e-3); }) == ErrorKind::InvalidParameter);
    CHECK(kind_of([] { optimize_policy(unit(), 0.5, 0.0); }) == ErrorKind::InvalidParameter);

    PairFunctions narrow;
    narrow.pdf0 = oracle::normal_pdf;
    narrow.pdf1 = [](double x) { return oracle::normal_pdf(x - 1.0); };
    narrow.sampler0 = [](Rng& r) { return r.normal(); };
    narrow.sampler1 = [](Rng& r) { return 1.0 + r.normal(); };
    narrow.support_lo = -10.0;
    narrow.support_hi = 11.0;
    narrow.search_lo = 2.0;
    narrow.search_hi = 3.0;
    const DistributionPair far_right(narrow);
    CHECK(kind_of([&] { optimize_policy(far_right, 0.1, 1e-3); }) == ErrorKind::InfeasibleBudget);

    PairFunctions scale = narrow;
    scale.search_lo.reset();
    scale.search_hi.reset();
    scale.pdf1 = [](double x) { return oracle::normal_pdf(x / 2.0) / 2.0; };
    scale.sampler1 = [](Rng& r) { return 2.0 * r.normal(); };
    scale.support_hi = 10.0;
    const DistributionPair variance(scale);
    CHECK(kind_of([&] { optimize_policy(variance, 0.5, 1e-3); }) == ErrorKind::UnsupportedModel);

    CHECK(kind_of([] { interval_policy(unit(), 0.0, 0.1, 0.1); }) == ErrorKind::InfeasibleBudget);
    CHECK(kind_of([] { interval_policy(unit(), 0.2, 0.1, 0.5); }) == ErrorKind::InvalidParameter);
}

TEST_CASE("optimize_policy: parallel and serial sweeps agree exactly") {
    for (double eps : {0.1, 0.35, 0.8}) {
        const auto par = optimize_policy(unit(), eps, 1e-3);
        const auto ser = optimize_policy_serial(unit(), eps, 1e-3);
        CHECK(par.no_send_lo == ser.no_send_lo);
        CHECK(par.no_send_hi == ser.no_send_hi);
        CHECK(par.p1_region == ser.p1_region);
    }
}

TEST_CASE("random_policy") {
    const auto always = random_policy(1.0);
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) CHECK(apply_policy(always, rng.normal(), rng).sent);

    const auto p = random_policy(0.1);
    long sent = 0;
    constexpr int n = 100000;
    for (int i = 0; i < n; ++i) sent += apply_policy(p, rng.normal(), rng).sent ? 1 : 0;
    CHECK(std::abs(static_cast<double>(sent) / n - 0.1) < 0.01);
    CHECK(censored_log_lr(p, unit(), CensoredObservation::NoSend()) == 0.0);
    CHECK(p.p0_region == doctest::Approx(0.9));
    CHECK(p.p1_region == doctest::Approx(0.9));
    CHECK(post_censoring_kl(p, unit()) == doctest::Approx(0.05).epsilon(1e-8));
}

TEST_CASE("property: data-processing inequality over random intervals") {
    std::mt19937_64 gen(21);
    std::uniform_real_distribution<double> u(-4.0, 5.0);
    for (int i = 0; i < 1000; ++i) {
        double a = u(gen), b = u(gen);
        if (a > b) std::swap(a, b);
        const auto p = interval_policy(unit(), a, b, 1.0);
        const double kl = post_censoring_kl(p, unit());
        CHECK(kl >= -1e-12);
        CHECK(kl <= 0.5 + 1e-8);
        CHECK(kl == doctest::Approx(oracle::interval_kl(1.0, a, b)).epsilon(1e-9).scale(1.0));
    }
}

TEST_CASE("property: shrinking a region to the exact budget never loses information") {
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> u(-2.5, 3.0);
    const double eps = 0.4;
    int checked = 0;
    while (checked < 200) {
        double a = u(gen), b = u(gen);
        if (a > b) std::swap(a, b);
        if (region_mass({PolicyKind::Interval, a, b}) <= 1.0 - eps) continue;
        const double before = oracle::interval_kl(1.0, a, b);
        // Trim the more informative end (larger |log-LR|) and the other end.
        const double keep_left = oracle::normal_quantile(oracle::normal_cdf(a) + (1.0 - eps));
        const double keep_right = oracle::normal_quantile(oracle::normal_cdf(b) - (1.0 - eps));
        const bool right_more_informative = std::abs(b - 0.5) > std::abs(a - 0.5);
        const auto shrunk = right_more_informative ? interval_policy(unit(), a, keep_left, eps)
                                                   : interval_policy(unit(), keep_right, b, eps);
        CHECK(std::abs(shrunk.p0_region - (1.0 - eps)) < 1e-6);
        CHECK(post_censoring_kl(shrunk, unit()) >= before - 1e-9);
        CHECK(oracle::interval_kl(1.0, a, keep_left) >= before - 1e-12);
        CHECK(oracle::interval_kl(1.0, keep_right, b) >= before - 1e-12);
        ++checked;
    }
}

TEST_CASE("property: two intervals never beat the best single interval") {
    for (double eps : {0.3, 0.6}) {
        const double single = post_censoring_kl(optimize_policy(unit(), eps, 1e-3), unit());
        const double two = oracle::best_two_interval_kl(1.0, eps, -3.5, 4.5, 0.05);
        CHECK(two <= single + 1e-4);
    }
}

TEST_CASE("property: library union-region K-L matches the closed form") {
    const double lo[2] = {-1.2, 0.4};
    const double hi[2] = {-0.3, 0.9};
    const double p0 = oracle::normal_cdf(-0.3) - oracle::normal_cdf(-1.2) + oracle::normal_cdf(0.9) - oracle::normal_cdf(0.4);
    const double p1 = oracle::normal_cdf(-1.3) - oracle::normal_cdf(-2.2) + oracle::normal_cdf(-0.1) - oracle::normal_cdf(-0.6);
    const auto inside = [](double a, double b) {
        return oracle::normal_pdf(a - 1.0) - oracle::normal_pdf(b - 1.0) +
               0.5 * (oracle::normal_cdf(b - 1.0) - oracle::normal_cdf(a - 1.0));
    };
    const double want = 0.5 - inside(-1.2, -0.3) - inside(0.4, 0.9) + p1 * std::log(p1 / p0);
    CHECK(union_region_kl(unit(), lo, hi, 2) == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("property: optimizer stable under grid halving and monotone in epsilon") {
    double prev = 0.0;
    for (int i = 1; i <= 10; ++i) {
        const double eps = i / 10.0;
        const auto fine = optimize_policy(unit(), eps, 1e-3);
        const double kl = post_censoring_kl(fine, unit());
        CHECK(kl >= prev - 1e-12);
        prev = kl;
        if (eps < 1.0) {
            const auto coarse = optimize_policy(unit(), eps, 2e-3);
            CHECK(std::abs(coarse.no_send_lo - fine.no_send_lo) <= 2e-3 + 1e-12);
            CHECK(std::abs(coarse.no_send_hi - fine.no_send_hi) <= 2e-3 + 1e-9);
        }
    }
}

TEST_CASE("policy record round trip") {
    for (const auto& p : {optimize_policy(unit(), 0.3, 1e-3), random_policy(0.25), full_send_policy()}) {
        const auto q = parse_policy(serialize(p));
        CHECK(q.kind == p.kind);
        CHECK(q.no_send_lo == p.no_send_lo);
        CHECK(q.no_send_hi == p.no_send_hi);
        CHECK(q.epsilon == p.epsilon);
        CHECK(q.p0_region == p.p0_region);
        CHECK(q.p1_region == p.p1_region);
    }
    CHECK(kind_of([] { parse_policy("kind=interval\na=0\n"); }) == ErrorKind::InvalidInput);
    CHECK(kind_of([] { parse_policy("kind=square\na=0\nb=1\nepsilon=1\np0_region=0\np1_region=0\n"); }) ==
          ErrorKind::InvalidInput);
}
