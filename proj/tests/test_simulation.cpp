#include "doctest.h"

#include <cmath>
#include <sstream>

#include "cqcd/simulation.hpp"
#include "cqcd/srp_numerics.hpp"

using namespace cqcd;

namespace {

ExperimentConfig quick(PolicyChoice policy, double eps) {
    ExperimentConfig cfg;
    cfg.policy = policy;
    cfg.epsilon = eps;
    cfg.seed = 2024;
    return cfg;
}

bool overlap(const PerformanceEstimate& a, const PerformanceEstimate& b) {
    return std::abs(a.mean - b.mean) <= a.half_width_95 + b.half_width_95;
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

}  // namespace

TEST_CASE("config validation names the field") {
    auto cfg = quick(PolicyChoice::Censoring, 1.5);
    try {
        cfg.validate();
        FAIL("accepted epsilon 1.5");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidParameter);
        CHECK(std::string(e.what()).find("epsilon") != std::string::npos);
    }
    cfg.epsilon = 0.5;
    cfg.change_points.clear();
    CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::InvalidParameter);
    cfg.change_points = {1};
    cfg.runs = 0;
    CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::InvalidParameter);
    cfg.runs = 10;
    cfg.target_arl = 1.0;
    CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::InvalidParameter);
    CHECK(kind_of([] { parse_policy_choice("greedy"); }) == ErrorKind::InvalidParameter);
    CHECK(parse_detector_kind("srp") == DetectorKind::Srp);
}

TEST_CASE("summarize: mean and normal-approximation half width") {
    const auto est = summarize(Quantity::Arl, {1.0, 2.0, 3.0, 4.0});
    CHECK(est.mean == doctest::Approx(2.5));
    CHECK(est.half_width_95 == doctest::Approx(1.959963984540054 * std::sqrt(5.0 / 3.0 / 4.0)));
    CHECK(summarize(Quantity::Arl, {7.0}).half_width_95 == 0.0);
}

TEST_CASE("ARL: degenerate threshold stops immediately") {
    auto cfg = quick(PolicyChoice::FullSend, 1.0);
    cfg.runs = 200;
    const auto est = Experiment(cfg).estimate_arl(1e-12);
    CHECK(est.mean == 1.0);
    CHECK(est.half_width_95 == 0.0);
    CHECK(est.reliable());
    CHECK(kind_of([&] { Experiment(cfg).estimate_arl(0.0); }) == ErrorKind::InvalidParameter);
}

TEST_CASE("ARL at A = 690") {
    // Censoring at eps = 0.1 is what A = 690 was chosen for.
    const auto cens = Experiment(quick(PolicyChoice::Censoring, 0.1)).estimate_arl(690.0);
    CHECK(cens.mean == doctest::Approx(6500.0).epsilon(0.15));
    CHECK(cens.runs == 2000);
    CHECK(cens.cap_hits == 0);
    // Full-send CuSum runs out much sooner at the same threshold.
    const auto full = Experiment(quick(PolicyChoice::FullSend, 1.0)).estimate_arl(690.0);
    CHECK(full.mean == doctest::Approx(4480.0).epsilon(0.05));
}

TEST_CASE("ARL: two seeds agree within their intervals") {
    auto a = quick(PolicyChoice::Censoring, 0.1);
    auto b = a;
    b.seed = 99;
    const auto ea = Experiment(a).estimate_arl(300.0);
    const auto eb = Experiment(b).estimate_arl(300.0);
    CHECK(ea.mean != eb.mean);
    CHECK(overlap(ea, eb));
}

TEST_CASE("replicas are independent of worker count and execution path") {
    auto cfg = quick(PolicyChoice::Random, 0.3);
    cfg.runs = 300;
    cfg.delay_runs = 300;
    const Experiment exp(cfg);
    const auto serial = exp.estimate_arl(60.0, Execution::Serial);
    const auto parallel = exp.estimate_arl(60.0, Execution::Parallel);
    CHECK(serial.mean == parallel.mean);
    CHECK(serial.half_width_95 == parallel.half_width_95);
    auto four = cfg;
    four.workers = 4;
    CHECK(Experiment(four).estimate_worst_delay(60.0).mean == exp.estimate_worst_delay(60.0, Execution::Serial).mean);
    CHECK(Experiment(four).estimate_energy_rate().mean == exp.estimate_energy_rate(Execution::Serial).mean);
}

TEST_CASE("worst delay: equalizer rule for the censoring policy") {
    auto one = quick(PolicyChoice::Censoring, 0.1);
    auto five = one;
    five.change_points = {5};
    const auto d1 = Experiment(one).estimate_worst_delay(690.0);
    const auto d5 = Experiment(five).estimate_worst_delay(690.0);
    CHECK(d1.change_point == 1);
    CHECK(d5.change_point == 5);
    CHECK(overlap(d1, d5));
    CHECK(d1.mean > 10.0);
    CHECK(d1.mean < 30.0);
}

TEST_CASE("worst delay: DE-CuSum probes change times 1..10 and keeps the largest") {
    auto cfg = quick(PolicyChoice::DeCusum, 0.1);
    cfg.delay_runs = 500;
    const Experiment exp(cfg);
    CHECK(exp.is_de_cusum());
    CHECK(exp.de_cusum_increment() == doctest::Approx(0.5 / 9.0));
    const auto worst = exp.estimate_worst_delay(98.0);
    CHECK(worst.change_point >= 1);
    CHECK(worst.change_point <= 10);
    for (int nu = 1; nu <= 10; ++nu) {
        auto single = cfg;
        single.de_cusum_change_points = {nu};
        CHECK(Experiment(single).estimate_worst_delay(98.0).mean <= worst.mean);
    }
}

TEST_CASE("degenerate pair: no detectability, cap hits reported") {
    auto cfg = quick(PolicyChoice::FullSend, 1.0);
    cfg.pair = {0.0, 0.0, 1.0};
    cfg.target_arl = 50.0;
    cfg.runs = 40;
    cfg.delay_runs = 40;
    const Experiment exp(cfg);
    const auto arl = exp.estimate_arl(2.0);
    const auto delay = exp.estimate_worst_delay(2.0);
    CHECK(arl.cap_hits == 40);
    CHECK_FALSE(arl.reliable());
    CHECK(arl.mean == 5000.0);
    CHECK(delay.mean == doctest::Approx(arl.mean));
    CHECK_FALSE(delay.reliable());
}

TEST_CASE("energy rate") {
    CHECK(Experiment(quick(PolicyChoice::FullSend, 1.0)).estimate_energy_rate().mean == 1.0);
    for (auto kind : {PolicyChoice::Censoring, PolicyChoice::Random}) {
        const auto est = Experiment(quick(kind, 0.3)).estimate_energy_rate();
        CHECK(std::abs(est.mean - 0.3) < 0.01);
        CHECK(est.quantity == Quantity::EnergyRate);
        CHECK(est.runs == 20);
    }
    const auto de = Experiment(quick(PolicyChoice::DeCusum, 0.1)).estimate_energy_rate();
    CHECK(std::abs(de.mean - 0.1) < 0.02);
}

TEST_CASE("calibrate_threshold") {
    auto cfg = quick(PolicyChoice::Censoring, 0.3);
    cfg.target_arl = 500.0;
    cfg.runs = 1000;
    const Experiment exp(cfg);
    const auto cal = exp.calibrate_threshold();
    CHECK(std::abs(cal.arl.mean / 500.0 - 1.0) <= 0.05);
    CHECK(cal.threshold > 1.0);
    const auto again = exp.calibrate_threshold();
    CHECK(again.threshold == cal.threshold);
    CHECK(again.arl.mean == cal.arl.mean);

    auto flat = quick(PolicyChoice::FullSend, 1.0);
    flat.pair = {0.0, 0.0, 1.0};
    flat.target_arl = 1.5;
    flat.runs = 20;
    CHECK(kind_of([&] { Experiment(flat).calibrate_threshold(); }) == ErrorKind::CalibrationFailure);
}

TEST_CASE("SRP Monte Carlo agrees with the integral equations") {
    auto cfg = quick(PolicyChoice::Censoring, 0.1);
    cfg.detector = DetectorKind::Srp;
    cfg.runs = 3000;
    cfg.delay_runs = 6000;
    cfg.target_arl = 300.0;
    const Experiment exp(cfg);
    const auto numeric = evaluate_srp(exp.pair(), exp.policy(), 150.0, cfg.srp_grid_step);
    const auto arl = exp.estimate_arl(150.0);
    const auto delay = exp.estimate_worst_delay(150.0);
    CHECK(std::abs(arl.mean / numeric.arl - 1.0) < 0.05);
    CHECK(std::abs(delay.mean / numeric.add - 1.0) < 0.05);
}

TEST_CASE("tradeoff sweep: rows, CSV and bit-identical reruns") {
    ExperimentConfig cfg = quick(PolicyChoice::Censoring, 1.0);
    cfg.target_arl = 300.0;
    cfg.runs = 400;
    cfg.delay_runs = 1000;
    cfg.energy_runs = 4;
    cfg.energy_horizon = 5000;
    const std::vector<double> eps{0.2, 0.6, 1.0};
    const auto rows = run_tradeoff_sweep(cfg, eps, {PolicyChoice::Censoring, PolicyChoice::Random});
    REQUIRE(rows.size() == 6);
    for (std::size_t i = 0; i < rows.size(); i += 2) {
        CHECK(rows[i].policy == PolicyChoice::Censoring);
        CHECK(rows[i + 1].policy == PolicyChoice::Random);
        CHECK(std::abs(rows[i].arl.mean / 300.0 - 1.0) <= 0.05);
        CHECK(rows[i].delay.mean <= rows[i + 1].delay.mean + rows[i].delay.half_width_95 + rows[i + 1].delay.half_width_95);
        CHECK(std::abs(rows[i].energy.mean - rows[i].epsilon) < 0.02);
        CHECK_FALSE(degraded(rows[i]));
    }
    // Censoring delay does not grow with the budget.
    CHECK(rows[2].delay.mean <= rows[0].delay.mean + rows[2].delay.half_width_95 + rows[0].delay.half_width_95);

    std::ostringstream first;
    write_csv(first, rows);
    CHECK(first.str().rfind("epsilon,policy,detector,threshold,arl_mean,arl_ci,delay_mean,delay_ci,energy_rate,runs,seed\n", 0) == 0);
    auto four = cfg;
    four.workers = 4;
    std::ostringstream second;
    write_csv(second, run_tradeoff_sweep(four, eps, {PolicyChoice::Censoring, PolicyChoice::Random}));
    CHECK(first.str() == second.str());
}

TEST_CASE("property: larger post-censoring K-L never means a larger delay") {
    // Five equal-budget intervals at eps = 0.3, from the optimum toward poor choices.
    const auto pair = gaussian_mean_shift(0.0, 1.0, 1.0);
    ExperimentConfig cfg = quick(PolicyChoice::Censoring, 0.3);
    cfg.target_arl = 1000.0;
    cfg.runs = 1000;
    cfg.delay_runs = 3000;
    const auto best = optimize_policy(pair, 0.3, 1e-3);
    std::vector<double> kls;
    std::vector<PerformanceEstimate> delays;
    for (double a : {best.no_send_lo, -1.6, -1.0, -0.7, -0.55}) {
        const auto policy = interval_policy(pair, a, solve_companion_bound(pair, a, 0.3), 0.3);
        const Experiment exp(cfg, policy);
        const auto cal = exp.calibrate_threshold();
        kls.push_back(post_censoring_kl(policy, pair));
        delays.push_back(exp.estimate_worst_delay(cal.threshold));
    }
    for (std::size_t i = 0; i < kls.size(); ++i) {
        for (std::size_t j = 0; j < kls.size(); ++j) {
            if (kls[i] > kls[j]) {
                CHECK(delays[i].mean <= delays[j].mean + delays[i].half_width_95 + delays[j].half_width_95);
            }
        }
    }
    CHECK(kls.front() > kls.back());
}
