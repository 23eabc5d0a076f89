#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string_view>

#include "cqcd/quadrature.hpp"
#include "cqcd/rng.hpp"

namespace cqcd {

enum class Regime { PreChange, PostChange };

std::string_view to_string(Regime regime) noexcept;

/// Shape of the log-likelihood ratio over the support.
enum class LrShape { Increasing, Decreasing, Constant, NonMonotone };

/// User-supplied description of an observation model. Only the densities,
/// samplers and support are required; the rest are optional accelerators.
struct PairFunctions {
    RealFn pdf0;
    RealFn pdf1;
    std::function<double(Rng&)> sampler0;
    std::function<double(Rng&)> sampler1;
    double support_lo = 0.0;
    double support_hi = 0.0;

    /// Closed-form ln(f1/f0). Falls back to the density ratio when empty.
    RealFn log_lr;
    /// Inverse of a monotone log_lr. Falls back to bisection when empty.
    RealFn log_lr_inverse;
    /// Shape of log_lr, if known. Detected numerically otherwise.
    std::optional<LrShape> lr_shape;
    /// Range swept by the censoring optimizer. Defaults to the support.
    std::optional<double> search_lo;
    std::optional<double> search_hi;
};

/// Pre- and post-change observation models. Immutable after construction and
/// cheap to copy (shared state); safe to use from many threads.
class DistributionPair {
public:
    static constexpr double kTableCell = 1e-3;

    explicit DistributionPair(PairFunctions fns, double table_cell = kTableCell);

    double pdf(Regime regime, double x) const;
    double sample(Regime regime, Rng& rng) const;

    /// ln(f1(x) / f0(x)). Throws AbsoluteContinuityViolation when either density vanishes.
    double log_lr(double x) const;

    /// x with log_lr(x) == y, clamped to the support. Monotone models only.
    double log_lr_inverse(double y) const;

    /// Probability of [lo, hi] under the regime (Simpson tables, clamped to the support).
    double mass(Regime regime, double lo, double hi) const;
    /// Integral of log_lr * f1 over [lo, hi].
    double llr_moment_post(double lo, double hi) const;

    LrShape lr_shape() const;
    double support_lo() const;
    double support_hi() const;
    double search_lo() const;
    double search_hi() const;

private:
    struct State;
    std::shared_ptr<const State> state_;
};

/// Equal-variance Gaussian mean shift N(mu0, sigma^2) -> N(mu1, sigma^2).
/// Integration support spans 10 sigma beyond both means; the optimizer search
/// range spans 3.5 sigma ([-3.5, 4.5] for the unit shift).
DistributionPair gaussian_mean_shift(double mu0, double mu1, double sigma);

double log_lr(const DistributionPair& pair, double x);

/// D(P1 || Pinf) by composite Simpson over the support.
double kl_divergence(const DistributionPair& pair, int panels = 10000);
/// D(P0 || P1) = integral of ln(f0/f1) f0, same quadrature.
double reverse_kl_divergence(const DistributionPair& pair, int panels = 10000);

double sample(const DistributionPair& pair, Regime regime, Rng& rng);

}  // namespace cqcd
