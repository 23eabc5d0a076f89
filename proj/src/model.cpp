#include "cqcd/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cqcd {

std::string_view to_string(Regime regime) noexcept {
    return regime == Regime::PreChange ? "pre-change" : "post-change";
}

struct DistributionPair::State {
    PairFunctions fns;
    LrShape shape = LrShape::NonMonotone;
    double search_lo = 0.0;
    double search_hi = 0.0;
    CumulativeIntegral cdf0;
    CumulativeIntegral cdf1;
    CumulativeIntegral llr_f1;

    double llr(double x) const {
        if (fns.log_lr) {
            return fns.log_lr(x);
        }
        const double f0 = fns.pdf0(x);
        const double f1 = fns.pdf1(x);
        if (!(f0 > 0.0) || !(f1 > 0.0)) {
            throw Error(ErrorKind::AbsoluteContinuityViolation,
                        "density vanishes at x = " + std::to_string(x));
        }
        return std::log(f1 / f0);
    }
};

namespace {

LrShape detect_shape(const std::function<double(double)>& llr, double lo, double hi) {
    constexpr int kProbes = 2000;
    constexpr double kTol = 1e-12;
    bool up = false;
    bool down = false;
    double prev = llr(lo);
    double span = std::abs(prev);
    for (int i = 1; i <= kProbes; ++i) {
        const double v = llr(lo + (hi - lo) * i / kProbes);
        if (v > prev + kTol) {
            up = true;
        } else if (v < prev - kTol) {
            down = true;
        }
        span = std::max(span, std::abs(v));
        prev = v;
    }
    if (up && down) {
        return LrShape::NonMonotone;
    }
    if (up) {
        return LrShape::Increasing;
    }
    if (down) {
        return LrShape::Decreasing;
    }
    return LrShape::Constant;
}

}  // namespace

DistributionPair::DistributionPair(PairFunctions fns, double table_cell) {
    if (!fns.pdf0 || !fns.pdf1 || !fns.sampler0 || !fns.sampler1) {
        throw Error(ErrorKind::InvalidParameter, "distribution pair needs both densities and samplers");
    }
    if (!(fns.support_hi > fns.support_lo) || !std::isfinite(fns.support_lo) ||
        !std::isfinite(fns.support_hi)) {
        throw Error(ErrorKind::InvalidParameter, "support must be a finite interval with hi > lo");
    }
    auto st = std::make_shared<State>();
    const double lo = fns.support_lo;
    const double hi = fns.support_hi;

    constexpr int kProbes = 1000;
    for (int i = 0; i <= kProbes; ++i) {
        const double x = lo + (hi - lo) * i / kProbes;
        const double f0 = fns.pdf0(x);
        const double f1 = fns.pdf1(x);
        if (!(f0 > 0.0) || !(f1 > 0.0)) {
            throw Error(ErrorKind::AbsoluteContinuityViolation,
                        "densities must be strictly positive on the support");
        }
    }

    st->search_lo = fns.search_lo.value_or(lo);
    st->search_hi = fns.search_hi.value_or(hi);
    if (!(st->search_hi > st->search_lo) || st->search_lo < lo || st->search_hi > hi) {
        throw Error(ErrorKind::InvalidParameter, "search range must lie inside the support");
    }
    st->fns = std::move(fns);
    const State* raw = st.get();
    const auto llr = [raw](double x) { return raw->llr(x); };
    st->shape = st->fns.lr_shape ? *st->fns.lr_shape : detect_shape(llr, lo, hi);

    st->cdf0 = CumulativeIntegral(st->fns.pdf0, lo, hi, table_cell);
    st->cdf1 = CumulativeIntegral(st->fns.pdf1, lo, hi, table_cell);
    st->llr_f1 = CumulativeIntegral([raw](double x) { return raw->llr(x) * raw->fns.pdf1(x); }, lo, hi,
                                    table_cell);
    constexpr double kMinMass = 1.0 - 1e-3;
    if (st->cdf0.total() < kMinMass || st->cdf1.total() < kMinMass) {
        throw Error(ErrorKind::InvalidDistribution, "support truncates more than 1e-3 of the mass");
    }
    state_ = std::move(st);
}

double DistributionPair::pdf(Regime regime, double x) const {
    return regime == Regime::PreChange ? state_->fns.pdf0(x) : state_->fns.pdf1(x);
}

double DistributionPair::sample(Regime regime, Rng& rng) const {
    return regime == Regime::PreChange ? state_->fns.sampler0(rng) : state_->fns.sampler1(rng);
}

double DistributionPair::log_lr(double x) const { return state_->llr(x); }

double DistributionPair::log_lr_inverse(double y) const {
    const State& st = *state_;
    if (st.shape != LrShape::Increasing && st.shape != LrShape::Decreasing) {
        throw Error(ErrorKind::UnsupportedModel, "log-likelihood ratio is not strictly monotone");
    }
    const double lo = st.fns.support_lo;
    const double hi = st.fns.support_hi;
    if (st.fns.log_lr_inverse) {
        return std::clamp(st.fns.log_lr_inverse(y), lo, hi);
    }
    const bool inc = st.shape == LrShape::Increasing;
    double a = lo;
    double b = hi;
    // Keep "ascending side" in b so the loop body is shape-agnostic.
    for (int it = 0; it < 200 && b - a > 1e-13 * (1.0 + std::abs(a)); ++it) {
        const double m = 0.5 * (a + b);
        const bool below = st.llr(m) < y;
        if (below == inc) {
            a = m;
        } else {
            b = m;
        }
    }
    return 0.5 * (a + b);
}

double DistributionPair::mass(Regime regime, double lo, double hi) const {
    const auto& cdf = regime == Regime::PreChange ? state_->cdf0 : state_->cdf1;
    return std::max(0.0, cdf.between(lo, hi));
}

double DistributionPair::llr_moment_post(double lo, double hi) const {
    return state_->llr_f1.between(lo, hi);
}

LrShape DistributionPair::lr_shape() const { return state_->shape; }
double DistributionPair::support_lo() const { return state_->fns.support_lo; }
double DistributionPair::support_hi() const { return state_->fns.support_hi; }
double DistributionPair::search_lo() const { return state_->search_lo; }
double DistributionPair::search_hi() const { return state_->search_hi; }

DistributionPair gaussian_mean_shift(double mu0, double mu1, double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma) || !std::isfinite(mu0) || !std::isfinite(mu1)) {
        throw Error(ErrorKind::InvalidParameter, "gaussian_mean_shift: sigma must be positive and finite");
    }
    const double norm = 1.0 / (sigma * std::sqrt(2.0 * std::numbers::pi));
    const auto density = [norm, sigma](double mu) {
        return [norm, sigma, mu](double x) {
            const double z = (x - mu) / sigma;
            return norm * std::exp(-0.5 * z * z);
        };
    };
    const auto sampler = [sigma](double mu) {
        return [sigma, mu](Rng& rng) { return mu + sigma * rng.normal(); };
    };
    const double s2 = sigma * sigma;
    const double shift = mu1 - mu0;
    const double mid = 0.5 * (mu0 + mu1);

    PairFunctions fns;
    fns.pdf0 = density(mu0);
    fns.pdf1 = density(mu1);
    fns.sampler0 = sampler(mu0);
    fns.sampler1 = sampler(mu1);
    const double low = std::min(mu0, mu1);
    const double high = std::max(mu0, mu1);
    fns.support_lo = low - 10.0 * sigma;
    fns.support_hi = high + 10.0 * sigma;
    fns.search_lo = low - 3.5 * sigma;
    fns.search_hi = high + 3.5 * sigma;
    // ln(f1/f0) = shift (x - mid) / sigma^2
    fns.log_lr = [shift, mid, s2](double x) { return shift * (x - mid) / s2; };
    if (shift > 0.0) {
        fns.lr_shape = LrShape::Increasing;
    } else if (shift < 0.0) {
        fns.lr_shape = LrShape::Decreasing;
    } else {
        fns.lr_shape = LrShape::Constant;
    }
    if (shift != 0.0) {
        fns.log_lr_inverse = [shift, mid, s2](double y) { return mid + y * s2 / shift; };
    }
    return DistributionPair(std::move(fns));
}

double log_lr(const DistributionPair& pair, double x) { return pair.log_lr(x); }

namespace {

double kl_quadrature(const DistributionPair& pair, Regime under, int panels) {
    const double sign = under == Regime::PostChange ? 1.0 : -1.0;
    const double value = simpson(
        [&](double x) {
            const double f = pair.pdf(under, x);
            const double l = pair.log_lr(x);
            return sign * l * f;
        },
        pair.support_lo(), pair.support_hi(), panels);
    if (!std::isfinite(value)) {
        throw Error(ErrorKind::DivergenceInfinite, "K-L integrand is not finite");
    }
    return std::max(0.0, value);
}

}  // namespace

double kl_divergence(const DistributionPair& pair, int panels) {
    return kl_quadrature(pair, Regime::PostChange, panels);
}

double reverse_kl_divergence(const DistributionPair& pair, int panels) {
    return kl_quadrature(pair, Regime::PreChange, panels);
}

double sample(const DistributionPair& pair, Regime regime, Rng& rng) { return pair.sample(regime, rng); }

}  // namespace cqcd
