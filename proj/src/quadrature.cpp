#include "cqcd/quadrature.hpp"

#include <algorithm>
#include <cmath>

namespace cqcd {

CumulativeIntegral::CumulativeIntegral(RealFn f, double lo, double hi, double cell)
    : f_(std::move(f)), lo_(lo), hi_(hi) {
    if (!(hi > lo) || !(cell > 0.0)) {
        throw Error(ErrorKind::InvalidParameter, "cumulative integral: need hi > lo and cell > 0");
    }
    const auto cells = static_cast<std::size_t>(std::ceil((hi - lo) / cell));
    cell_ = (hi - lo) / static_cast<double>(cells);
    cum_.resize(cells + 1);
    fnode_.resize(cells + 1);
    fnode_[0] = f_(lo_);
    cum_[0] = 0.0;
    for (std::size_t i = 0; i < cells; ++i) {
        const double a = lo_ + static_cast<double>(i) * cell_;
        const double b = (i + 1 == cells) ? hi_ : a + cell_;
        fnode_[i + 1] = f_(b);
        const double mid = f_(0.5 * (a + b));
        cum_[i + 1] = cum_[i] + (b - a) / 6.0 * (fnode_[i] + 4.0 * mid + fnode_[i + 1]);
    }
}

double CumulativeIntegral::operator()(double x) const {
    if (cum_.empty() || x <= lo_) {
        return 0.0;
    }
    if (x >= hi_) {
        return cum_.back();
    }
    const auto cells = cum_.size() - 1;
    auto i = static_cast<std::size_t>((x - lo_) / cell_);
    i = std::min(i, cells - 1);
    const double a = lo_ + static_cast<double>(i) * cell_;
    const double w = x - a;
    if (w <= 0.0) {
        return cum_[i];
    }
    return cum_[i] + w / 6.0 * (fnode_[i] + 4.0 * f_(a + 0.5 * w) + f_(x));
}

double CumulativeIntegral::between(double u, double v) const {
    if (!(v > u)) {
        return 0.0;
    }
    return (*this)(v) - (*this)(u);
}

}  // namespace cqcd
