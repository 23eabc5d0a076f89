#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "cqcd/error.hpp"

namespace cqcd {

using RealFn = std::function<double(double)>;

/// Composite Simpson rule with `panels` subintervals (must be even, >= 2).
template <class F>
double simpson(F&& f, double lo, double hi, int panels) {
    if (panels < 2 || panels % 2 != 0) {
        throw Error(ErrorKind::InvalidParameter, "simpson: panels must be even and >= 2");
    }
    const double h = (hi - lo) / panels;
    double odd = 0.0;
    double even = 0.0;
    for (int i = 1; i < panels; ++i) {
        const double v = f(lo + i * h);
        if (i % 2 != 0) {
            odd += v;
        } else {
            even += v;
        }
    }
    return h / 3.0 * (f(lo) + f(hi) + 4.0 * odd + 2.0 * even);
}

/// Running integral of f from `lo`, tabulated cell by cell with Simpson's rule.
/// Queries at arbitrary x add one more Simpson panel pair over the partial cell,
/// so every region probability in the library comes from the same rule.
class CumulativeIntegral {
public:
    CumulativeIntegral() = default;
    CumulativeIntegral(RealFn f, double lo, double hi, double cell);

    /// Integral over [lo, x]; clamped to [lo, hi].
    double operator()(double x) const;
    /// Integral over [u, v] (signed integrand allowed); zero when v <= u.
    double between(double u, double v) const;
    double total() const { return cum_.empty() ? 0.0 : cum_.back(); }

    double lo() const { return lo_; }
    double hi() const { return hi_; }
    double cell() const { return cell_; }

private:
    RealFn f_;
    double lo_ = 0.0;
    double hi_ = 0.0;
    double cell_ = 1.0;
    std::vector<double> cum_;    // integral up to node i
    std::vector<double> fnode_;  // f at node i
};

}  // namespace cqcd
