#include "cqcd/srp_numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <unsupported/Eigen/IterativeSolvers>

#include "cqcd/error.hpp"

namespace cqcd {

Grid Grid::cover(double lo, double hi, double max_step) {
    if (!(hi > lo) || !(max_step > 0.0)) {
        throw Error(ErrorKind::InvalidParameter, "grid needs hi > lo and a positive step");
    }
    Grid g;
    g.lo = lo;
    g.hi = hi;
    g.count = static_cast<std::size_t>(std::ceil((hi - lo) / max_step - 1e-9));
    g.count = std::max<std::size_t>(g.count, 1);
    g.step = (hi - lo) / static_cast<double>(g.count);
    return g;
}

std::vector<double> Grid::nodes() const {
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        out[i] = node(i);
    }
    return out;
}

KernelMatrix KernelMatrix::from_entries(Grid grid, Regime regime, DenseMatrix entries) {
    const auto n = static_cast<Eigen::Index>(grid.count);
    if (entries.rows() != n || entries.cols() != n) {
        throw Error(ErrorKind::InvalidInput, "kernel dimensions do not match the grid");
    }
    if ((entries.array() < 0.0).any()) {
        throw Error(ErrorKind::InvalidInput, "kernel has negative entries");
    }
    Eigen::VectorXd rows = entries.rowwise().sum();
    if ((rows.array() > 1.0 + 1e-8).any()) {
        throw Error(ErrorKind::InvalidInput, "kernel row sums exceed one");
    }
    KernelMatrix k;
    k.grid = grid;
    k.regime = regime;
    k.entries = std::move(entries);
    k.absorbed = (1.0 - rows.array()).max(0.0).matrix();
    return k;
}

namespace {

// Everything a kernel row needs, hoisted out of the row loop.
struct RowBuilder {
    const DistributionPair& pair;
    Regime regime;
    Grid grid;
    LrShape shape;
    std::vector<double> log_edges;  // ln of edge j, j = 1..count
    double send_scale = 1.0;        // probability the sensor consults x at all
    double a = 0.0;                 // no-send interval in observation space
    double b = 0.0;
    double Fa = 0.0;
    double Fb = 0.0;
    double Ftot = 1.0;
    double ns_weight = 0.0;  // probability of the no-send symbol
    double ns_ratio = 1.0;   // likelihood ratio carried by the no-send symbol
    double const_llr = 0.0;

    RowBuilder(const DistributionPair& p, const CensoringPolicy& policy, double threshold_a, double step, Regime r)
        : pair(p), regime(r), grid(Grid::cover(0.0, threshold_a, step)), shape(p.lr_shape()) {
        if (shape == LrShape::NonMonotone) {
            throw Error(ErrorKind::UnsupportedModel, "SRP kernel needs a monotone likelihood ratio");
        }
        const double ninf = -std::numeric_limits<double>::infinity();
        if (policy.kind == PolicyKind::Random) {
            send_scale = policy.epsilon;
            a = b = ninf;
            ns_weight = 1.0 - policy.epsilon;
            ns_ratio = 1.0;
        } else if (policy.sends_everything()) {
            a = b = ninf;
        } else {
            a = policy.no_send_lo;
            b = policy.no_send_hi;
            ns_weight = pair.mass(regime, a, b);
            ns_ratio = policy.p1_region / policy.p0_region;
        }
        Fa = cdf(a);
        Fb = cdf(b);
        Ftot = cdf(pair.support_hi());
        if (shape == LrShape::Constant) {
            const_llr = pair.log_lr(0.5 * (pair.support_lo() + pair.support_hi()));
        }
        log_edges.resize(grid.count + 1);
        log_edges[0] = ninf;
        for (std::size_t j = 1; j <= grid.count; ++j) {
            log_edges[j] = std::log(grid.edge(j));
        }
    }

    double cdf(double x) const {
        return pair.mass(regime, -std::numeric_limits<double>::infinity(), x);
    }

    // P(sent and log_lr(x) <= y), before the random-policy send scaling.
    double sent_below(double y) const {
        const double t = pair.log_lr_inverse(y);
        if (shape == LrShape::Increasing) {
            if (t <= a) {
                return cdf(t);
            }
            if (t <= b) {
                return Fa;
            }
            return Fa + cdf(t) - Fb;
        }
        // Decreasing: log_lr(x) <= y  <=>  x >= t
        if (t >= b) {
            return Ftot - cdf(t);
        }
        if (t >= a) {
            return Ftot - Fb;
        }
        return Ftot - Fb + Fa - cdf(t);
    }

    double sent_total() const { return Ftot - Fb + Fa; }

    void add_atom(std::size_t i, double dest, double weight, DenseMatrix& k, Eigen::VectorXd& absorbed) const {
        if (weight <= 0.0) {
            return;
        }
        if (dest >= grid.hi) {
            absorbed(static_cast<Eigen::Index>(i)) += weight;
            return;
        }
        auto j = static_cast<std::size_t>(std::max(0.0, dest) / grid.step);
        j = std::min(j, grid.count - 1);
        k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += weight;
    }

    void fill_row(std::size_t i, DenseMatrix& k, Eigen::VectorXd& absorbed) const {
        const auto ii = static_cast<Eigen::Index>(i);
        const double scale = 1.0 + grid.node(i);
        absorbed(ii) = 0.0;
        if (shape == LrShape::Constant) {
            add_atom(i, scale * std::exp(const_llr), send_scale * sent_total(), k, absorbed);
        } else {
            const double ls = std::log(scale);
            double prev = 0.0;
            for (std::size_t j = 0; j < grid.count; ++j) {
                const double g = send_scale * sent_below(log_edges[j + 1] - ls);
                k(ii, static_cast<Eigen::Index>(j)) = std::max(0.0, g - prev);
                prev = std::max(prev, g);
            }
            absorbed(ii) = std::max(0.0, send_scale * sent_total() - prev);
        }
        add_atom(i, scale * ns_ratio, ns_weight, k, absorbed);
    }
};

KernelMatrix allocate(const RowBuilder& rb) {
    KernelMatrix k;
    k.grid = rb.grid;
    k.regime = rb.regime;
    const auto n = static_cast<Eigen::Index>(rb.grid.count);
    k.entries = DenseMatrix::Zero(n, n);
    k.absorbed = Eigen::VectorXd::Zero(n);
    return k;
}

void check_threshold(double threshold_a, double grid_step) {
    if (!(threshold_a > 0.0) || !(grid_step > 0.0)) {
        throw Error(ErrorKind::InvalidParameter, "SRP kernel needs positive threshold and grid step");
    }
}

}  // namespace

KernelMatrix build_srp_kernel(const DistributionPair& pair, const CensoringPolicy& policy, double threshold_a,
                              double grid_step, Regime regime) {
    check_threshold(threshold_a, grid_step);
    const RowBuilder rb(pair, policy, threshold_a, grid_step, regime);
    KernelMatrix k = allocate(rb);
    const auto n = static_cast<long long>(rb.grid.count);
#pragma omp parallel for schedule(dynamic, 8)
    for (long long i = 0; i < n; ++i) {
        rb.fill_row(static_cast<std::size_t>(i), k.entries, k.absorbed);
    }
    return k;
}

KernelMatrix build_srp_kernel_serial(const DistributionPair& pair, const CensoringPolicy& policy,
                                     double threshold_a, double grid_step, Regime regime) {
    check_threshold(threshold_a, grid_step);
    const RowBuilder rb(pair, policy, threshold_a, grid_step, regime);
    KernelMatrix k = allocate(rb);
    for (std::size_t i = 0; i < rb.grid.count; ++i) {
        rb.fill_row(i, k.entries, k.absorbed);
    }
    return k;
}

namespace cqcd_detail {
class ShiftedKernel;

}  // namespace cqcd_detail
}  // namespace cqcd

namespace Eigen::internal {
template <>
struct traits<cqcd::cqcd_detail::ShiftedKernel> : public traits<Eigen::SparseMatrix<double>> {};
}  // namespace Eigen::internal

namespace cqcd::cqcd_detail {

// (I - K) applied on the fly, so large kernels are never copied for GMRES.
class ShiftedKernel : public Eigen::EigenBase<ShiftedKernel> {
public:
    using Scalar = double;
    using RealScalar = double;
    using StorageIndex = int;
    enum { ColsAtCompileTime = Eigen::Dynamic, MaxColsAtCompileTime = Eigen::Dynamic, IsRowMajor = false };

    explicit ShiftedKernel(const DenseMatrix& k) : k_(&k) {}

    Eigen::Index rows() const { return k_->rows(); }
    Eigen::Index cols() const { return k_->cols(); }

    template <typename Rhs>
    Eigen::Product<ShiftedKernel, Rhs, Eigen::AliasFreeProduct> operator*(const Eigen::MatrixBase<Rhs>& x) const {
        return Eigen::Product<ShiftedKernel, Rhs, Eigen::AliasFreeProduct>(*this, x.derived());
    }

    const DenseMatrix& kernel() const { return *k_; }

private:
    const DenseMatrix* k_;
};

}  // namespace cqcd::cqcd_detail

namespace Eigen::internal {
template <typename Rhs>
struct generic_product_impl<cqcd::cqcd_detail::ShiftedKernel, Rhs, SparseShape, DenseShape, GemvProduct>
    : generic_product_impl_base<cqcd::cqcd_detail::ShiftedKernel, Rhs,
                                generic_product_impl<cqcd::cqcd_detail::ShiftedKernel, Rhs>> {
    using Scalar = typename Product<cqcd::cqcd_detail::ShiftedKernel, Rhs>::Scalar;

    template <typename Dest>
    static void scaleAndAddTo(Dest& dst, const cqcd::cqcd_detail::ShiftedKernel& lhs, const Rhs& rhs,
                              const Scalar& alpha) {
        dst.noalias() += alpha * rhs;
        dst.noalias() -= alpha * (lhs.kernel() * rhs);
    }
};
}  // namespace Eigen::internal

namespace cqcd {

namespace {

// Back substitution with the upper triangle of (I - K). The no-send atom of a
// random policy is a pure upward shift, which stalls unpreconditioned GMRES.
class UpperSweep {
public:
    UpperSweep() = default;

    template <typename M>
    UpperSweep& analyzePattern(const M&) {
        return *this;
    }
    template <typename M>
    UpperSweep& factorize(const M& m) {
        return compute(m);
    }
    UpperSweep& compute(const cqcd_detail::ShiftedKernel& m) {
        k_ = &m.kernel();
        return *this;
    }

    template <typename Rhs>
    Eigen::VectorXd solve(const Rhs& b) const {
        const Eigen::Index n = k_->rows();
        Eigen::VectorXd x(n);
        for (Eigen::Index i = n - 1; i >= 0; --i) {
            const Eigen::Index tail = n - i - 1;
            double acc = b(i);
            if (tail > 0) {
                acc += k_->row(i).tail(tail).dot(x.tail(tail));
            }
            const double d = 1.0 - (*k_)(i, i);
            x(i) = d > 1e-12 ? acc / d : acc;
        }
        return x;
    }

    Eigen::ComputationInfo info() const { return Eigen::Success; }

private:
    const DenseMatrix* k_ = nullptr;
};

constexpr Eigen::Index kDenseLimit = 2500;
// Beyond this size a dense LU copy would not fit comfortably in memory.
constexpr Eigen::Index kLuFallbackLimit = 9000;

// Solves (I - K) x = 1.
Eigen::VectorXd absorption_times(const KernelMatrix& kernel) {
    const Eigen::Index n = kernel.entries.rows();
    if (n == 0) {
        throw Error(ErrorKind::InvalidInput, "empty kernel");
    }
    if (kernel.absorbed.sum() <= 1e-14) {
        throw Error(ErrorKind::SolverFailure, "kernel never absorbs: spectral radius is one");
    }
    const Eigen::VectorXd rhs = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd x;
    bool solved = false;
    if (n > kDenseLimit) {
        const cqcd_detail::ShiftedKernel op(kernel.entries);
        Eigen::GMRES<cqcd_detail::ShiftedKernel, UpperSweep> gmres;
        gmres.setTolerance(1e-13);
        gmres.set_restart(80);
        gmres.setMaxIterations(4000);
        gmres.compute(op);
        x = gmres.solve(rhs);
        solved = gmres.info() == Eigen::Success;
        if (!solved && n > kLuFallbackLimit) {
            throw Error(ErrorKind::SolverFailure, "GMRES did not converge and the system is too large for LU");
        }
    }
    if (!solved) {
        DenseMatrix m = -kernel.entries;
        m.diagonal().array() += 1.0;
        x = m.partialPivLu().solve(rhs);
    }
    if (!x.allFinite() || (x.array() < 1.0 - 1e-6).any()) {
        throw Error(ErrorKind::SolverFailure, "absorption-time system is singular or ill-conditioned");
    }
    const Eigen::VectorXd applied = x - kernel.entries * x;
    const double residual = (applied - rhs).cwiseAbs().maxCoeff();
    if (!(residual <= 1e-6 * std::max(1.0, x.maxCoeff()))) {
        throw Error(ErrorKind::SolverFailure, "absorption-time residual too large");
    }
    return x;
}

}  // namespace

std::vector<double> solve_arl(const KernelMatrix& kernel) {
    if (kernel.regime != Regime::PreChange) {
        throw Error(ErrorKind::InvalidInput, "ARL needs a pre-change kernel");
    }
    const Eigen::VectorXd x = absorption_times(kernel);
    return {x.data(), x.data() + x.size()};
}

double solve_add(const KernelMatrix& kernel_post, const std::vector<double>& qsd) {
    if (kernel_post.regime != Regime::PostChange) {
        throw Error(ErrorKind::InvalidInput, "delay needs a post-change kernel");
    }
    if (qsd.size() != kernel_post.size()) {
        throw Error(ErrorKind::InvalidInput, "qsd dimension does not match the kernel");
    }
    const Eigen::VectorXd d = absorption_times(kernel_post);
    double acc = 0.0;
    for (std::size_t i = 0; i < qsd.size(); ++i) {
        acc += qsd[i] * d(static_cast<Eigen::Index>(i));
    }
    return acc;
}

QuasiStationary quasi_stationary(const KernelMatrix& kernel) {
    const Eigen::Index n = kernel.entries.rows();
    if (n == 0) {
        throw Error(ErrorKind::InvalidInput, "empty kernel");
    }
    constexpr int kMaxIterations = 100000;
    constexpr double kTol = 1e-10;
    Eigen::RowVectorXd q = Eigen::RowVectorXd::Constant(n, 1.0 / static_cast<double>(n));
    Eigen::RowVectorXd next(n);
    QuasiStationary out;
    for (int it = 1; it <= kMaxIterations; ++it) {
        next.noalias() = q * kernel.entries;
        const double lambda = next.sum();
        if (!(lambda > 0.0) || !std::isfinite(lambda)) {
            throw Error(ErrorKind::SolverFailure, "kernel annihilates the iterate");
        }
        next /= lambda;
        const double change = (next - q).cwiseAbs().sum();
        q.swap(next);
        if (change < kTol) {
            out.eigenvalue = lambda;
            out.iterations = it;
            out.probs.assign(q.data(), q.data() + n);
            return out;
        }
    }
    throw Error(ErrorKind::SolverFailure, "power iteration did not converge");
}

double qsd_residual(const KernelMatrix& kernel, const QuasiStationary& qsd) {
    const auto n = static_cast<Eigen::Index>(qsd.probs.size());
    const Eigen::Map<const Eigen::RowVectorXd> q(qsd.probs.data(), n);
    const Eigen::RowVectorXd r = q * kernel.entries - qsd.eigenvalue * q;
    return r.cwiseAbs().sum();
}

DiscreteDistribution to_distribution(const Grid& grid, const std::vector<double>& probs) {
    return DiscreteDistribution{grid.nodes(), probs};
}

SrpPerformance evaluate_srp(const DistributionPair& pair, const CensoringPolicy& policy, double threshold_a,
                            double grid_step) {
    SrpPerformance perf;
    perf.threshold = threshold_a;
    std::vector<double> arl_by_node;
    {
        const KernelMatrix pre = build_srp_kernel(pair, policy, threshold_a, grid_step, Regime::PreChange);
        perf.grid = pre.grid;
        perf.qsd = quasi_stationary(pre);
        arl_by_node = solve_arl(pre);
    }
    perf.arl = 0.0;
    for (std::size_t i = 0; i < arl_by_node.size(); ++i) {
        perf.arl += perf.qsd.probs[i] * arl_by_node[i];
    }
    const KernelMatrix post = build_srp_kernel(pair, policy, threshold_a, grid_step, Regime::PostChange);
    perf.add = solve_add(post, perf.qsd.probs);
    return perf;
}

namespace {

double srp_arl_only(const DistributionPair& pair, const CensoringPolicy& policy, double threshold_a,
                    double grid_step) {
    const KernelMatrix pre = build_srp_kernel(pair, policy, threshold_a, grid_step, Regime::PreChange);
    const QuasiStationary q = quasi_stationary(pre);
    const std::vector<double> n = solve_arl(pre);
    double arl = 0.0;
    for (std::size_t i = 0; i < n.size(); ++i) {
        arl += q.probs[i] * n[i];
    }
    return arl;
}

// Secant iteration on log ARL versus log A, starting from `guess`.
double secant_threshold(const DistributionPair& pair, const CensoringPolicy& policy, double target,
                        double grid_step, double guess, double rel_tol, int& evaluations) {
    double x0 = std::log(guess);
    double y0 = std::log(srp_arl_only(pair, policy, guess, grid_step)) - std::log(target);
    ++evaluations;
    if (std::abs(y0) <= std::log1p(rel_tol)) {
        return guess;
    }
    // ARL grows roughly linearly in A.
    double x1 = x0 - y0;
    for (int it = 0; it < 30; ++it) {
        const double a1 = std::exp(x1);
        if (!(a1 > 0.0) || a1 > 1e12) {
            break;
        }
        const double y1 = std::log(srp_arl_only(pair, policy, a1, grid_step)) - std::log(target);
        ++evaluations;
        if (std::abs(y1) <= std::log1p(rel_tol)) {
            return a1;
        }
        double slope = (y1 - y0) / (x1 - x0);
        if (!(slope > 0.1) || !std::isfinite(slope)) {
            slope = 1.0;
        }
        x0 = x1;
        y0 = y1;
        x1 = x1 - y1 / slope;
    }
    throw Error(ErrorKind::CalibrationFailure, "SRP threshold search did not converge");
}

}  // namespace

SrpCalibration calibrate_srp(const DistributionPair& pair, const CensoringPolicy& policy, double target_arl,
                             double grid_step, double rel_tol) {
    if (!(target_arl > 1.0)) {
        throw Error(ErrorKind::InvalidParameter, "target ARL must exceed one");
    }
    SrpCalibration out;
    // A coarse grid is accurate to well under a percent, so it finds the
    // neighbourhood cheaply; the fine grid only polishes.
    const double coarse_step = std::max(grid_step, 0.5);
    double a = target_arl / 2.0;
    if (coarse_step > grid_step) {
        a = secant_threshold(pair, policy, target_arl, coarse_step, a, rel_tol / 2.0, out.evaluations);
    }
    a = secant_threshold(pair, policy, target_arl, grid_step, a, rel_tol, out.evaluations);
    out.performance = evaluate_srp(pair, policy, a, grid_step);
    return out;
}

void write_kernel(std::ostream& os, const KernelMatrix& kernel) {
    os << "# kernel regime=" << to_string(kernel.regime) << " lo=" << kernel.grid.lo << " hi=" << kernel.grid.hi
       << " step=" << kernel.grid.step << " count=" << kernel.grid.count << '\n';
    os.precision(17);
    for (Eigen::Index i = 0; i < kernel.entries.rows(); ++i) {
        for (Eigen::Index j = 0; j < kernel.entries.cols(); ++j) {
            if (j) {
                os << ' ';
            }
            os << kernel.entries(i, j);
        }
        os << '\n';
    }
}

void write_distribution(std::ostream& os, const Grid& grid, const std::vector<double>& probs) {
    os << "# distribution lo=" << grid.lo << " hi=" << grid.hi << " step=" << grid.step << " count=" << grid.count
       << '\n';
    os.precision(17);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        os << grid.node(i) << ' ' << probs[i] << '\n';
    }
}

}  // namespace cqcd
