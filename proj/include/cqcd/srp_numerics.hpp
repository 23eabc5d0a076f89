#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "cqcd/censoring.hpp"
#include "cqcd/detectors.hpp"
#include "cqcd/model.hpp"

namespace cqcd {

/// Uniform partition of [lo, hi] into `count` cells; nodes sit at cell midpoints.
struct Grid {
    double lo = 0.0;
    double hi = 0.0;
    double step = 0.0;
    std::size_t count = 0;

    /// Smallest uniform partition of [lo, hi] whose step does not exceed `max_step`.
    static Grid cover(double lo, double hi, double max_step);

    double node(std::size_t i) const { return lo + (static_cast<double>(i) + 0.5) * step; }
    double edge(std::size_t i) const { return i == count ? hi : lo + static_cast<double>(i) * step; }
    std::vector<double> nodes() const;
};

using DenseMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Discretized one-step transition law of the SRP statistic. Entry (i, j) is the
/// probability that R_{k+1} lands in cell j given R_k at node i; `absorbed(i)`
/// is the probability of jumping to [A, inf).
struct KernelMatrix {
    Grid grid;
    Regime regime = Regime::PreChange;
    DenseMatrix entries;
    Eigen::VectorXd absorbed;

    /// Wraps an explicit matrix (absorbed = 1 - row sum). Throws InvalidInput when
    /// an entry is negative or a row sum exceeds 1 + 1e-8.
    static KernelMatrix from_entries(Grid grid, Regime regime, DenseMatrix entries);

    std::size_t size() const { return grid.count; }
};

/// Kernel under `regime` for the censored-observation SRP recursion on
/// [0, threshold_a] with cells no wider than `grid_step`. Rows are built in
/// parallel; UnsupportedModel for non-monotone likelihood ratios.
KernelMatrix build_srp_kernel(const DistributionPair& pair, const CensoringPolicy& policy, double threshold_a,
                              double grid_step, Regime regime);
/// Single-threaded reference for build_srp_kernel; bitwise identical output.
KernelMatrix build_srp_kernel_serial(const DistributionPair& pair, const CensoringPolicy& policy,
                                     double threshold_a, double grid_step, Regime regime);

/// Expected steps to absorption from every node: solves (I - K) n = 1.
std::vector<double> solve_arl(const KernelMatrix& kernel);

/// qsd-weighted expected number of post-change samples up to and including
/// the alarm (change occurring with the statistic distributed as `qsd`).
double solve_add(const KernelMatrix& kernel_post, const std::vector<double>& qsd);

struct QuasiStationary {
    std::vector<double> probs;
    double eigenvalue = 0.0;
    int iterations = 0;
};

/// Normalized left Perron vector of a pre-change kernel by power iteration
/// (L1 change < 1e-10). SolverFailure after 1e5 iterations.
QuasiStationary quasi_stationary(const KernelMatrix& kernel);

/// L1 residual ||q K - lambda q||.
double qsd_residual(const KernelMatrix& kernel, const QuasiStationary& qsd);

DiscreteDistribution to_distribution(const Grid& grid, const std::vector<double>& probs);

struct SrpPerformance {
    double threshold = 0.0;
    double arl = 0.0;
    double add = 0.0;
    Grid grid;
    QuasiStationary qsd;
};

/// ARL and stationary delay of the SRP procedure started from its quasi-stationary law.
SrpPerformance evaluate_srp(const DistributionPair& pair, const CensoringPolicy& policy, double threshold_a,
                            double grid_step);

struct SrpCalibration {
    SrpPerformance performance;
    int evaluations = 0;
};

/// Threshold giving ARL within `rel_tol` of `target_arl`: secant search in
/// (log A, log ARL) on a coarse grid, then refined at `grid_step`.
SrpCalibration calibrate_srp(const DistributionPair& pair, const CensoringPolicy& policy, double target_arl,
                             double grid_step, double rel_tol = 0.01);

/// Debug dumps: '#'-prefixed header with grid metadata, then row-major values.
void write_kernel(std::ostream& os, const KernelMatrix& kernel);
void write_distribution(std::ostream& os, const Grid& grid, const std::vector<double>& probs);

}  // namespace cqcd
