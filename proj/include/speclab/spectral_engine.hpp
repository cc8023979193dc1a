#pragma once

// Diagonalization, eigenvalue counting N(E), the integrated density of
// states nu_L and its density f_L, and Monte Carlo checks of the spectral
// averaging, Wegner and Minami bounds.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "speclab/lattice_model.hpp"
#include "speclab/stats.hpp"

namespace speclab {

struct Spectrum {
    std::vector<double> eigenvalues;   // ascending
    SampleMeta meta;
};

struct Eigensystem {
    Spectrum spectrum;
    Eigen::MatrixXd vectors;   // column j belongs to eigenvalue j
};

// All eigenvalues; d = 1 boxes go through the tridiagonal solver directly.
// Throws NumericalError on non-convergence and InvariantViolation when the
// trace identity fails.
Spectrum eigenvalues(const HamiltonianMatrix& h);
Eigensystem eigensystem(const HamiltonianMatrix& h);

// #{j : E_j <= E}
std::size_t count_below(const Spectrum& spec, double E);

// N(E) at each energy, by dense diagonalization or banded inertia,
// whichever is cheaper for this matrix.
std::vector<std::size_t> count_below_many(const HamiltonianMatrix& h, std::span<const double> energies);

// Eigenvalue count comparison from 0 <= H_0 <= 4d:
// #{n : 4d + V_n <= E} <= N(E) <= #{n : V_n <= E}.
struct SandwichCounts {
    std::size_t lower = 0;
    std::size_t count = 0;
    std::size_t upper = 0;
};

SandwichCounts sandwich_counts(const LatticeBox& box, double alpha, const DisorderSample& sample, double E);
std::vector<SandwichCounts> sandwich_counts(const LatticeBox& box, double alpha, const DisorderSample& sample,
                                            std::span<const double> energies);

// #{n : shift + b_n q_n <= E} for one realization.
std::size_t diagonal_count(std::span<const double> weights, const DisorderSample& sample, double E, double shift);

// Exact expectation of diagonal_count: sum_n min(1, (E - shift)/b_n).
double expected_count_diag(const LatticeBox& box, double alpha, double E, double shift);

// Half-open energy interval (lo, hi]; counts are N(hi) - N(lo).
struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    double length() const { return hi - lo; }
};

struct IdsEstimate {
    std::vector<double> energies;
    std::vector<double> nu_L;       // MC mean of N(E) / L^{d-alpha}
    std::vector<double> nu_se;
    std::vector<double> f_L;        // [nu_L(E + h/2) - nu_L(E - h/2)] / h
    std::vector<double> f_se;
    double bin_width = 0.0;
    std::size_t n_samples = 0;
};

// Default histogram width max(0.05, 4 / sum_n b_n^{-1}); the Wegner bound
// makes 1 / sum b_n^{-1} a lower bound on the expected level spacing.
double default_bin_width(const ModelParams& params);

// bin_width <= 0 selects default_bin_width.
IdsEstimate empirical_ids(const ModelParams& params, std::span<const double> energies, std::size_t n_samples,
                          std::uint64_t seed, double bin_width = 0.0);

struct WindowEstimate {
    double half_width = 0.0;
    double value = 0.0;
    double se = 0.0;
    double shift_from_previous = 0.0;      // mean change against the previous window
    double shift_se = 0.0;                 // paired standard error of that change
};

struct DensityEstimate {
    double value = 0.0;
    double se = 0.0;
    double half_width = 0.0;
    std::vector<WindowEstimate> windows;
};

// w_k = 2^{-k}, k = 0..6
std::vector<double> default_window_schedule();

// Density of nu_L at E from [nu_L(E + w) - nu_L(E - w)] / 2w on shrinking
// windows. Stops at the first window whose change against the previous one
// is within two paired standard errors; throws NumericalError if none is.
DensityEstimate estimate_N1_prime(const ModelParams& params, double E, std::size_t n_samples, std::uint64_t seed,
                                  std::span<const double> window_schedule = {});

enum class BoundKind { spectral_averaging, wegner, minami };

std::string to_string(BoundKind kind);

struct BoundCheckReport {
    BoundKind kind = BoundKind::wegner;
    double empirical = 0.0;
    double se = 0.0;
    double bound = 0.0;
    bool satisfied = false;   // empirical <= bound + 3 se
    std::size_t n_samples = 0;
};

// One-sided tolerance used by every bound check.
inline constexpr double kBoundSigmas = 3.0;

BoundCheckReport make_bound_report(BoundKind kind, const Estimate& empirical, double bound);

// E <delta_n, 1_I(H) delta_n> against pi |I| / b_n.
BoundCheckReport check_spectral_averaging(const ModelParams& params, std::span<const int> site, Interval I,
                                          std::size_t n_samples, std::uint64_t seed);

// Several sites from the same diagonalizations.
std::vector<BoundCheckReport> check_spectral_averaging(const ModelParams& params, const std::vector<Coord>& sites,
                                                       Interval I, std::size_t n_samples, std::uint64_t seed);

// E[k_I] against |I| sum b_n^{-1}, and E[k_I (k_I - 1)] against its square.
std::pair<BoundCheckReport, BoundCheckReport> check_wegner_minami(const ModelParams& params, Interval I,
                                                                  std::size_t n_samples, std::uint64_t seed);

}  // namespace speclab
