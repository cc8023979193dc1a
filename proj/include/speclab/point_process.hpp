#pragma once

// Rescaled eigenvalue point processes xi = sum_x delta_{L^{d-alpha}(x - E)},
// their block-superposition approximations, and the statistics used to
// compare them with a Poisson process.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "speclab/lattice_model.hpp"
#include "speclab/spectral_engine.hpp"

namespace speclab {

struct PointConfiguration {
    std::vector<double> points;   // ascending when built from a spectrum
    double center_E = 0.0;
    double scale = 1.0;           // L^{d-alpha}
};

// x -> scale (x - E); the scale comes from the spectrum metadata.
PointConfiguration rescale(const Spectrum& spec, double E);
PointConfiguration rescale(std::span<const double> eigenvalues, double E, double scale);

// Finite disjoint union of half-open intervals [a, b).
class BorelSet {
public:
    BorelSet() = default;
    // Sorts the intervals; throws ConfigError on a >= b or overlap.
    explicit BorelSet(std::vector<std::pair<double, double>> intervals);

    const std::vector<std::pair<double, double>>& intervals() const { return intervals_; }
    double length() const;
    bool contains(double x) const;

private:
    std::vector<std::pair<double, double>> intervals_;
};

std::size_t count_in(const PointConfiguration& config, const BorelSet& B);

struct Block {
    Cuboid region;
    std::vector<std::size_t> sites;   // box indices, in region order
    std::vector<bool> interior;       // l_inf distance to the block boundary > margin
};

struct BlockDecomposition {
    int per_axis = 1;        // M = max(1, floor((2L+1)^epsilon))
    double epsilon = 0.4;
    double delta = 8.0;
    double margin = 0.0;     // delta ln L
    std::vector<Block> blocks;
};

// Splits each axis of the box into M runs of floor((2L+1)/M) sites; the
// remainder joins the last run.
BlockDecomposition block_decompose(const LatticeBox& box, double epsilon, double delta);

// One rescaled process per block, using the global scale L^{d-alpha}.
std::vector<PointConfiguration> eta_processes(const LatticeBox& box, const BlockDecomposition& decomp, double alpha,
                                              const DisorderSample& sample, double E);

struct CountDistribution {
    std::vector<double> pmf;          // pmf[k] = fraction of samples with k points
    std::vector<int> counts;          // per-sample counts
    std::size_t n_samples = 0;
    double mean = 0.0;
    double mean_se = 0.0;
    double second_factorial = 0.0;    // E[k (k - 1)]
    double second_factorial_se = 0.0;
};

CountDistribution make_count_distribution(std::vector<int> counts);

struct BlockOptions {
    double epsilon = 0.4;
    double delta = 8.0;
};

// Counts of xi(B), or of sum_p eta_p(B) when use_blocks.
CountDistribution counting_distribution(const ModelParams& params, double E, const BorelSet& B, std::size_t n_samples,
                                        std::uint64_t seed, bool use_blocks = false, BlockOptions blocks = {});

struct GofBin {
    int k_lo = 0;
    int k_hi = 0;              // inclusive; -1 for an open tail
    double observed = 0.0;     // sample count
    double expected = 0.0;
};

struct GofReport {
    double lambda = 0.0;
    double chi_square = 0.0;
    int dof = 0;
    double p_value = 1.0;
    double tv_distance = 0.0;
    std::size_t n_samples = 0;
    std::vector<GofBin> bins;
};

inline constexpr std::size_t kMinGofSamples = 200;

// Chi-square (bins with expected count < 5 merged) and total variation
// against Poisson(lambda). `fitted` is the number of parameters estimated
// from the same data (1 for a plug-in lambda).
GofReport poisson_gof(const CountDistribution& dist, double lambda, int fitted = 0);

struct GapReport {
    std::vector<double> spacings;   // ascending
    double lambda = 0.0;
    double ks_distance = 0.0;       // against 1 - exp(-lambda s)
};

// Nearest-neighbour spacings of the points inside each interval of the
// window, pooled over the ensemble. Without lambda, it is estimated as
// total points / (configs * |window|).
GapReport gap_statistics(const std::vector<PointConfiguration>& configs, const BorelSet& window,
                         std::optional<double> lambda = std::nullopt);

// Ensembles with known statistics for calibrating the tests above.
std::vector<PointConfiguration> synthetic_poisson(double lambda, double lo, double hi, std::size_t n,
                                                  std::uint64_t seed);
std::vector<PointConfiguration> synthetic_clock(double lambda, double lo, double hi, std::size_t n,
                                                std::uint64_t seed);

// E | int phi_z dxi - sum_p int phi_z deta_p |, phi_z(x) = Im 1/(x - z).
// Each integral is L^{-(d-alpha)} Im Tr G(E + z L^{-(d-alpha)}).
Estimate superposition_distance(const ModelParams& params, double E, std::size_t n_samples, std::uint64_t seed,
                                std::complex<double> z = {0.0, 1.0}, BlockOptions blocks = {});

// Empirical block-level quantities behind the Poisson limit.
struct BlockConditionStats {
    int blocks = 0;
    double max_p_any = 0.0;       // max_p P(eta_p(B) >= 1)
    double max_p_any_se = 0.0;
    Estimate sum_p_two;           // sum_p P(eta_p(B) >= 2)
    Estimate sum_p_any;           // sum_p P(eta_p(B) >= 1)
};

BlockConditionStats block_condition_statistics(const ModelParams& params, double E, const BorelSet& B,
                                               std::size_t n_samples, std::uint64_t seed, BlockOptions blocks = {});

}  // namespace speclab
