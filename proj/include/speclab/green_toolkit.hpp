#pragma once

// Green's function tools: resolvent entries, the single-site integrals
//
//     B_l(a, z) = int_0^1 dx / (a x - z)^l
//
// with their continuation across the real axis, the analyticity region G,
// the closed-walk expansion of E G(z; n, n), the normalized traces
// phi_L / psi_L / g_L, the large-L limit of Im phi_L, and fractional
// moments E |G(z; n, m)|^s.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "speclab/lattice_model.hpp"

namespace speclab {

using cplx = std::complex<double>;

// Complex logarithm with arg in (-pi/2, 3pi/2]: the cut runs straight down
// from the origin. Every logarithm in this module goes through here.
cplx log_cut_down(cplx z);

// Closed form of B_l(a, z), continued from Im z > 0 to C minus the two
// downward rays from 0 and a. For l > 1 this is
// ((-z)^{1-l} - (a-z)^{1-l}) / (a (l-1)), which is what direct integration
// gives. Throws NumericalError when z lies on a ray or on [0, a].
cplx b_ell(double a, cplx z, int ell);

// Bound on |B_l| valid for Re z > 2M^2, |z - a| > 2M^2, M > 1:
// (3 pi + 1)/a + 1/(2M^2) for l = 1, 1/(a M^{l-1}) for l > 1.
double b_ell_bound(double a, cplx z, int ell, double M);

struct RegionGParams {
    double M = 5.0;   // must exceed 2d
    double alpha = 2.0;
    int d = 1;
    void validate() const;
};

// G = {Re z > 2M^2, Im z > -d} minus the open disks |z - (b + 2d)| < 2M^2
// for the given couplings b.
bool in_region_G(cplx z, const RegionGParams& p, std::span<const double> b_values);

// Same, with b ranging over all of Z^d (only finitely many disks can reach z).
bool in_region_G(cplx z, const RegionGParams& p);

// G(z; n, m) = <delta_n, (H - z)^{-1} delta_m> by a banded solve.
cplx resolvent_entry(const HamiltonianMatrix& h, cplx z, std::size_t n, std::size_t m);
cplx resolvent_entry(const HamiltonianMatrix& h, cplx z, std::span<const int> n, std::span<const int> m);

struct WalkExpansionResult {
    cplx value;                           // sum over closed walks of length <= K
    int K = 0;
    double tail_bound = 0.0;              // bound on the omitted walks; +inf if no regime applies
    std::uint64_t paths_enumerated = 0;   // closed walks included in `value`
    std::string regime;                   // "neumann", "region_G" or "none"
};

inline constexpr std::uint64_t kWalkBudget = 10'000'000;

// Truncated expansion of E G(z; n, n) over closed nearest-neighbour walks
// inside the box; each walk contributes prod_m B_{#(walk, m)}(b_m, z - 2d).
// The tail bound uses Im z > 2d when possible, else the region-G bound
// when `M` is given and z lies in G.
WalkExpansionResult walk_expansion_diag(const LatticeBox& box, double alpha, cplx z, std::span<const int> site, int K,
                                        std::optional<double> M = std::nullopt,
                                        std::uint64_t budget = kWalkBudget);

struct ComplexEstimate {
    cplx mean;
    double se_re = 0.0;
    double se_im = 0.0;
    std::size_t n = 0;
};

// phi_L(z) = L^{-(d-alpha)} sum_n B_1(b_n, z - 2d), exact.
cplx phi_L(const ModelParams& params, cplx z);

// psi_L(z) = L^{-(d-alpha)} sum_n E G(z; n, n), Monte Carlo over resolvent traces.
ComplexEstimate psi_L_mc(const ModelParams& params, cplx z, std::size_t n_samples, std::uint64_t seed);

// g_L = psi_L - phi_L (phi_L is exact, so the error is that of psi_L).
ComplexEstimate g_L(const ModelParams& params, cplx z, std::size_t n_samples, std::uint64_t seed);

// C' L^{-(d-alpha)} sum_n 1/b_n with C' = sum_{k >= 1} (2d/M)^{k+1}.
double g_L_bound(const ModelParams& params, double M);

// C = lim_L L^{-(d-alpha)} sum_{n in Lambda_L} 1/b_n = int_{[-1,1]^d} |u|^{-alpha} du
// (requires 0 < d - alpha), evaluated by quadrature over the faces of the cube.
double weight_density_limit(int d, double alpha);

struct AppendixRow {
    int L = 0;
    double im_phi = 0.0;
    double target = 0.0;
    double error = 0.0;
};

struct AppendixReport {
    cplx z_d;
    double C = 0.0;
    double im_log_minus_zd = 0.0;   // Im ln(-z_d) on the branch below
    std::string branch;
    std::vector<AppendixRow> rows;
    double slope = 0.0;             // least-squares slope of log error vs log L
    double slope_target = 0.0;      // -min(alpha, d - alpha)
    bool decreasing = false;
    bool slope_ok = false;          // |slope - target| <= 25% |target|
};

// Im phi_L(z) against -C Im ln(-z_d), z_d = z - 2d, along increasing L.
AppendixReport appendix_limit_check(int d, double alpha, std::span<const int> Ls, cplx z);

struct PairMoment {
    Coord n, m;
    int distance = 0;               // l1 (graph) distance
    double moment = 0.0;            // E |G(z; n, m)|^s
    double se = 0.0;
    double diagonal_bound = 0.0;    // (3-s)/(1-s) b_n^{-s} when n == m, else 0
    bool below_decay_threshold = false;
};

struct FracMomentReport {
    double s = 0.0;
    std::vector<PairMoment> pairs;
    double beta_hat = 0.0;          // fitted decay rate of log moment vs distance
    double beta_se = 0.0;
    double log_prefactor = 0.0;
    double decay_threshold = 0.0;   // (2d C_s e^beta_hat)^{1/(alpha s)}
    bool uniform_bound_ok = false;
};

// sup_a int_0^1 |x - a|^{-s} dx < (3 - s)/(1 - s)
double single_site_moment_constant(double s);

FracMomentReport frac_moment(const ModelParams& params, cplx z, double s,
                             const std::vector<std::pair<Coord, Coord>>& pairs, std::size_t n_samples,
                             std::uint64_t seed);

}  // namespace speclab
