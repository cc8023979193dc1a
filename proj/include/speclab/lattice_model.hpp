#pragma once

// Lattice geometry, growing single-site couplings b_n = 1 + |n|^alpha,
// i.i.d. uniform disorder and finite-volume Hamiltonians
//
//     (H u)(n) = (2d + b_n q_n) u(n) - sum_{|n-m|_1 = 1} u(m)
//
// restricted to a box of Z^d (simple restriction, no boundary term).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace speclab {

using Coord = std::vector<int>;

struct ModelParams {
    int d = 1;            // lattice dimension
    double alpha = 2.0;   // growth exponent, > 1
    int L = 1;            // box radius, side 2L+1

    // Throws ConfigError unless d >= 1, alpha > 1 and L >= 1.
    void validate() const;

    std::size_t volume() const;

    // L^{d-alpha}, the rescaling factor of the eigenvalue point process.
    double scale() const;
};

// Axis-aligned block of sites {n : lo_i <= n_i <= hi_i}, enumerated in
// lexicographic order (first coordinate most significant).
class Cuboid {
public:
    Cuboid() = default;
    Cuboid(Coord lo, Coord hi);

    int dim() const { return static_cast<int>(lo_.size()); }
    std::size_t size() const { return size_; }
    int extent(int axis) const { return hi_[axis] - lo_[axis] + 1; }
    std::size_t stride(int axis) const { return stride_[axis]; }
    const Coord& lo() const { return lo_; }
    const Coord& hi() const { return hi_; }

    bool contains(std::span<const int> n) const;
    std::optional<std::size_t> index_of(std::span<const int> n) const;
    Coord coord(std::size_t index) const;

private:
    Coord lo_, hi_;
    std::vector<std::size_t> stride_;
    std::size_t size_ = 0;
};

// The cube Lambda_L = {n : |n_i| <= L} with its site list.
class LatticeBox {
public:
    explicit LatticeBox(ModelParams params);

    const ModelParams& params() const { return params_; }
    const Cuboid& cuboid() const { return cuboid_; }
    std::size_t size() const { return sites_.size(); }
    const std::vector<Coord>& sites() const { return sites_; }
    const Coord& site(std::size_t i) const { return sites_[i]; }
    std::optional<std::size_t> index_of(std::span<const int> n) const { return cuboid_.index_of(n); }

private:
    ModelParams params_;
    Cuboid cuboid_;
    std::vector<Coord> sites_;
};

LatticeBox enumerate_box(const ModelParams& params);

// |n| in the coupling is Euclidean; adjacency uses the l1 distance.
double euclidean_norm(std::span<const int> n);
int l1_distance(std::span<const int> n, std::span<const int> m);

// b_n = 1 + |n|^alpha.
double weight_b(std::span<const int> n, double alpha);

// b_n for every site of the box, in enumeration order.
std::vector<double> site_weights(const LatticeBox& box, double alpha);

// Sum over the box of 1/b_n (direct summation).
double weight_sum(const LatticeBox& box, double alpha);

// Number of nearest-neighbour pairs inside a cuboid, counted combinatorially.
std::size_t bond_count(const Cuboid& region);

struct DisorderSample {
    std::vector<double> values;   // q_n in [0,1), indexed like the box sites
    std::uint64_t seed = 0;
    std::uint64_t sample_index = 0;
};

// Counter-based uniform draw for one (seed, sample, site) triple.
double uniform_draw(std::uint64_t seed, std::uint64_t sample_index, std::uint64_t site_index);

DisorderSample sample_disorder(const LatticeBox& box, std::uint64_t seed, std::uint64_t sample_index);

struct SampleMeta {
    int d = 0;
    double alpha = 0.0;
    int L = 0;
    std::uint64_t seed = 0;
    std::uint64_t sample_index = 0;
};

struct Bond {
    std::size_t i = 0;
    std::size_t j = 0;   // i < j; the matrix entry is -1
};

// Real symmetric sparse H restricted to `region`. Local index k refers to
// region.coord(k); global_index[k] is the position of that site in the box
// the disorder was drawn on.
struct HamiltonianMatrix {
    Cuboid region;
    std::vector<std::size_t> global_index;
    std::vector<double> diag;
    std::vector<Bond> bonds;
    SampleMeta meta;

    std::size_t size() const { return diag.size(); }

    // Largest |i - j| over stored bonds; 0 when there is no hopping.
    std::size_t half_bandwidth() const;

    Eigen::MatrixXd dense() const;
};

HamiltonianMatrix assemble_hamiltonian(const LatticeBox& box, double alpha, const DisorderSample& sample);

// Restriction to a sub-cuboid of the box, using the same disorder values.
HamiltonianMatrix assemble_restricted(const LatticeBox& box, const Cuboid& region,
                                      std::span<const double> weights, const DisorderSample& sample);

}  // namespace speclab
