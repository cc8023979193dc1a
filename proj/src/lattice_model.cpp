#include "speclab/lattice_model.hpp"

#include <cmath>
#include <cstdlib>
#include <string>

#include "speclab/errors.hpp"

namespace speclab {

void ModelParams::validate() const
{
    std::string problems;
    if (d < 1) problems += "d must be >= 1; ";
    if (!(alpha > 1.0)) problems += "alpha must be > 1 (growth exponent); ";
    if (L < 1) problems += "L must be >= 1; ";
    if (!problems.empty()) throw ConfigError("invalid model parameters: " + problems);
}

std::size_t ModelParams::volume() const
{
    std::size_t v = 1;
    for (int i = 0; i < d; ++i) v *= static_cast<std::size_t>(2 * L + 1);
    return v;
}

double ModelParams::scale() const
{
    return std::pow(static_cast<double>(L), static_cast<double>(d) - alpha);
}

Cuboid::Cuboid(Coord lo, Coord hi): lo_(std::move(lo)), hi_(std::move(hi))
{
    if (lo_.size() != hi_.size() || lo_.empty()) throw ConfigError("cuboid corners must have equal positive dimension");
    const int d = dim();
    stride_.assign(d, 1);
    size_ = 1;
    for (int axis = d - 1; axis >= 0; --axis) {
        if (hi_[axis] < lo_[axis]) throw ConfigError("cuboid has an empty axis");
        stride_[axis] = size_;
        size_ *= static_cast<std::size_t>(extent(axis));
    }
}

bool Cuboid::contains(std::span<const int> n) const
{
    if (static_cast<int>(n.size()) != dim()) return false;
    for (int axis = 0; axis < dim(); ++axis) {
        if (n[axis] < lo_[axis] || n[axis] > hi_[axis]) return false;
    }
    return true;
}

std::optional<std::size_t> Cuboid::index_of(std::span<const int> n) const
{
    if (!contains(n)) return std::nullopt;
    std::size_t index = 0;
    for (int axis = 0; axis < dim(); ++axis) {
        index += static_cast<std::size_t>(n[axis] - lo_[axis]) * stride_[axis];
    }
    return index;
}

Coord Cuboid::coord(std::size_t index) const
{
    Coord n(dim());
    for (int axis = 0; axis < dim(); ++axis) {
        n[axis] = lo_[axis] + static_cast<int>(index / stride_[axis]);
        index %= stride_[axis];
    }
    return n;
}

LatticeBox::LatticeBox(ModelParams params): params_(params)
{
    params_.validate();
    cuboid_ = Cuboid(Coord(params_.d, -params_.L), Coord(params_.d, params_.L));
    sites_.reserve(cuboid_.size());
    for (std::size_t i = 0; i < cuboid_.size(); ++i) sites_.push_back(cuboid_.coord(i));
}

LatticeBox enumerate_box(const ModelParams& params)
{
    return LatticeBox(params);
}

double euclidean_norm(std::span<const int> n)
{
    double s = 0;
    for (int x: n) s += static_cast<double>(x) * x;
    return std::sqrt(s);
}

int l1_distance(std::span<const int> n, std::span<const int> m)
{
    int s = 0;
    for (std::size_t i = 0; i < n.size(); ++i) s += std::abs(n[i] - m[i]);
    return s;
}

double weight_b(std::span<const int> n, double alpha)
{
    const double r = euclidean_norm(n);
    return 1.0 + (r == 0.0 ? 0.0 : std::pow(r, alpha));
}

std::vector<double> site_weights(const LatticeBox& box, double alpha)
{
    std::vector<double> b(box.size());
    for (std::size_t i = 0; i < box.size(); ++i) b[i] = weight_b(box.site(i), alpha);
    return b;
}

double weight_sum(const LatticeBox& box, double alpha)
{
    double s = 0;
    for (const auto& n: box.sites()) s += 1.0 / weight_b(n, alpha);
    return s;
}

std::size_t bond_count(const Cuboid& region)
{
    // Along each axis: (extent - 1) bonds per line, times the number of lines.
    std::size_t total = 0;
    for (int axis = 0; axis < region.dim(); ++axis) {
        const auto e = static_cast<std::size_t>(region.extent(axis));
        total += (e - 1) * (region.size() / e);
    }
    return total;
}

namespace {

constexpr std::uint64_t splitmix64(std::uint64_t z)
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

double uniform_draw(std::uint64_t seed, std::uint64_t sample_index, std::uint64_t site_index)
{
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ splitmix64(sample_index + 0x632be59bd9b4e019ULL));
    h = splitmix64(h ^ splitmix64(site_index + 0x8cb92ba72f3d8dd7ULL));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

DisorderSample sample_disorder(const LatticeBox& box, std::uint64_t seed, std::uint64_t sample_index)
{
    DisorderSample s;
    s.seed = seed;
    s.sample_index = sample_index;
    s.values.resize(box.size());
    for (std::size_t i = 0; i < box.size(); ++i) s.values[i] = uniform_draw(seed, sample_index, i);
    return s;
}

std::size_t HamiltonianMatrix::half_bandwidth() const
{
    std::size_t w = 0;
    for (const auto& b: bonds) w = std::max(w, b.j - b.i);
    return w;
}

Eigen::MatrixXd HamiltonianMatrix::dense() const
{
    const auto n = static_cast<Eigen::Index>(size());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) h(i, i) = diag[i];
    for (const auto& b: bonds) {
        h(b.i, b.j) = -1.0;
        h(b.j, b.i) = -1.0;
    }
    return h;
}

HamiltonianMatrix assemble_restricted(const LatticeBox& box, const Cuboid& region,
                                      std::span<const double> weights, const DisorderSample& sample)
{
    if (sample.values.size() != box.size()) {
        throw ConfigError("disorder sample has " + std::to_string(sample.values.size()) +
                          " sites but the box has " + std::to_string(box.size()));
    }
    if (weights.size() != box.size()) throw ConfigError("weight vector does not match the box");
    const int d = box.params().d;
    if (region.dim() != d || !box.cuboid().contains(region.lo()) || !box.cuboid().contains(region.hi())) {
        throw ConfigError("region is not contained in the box");
    }

    HamiltonianMatrix h;
    h.region = region;
    h.meta = {d, box.params().alpha, box.params().L, sample.seed, sample.sample_index};
    const std::size_t n = region.size();
    h.global_index.resize(n);
    h.diag.resize(n);
    h.bonds.reserve(bond_count(region));
    for (std::size_t k = 0; k < n; ++k) {
        const Coord site = region.coord(k);
        const std::size_t g = *box.index_of(site);
        h.global_index[k] = g;
        h.diag[k] = 2.0 * d + weights[g] * sample.values[g];
        for (int axis = 0; axis < d; ++axis) {
            if (site[axis] < region.hi()[axis]) h.bonds.push_back({k, k + region.stride(axis)});
        }
    }
    return h;
}

HamiltonianMatrix assemble_hamiltonian(const LatticeBox& box, double alpha, const DisorderSample& sample)
{
    const auto weights = site_weights(box, alpha);
    auto h = assemble_restricted(box, box.cuboid(), weights, sample);
    h.meta.alpha = alpha;
    return h;
}

}  // namespace speclab
