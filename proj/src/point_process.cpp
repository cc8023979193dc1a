#include "speclab/point_process.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "speclab/banded.hpp"
#include "speclab/errors.hpp"
#include "speclab/stats.hpp"

namespace speclab {

PointConfiguration rescale(std::span<const double> eigenvalues, double E, double scale)
{
    PointConfiguration c;
    c.center_E = E;
    c.scale = scale;
    c.points.reserve(eigenvalues.size());
    for (double x: eigenvalues) c.points.push_back(scale * (x - E));
    return c;
}

PointConfiguration rescale(const Spectrum& spec, double E)
{
    const auto& m = spec.meta;
    if (!(m.d - m.alpha > 0.0)) throw ConfigError("rescaling needs d - alpha > 0");
    return rescale(spec.eigenvalues, E, std::pow(static_cast<double>(m.L), m.d - m.alpha));
}

BorelSet::BorelSet(std::vector<std::pair<double, double>> intervals): intervals_(std::move(intervals))
{
    std::sort(intervals_.begin(), intervals_.end());
    for (std::size_t i = 0; i < intervals_.size(); ++i) {
        const auto [a, b] = intervals_[i];
        if (!std::isfinite(a) || !std::isfinite(b) || !(a < b)) {
            throw ConfigError("Borel set intervals must be bounded with a < b");
        }
        if (i > 0 && a < intervals_[i - 1].second) throw ConfigError("Borel set intervals overlap");
    }
}

double BorelSet::length() const
{
    double s = 0;
    for (const auto& [a, b]: intervals_) s += b - a;
    return s;
}

bool BorelSet::contains(double x) const
{
    for (const auto& [a, b]: intervals_) {
        if (a <= x && x < b) return true;
    }
    return false;
}

std::size_t count_in(const PointConfiguration& config, const BorelSet& B)
{
    const auto& p = config.points;
    if (!std::is_sorted(p.begin(), p.end())) {
        return static_cast<std::size_t>(std::count_if(p.begin(), p.end(), [&](double x) { return B.contains(x); }));
    }
    std::size_t total = 0;
    for (const auto& [a, b]: B.intervals()) {
        total += static_cast<std::size_t>(std::lower_bound(p.begin(), p.end(), b) -
                                          std::lower_bound(p.begin(), p.end(), a));
    }
    return total;
}

BlockDecomposition block_decompose(const LatticeBox& box, double epsilon, double delta)
{
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("block decomposition needs 0 < epsilon < 1");
    if (!(delta > 0.0)) throw ConfigError("block decomposition needs delta > 0");
    const auto& p = box.params();
    const int side = 2 * p.L + 1;
    BlockDecomposition dec;
    dec.epsilon = epsilon;
    dec.delta = delta;
    dec.margin = delta * std::log(static_cast<double>(p.L));
    // The small tolerance keeps exact powers such as 27^{1/3} = 3 from rounding down.
    dec.per_axis = std::clamp(static_cast<int>(std::floor(std::pow(side, epsilon) + 1e-9)), 1, side);
    const int M = dec.per_axis;
    const int base = side / M;

    auto run_lo = [&](int r) { return -p.L + r * base; };
    auto run_hi = [&](int r) { return r == M - 1 ? p.L : -p.L + (r + 1) * base - 1; };

    std::vector<int> run(p.d, 0);
    const std::size_t count = static_cast<std::size_t>(std::pow(M, p.d) + 0.5);
    for (std::size_t b = 0; b < count; ++b) {
        std::size_t rest = b;
        for (int axis = p.d - 1; axis >= 0; --axis) {
            run[axis] = static_cast<int>(rest % M);
            rest /= M;
        }
        Coord lo(p.d), hi(p.d);
        for (int axis = 0; axis < p.d; ++axis) {
            lo[axis] = run_lo(run[axis]);
            hi[axis] = run_hi(run[axis]);
        }
        Block blk;
        blk.region = Cuboid(lo, hi);
        blk.sites.reserve(blk.region.size());
        blk.interior.reserve(blk.region.size());
        for (std::size_t k = 0; k < blk.region.size(); ++k) {
            const Coord n = blk.region.coord(k);
            blk.sites.push_back(*box.index_of(n));
            int dist = side;
            for (int axis = 0; axis < p.d; ++axis) {
                dist = std::min({dist, n[axis] - lo[axis], hi[axis] - n[axis]});
            }
            blk.interior.push_back(dist > dec.margin);
        }
        dec.blocks.push_back(std::move(blk));
    }
    return dec;
}

std::vector<PointConfiguration> eta_processes(const LatticeBox& box, const BlockDecomposition& decomp, double alpha,
                                              const DisorderSample& sample, double E)
{
    const auto& p = box.params();
    const double scale = std::pow(static_cast<double>(p.L), p.d - alpha);
    const auto weights = site_weights(box, alpha);
    std::vector<PointConfiguration> out;
    out.reserve(decomp.blocks.size());
    for (const auto& blk: decomp.blocks) {
        auto h = assemble_restricted(box, blk.region, weights, sample);
        h.meta.alpha = alpha;
        out.push_back(rescale(eigenvalues(h).eigenvalues, E, scale));
    }
    return out;
}

CountDistribution make_count_distribution(std::vector<int> counts)
{
    CountDistribution dist;
    dist.n_samples = counts.size();
    if (counts.empty()) return dist;
    const int kmax = *std::max_element(counts.begin(), counts.end());
    dist.pmf.assign(static_cast<std::size_t>(kmax) + 1, 0.0);
    std::vector<double> k1(counts.size()), k2(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
        dist.pmf[counts[i]] += 1.0;
        k1[i] = counts[i];
        k2[i] = static_cast<double>(counts[i]) * (counts[i] - 1.0);
    }
    for (auto& x: dist.pmf) x /= static_cast<double>(counts.size());
    const auto m1 = mean_stderr(k1);
    const auto m2 = mean_stderr(k2);
    dist.mean = m1.mean;
    dist.mean_se = m1.se;
    dist.second_factorial = m2.mean;
    dist.second_factorial_se = m2.se;
    dist.counts = std::move(counts);
    return dist;
}

namespace {

void require_point_process(const ModelParams& params)
{
    params.validate();
    if (!(params.d - params.alpha > 0.0)) throw ConfigError("point-process scaling needs d - alpha > 0");
}

// Energies (E + a/scale, E + b/scale) for each interval, flattened.
std::vector<double> interval_energies(const BorelSet& B, double E, double scale)
{
    std::vector<double> e;
    for (const auto& [a, b]: B.intervals()) {
        e.push_back(E + a / scale);
        e.push_back(E + b / scale);
    }
    return e;
}

int count_from(const std::vector<std::size_t>& n)
{
    long total = 0;
    for (std::size_t i = 0; i + 1 < n.size(); i += 2) total += static_cast<long>(n[i + 1]) - static_cast<long>(n[i]);
    return static_cast<int>(total);
}

}  // namespace

CountDistribution counting_distribution(const ModelParams& params, double E, const BorelSet& B, std::size_t n_samples,
                                        std::uint64_t seed, bool use_blocks, BlockOptions blocks)
{
    require_point_process(params);
    if (n_samples == 0) throw ConfigError("counting distribution needs at least one sample");
    const LatticeBox box(params);
    const auto weights = site_weights(box, params.alpha);
    const auto energies = interval_energies(B, E, params.scale());
    std::optional<BlockDecomposition> dec;
    if (use_blocks) dec = block_decompose(box, blocks.epsilon, blocks.delta);

    std::vector<int> counts(n_samples);
    parallel_for(n_samples, [&](std::size_t s) {
        const auto sample = sample_disorder(box, seed, s);
        if (!dec) {
            counts[s] = count_from(count_below_many(assemble_restricted(box, box.cuboid(), weights, sample), energies));
            return;
        }
        int total = 0;
        for (const auto& blk: dec->blocks) {
            total += count_from(count_below_many(assemble_restricted(box, blk.region, weights, sample), energies));
        }
        counts[s] = total;
    });
    return make_count_distribution(std::move(counts));
}

GofReport poisson_gof(const CountDistribution& dist, double lambda, int fitted)
{
    if (!(lambda > 0.0)) throw ConfigError("poisson_gof needs lambda > 0");
    if (dist.n_samples < kMinGofSamples) {
        throw ConfigError("poisson_gof needs at least " + std::to_string(kMinGofSamples) + " samples");
    }
    GofReport rep;
    rep.lambda = lambda;
    rep.n_samples = dist.n_samples;
    const double n = static_cast<double>(dist.n_samples);

    // Total variation over all k, including the Poisson mass beyond the largest observed count.
    double tv = 0.0, covered = 0.0;
    for (std::size_t k = 0; k < dist.pmf.size(); ++k) {
        const double q = poisson_pmf(static_cast<int>(k), lambda);
        tv += std::abs(dist.pmf[k] - q);
        covered += q;
    }
    rep.tv_distance = 0.5 * (tv + std::max(0.0, 1.0 - covered));

    // Left-to-right greedy binning until each bin expects >= 5 samples; the
    // final bin is the open tail.
    const int kmax = std::max(static_cast<int>(dist.pmf.size()) - 1,
                              static_cast<int>(std::ceil(lambda + 10.0 * std::sqrt(lambda) + 10.0)));
    auto observed = [&](int k) { return k < static_cast<int>(dist.pmf.size()) ? dist.pmf[k] * n : 0.0; };
    GofBin cur{0, 0, 0.0, 0.0};
    double cdf = 0.0;
    for (int k = 0; k <= kmax; ++k) {
        const double q = poisson_pmf(k, lambda);
        cur.observed += observed(k);
        cur.expected += q * n;
        cdf += q;
        cur.k_hi = k;
        if (cur.expected >= 5.0) {
            rep.bins.push_back(cur);
            cur = GofBin{k + 1, k + 1, 0.0, 0.0};
        }
    }
    // Remaining tail mass beyond kmax, with any leftover partial bin.
    cur.expected += std::max(0.0, 1.0 - cdf) * n;
    for (int k = kmax + 1; k < static_cast<int>(dist.pmf.size()); ++k) cur.observed += observed(k);
    cur.k_hi = -1;
    if (cur.expected >= 5.0 || rep.bins.empty()) {
        rep.bins.push_back(cur);
    } else {
        rep.bins.back().observed += cur.observed;
        rep.bins.back().expected += cur.expected;
        rep.bins.back().k_hi = -1;
    }
    if (rep.bins.back().k_hi != -1) rep.bins.back().k_hi = -1;

    for (const auto& b: rep.bins) {
        if (b.expected > 0.0) rep.chi_square += (b.observed - b.expected) * (b.observed - b.expected) / b.expected;
    }
    rep.dof = std::max(1, static_cast<int>(rep.bins.size()) - 1 - fitted);
    rep.p_value = chi_square_survival(rep.chi_square, rep.dof);
    return rep;
}

GapReport gap_statistics(const std::vector<PointConfiguration>& configs, const BorelSet& window,
                         std::optional<double> lambda)
{
    if (window.intervals().empty()) throw ConfigError("gap statistics need a non-empty window");
    GapReport rep;
    std::size_t points = 0;
    for (const auto& c: configs) {
        std::vector<double> p = c.points;
        std::sort(p.begin(), p.end());
        for (const auto& [a, b]: window.intervals()) {
            auto first = std::lower_bound(p.begin(), p.end(), a);
            auto last = std::lower_bound(p.begin(), p.end(), b);
            points += static_cast<std::size_t>(last - first);
            for (auto it = first; it != last && std::next(it) != last; ++it) rep.spacings.push_back(*std::next(it) - *it);
        }
    }
    if (rep.spacings.empty()) throw ConfigError("gap statistics: fewer than two points in the window in every sample");
    std::sort(rep.spacings.begin(), rep.spacings.end());
    rep.lambda = lambda ? *lambda : static_cast<double>(points) / (static_cast<double>(configs.size()) * window.length());
    if (!(rep.lambda > 0.0)) throw ConfigError("gap statistics need lambda > 0");
    const double n = static_cast<double>(rep.spacings.size());
    double d = 0.0;
    for (std::size_t i = 0; i < rep.spacings.size(); ++i) {
        const double F = 1.0 - std::exp(-rep.lambda * rep.spacings[i]);
        d = std::max({d, (i + 1) / n - F, F - i / n});
    }
    rep.ks_distance = d;
    return rep;
}

std::vector<PointConfiguration> synthetic_poisson(double lambda, double lo, double hi, std::size_t n,
                                                  std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::poisson_distribution<int> count(lambda * (hi - lo));
    std::uniform_real_distribution<double> pos(lo, hi);
    std::vector<PointConfiguration> out(n);
    for (auto& c: out) {
        const int k = count(rng);
        for (int i = 0; i < k; ++i) c.points.push_back(pos(rng));
        std::sort(c.points.begin(), c.points.end());
    }
    return out;
}

std::vector<PointConfiguration> synthetic_clock(double lambda, double lo, double hi, std::size_t n,
                                                std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> phase(0.0, 1.0);
    const double step = 1.0 / lambda;
    std::vector<PointConfiguration> out(n);
    for (auto& c: out) {
        for (double x = lo + phase(rng) * step; x < hi; x += step) c.points.push_back(x);
    }
    return out;
}

Estimate superposition_distance(const ModelParams& params, double E, std::size_t n_samples, std::uint64_t seed,
                                std::complex<double> z, BlockOptions blocks)
{
    require_point_process(params);
    if (!(z.imag() > 0.0)) throw ConfigError("superposition distance needs Im z > 0");
    if (n_samples == 0) throw ConfigError("superposition distance needs at least one sample");
    const LatticeBox box(params);
    const auto weights = site_weights(box, params.alpha);
    const auto dec = block_decompose(box, blocks.epsilon, blocks.delta);
    const double scale = params.scale();
    const std::complex<double> w = E + z / scale;
    std::vector<double> dist(n_samples);
    parallel_for(n_samples, [&](std::size_t s) {
        const auto sample = sample_disorder(box, seed, s);
        const double whole = trace_resolvent(assemble_restricted(box, box.cuboid(), weights, sample), w).imag();
        std::vector<double> parts;
        for (const auto& blk: dec.blocks) {
            parts.push_back(trace_resolvent(assemble_restricted(box, blk.region, weights, sample), w).imag());
        }
        dist[s] = std::abs(whole - pairwise_sum(parts)) / scale;
    });
    return mean_stderr(dist);
}

BlockConditionStats block_condition_statistics(const ModelParams& params, double E, const BorelSet& B,
                                               std::size_t n_samples, std::uint64_t seed, BlockOptions blocks)
{
    require_point_process(params);
    if (n_samples < 2) throw ConfigError("block statistics need at least two samples");
    const LatticeBox box(params);
    const auto weights = site_weights(box, params.alpha);
    const auto dec = block_decompose(box, blocks.epsilon, blocks.delta);
    const auto energies = interval_energies(B, E, params.scale());
    const std::size_t nb = dec.blocks.size();
    std::vector<std::vector<int>> counts(n_samples, std::vector<int>(nb));
    parallel_for(n_samples, [&](std::size_t s) {
        const auto sample = sample_disorder(box, seed, s);
        for (std::size_t p = 0; p < nb; ++p) {
            counts[s][p] =
                count_from(count_below_many(assemble_restricted(box, dec.blocks[p].region, weights, sample), energies));
        }
    });

    BlockConditionStats st;
    st.blocks = static_cast<int>(nb);
    std::vector<double> any(n_samples), two(n_samples), indicator(n_samples);
    for (std::size_t s = 0; s < n_samples; ++s) {
        for (std::size_t p = 0; p < nb; ++p) {
            any[s] += counts[s][p] >= 1 ? 1.0 : 0.0;
            two[s] += counts[s][p] >= 2 ? 1.0 : 0.0;
        }
    }
    st.sum_p_any = mean_stderr(any);
    st.sum_p_two = mean_stderr(two);
    for (std::size_t p = 0; p < nb; ++p) {
        for (std::size_t s = 0; s < n_samples; ++s) indicator[s] = counts[s][p] >= 1 ? 1.0 : 0.0;
        const auto e = mean_stderr(indicator);
        if (e.mean > st.max_p_any) {
            st.max_p_any = e.mean;
            st.max_p_any_se = e.se;
        }
    }
    return st;
}

}  // namespace speclab
