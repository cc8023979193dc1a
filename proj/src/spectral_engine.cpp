#include "speclab/spectral_engine.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "speclab/banded.hpp"
#include "speclab/errors.hpp"

namespace speclab {

namespace {

std::string describe(const SampleMeta& m, std::size_t n)
{
    std::ostringstream os;
    os << "matrix " << n << "x" << n << " (d=" << m.d << ", alpha=" << m.alpha << ", L=" << m.L
       << ", seed=" << m.seed << ", sample=" << m.sample_index << ")";
    return os.str();
}

void check_trace(const HamiltonianMatrix& h, const std::vector<double>& ev)
{
    const double tr = pairwise_sum(h.diag);
    const double sum = pairwise_sum(ev);
    double norm = 1.0;
    for (double x: h.diag) norm = std::max(norm, std::abs(x));
    if (std::abs(tr - sum) > 1e-9 * norm * static_cast<double>(h.size())) {
        throw InvariantViolation("trace identity failed for " + describe(h.meta, h.size()));
    }
}

// Gershgorin discs; for the model this is [0, 4d + max b_n q_n].
void check_range(const HamiltonianMatrix& h, const std::vector<double>& ev)
{
    if (ev.empty()) return;
    std::vector<int> degree(h.size(), 0);
    for (const auto& b: h.bonds) {
        ++degree[b.i];
        ++degree[b.j];
    }
    double lo = h.diag[0] - degree[0], hi = h.diag[0] + degree[0], norm = 1.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        lo = std::min(lo, h.diag[i] - degree[i]);
        hi = std::max(hi, h.diag[i] + degree[i]);
        norm = std::max(norm, std::abs(h.diag[i]) + degree[i]);
    }
    const double tol = 1e-9 * norm;
    if (ev.front() < lo - tol || ev.back() > hi + tol) {
        throw InvariantViolation("eigenvalues outside the Gershgorin range for " + describe(h.meta, h.size()));
    }
}

template <class Solver>
void check_info(const Solver& solver, const HamiltonianMatrix& h)
{
    if (solver.info() != Eigen::Success) {
        throw NumericalError("eigensolver did not converge for " + describe(h.meta, h.size()));
    }
}

bool is_chain(const HamiltonianMatrix& h)
{
    return h.half_bandwidth() <= 1;
}

Eigen::VectorXd subdiagonal(const HamiltonianMatrix& h)
{
    Eigen::VectorXd e = Eigen::VectorXd::Zero(std::max<Eigen::Index>(static_cast<Eigen::Index>(h.size()) - 1, 0));
    for (const auto& b: h.bonds) e(static_cast<Eigen::Index>(b.i)) = -1.0;
    return e;
}

}  // namespace

Spectrum eigenvalues(const HamiltonianMatrix& h)
{
    Spectrum s;
    s.meta = h.meta;
    if (h.size() == 0) return s;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    if (is_chain(h)) {
        const Eigen::Map<const Eigen::VectorXd> d(h.diag.data(), static_cast<Eigen::Index>(h.size()));
        solver.computeFromTridiagonal(d, subdiagonal(h), Eigen::EigenvaluesOnly);
    } else {
        solver.compute(h.dense(), Eigen::EigenvaluesOnly);
    }
    check_info(solver, h);
    const auto& ev = solver.eigenvalues();
    s.eigenvalues.assign(ev.data(), ev.data() + ev.size());
    std::sort(s.eigenvalues.begin(), s.eigenvalues.end());
    check_trace(h, s.eigenvalues);
    check_range(h, s.eigenvalues);
    return s;
}

Eigensystem eigensystem(const HamiltonianMatrix& h)
{
    Eigensystem es;
    es.spectrum.meta = h.meta;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    if (is_chain(h)) {
        const Eigen::Map<const Eigen::VectorXd> d(h.diag.data(), static_cast<Eigen::Index>(h.size()));
        solver.computeFromTridiagonal(d, subdiagonal(h), Eigen::ComputeEigenvectors);
    } else {
        solver.compute(h.dense(), Eigen::ComputeEigenvectors);
    }
    check_info(solver, h);
    // Eigen returns eigenvalues in increasing order.
    const auto& ev = solver.eigenvalues();
    es.spectrum.eigenvalues.assign(ev.data(), ev.data() + ev.size());
    es.vectors = solver.eigenvectors();
    check_trace(h, es.spectrum.eigenvalues);
    check_range(h, es.spectrum.eigenvalues);
    return es;
}

std::size_t count_below(const Spectrum& spec, double E)
{
    return static_cast<std::size_t>(std::upper_bound(spec.eigenvalues.begin(), spec.eigenvalues.end(), E) -
                                    spec.eigenvalues.begin());
}

std::vector<std::size_t> count_below_many(const HamiltonianMatrix& h, std::span<const double> energies)
{
    const double n = static_cast<double>(h.size());
    const double k = static_cast<double>(std::max<std::size_t>(h.half_bandwidth(), 1));
    // Rough flop counts: ~4n^3 for a dense eigenvalue solve, n k^2 / 2 per factorization.
    const bool dense = is_chain(h) || 4.0 * n * n * n < static_cast<double>(energies.size()) * n * k * k / 2.0;
    if (!dense) return count_below_inertia(h, energies);
    const Spectrum s = eigenvalues(h);
    std::vector<std::size_t> out;
    out.reserve(energies.size());
    for (double E: energies) out.push_back(count_below(s, E));
    return out;
}

std::vector<SandwichCounts> sandwich_counts(const LatticeBox& box, double alpha, const DisorderSample& sample,
                                            std::span<const double> energies)
{
    const auto weights = site_weights(box, alpha);
    const auto h = assemble_restricted(box, box.cuboid(), weights, sample);
    const Spectrum s = eigenvalues(h);
    const double four_d = 4.0 * box.params().d;
    std::vector<SandwichCounts> out;
    out.reserve(energies.size());
    for (double E: energies) {
        SandwichCounts c;
        c.lower = diagonal_count(weights, sample, E, four_d);
        c.count = count_below(s, E);
        c.upper = diagonal_count(weights, sample, E, 0.0);
        if (!(c.lower <= c.count && c.count <= c.upper)) {
            std::ostringstream os;
            os << "eigenvalue sandwich violated at E=" << E << ": " << c.lower << " <= " << c.count << " <= "
               << c.upper << " fails for " << describe(h.meta, h.size());
            throw InvariantViolation(os.str());
        }
        out.push_back(c);
    }
    return out;
}

SandwichCounts sandwich_counts(const LatticeBox& box, double alpha, const DisorderSample& sample, double E)
{
    const double energies[] = {E};
    return sandwich_counts(box, alpha, sample, energies).front();
}

std::size_t diagonal_count(std::span<const double> weights, const DisorderSample& sample, double E, double shift)
{
    if (weights.size() != sample.values.size()) throw ConfigError("weights and sample differ in size");
    std::size_t c = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (shift + weights[i] * sample.values[i] <= E) ++c;
    }
    return c;
}

double expected_count_diag(const LatticeBox& box, double alpha, double E, double shift)
{
    const double eps = E - shift;
    if (eps <= 0.0) return 0.0;
    std::vector<double> terms;
    terms.reserve(box.size());
    for (const auto& n: box.sites()) terms.push_back(std::min(1.0, eps / weight_b(n, alpha)));
    return pairwise_sum(terms);
}

double default_bin_width(const ModelParams& params)
{
    const double ws = weight_sum(LatticeBox(params), params.alpha);
    return std::max(0.05, 4.0 / ws);
}

namespace {

void require_positive_scaling(const ModelParams& params)
{
    params.validate();
    if (!(params.d - params.alpha > 0.0)) {
        throw ConfigError("point-process scaling needs d - alpha > 0");
    }
}

// Runs `per_sample(h, counts)` for every sample, where counts are N(E) at
// the requested energies, and stores its rows by sample index.
template <class Row, class PerSample>
std::vector<Row> count_ensemble(const ModelParams& params, std::span<const double> energies, std::size_t n_samples,
                                std::uint64_t seed, PerSample per_sample)
{
    const LatticeBox box(params);
    const auto weights = site_weights(box, params.alpha);
    std::vector<Row> rows(n_samples);
    parallel_for(n_samples, [&](std::size_t i) {
        const auto sample = sample_disorder(box, seed, i);
        auto h = assemble_restricted(box, box.cuboid(), weights, sample);
        h.meta.alpha = params.alpha;
        rows[i] = per_sample(count_below_many(h, energies));
    });
    return rows;
}

}  // namespace

IdsEstimate empirical_ids(const ModelParams& params, std::span<const double> energies, std::size_t n_samples,
                          std::uint64_t seed, double bin_width)
{
    require_positive_scaling(params);
    if (n_samples == 0) throw ConfigError("empirical_ids needs at least one sample");
    if (!std::is_sorted(energies.begin(), energies.end())) throw ConfigError("energy grid must be sorted");
    const double h = bin_width > 0.0 ? bin_width : default_bin_width(params);
    const std::size_t g = energies.size();

    // Energies layout: grid, grid - h/2, grid + h/2.
    std::vector<double> all(3 * g);
    for (std::size_t i = 0; i < g; ++i) {
        all[i] = energies[i];
        all[g + i] = energies[i] - h / 2;
        all[2 * g + i] = energies[i] + h / 2;
    }
    const double scale = params.scale();
    using Row = std::vector<std::size_t>;
    const auto rows = count_ensemble<Row>(params, all, n_samples, seed, [](Row counts) { return counts; });

    IdsEstimate out;
    out.energies.assign(energies.begin(), energies.end());
    out.bin_width = h;
    out.n_samples = n_samples;
    std::vector<double> nu(n_samples), f(n_samples);
    for (std::size_t e = 0; e < g; ++e) {
        for (std::size_t s = 0; s < n_samples; ++s) {
            nu[s] = static_cast<double>(rows[s][e]) / scale;
            f[s] = (static_cast<double>(rows[s][2 * g + e]) - static_cast<double>(rows[s][g + e])) / (h * scale);
        }
        const auto nu_est = mean_stderr(nu);
        const auto f_est = mean_stderr(f);
        out.nu_L.push_back(nu_est.mean);
        out.nu_se.push_back(nu_est.se);
        out.f_L.push_back(f_est.mean);
        out.f_se.push_back(f_est.se);
    }
    return out;
}

std::vector<double> default_window_schedule()
{
    std::vector<double> w;
    for (int k = 0; k <= 6; ++k) w.push_back(std::ldexp(1.0, -k));
    return w;
}

DensityEstimate estimate_N1_prime(const ModelParams& params, double E, std::size_t n_samples, std::uint64_t seed,
                                  std::span<const double> window_schedule)
{
    require_positive_scaling(params);
    if (n_samples < 2) throw ConfigError("density estimation needs at least two samples");
    std::vector<double> windows(window_schedule.begin(), window_schedule.end());
    if (windows.empty()) windows = default_window_schedule();
    const std::size_t k = windows.size();

    std::vector<double> all(2 * k);
    for (std::size_t i = 0; i < k; ++i) {
        all[i] = E - windows[i];
        all[k + i] = E + windows[i];
    }
    const double scale = params.scale();
    using Row = std::vector<double>;
    const auto rows = count_ensemble<Row>(params, all, n_samples, seed, [&](std::vector<std::size_t> c) {
        Row r(k);
        for (std::size_t i = 0; i < k; ++i) {
            r[i] = (static_cast<double>(c[k + i]) - static_cast<double>(c[i])) / (2.0 * windows[i] * scale);
        }
        return r;
    });

    DensityEstimate out;
    std::vector<double> x(n_samples), diff(n_samples);
    bool found = false;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t s = 0; s < n_samples; ++s) x[s] = rows[s][i];
        const auto est = mean_stderr(x);
        WindowEstimate w{windows[i], est.mean, est.se, 0.0, 0.0};
        if (i > 0) {
            for (std::size_t s = 0; s < n_samples; ++s) diff[s] = rows[s][i] - rows[s][i - 1];
            const auto d = mean_stderr(diff);
            w.shift_from_previous = d.mean;
            w.shift_se = d.se;
            if (!found && std::abs(d.mean) <= 2.0 * d.se) {
                found = true;
                out.value = est.mean;
                out.se = est.se;
                out.half_width = windows[i];
            }
        }
        out.windows.push_back(w);
    }
    if (!found) {
        throw NumericalError("density estimate did not stabilize over the window schedule; increase n_samples (now " +
                             std::to_string(n_samples) + ")");
    }
    return out;
}

std::string to_string(BoundKind kind)
{
    switch (kind) {
    case BoundKind::spectral_averaging: return "spectral_averaging";
    case BoundKind::wegner: return "wegner";
    case BoundKind::minami: return "minami";
    }
    return "unknown";
}

BoundCheckReport make_bound_report(BoundKind kind, const Estimate& empirical, double bound)
{
    BoundCheckReport r;
    r.kind = kind;
    r.empirical = empirical.mean;
    r.se = empirical.se;
    r.bound = bound;
    r.n_samples = empirical.n;
    r.satisfied = empirical.mean <= bound + kBoundSigmas * empirical.se;
    return r;
}

std::vector<BoundCheckReport> check_spectral_averaging(const ModelParams& params, const std::vector<Coord>& sites,
                                                       Interval I, std::size_t n_samples, std::uint64_t seed)
{
    params.validate();
    if (!(I.length() >= 0.0)) throw ConfigError("interval must have lo <= hi");
    const LatticeBox box(params);
    const auto weights = site_weights(box, params.alpha);
    std::vector<std::size_t> index;
    for (const auto& n: sites) {
        auto i = box.index_of(n);
        if (!i) throw ConfigError("site outside the box");
        index.push_back(*i);
    }
    std::vector<std::vector<double>> mass(sites.size(), std::vector<double>(n_samples));
    parallel_for(n_samples, [&](std::size_t s) {
        const auto sample = sample_disorder(box, seed, s);
        const auto h = assemble_restricted(box, box.cuboid(), weights, sample);
        const auto es = eigensystem(h);
        const auto& ev = es.spectrum.eigenvalues;
        for (std::size_t k = 0; k < index.size(); ++k) {
            double m = 0.0;
            for (std::size_t j = 0; j < ev.size(); ++j) {
                if (ev[j] > I.lo && ev[j] <= I.hi) {
                    const double c = es.vectors(static_cast<Eigen::Index>(index[k]), static_cast<Eigen::Index>(j));
                    m += c * c;
                }
            }
            mass[k][s] = m;
        }
    });
    std::vector<BoundCheckReport> out;
    for (std::size_t k = 0; k < sites.size(); ++k) {
        const double bound = std::numbers::pi * I.length() / weights[index[k]];
        out.push_back(make_bound_report(BoundKind::spectral_averaging, mean_stderr(mass[k]), bound));
    }
    return out;
}

BoundCheckReport check_spectral_averaging(const ModelParams& params, std::span<const int> site, Interval I,
                                          std::size_t n_samples, std::uint64_t seed)
{
    return check_spectral_averaging(params, std::vector<Coord>{Coord(site.begin(), site.end())}, I, n_samples, seed)
        .front();
}

std::pair<BoundCheckReport, BoundCheckReport> check_wegner_minami(const ModelParams& params, Interval I,
                                                                  std::size_t n_samples, std::uint64_t seed)
{
    params.validate();
    if (!(I.length() >= 0.0)) throw ConfigError("interval must have lo <= hi");
    const double energies[] = {I.lo, I.hi};
    using Row = std::pair<double, double>;
    const auto rows = count_ensemble<Row>(params, energies, n_samples, seed, [](std::vector<std::size_t> c) {
        const double k = static_cast<double>(c[1]) - static_cast<double>(c[0]);
        return Row{k, k * (k - 1.0)};
    });
    std::vector<double> first(n_samples), second(n_samples);
    for (std::size_t s = 0; s < n_samples; ++s) {
        first[s] = rows[s].first;
        second[s] = rows[s].second;
    }
    const double wegner = weight_sum(LatticeBox(params), params.alpha) * I.length();
    return {make_bound_report(BoundKind::wegner, mean_stderr(first), wegner),
            make_bound_report(BoundKind::minami, mean_stderr(second), wegner * wegner)};
}

}  // namespace speclab
