#include "speclab/green_toolkit.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "speclab/banded.hpp"
#include "speclab/errors.hpp"
#include "speclab/stats.hpp"

namespace speclab {

using std::numbers::pi;

cplx log_cut_down(cplx z)
{
    double arg = std::arg(z);
    if (arg <= -pi / 2) arg += 2 * pi;
    return {std::log(std::abs(z)), arg};
}

namespace {

bool on_cut(double a, cplx z)
{
    if (z == cplx(0.0) || z == cplx(a)) return true;
    return z.imag() < 0.0 && (z.real() == 0.0 || z.real() == a);
}

}  // namespace

cplx b_ell(double a, cplx z, int ell)
{
    if (!(a > 0.0)) throw ConfigError("b_ell needs a > 0");
    if (ell < 1) throw ConfigError("b_ell needs ell >= 1");
    if (on_cut(a, z)) {
        std::ostringstream os;
        os << "b_ell: z = " << z << " lies on a branch cut for a = " << a;
        throw NumericalError(os.str());
    }
    if (ell == 1) return (log_cut_down(z - a) - log_cut_down(z)) / a;
    // Antiderivative (a x - z)^{1-l} / (a (1-l)) evaluated between 0 and 1.
    const int p = ell - 1;
    return (std::pow(-z, -p) - std::pow(a - z, -p)) / (a * p);
}

double b_ell_bound(double a, cplx z, int ell, double M)
{
    if (!(M > 1.0) || !(z.real() > 2 * M * M) || !(std::abs(z - a) > 2 * M * M) || ell < 1 || !(a > 0.0)) {
        throw ConfigError("b_ell_bound preconditions: M > 1, Re z > 2M^2, |z - a| > 2M^2, ell >= 1, a > 0");
    }
    if (ell == 1) return (3 * pi + 1) / a + 1 / (2 * M * M);
    return 1.0 / (a * std::pow(M, ell - 1));
}

void RegionGParams::validate() const
{
    if (d < 1) throw ConfigError("region G needs d >= 1");
    if (!(M > 2.0 * d)) throw ConfigError("region G needs M > 2d");
    if (!(alpha > 0.0)) throw ConfigError("region G needs alpha > 0");
}

namespace {

bool outside_disks(cplx z, double radius, double shift, std::span<const double> b_values)
{
    for (double b: b_values) {
        if (std::abs(z - (b + shift)) < radius) return false;
    }
    return true;
}

}  // namespace

bool in_region_G(cplx z, const RegionGParams& p, std::span<const double> b_values)
{
    p.validate();
    const double r = 2 * p.M * p.M;
    if (!(z.real() > r) || !(z.imag() > -p.d)) return false;
    return outside_disks(z, r, 2.0 * p.d, b_values);
}

bool in_region_G(cplx z, const RegionGParams& p)
{
    p.validate();
    const double r = 2 * p.M * p.M;
    if (!(z.real() > r) || !(z.imag() > -p.d)) return false;
    if (std::abs(z.imag()) >= r) return true;
    // Disk centres b_n + 2d are real; only |n|^alpha < Re z + r can matter.
    const double reach = z.real() + r;
    const int R = static_cast<int>(std::ceil(std::pow(reach, 1.0 / p.alpha))) + 1;
    std::vector<int> n(p.d, 0);
    std::vector<double> b;
    // Non-negative orthant suffices: b_n depends on |n| only.
    std::function<void(int)> walk = [&](int axis) {
        if (axis == p.d) {
            b.push_back(weight_b(n, p.alpha));
            return;
        }
        for (int x = 0; x <= R; ++x) {
            n[axis] = x;
            walk(axis + 1);
        }
    };
    walk(0);
    return outside_disks(z, r, 2.0 * p.d, b);
}

namespace {

std::vector<cplx> apply_shifted(const HamiltonianMatrix& h, cplx z, const std::vector<cplx>& u)
{
    std::vector<cplx> out(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = (h.diag[i] - z) * u[i];
    for (const auto& b: h.bonds) {
        out[b.i] -= u[b.j];
        out[b.j] -= u[b.i];
    }
    return out;
}

}  // namespace

cplx resolvent_entry(const HamiltonianMatrix& h, cplx z, std::size_t n, std::size_t m)
{
    if (z.imag() == 0.0) throw ConfigError("resolvent_entry requires Im z != 0");
    if (n >= h.size() || m >= h.size()) throw ConfigError("resolvent_entry: site index out of range");
    const ResolventSolver solver(h, z);
    auto u = solver.column(m);
    auto residual_norm = [&] {
        auto r = apply_shifted(h, z, u);
        r[m] -= 1.0;
        double s = 0;
        for (const auto& x: r) s += std::norm(x);
        return std::make_pair(std::sqrt(s), r);
    };
    auto [norm, r] = residual_norm();
    if (norm > 1e-10) {
        // One step of iterative refinement.
        for (auto& x: r) x = -x;
        const auto du = solver.solve(r);
        for (std::size_t i = 0; i < u.size(); ++i) u[i] += du[i];
        norm = residual_norm().first;
        if (norm > 1e-10) throw NumericalError("resolvent solve residual too large");
    }
    return u[n];
}

cplx resolvent_entry(const HamiltonianMatrix& h, cplx z, std::span<const int> n, std::span<const int> m)
{
    const auto i = h.region.index_of(n);
    const auto j = h.region.index_of(m);
    if (!i || !j) throw ConfigError("resolvent_entry: site outside the matrix region");
    return resolvent_entry(h, z, *i, *j);
}

WalkExpansionResult walk_expansion_diag(const LatticeBox& box, double alpha, cplx z, std::span<const int> site, int K,
                                        std::optional<double> M, std::uint64_t budget)
{
    if (K < 0) throw ConfigError("walk expansion needs K >= 0");
    const auto start_index = box.index_of(site);
    if (!start_index) throw ConfigError("walk expansion start site outside the box");
    const int d = box.params().d;
    const cplx w = z - 2.0 * d;
    const Cuboid& cube = box.cuboid();
    const std::size_t start = *start_index;

    // Sites a closed walk of length <= K can reach, with neighbour lists.
    const int reach = K / 2;
    std::map<std::size_t, std::size_t> local;   // box index -> local slot
    std::vector<std::size_t> sites;
    std::vector<int> dist;
    for (std::size_t i = 0; i < box.size(); ++i) {
        const int r = l1_distance(box.site(i), site);
        if (r <= reach) {
            local[i] = sites.size();
            sites.push_back(i);
            dist.push_back(r);
        }
    }
    std::vector<std::vector<std::size_t>> neighbours(sites.size());
    for (std::size_t a = 0; a < sites.size(); ++a) {
        Coord n = box.site(sites[a]);
        for (int axis = 0; axis < d; ++axis) {
            for (int step: {-1, 1}) {
                n[axis] += step;
                if (cube.contains(n)) {
                    const auto it = local.find(*cube.index_of(n));
                    if (it != local.end()) neighbours[a].push_back(it->second);
                }
                n[axis] -= step;
            }
        }
    }

    // B_l(b_m, z - 2d) for l = 1..K+1, cached per site.
    std::vector<std::vector<cplx>> factor(sites.size());
    for (std::size_t a = 0; a < sites.size(); ++a) {
        const double b = weight_b(box.site(sites[a]), alpha);
        factor[a].resize(K + 2);
        for (int l = 1; l <= K + 1; ++l) factor[a][l] = b_ell(b, w, l);
    }

    const std::size_t origin = local.at(start);
    std::vector<int> visits(sites.size(), 0);
    std::vector<std::size_t> touched;
    cplx total = 0.0;
    std::uint64_t closed = 0;
    std::uint64_t nodes = 0;

    auto suggest_budget_K = [&] {
        int k = 0;
        double total_nodes = 1;
        while (total_nodes + std::pow(2.0 * d, k + 1) <= static_cast<double>(budget)) {
            ++k;
            total_nodes += std::pow(2.0 * d, k);
        }
        return k;
    };

    std::function<void(std::size_t, int)> dfs = [&](std::size_t pos, int depth) {
        if (++nodes > budget) {
            throw NumericalError("walk enumeration exceeded the budget of " + std::to_string(budget) +
                                 " steps; try K <= " + std::to_string(suggest_budget_K()));
        }
        if (pos == origin) {
            cplx prod = 1.0;
            for (std::size_t m: touched) prod *= factor[m][visits[m]];
            total += prod;
            ++closed;
        }
        if (depth == K) return;
        for (std::size_t next: neighbours[pos]) {
            if (dist[next] > K - depth - 1) continue;
            if (visits[next]++ == 0) touched.push_back(next);
            dfs(next, depth + 1);
            if (--visits[next] == 0) touched.pop_back();
        }
    };
    visits[origin] = 1;
    touched.push_back(origin);
    dfs(origin, 0);

    WalkExpansionResult out;
    out.value = total;
    out.K = K;
    out.paths_enumerated = closed;
    const double eta = z.imag();
    if (eta > 2.0 * d) {
        // |B_l| <= eta^{-l} and at most (2d)^k closed walks of length k.
        const double ratio = 2.0 * d / eta;
        out.tail_bound = std::pow(ratio, K + 1) / (eta * (1 - ratio));
        out.regime = "neumann";
    } else if (M && in_region_G(z, RegionGParams{*M, alpha, d}, site_weights(box, alpha))) {
        const double ratio = 2.0 * d / *M;
        out.tail_bound = std::pow(ratio, K + 2) / ((1 - ratio) * weight_b(site, alpha));
        out.regime = "region_G";
    } else {
        out.tail_bound = std::numeric_limits<double>::infinity();
        out.regime = "none";
    }
    return out;
}

cplx phi_L(const ModelParams& params, cplx z)
{
    params.validate();
    const LatticeBox box(params);
    const cplx zd = z - 2.0 * params.d;
    std::vector<double> re, im;
    re.reserve(box.size());
    im.reserve(box.size());
    for (const auto& n: box.sites()) {
        const cplx t = b_ell(weight_b(n, params.alpha), zd, 1);
        re.push_back(t.real());
        im.push_back(t.imag());
    }
    return cplx(pairwise_sum(re), pairwise_sum(im)) / params.scale();
}

ComplexEstimate psi_L_mc(const ModelParams& params, cplx z, std::size_t n_samples, std::uint64_t seed)
{
    params.validate();
    if (z.imag() == 0.0) throw ConfigError("psi_L needs Im z != 0");
    if (n_samples == 0) throw ConfigError("psi_L needs at least one sample");
    const LatticeBox box(params);
    const auto weights = site_weights(box, params.alpha);
    std::vector<double> re(n_samples), im(n_samples);
    const double scale = params.scale();
    parallel_for(n_samples, [&](std::size_t s) {
        const auto h = assemble_restricted(box, box.cuboid(), weights, sample_disorder(box, seed, s));
        const cplx t = trace_resolvent(h, z) / scale;
        re[s] = t.real();
        im[s] = t.imag();
    });
    const auto r = mean_stderr(re);
    const auto i = mean_stderr(im);
    return {cplx(r.mean, i.mean), r.se, i.se, n_samples};
}

ComplexEstimate g_L(const ModelParams& params, cplx z, std::size_t n_samples, std::uint64_t seed)
{
    auto psi = psi_L_mc(params, z, n_samples, seed);
    psi.mean -= phi_L(params, z);
    return psi;
}

double g_L_bound(const ModelParams& params, double M)
{
    RegionGParams{M, params.alpha, params.d}.validate();
    const double r = 2.0 * params.d / M;
    const double c_prime = r * r / (1 - r);
    return c_prime * weight_sum(LatticeBox(params), params.alpha) / params.scale();
}

double weight_density_limit(int d, double alpha)
{
    if (d < 1 || !(alpha > 0.0) || !(d - alpha > 0.0)) {
        throw ConfigError("weight density limit needs 0 < alpha < d");
    }
    // The cube is 2d pyramids over its faces; on the face x_1 = 1,
    // int_0^1 t^{d-1-alpha} dt = 1/(d - alpha) leaves a (d-1)-dim integral.
    using boost::math::quadrature::gauss_kronrod;
    std::function<double(int, double)> face = [&](int remaining, double sq) -> double {
        if (remaining == 0) return std::pow(1.0 + sq, -alpha / 2);
        return gauss_kronrod<double, 61>::integrate(
            [&](double w) { return face(remaining - 1, sq + w * w); }, -1.0, 1.0, 15, 1e-14);
    };
    return 2.0 * d / (d - alpha) * face(d - 1, 0.0);
}

namespace {

double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

AppendixReport appendix_limit_check(int d, double alpha, std::span<const int> Ls, cplx z)
{
    const cplx zd = z - 2.0 * d;
    if (!(zd.real() > 0.0)) throw ConfigError("appendix check needs Re z_d > 0");
    if (!(d - alpha > 0.0) || !(alpha > 1.0)) throw ConfigError("appendix check needs 1 < alpha < d");
    if (Ls.size() < 2) throw ConfigError("appendix check needs at least two box sizes");
    if (std::abs(zd.imag()) < 1e-12) {
        // Excluded points: z_d = b_n for some n in Z^d.
        const double target = std::pow(zd.real() - 1.0, 1.0 / alpha);
        const int R = static_cast<int>(target) + 2;
        std::vector<int> n(d, 0);
        std::function<bool(int)> hit = [&](int axis) -> bool {
            if (axis == d) return std::abs(weight_b(n, alpha) - zd.real()) < 1e-9 * zd.real();
            for (int x = 0; x <= R; ++x) {
                n[axis] = x;
                if (hit(axis + 1)) return true;
            }
            return false;
        };
        if (zd.real() >= 1.0 && hit(0)) throw ConfigError("appendix check: z_d coincides with a coupling b_n");
    }

    AppendixReport rep;
    rep.z_d = zd;
    rep.C = weight_density_limit(d, alpha);
    // Continuation from Im z_d > 0 over Re z_d > 0: ln(-z_d) = ln(z_d) - i pi.
    rep.im_log_minus_zd = std::arg(zd) - pi;
    rep.branch = "ln(-z_d) = ln(z_d) - i*pi (continuation from Im z_d > 0 across Re z_d > 0)";
    const double target = -rep.C * rep.im_log_minus_zd;
    std::vector<double> lx, ly;
    for (int L: Ls) {
        const double im_phi = phi_L(ModelParams{d, alpha, L}, z).imag();
        const double err = std::abs(im_phi - target);
        rep.rows.push_back({L, im_phi, target, err});
        lx.push_back(std::log(static_cast<double>(L)));
        ly.push_back(std::log(err));
    }
    rep.decreasing = true;
    for (std::size_t i = 1; i < rep.rows.size(); ++i) {
        if (!(rep.rows[i].error < rep.rows[i - 1].error)) rep.decreasing = false;
    }
    rep.slope = least_squares_slope(lx, ly);
    rep.slope_target = -std::min(alpha, d - alpha);
    rep.slope_ok = std::abs(rep.slope - rep.slope_target) <= 0.25 * std::abs(rep.slope_target);
    return rep;
}

double single_site_moment_constant(double s)
{
    return (3.0 - s) / (1.0 - s);
}

FracMomentReport frac_moment(const ModelParams& params, cplx z, double s,
                             const std::vector<std::pair<Coord, Coord>>& pairs, std::size_t n_samples,
                             std::uint64_t seed)
{
    params.validate();
    if (!(s > 0.0 && s < 1.0)) throw ConfigError("fractional moment needs 0 < s < 1");
    if (z.imag() == 0.0) throw ConfigError("fractional moment needs Im z != 0");
    if (n_samples < 2) throw ConfigError("fractional moment needs at least two samples");
    const LatticeBox box(params);
    const auto weights = site_weights(box, params.alpha);

    // Group by source site m: one solve per distinct source and sample.
    std::vector<std::size_t> sources;
    std::vector<std::pair<std::size_t, std::size_t>> idx;   // (n index, source slot)
    for (const auto& [n, m]: pairs) {
        const auto i = box.index_of(n), j = box.index_of(m);
        if (!i || !j) throw ConfigError("fractional moment pair outside the box");
        auto it = std::find(sources.begin(), sources.end(), *j);
        if (it == sources.end()) {
            sources.push_back(*j);
            it = sources.end() - 1;
        }
        idx.emplace_back(*i, static_cast<std::size_t>(it - sources.begin()));
    }
    std::vector<std::vector<double>> values(pairs.size(), std::vector<double>(n_samples));
    parallel_for(n_samples, [&](std::size_t smp) {
        const auto h = assemble_restricted(box, box.cuboid(), weights, sample_disorder(box, seed, smp));
        const ResolventSolver solver(h, z);
        std::vector<std::vector<cplx>> cols;
        for (std::size_t m: sources) cols.push_back(solver.column(m));
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            values[p][smp] = std::pow(std::abs(cols[idx[p].second][idx[p].first]), s);
        }
    });

    FracMomentReport rep;
    rep.s = s;
    rep.uniform_bound_ok = true;
    std::vector<double> x, y, wts;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        PairMoment pm;
        pm.n = pairs[p].first;
        pm.m = pairs[p].second;
        pm.distance = l1_distance(pm.n, pm.m);
        const auto est = mean_stderr(values[p]);
        pm.moment = est.mean;
        pm.se = est.se;
        if (!std::isfinite(pm.moment)) rep.uniform_bound_ok = false;
        if (pm.distance == 0) {
            pm.diagonal_bound = single_site_moment_constant(s) * std::pow(weight_b(pm.n, params.alpha), -s);
            if (pm.moment > pm.diagonal_bound + 3.0 * pm.se) rep.uniform_bound_ok = false;
        } else if (pm.moment > 0.0) {
            const double rel = std::max(pm.se / pm.moment, 1e-12);
            x.push_back(pm.distance);
            y.push_back(std::log(pm.moment));
            wts.push_back(1.0 / (rel * rel));
        }
        rep.pairs.push_back(pm);
    }

    if (x.size() >= 2) {
        // Weighted least squares for log moment = c - beta * distance.
        double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            sw += wts[i];
            sx += wts[i] * x[i];
            sy += wts[i] * y[i];
            sxx += wts[i] * x[i] * x[i];
            sxy += wts[i] * x[i] * y[i];
        }
        const double det = sw * sxx - sx * sx;
        const double slope = (sw * sxy - sx * sy) / det;
        rep.beta_hat = -slope;
        rep.beta_se = std::sqrt(sw / det);
        rep.log_prefactor = (sy - slope * sx) / sw;
    }
    const double cs = single_site_moment_constant(s);
    rep.decay_threshold =
        std::pow(2.0 * params.d * cs * std::exp(std::max(rep.beta_hat, 0.0)), 1.0 / (params.alpha * s));
    for (auto& pm: rep.pairs) pm.below_decay_threshold = pm.distance <= rep.decay_threshold;
    return rep;
}

}  // namespace speclab
