// Property-based acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.

#include <algorithm>
#include <cstdarg>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "oracles.hpp"
#include "speclab/cli_harness.hpp"
#include "speclab/green_toolkit.hpp"
#include "speclab/lattice_model.hpp"
#include "speclab/point_process.hpp"
#include "speclab/spectral_engine.hpp"
#include "speclab/stats.hpp"

using namespace speclab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...)
{
    char buf[1024];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

fs::path workdir()
{
    const char* base = std::getenv("SPECLAB_TEST_TMP");
    fs::path p = fs::path(base ? base : fs::temp_directory_path().string()) / "acceptance";
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// ---------------------------------------------------------------- 1

Outcome closed_form_vs_quadrature()
{
    std::mt19937_64 rng(20240601);
    std::uniform_real_distribution<double> ua(1.0, 100.0), u01(0.0, 1.0);
    std::uniform_int_distribution<int> ul(1, 5);
    double worst = 0.0;
    int below = 0;
    for (int i = 0; i < 100; ++i) {
        const double a = ua(rng);
        const int l = ul(rng);
        cplx z;
        // keep z away from the segment [0, a] and the two downward rays
        for (;;) {
            z = {-0.5 * a + 2.0 * a * u01(rng), -0.5 * a + a * u01(rng)};
            const double dx = std::clamp(z.real(), 0.0, a);
            const bool near_segment = std::abs(z - cplx(dx, 0.0)) < 0.05 * a;
            const bool near_ray = z.imag() < 0 && (std::abs(z.real()) < 0.05 * a || std::abs(z.real() - a) < 0.05 * a);
            if (!near_segment && !near_ray) break;
        }
        cplx ref = oracle::integrate([&](double x) { return std::pow(a * x - z, -l); }, 0.0, 1.0, 1e-12);
        // below the segment the continuation of B_1 from the upper half
        // plane picks up the residue of the crossed pole
        if (l == 1 && z.imag() < 0 && z.real() > 0 && z.real() < a) {
            ref += cplx(0.0, 2.0 * M_PI / a);
            ++below;
        }
        worst = std::max(worst, std::abs(b_ell(a, z, l) - ref));
    }
    return {worst <= 1e-9, fmt("max |closed form - quadrature| = %.3g over 100 cases (%d continued below the cut)",
                               worst, below)};
}

// ---------------------------------------------------------------- 2

Outcome sandwich()
{
    const ModelParams p{2, 1.5, 6};
    const LatticeBox box(p);
    std::vector<double> energies;
    for (int i = 0; i < 20; ++i) energies.push_back(1.0 + 2.5 * i);
    std::vector<std::size_t> violations(500, 0);
    parallel_for(violations.size(), [&](std::size_t s) {
        const auto rows = sandwich_counts(box, p.alpha, sample_disorder(box, 101, s), energies);
        for (const auto& r: rows) violations[s] += (r.lower > r.count || r.count > r.upper);
    });
    std::size_t total = 0;
    for (auto v: violations) total += v;
    return {total == 0, fmt("%zu violations in 500 samples x 20 energies", total)};
}

// ---------------------------------------------------------------- 3

Outcome diagonal_expectation()
{
    int ok = 0, n = 0;
    double worst = 0.0;
    for (int L: {4, 8}) {
        const ModelParams p{2, 1.5, L};
        const LatticeBox box(p);
        const auto w = site_weights(box, p.alpha);
        for (double E: {9.0, 10.0, 12.0, 15.0, 20.0}) {
            std::vector<double> c(2000);
            parallel_for(c.size(), [&](std::size_t s) {
                c[s] = static_cast<double>(diagonal_count(w, sample_disorder(box, 202 + L, s), E, 4.0 * p.d));
            });
            const auto e = mean_stderr(c);
            const double z = std::abs(e.mean - expected_count_diag(box, p.alpha, E, 4.0 * p.d)) / e.se;
            worst = std::max(worst, z);
            ok += z <= 3.0;
            ++n;
        }
    }
    return {ok == n, fmt("%d/%d (L, E) pairs within 3 sigma, largest deviation %.2f sigma", ok, n, worst)};
}

// ---------------------------------------------------------------- 4

Outcome wegner_minami()
{
    const ModelParams p{2, 1.5, 8};
    const std::vector<Interval> intervals{{8.5, 9.0}, {9.0, 9.5}, {10.0, 10.5}, {12.0, 12.5}, {15.0, 16.0}};
    int ok = 0;
    std::string d;
    for (std::size_t i = 0; i < intervals.size(); ++i) {
        const auto [w, m] = check_wegner_minami(p, intervals[i], 2000, 303 + i);
        ok += w.satisfied && m.satisfied;
        d += fmt(" [%g,%g]: %.3f<=%.3f, %.3f<=%.3f;", intervals[i].lo, intervals[i].hi, w.empirical, w.bound,
                 m.empirical, m.bound);
    }
    return {ok == 5, fmt("%d/5 intervals satisfy both bounds;", ok) + d};
}

// ---------------------------------------------------------------- 5

Outcome spectral_averaging()
{
    const ModelParams p{2, 1.5, 6};
    const std::vector<Coord> sites{{0, 0}, {3, 0}, {5, 5}};
    const auto reps = check_spectral_averaging(p, sites, {8.0, 10.0}, 2000, 404);
    bool all = true;
    std::string d;
    for (std::size_t i = 0; i < reps.size(); ++i) {
        all = all && reps[i].satisfied;
        d += fmt(" n=(%d,%d): %.4f <= %.4f;", sites[i][0], sites[i][1], reps[i].empirical, reps[i].bound);
    }
    return {all, "I=[8,10]" + d};
}

// ---------------------------------------------------------------- 6

Outcome walk_vs_mc()
{
    const ModelParams p{1, 2.0, 2};
    const LatticeBox box(p);
    const cplx z{2.0, 10.0};
    const Coord origin{0};
    const auto walk = walk_expansion_diag(box, p.alpha, z, origin, 8);
    const std::size_t k0 = *box.index_of(origin);
    const std::size_t n = 100000;
    std::vector<double> re(n), im(n);
    parallel_for(n, [&](std::size_t s) {
        const auto g = resolvent_entry(assemble_hamiltonian(box, p.alpha, sample_disorder(box, 505, s)), z, k0, k0);
        re[s] = g.real();
        im[s] = g.imag();
    });
    const auto er = mean_stderr(re), ei = mean_stderr(im);
    const double diff = std::abs(walk.value - cplx(er.mean, ei.mean));
    const double tol = walk.tail_bound + 3.0 * std::hypot(er.se, ei.se);
    return {diff <= tol, fmt("|series - MC| = %.3g, tail bound %.3g + 3 se %.3g (%s regime, %llu walks)", diff,
                             walk.tail_bound, 3.0 * std::hypot(er.se, ei.se), walk.regime.c_str(),
                             static_cast<unsigned long long>(walk.paths_enumerated))};
}

// ---------------------------------------------------------------- 7

Outcome appendix()
{
    const std::vector<int> Ls{10, 20, 40, 80};
    const auto r = appendix_limit_check(2, 1.5, Ls, {9.0, 2.0});
    std::string d;
    for (const auto& row: r.rows) d += fmt(" L=%d: %.4g;", row.L, row.error);
    return {r.decreasing && r.slope_ok,
            fmt("errors%s slope %.3f vs target %.3f, decreasing=%s", d.c_str(), r.slope, r.slope_target,
                r.decreasing ? "yes" : "no")};
}

// ---------------------------------------------------------------- 8

Outcome fractional_moments()
{
    const ModelParams p{2, 1.5, 10};
    std::vector<std::pair<Coord, Coord>> pairs;
    for (int r = 1; r <= 8; ++r) pairs.push_back({{0, 0}, {r, 0}});
    for (const Coord& c: std::vector<Coord>{{0, 0}, {2, 0}, {3, 3}, {6, 2}}) pairs.push_back({c, c});
    const auto rep = frac_moment(p, {12.0, 0.5}, 0.5, pairs, 1000, 606);
    bool diag_ok = true;
    for (const auto& pm: rep.pairs) {
        if (pm.n == pm.m) diag_ok = diag_ok && pm.moment <= pm.diagonal_bound + 3.0 * pm.se;
    }
    const double lower = rep.beta_hat - normal_two_sided_quantile(0.95) * rep.beta_se;
    return {lower > 0.0 && diag_ok && rep.uniform_bound_ok,
            fmt("beta_hat %.4f +- %.4f (95%% lower %.4f), diagonal bounds %s", rep.beta_hat, rep.beta_se, lower,
                diag_ok ? "hold" : "violated")};
}

// ---------------------------------------------------------------- 9, 10, 11

CountDistribution counts_of(const std::vector<PointConfiguration>& configs, const BorelSet& B)
{
    std::vector<int> c;
    for (const auto& cfg: configs) c.push_back(static_cast<int>(count_in(cfg, B)));
    return make_count_distribution(std::move(c));
}

Outcome gof_calibration()
{
    const BorelSet B({{0.0, 1.0}});
    const auto pois = counts_of(synthetic_poisson(1.0, -5.0, 5.0, 10000, 707), B);
    const auto clock = counts_of(synthetic_clock(1.0, -5.0, 5.0, 10000, 708), B);
    const auto gp = poisson_gof(pois, pois.mean, 1);
    const auto gc = poisson_gof(clock, clock.mean, 1);
    return {gp.tv_distance < 0.03 && gc.tv_distance > 0.15,
            fmt("synthetic Poisson TV %.4f (p %.3g), clock TV %.4f (p %.3g)", gp.tv_distance, gp.p_value,
                gc.tv_distance, gc.p_value)};
}

const std::vector<int> kPoissonLs{12, 20, 30};
constexpr std::uint64_t kPoissonSeed = 909;

std::string poisson_config(int L)
{
    return fmt(R"({"experiment": "poisson", "model": {"d": 2, "alpha": 1.5, "L": %d}, "E": 12, "B": [[0, 1]],
                  "n_samples": 2000, "seed": %llu})",
               L, static_cast<unsigned long long>(kPoissonSeed));
}

fs::path poisson_dir(int L, unsigned workers)
{
    return workdir() / fmt("poisson_L%d_w%u", L, workers);
}

Outcome poisson_tv()
{
    std::vector<double> tv;
    std::string d;
    for (int L: kPoissonLs) {
        const auto dir = poisson_dir(L, 1);
        fs::remove_all(dir);
        run(parse_config(poisson_config(L)), {dir.string(), 1u, std::nullopt});
        const auto g = json::parse(slurp(dir / "poisson_gof.json"));
        tv.push_back(g["plug_in"]["tv_distance"].get<double>());
        d += fmt(" L=%d: TV %.4f (lambda %.3f, p %.3g);", L, tv.back(), g["plug_in"]["lambda"].get<double>(),
                 g["plug_in"]["p_value"].get<double>());
    }
    bool nonincreasing = true;
    for (std::size_t i = 1; i < tv.size(); ++i) nonincreasing = nonincreasing && tv[i] <= tv[i - 1];
    return {nonincreasing && tv.back() < 0.08,
            fmt("nonincreasing=%s, final TV %s 0.08;", nonincreasing ? "yes" : "no", tv.back() < 0.08 ? "<" : ">=") + d};
}

Outcome poisson_intensity()
{
    const int L = kPoissonLs.back();
    const auto g = json::parse(slurp(poisson_dir(L, 1) / "poisson_gof.json"));
    const double mean = g["mean_count"].get<double>(), mean_se = g["mean_count_stderr"].get<double>();
    const ModelParams p{2, 1.5, L};
    const auto dens = estimate_N1_prime(p, 12.0, 2000, kPoissonSeed + 1000003);
    const double sigma = combined_stderr(mean_se, dens.se);
    const double gap = std::abs(mean - dens.value);
    return {gap <= 3.0 * sigma, fmt("L=%d: mean count %.4f +- %.4f vs N1'(E)|B| %.4f +- %.4f (window %g), %.2f sigma",
                                    L, mean, mean_se, dens.value, dens.se, dens.half_width, gap / sigma)};
}

Outcome superposition()
{
    std::vector<double> dist;
    std::string d;
    for (int L: kPoissonLs) {
        const ModelParams p{2, 1.5, L};
        const int M = block_decompose(LatticeBox(p), 0.4, 8.0).per_axis;
        const auto e = superposition_distance(p, 12.0, 2000, 1010);
        dist.push_back(e.mean);
        d += fmt(" L=%d (M=%d): %.4f +- %.4f;", L, M, e.mean, e.se);
    }
    bool decreasing = true;
    for (std::size_t i = 1; i < dist.size(); ++i) decreasing = decreasing && dist[i] < dist[i - 1];
    return {decreasing, fmt("decreasing=%s;", decreasing ? "yes" : "no") + d};
}

Outcome determinism()
{
    int identical = 0, files = 0;
    for (int L: kPoissonLs) {
        const auto dir = poisson_dir(L, 4);
        fs::remove_all(dir);
        run(parse_config(poisson_config(L)), {dir.string(), 4u, std::nullopt});
        for (const char* f: {"poisson_counts.csv", "poisson_gof.json"}) {
            ++files;
            const auto a = slurp(poisson_dir(L, 1) / f), b = slurp(dir / f);
            identical += !a.empty() && a == b;
        }
    }
    return {identical == files, fmt("%d/%d artifacts byte-identical between 1 and 4 workers", identical, files)};
}

}  // namespace

int main()
{
    struct Criterion {
        int id;
        const char* label;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "closed-form single-site integrals", closed_form_vs_quadrature},
        {2, "eigenvalue count sandwich", sandwich},
        {3, "diagonal-model expectation", diagonal_expectation},
        {4, "Wegner and Minami bounds", wegner_minami},
        {5, "spectral averaging", spectral_averaging},
        {6, "walk expansion vs Monte Carlo", walk_vs_mc},
        {7, "large-L limit of Im phi_L", appendix},
        {8, "fractional-moment decay", fractional_moments},
        {9, "Poisson statistics", nullptr},
        {10, "superposition distance", superposition},
        {11, "determinism across worker counts", determinism},
    };

    int failures = 0;
    const auto t_all = std::chrono::steady_clock::now();
    for (const auto& c: criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            if (c.id == 9) {
                const Outcome a = gof_calibration(), b = poisson_tv(), cc = poisson_intensity();
                o.pass = a.pass && b.pass && cc.pass;
                o.detail = std::string("(a) ") + (a.pass ? "ok " : "FAILED ") + a.detail + " | (b) " +
                           (b.pass ? "ok " : "FAILED ") + b.detail + " | (c) " + (cc.pass ? "ok " : "FAILED ") +
                           cc.detail;
            } else {
                o = c.run();
            }
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failures += !o.pass;
        std::printf("criterion %2d %s: %s [%.1f s] %s\n", c.id, o.pass ? "PASS" : "FAIL", c.label, secs,
                    o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed in %.1f s\n", static_cast<int>(criteria.size()) - failures, criteria.size(),
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t_all).count());
    return failures == 0 ? 0 : 1;
}
