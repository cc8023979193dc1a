#include "speclab/banded.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "speclab/errors.hpp"

namespace speclab {

namespace {

// Forward-mode dual number: value and derivative along one direction.
struct Dual {
    cplx v;
    cplx dv;
};

inline Dual operator-(const Dual& a, const Dual& b) { return {a.v - b.v, a.dv - b.dv}; }
inline Dual operator*(const Dual& a, const Dual& b) { return {a.v * b.v, a.dv * b.v + a.v * b.dv}; }
inline Dual operator/(const Dual& a, const Dual& b)
{
    const cplx q = a.v / b.v;
    return {q, (a.dv - q * b.dv) / b.v};
}
inline Dual& operator-=(Dual& a, const Dual& b) { return a = a - b; }

template <class T>
BandMatrix<T> band_of(const HamiltonianMatrix& h, T diag_shift)
{
    BandMatrix<T> a(h.size(), std::max<std::size_t>(h.half_bandwidth(), 1));
    for (std::size_t i = 0; i < h.size(); ++i) a.at(i, i) = T(h.diag[i]) - diag_shift;
    for (const auto& b: h.bonds) a.at(b.j, b.i) = T(-1.0);
    return a;
}

// Pivots that vanish exactly are nudged off zero; `fix` decides how.
template <class T, class FixPivot>
void ldlt_in_place(BandMatrix<T>& a, FixPivot fix)
{
    const std::size_t n = a.n, k = a.k;
    std::vector<T> l(k + 1);
    for (std::size_t j = 0; j < n; ++j) {
        T& pivot = a.at(j, j);
        fix(pivot);
        const std::size_t last = std::min(n - 1, j + k);
        const std::size_t m = last - j;
        T* col = &a.at(j, j);
        for (std::size_t r = 1; r <= m; ++r) l[r] = col[r] / pivot;
        for (std::size_t c = 1; c <= m; ++c) {
            const T acj = col[c];
            T* target = &a.at(j + c, j + c);
            for (std::size_t r = c; r <= m; ++r) target[r - c] -= l[r] * acj;
        }
        for (std::size_t r = 1; r <= m; ++r) col[r] = l[r];
    }
}

}  // namespace

std::size_t count_below_inertia(const HamiltonianMatrix& h, double E)
{
    if (h.size() == 0) return 0;
    auto a = band_of<double>(h, E);
    double scale = 1.0;
    for (double x: h.diag) scale = std::max(scale, std::abs(x - E));
    const double tiny = std::numeric_limits<double>::epsilon() * std::numeric_limits<double>::epsilon() * scale;
    std::size_t count = 0;
    ldlt_in_place(a, [&](double& p) {
        // A zero pivot means an eigenvalue at E; count it as <= E.
        if (std::abs(p) < tiny) p = -tiny;
        if (p < 0) ++count;
    });
    return count;
}

std::vector<std::size_t> count_below_inertia(const HamiltonianMatrix& h, std::span<const double> energies)
{
    std::vector<std::size_t> out;
    out.reserve(energies.size());
    for (double E: energies) out.push_back(count_below_inertia(h, E));
    return out;
}

ResolventSolver::ResolventSolver(const HamiltonianMatrix& h, cplx z): band_(band_of<cplx>(h, z))
{
    if (z.imag() == 0.0) throw ConfigError("resolvent requires Im z != 0");
    ldlt_in_place(band_, [&](cplx& p) {
        if (p == cplx(0.0)) throw NumericalError("zero pivot in complex LDL^T of H - z");
    });
}

std::vector<cplx> ResolventSolver::solve(std::span<const cplx> rhs) const
{
    const std::size_t n = band_.n, k = band_.k;
    if (rhs.size() != n) throw ConfigError("right-hand side has wrong length");
    std::vector<cplx> x(rhs.begin(), rhs.end());
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t last = std::min(n - 1, j + k);
        const cplx* col = &band_.at(j, j);
        for (std::size_t i = j + 1; i <= last; ++i) x[i] -= col[i - j] * x[j];
    }
    for (std::size_t j = 0; j < n; ++j) x[j] /= band_.at(j, j);
    for (std::size_t j = n; j-- > 0;) {
        const std::size_t last = std::min(n - 1, j + k);
        const cplx* col = &band_.at(j, j);
        cplx s = x[j];
        for (std::size_t i = j + 1; i <= last; ++i) s -= col[i - j] * x[i];
        x[j] = s;
    }
    return x;
}

std::vector<cplx> ResolventSolver::column(std::size_t m) const
{
    std::vector<cplx> e(band_.n, cplx(0.0));
    e.at(m) = 1.0;
    return solve(e);
}

cplx trace_resolvent(const HamiltonianMatrix& h, cplx z)
{
    if (z.imag() == 0.0) throw ConfigError("resolvent trace requires Im z != 0");
    if (h.size() == 0) return 0.0;
    // d/dt log det(H - z + t) at t = 0 equals Tr (H - z)^{-1}.
    BandMatrix<Dual> a(h.size(), std::max<std::size_t>(h.half_bandwidth(), 1));
    for (std::size_t i = 0; i < h.size(); ++i) a.at(i, i) = {h.diag[i] - z, 1.0};
    for (const auto& b: h.bonds) a.at(b.j, b.i) = {-1.0, 0.0};
    cplx trace = 0.0;
    ldlt_in_place(a, [&](Dual& p) {
        if (p.v == cplx(0.0)) throw NumericalError("zero pivot in complex LDL^T of H - z");
        trace += p.dv / p.v;
    });
    return trace;
}

}  // namespace speclab
