#pragma once

// Banded LDL^T factorization without pivoting for the lattice Hamiltonians.
//
// Lexicographic site order makes H banded with half-bandwidth equal to the
// stride of the first axis, (2L+1)^{d-1} for a full box. A factorization
// costs O(n k^2) instead of the O(n^3) of dense diagonalization, which is
// what makes Monte Carlo at L ~ 30 in d = 2 affordable:
//
//  * real shift E: Sylvester's law of inertia turns the number of
//    non-positive pivots of H - E into #{eigenvalues <= E};
//  * complex shift z: H - z has a definite imaginary part, so elimination
//    without pivoting is stable and gives resolvent columns;
//  * the trace of the resolvent comes from differentiating log det(H - z + t)
//    at t = 0, carried through the factorization with dual numbers.

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "speclab/lattice_model.hpp"

namespace speclab {

using cplx = std::complex<double>;

// Lower band of a symmetric matrix, column-major: entry (i, j) with
// 0 <= i - j <= k lives at data[j * (k + 1) + (i - j)].
template <class T>
struct BandMatrix {
    std::size_t n = 0;
    std::size_t k = 0;
    std::vector<T> data;

    BandMatrix(std::size_t n_, std::size_t k_): n(n_), k(k_), data(n_ * (k_ + 1), T{}) {}

    T& at(std::size_t i, std::size_t j) { return data[j * (k + 1) + (i - j)]; }
    const T& at(std::size_t i, std::size_t j) const { return data[j * (k + 1) + (i - j)]; }
};

// Number of eigenvalues of h that are <= E.
std::size_t count_below_inertia(const HamiltonianMatrix& h, double E);

// Counts for several energies at once (one factorization each).
std::vector<std::size_t> count_below_inertia(const HamiltonianMatrix& h, std::span<const double> energies);

// Factorization of H - z for Im z != 0 with repeated solves.
class ResolventSolver {
public:
    ResolventSolver(const HamiltonianMatrix& h, cplx z);

    std::size_t size() const { return band_.n; }

    // x = (H - z)^{-1} rhs
    std::vector<cplx> solve(std::span<const cplx> rhs) const;

    // Column m of the resolvent, i.e. G(z; ., m).
    std::vector<cplx> column(std::size_t m) const;

private:
    BandMatrix<cplx> band_;
};

// Tr (H - z)^{-1} for Im z != 0.
cplx trace_resolvent(const HamiltonianMatrix& h, cplx z);

}  // namespace speclab
