#include <doctest.h>

#include <Eigen/Dense>

#include "oracles.hpp"
#include "speclab/banded.hpp"
#include "speclab/errors.hpp"
#include "speclab/spectral_engine.hpp"

using namespace speclab;

namespace {

Eigen::MatrixXcd dense_resolvent(const HamiltonianMatrix& h, cplx z)
{
    const auto n = static_cast<Eigen::Index>(h.size());
    Eigen::MatrixXcd a = h.dense().cast<cplx>() - z * Eigen::MatrixXcd::Identity(n, n);
    return a.inverse();
}

}  // namespace

TEST_CASE("inertia counts agree with an independent eigensolver")
{
    for (auto [d, L]: {std::pair{1, 5}, std::pair{2, 3}, std::pair{3, 1}}) {
        const LatticeBox box({d, 1.5, L});
        for (std::uint64_t s = 0; s < 4; ++s) {
            const auto h = assemble_hamiltonian(box, 1.5, sample_disorder(box, 77, s));
            const auto ev = oracle::jacobi_eigenvalues(h.dense());
            std::vector<double> energies;
            for (double E = -1.0; E < ev.back() + 1.0; E += 0.37) energies.push_back(E);
            const auto counts = count_below_inertia(h, energies);
            for (std::size_t i = 0; i < energies.size(); ++i) {
                const auto ref = static_cast<std::size_t>(
                    std::upper_bound(ev.begin(), ev.end(), energies[i]) - ev.begin());
                CHECK(counts[i] == ref);
                CHECK(count_below_inertia(h, energies[i]) == ref);
            }
        }
    }
}

TEST_CASE("inertia count at an exact eigenvalue includes it")
{
    const LatticeBox box({1, 2.0, 1});
    DisorderSample zero{{0.0, 0.0, 0.0}, 0, 0};
    const auto h = assemble_hamiltonian(box, 2.0, zero);
    CHECK(count_below_inertia(h, 2.0) == 2);
    CHECK(count_below_inertia(h, 1.0) == 1);
}

TEST_CASE("banded resolvent solves and traces")
{
    const LatticeBox box({2, 1.5, 3});
    const auto h = assemble_hamiltonian(box, 1.5, sample_disorder(box, 5, 1));
    for (cplx z: {cplx(3.0, 0.5), cplx(12.0, -0.01), cplx(-2.0, 4.0)}) {
        const auto ref = dense_resolvent(h, z);
        const ResolventSolver solver(h, z);
        for (std::size_t m: {0u, 10u, 24u, 48u}) {
            const auto col = solver.column(m);
            for (std::size_t i = 0; i < h.size(); ++i) {
                CHECK(std::abs(col[i] - ref(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m))) < 1e-10);
            }
        }
        CHECK(std::abs(trace_resolvent(h, z) - ref.trace()) < 1e-9 * std::abs(ref.trace()) + 1e-12);
    }
    CHECK_THROWS_AS(ResolventSolver(h, cplx(3.0, 0.0)), ConfigError);
    CHECK_THROWS_AS(trace_resolvent(h, cplx(3.0, 0.0)), ConfigError);
}
