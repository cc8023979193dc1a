#include <doctest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "speclab/errors.hpp"
#include "speclab/lattice_model.hpp"
#include "speclab/spectral_engine.hpp"

using namespace speclab;

TEST_CASE("params validation")
{
    CHECK_NOTHROW(ModelParams{2, 1.5, 3}.validate());
    CHECK_THROWS_AS(ModelParams({0, 1.5, 3}).validate(), ConfigError);
    CHECK_THROWS_AS(ModelParams({2, 1.0, 3}).validate(), ConfigError);
    CHECK_THROWS_AS(ModelParams({2, 0.5, 3}).validate(), ConfigError);
    CHECK_THROWS_AS(ModelParams({2, 1.5, 0}).validate(), ConfigError);
    CHECK(ModelParams{2, 1.5, 3}.volume() == 49);
    CHECK(ModelParams{2, 1.5, 4}.scale() == doctest::Approx(2.0));
}

TEST_CASE("enumerate_box order and size")
{
    const auto b1 = enumerate_box({1, 2.0, 1});
    REQUIRE(b1.size() == 3);
    CHECK(b1.site(0) == Coord{-1});
    CHECK(b1.site(1) == Coord{0});
    CHECK(b1.site(2) == Coord{1});

    const auto b2 = enumerate_box({2, 1.5, 1});
    REQUIRE(b2.size() == 9);
    CHECK(b2.site(0) == Coord{-1, -1});
    CHECK(b2.site(1) == Coord{-1, 0});
    CHECK(b2.site(8) == Coord{1, 1});

    CHECK(enumerate_box({2, 1.5, 40}).size() == 6561);

    const auto b3 = enumerate_box({3, 2.5, 2});
    const auto ref = oracle::box_sites(3, 2);
    REQUIRE(b3.size() == ref.size());
    for (std::size_t i = 0; i < b3.size(); ++i) {
        CHECK(b3.site(i) == ref[i]);
        CHECK(*b3.index_of(b3.site(i)) == i);
    }
    CHECK_FALSE(b3.index_of(Coord{3, 0, 0}).has_value());
    CHECK_FALSE(b3.index_of(Coord{0, 0}).has_value());
}

TEST_CASE("weight_b")
{
    CHECK(weight_b(Coord{0, 0}, 1.7) == 1.0);
    CHECK(weight_b(Coord{3, 4}, 1.0) == doctest::Approx(6.0));
    CHECK(weight_b(Coord{1, 1}, 2.0) == doctest::Approx(3.0));
    // symmetric under sign flips and permutations, and never below 1
    for (int x = -4; x <= 4; ++x) {
        for (int y = -4; y <= 4; ++y) {
            const double w = weight_b(Coord{x, y}, 1.5);
            CHECK(w >= 1.0);
            CHECK(weight_b(Coord{-x, y}, 1.5) == w);
            CHECK(weight_b(Coord{y, x}, 1.5) == w);
        }
    }
}

TEST_CASE("weight_sum")
{
    CHECK(weight_sum(enumerate_box({1, 2.0, 1}), 2.0) == doctest::Approx(2.0).epsilon(1e-15));

    double ref = 0;
    for (int x = -10; x <= 10; ++x)
        for (int y = -10; y <= 10; ++y) ref += 1.0 / (1.0 + std::pow(std::hypot(x, y), 1.5));
    CHECK(weight_sum(enumerate_box({2, 1.5, 10}), 1.5) == doctest::Approx(ref).epsilon(1e-13));

    // Theta(L^{d - alpha}): the ratio settles between fixed positive bounds
    std::vector<double> r;
    for (int L: {20, 40, 80}) r.push_back(weight_sum(enumerate_box({2, 1.5, L}), 1.5) / std::pow(L, 0.5));
    for (double x: r) {
        CHECK(x > 1.0);
        CHECK(x < 20.0);
    }
    CHECK(*std::max_element(r.begin(), r.end()) / *std::min_element(r.begin(), r.end()) < 1.5);
}

TEST_CASE("disorder sampling")
{
    const LatticeBox box({2, 1.5, 3});
    const auto a = sample_disorder(box, 42, 5);
    const auto b = sample_disorder(box, 42, 5);
    CHECK(a.values == b.values);
    CHECK(a.seed == 42);
    CHECK(a.sample_index == 5);
    const auto c = sample_disorder(box, 42, 6);
    CHECK(a.values != c.values);
    CHECK(sample_disorder(box, 43, 5).values != a.values);
    for (double q: a.values) {
        CHECK(q >= 0.0);
        CHECK(q < 1.0);
    }
    // per-site draws do not depend on how many sites are generated
    CHECK(uniform_draw(42, 5, 7) == a.values[7]);

    double sum = 0;
    for (std::uint64_t s = 0; s < 10000; ++s) sum += uniform_draw(9, s, 3);
    CHECK(sum / 10000 == doctest::Approx(0.5).epsilon(0.04));
}

TEST_CASE("assembly: chain with zero disorder")
{
    const LatticeBox box({1, 2.0, 1});
    DisorderSample q0{{0.0, 0.0, 0.0}, 0, 0};
    const auto h = assemble_hamiltonian(box, 2.0, q0);
    const auto m = h.dense();
    for (int i = 0; i < 3; ++i) CHECK(m(i, i) == 2.0);
    CHECK(m(0, 1) == -1.0);
    CHECK(m(1, 2) == -1.0);
    CHECK(m(0, 2) == 0.0);
    const auto ev = oracle::jacobi_eigenvalues(m);
    CHECK(ev[0] == doctest::Approx(2 - std::sqrt(2.0)).epsilon(1e-12));
    CHECK(ev[1] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(ev[2] == doctest::Approx(2 + std::sqrt(2.0)).epsilon(1e-12));

    DisorderSample q1{{1.0, 1.0, 1.0}, 0, 0};
    const auto h1 = assemble_hamiltonian(box, 2.0, q1);
    CHECK(h1.diag == std::vector<double>{4.0, 3.0, 4.0});
}

TEST_CASE("assembly matches the definition")
{
    for (auto [d, L]: {std::pair{1, 4}, std::pair{2, 3}, std::pair{3, 1}}) {
        const ModelParams p{d, 1.5, L};
        const LatticeBox box(p);
        const auto s = sample_disorder(box, 11, 2);
        const auto h = assemble_hamiltonian(box, p.alpha, s);
        const auto m = h.dense();
        const auto ref = oracle::hamiltonian(d, p.alpha, L, s.values);
        CHECK((m - ref).cwiseAbs().maxCoeff() == 0.0);
        CHECK((m - m.transpose()).cwiseAbs().maxCoeff() == 0.0);

        // nearest-neighbour pairs: d (2L+1)^{d-1} 2L
        const std::size_t side = 2 * L + 1;
        std::size_t pairs = d * 2 * L;
        for (int i = 1; i < d; ++i) pairs *= side;
        CHECK(h.bonds.size() == pairs);
        CHECK(bond_count(box.cuboid()) == pairs);

        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            int off = 0;
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                if (i != j && m(i, j) != 0.0) {
                    CHECK(m(i, j) == -1.0);
                    ++off;
                }
            }
            CHECK(off <= 2 * d);
            CHECK(m(i, i) >= 2.0 * d);
            CHECK(m(i, i) <= 2.0 * d + weight_b(box.site(i), p.alpha));
        }
    }
}

TEST_CASE("free Laplacian spectrum lies in [0, 4d]")
{
    for (int d: {1, 2, 3}) {
        const LatticeBox box({d, 1.5, 2});
        DisorderSample zero{std::vector<double>(box.size(), 0.0), 0, 0};
        const auto ev = eigenvalues(assemble_hamiltonian(box, 1.5, zero)).eigenvalues;
        CHECK(ev.front() >= -1e-12);
        CHECK(ev.back() <= 4.0 * d + 1e-12);
    }
}

TEST_CASE("assembly errors and restriction")
{
    const LatticeBox box({2, 1.5, 2});
    DisorderSample bad{{0.1, 0.2}, 0, 0};
    CHECK_THROWS_AS(assemble_hamiltonian(box, 1.5, bad), ConfigError);

    const auto w = site_weights(box, 1.5);
    const auto s = sample_disorder(box, 1, 0);
    CHECK_THROWS_AS(assemble_restricted(box, Cuboid({-2, -2}, {3, 0}), w, s), ConfigError);

    const Cuboid sub({0, -1}, {2, 1});
    const auto h = assemble_restricted(box, sub, w, s);
    REQUIRE(h.size() == 9);
    CHECK(h.bonds.size() == bond_count(sub));
    CHECK(bond_count(sub) == 12);
    const auto full = assemble_hamiltonian(box, 1.5, s).dense();
    const auto m = h.dense();
    for (std::size_t i = 0; i < 9; ++i) {
        for (std::size_t j = 0; j < 9; ++j) {
            CHECK(m(i, j) == full(h.global_index[i], h.global_index[j]));
        }
    }
}
