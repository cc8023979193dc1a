#include <doctest.h>

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "oracles.hpp"
#include "speclab/stats.hpp"

using namespace speclab;

TEST_CASE("pairwise_sum")
{
    std::vector<double> xs(1001);
    std::iota(xs.begin(), xs.end(), 0.0);
    CHECK(pairwise_sum(xs) == 500500.0);
    CHECK(pairwise_sum(std::vector<double>{}) == 0.0);

    // 1 + many tiny terms: pairwise keeps the small ones
    std::vector<double> t(1 << 20, 1e-16);
    t[0] = 1.0;
    CHECK(std::abs(pairwise_sum(t) - (1.0 + ((1 << 20) - 1) * 1e-16)) < 1e-15);
}

TEST_CASE("mean and standard error")
{
    const std::vector<double> xs{1, 2, 3, 4};
    const auto e = mean_stderr(xs);
    CHECK(e.mean == 2.5);
    CHECK(e.se == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)));
    CHECK(e.n == 4);
    CHECK(mean_stderr(std::vector<double>{7}).se == 0.0);
    CHECK(combined_stderr(3, 4) == 5.0);
}

TEST_CASE("distributions")
{
    CHECK(poisson_pmf(0, 1.0) == doctest::Approx(0.36787944117144233).epsilon(1e-14));
    for (int k = 0; k < 30; ++k) CHECK(poisson_pmf(k, 3.7) == doctest::Approx(oracle::poisson_pmf(k, 3.7)).epsilon(1e-12));
    CHECK(poisson_pmf(-1, 2.0) == 0.0);
    CHECK(chi_square_survival(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-10));
    CHECK(chi_square_survival(4.0, 2) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
    CHECK(chi_square_survival(0.0, 3) == 1.0);
    CHECK(normal_two_sided_quantile(0.95) == doctest::Approx(1.959963984540054).epsilon(1e-12));
}

TEST_CASE("parallel_for is independent of the worker count")
{
    std::vector<double> out1(1000), out4(1000);
    set_worker_count(1);
    parallel_for(out1.size(), [&](std::size_t i) { out1[i] = std::sin(double(i)); });
    set_worker_count(4);
    CHECK(worker_count() == 4);
    parallel_for(out4.size(), [&](std::size_t i) { out4[i] = std::sin(double(i)); });
    CHECK(out1 == out4);
    CHECK(pairwise_sum(out1) == pairwise_sum(out4));

    CHECK_THROWS_AS(parallel_for(100, [](std::size_t i) {
                        if (i == 37) throw std::runtime_error("boom");
                    }),
                    std::runtime_error);
    set_worker_count(0);
    CHECK(worker_count() >= 1);
}
