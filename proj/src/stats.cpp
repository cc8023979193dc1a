#include "speclab/stats.hpp"

#include <cmath>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace speclab {

namespace {
std::atomic<unsigned> g_workers{0};
}

double pairwise_sum(std::span<const double> xs)
{
    if (xs.size() <= 8) {
        double s = 0;
        for (double x: xs) s += x;
        return s;
    }
    const std::size_t half = xs.size() / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

Estimate mean_stderr(std::span<const double> xs)
{
    Estimate e;
    e.n = xs.size();
    if (xs.empty()) return e;
    e.mean = pairwise_sum(xs) / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        std::vector<double> sq(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - e.mean) * (xs[i] - e.mean);
        const double var = pairwise_sum(sq) / static_cast<double>(xs.size() - 1);
        e.se = std::sqrt(var / static_cast<double>(xs.size()));
    }
    return e;
}

double combined_stderr(double a, double b)
{
    return std::hypot(a, b);
}

double poisson_pmf(int k, double lambda)
{
    if (k < 0) return 0.0;
    if (lambda == 0.0) return k == 0 ? 1.0 : 0.0;
    return std::exp(k * std::log(lambda) - lambda - std::lgamma(k + 1.0));
}

double chi_square_survival(double x, double dof)
{
    if (x <= 0) return 1.0;
    return boost::math::gamma_q(dof / 2.0, x / 2.0);
}

double normal_two_sided_quantile(double confidence)
{
    boost::math::normal_distribution<> n;
    return boost::math::quantile(n, 0.5 + confidence / 2.0);
}

void set_worker_count(unsigned workers)
{
    g_workers = workers;
}

unsigned worker_count()
{
    const unsigned w = g_workers.load();
    if (w != 0) return w;
    return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace speclab
