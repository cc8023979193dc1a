#pragma once

// Monte Carlo plumbing: a sample-parallel loop whose results do not depend
// on the worker count, and reductions with a fixed summation order.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

namespace speclab {

// Mean with its standard error (sample standard deviation / sqrt(n)).
struct Estimate {
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};

// Recursive pairwise summation; the tree depends only on the length.
double pairwise_sum(std::span<const double> xs);

Estimate mean_stderr(std::span<const double> xs);

// sqrt(a^2 + b^2) for independent errors.
double combined_stderr(double a, double b);

double poisson_pmf(int k, double lambda);

// Upper tail P(X > x) for X ~ chi-square(dof).
double chi_square_survival(double x, double dof);

// Two-sided standard normal quantile, e.g. 1.959964 for 0.95.
double normal_two_sided_quantile(double confidence);

void set_worker_count(unsigned workers);   // 0 = hardware concurrency
unsigned worker_count();

// Calls body(i) for i in [0, n). Each index is processed exactly once;
// callers write results into slot i so reductions never see the schedule.
template <class Body>
void parallel_for(std::size_t n, Body&& body)
{
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(worker_count(), n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    next = n;
                }
            }
        });
    }
    for (auto& t: pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace speclab
