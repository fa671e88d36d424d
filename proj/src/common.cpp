#include "barrier_lab/common.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace barrier_lab {

Vector fd_gradient(const ScalarField& f, const Vector& x, double rel_step) {
    Vector grad(x.size());
    Vector probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double step = rel_step * (1.0 + std::abs(x(i)));
        probe(i) = x(i) + step;
        const double up = f(probe);
        probe(i) = x(i) - step;
        const double down = f(probe);
        probe(i) = x(i);
        grad(i) = (up - down) / (2.0 * step);
    }
    return grad;
}

Matrix fd_matrix(const VectorField& f, const Vector& x, double rel_step) {
    Matrix jac;
    Vector probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double step = rel_step * (1.0 + std::abs(x(i)));
        probe(i) = x(i) + step;
        const Vector up = f(probe);
        probe(i) = x(i) - step;
        const Vector down = f(probe);
        probe(i) = x(i);
        if (i == 0) {
            jac.resize(up.size(), x.size());
        }
        jac.col(i) = (up - down) / (2.0 * step);
    }
    return jac;
}

std::size_t worker_count() {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("BARRIER_LAB_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1) {
            n = std::min<std::size_t>(n, static_cast<std::size_t>(cap));
        }
    }
    return n;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
    const std::size_t workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            body(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto run = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back(run);
    }
    pool.clear();
    if (failure) {
        std::rethrow_exception(failure);
    }
}

}  // namespace barrier_lab
