#pragma once

// Small statistics toolkit for the Monte-Carlo diagnostics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <thread>
#include <vector>

#include "errors.hpp"

namespace hierspec::stats {

/// Neumaier-compensated running sum.
class CompensatedSum {
public:
    void add(double v) {
        const double t = sum_ + v;
        comp_ += std::abs(sum_) >= std::abs(v) ? (sum_ - t) + v : (v - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

struct MeanError {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t count = 0;
};

inline MeanError mean_and_error(std::span<const double> xs) {
    MeanError out;
    out.count = xs.size();
    if (xs.empty()) return out;
    CompensatedSum s;
    for (double x : xs) s.add(x);
    out.mean = s.value() / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        CompensatedSum v;
        for (double x : xs) v.add((x - out.mean) * (x - out.mean));
        out.std_error = std::sqrt(v.value() / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
    }
    return out;
}

/// Ordinary least-squares slope of y against x.
inline double ols_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("ols_slope: need at least two paired samples");
    CompensatedSum sx, sy;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx.add(x[i]);
        sy.add(y[i]);
    }
    const double n = static_cast<double>(x.size());
    const double mx = sx.value() / n, my = sy.value() / n;
    CompensatedSum sxy, sxx;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy.add((x[i] - mx) * (y[i] - my));
        sxx.add((x[i] - mx) * (x[i] - mx));
    }
    if (!(sxx.value() > 0.0)) throw InvalidArgument("ols_slope: x has no spread");
    return sxy.value() / sxx.value();
}

inline double median(std::vector<double> xs) {
    if (xs.empty()) throw InvalidArgument("median: empty sample");
    const std::size_t mid = xs.size() / 2;
    std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid), xs.end());
    const double hi = xs[mid];
    if (xs.size() % 2 == 1) return hi;
    const double lo = *std::max_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

/// Empirical quantile with linear interpolation, q in [0, 1].
inline double quantile(std::vector<double> xs, double q) {
    if (xs.empty()) throw InvalidArgument("quantile: empty sample");
    std::sort(xs.begin(), xs.end());
    const double pos = q * static_cast<double>(xs.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    const std::size_t j = std::min(i + 1, xs.size() - 1);
    return xs[i] + (pos - static_cast<double>(i)) * (xs[j] - xs[i]);
}

struct Interval {
    double estimate = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

/// Percentile bootstrap: statistic(indices) is evaluated on resampled index sets.
inline Interval bootstrap(std::size_t n, const std::function<double(std::span<const std::size_t>)>& statistic,
                          int replicates, double confidence, std::uint64_t seed) {
    if (n == 0) throw InvalidArgument("bootstrap: empty sample");
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Interval out;
    out.estimate = statistic(idx);
    std::mt19937_64 gen(seed);
    std::vector<double> stats;
    stats.reserve(static_cast<std::size_t>(replicates));
    for (int b = 0; b < replicates; ++b) {
        for (auto& v : idx) v = static_cast<std::size_t>(gen() % n);
        stats.push_back(statistic(idx));
    }
    const double tail = 0.5 * (1.0 - confidence);
    out.lo = quantile(stats, tail);
    out.hi = quantile(stats, 1.0 - tail);
    return out;
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
inline double ks_distance(std::vector<double> xs, const std::function<double(double)>& cdf) {
    if (xs.empty()) throw InvalidArgument("ks_distance: empty sample");
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = cdf(xs[i]);
        d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
    }
    return d;
}

/// Runs body(i) for i in [0, count) on up to `threads` workers. Work is split
/// by index, so results stored per index do not depend on scheduling.
inline void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    if (threads == 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < count; i += threads) body(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace hierspec::stats
