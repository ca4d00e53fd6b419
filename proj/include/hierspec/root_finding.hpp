#pragma once

// Bracketing root finders used for secular equations.
//
// Both work on brackets that may straddle many decades near zero (bound states
// just below the bottom of the spectrum): when the two ends share a sign and
// differ by more than a factor of four, the split point is their geometric
// mean, otherwise the midpoint.

#include <cmath>
#include <functional>
#include <vector>

#include "errors.hpp"

namespace hierspec {

struct Bracket {
    double lo = 0.0;
    double hi = 0.0;
    double mid() const { return 0.5 * (lo + hi); }
    double width() const { return hi - lo; }
};

namespace detail {

inline double split_point(double lo, double hi) {
    if (lo < 0.0 && hi < 0.0 && lo / hi > 4.0) return -std::sqrt(lo * hi);
    if (lo > 0.0 && hi > 0.0 && hi / lo > 4.0) return std::sqrt(lo * hi);
    return 0.5 * (lo + hi);
}

inline bool converged(double lo, double hi, double rel_tol) {
    const double scale = std::max(std::abs(lo), std::abs(hi));
    const double mid = lo + 0.5 * (hi - lo);
    return hi - lo <= rel_tol * scale || mid <= lo || mid >= hi;
}

} // namespace detail

/// Root of an increasing function g on (lo, hi) with g(lo) < 0 < g(hi).
/// Returns the final bracket; its width is at most rel_tol times its magnitude.
inline Bracket bisect_increasing(const std::function<double(double)>& g, double lo, double hi,
                                 double rel_tol, int max_iter = 4000) {
    if (!(lo < hi)) throw InvalidArgument("bisect_increasing: empty bracket");
    for (int it = 0; it < max_iter; ++it) {
        if (detail::converged(lo, hi, rel_tol)) return {lo, hi};
        const double m = detail::split_point(lo, hi);
        const double v = g(m);
        if (std::isnan(v)) throw ToleranceNotMet("bisect_increasing: function returned NaN");
        if (v < 0.0)
            lo = m;
        else
            hi = m;
    }
    throw ToleranceNotMet("bisect_increasing: iteration limit reached before tolerance");
}

/// A cluster of eigenvalues isolated by counting.
struct CountedRoot {
    Bracket bracket;
    int multiplicity = 1;
};

/// Locates every jump of a non-decreasing integer-valued counting function on
/// (lo, hi], given count(lo) and count(hi). Each jump is narrowed to rel_tol;
/// a jump of size > 1 that survives to that width is returned as one cluster.
inline std::vector<CountedRoot> isolate_by_count(const std::function<int(double)>& count, double lo,
                                                 int count_lo, double hi, int count_hi, double rel_tol) {
    std::vector<CountedRoot> roots;
    if (count_hi < count_lo) throw ToleranceNotMet("isolate_by_count: counting function is not monotone");
    struct Frame {
        double lo, hi;
        int clo, chi;
    };
    std::vector<Frame> stack{{lo, hi, count_lo, count_hi}};
    int guard = 0;
    while (!stack.empty()) {
        if (++guard > 1000000) throw ToleranceNotMet("isolate_by_count: iteration limit reached");
        Frame f = stack.back();
        stack.pop_back();
        if (f.chi == f.clo) continue;
        if (detail::converged(f.lo, f.hi, rel_tol)) {
            roots.push_back({{f.lo, f.hi}, f.chi - f.clo});
            continue;
        }
        const double m = detail::split_point(f.lo, f.hi);
        const int cm = count(m);
        if (cm < f.clo || cm > f.chi) throw ToleranceNotMet("isolate_by_count: counting function is not monotone");
        // push upper half first so roots come out in increasing order
        stack.push_back({m, f.hi, cm, f.chi});
        stack.push_back({f.lo, m, f.clo, cm});
    }
    return roots;
}

} // namespace hierspec
