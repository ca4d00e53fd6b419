#pragma once

// Dyson lattice X = {0, 1, 2, ...} with its p-adic interval partitions.
//
// A ball of rank r is the interval [k p^r, (k+1) p^r). Balls of equal rank
// partition X, and every ball of rank r is the disjoint union of p balls of
// rank r-1. The ultrametric distance between two points is the number of
// points in the smallest ball holding both; singletons carry counting
// measure 1.

#include <compare>
#include <cstdint>
#include <limits>
#include <vector>

#include "errors.hpp"

namespace hierspec {

using Index = std::uint64_t;
using Rank = int;

struct Point {
    Index value = 0;
    constexpr auto operator<=>(const Point&) const = default;
};

struct BallAddress {
    Rank rank = 0;
    Index index = 0;
    constexpr auto operator<=>(const BallAddress&) const = default;
};

/// Exact p^r; throws if the result does not fit in Index.
inline Index ipow(Index p, Rank r) {
    if (r < 0) throw InvalidArgument("ipow: negative exponent");
    Index out = 1;
    for (Rank i = 0; i < r; ++i) {
        if (out > std::numeric_limits<Index>::max() / p)
            throw InvalidArgument("ipow: p^r overflows the index range");
        out *= p;
    }
    return out;
}

/// Branching factor of the lattice. Every finite computation receives an
/// explicit depth elsewhere; the lattice itself is infinite.
class Lattice {
public:
    explicit Lattice(Index p) : p_(p) {
        if (p < 2) throw InvalidArgument("Lattice: branching factor p must be >= 2");
    }

    Index p() const noexcept { return p_; }

    BallAddress ball_of(Point x, Rank r) const {
        if (r < 0) throw InvalidArgument("ball_of: rank must be >= 0");
        Index k = x.value;
        for (Rank i = 0; i < r && k != 0; ++i) k /= p_;
        return {r, k};
    }

    BallAddress parent(BallAddress b) const { return {b.rank + 1, b.index / p_}; }

    /// Which of the p children of its parent the ball is.
    Index sibling_index(BallAddress b) const { return b.index % p_; }

    bool contains(BallAddress b, Point x) const { return ball_of(x, b.rank).index == b.index; }

    BallAddress common_ball(Point x, Point y) const {
        Index a = x.value, b = y.value;
        Rank r = 0;
        while (a != b) {
            a /= p_;
            b /= p_;
            ++r;
        }
        return {r, a};
    }

    /// Number of points in the ball (1 for singletons).
    Index measure(BallAddress b) const { return ipow(p_, b.rank); }

    /// 0 for x == y, otherwise p^(rank of the common ball).
    Index distance(Point x, Point y) const {
        if (x == y) return 0;
        return measure(common_ball(x, y));
    }

    std::vector<BallAddress> geodesic_to_root(Point x, Rank max_rank) const {
        if (max_rank < 0) throw InvalidArgument("geodesic_to_root: max_rank must be >= 0");
        std::vector<BallAddress> path;
        path.reserve(static_cast<std::size_t>(max_rank) + 1);
        Index k = x.value;
        for (Rank r = 0; r <= max_rank; ++r) {
            path.push_back({r, k});
            k /= p_;
        }
        return path;
    }

private:
    Index p_;
};

} // namespace hierspec
