#pragma once

// Resolvent kernels R(lambda, x, y) = (L - lambda)^{-1} delta_y (x).
//
// Expanding delta_y along its geodesic {y} = B_0 in B_1 in ... gives
//
//   R(lambda, y, y) = sum_{k>=1} A_k / (lambda_k - lambda),  A_k = (p-1) p^{-k}
//   R(lambda, x, y) = -p^{-m} / (lambda_m - lambda) + sum_{k>m} A_k / (lambda_k - lambda)
//
// where m is the rank of the smallest ball holding x and y. Two kernels share
// this interface: LatticeResolvent sums the infinite series with a certified
// remainder, TruncatedResolvent is the exact finite expansion for the depth-n
// block (eigenvalues shifted by lambda_{n+1}, plus the constant mode p^{-n}/(0 - lambda)).

#include <bit>
#include <cmath>
#include <complex>
#include <concepts>
#include <cstdint>
#include <limits>
#include <memory>
#include <mutex>
#include <unordered_map>

#include "errors.hpp"
#include "hierarchy.hpp"
#include "laplacian.hpp"

namespace hierspec {

using cplx = std::complex<double>;

struct ResolventValue {
    cplx value{};
    /// Certified bound on the neglected remainder of the series.
    double tail_bound = 0.0;
    /// Distance from lambda to the nearest pole that was resolved explicitly.
    double pole_distance = std::numeric_limits<double>::infinity();
    int terms = 0;
};

/// Anything that evaluates a symmetric resolvent kernel and exposes its poles.
/// pole(k), k = 1..pole_count(), are the eigenvalues of the unperturbed
/// operator in decreasing order; 0 is the bottom of the spectrum.
template <class K>
concept ResolventKernel = requires(const K& k, cplx z, double t, Point x, Point y, int i) {
    { k(z, x, y) } -> std::convertible_to<cplx>;
    { k(t, x, y) } -> std::convertible_to<double>;
    { k.pole(i) } -> std::convertible_to<double>;
    { k.pole_count() } -> std::convertible_to<int>;
    { k.finite_at_zero() } -> std::convertible_to<bool>;
    { k.guard() } -> std::convertible_to<double>;
    { k.lattice() } -> std::convertible_to<const Lattice&>;
};

namespace detail {

/// Distance from z to the real segment [0, b], b >= 0.
inline double distance_to_segment(cplx z, double b) {
    const double re = z.real();
    const double dx = re < 0.0 ? -re : (re > b ? re - b : 0.0);
    return std::hypot(dx, z.imag());
}

template <class T>
double magnitude(T v) {
    return std::abs(v);
}

template <class T>
struct Neumaier {
    T sum{};
    T comp{};
    void add(T term) {
        const T y = sum + term;
        if constexpr (std::is_same_v<T, double>) {
            comp += (std::abs(sum) >= std::abs(term)) ? (sum - y) + term : (term - y) + sum;
        } else {
            auto fix = [](double s, double t, double yy) {
                return (std::abs(s) >= std::abs(t)) ? (s - yy) + t : (t - yy) + s;
            };
            comp += T(fix(sum.real(), term.real(), y.real()), fix(sum.imag(), term.imag(), y.imag()));
        }
        sum = y;
    }
    T value() const { return sum + comp; }
};

} // namespace detail

/// Closed-form resolvent of the infinite-lattice operator.
class LatticeResolvent {
public:
    explicit LatticeResolvent(HierarchicalLaplacian op, double tol = 1e-13, double guard = 1e-12)
        : op_(std::move(op)), tol_(tol), guard_(guard), memo_(std::make_shared<Memo>()) {
        if (!(tol > 0.0)) throw InvalidArgument("LatticeResolvent: tol must be > 0");
        if (!(guard >= 0.0)) throw InvalidArgument("LatticeResolvent: guard must be >= 0");
    }

    const HierarchicalLaplacian& op() const noexcept { return op_; }
    const Lattice& lattice() const noexcept { return op_.lattice(); }
    double tol() const noexcept { return tol_; }
    double guard() const noexcept { return guard_; }
    double pole(int k) const { return op_.lambda(k); }
    int pole_count() const noexcept { return std::numeric_limits<int>::max(); }
    bool finite_at_zero() const noexcept { return op_.transient(); }

    /// R(lambda, a, a); the same for every base point a.
    ResolventValue diag(cplx lambda) const {
        const Key key{std::bit_cast<std::uint64_t>(lambda.real()), std::bit_cast<std::uint64_t>(lambda.imag())};
        {
            std::lock_guard lock(memo_->mutex);
            if (auto it = memo_->table.find(key); it != memo_->table.end()) return it->second;
        }
        ResolventValue v = lambda.imag() == 0.0 ? series<double>(lambda.real(), 0)
                                                : series<cplx>(lambda, 0);
        std::lock_guard lock(memo_->mutex);
        if (memo_->table.size() > 100000) memo_->table.clear();
        memo_->table.emplace(key, v);
        return v;
    }

    ResolventValue offdiag(cplx lambda, Point x, Point y) const {
        if (x == y) throw InvalidArgument("resolvent_offdiag: x must differ from y");
        const Rank m = lattice().common_ball(x, y).rank;
        ResolventValue v = lambda.imag() == 0.0 ? series<double>(lambda.real(), m)
                                                : series<cplx>(lambda, m);
        const double lm = op_.lambda(m);
        const double dist = std::abs(cplx(lm) - lambda);
        if (dist < guard_) throw PoleProximity("resolvent: lambda within guard of a pole", lm);
        v.value -= std::pow(op_.pd(), -static_cast<double>(m)) / (cplx(lm) - lambda);
        v.pole_distance = std::min(v.pole_distance, dist);
        return v;
    }

    ResolventValue value(cplx lambda, Point x, Point y) const {
        return x == y ? diag(lambda) : offdiag(lambda, x, y);
    }

    cplx operator()(cplx lambda, Point x, Point y) const { return value(lambda, x, y).value; }
    double operator()(double lambda, Point x, Point y) const {
        return value(cplx(lambda, 0.0), x, y).value.real();
    }

private:
    struct Key {
        std::uint64_t re, im;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const noexcept {
            return std::hash<std::uint64_t>{}(k.re * 0x9E3779B97F4A7C15ULL ^ k.im);
        }
    };
    struct Memo {
        std::mutex mutex;
        std::unordered_map<Key, ResolventValue, KeyHash> table;
    };

    /// sum_{k>m} A_k / (lambda_k - lambda) with a certified remainder. Beyond
    /// rank K two estimates of the tail are available:
    ///   far field:  -p^{-K}/lambda - S1(K)/lambda^2, error <= S11(K) / (|lambda|^2 dist)
    ///   transient:  S2(K), error <= |lambda| S2(K) / dist
    /// with S1 = sum_{k>K} A_k lambda_k, S11 = sum_{k>K} A_k lambda_k^2,
    /// S2 = sum_{k>K} A_k / lambda_k and dist the distance from lambda to [0, lambda_{K+1}].
    template <class T>
    ResolventValue series(T lambda, Rank m) const {
        const bool transient = op_.transient();
        const double mag = detail::magnitude(lambda);
        if (mag == 0.0 && !transient)
            throw RecurrentRegime("resolvent at lambda = 0 diverges for a recurrent operator");

        ResolventValue out;
        detail::Neumaier<T> acc;
        Rank K = m;
        constexpr Rank cap = 6000;
        const auto add_term = [&](Rank k) {
            const double lk = op_.lambda(k);
            const T diff = T(lk) - lambda;
            const double dist = detail::magnitude(diff);
            if (dist < guard_) throw PoleProximity("resolvent: lambda within guard of a pole", lk);
            out.pole_distance = std::min(out.pole_distance, dist);
            acc.add(T(op_.spectral_weight(k)) / diff);
        };
        while (K < op_.table_end()) add_term(++K);

        while (true) {
            const double lnext = op_.lambda(K + 1);
            const double dist = detail::distance_to_segment(cplx(lambda), lnext);
            double best = std::numeric_limits<double>::infinity();
            T estimate{};
            if (mag > 0.0 && dist > 0.0) {
                const double b1 = op_.tail_weighted_lambda_squared(K) / mag / mag / dist;
                if (b1 < best) {
                    best = b1;
                    estimate = T(-std::pow(op_.pd(), -static_cast<double>(K))) / lambda -
                               T(op_.tail_weighted_lambda(K)) / (lambda * lambda);
                }
            }
            if (transient && (mag == 0.0 || dist > 0.0)) {
                const double s2 = op_.tail_inverse_lambda(K);
                const double b2 = mag == 0.0 ? 0.0 : mag * s2 / dist;
                if (b2 < best) {
                    best = b2;
                    estimate = T(s2);
                }
            }
            if (best <= tol_) {
                acc.add(estimate);
                out.value = cplx(acc.value());
                out.tail_bound = best;
                out.terms = K - m;
                if (mag == 0.0 || !transient) out.pole_distance = std::min(out.pole_distance, mag);
                return out;
            }
            if (K >= cap) throw ToleranceNotMet("resolvent series did not reach the requested tolerance");
            add_term(++K);
        }
    }

    HierarchicalLaplacian op_;
    double tol_;
    double guard_;
    std::shared_ptr<Memo> memo_;
};

/// Exact resolvent of the depth-n block operator (finite eigen-expansion).
class TruncatedResolvent {
public:
    explicit TruncatedResolvent(const LatticeConfig& cfg, double guard = 1e-12)
        : op_(cfg), depth_(cfg.depth), size_(cfg.block_size()), guard_(guard) {
        shift_ = op_.lambda(depth_ + 1);
        poles_.resize(static_cast<std::size_t>(depth_) + 1);
        weights_.resize(static_cast<std::size_t>(depth_) + 1);
        for (Rank k = 1; k <= depth_; ++k) {
            poles_[static_cast<std::size_t>(k)] = op_.lambda(k) - shift_;
            weights_[static_cast<std::size_t>(k)] = op_.spectral_weight(k);
        }
        constant_weight_ = std::pow(op_.pd(), -static_cast<double>(depth_));
    }

    const HierarchicalLaplacian& op() const noexcept { return op_; }
    const Lattice& lattice() const noexcept { return op_.lattice(); }
    Rank depth() const noexcept { return depth_; }
    Index size() const noexcept { return size_; }
    double shift() const noexcept { return shift_; }
    double guard() const noexcept { return guard_; }
    double pole(int k) const {
        if (k < 1) throw InvalidArgument("TruncatedResolvent::pole: k must be >= 1");
        if (k > depth_) return 0.0;
        return poles_[static_cast<std::size_t>(k)];
    }
    int pole_count() const noexcept { return depth_; }
    bool finite_at_zero() const noexcept { return false; }

    template <class T>
    T evaluate(T lambda, Point x, Point y) const {
        if (x.value >= size_ || y.value >= size_)
            throw InvalidArgument("TruncatedResolvent: point outside the depth block");
        const Rank m = lattice().common_ball(x, y).rank;
        check_pole(lambda, 0.0);
        detail::Neumaier<T> acc;
        acc.add(T(constant_weight_) / (-lambda));
        for (Rank k = m + 1; k <= depth_; ++k) {
            const double e = poles_[static_cast<std::size_t>(k)];
            check_pole(lambda, e);
            acc.add(T(weights_[static_cast<std::size_t>(k)]) / (T(e) - lambda));
        }
        if (m >= 1) {
            const double e = poles_[static_cast<std::size_t>(m)];
            check_pole(lambda, e);
            acc.add(T(-std::pow(op_.pd(), -static_cast<double>(m))) / (T(e) - lambda));
        }
        return acc.value();
    }

    cplx operator()(cplx lambda, Point x, Point y) const {
        return lambda.imag() == 0.0 ? cplx(evaluate<double>(lambda.real(), x, y)) : evaluate<cplx>(lambda, x, y);
    }
    double operator()(double lambda, Point x, Point y) const { return evaluate<double>(lambda, x, y); }

private:
    template <class T>
    void check_pole(T lambda, double e) const {
        if (std::abs(T(e) - lambda) < guard_) throw PoleProximity("truncated resolvent: lambda within guard of a pole", e);
    }

    HierarchicalLaplacian op_;
    Rank depth_;
    Index size_;
    double guard_;
    double shift_ = 0.0;
    double constant_weight_ = 0.0;
    std::vector<double> poles_;
    std::vector<double> weights_;
};

static_assert(ResolventKernel<LatticeResolvent>);
static_assert(ResolventKernel<TruncatedResolvent>);

/// Green function R(0, x, y); only finite in the transient regime.
inline ResolventValue green_function(const HierarchicalLaplacian& op, Point x, Point y, double tol = 1e-13) {
    if (!op.transient())
        throw RecurrentRegime("green function diverges: the operator is recurrent");
    return LatticeResolvent(op, tol).value(cplx(0.0), x, y);
}

} // namespace hierspec
