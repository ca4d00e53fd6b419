#pragma once

// Homogeneous hierarchical Laplacian on the Dyson lattice.
//
//   (L f)(x) = sum_{r >= 1} C_r (f(x) - average of f over the rank-r ball of x)
//
// with C_r = lambda_r - lambda_{r+1}. The eigenvalue attached to a rank-r ball
// is lambda_r; for the power-law multiplier lambda_r = kappa^(r-1), kappa = p^-alpha,
// and the singleton value is lambda_0 = 1. Eigenfunctions are
// f_B = 1_B / m(B) - 1_B' / m(B') with L f_B = lambda(B') f_B.
//
// The depth-n truncation keeps r = 1..n on the block {0, ..., p^n - 1}. Its
// spectrum is {0} together with lambda_k - lambda_{n+1}, k = 1..n, so every
// comparison against closed forms carries the shift lambda_{n+1}.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <variant>
#include <vector>

#include "errors.hpp"
#include "hierarchy.hpp"

namespace hierspec {

struct PowerLaw {
    double alpha = 1.0;
};

/// Eigenvalues lambda_r for ranks r = 0..R, non-increasing from rank 0 to 1 and
/// strictly decreasing afterwards. Ranks beyond R continue geometrically with
/// the ratio lambda_R / lambda_{R-1}, i.e. a power law in the ball measure.
struct Tabulated {
    std::vector<double> lambdas;
};

struct MultiplierSpec {
    std::variant<PowerLaw, Tabulated> kind = PowerLaw{};

    static MultiplierSpec power_law(double alpha) { return {PowerLaw{alpha}}; }
    static MultiplierSpec tabulated(std::vector<double> lambdas) {
        return {Tabulated{std::move(lambdas)}};
    }

    bool is_power_law() const { return std::holds_alternative<PowerLaw>(kind); }
    std::optional<double> alpha() const {
        if (auto* pl = std::get_if<PowerLaw>(&kind)) return pl->alpha;
        return std::nullopt;
    }
};

struct LatticeConfig {
    Index p = 2;
    Rank depth = 1;
    MultiplierSpec multiplier;

    /// Number of points in the depth block; validates the configuration.
    Index block_size() const {
        if (p < 2) throw InvalidArgument("LatticeConfig: p must be >= 2");
        if (depth < 1) throw InvalidArgument("LatticeConfig: depth must be >= 1");
        return ipow(p, depth);
    }
};

/// The operator L for a fixed branching factor and multiplier. Immutable.
class HierarchicalLaplacian {
public:
    HierarchicalLaplacian(Index p, MultiplierSpec spec) : lattice_(p), spec_(std::move(spec)) {
        if (auto* pl = std::get_if<PowerLaw>(&spec_.kind)) {
            if (!(pl->alpha > 0.0) || !std::isfinite(pl->alpha))
                throw InvalidArgument("PowerLaw multiplier requires alpha > 0");
            log_kappa_ = -pl->alpha * std::log(static_cast<double>(p));
            table_end_ = 1;
            ratio_ = std::exp(log_kappa_);
        } else {
            const auto& t = std::get<Tabulated>(spec_.kind).lambdas;
            if (t.size() < 3)
                throw InvalidArgument("Tabulated multiplier needs lambda values for ranks 0..R with R >= 2");
            for (double v : t)
                if (!(v > 0.0) || !std::isfinite(v))
                    throw InvalidArgument("Tabulated multiplier values must be positive and finite");
            if (t[1] > t[0]) throw InvalidArgument("Tabulated multiplier: lambda_1 must not exceed lambda_0");
            for (std::size_t r = 2; r < t.size(); ++r)
                if (!(t[r] < t[r - 1]))
                    throw InvalidArgument("Tabulated multiplier values must strictly decrease with rank");
            table_end_ = static_cast<Rank>(t.size()) - 1;
            ratio_ = t[t.size() - 1] / t[t.size() - 2];
        }
    }

    explicit HierarchicalLaplacian(const LatticeConfig& cfg)
        : HierarchicalLaplacian(cfg.p, cfg.multiplier) {}

    const Lattice& lattice() const noexcept { return lattice_; }
    Index p() const noexcept { return lattice_.p(); }
    double pd() const noexcept { return static_cast<double>(lattice_.p()); }
    const MultiplierSpec& multiplier() const noexcept { return spec_; }

    /// Geometric ratio lambda_{k+1} / lambda_k beyond the table (kappa for power law).
    double tail_ratio() const noexcept { return ratio_; }
    /// Ranks above this index follow the geometric tail exactly.
    Rank table_end() const noexcept { return table_end_; }

    std::optional<double> kappa() const {
        if (spec_.is_power_law()) return ratio_;
        return std::nullopt;
    }

    /// lambda(B) for a ball of the given rank.
    double lambda(Rank r) const {
        if (r < 0) throw InvalidArgument("lambda: negative rank");
        if (auto* pl = std::get_if<PowerLaw>(&spec_.kind)) {
            if (r == 0) return 1.0;
            return std::pow(pd(), -pl->alpha * static_cast<double>(r - 1));
        }
        const auto& t = std::get<Tabulated>(spec_.kind).lambdas;
        if (r <= table_end_) return t[static_cast<std::size_t>(r)];
        return t.back() * std::pow(ratio_, static_cast<double>(r - table_end_));
    }

    double lambda(BallAddress b) const { return lambda(b.rank); }

    /// C(B) = lambda(B) - lambda(parent B).
    double coefficient(Rank r) const { return lambda(r) - lambda(r + 1); }
    double coefficient(BallAddress b) const { return coefficient(b.rank); }

    /// Weight of the k-th eigenvalue in the diagonal spectral measure:
    /// A_k = 1/m(B_{k-1}) - 1/m(B_k) = (p-1) p^{-k}.
    double spectral_weight(Rank k) const {
        return (pd() - 1.0) * std::pow(pd(), -static_cast<double>(k));
    }

    /// sum_{k>K} A_k lambda_k, closed form; requires K >= table_end().
    double tail_weighted_lambda(Rank K) const {
        const double g = ratio_ / pd();
        return (pd() - 1.0) * std::pow(pd(), -static_cast<double>(K)) * lambda(K) * g / (1.0 - g);
    }

    /// sum_{k>K} A_k lambda_k^2, closed form; requires K >= table_end().
    double tail_weighted_lambda_squared(Rank K) const {
        const double g = ratio_ * ratio_ / pd();
        const double lk = lambda(K);
        return (pd() - 1.0) * std::pow(pd(), -static_cast<double>(K)) * lk * lk * g / (1.0 - g);
    }

    /// Whether sum_k A_k / lambda_k converges (Green function finite).
    bool transient() const noexcept { return pd() * ratio_ > 1.0; }

    /// sum_{k>K} A_k / lambda_k, closed form; requires transience and K >= table_end().
    double tail_inverse_lambda(Rank K) const {
        const double g = 1.0 / (pd() * ratio_);
        return (pd() - 1.0) * std::pow(pd(), -static_cast<double>(K)) / lambda(K) * g / (1.0 - g);
    }

    /// Spectral dimension D = 2/alpha (power law only).
    std::optional<double> spectral_dimension() const {
        if (auto a = spec_.alpha()) return 2.0 / *a;
        return std::nullopt;
    }

private:
    Lattice lattice_;
    MultiplierSpec spec_;
    double log_kappa_ = 0.0;
    double ratio_ = 0.0;
    Rank table_end_ = 1;
};

/// lambda_1 > lambda_2 > ... > lambda_{k_max}.
inline std::vector<double> spectrum_of_L(const HierarchicalLaplacian& L, int k_max) {
    if (k_max < 1) throw InvalidArgument("spectrum_of_L: k_max must be >= 1");
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(k_max));
    for (int k = 1; k <= k_max; ++k) out.push_back(L.lambda(k));
    return out;
}

/// Jump kernel J(x, y) of the power-law operator:
/// (kappa^-1 - 1)/(1 - kappa/p) * d(x, y)^-(1 + alpha).
inline double jump_kernel(const HierarchicalLaplacian& L, Point x, Point y) {
    if (x == y) throw InvalidArgument("jump_kernel: defined for x != y only");
    auto alpha = L.multiplier().alpha();
    if (!alpha) throw InvalidArgument("jump_kernel: closed form needs a power-law multiplier");
    const double kappa = L.tail_ratio();
    const double c = (1.0 / kappa - 1.0) / (1.0 - kappa / L.pd());
    const double d = static_cast<double>(L.lattice().distance(x, y));
    return c * std::pow(d, -(1.0 + *alpha));
}

/// Off-diagonal matrix element of the infinite operator between points whose
/// common ball has rank m >= 1: -sum_{r>=m} C_r p^{-r}, with the geometric tail
/// beyond the table summed in closed form.
inline double offdiagonal_element(const HierarchicalLaplacian& L, Rank m) {
    if (m < 1) throw InvalidArgument("offdiagonal_element: common rank must be >= 1");
    const Rank start = std::max(m, L.table_end());
    double s = 0.0;
    for (Rank r = m; r < start; ++r) s += L.coefficient(r) * std::pow(L.pd(), -static_cast<double>(r));
    // sum_{r>=start} (lambda_r - lambda_{r+1}) p^{-r} with lambda_r = lambda_start q^{r-start}
    const double q = L.tail_ratio();
    const double g = q / L.pd();
    s += L.lambda(start) * (1.0 - q) * std::pow(L.pd(), -static_cast<double>(start)) / (1.0 - g);
    return -s;
}

// ----------------------------------------------------------------------------
// Spectral function and heat kernel of the infinite operator

/// Left-continuous step function of the diagonal spectral measure:
/// N(tau) = 1/m(B_{j-1}) = p^{-(j-1)} for tau in (lambda_{j+1}, lambda_j],
/// and 1 above lambda_1.
inline double spectral_function(const HierarchicalLaplacian& L, double tau) {
    if (!(tau > 0.0)) throw InvalidArgument("spectral_function: tau must be > 0");
    if (tau > L.lambda(1)) return 1.0;
    Rank j = 1;
    while (L.lambda(j + 1) >= tau) {
        ++j;
        if (j > 100000) throw ToleranceNotMet("spectral_function: tau below resolvable range");
    }
    return std::pow(L.pd(), -static_cast<double>(j - 1));
}

struct SeriesValue {
    double value = 0.0;
    double tail_bound = 0.0;
    int terms = 0;
};

namespace detail {

/// sum_{k>m} A_k exp(-lambda_k t) with certified remainder.
/// Beyond K: sum_{k>K} A_k e^{-lambda_k t} = p^{-K} - sum A_k (1 - e^{-lambda_k t}),
/// and 0 <= 1 - e^{-lambda t} <= lambda t.
inline SeriesValue heat_tail(const HierarchicalLaplacian& L, Rank m, double t, double tol) {
    SeriesValue out;
    double s = 0.0, comp = 0.0;
    Rank K = m;
    const Rank cap = 20000;
    while (true) {
        if (K >= L.table_end()) {
            const double rem = t * L.tail_weighted_lambda(K);
            if (0.5 * rem <= tol || K >= cap) {
                const double est = std::pow(L.pd(), -static_cast<double>(K)) - 0.5 * rem;
                out.value = s + comp + est;
                out.tail_bound = 0.5 * rem;
                out.terms = K - m;
                if (out.tail_bound > tol) throw ToleranceNotMet("heat kernel tail did not reach tolerance");
                return out;
            }
        }
        ++K;
        const double term = L.spectral_weight(K) * std::exp(-L.lambda(K) * t);
        // Neumaier summation
        const double y = s + term;
        comp += (std::abs(s) >= std::abs(term)) ? (s - y) + term : (term - y) + s;
        s = y;
    }
}

} // namespace detail

/// p(t) = p(t, x, x) = sum_{k>=1} A_k exp(-lambda_k t); independent of x.
inline SeriesValue heat_kernel_diag(const HierarchicalLaplacian& L, double t, double tol = 1e-13) {
    if (!(t > 0.0)) throw InvalidArgument("heat_kernel_diag: t must be > 0");
    if (!(tol > 0.0)) throw InvalidArgument("heat_kernel_diag: tol must be > 0");
    return detail::heat_tail(L, 0, t, tol);
}

/// p(t, x, y) through the eigen-expansion of delta_y along the geodesic of y:
/// -p^{-m} exp(-lambda_m t) + sum_{k>m} A_k exp(-lambda_k t), m = rank of x^y.
inline SeriesValue heat_kernel(const HierarchicalLaplacian& L, double t, Point x, Point y,
                               double tol = 1e-13) {
    if (!(t > 0.0)) throw InvalidArgument("heat_kernel: t must be > 0");
    if (x == y) return heat_kernel_diag(L, t, tol);
    const Rank m = L.lattice().common_ball(x, y).rank;
    SeriesValue tail = detail::heat_tail(L, m, t, tol);
    tail.value -= std::pow(L.pd(), -static_cast<double>(m)) * std::exp(-L.lambda(m) * t);
    return tail;
}

// ----------------------------------------------------------------------------
// Depth-n truncation

struct DenseOperator {
    Rank depth = 0;
    Eigen::MatrixXd entries;
    /// lambda_{n+1}: truncated eigenvalues are lambda_k - truncation_shift.
    double truncation_shift = 0.0;
};

/// Matrix of sum_{r=1}^{n} C_r (I - P_r) on {0, ..., p^n - 1}.
inline DenseOperator assemble_dense(const LatticeConfig& cfg) {
    const Index size = cfg.block_size();
    if (size > (Index{1} << 15))
        throw InvalidArgument("assemble_dense: block too large for a dense matrix");
    const HierarchicalLaplacian L(cfg);
    const Rank n = cfg.depth;
    const Lattice& lat = L.lattice();

    // offdiag[m] = -sum_{r=m}^{n} C_r p^{-r}, diag = sum_{r=1}^{n} C_r (1 - p^{-r})
    std::vector<double> offdiag(static_cast<std::size_t>(n) + 2, 0.0);
    for (Rank m = n; m >= 1; --m)
        offdiag[static_cast<std::size_t>(m)] =
            offdiag[static_cast<std::size_t>(m) + 1] -
            L.coefficient(m) * std::pow(L.pd(), -static_cast<double>(m));
    double diag = 0.0;
    for (Rank r = 1; r <= n; ++r) diag += L.coefficient(r) * (1.0 - std::pow(L.pd(), -static_cast<double>(r)));

    const auto N = static_cast<Eigen::Index>(size);
    DenseOperator op;
    op.depth = n;
    op.truncation_shift = L.lambda(n + 1);
    op.entries.resize(N, N);
    for (Eigen::Index j = 0; j < N; ++j) {
        op.entries(j, j) = diag;
        for (Eigen::Index i = j + 1; i < N; ++i) {
            const Rank m = lat.common_ball(Point{static_cast<Index>(i)}, Point{static_cast<Index>(j)}).rank;
            const double v = offdiag[static_cast<std::size_t>(m)];
            op.entries(i, j) = v;
            op.entries(j, i) = v;
        }
    }
    return op;
}

/// L_n f without forming the matrix: O(n p^n).
inline Eigen::VectorXd apply_truncated(const LatticeConfig& cfg, const Eigen::VectorXd& f) {
    const Index size = cfg.block_size();
    if (static_cast<Index>(f.size()) != size) throw InvalidArgument("apply_truncated: size mismatch");
    const HierarchicalLaplacian L(cfg);
    const Index p = cfg.p;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(f.size());
    Eigen::VectorXd means = f;  // block means at the current rank
    Index blocks = size;
    for (Rank r = 1; r <= cfg.depth; ++r) {
        blocks /= p;
        Eigen::VectorXd next(static_cast<Eigen::Index>(blocks));
        for (Index b = 0; b < blocks; ++b) {
            double s = 0.0;
            for (Index c = 0; c < p; ++c) s += means(static_cast<Eigen::Index>(b * p + c));
            next(static_cast<Eigen::Index>(b)) = s / static_cast<double>(p);
        }
        const double c = L.coefficient(r);
        const Index width = ipow(p, r);
        for (Index x = 0; x < size; ++x)
            out(static_cast<Eigen::Index>(x)) +=
                c * (f(static_cast<Eigen::Index>(x)) - next(static_cast<Eigen::Index>(x / width)));
        means = std::move(next);
    }
    return out;
}

/// Eigenfunction f_B for the nearest-neighbour pair B in B' = parent(B).
struct EigenPair {
    BallAddress ball;
    Index sibling_index = 0;
    double eigenvalue = 0.0;
};

inline EigenPair eigen_pair(const HierarchicalLaplacian& L, BallAddress b) {
    return {b, L.lattice().sibling_index(b), L.lambda(b.rank + 1)};
}

/// f_B = 1_B/m(B) - 1_B'/m(B') restricted to the depth block.
inline Eigen::VectorXd eigenfunction_vector(const LatticeConfig& cfg, BallAddress b) {
    const Index size = cfg.block_size();
    if (b.rank + 1 > cfg.depth) throw InvalidArgument("eigenfunction_vector: parent ball exceeds the block");
    const Lattice lat(cfg.p);
    const BallAddress parent = lat.parent(b);
    const double mb = static_cast<double>(lat.measure(b));
    const double mp = static_cast<double>(lat.measure(parent));
    Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size));
    for (Index x = 0; x < size; ++x) {
        double v = 0.0;
        if (lat.contains(b, Point{x})) v += 1.0 / mb;
        if (lat.contains(parent, Point{x})) v -= 1.0 / mp;
        f(static_cast<Eigen::Index>(x)) = v;
    }
    return f;
}

/// Heat kernel of the depth-n operator from its finite eigen-expansion,
/// including the constant mode p^{-n}.
inline double heat_kernel_truncated(const LatticeConfig& cfg, double t, Point x, Point y) {
    const Index size = cfg.block_size();
    if (x.value >= size || y.value >= size) throw InvalidArgument("heat_kernel_truncated: point outside block");
    const HierarchicalLaplacian L(cfg);
    const Rank n = cfg.depth;
    const double shift = L.lambda(n + 1);
    const Rank m = L.lattice().common_ball(x, y).rank;
    double v = std::pow(L.pd(), -static_cast<double>(n));
    for (Rank k = m + 1; k <= n; ++k) v += L.spectral_weight(k) * std::exp(-(L.lambda(k) - shift) * t);
    if (m >= 1) v -= std::pow(L.pd(), -static_cast<double>(m)) * std::exp(-(L.lambda(m) - shift) * t);
    return v;
}

} // namespace hierspec
