#pragma once

// Point perturbations H = L - sum_i sigma_i delta_{a_i}.
//
// Eigenvalues of H outside Spec(L) are the lambda at which the N x N matrix
//
//   B(lambda) = Sigma^{-1} - R(lambda, a_i, a_j)
//
// is singular. R(lambda, a, a) is the same for every a, so B(lambda) equals
// the secular matrix (1/sigma_i on the diagonal, -R(lambda, a_i, a_j) off it)
// minus R(lambda, a, a) times the identity. For real lambda inside a gap of
// Spec(L) the compression R(lambda, a_i, a_j) increases in the Loewner order,
// so the number of negative eigenvalues of B(lambda) is non-decreasing in
// lambda and its jumps are exactly the eigenvalues of H (with multiplicity).
// Roots are found by bisecting on that count.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "hierarchy.hpp"
#include "laplacian.hpp"
#include "resolvent.hpp"
#include "root_finding.hpp"

namespace hierspec {

struct Bump {
    Point location;
    /// V contains -sigma delta_location; sigma > 0 is an attractive well.
    double sigma = 0.0;
};

class Potential {
public:
    Potential() = default;
    explicit Potential(std::vector<Bump> bumps) : bumps_(std::move(bumps)) {
        for (std::size_t i = 0; i < bumps_.size(); ++i) {
            if (!(bumps_[i].sigma != 0.0) || !std::isfinite(bumps_[i].sigma))
                throw InvalidArgument("Potential: every sigma must be finite and nonzero");
            for (std::size_t j = 0; j < i; ++j)
                if (bumps_[i].location == bumps_[j].location)
                    throw InvalidArgument("Potential: bump locations must be pairwise distinct");
        }
    }

    const std::vector<Bump>& bumps() const noexcept { return bumps_; }
    std::size_t size() const noexcept { return bumps_.size(); }
    bool empty() const noexcept { return bumps_.empty(); }
    const Bump& operator[](std::size_t i) const { return bumps_[i]; }

    double max_positive_sigma() const {
        double m = 0.0;
        for (const auto& b : bumps_) m = std::max(m, b.sigma);
        return m;
    }
    double max_negative_magnitude() const {
        double m = 0.0;
        for (const auto& b : bumps_) m = std::max(m, -b.sigma);
        return m;
    }
    int negative_sigma_count() const {
        return static_cast<int>(std::count_if(bumps_.begin(), bumps_.end(), [](const Bump& b) { return b.sigma < 0.0; }));
    }

private:
    std::vector<Bump> bumps_;
};

/// 1/sigma_i on the diagonal, -R(lambda, a_i, a_j) off the diagonal.
struct SecularMatrix {
    cplx lambda{};
    Eigen::MatrixXcd entries;
    /// R(lambda, a, a), shared by every bump.
    cplx diagonal_resolvent{};

    /// Sigma^{-1} - R(lambda, a_bar, a_bar)
    Eigen::MatrixXcd birman_schwinger() const {
        Eigen::MatrixXcd b = entries;
        b.diagonal().array() -= diagonal_resolvent;
        return b;
    }
};

template <ResolventKernel K>
SecularMatrix secular_matrix(const K& kernel, cplx lambda, const Potential& pot) {
    if (pot.empty()) throw InvalidArgument("secular_matrix: empty potential");
    const auto n = static_cast<Eigen::Index>(pot.size());
    SecularMatrix out;
    out.lambda = lambda;
    out.entries.resize(n, n);
    out.diagonal_resolvent = kernel(lambda, pot[0].location, pot[0].location);
    for (Eigen::Index i = 0; i < n; ++i) {
        out.entries(i, i) = 1.0 / pot[static_cast<std::size_t>(i)].sigma;
        for (Eigen::Index j = 0; j < i; ++j) {
            const cplx r = kernel(lambda, pot[static_cast<std::size_t>(i)].location, pot[static_cast<std::size_t>(j)].location);
            out.entries(i, j) = -r;
            out.entries(j, i) = -r;
        }
    }
    return out;
}

/// Real B(lambda) for lambda on the real axis.
template <ResolventKernel K>
Eigen::MatrixXd birman_schwinger_real(const K& kernel, double lambda, const Potential& pot) {
    const auto n = static_cast<Eigen::Index>(pot.size());
    Eigen::MatrixXd b(n, n);
    const double rd = kernel(lambda, pot[0].location, pot[0].location);
    for (Eigen::Index i = 0; i < n; ++i) {
        b(i, i) = 1.0 / pot[static_cast<std::size_t>(i)].sigma - rd;
        for (Eigen::Index j = 0; j < i; ++j) {
            const double r = kernel(lambda, pot[static_cast<std::size_t>(i)].location, pot[static_cast<std::size_t>(j)].location);
            b(i, j) = -r;
            b(j, i) = -r;
        }
    }
    return b;
}

// ----------------------------------------------------------------------------
// Spectrum reports

enum class RootKind { Inherited, GapRoot, NegativeRoot, AboveTopRoot };

inline const char* to_string(RootKind k) {
    switch (k) {
        case RootKind::Inherited: return "Inherited";
        case RootKind::GapRoot: return "GapRoot";
        case RootKind::NegativeRoot: return "NegativeRoot";
        case RootKind::AboveTopRoot: return "AboveTopRoot";
    }
    return "?";
}

inline constexpr int kInfiniteMultiplicity = -1;

struct SpectrumEntry {
    double value = 0.0;
    RootKind kind = RootKind::GapRoot;
    /// Gap index k for GapRoot (root in (lambda_{k+1}, lambda_k)) and Inherited (lambda_k); 0 otherwise.
    int gap = 0;
    int multiplicity = 1;
    double residual = 0.0;
    /// Certified bracket width.
    double bracket_width = 0.0;
    /// GapRoot strictly inside its gap by more than the bracket width.
    bool interlaced = true;
};

struct SpectrumReport {
    std::vector<SpectrumEntry> entries;
    int gaps_scanned = 0;
    /// Shift that maps the kernel's pole positions to the infinite-lattice eigenvalues (0 for the infinite kernel).
    double truncation_shift = 0.0;

    std::vector<SpectrumEntry> of_kind(RootKind k) const {
        std::vector<SpectrumEntry> out;
        for (const auto& e : entries)
            if (e.kind == k) out.push_back(e);
        return out;
    }
    std::vector<SpectrumEntry> in_gap(int k) const {
        std::vector<SpectrumEntry> out;
        for (const auto& e : entries)
            if (e.kind == RootKind::GapRoot && e.gap == k) out.push_back(e);
        return out;
    }
};

struct RootSearchOptions {
    int k_max = 3;
    double tol = 1e-12;
    /// Smallest |lambda| probed when the resolvent diverges at 0.
    double smallest_negative = 1e-300;
};

namespace detail {

template <class K>
double kernel_shift(const K& kernel) {
    if constexpr (requires { kernel.shift(); })
        return kernel.shift();
    else
        return 0.0;
}

template <class K>
int gap_limit(const K& kernel, int k_max) {
    return std::min(k_max, kernel.pole_count());
}

/// Offset from a gap end at which the kernel is still evaluated.
inline double edge_offset(double lo, double hi, double guard) {
    return std::max(10.0 * guard, 1e-11 * (hi - lo));
}

/// Multiplicity of the inherited eigenvalue pole(k) of a depth-n truncation
/// once the bumps are attached: (p-1)p^{n-k} minus, for every rank-k ball,
/// min(#children holding a bump, p-1).
template <class K>
int inherited_multiplicity(const K& kernel, int k, const Potential& pot) {
    if constexpr (requires { kernel.depth(); }) {
        const Lattice& lat = kernel.lattice();
        const Index p = lat.p();
        const Rank n = kernel.depth();
        long long mult = static_cast<long long>(p - 1) * static_cast<long long>(ipow(p, n - k));
        std::vector<std::pair<Index, Index>> seen;  // (ball index at rank k, child index)
        for (const auto& b : pot.bumps()) {
            const BallAddress child = lat.ball_of(b.location, k - 1);
            const std::pair<Index, Index> key{child.index / p, child.index};
            if (std::find(seen.begin(), seen.end(), key) == seen.end()) seen.push_back(key);
        }
        std::sort(seen.begin(), seen.end());
        for (std::size_t i = 0; i < seen.size();) {
            std::size_t j = i;
            while (j < seen.size() && seen[j].first == seen[i].first) ++j;
            mult -= std::min<long long>(static_cast<long long>(j - i), static_cast<long long>(p - 1));
            i = j;
        }
        return static_cast<int>(mult);
    } else {
        (void)kernel;
        (void)k;
        (void)pot;
        return kInfiniteMultiplicity;
    }
}

} // namespace detail

/// Eigenvalues created by the single bump -sigma delta_a: one root of
/// R(lambda) = 1/sigma per gap, a negative bound state for sigma > 0 when the
/// operator is recurrent or R(0) > 1/sigma, and one root above lambda_1 for
/// sigma < 0.
template <ResolventKernel K>
SpectrumReport rank_one_roots(const K& kernel, double sigma, const RootSearchOptions& opt = {}) {
    if (!(sigma != 0.0) || !std::isfinite(sigma)) throw InvalidArgument("rank_one_roots: sigma must be nonzero");
    if (opt.k_max < 0) throw InvalidArgument("rank_one_roots: k_max must be >= 0");
    const Point a{0};
    const double target = 1.0 / sigma;
    const auto R = [&](double l) { return kernel(l, a, a); };
    const auto g = [&](double l) { return R(l) - target; };
    const auto residual = [&](double l) { return std::abs(1.0 - sigma * R(l)); };

    SpectrumReport report;
    report.truncation_shift = detail::kernel_shift(kernel);
    const int gaps = detail::gap_limit(kernel, opt.k_max);
    report.gaps_scanned = gaps;
    const Potential pot({Bump{a, sigma}});

    for (int k = 1; k <= gaps; ++k) {
        const double top = kernel.pole(k);
        const double bottom = kernel.pole(k + 1);
        double off = detail::edge_offset(bottom, top, kernel.guard());
        double lo = bottom + off, hi = top - off;
        // R runs from -inf to +inf across the gap; tighten the ends if needed
        for (int shrink = 0; shrink < 3 && !(g(lo) < 0.0 && g(hi) > 0.0); ++shrink) {
            off = std::max(off * 1e-2, 2.0 * kernel.guard());
            lo = bottom + off;
            hi = top - off;
        }
        if (!(g(lo) < 0.0 && g(hi) > 0.0))
            throw ToleranceNotMet("rank_one_roots: root in gap " + std::to_string(k) + " lies within the pole guard");
        const Bracket br = bisect_increasing(g, lo, hi, opt.tol);
        SpectrumEntry e;
        e.value = br.mid();
        e.kind = RootKind::GapRoot;
        e.gap = k;
        e.residual = residual(e.value);
        e.bracket_width = br.width();
        e.interlaced = bottom + br.width() < e.value && e.value < top - br.width();
        report.entries.push_back(e);
    }

    if (sigma > 0.0) {
        const double lo = -(2.0 * sigma + kernel.pole(1));
        std::optional<double> hi;
        if (kernel.finite_at_zero()) {
            if (R(0.0) > target) hi = 0.0;
        } else {
            for (double h = -1e-12;; h *= 1e-12) {
                if (-h < opt.smallest_negative) h = -opt.smallest_negative;
                if (g(h) > 0.0) {
                    hi = h;
                    break;
                }
                if (-h <= opt.smallest_negative) break;
            }
        }
        if (hi) {
            if (!(g(lo) < 0.0)) throw ToleranceNotMet("rank_one_roots: negative bracket is invalid");
            const Bracket br = bisect_increasing(g, lo, *hi, opt.tol);
            SpectrumEntry e;
            e.value = br.mid();
            e.kind = RootKind::NegativeRoot;
            e.residual = residual(e.value);
            e.bracket_width = br.width();
            e.interlaced = e.value < 0.0;
            report.entries.push_back(e);
        }
    } else {
        const double top = kernel.pole(1);
        const double hi = top + 2.0 * (-sigma) + 1.0;
        double off = std::max(10.0 * kernel.guard(), 1e-11 * top);
        if (!(g(top + off) < 0.0)) off = 2.0 * kernel.guard();
        if (!(g(top + off) < 0.0 && g(hi) > 0.0))
            throw ToleranceNotMet("rank_one_roots: root above the spectrum lies within the pole guard");
        const Bracket br = bisect_increasing(g, top + off, hi, opt.tol);
        SpectrumEntry e;
        e.value = br.mid();
        e.kind = RootKind::AboveTopRoot;
        e.residual = residual(e.value);
        e.bracket_width = br.width();
        e.interlaced = e.value > top;
        report.entries.push_back(e);
    }

    for (int k = 1; k <= gaps; ++k) {
        SpectrumEntry e;
        e.value = kernel.pole(k);
        e.kind = RootKind::Inherited;
        e.gap = k;
        e.multiplicity = detail::inherited_multiplicity(kernel, k, pot);
        report.entries.push_back(e);
    }
    return report;
}

/// sigma*(alpha) = (p - p^alpha)/(p - 1) = 1/R(0) for alpha < 1; 0 otherwise.
inline double phase_boundary(double alpha, Index p) {
    if (alpha >= 1.0) return 0.0;
    const double pd = static_cast<double>(p);
    return (pd - std::pow(pd, alpha)) / (pd - 1.0);
}

/// Neg(H) for H = D^alpha - sigma delta_0 on the Dyson lattice: 1 iff
/// alpha >= 1 or sigma > (p - p^alpha)/(p - 1).
inline int neg_count(double alpha, double sigma, Index p) {
    if (!(sigma > 0.0)) throw InvalidArgument("neg_count: sigma must be > 0");
    if (!(alpha > 0.0)) throw InvalidArgument("neg_count: alpha must be > 0");
    if (p < 2) throw InvalidArgument("neg_count: p must be >= 2");
    if (alpha >= 1.0) return 1;
    return sigma > phase_boundary(alpha, p) ? 1 : 0;
}

/// Number of negative eigenvalues of B(lambda).
template <ResolventKernel K>
int inertia_count(const K& kernel, double lambda, const Potential& pot) {
    const Eigen::MatrixXd b = birman_schwinger_real(kernel, lambda, pot);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b, Eigen::EigenvaluesOnly);
    return static_cast<int>((es.eigenvalues().array() < 0.0).count());
}

template <ResolventKernel K>
double smallest_singular_value(const K& kernel, double lambda, const Potential& pot) {
    const Eigen::MatrixXd b = birman_schwinger_real(kernel, lambda, pot);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().minCoeff();
}

/// All eigenvalues of H = L - sum sigma_i delta_{a_i} outside Spec(L) in the
/// first k_max gaps, on the negative axis, and above lambda_1.
template <ResolventKernel K>
SpectrumReport finite_rank_roots(const K& kernel, const Potential& pot, const RootSearchOptions& opt = {}) {
    if (pot.empty()) throw InvalidArgument("finite_rank_roots: empty potential");
    const auto count = [&](double l) { return inertia_count(kernel, l, pot); };
    SpectrumReport report;
    report.truncation_shift = detail::kernel_shift(kernel);
    const int gaps = detail::gap_limit(kernel, opt.k_max);
    report.gaps_scanned = gaps;

    const auto emit = [&](const std::vector<CountedRoot>& roots, RootKind kind, int gap, double bottom, double top) {
        for (const auto& r : roots) {
            if (r.multiplicity > 1)
                throw RootCountAmbiguous("finite_rank_roots: " + std::to_string(r.multiplicity) +
                                         " eigenvalues within tolerance of " + std::to_string(r.bracket.mid()));
            SpectrumEntry e;
            e.value = r.bracket.mid();
            e.kind = kind;
            e.gap = gap;
            e.multiplicity = r.multiplicity;
            e.bracket_width = r.bracket.width();
            e.residual = smallest_singular_value(kernel, e.value, pot);
            e.interlaced = bottom + e.bracket_width < e.value && e.value < top - e.bracket_width;
            report.entries.push_back(e);
        }
    };

    for (int k = 1; k <= gaps; ++k) {
        const double top = kernel.pole(k);
        const double bottom = kernel.pole(k + 1);
        const double off = detail::edge_offset(bottom, top, kernel.guard());
        const double lo = bottom + off, hi = top - off;
        const int clo = count(lo), chi = count(hi);
        if (chi - clo > static_cast<int>(pot.size()))
            throw ToleranceNotMet("finite_rank_roots: more than N roots counted in one gap");
        emit(isolate_by_count(count, lo, clo, hi, chi, opt.tol), RootKind::GapRoot, k, bottom, top);
    }

    if (pot.max_positive_sigma() > 0.0) {
        const double lo = -(2.0 * pot.max_positive_sigma() + kernel.pole(1));
        const int clo = count(lo);
        double hi = 0.0;
        int chi = clo;
        if (kernel.finite_at_zero()) {
            chi = count(0.0);
        } else {
            const int ceiling = clo + static_cast<int>(pot.size()) - pot.negative_sigma_count();
            for (double h = -1e-12;; h *= 1e-12) {
                if (-h < opt.smallest_negative) h = -opt.smallest_negative;
                hi = h;
                chi = count(h);
                if (chi >= ceiling || -h <= opt.smallest_negative) break;
            }
        }
        emit(isolate_by_count(count, lo, clo, hi, chi, opt.tol), RootKind::NegativeRoot, 0,
             -std::numeric_limits<double>::infinity(), 0.0);
    }

    if (pot.max_negative_magnitude() > 0.0) {
        const double top = kernel.pole(1);
        const double hi = top + 2.0 * pot.max_negative_magnitude() + 1.0;
        const double lo = top + std::max(10.0 * kernel.guard(), 1e-11 * top);
        emit(isolate_by_count(count, lo, count(lo), hi, count(hi), opt.tol), RootKind::AboveTopRoot, 0, top,
             std::numeric_limits<double>::infinity());
    }

    for (int k = 1; k <= gaps; ++k) {
        SpectrumEntry e;
        e.value = kernel.pole(k);
        e.kind = RootKind::Inherited;
        e.gap = k;
        e.multiplicity = detail::inherited_multiplicity(kernel, k, pot);
        report.entries.push_back(e);
    }
    return report;
}

/// Dense H_n = L_n - sum sigma_i delta_{a_i} on the depth block.
inline Eigen::MatrixXd assemble_dense_perturbed(const LatticeConfig& cfg, const Potential& pot) {
    DenseOperator op = assemble_dense(cfg);
    const Index size = cfg.block_size();
    for (const auto& b : pot.bumps()) {
        if (b.location.value >= size) throw InvalidArgument("assemble_dense_perturbed: bump outside the block");
        const auto i = static_cast<Eigen::Index>(b.location.value);
        op.entries(i, i) -= b.sigma;
    }
    return std::move(op.entries);
}

// ----------------------------------------------------------------------------
// Krein identities

/// R_V for a single bump: R + sigma R(x,a) R(a,y) / (1 - sigma R(a,a)).
template <ResolventKernel K>
cplx krein_rank_one(const K& kernel, cplx lambda, Point x, Point y, double sigma, Point a,
                    double singular_guard = 1e-12) {
    const cplx rxy = kernel(lambda, x, y);
    if (sigma == 0.0) return rxy;
    const cplx raa = kernel(lambda, a, a);
    const cplx denom = 1.0 - sigma * raa;
    if (std::abs(denom) < singular_guard)
        throw SecularSingularity("krein_rank_one: lambda is an eigenvalue of the perturbed operator");
    return rxy + sigma * kernel(lambda, x, a) * kernel(lambda, a, y) / denom;
}

/// The perturbed resolvent at a fixed lambda; B(lambda) is factored once and
/// reused for every (x, y).
template <ResolventKernel K>
class PerturbedResolvent {
public:
    PerturbedResolvent(const K& kernel, cplx lambda, Potential pot, double singular_guard = 1e-13)
        : kernel_(&kernel), lambda_(lambda), pot_(std::move(pot)) {
        if (pot_.empty()) throw InvalidArgument("PerturbedResolvent: empty potential");
        const Eigen::MatrixXcd b = secular_matrix(kernel, lambda, pot_).birman_schwinger();
        Eigen::JacobiSVD<Eigen::MatrixXcd> svd(b);
        const auto& sv = svd.singularValues();
        const double smax = sv(0), smin = sv(sv.size() - 1);
        if (!(smin > singular_guard * std::max(smax, 1.0)))
            throw SecularSingularity("PerturbedResolvent: Sigma^{-1} - R(lambda) is numerically singular");
        inverse_norm_ = 1.0 / smin;
        lu_.compute(b);
    }

    cplx lambda() const noexcept { return lambda_; }
    const Potential& potential() const noexcept { return pot_; }

    /// ||(Sigma^{-1} - R(lambda))^{-1}||
    double secular_inverse_norm() const noexcept { return inverse_norm_; }

    /// Bound ||T(lambda)|| <= ||B^{-1}|| ||(L - lambda)^{-1}||^2 on the finite-rank correction.
    double correction_norm_bound() const {
        double dist = std::abs(lambda_);
        const int count = std::min(kernel_->pole_count(), 4000);
        for (int k = 1; k <= count; ++k) {
            const double e = kernel_->pole(k);
            dist = std::min(dist, std::abs(cplx(e) - lambda_));
            if (e < 1e-300) break;
        }
        return inverse_norm_ / (dist * dist);
    }

    /// Column R(lambda, a_i, y), i = 1..N.
    Eigen::VectorXcd column(Point y) const {
        Eigen::VectorXcd c(static_cast<Eigen::Index>(pot_.size()));
        for (std::size_t i = 0; i < pot_.size(); ++i)
            c(static_cast<Eigen::Index>(i)) = (*kernel_)(lambda_, pot_[i].location, y);
        return c;
    }

    /// T(lambda, x, y) = R(x, a_bar) B^{-1} R(a_bar, y).
    cplx correction(Point x, Point y) const {
        const Eigen::VectorXcd rhs = column(y);
        const Eigen::VectorXcd z = lu_.solve(rhs);
        const Eigen::VectorXcd left = x == y ? rhs : column(x);
        return left.transpose() * z;
    }

    cplx operator()(Point x, Point y) const { return (*kernel_)(lambda_, x, y) + correction(x, y); }

private:
    const K* kernel_;
    cplx lambda_;
    Potential pot_;
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu_;
    double inverse_norm_ = 0.0;
};

/// R_V(lambda, x, y) = R(x,y) + R(x, a_bar) (Sigma^{-1} - R(a_bar, a_bar))^{-1} R(a_bar, y).
template <ResolventKernel K>
cplx krein_finite_rank(const K& kernel, cplx lambda, Point x, Point y, const Potential& pot) {
    return PerturbedResolvent<K>(kernel, lambda, pot)(x, y);
}

// ----------------------------------------------------------------------------
// Eigenfunctions of perturbation-created eigenvalues

struct BoundState {
    double lambda = 0.0;
    /// Null vector zeta of B(lambda), unit norm.
    Eigen::VectorXd zeta;
    /// psi(x) = sum_i zeta_i R(lambda, x, a_i) on {0, ..., p^depth - 1}, unit norm.
    Eigen::VectorXd psi;
    /// ||H_n psi - lambda psi|| when the kernel is the depth-n truncation itself.
    std::optional<double> residual;
    /// Smallest |eigenvalue| of B(lambda) relative to its norm.
    double secular_residual = 0.0;
};

template <ResolventKernel K>
BoundState eigenfunction(const K& kernel, double lambda_root, const Potential& pot, Rank block_depth,
                         double accept = 1e-6) {
    if (pot.empty()) throw InvalidArgument("eigenfunction: empty potential");
    const Index p = kernel.lattice().p();
    const Index size = ipow(p, block_depth);
    const Eigen::MatrixXd b = birman_schwinger_real(kernel, lambda_root, pot);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b);
    Eigen::Index imin = 0;
    es.eigenvalues().cwiseAbs().minCoeff(&imin);
    const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    BoundState out;
    out.lambda = lambda_root;
    out.secular_residual = std::abs(es.eigenvalues()(imin)) / scale;
    if (out.secular_residual > accept)
        throw RootRejected("eigenfunction: lambda is not a root of the secular equation");
    out.zeta = es.eigenvectors().col(imin);
    out.psi.resize(static_cast<Eigen::Index>(size));
    for (Index x = 0; x < size; ++x) {
        double v = 0.0;
        for (std::size_t i = 0; i < pot.size(); ++i)
            v += out.zeta(static_cast<Eigen::Index>(i)) * kernel(lambda_root, Point{x}, pot[i].location);
        out.psi(static_cast<Eigen::Index>(x)) = v;
    }
    out.psi.normalize();
    if constexpr (requires { kernel.depth(); kernel.op(); }) {
        if (kernel.depth() == block_depth) {
            LatticeConfig cfg{p, block_depth, kernel.op().multiplier()};
            Eigen::VectorXd h = apply_truncated(cfg, out.psi) - lambda_root * out.psi;
            for (const auto& bump : pot.bumps())
                h(static_cast<Eigen::Index>(bump.location.value)) -= bump.sigma * out.psi(static_cast<Eigen::Index>(bump.location.value));
            out.residual = h.norm();
        }
    }
    return out;
}

} // namespace hierspec
