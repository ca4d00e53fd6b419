#pragma once

// Sparse and random point potentials.
//
// For bumps whose mutual distances grow fast enough, the essential spectrum
// of H is Spec(L) together with R^{-1}(1/Sigma*), Sigma* the set of limit
// points of the amplitudes. With i.i.d. amplitudes of bounded density on
// [low, high], Sigma* is the whole interval, so in every gap
// I_k = [R^{-1}(1/high), R^{-1}(1/low)] because R increases across the gap.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "errors.hpp"
#include "hierarchy.hpp"
#include "laplacian.hpp"
#include "oracle.hpp"
#include "perturb.hpp"
#include "resolvent.hpp"
#include "statistics.hpp"

namespace hierspec {

struct UniformDensity {};

/// Piecewise-constant density over equal-width bins covering [low, high].
struct BinnedDensity {
    std::vector<double> weights;
};

struct AmplitudeDensity {
    std::variant<UniformDensity, BinnedDensity> kind = UniformDensity{};
};

struct SparseConfig {
    std::vector<Point> locations;
    double low = 0.5;
    double high = 2.0;
    AmplitudeDensity density;

    void validate() const {
        if (!(low > 0.0) || !(high >= low) || !std::isfinite(high))
            throw InvalidArgument("SparseConfig: amplitude range must satisfy 0 < low <= high");
        for (std::size_t i = 1; i < locations.size(); ++i)
            if (!(locations[i - 1] < locations[i]))
                throw InvalidArgument("SparseConfig: locations must be strictly increasing");
        if (auto* b = std::get_if<BinnedDensity>(&density.kind)) {
            if (b->weights.empty()) throw InvalidArgument("SparseConfig: binned density needs at least one bin");
            double total = 0.0;
            for (double w : b->weights) {
                if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("SparseConfig: bin weights must be >= 0");
                total += w;
            }
            if (!(total > 0.0)) throw InvalidArgument("SparseConfig: bin weights sum to zero");
        }
    }

    /// CDF of the amplitude law.
    double cdf(double s) const {
        if (s <= low) return 0.0;
        if (s >= high) return 1.0;
        const double u = (s - low) / (high - low);
        if (std::holds_alternative<UniformDensity>(density.kind)) return u;
        const auto& w = std::get<BinnedDensity>(density.kind).weights;
        double total = 0.0;
        for (double v : w) total += v;
        const double pos = u * static_cast<double>(w.size());
        const auto bin = std::min(static_cast<std::size_t>(pos), w.size() - 1);
        double acc = 0.0;
        for (std::size_t i = 0; i < bin; ++i) acc += w[i];
        acc += w[bin] * (pos - static_cast<double>(bin));
        return acc / total;
    }

    /// Inverse CDF; u in [0, 1).
    double quantile(double u) const {
        if (high == low) return low;
        if (std::holds_alternative<UniformDensity>(density.kind)) return low + u * (high - low);
        const auto& w = std::get<BinnedDensity>(density.kind).weights;
        double total = 0.0;
        for (double v : w) total += v;
        const double target = u * total;
        double acc = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (w[i] > 0.0 && acc + w[i] >= target) {
                const double frac = (target - acc) / w[i];
                return low + (high - low) * (static_cast<double>(i) + frac) / static_cast<double>(w.size());
            }
            acc += w[i];
        }
        return high;
    }
};

/// a_i = p^(c i), i = 0, 1, ..., while below `limit`.
inline std::vector<Point> geometric_locations(Index p, int c, Index limit) {
    if (c < 1) throw InvalidArgument("geometric_locations: exponent step must be >= 1");
    std::vector<Point> out;
    for (int i = 0;; ++i) {
        Index v = 0;
        try {
            v = ipow(p, c * i);
        } catch (const InvalidArgument&) {
            break;
        }
        if (v >= limit) break;
        out.push_back(Point{v});
    }
    return out;
}

inline constexpr double kDefaultSparsityExponent = 1.0 / 3.0;

/// sup_{i >= M} sum_{j >= M, j != i} d(a_i, a_j)^{-r}; indices are 1-based.
inline double sparsity_metric(const Lattice& lat, const std::vector<Point>& locations, double r, std::size_t M) {
    if (!(r > 0.0 && r <= 1.0)) throw InvalidArgument("sparsity_metric: r must lie in (0, 1]");
    if (M < 1) throw InvalidArgument("sparsity_metric: horizon M is 1-based");
    if (locations.size() < M + 1) throw InvalidArgument("sparsity_metric: need two locations beyond the horizon");
    double sup = 0.0;
    for (std::size_t i = M - 1; i < locations.size(); ++i) {
        stats::CompensatedSum s;
        for (std::size_t j = M - 1; j < locations.size(); ++j) {
            if (j == i) continue;
            s.add(std::pow(static_cast<double>(lat.distance(locations[i], locations[j])), -r));
        }
        sup = std::max(sup, s.value());
    }
    return sup;
}

inline double sparsity_metric(const Lattice& lat, const std::vector<Point>& locations, std::size_t M) {
    return sparsity_metric(lat, locations, kDefaultSparsityExponent, M);
}

// ----------------------------------------------------------------------------
// Essential spectrum

struct SpectralInterval {
    /// Gap index k, or 0 for the negative half-line.
    int gap = 0;
    double lo = 0.0;
    double hi = 0.0;
    /// |R(endpoint) - target| at each end.
    double residual_lo = 0.0;
    double residual_hi = 0.0;
    /// Upper end stopped at 0 because R(0) <= 1/low.
    bool clipped_at_zero = false;

    bool contains(double v, double fatten = 0.0) const { return v >= lo - fatten && v <= hi + fatten; }
};

struct EssentialSpectrumSet {
    std::vector<double> inherited;  // lambda_1 > lambda_2 > ... (and 0)
    std::vector<SpectralInterval> intervals;
};

template <ResolventKernel K>
EssentialSpectrumSet essential_spectrum_sparse(const K& kernel, const SparseConfig& cfg, int k_max,
                                               double tol = 1e-12) {
    cfg.validate();
    RootSearchOptions opt;
    opt.k_max = k_max;
    opt.tol = tol;
    const SpectrumReport upper = rank_one_roots(kernel, cfg.high, opt);  // R = 1/high
    const SpectrumReport lower = rank_one_roots(kernel, cfg.low, opt);   // R = 1/low
    const Point a{0};
    const auto res = [&](double l, double sigma) { return std::abs(kernel(l, a, a) - 1.0 / sigma); };

    EssentialSpectrumSet out;
    for (int k = 1; k <= upper.gaps_scanned; ++k) out.inherited.push_back(kernel.pole(k));
    out.inherited.push_back(0.0);

    for (int k = 1; k <= upper.gaps_scanned; ++k) {
        const auto a_root = upper.in_gap(k), b_root = lower.in_gap(k);
        if (a_root.size() != 1 || b_root.size() != 1)
            throw ToleranceNotMet("essential_spectrum_sparse: missing interval endpoint in gap " + std::to_string(k));
        SpectralInterval iv;
        iv.gap = k;
        iv.lo = a_root[0].value;
        iv.hi = b_root[0].value;
        iv.residual_lo = res(iv.lo, cfg.high);
        iv.residual_hi = res(iv.hi, cfg.low);
        out.intervals.push_back(iv);
    }
    const auto neg_hi = upper.of_kind(RootKind::NegativeRoot);
    const auto neg_lo = lower.of_kind(RootKind::NegativeRoot);
    if (!neg_hi.empty()) {
        SpectralInterval iv;
        iv.gap = 0;
        iv.lo = neg_hi[0].value;
        iv.residual_lo = res(iv.lo, cfg.high);
        if (!neg_lo.empty()) {
            iv.hi = neg_lo[0].value;
            iv.residual_hi = res(iv.hi, cfg.low);
        } else {
            iv.hi = 0.0;
            iv.clipped_at_zero = true;
        }
        out.intervals.push_back(iv);
    }
    return out;
}

// ----------------------------------------------------------------------------
// Random amplitudes

/// Uniform double in [0, 1) from the stream of (seed, trial, index).
inline double stream_uniform(std::uint64_t seed, std::uint64_t trial, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(trial >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    std::mt19937_64 gen(seq);
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

/// Amplitudes sigma_i drawn independently per location index; deterministic in (seed, trial).
inline Potential sample_potential(const SparseConfig& cfg, std::uint64_t seed, std::uint64_t trial = 0) {
    cfg.validate();
    std::vector<Bump> bumps;
    bumps.reserve(cfg.locations.size());
    for (std::size_t i = 0; i < cfg.locations.size(); ++i) {
        const double s = std::clamp(cfg.quantile(stream_uniform(seed, trial, i)), cfg.low, cfg.high);
        bumps.push_back({cfg.locations[i], s});
    }
    return Potential(std::move(bumps));
}

/// Restriction of a configuration to the depth block {0, ..., p^depth - 1}.
inline SparseConfig restrict_to_block(SparseConfig cfg, Index size) {
    std::erase_if(cfg.locations, [&](Point x) { return x.value >= size; });
    return cfg;
}

// ----------------------------------------------------------------------------
// Fractional moments E|R_V(tau + i eps, a_j, y)|^s

struct LocationMoment {
    Point location;
    double distance = 0.0;  // d(a_j, y)
    double mean = 0.0;
    double std_error = 0.0;
};

struct MomentEstimate {
    double s = 0.0;
    cplx lambda{};
    Point y;
    std::vector<LocationMoment> per_location;
    int trials = 0;
    int discarded = 0;
    std::uint64_t seed = 0;
    /// Accepted trials x locations matrix of |R_V|^s.
    std::vector<std::vector<double>> samples;

    double discarded_fraction() const { return trials == 0 ? 0.0 : static_cast<double>(discarded) / trials; }
};

struct MomentOptions {
    unsigned threads = 1;
};

template <ResolventKernel K>
MomentEstimate fractional_moment_estimate(const K& kernel, const SparseConfig& cfg, double s, double tau, double eps,
                                          Point y, int trials, std::uint64_t seed, const MomentOptions& opt = {}) {
    cfg.validate();
    if (!(s > 0.0 && s < 0.5)) throw InvalidArgument("fractional_moment_estimate: s must lie in (0, 1/2)");
    if (!(eps > 0.0)) throw InvalidArgument("fractional_moment_estimate: eps must be > 0");
    if (trials < 1) throw InvalidArgument("fractional_moment_estimate: trials must be >= 1");
    if (cfg.locations.empty()) throw InvalidArgument("fractional_moment_estimate: no locations");

    MomentEstimate out;
    out.s = s;
    out.lambda = cplx(tau, eps);
    out.y = y;
    out.trials = trials;
    out.seed = seed;

    const std::size_t nloc = cfg.locations.size();
    std::vector<std::optional<std::vector<double>>> rows(static_cast<std::size_t>(trials));
    stats::parallel_for(static_cast<std::size_t>(trials), opt.threads, [&](std::size_t t) {
        const Potential pot = sample_potential(cfg, seed, t);
        try {
            const PerturbedResolvent<K> rv(kernel, out.lambda, pot, 1e-10);
            std::vector<double> row(nloc);
            for (std::size_t j = 0; j < nloc; ++j) {
                const double v = std::pow(std::abs(rv(cfg.locations[j], y)), s);
                if (!std::isfinite(v)) return;
                row[j] = v;
            }
            rows[t] = std::move(row);
        } catch (const SecularSingularity&) {
        }
    });
    for (auto& r : rows) {
        if (r)
            out.samples.push_back(std::move(*r));
        else
            ++out.discarded;
    }
    for (std::size_t j = 0; j < nloc; ++j) {
        std::vector<double> col;
        col.reserve(out.samples.size());
        for (const auto& row : out.samples) col.push_back(row[j]);
        const auto me = stats::mean_and_error(col);
        out.per_location.push_back({cfg.locations[j], static_cast<double>(kernel.lattice().distance(cfg.locations[j], y)),
                                    me.mean, me.std_error});
    }
    return out;
}

/// Slope of log(mean |R_V|^s) against log d(a_j, y) over locations with d > 0,
/// with a percentile bootstrap over trials.
inline stats::Interval moment_decay_slope(const MomentEstimate& est, int replicates = 1000, double confidence = 0.95,
                                          std::uint64_t seed = 1) {
    std::vector<std::size_t> cols;
    std::vector<double> logd;
    for (std::size_t j = 0; j < est.per_location.size(); ++j)
        if (est.per_location[j].distance > 0.0) {
            cols.push_back(j);
            logd.push_back(std::log(est.per_location[j].distance));
        }
    if (cols.size() < 2) throw InvalidArgument("moment_decay_slope: need two locations away from y");
    if (est.samples.empty()) throw InvalidArgument("moment_decay_slope: no accepted trials");
    const auto statistic = [&](std::span<const std::size_t> rows) {
        std::vector<double> logm;
        logm.reserve(cols.size());
        for (std::size_t c : cols) {
            stats::CompensatedSum acc;
            for (std::size_t r : rows) acc.add(est.samples[r][c]);
            logm.push_back(std::log(acc.value() / static_cast<double>(rows.size())));
        }
        return stats::ols_slope(logd, logm);
    };
    return stats::bootstrap(est.samples.size(), statistic, replicates, confidence, seed);
}

// ----------------------------------------------------------------------------
// Finite-volume localisation diagnostics

struct EigenRecord {
    int trial = 0;
    double eigenvalue = 0.0;
    int gap = 0;
    double ipr = 0.0;
    /// Least-squares slope of ln|psi(x)| against ln(1 + d(x, x_peak)).
    double decay_slope = 0.0;
};

struct LocalizationOptions {
    int k_max = 3;
    /// Added to the truncation shift when testing membership in I_k.
    double window_slack = 1e-3;
    /// Eigenvalues closer than this to a truncated pole count as inherited.
    double inherited_tolerance = 1e-9;
    bool eigenvectors = true;
    unsigned threads = 1;
};

struct LocalizationReport {
    EssentialSpectrumSet predicted;
    double truncation_shift = 0.0;
    double fatten = 0.0;
    int trials = 0;
    std::uint64_t seed = 0;
    /// Eigenvalues strictly inside the truncated gaps 1..k_max.
    long in_gap = 0;
    /// Of those, the ones inside the fattened I_k of their gap.
    long in_window = 0;
    std::vector<EigenRecord> records;

    double window_fraction() const { return in_gap == 0 ? 1.0 : static_cast<double>(in_window) / static_cast<double>(in_gap); }
};

/// IPR sum |psi|^4 of a unit vector.
inline double inverse_participation_ratio(const Eigen::VectorXd& psi) {
    const double n2 = psi.squaredNorm();
    return psi.array().pow(4).sum() / (n2 * n2);
}

/// Slope of ln|psi(x)| against rho(x, x_peak) = ln(1 + d(x, x_peak)).
inline double ultrametric_decay_slope(const Lattice& lat, const Eigen::VectorXd& psi) {
    Eigen::Index peak = 0;
    psi.cwiseAbs().maxCoeff(&peak);
    std::vector<double> rho, logv;
    rho.reserve(static_cast<std::size_t>(psi.size()));
    logv.reserve(static_cast<std::size_t>(psi.size()));
    for (Eigen::Index x = 0; x < psi.size(); ++x) {
        if (x == peak) continue;
        const double v = std::abs(psi(x));
        if (!(v > 1e-300)) continue;
        rho.push_back(std::log1p(static_cast<double>(lat.distance(Point{static_cast<Index>(x)}, Point{static_cast<Index>(peak)}))));
        logv.push_back(std::log(v));
    }
    return stats::ols_slope(rho, logv);
}

/// Dense eigensolves of sampled H_n; eigenvalues in gaps 1..k_max are compared
/// with the predicted I_k, and eigenvectors inside the windows are profiled.
inline LocalizationReport localization_diagnostics(const LatticeConfig& lattice, const SparseConfig& cfg, int trials,
                                                   std::uint64_t seed, const LocalizationOptions& opt = {}) {
    cfg.validate();
    if (trials < 1) throw InvalidArgument("localization_diagnostics: trials must be >= 1");
    const HierarchicalLaplacian op(lattice);
    const LatticeResolvent kernel(op);
    const TruncatedResolvent truncated(lattice);
    const SparseConfig local = restrict_to_block(cfg, lattice.block_size());
    if (local.locations.empty()) throw InvalidArgument("localization_diagnostics: no bump inside the block");

    LocalizationReport rep;
    rep.predicted = essential_spectrum_sparse(kernel, cfg, opt.k_max);
    rep.truncation_shift = truncated.shift();
    rep.fatten = truncated.shift() + opt.window_slack;
    rep.trials = trials;
    rep.seed = seed;
    const int gaps = std::min(opt.k_max, lattice.depth);
    const DenseOperator base = assemble_dense(lattice);

    struct TrialResult {
        long in_gap = 0, in_window = 0;
        std::vector<EigenRecord> records;
    };
    std::vector<TrialResult> results(static_cast<std::size_t>(trials));
    stats::parallel_for(static_cast<std::size_t>(trials), opt.threads, [&](std::size_t t) {
        const Potential pot = sample_potential(local, seed, t);
        Eigen::MatrixXd h = base.entries;
        for (const auto& b : pot.bumps()) {
            const auto i = static_cast<Eigen::Index>(b.location.value);
            h(i, i) -= b.sigma;
        }
        oracle::DenseSpectrum spec;
        if (opt.eigenvectors)
            spec = oracle::dense_eigensolve(h);
        else
            spec.eigenvalues = oracle::dense_eigenvalues(h);
        TrialResult& res = results[t];
        for (Eigen::Index i = 0; i < spec.eigenvalues.size(); ++i) {
            const double ev = spec.eigenvalues(i);
            for (int k = 1; k <= gaps; ++k) {
                const double top = truncated.pole(k), bottom = truncated.pole(k + 1);
                if (!(ev > bottom + opt.inherited_tolerance && ev < top - opt.inherited_tolerance)) continue;
                ++res.in_gap;
                const auto& ivs = rep.predicted.intervals;
                const auto it = std::find_if(ivs.begin(), ivs.end(), [&](const SpectralInterval& iv) { return iv.gap == k; });
                if (it != ivs.end() && it->contains(ev, rep.fatten)) {
                    ++res.in_window;
                    if (opt.eigenvectors) {
                        const Eigen::VectorXd psi = spec.eigenvectors.col(i);
                        res.records.push_back({static_cast<int>(t), ev, k, inverse_participation_ratio(psi),
                                               ultrametric_decay_slope(op.lattice(), psi)});
                    }
                }
            }
        }
    });
    for (auto& r : results) {
        rep.in_gap += r.in_gap;
        rep.in_window += r.in_window;
        for (auto& e : r.records) rep.records.push_back(e);
    }
    return rep;
}

/// Median eigenvector decay slope with a percentile bootstrap over records.
inline stats::Interval median_decay_slope(const LocalizationReport& rep, int replicates = 2000, double confidence = 0.95,
                                          std::uint64_t seed = 7) {
    if (rep.records.empty()) throw InvalidArgument("median_decay_slope: no eigenvectors inside the windows");
    std::vector<double> slopes;
    for (const auto& r : rep.records) slopes.push_back(r.decay_slope);
    return stats::bootstrap(
        slopes.size(),
        [&](std::span<const std::size_t> idx) {
            std::vector<double> v;
            v.reserve(idx.size());
            for (auto i : idx) v.push_back(slopes[i]);
            return stats::median(std::move(v));
        },
        replicates, confidence, seed);
}

} // namespace hierspec
