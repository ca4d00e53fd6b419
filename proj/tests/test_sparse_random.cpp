#include <gtest/gtest.h>

#include <hierspec/sparse_random.hpp>

#include <cmath>

using namespace hierspec;

namespace {

SparseConfig geometric_config(int c, Index limit, double low = 0.5, double high = 2.0) {
    SparseConfig cfg;
    cfg.locations = geometric_locations(2, c, limit);
    cfg.low = low;
    cfg.high = high;
    return cfg;
}

const HierarchicalLaplacian& dyson() {
    static const HierarchicalLaplacian L(2, MultiplierSpec::power_law(1.0));
    return L;
}

} // namespace

TEST(Sparsity, GeometricLocations) {
    const auto locs = geometric_locations(2, 2, 1000);
    ASSERT_EQ(locs.size(), 5u);
    EXPECT_EQ(locs[0], Point{1});
    EXPECT_EQ(locs[4], Point{256});
    EXPECT_THROW(geometric_locations(2, 0, 100), InvalidArgument);
    EXPECT_EQ(geometric_locations(2, 4, Index(1) << 62).size(), 16u);
}

TEST(Sparsity, MetricDecreasesForGeometricLocations) {
    const Lattice lat(2);
    const auto locs = geometric_locations(2, 2, Index(1) << 40);
    const double m1 = sparsity_metric(lat, locs, 0.25, 1);
    const double m3 = sparsity_metric(lat, locs, 0.25, 3);
    EXPECT_LT(m3, m1);
    double prev = INFINITY;
    for (std::size_t M = 1; M + 1 < locs.size(); ++M) {
        const double m = sparsity_metric(lat, locs, M);
        EXPECT_LT(m, prev);
        prev = m;
    }
}

TEST(Sparsity, TwoLocations) {
    const Lattice lat(2);
    const std::vector<Point> two{Point{0}, Point{5}};
    EXPECT_DOUBLE_EQ(sparsity_metric(lat, two, 0.5, 1), std::pow(8.0, -0.5));
    EXPECT_THROW(sparsity_metric(lat, two, 0.5, 2), InvalidArgument);
    EXPECT_THROW(sparsity_metric(lat, two, 1.5, 1), InvalidArgument);
}

TEST(Sparsity, DenseLocationsDoNotThin) {
    const Lattice lat(2);
    std::vector<Point> dense;
    for (Index i = 0; i <= 1024; ++i) dense.push_back(Point{i});
    for (std::size_t M : {1u, 100u, 500u, 900u}) EXPECT_GT(sparsity_metric(lat, dense, 1.0, M), 1.0) << M;
}

TEST(EssentialSpectrum, DegenerateRangeCollapses) {
    const LatticeResolvent R(dyson());
    for (double sigma : {0.3, 1.0, 2.5}) {
        const auto ess = essential_spectrum_sparse(R, geometric_config(4, 1 << 20, sigma, sigma), 4);
        RootSearchOptions opt;
        opt.k_max = 4;
        const auto rep = rank_one_roots(R, sigma, opt);
        for (const auto& iv : ess.intervals) {
            if (iv.gap == 0) {
                EXPECT_NEAR(iv.lo, rep.of_kind(RootKind::NegativeRoot)[0].value, 1e-10);
                EXPECT_NEAR(iv.hi, iv.lo, 1e-10);
                continue;
            }
            EXPECT_NEAR(iv.lo, rep.in_gap(iv.gap)[0].value, 1e-10);
            EXPECT_NEAR(iv.hi, rep.in_gap(iv.gap)[0].value, 1e-10);
        }
    }
}

TEST(EssentialSpectrum, CertifiedEndpoints) {
    const LatticeResolvent R(dyson());
    const auto ess = essential_spectrum_sparse(R, geometric_config(4, 1 << 20), 5);
    ASSERT_EQ(ess.intervals.size(), 6u);
    const auto& g1 = ess.intervals[0];
    EXPECT_EQ(g1.gap, 1);
    EXPECT_GT(g1.lo, 0.5);
    EXPECT_LT(g1.hi, 1.0);
    EXPECT_LT(g1.lo, g1.hi);
    for (const auto& iv : ess.intervals) {
        EXPECT_LT(std::abs(R(iv.lo, Point{0}, Point{0}) - 1.0 / 2.0), 1e-10);
        if (!iv.clipped_at_zero) {
            EXPECT_LT(std::abs(R(iv.hi, Point{0}, Point{0}) - 1.0 / 0.5), 1e-10);
        }
        EXPECT_LT(iv.residual_lo, 1e-10);
        EXPECT_LT(iv.residual_hi, 1e-10);
    }
    EXPECT_EQ(ess.inherited.size(), 6u);
    EXPECT_EQ(ess.inherited.back(), 0.0);
}

TEST(EssentialSpectrum, TransientNegativeIntervalClipped) {
    // R(0) = 1.707..: between 1/high = 0.5 and 1/low = 2, so I_- ends at 0
    const LatticeResolvent R(HierarchicalLaplacian(2, MultiplierSpec::power_law(0.5)));
    const auto ess = essential_spectrum_sparse(R, geometric_config(4, 1 << 20), 2);
    const auto& neg = ess.intervals.back();
    EXPECT_EQ(neg.gap, 0);
    EXPECT_TRUE(neg.clipped_at_zero);
    EXPECT_LT(neg.lo, 0.0);
    EXPECT_EQ(neg.hi, 0.0);
    // narrow range below the threshold: no negative interval at all
    const auto none = essential_spectrum_sparse(R, geometric_config(4, 1 << 20, 0.2, 0.4), 2);
    for (const auto& iv : none.intervals) EXPECT_NE(iv.gap, 0);
}

TEST(Sampling, DeterministicAndSupported) {
    const SparseConfig cfg = geometric_config(1, Index(1) << 40, 0.7, 1.3);
    const Potential a = sample_potential(cfg, 123, 4), b = sample_potential(cfg, 123, 4);
    const Potential c = sample_potential(cfg, 123, 5);
    ASSERT_EQ(a.size(), cfg.locations.size());
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].sigma, b[i].sigma);
        EXPECT_EQ(a[i].location, cfg.locations[i]);
        EXPECT_GE(a[i].sigma, 0.7);
        EXPECT_LE(a[i].sigma, 1.3);
        differs |= a[i].sigma != c[i].sigma;
    }
    EXPECT_TRUE(differs);
    // per-location streams: dropping locations does not change the others
    SparseConfig head = cfg;
    head.locations.resize(5);
    const Potential h = sample_potential(head, 123, 4);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(h[i].sigma, a[i].sigma);
}

TEST(Sampling, UniformHistogram) {
    const SparseConfig cfg = geometric_config(1, 2, 0.5, 2.0);
    std::vector<double> draws;
    for (std::uint64_t t = 0; t < 10000; ++t) draws.push_back(sample_potential(cfg, 9, t)[0].sigma);
    EXPECT_LT(stats::ks_distance(draws, [&](double s) { return cfg.cdf(s); }), 0.02);
}

TEST(Sampling, BinnedHistogram) {
    SparseConfig cfg = geometric_config(1, 2, 1.0, 3.0);
    cfg.density.kind = BinnedDensity{{1.0, 3.0, 0.0, 2.0}};
    std::vector<double> draws;
    for (std::uint64_t t = 0; t < 10000; ++t) draws.push_back(sample_potential(cfg, 31, t)[0].sigma);
    EXPECT_LT(stats::ks_distance(draws, [&](double s) { return cfg.cdf(s); }), 0.02);
    // the empty bin [2, 2.5) receives nothing
    EXPECT_EQ(std::count_if(draws.begin(), draws.end(), [](double s) { return s > 2.0 + 1e-12 && s < 2.5 - 1e-12; }), 0);
    EXPECT_NEAR(cfg.cdf(2.0), 4.0 / 6.0, 1e-15);
    cfg.density.kind = BinnedDensity{{0.0, 0.0}};
    EXPECT_THROW(cfg.validate(), InvalidArgument);
}

TEST(Sampling, ConfigValidation) {
    SparseConfig cfg;
    cfg.locations = {Point{4}, Point{2}};
    EXPECT_THROW(cfg.validate(), InvalidArgument);
    cfg.locations = {Point{2}, Point{4}};
    cfg.low = 0.0;
    EXPECT_THROW(cfg.validate(), InvalidArgument);
    cfg.low = 3.0;
    EXPECT_THROW(cfg.validate(), InvalidArgument);
}

class FractionalMoment : public ::testing::Test {
protected:
    LatticeResolvent R{dyson()};
    SparseConfig cfg = geometric_config(4, Index(1) << 44);
    double tau = 0.0;
    double gap_width = dyson().lambda(1) - dyson().lambda(2);

    void SetUp() override {
        const auto iv = essential_spectrum_sparse(R, cfg, 1).intervals[0];
        tau = 0.5 * (iv.lo + iv.hi);
    }
};

TEST_F(FractionalMoment, DecaysWithDistance) {
    const auto est = fractional_moment_estimate(R, cfg, 0.3, tau, 1e-3 * gap_width, Point{0}, 300, 42);
    EXPECT_EQ(est.discarded, 0);
    EXPECT_EQ(est.samples.size(), 300u);
    for (std::size_t j = 1; j < est.per_location.size(); ++j)
        EXPECT_LT(est.per_location[j].mean, est.per_location[j - 1].mean);
    const auto slope = moment_decay_slope(est, 500, 0.95, 3);
    EXPECT_LE(slope.hi, -0.8 * 0.3);
}

TEST_F(FractionalMoment, StableAsEpsilonShrinks) {
    std::vector<MomentEstimate> runs;
    for (double rel : {1e-3, 1e-4, 1e-5})
        runs.push_back(fractional_moment_estimate(R, cfg, 0.3, tau, rel * gap_width, Point{0}, 300, 42));
    for (std::size_t r = 1; r < runs.size(); ++r)
        for (std::size_t j = 0; j < cfg.locations.size(); ++j) {
            const auto& a = runs[r - 1].per_location[j];
            const auto& b = runs[r].per_location[j];
            EXPECT_LT(std::abs(a.mean - b.mean), 3.0 * std::max(a.std_error, b.std_error)) << r << " " << j;
        }
}

TEST_F(FractionalMoment, ZeroExponentLimit) {
    const auto est = fractional_moment_estimate(R, cfg, 1e-6, tau, 1e-3 * gap_width, Point{0}, 100, 42);
    for (const auto& m : est.per_location) {
        EXPECT_TRUE(std::isfinite(m.mean));
        EXPECT_NEAR(m.mean, 1.0, 1e-4);
    }
}

TEST_F(FractionalMoment, IndependentOfThreadCount) {
    MomentOptions one, many;
    many.threads = 3;
    const auto a = fractional_moment_estimate(R, cfg, 0.25, tau, 1e-3, Point{7}, 40, 5, one);
    const auto b = fractional_moment_estimate(R, cfg, 0.25, tau, 1e-3, Point{7}, 40, 5, many);
    ASSERT_EQ(a.samples, b.samples);
    for (std::size_t j = 0; j < a.per_location.size(); ++j) EXPECT_EQ(a.per_location[j].mean, b.per_location[j].mean);
}

TEST_F(FractionalMoment, RejectsBadArguments) {
    EXPECT_THROW(fractional_moment_estimate(R, cfg, 0.5, tau, 1e-3, Point{0}, 10, 1), InvalidArgument);
    EXPECT_THROW(fractional_moment_estimate(R, cfg, 0.3, tau, 0.0, Point{0}, 10, 1), InvalidArgument);
    EXPECT_THROW(fractional_moment_estimate(R, cfg, 0.3, tau, 1e-3, Point{0}, 0, 1), InvalidArgument);
}

TEST(Localization, FreeEigenfunctionsAreLocalised) {
    const LatticeConfig cfg{2, 8, MultiplierSpec::power_law(1.0)};
    for (Rank r = 0; r < 8; ++r) {
        const Eigen::VectorXd f = eigenfunction_vector(cfg, BallAddress{r, 0});
        // f_B lives on the parent ball B', so its IPR is at least 1/m(B')
        EXPECT_GE(inverse_participation_ratio(f), 1.0 / static_cast<double>(ipow(2, r + 1)) - 1e-15);
    }
}

TEST(Localization, DecaySlopeOfKnownProfile) {
    const Lattice lat(2);
    Eigen::VectorXd psi(256);
    for (Index x = 0; x < 256; ++x) psi(static_cast<Eigen::Index>(x)) = std::pow(1.0 + static_cast<double>(lat.distance(Point{x}, Point{3})), -2.0);
    EXPECT_NEAR(ultrametric_decay_slope(lat, psi), -2.0, 1e-12);
    EXPECT_NEAR(inverse_participation_ratio(Eigen::VectorXd::Unit(10, 4)), 1.0, 1e-15);
}

TEST(Localization, SmallDiagnosticsRun) {
    const LatticeConfig lat{2, 8, MultiplierSpec::power_law(1.0)};
    LocalizationOptions opt;
    opt.threads = 2;
    const auto rep = localization_diagnostics(lat, geometric_config(4, 1 << 20), 10, 11, opt);
    EXPECT_GT(rep.in_gap, 0);
    EXPECT_GE(rep.window_fraction(), 0.99);
    EXPECT_DOUBLE_EQ(rep.fatten, std::pow(0.5, 8) + 1e-3);
    const auto med = median_decay_slope(rep);
    EXPECT_LT(med.hi, -0.1);
    // same seed with a different worker count gives the same report
    opt.threads = 1;
    const auto again = localization_diagnostics(lat, geometric_config(4, 1 << 20), 10, 11, opt);
    EXPECT_EQ(again.in_window, rep.in_window);
    ASSERT_EQ(again.records.size(), rep.records.size());
    for (std::size_t i = 0; i < rep.records.size(); ++i) EXPECT_EQ(again.records[i].decay_slope, rep.records[i].decay_slope);
}
