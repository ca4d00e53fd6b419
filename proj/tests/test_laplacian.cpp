#include <gtest/gtest.h>

#include <hierspec/laplacian.hpp>
#include <hierspec/oracle.hpp>

#include <algorithm>
#include <cmath>

using namespace hierspec;

namespace {

HierarchicalLaplacian power_law(Index p, double alpha) { return {p, MultiplierSpec::power_law(alpha)}; }

// Independent oracle for the diagonal heat kernel: plain summation of
// (p-1) p^-k exp(-kappa^(k-1) t) until the terms vanish in double precision
// plus the exact mass of the remaining atoms.
double heat_diag_direct(Index p, double alpha, double t) {
    const double pd = static_cast<double>(p), kappa = std::pow(pd, -alpha);
    double s = 0.0;
    int k = 1;
    for (; k < 3000; ++k) {
        const double w = (pd - 1.0) * std::pow(pd, -k);
        if (w < 1e-300) break;
        s += w * std::exp(-std::pow(kappa, k - 1) * t);
    }
    return s;
}

std::vector<double> sorted_eigenvalues(const Eigen::MatrixXd& m) {
    const Eigen::VectorXd ev = oracle::dense_eigenvalues(m);
    return {ev.data(), ev.data() + ev.size()};
}

} // namespace

TEST(Laplacian, LambdaOfBall) {
    EXPECT_DOUBLE_EQ(power_law(2, 1.0).lambda(1), 1.0);
    EXPECT_DOUBLE_EQ(power_law(2, 1.0).lambda(3), 0.25);
    EXPECT_DOUBLE_EQ(power_law(2, 0.5).lambda(2), 0.7071067811865476);
    EXPECT_DOUBLE_EQ(power_law(2, 0.5).lambda(0), 1.0);
}

TEST(Laplacian, Coefficient) {
    const auto L = power_law(2, 1.0);
    EXPECT_DOUBLE_EQ(L.coefficient(1), 0.5);
    EXPECT_DOUBLE_EQ(L.coefficient(2), 0.25);
    const auto L3 = power_law(3, 0.7);
    for (Rank r = 0; r < 12; ++r) {
        EXPECT_EQ(L3.coefficient(BallAddress{r, 5}), L3.lambda(r) - L3.lambda(r + 1));
        if (r >= 1) {
            EXPECT_GT(L3.coefficient(r), 0.0);
        }
    }
}

TEST(Laplacian, JumpKernelClosedForm) {
    const auto L = power_law(2, 1.0);
    // (kappa^-1 - 1)/(1 - kappa/p) d^-2 with kappa = 1/2: (4/3)/4 and (4/3)/16
    EXPECT_NEAR(jump_kernel(L, Point{0}, Point{1}), 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(jump_kernel(L, Point{0}, Point{2}), 1.0 / 12.0, 1e-15);
    EXPECT_THROW(jump_kernel(L, Point{4}, Point{4}), InvalidArgument);
}

TEST(Laplacian, JumpKernelMatchesGeometricTail) {
    for (auto [p, alpha] : {std::pair<Index, double>{2, 1.0}, {2, 0.5}, {3, 1.3}}) {
        const auto L = power_law(p, alpha);
        const Index size = ipow(p, p == 2 ? 7 : 4);
        for (Index x = 0; x < size; ++x)
            for (Index y = x + 1; y < size; ++y) {
                const Rank m = L.lattice().common_ball(Point{x}, Point{y}).rank;
                double direct = 0.0;  // -sum_{r>=m} (1-kappa) kappa^(r-1) p^-r, summed out to negligible terms
                for (Rank r = m; r < m + 400; ++r)
                    direct -= (L.lambda(r) - L.lambda(r + 1)) * std::pow(static_cast<double>(p), -r);
                const double j = jump_kernel(L, Point{x}, Point{y});
                ASSERT_NEAR(direct, -j, 1e-14 * std::max(1.0, j));
                ASSERT_NEAR(offdiagonal_element(L, m), -j, 1e-14 * std::max(1.0, j));
            }
    }
}

TEST(Laplacian, SpectrumOfL) {
    EXPECT_EQ(spectrum_of_L(power_law(2, 1.0), 4), (std::vector<double>{1.0, 0.5, 0.25, 0.125}));
    const auto s = spectrum_of_L(power_law(3, 2.0), 2);
    EXPECT_DOUBLE_EQ(s[0], 1.0);
    EXPECT_DOUBLE_EQ(s[1], 1.0 / 9.0);
    const auto long_run = spectrum_of_L(power_law(2, 0.3), 60);
    EXPECT_TRUE(std::is_sorted(long_run.rbegin(), long_run.rend()));
    EXPECT_LT(long_run.back(), 1e-5);
    EXPECT_THROW(spectrum_of_L(power_law(2, 1.0), 0), InvalidArgument);
}

TEST(Laplacian, SpectralFunction) {
    const auto L = power_law(2, 1.0);
    EXPECT_DOUBLE_EQ(spectral_function(L, 1.0), 1.0);
    EXPECT_DOUBLE_EQ(spectral_function(L, 0.5), 0.5);
    EXPECT_DOUBLE_EQ(spectral_function(L, 0.3), 0.5);
    EXPECT_DOUBLE_EQ(spectral_function(L, 0.25), 0.25);
    EXPECT_DOUBLE_EQ(spectral_function(L, 5.0), 1.0);
    EXPECT_THROW(spectral_function(L, 0.0), InvalidArgument);
}

TEST(Laplacian, AssembleDenseDepthOne) {
    const DenseOperator op = assemble_dense({2, 1, MultiplierSpec::power_law(1.0)});
    ASSERT_EQ(op.entries.rows(), 2);
    EXPECT_NEAR(op.entries(0, 0), 0.25, 1e-15);
    EXPECT_NEAR(op.entries(0, 1), -0.25, 1e-15);
    EXPECT_NEAR(op.entries(1, 0), -0.25, 1e-15);
    EXPECT_NEAR(op.entries(1, 1), 0.25, 1e-15);
    EXPECT_DOUBLE_EQ(op.truncation_shift, 0.5);
    const auto ev = sorted_eigenvalues(op.entries);
    EXPECT_NEAR(ev[0], 0.0, 1e-15);
    EXPECT_NEAR(ev[1], 0.5, 1e-15);
}

TEST(Laplacian, AssembleDenseDepthThreeSpectrum) {
    const DenseOperator op = assemble_dense({2, 3, MultiplierSpec::power_law(1.0)});
    const auto ev = sorted_eigenvalues(op.entries);
    const std::vector<double> expected{0.0,         0.25 - 0.125, 0.5 - 0.125, 0.5 - 0.125,
                                       1.0 - 0.125, 1.0 - 0.125,  1.0 - 0.125, 1.0 - 0.125};
    ASSERT_EQ(ev.size(), expected.size());
    for (std::size_t i = 0; i < ev.size(); ++i) EXPECT_NEAR(ev[i], expected[i], 1e-13);
}

TEST(Laplacian, DenseOperatorIsMarkovGenerator) {
    for (auto cfg : {LatticeConfig{2, 6, MultiplierSpec::power_law(0.8)}, LatticeConfig{3, 4, MultiplierSpec::power_law(1.4)},
                     LatticeConfig{2, 5, MultiplierSpec::tabulated({1.0, 0.9, 0.5, 0.3, 0.2})}}) {
        const DenseOperator op = assemble_dense(cfg);
        EXPECT_LT(op.entries.rowwise().sum().cwiseAbs().maxCoeff(), 1e-14);
        EXPECT_EQ((op.entries - op.entries.transpose()).cwiseAbs().maxCoeff(), 0.0);
        for (Eigen::Index i = 0; i < op.entries.rows(); ++i)
            for (Eigen::Index j = 0; j < op.entries.cols(); ++j)
                if (i != j) {
                    ASSERT_LE(op.entries(i, j), 0.0);
                }
    }
}

TEST(Laplacian, EigenfunctionsOfTruncation) {
    for (auto cfg : {LatticeConfig{2, 6, MultiplierSpec::power_law(1.0)}, LatticeConfig{3, 4, MultiplierSpec::power_law(0.6)}}) {
        const HierarchicalLaplacian L(cfg);
        const DenseOperator op = assemble_dense(cfg);
        const Index size = cfg.block_size();
        for (Rank r = 0; r < cfg.depth; ++r)
            for (Index k = 0; k < size / ipow(cfg.p, r); k += 3) {
                const BallAddress b{r, k};
                const Eigen::VectorXd f = eigenfunction_vector(cfg, b);
                const EigenPair pair = eigen_pair(L, b);
                EXPECT_NEAR(f.sum(), 0.0, 1e-14);
                // ||f_B||^2 = 1/m(B) - 1/m(B')
                const double expect_norm = 1.0 / static_cast<double>(ipow(cfg.p, r)) - 1.0 / static_cast<double>(ipow(cfg.p, r + 1));
                EXPECT_NEAR(f.squaredNorm(), expect_norm, 1e-14);
                const double mu = pair.eigenvalue - op.truncation_shift;
                EXPECT_LT((op.entries * f - mu * f).norm(), 1e-12);
                EXPECT_LT((apply_truncated(cfg, f) - mu * f).norm(), 1e-12);
            }
    }
}

TEST(Laplacian, TabulatedMultiplierMatchesPowerLaw) {
    const auto pl = power_law(2, 0.75);
    std::vector<double> table;
    for (Rank r = 0; r <= 6; ++r) table.push_back(pl.lambda(r));
    const HierarchicalLaplacian tab(2, MultiplierSpec::tabulated(table));
    for (Rank r = 0; r < 30; ++r) EXPECT_NEAR(tab.lambda(r), pl.lambda(r), 1e-15);
    EXPECT_EQ(tab.transient(), pl.transient());
    EXPECT_THROW(HierarchicalLaplacian(2, MultiplierSpec::tabulated({1.0, 0.5, 0.6})), InvalidArgument);
    EXPECT_THROW(HierarchicalLaplacian(2, MultiplierSpec::tabulated({1.0, 0.5})), InvalidArgument);
    EXPECT_THROW(HierarchicalLaplacian(2, MultiplierSpec::power_law(0.0)), InvalidArgument);
    EXPECT_THROW((LatticeConfig{1, 3, MultiplierSpec::power_law(1.0)}.block_size()), InvalidArgument);
    EXPECT_THROW((LatticeConfig{2, 70, MultiplierSpec::power_law(1.0)}.block_size()), InvalidArgument);
}

TEST(HeatKernel, TotalMassAtSmallTime) {
    const auto L = power_law(2, 1.0);
    EXPECT_NEAR(heat_kernel_diag(L, 1e-14).value, 1.0, 1e-13);
}

TEST(HeatKernel, DiagonalAgreesWithDirectSummation) {
    for (double t : {1e-3, 0.1, 1.0, 7.5, 100.0, 1e3}) {
        const auto v = heat_kernel_diag(power_law(2, 1.0), t);
        EXPECT_NEAR(v.value, heat_diag_direct(2, 1.0, t), 1e-13);
        EXPECT_LE(v.tail_bound, 1e-13);
    }
}

TEST(HeatKernel, FunctionalEquation) {
    for (auto [p, alpha] : {std::pair<Index, double>{2, 1.0}, {3, 0.5}, {2, 1.7}}) {
        const double pd = static_cast<double>(p);
        const double kappa = std::pow(pd, -alpha);
        for (int i = 0; i <= 30; ++i) {
            const double t = std::pow(10.0, -3.0 + 6.0 * i / 30.0);
            // oracle: direct summation at both arguments
            const double lhs = heat_diag_direct(p, alpha, t / kappa);
            const double rhs = heat_diag_direct(p, alpha, t) / pd + (1.0 - 1.0 / pd) * std::exp(-t / kappa);
            ASSERT_NEAR(lhs, rhs, 1e-12);
            const auto L = power_law(p, alpha);
            const double impl_lhs = heat_kernel_diag(L, t / kappa).value;
            const double impl_rhs = heat_kernel_diag(L, t).value / pd + (1.0 - 1.0 / pd) * std::exp(-t / kappa);
            ASSERT_NEAR(impl_lhs, impl_rhs, 1e-12);
            ASSERT_NEAR(impl_lhs, lhs, 1e-12);
        }
    }
}

TEST(HeatKernel, NotRegularlyVarying) {
    // t p(t) is log-periodic with period ln 2 for p = 2, alpha = 1, but not constant
    const auto L = power_law(2, 1.0);
    double lo = 1e9, hi = -1e9;
    for (int j = 0; j <= 16; ++j) {
        const double t = std::pow(2.0, 12.0 + j / 16.0);
        const double v = t * heat_kernel_diag(L, t).value;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    EXPECT_GT(hi / lo - 1.0, 1e-6);
    const double t = 3000.0;
    EXPECT_NEAR(t * heat_kernel_diag(L, t).value, 2 * t * heat_kernel_diag(L, 2 * t).value, 1e-9);
    EXPECT_GT(std::abs(t * heat_kernel_diag(L, t).value - std::sqrt(2.0) * t * heat_kernel_diag(L, std::sqrt(2.0) * t).value), 1e-7);
}

TEST(HeatKernel, SymmetricPositiveAndConsistent) {
    const auto L = power_law(3, 0.8);
    for (double t : {0.01, 1.0, 50.0}) {
        EXPECT_DOUBLE_EQ(heat_kernel(L, t, Point{4}, Point{4}).value, heat_kernel_diag(L, t).value);
        for (Index x : {0u, 1u, 5u, 26u, 100u})
            for (Index y : {2u, 9u, 81u, 700u}) {
                const double a = heat_kernel(L, t, Point{x}, Point{y}).value;
                EXPECT_DOUBLE_EQ(a, heat_kernel(L, t, Point{y}, Point{x}).value);
                EXPECT_GT(a, 0.0);
            }
    }
}

TEST(HeatKernel, SmallTimeMatchesJumpKernel) {
    const auto L = power_law(2, 1.0);
    for (double t : {1e-3, 1e-4, 1e-5}) {
        const auto v = heat_kernel(L, t, Point{0}, Point{1});
        EXPECT_NEAR(v.value / t, jump_kernel(L, Point{0}, Point{1}), 2.0 * t + v.tail_bound / t);
    }
}

TEST(HeatKernel, TwoSidedBoundWindow) {
    for (double alpha : {0.5, 1.0, 1.5}) {
        const auto L = power_law(2, alpha);
        double lo = 1e300, hi = 0.0;
        for (int i = 0; i <= 40; ++i) {
            const double t = std::pow(10.0, -2.0 + 4.0 * i / 40.0);
            for (Rank m = 1; m <= 8; ++m) {
                const Point x{0}, y{ipow(2, m - 1)};
                const double d = static_cast<double>(L.lattice().distance(x, y));
                const double ratio = heat_kernel(L, t, x, y).value * std::pow(std::pow(t, 1.0 / alpha) + d, 1.0 + alpha) / t;
                lo = std::min(lo, ratio);
                hi = std::max(hi, ratio);
            }
        }
        EXPECT_LT(hi / lo, 50.0) << "alpha=" << alpha;
    }
}

TEST(HeatKernel, TruncatedSemigroupAgainstDenseExponential) {
    const LatticeConfig cfg{2, 6, MultiplierSpec::power_law(1.0)};
    const DenseOperator op = assemble_dense(cfg);
    const auto spec = oracle::dense_eigensolve(op.entries);
    const Index size = cfg.block_size();
    const double t = 0.7, s = 1.9;
    const Eigen::MatrixXd pt = oracle::dense_heat_semigroup(spec, t);
    const Eigen::MatrixXd pts = oracle::dense_heat_semigroup(spec, t + s);
    for (Index x = 0; x < size; x += 5)
        for (Index y = 0; y < size; y += 3) {
            EXPECT_NEAR(heat_kernel_truncated(cfg, t, Point{x}, Point{y}), pt(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)), 1e-12);
            double conv = 0.0;
            for (Index z = 0; z < size; ++z)
                conv += heat_kernel_truncated(cfg, t, Point{x}, Point{z}) * heat_kernel_truncated(cfg, s, Point{z}, Point{y});
            EXPECT_NEAR(conv, pts(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)), 1e-10);
        }
    for (Index x = 0; x < size; x += 7) {
        double mass = 0.0;
        for (Index y = 0; y < size; ++y) mass += heat_kernel_truncated(cfg, t, Point{x}, Point{y});
        EXPECT_NEAR(mass, 1.0, 1e-12);
    }
}
