#pragma once

// Dense reference linear algebra for truncated operators. Every result
// carries its own certificate (residual, orthogonality, backward error).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "errors.hpp"
#include "hierarchy.hpp"

namespace hierspec::oracle {

inline constexpr Eigen::Index kMaxEigensolveSize = 4096;
inline constexpr Eigen::Index kMaxSolveSize = 16384;
inline constexpr double kClusterTolerance = 1e-9;

struct DenseSpectrum {
    Eigen::VectorXd eigenvalues;   // ascending
    Eigen::MatrixXd eigenvectors;  // orthonormal columns
    double residual = 0.0;         // max_i ||A v_i - lambda_i v_i||
    double orthogonality = 0.0;    // max |V^T V - I|
};

namespace detail {

inline void check_symmetric(const Eigen::MatrixXd& a) {
    if (a.rows() != a.cols()) throw SymmetryViolation("dense oracle: matrix is not square");
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw SymmetryViolation("dense oracle: matrix is not symmetric within 1e-12");
}

} // namespace detail

/// Full symmetric eigendecomposition (Householder tridiagonalisation + implicit QR).
inline DenseSpectrum dense_eigensolve(const Eigen::MatrixXd& a) {
    detail::check_symmetric(a);
    const Eigen::Index n = a.rows();
    if (n > kMaxEigensolveSize) throw InvalidArgument("dense_eigensolve: matrix exceeds the size cap");
    DenseSpectrum out;
    if (n == 0) return out;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    if (es.info() != Eigen::Success) throw ConvergenceFailure("dense_eigensolve: QR iteration did not converge");
    out.eigenvalues = es.eigenvalues();
    out.eigenvectors = es.eigenvectors();
    const Eigen::MatrixXd r = a * out.eigenvectors - out.eigenvectors * out.eigenvalues.asDiagonal();
    out.residual = r.colwise().norm().maxCoeff();
    out.orthogonality =
        (out.eigenvectors.transpose() * out.eigenvectors - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
    const double norm = std::max(1.0, out.eigenvalues.cwiseAbs().maxCoeff());
    if (out.residual > 1e-10 * norm || out.orthogonality > 1e-10)
        throw ConvergenceFailure("dense_eigensolve: certificate check failed");
    return out;
}

/// Eigenvalues only, ascending. No eigenvector certificate is available.
inline Eigen::VectorXd dense_eigenvalues(const Eigen::MatrixXd& a) {
    detail::check_symmetric(a);
    const Eigen::Index n = a.rows();
    if (n > kMaxEigensolveSize) throw InvalidArgument("dense_eigenvalues: matrix exceeds the size cap");
    if (n == 0) return {};
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw ConvergenceFailure("dense_eigenvalues: QR iteration did not converge");
    return es.eigenvalues();
}

struct Cluster {
    double value = 0.0;
    int multiplicity = 0;
};

/// Groups a sorted spectrum into clusters separated by more than tol.
inline std::vector<Cluster> cluster_eigenvalues(const Eigen::VectorXd& sorted, double tol = kClusterTolerance) {
    std::vector<Cluster> out;
    for (Eigen::Index i = 0; i < sorted.size();) {
        Eigen::Index j = i;
        double sum = 0.0;
        while (j < sorted.size() && sorted(j) - sorted(j == i ? i : j - 1) <= tol) {
            sum += sorted(j);
            ++j;
        }
        out.push_back({sum / static_cast<double>(j - i), static_cast<int>(j - i)});
        i = j;
    }
    return out;
}

struct ResolventSolution {
    Eigen::VectorXcd u;
    double backward_error = 0.0;
};

/// LU factorisation of A - lambda I, reusable across right-hand sides.
/// Keeps a reference to A for the backward-error certificate; A must outlive the solver.
class DenseResolventSolver {
public:
    DenseResolventSolver(const Eigen::MatrixXd& a, std::complex<double> lambda) : lambda_(lambda), original_(&a) {
        detail::check_symmetric(a);
        n_ = a.rows();
        if (n_ > kMaxSolveSize) throw InvalidArgument("dense_resolvent_solve: matrix exceeds the size cap");
        norm_ = a.cwiseAbs().rowwise().sum().maxCoeff() + std::abs(lambda);
        if (lambda.imag() == 0.0) {
            Eigen::MatrixXd m = a;
            m.diagonal().array() -= lambda.real();
            real_.compute(m);
            check_pivots(real_.matrixLU().diagonal().cwiseAbs());
        } else {
            Eigen::MatrixXcd m = a.cast<std::complex<double>>();
            m.diagonal().array() -= lambda;
            complex_.compute(m);
            check_pivots(complex_.matrixLU().diagonal().cwiseAbs());
        }
    }

    /// Solves (A - lambda I) u = delta_y.
    ResolventSolution solve(Index y) const {
        if (static_cast<Eigen::Index>(y) >= n_) throw InvalidArgument("dense_resolvent_solve: y outside the matrix");
        ResolventSolution out;
        if (lambda_.imag() == 0.0) {
            Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_);
            rhs(static_cast<Eigen::Index>(y)) = 1.0;
            out.u = real_.solve(rhs).cast<std::complex<double>>();
        } else {
            Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(n_);
            rhs(static_cast<Eigen::Index>(y)) = 1.0;
            out.u = complex_.solve(rhs);
        }
        if (!out.u.allFinite()) throw NearSingular("dense_resolvent_solve: non-finite solution");
        Eigen::VectorXcd r = *original_ * out.u.real() + std::complex<double>(0.0, 1.0) * (*original_ * out.u.imag()) -
                             lambda_ * out.u;
        r(static_cast<Eigen::Index>(y)) -= 1.0;
        out.backward_error = r.norm() / (norm_ * out.u.norm() + 1.0);
        if (out.backward_error > 1e-10) throw NearSingular("dense_resolvent_solve: backward error too large");
        return out;
    }

private:
    void check_pivots(const Eigen::VectorXd& pivots) const {
        // a tiny pivot relative to the matrix norm means lambda sits on the spectrum
        if (pivots.size() > 0 && pivots.minCoeff() < 1e-12 * norm_)
            throw NearSingular("dense_resolvent_solve: lambda within 1e-12 of the spectrum");
    }

    std::complex<double> lambda_;
    const Eigen::MatrixXd* original_;
    Eigen::Index n_ = 0;
    double norm_ = 0.0;
    Eigen::PartialPivLU<Eigen::MatrixXd> real_;
    Eigen::PartialPivLU<Eigen::MatrixXcd> complex_;
};

inline ResolventSolution dense_resolvent_solve(const Eigen::MatrixXd& a, std::complex<double> lambda, Index y) {
    return DenseResolventSolver(a, lambda).solve(y);
}

/// exp(-t A) for symmetric A through its eigendecomposition.
inline Eigen::MatrixXd dense_heat_semigroup(const DenseSpectrum& s, double t) {
    const Eigen::VectorXd w = (-t * s.eigenvalues.array()).exp();
    return s.eigenvectors * w.asDiagonal() * s.eigenvectors.transpose();
}

} // namespace hierspec::oracle
