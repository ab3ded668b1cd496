#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssdm/geometry.hpp"

namespace ssdm {

template <typename Real>
using ComplexMatrix = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, Eigen::Dynamic>;

namespace detail {
template <typename Real>
Real hermiticity_defect(const ComplexMatrix<Real>& m) {
    return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

inline bool is_power_of_two(Index d) { return d > 0 && (d & (d - 1)) == 0; }

inline int log2_exact(Index d) {
    if (!is_power_of_two(d))
        throw std::invalid_argument("dimension " + std::to_string(d) + " is not a power of two");
    int n = 0;
    while ((Index(1) << n) < d) ++n;
    return n;
}
}  // namespace detail

template <typename Real>
class BasicHermitianOperator {
public:
    using Matrix = ComplexMatrix<Real>;

    explicit BasicHermitianOperator(Matrix entries, Real tol = Real(1e-12))
        : m_(std::move(entries)) {
        if (m_.rows() != m_.cols()) throw DimensionMismatch(m_.rows(), m_.cols());
        if (detail::hermiticity_defect(m_) >= tol)
            throw std::invalid_argument("HermitianOperator: matrix is not Hermitian");
    }

    const Matrix& entries() const noexcept { return m_; }
    Index dim() const noexcept { return m_.rows(); }

private:
    Matrix m_;
};

/// Unit-trace Hermitian matrix. Positivity is not re-verified on construction.
template <typename Real>
class BasicDensityMatrix {
public:
    using Matrix = ComplexMatrix<Real>;

    explicit BasicDensityMatrix(Matrix entries) : m_(std::move(entries)) {
        if (m_.rows() != m_.cols()) throw DimensionMismatch(m_.rows(), m_.cols());
        if (detail::hermiticity_defect(m_) >= Real(1e-10))
            throw std::invalid_argument("DensityMatrix: matrix is not Hermitian");
        if (std::abs(m_.trace() - std::complex<Real>(1)) > Real(1e-10))
            throw std::invalid_argument("DensityMatrix: trace differs from 1");
    }

    const Matrix& entries() const noexcept { return m_; }
    Index dim() const noexcept { return m_.rows(); }

private:
    Matrix m_;
};

using HermitianOperator = BasicHermitianOperator<double>;
using DensityMatrix = BasicDensityMatrix<double>;

/// Single-qubit Paulis X_i, Y_i, Z_i on n qubits, in that order per qubit.
/// Qubit 0 is the most significant bit of the basis index.
template <typename Real = double>
std::vector<BasicHermitianOperator<Real>> pauli_observables(int n_qubits) {
    if (n_qubits < 1) throw std::invalid_argument("pauli_observables: need n >= 1");
    using C = std::complex<Real>;
    const Index d = Index(1) << n_qubits;
    std::vector<BasicHermitianOperator<Real>> ops;
    ops.reserve(static_cast<std::size_t>(3 * n_qubits));
    for (int q = 0; q < n_qubits; ++q) {
        const Index mask = Index(1) << (n_qubits - 1 - q);
        ComplexMatrix<Real> x = ComplexMatrix<Real>::Zero(d, d);
        ComplexMatrix<Real> y = ComplexMatrix<Real>::Zero(d, d);
        ComplexMatrix<Real> z = ComplexMatrix<Real>::Zero(d, d);
        for (Index b = 0; b < d; ++b) {
            const bool one = (b & mask) != 0;
            x(b ^ mask, b) = C(1);
            y(b ^ mask, b) = one ? C(0, -1) : C(0, 1);
            z(b, b) = one ? C(-1) : C(1);
        }
        ops.emplace_back(std::move(x));
        ops.emplace_back(std::move(y));
        ops.emplace_back(std::move(z));
    }
    return ops;
}

/// Generalized Gell-Mann matrices: symmetric, antisymmetric, then diagonal
/// generators, with Tr(G_j G_k) = 2 delta_jk.
template <typename Real = double>
std::vector<BasicHermitianOperator<Real>> gell_mann_basis(Index d) {
    if (d < 2) throw std::invalid_argument("gell_mann_basis: need d >= 2");
    using C = std::complex<Real>;
    std::vector<BasicHermitianOperator<Real>> out;
    out.reserve(static_cast<std::size_t>(d * d - 1));
    for (Index j = 0; j < d; ++j)
        for (Index k = j + 1; k < d; ++k) {
            ComplexMatrix<Real> s = ComplexMatrix<Real>::Zero(d, d);
            s(j, k) = s(k, j) = C(1);
            out.emplace_back(std::move(s));
        }
    for (Index j = 0; j < d; ++j)
        for (Index k = j + 1; k < d; ++k) {
            ComplexMatrix<Real> a = ComplexMatrix<Real>::Zero(d, d);
            a(j, k) = C(0, -1);
            a(k, j) = C(0, 1);
            out.emplace_back(std::move(a));
        }
    for (Index l = 1; l < d; ++l) {
        ComplexMatrix<Real> g = ComplexMatrix<Real>::Zero(d, d);
        const Real scale = std::sqrt(Real(2) / Real(l * (l + 1)));
        for (Index m = 0; m < l; ++m) g(m, m) = C(scale);
        g(l, l) = C(-Real(l) * scale);
        out.emplace_back(std::move(g));
    }
    return out;
}

/// <psi|O|psi>.
template <typename Real>
Real expectation(const BasicHermitianOperator<Real>& op, const BasicPureState<Real>& psi) {
    detail::require_same_dim<Real>(op.dim(), psi.dim());
    const auto& v = psi.amplitudes();
    const std::complex<Real> value = v.dot(op.entries() * v);
    const Real scale = std::max(Real(1), op.entries().cwiseAbs().maxCoeff() * Real(op.dim()));
    if (std::abs(value.imag()) >= Real(1e-12) * scale)
        throw std::logic_error("expectation: imaginary residue " + std::to_string(value.imag()));
    return value.real();
}

/// Reduced state of the first n_keep qubits (most significant bits).
template <typename Real>
BasicDensityMatrix<Real> partial_trace_first(const BasicPureState<Real>& psi, int n_keep,
                                             int n_total) {
    if (psi.dim() != (Index(1) << n_total)) {
        detail::log2_exact(psi.dim());
        throw DimensionMismatch(psi.dim(), Index(1) << n_total);
    }
    if (n_keep < 1 || n_keep >= n_total)
        throw std::invalid_argument("partial_trace_first: need 1 <= n_keep < n_total");
    const Index rows = Index(1) << n_keep;
    const Index cols = Index(1) << (n_total - n_keep);
    using RowMajor = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::Map<const RowMajor> m(psi.amplitudes().data(), rows, cols);
    ComplexMatrix<Real> rho = m * m.adjoint();
    return BasicDensityMatrix<Real>(std::move(rho));
}

/// Eigenvalues (ascending) of a Hermitian matrix.
///
/// H = A + iB is embedded as the real symmetric [[A, -B], [B, A]], whose
/// spectrum is that of H with every eigenvalue doubled; cyclic Jacobi sweeps
/// diagonalize the embedding and each pair is reported once.
template <typename Real>
Eigen::Matrix<Real, Eigen::Dynamic, 1> hermitian_eigenvalues(const ComplexMatrix<Real>& h) {
    using RealMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
    if (h.rows() != h.cols()) throw DimensionMismatch(h.rows(), h.cols());
    const Index m = h.rows();
    const Real scale = std::max(Real(1), h.cwiseAbs().maxCoeff());
    if (detail::hermiticity_defect(h) >= Real(1e-10) * scale)
        throw std::invalid_argument("hermitian_eigenvalues: input is not Hermitian");

    const Index n = 2 * m;
    RealMatrix s(n, n);
    s.topLeftCorner(m, m) = h.real();
    s.topRightCorner(m, m) = -h.imag();
    s.bottomLeftCorner(m, m) = h.imag();
    s.bottomRightCorner(m, m) = h.real();
    s = (s + s.transpose()) * Real(0.5);

    const Real threshold = Real(1e-12) * scale;
    auto max_off_diagonal = [&] {
        Real worst = 0;
        for (Index i = 0; i < n; ++i)
            for (Index j = i + 1; j < n; ++j) worst = std::max(worst, std::abs(s(i, j)));
        return worst;
    };

    constexpr int kMaxSweeps = 100;
    int sweep = 0;
    for (; sweep < kMaxSweeps && max_off_diagonal() >= threshold; ++sweep) {
        for (Index p = 0; p < n - 1; ++p) {
            for (Index q = p + 1; q < n; ++q) {
                const Real apq = s(p, q);
                if (apq == Real(0)) continue;
                const Real theta = (s(q, q) - s(p, p)) / (Real(2) * apq);
                const Real t = (theta >= 0 ? Real(1) : Real(-1)) /
                               (std::abs(theta) + std::sqrt(theta * theta + Real(1)));
                const Real c = Real(1) / std::sqrt(t * t + Real(1));
                const Real sn = t * c;
                for (Index k = 0; k < n; ++k) {
                    const Real skp = s(k, p);
                    const Real skq = s(k, q);
                    s(k, p) = c * skp - sn * skq;
                    s(k, q) = sn * skp + c * skq;
                }
                for (Index k = 0; k < n; ++k) {
                    const Real spk = s(p, k);
                    const Real sqk = s(q, k);
                    s(p, k) = c * spk - sn * sqk;
                    s(q, k) = sn * spk + c * sqk;
                }
                s(p, q) = s(q, p) = Real(0);
            }
        }
    }
    if (max_off_diagonal() >= threshold)
        throw std::runtime_error("hermitian_eigenvalues: Jacobi did not converge in 100 sweeps");

    std::vector<Real> diag(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) diag[static_cast<std::size_t>(i)] = s(i, i);
    std::sort(diag.begin(), diag.end());
    Eigen::Matrix<Real, Eigen::Dynamic, 1> out(m);
    for (Index i = 0; i < m; ++i) {
        const Real a = diag[static_cast<std::size_t>(2 * i)];
        const Real b = diag[static_cast<std::size_t>(2 * i + 1)];
        if (std::abs(a - b) >= Real(1e-9) * scale)
            throw std::runtime_error("hermitian_eigenvalues: embedded spectrum is not paired");
        out(i) = Real(0.5) * (a + b);
    }
    return out;
}

template <typename Real>
Eigen::Matrix<Real, Eigen::Dynamic, 1> hermitian_eigenvalues(const BasicHermitianOperator<Real>& h) {
    return hermitian_eigenvalues<Real>(h.entries());
}

/// -sum lambda ln lambda in nats, eigenvalues clamped to [0, 1].
template <typename Real>
Real von_neumann_entropy(const BasicDensityMatrix<Real>& rho) {
    const auto eig = hermitian_eigenvalues<Real>(rho.entries());
    Real s = 0;
    for (Index i = 0; i < eig.size(); ++i) {
        const Real p = std::clamp(eig(i), Real(0), Real(1));
        if (p > Real(0)) s -= p * std::log(p);
    }
    return s;
}

}  // namespace ssdm
