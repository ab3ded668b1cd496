#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssdm/rng.hpp"

namespace ssdm {

using Index = Eigen::Index;

template <typename Real>
using ComplexVector = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, 1>;

class DimensionMismatch : public std::invalid_argument {
public:
    DimensionMismatch(Index lhs, Index rhs)
        : std::invalid_argument("dimension mismatch: " + std::to_string(lhs) +
                                " vs " + std::to_string(rhs)) {}
};

/// Raised when a log map or transport is requested across the cut locus,
/// i.e. between states whose overlap modulus is at most kCutLocusOverlap.
class OrthogonalStates : public std::domain_error {
public:
    explicit OrthogonalStates(double overlap_modulus)
        : std::domain_error("states are (numerically) orthogonal, |overlap| = " +
                            std::to_string(overlap_modulus)),
          overlap_modulus_(overlap_modulus) {}
    double overlap_modulus() const noexcept { return overlap_modulus_; }

private:
    double overlap_modulus_;
};

inline constexpr double kCutLocusOverlap = 1e-9;

/// A point of CP^{d-1}, stored as a unit vector with arbitrary global phase.
template <typename Real>
class BasicPureState {
public:
    using Scalar = std::complex<Real>;
    using Vector = ComplexVector<Real>;

    /// Empty placeholder (dim 0); only meant to be assigned over.
    BasicPureState() = default;

    /// Normalizes the given amplitudes. Zero or non-finite input is rejected.
    explicit BasicPureState(Vector amplitudes) : amps_(std::move(amplitudes)) {
        const Real n = amps_.norm();
        if (!(n > Real(0)) || !std::isfinite(static_cast<double>(n)))
            throw std::invalid_argument("PureState: amplitudes must have finite nonzero norm");
        if (amps_.size() < 2) throw std::invalid_argument("PureState: dimension must be >= 2");
        amps_ /= n;
    }

    /// Keeps the amplitudes bit-for-bit; they must already be unit norm.
    static BasicPureState from_unit(Vector amplitudes, Real tol = Real(1e-12)) {
        if (amplitudes.size() < 2) throw std::invalid_argument("PureState: dimension must be >= 2");
        const Real n = amplitudes.norm();
        if (!(std::abs(n - Real(1)) <= tol))
            throw std::invalid_argument("PureState: amplitudes are not unit norm (|psi| = " +
                                        std::to_string(static_cast<double>(n)) + ")");
        BasicPureState s;
        s.amps_ = std::move(amplitudes);
        return s;
    }

    static BasicPureState basis(Index dim, Index k) {
        Vector v = Vector::Zero(dim);
        v(k) = Scalar(1);
        return from_unit(std::move(v));
    }

    /// Equal-weight superposition of all basis states.
    static BasicPureState uniform(Index dim) {
        return BasicPureState(Vector::Constant(dim, Scalar(1)));
    }

    const Vector& amplitudes() const noexcept { return amps_; }
    Index dim() const noexcept { return amps_.size(); }

    /// Same projective point, different representative.
    BasicPureState with_phase(Real theta) const {
        BasicPureState s;
        s.amps_ = amps_ * std::polar(Real(1), theta);
        return s;
    }

private:
    Vector amps_;
};

/// Horizontal tangent vector at a representative of a point of CP^{d-1}.
template <typename Real>
class BasicTangentVector {
public:
    using State = BasicPureState<Real>;
    using Vector = ComplexVector<Real>;

    /// Empty placeholder (dim 0); only meant to be assigned over.
    BasicTangentVector() = default;

    /// Checks horizontality, <base, components> = 0, relative to |components|.
    BasicTangentVector(State base, Vector components)
        : base_(std::move(base)), comps_(std::move(components)) {
        if (comps_.size() != base_.dim()) throw DimensionMismatch(base_.dim(), comps_.size());
        const Real tol = Real(1e-10) * std::max(Real(1), comps_.norm());
        if (std::abs(base_.amplitudes().dot(comps_)) > tol)
            throw std::invalid_argument("TangentVector: components are not horizontal at base");
    }

    static BasicTangentVector zero(State base) {
        Vector z = Vector::Zero(base.dim());
        return BasicTangentVector(std::move(base), std::move(z), Unchecked{});
    }

    const State& base() const noexcept { return base_; }
    const Vector& components() const noexcept { return comps_; }
    Index dim() const noexcept { return comps_.size(); }

    /// FS norm; equals the Euclidean norm of the horizontal lift.
    Real norm() const { return comps_.norm(); }

    BasicTangentVector operator*(Real s) const { return {base_, comps_ * s, Unchecked{}}; }
    friend BasicTangentVector operator*(Real s, const BasicTangentVector& v) { return v * s; }
    BasicTangentVector operator-() const { return {base_, -comps_, Unchecked{}}; }
    BasicTangentVector operator+(const BasicTangentVector& o) const {
        check_same_dim(o);
        return {base_, comps_ + o.comps_, Unchecked{}};
    }
    BasicTangentVector operator-(const BasicTangentVector& o) const {
        check_same_dim(o);
        return {base_, comps_ - o.comps_, Unchecked{}};
    }

private:
    struct Unchecked {};
    BasicTangentVector(State base, Vector components, Unchecked)
        : base_(std::move(base)), comps_(std::move(components)) {}

    void check_same_dim(const BasicTangentVector& o) const {
        if (o.dim() != dim()) throw DimensionMismatch(dim(), o.dim());
    }

    template <typename R>
    friend BasicTangentVector<R> project_horizontal(const BasicPureState<R>&,
                                                    const ComplexVector<R>&);

    State base_;
    Vector comps_;
};

using PureState = BasicPureState<double>;
using TangentVector = BasicTangentVector<double>;
using Ensemble = std::vector<PureState>;

namespace detail {
template <typename Real>
inline void require_same_dim(Index a, Index b) {
    if (a != b) throw DimensionMismatch(a, b);
}

/// Re<a, b>, the real inner product on C^d viewed as R^{2d}.
template <typename Real>
inline Real real_inner(const ComplexVector<Real>& a, const ComplexVector<Real>& b) {
    return a.dot(b).real();
}
}  // namespace detail

/// <psi, phi>, conjugate-linear in the first argument.
template <typename Real>
std::complex<Real> overlap(const BasicPureState<Real>& psi, const BasicPureState<Real>& phi) {
    detail::require_same_dim<Real>(psi.dim(), phi.dim());
    return psi.amplitudes().dot(phi.amplitudes());
}

/// Geodesic FS distance arccos|<psi, phi>|, in [0, pi/2].
///
/// Evaluated as atan2(|phi - <psi,phi> psi|, |<psi,phi>|), which agrees with
/// the arccos form but stays accurate for nearly coincident states.
template <typename Real>
Real fs_distance(const BasicPureState<Real>& psi, const BasicPureState<Real>& phi) {
    const std::complex<Real> ov = overlap(psi, phi);
    const Real residual = (phi.amplitudes() - ov * psi.amplitudes()).norm();
    return std::atan2(residual, std::abs(ov));
}

/// Representative of phi whose overlap with base is real and positive.
template <typename Real>
BasicPureState<Real> phase_align(const BasicPureState<Real>& base,
                                 const BasicPureState<Real>& phi) {
    const std::complex<Real> ov = overlap(base, phi);
    const Real mod = std::abs(ov);
    if (mod <= Real(kCutLocusOverlap)) throw OrthogonalStates(static_cast<double>(mod));
    return BasicPureState<Real>::from_unit(phi.amplitudes() * (std::conj(ov) / mod),
                                           Real(1e-10));
}

/// Removes the component of ambient along the complex line of base.
template <typename Real>
BasicTangentVector<Real> project_horizontal(const BasicPureState<Real>& base,
                                            const ComplexVector<Real>& ambient) {
    detail::require_same_dim<Real>(base.dim(), ambient.size());
    const auto& b = base.amplitudes();
    ComplexVector<Real> h = ambient - b.dot(ambient) * b;
    return BasicTangentVector<Real>(base, std::move(h),
                                    typename BasicTangentVector<Real>::Unchecked{});
}

/// Same tangent vector expressed at a phase-equivalent representative.
template <typename Real>
BasicTangentVector<Real> rebase(const BasicTangentVector<Real>& v,
                                const BasicPureState<Real>& new_base) {
    const std::complex<Real> ov = overlap(v.base(), new_base);
    const Real mod = std::abs(ov);
    if (std::abs(mod - Real(1)) > Real(1e-9))
        throw std::invalid_argument("rebase: states are not phase-equivalent");
    return project_horizontal(new_base, ComplexVector<Real>(v.components() * (ov / mod)));
}

/// FS exponential map: cos|v| base + sin|v| v/|v|.
template <typename Real>
BasicPureState<Real> exp_map(const BasicPureState<Real>& base, const BasicTangentVector<Real>& v) {
    detail::require_same_dim<Real>(base.dim(), v.dim());
    const Real n = v.norm();
    if (n == Real(0)) return base;
    ComplexVector<Real> out = std::cos(n) * base.amplitudes() + (std::sin(n) / n) * v.components();
    return BasicPureState<Real>(std::move(out));
}

/// FS logarithm map: initial velocity of the geodesic from base to target.
/// Throws OrthogonalStates on the cut locus.
template <typename Real>
BasicTangentVector<Real> log_map(const BasicPureState<Real>& base,
                                 const BasicPureState<Real>& target) {
    const BasicPureState<Real> aligned = phase_align(base, target);
    auto h = project_horizontal(base, aligned.amplitudes());
    const Real s = h.norm();
    if (s == Real(0)) return BasicTangentVector<Real>::zero(base);
    const Real c = overlap(base, aligned).real();
    const Real r = std::atan2(s, c);
    return h * (r / s);
}

/// Parallel transport of w (at base) along the geodesic to target.
///
/// The result is anchored at phase_align(base, target). The complex line
/// spanned by the geodesic velocity u is rotated with it; the part of w that
/// is complex-orthogonal to {base, u} is left unchanged.
template <typename Real>
BasicTangentVector<Real> parallel_transport(const BasicPureState<Real>& base,
                                            const BasicPureState<Real>& target,
                                            const BasicTangentVector<Real>& w) {
    detail::require_same_dim<Real>(base.dim(), w.dim());
    const BasicPureState<Real> aligned = phase_align(base, target);
    auto h = project_horizontal(base, aligned.amplitudes());
    const Real s = h.norm();
    if (s == Real(0)) return project_horizontal(aligned, w.components());
    const Real r = std::atan2(s, overlap(base, aligned).real());
    const ComplexVector<Real> u = h.components() / s;
    const std::complex<Real> along = u.dot(w.components());
    ComplexVector<Real> out = w.components() +
                              along * ((std::cos(r) - Real(1)) * u - std::sin(r) * base.amplitudes());
    return project_horizontal(aligned, out);
}

/// Real orthonormal frame (2d-2 vectors) of the horizontal space at base.
template <typename Real>
std::vector<BasicTangentVector<Real>> horizontal_frame(const BasicPureState<Real>& base) {
    const Index d = base.dim();
    std::vector<BasicTangentVector<Real>> frame;
    frame.reserve(static_cast<std::size_t>(2 * d - 2));
    for (Index j = 0; j < d && static_cast<Index>(frame.size()) < 2 * d - 2; ++j) {
        for (const std::complex<Real> unit : {std::complex<Real>(1, 0), std::complex<Real>(0, 1)}) {
            ComplexVector<Real> e = ComplexVector<Real>::Zero(d);
            e(j) = unit;
            ComplexVector<Real> v = project_horizontal(base, e).components();
            for (int pass = 0; pass < 2; ++pass)
                for (const auto& f : frame)
                    v -= detail::real_inner<Real>(f.components(), v) * f.components();
            const Real n = v.norm();
            if (n > Real(1e-6)) frame.push_back(project_horizontal(base, ComplexVector<Real>(v / n)));
        }
    }
    return frame;
}

/// Standard Gaussian on the (2d-2)-dimensional horizontal space at base.
template <typename Real>
BasicTangentVector<Real> sample_horizontal_gaussian(const BasicPureState<Real>& base,
                                                    RngStream& rng) {
    const Index d = base.dim();
    ComplexVector<Real> z(d);
    for (Index j = 0; j < d; ++j) {
        const auto pair = rng.normal_pair();
        z(j) = std::complex<Real>(Real(pair[0]), Real(pair[1]));
    }
    return project_horizontal(base, z);
}

/// Unitarily invariant (Haar) random state: a normalized complex Gaussian.
template <typename Real = double>
BasicPureState<Real> haar_state(Index dim, RngStream& rng) {
    if (dim < 2) throw std::invalid_argument("haar_state: dimension must be >= 2");
    ComplexVector<Real> z(dim);
    for (Index j = 0; j < dim; ++j) {
        const auto pair = rng.normal_pair();
        z(j) = std::complex<Real>(Real(pair[0]), Real(pair[1]));
    }
    return BasicPureState<Real>(std::move(z));
}

}  // namespace ssdm
