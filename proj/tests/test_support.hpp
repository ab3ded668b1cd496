#pragma once

#include <cmath>
#include <numbers>

#include "ssdm/geometry.hpp"
#include "ssdm/rng.hpp"

namespace ssdm::testing {

inline PureState random_state(Index d, RngStream& rng) { return haar_state(d, rng); }

/// Horizontal tangent at psi with norm drawn uniformly from [0, max_norm).
inline TangentVector random_tangent(const PureState& psi, RngStream& rng, double max_norm) {
    TangentVector g = sample_horizontal_gaussian(psi, rng);
    const double n = g.norm();
    return g * (max_norm * rng.uniform() / n);
}

inline double random_phase(RngStream& rng) { return 2.0 * std::numbers::pi * rng.uniform(); }

/// Distance in C^d between two vectors after optimal phase alignment.
inline double projective_gap(const ComplexVector<double>& a, const ComplexVector<double>& b) {
    const std::complex<double> ov = a.dot(b);
    const double mod = std::abs(ov);
    const std::complex<double> phase = mod > 0.0 ? std::conj(ov) / mod : 1.0;
    return (b * phase - a).norm();
}

}  // namespace ssdm::testing
