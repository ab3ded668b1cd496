#pragma once

#include <cstdint>
#include <span>

#include <Eigen/Dense>

#include "ssdm/geometry.hpp"
#include "ssdm/quantum_linear.hpp"
#include "ssdm/rng.hpp"

namespace ssdm {

/// Forward-process constants: sigma(t) schedule, OU drift and time grid.
struct NoiseSchedule {
    double sigma_min = 0.05;
    double sigma_max = 1.0;
    double horizon = 1.0;
    int n_steps = 500;
    double lambda_ou = 0.2;
    PureState anchor;
    /// -1 reproduces b = -lambda Log_psi(anchor) literally; +1 is mean-reverting.
    int drift_sign = -1;

    /// Defaults for dimension d with the uniform-superposition anchor.
    static NoiseSchedule defaults(Index d);

    /// Local-time step, horizon / n_steps.
    double dt() const noexcept { return horizon / n_steps; }

    /// Throws std::invalid_argument if any invariant is violated.
    void validate() const;
};

/// A local-time pair (phi, psi) = (psi_{t-dt}, psi_t) from one forward path.
struct LocalPair {
    PureState phi;
    PureState psi;
    double t = 0.0;
    double dt = 0.0;
    /// Number of times the last step was redrawn to stay off the cut locus.
    int resamples = 0;
};

/// sigma(t) = sigma_min (sigma_max / sigma_min)^{t/T}.
double sigma_at(const NoiseSchedule& sched, double t);

/// Integral of sigma(s)^2 over [0, t].
double integrated_variance(const NoiseSchedule& sched, double t);

/// OU drift drift_sign * lambda * Log_psi(anchor); zero when lambda == 0.
TangentVector drift(const NoiseSchedule& sched, const PureState& psi, double t);

/// One tangent-space Euler-Maruyama step followed by the exponential map.
PureState forward_step(const NoiseSchedule& sched, const PureState& psi, double t, double dt,
                       RngStream& rng);

/// Runs the forward process from time 0 to t_end on the schedule grid
/// (plus one partial step when t_end is off-grid).
PureState simulate_forward(const NoiseSchedule& sched, const PureState& psi0, double t_end,
                           RngStream& rng);

/// Forward path from psi0 to time t, returning its last two states.
LocalPair simulate_pair(const NoiseSchedule& sched, const PureState& psi0, double t,
                        RngStream& rng);

/// One Euler-Heun step of the stochastic-unitary SSE with coupling eta.
///
/// The drift -eta/2 sum G_k^2 psi of the SSE is the Ito correction of its
/// noise term, so the Stratonovich integrator below carries the noise only
/// and conserves the norm to O(dt^2). Throws if the pre-normalization norm
/// residue reaches 1e-6 (dt too large for the given eta).
PureState sse_step(std::span<const HermitianOperator> generators, double eta,
                   const PureState& psi, double dt, RngStream& rng);

/// E[d_FS^2] of one SSE step over Haar starting states, divided by the
/// intrinsic target sigma^2 (2d - 2) dt.
double sse_displacement_ratio(Index d, double eta, double sigma, double dt, int n_samples,
                              RngStream& rng);

/// Finds eta such that the SSE short-time displacement matches the
/// intrinsic process at noise level sigma; returns eta / sigma^2.
double calibrate_sse_rate(Index d, double sigma, double dt, RngStream& rng,
                          int n_samples = 200000);

/// Euclidean VP step with beta(t) = sigma(t)^2 on a real 2d-vector.
Eigen::VectorXd vp_forward_step(const Eigen::VectorXd& x, double t, double dt,
                                const NoiseSchedule& beta_schedule, RngStream& rng);

/// Closed-form VP marginal x_t = alpha x_0 + stddev eps.
struct VpMarginal {
    double alpha;
    double stddev;
};
VpMarginal vp_marginal(const NoiseSchedule& sched, double t);

}  // namespace ssdm
