#pragma once

#include <cstddef>
#include <cstdint>

#include "ssdm/diffusion.hpp"
#include "ssdm/geometry.hpp"
#include "ssdm/rng.hpp"
#include "ssdm/score_model.hpp"

namespace ssdm {

/// One reverse-time Euler-Maruyama step from t_k to t_k - dt:
/// v = (sigma^2 s_theta - b) dt + sigma sqrt(dt) xi, then Exp_psi(v).
PureState reverse_step(const ScoreNet& net, const NoiseSchedule& sched, const PureState& psi,
                       double t_k, double dt, RngStream& rng);

/// Same update with a precomputed score at psi.
PureState reverse_update(const NoiseSchedule& sched, const PureState& psi,
                         const TangentVector& score, double t_k, double dt, RngStream& rng);

/// Haar prior at T integrated back to t = 0 on the schedule grid.
/// Sample i depends only on (seed, i).
Ensemble sample_ensemble(const ScoreNet& net, const NoiseSchedule& sched, std::size_t count,
                         std::uint64_t seed);

/// Euclidean VP baseline: reverse VP integration in R^{2d} from N(0, I),
/// then complex reassembly and normalization.
Ensemble vp_sample(const ScoreNet& net_euclid, const NoiseSchedule& sched, std::size_t count,
                   std::uint64_t seed);

}  // namespace ssdm
