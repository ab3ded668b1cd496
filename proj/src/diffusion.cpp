#include "ssdm/diffusion.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssdm {

namespace {

constexpr double kTimeSlack = 1e-9;
constexpr int kMaxPairRetries = 16;

void warn_once_cut_locus() {
    static std::atomic_flag warned = ATOMIC_FLAG_INIT;
    if (!warned.test_and_set())
        std::clog << "ssdm: warning: state on the cut locus of the drift anchor; "
                     "using zero drift\n";
}

void check_time(const NoiseSchedule& sched, double t) {
    if (!(t >= -kTimeSlack * sched.horizon && t <= sched.horizon * (1.0 + kTimeSlack)))
        throw std::out_of_range("time " + std::to_string(t) + " outside [0, " +
                                std::to_string(sched.horizon) + "]");
}

}  // namespace

NoiseSchedule NoiseSchedule::defaults(Index d) {
    NoiseSchedule s;
    s.anchor = PureState::uniform(d);
    return s;
}

void NoiseSchedule::validate() const {
    if (!(sigma_min >= 0.0 && sigma_min <= sigma_max))
        throw std::invalid_argument("schedule: need 0 <= sigma_min <= sigma_max");
    if (sigma_min == 0.0 && sigma_max != 0.0)
        throw std::invalid_argument("schedule: sigma_min = 0 requires sigma_max = 0");
    if (!(horizon > 0.0)) throw std::invalid_argument("schedule: horizon must be positive");
    if (n_steps < 1) throw std::invalid_argument("schedule: n_steps must be >= 1");
    if (lambda_ou < 0.0) throw std::invalid_argument("schedule: lambda_ou must be >= 0");
    if (drift_sign != 1 && drift_sign != -1)
        throw std::invalid_argument("schedule: drift_sign must be +1 or -1");
    if (anchor.dim() < 2) throw std::invalid_argument("schedule: anchor state is not set");
}

double sigma_at(const NoiseSchedule& sched, double t) {
    check_time(sched, t);
    if (sched.sigma_min == sched.sigma_max) return sched.sigma_min;
    return sched.sigma_min * std::pow(sched.sigma_max / sched.sigma_min, t / sched.horizon);
}

double integrated_variance(const NoiseSchedule& sched, double t) {
    check_time(sched, t);
    const double s0 = sched.sigma_min;
    if (s0 == sched.sigma_max) return s0 * s0 * t;
    const double log_ratio = 2.0 * std::log(sched.sigma_max / s0);
    return s0 * s0 * sched.horizon * std::expm1(log_ratio * t / sched.horizon) / log_ratio;
}

TangentVector drift(const NoiseSchedule& sched, const PureState& psi, double t) {
    check_time(sched, t);
    if (sched.lambda_ou == 0.0) return TangentVector::zero(psi);
    try {
        return log_map(psi, sched.anchor) * (sched.drift_sign * sched.lambda_ou);
    } catch (const OrthogonalStates&) {
        warn_once_cut_locus();
        return TangentVector::zero(psi);
    }
}

PureState forward_step(const NoiseSchedule& sched, const PureState& psi, double t, double dt,
                       RngStream& rng) {
    const double sigma = sigma_at(sched, t);
    const TangentVector noise = sample_horizontal_gaussian(psi, rng);
    if (dt == 0.0) return psi;
    const TangentVector v = drift(sched, psi, t) * dt + noise * (sigma * std::sqrt(dt));
    return exp_map(psi, v);
}

PureState simulate_forward(const NoiseSchedule& sched, const PureState& psi0, double t_end,
                           RngStream& rng) {
    check_time(sched, t_end);
    const double dt = sched.dt();
    const auto full = static_cast<long long>(std::floor(t_end / dt + kTimeSlack));
    PureState state = psi0;
    for (long long k = 0; k < full; ++k)
        state = forward_step(sched, state, static_cast<double>(k) * dt, dt, rng);
    const double done = static_cast<double>(full) * dt;
    const double rest = t_end - done;
    if (rest > kTimeSlack * sched.horizon) state = forward_step(sched, state, done, rest, rng);
    return state;
}

LocalPair simulate_pair(const NoiseSchedule& sched, const PureState& psi0, double t,
                        RngStream& rng) {
    const double dt = sched.dt();
    if (t < dt * (1.0 - kTimeSlack)) throw std::out_of_range("simulate_pair: need t >= dt");
    check_time(sched, t);
    const double t_prev = std::max(0.0, t - dt);

    LocalPair pair;
    pair.phi = simulate_forward(sched, psi0, t_prev, rng);
    pair.t = t;
    pair.dt = dt;
    constexpr double kMaxDistance = std::numbers::pi / 2.0 - 1e-6;
    for (int attempt = 0;; ++attempt) {
        pair.psi = forward_step(sched, pair.phi, t_prev, dt, rng);
        if (fs_distance(pair.phi, pair.psi) < kMaxDistance) break;
        if (attempt + 1 >= kMaxPairRetries)
            throw std::runtime_error("simulate_pair: local pair stuck on the cut locus");
        ++pair.resamples;
    }
    return pair;
}

namespace {

/// Euler-Heun update psi + A psi + A^2 psi / 2 with A = -i sqrt(eta) sum dW_k G_k.
/// Returns the unnormalized result.
ComplexVector<double> heun_unitary_update(std::span<const HermitianOperator> generators,
                                          double eta, const ComplexVector<double>& psi,
                                          std::span<const double> increments) {
    const Index d = psi.size();
    ComplexMatrix<double> combo = ComplexMatrix<double>::Zero(d, d);
    for (std::size_t k = 0; k < generators.size(); ++k)
        combo.noalias() += increments[k] * generators[k].entries();
    const std::complex<double> coupling(0.0, -std::sqrt(eta));
    const ComplexVector<double> first = coupling * (combo * psi);
    const ComplexVector<double> second = coupling * (combo * first);
    return psi + first + 0.5 * second;
}

constexpr double kSseNormTolerance = 1e-6;

}  // namespace

PureState sse_step(std::span<const HermitianOperator> generators, double eta, const PureState& psi,
                   double dt, RngStream& rng) {
    if (eta < 0.0) throw std::invalid_argument("sse_step: eta must be >= 0");
    for (const auto& g : generators) detail::require_same_dim<double>(g.dim(), psi.dim());
    std::vector<double> increments(generators.size());
    rng.fill_normal(increments);
    const double scale = std::sqrt(dt);
    for (double& w : increments) w *= scale;
    if (eta == 0.0) return psi;

    ComplexVector<double> next = heun_unitary_update(generators, eta, psi.amplitudes(), increments);
    const double residue = std::abs(next.norm() - 1.0);
    if (residue >= kSseNormTolerance)
        throw std::runtime_error("sse_step: norm residue " + std::to_string(residue) +
                                 " exceeds 1e-6; reduce dt");
    return PureState(std::move(next));
}

namespace {

/// Common-random-number sample set for the displacement moment.
struct SseProbe {
    std::vector<PureState> starts;
    std::vector<double> increments;  // n * K, already scaled by sqrt(dt)
    std::vector<HermitianOperator> generators;
};

SseProbe make_probe(Index d, double dt, int n, RngStream& rng) {
    SseProbe probe{{}, {}, gell_mann_basis(d)};
    const std::size_t k = probe.generators.size();
    probe.starts.reserve(static_cast<std::size_t>(n));
    probe.increments.resize(static_cast<std::size_t>(n) * k);
    for (int i = 0; i < n; ++i) probe.starts.push_back(haar_state(d, rng));
    rng.fill_normal(probe.increments);
    const double scale = std::sqrt(dt);
    for (double& w : probe.increments) w *= scale;
    return probe;
}

double probe_ratio(const SseProbe& probe, Index d, double eta, double sigma, double dt) {
    const std::size_t k = probe.generators.size();
    double total = 0.0;
    for (std::size_t i = 0; i < probe.starts.size(); ++i) {
        const auto& start = probe.starts[i];
        const std::span<const double> inc(probe.increments.data() + i * k, k);
        const PureState next(heun_unitary_update(probe.generators, eta, start.amplitudes(), inc));
        const double r = fs_distance(start, next);
        total += r * r;
    }
    const double mean = total / static_cast<double>(probe.starts.size());
    return mean / (sigma * sigma * static_cast<double>(2 * d - 2) * dt);
}

}  // namespace

double sse_displacement_ratio(Index d, double eta, double sigma, double dt, int n_samples,
                              RngStream& rng) {
    if (!(sigma > 0.0)) throw std::invalid_argument("sse_displacement_ratio: need sigma > 0");
    if (eta == 0.0) return 0.0;
    const SseProbe probe = make_probe(d, dt, n_samples, rng);
    return probe_ratio(probe, d, eta, sigma, dt);
}

double calibrate_sse_rate(Index d, double sigma, double dt, RngStream& rng, int n_samples) {
    if (!(sigma > 0.0)) throw std::invalid_argument("calibrate_sse_rate: need sigma > 0");
    if (!(dt > 0.0 && dt <= 1e-3)) throw std::invalid_argument("calibrate_sse_rate: need 0 < dt <= 1e-3");
    const SseProbe probe = make_probe(d, dt, n_samples, rng);
    auto ratio = [&](double eta) { return probe_ratio(probe, d, eta, sigma, dt); };

    double lo = 0.0;
    double hi = sigma * sigma;
    std::string seen;
    double r_hi = ratio(hi);
    for (int i = 0; r_hi < 1.0; ++i) {
        seen += " " + std::to_string(r_hi);
        if (i >= 40 || !std::isfinite(r_hi))
            throw std::runtime_error("calibrate_sse_rate: could not bracket; ratios:" + seen);
        lo = hi;
        hi *= 2.0;
        r_hi = ratio(hi);
    }
    double eta = hi;
    for (int iter = 0; iter < 60; ++iter) {
        eta = 0.5 * (lo + hi);
        const double r = ratio(eta);
        if (std::abs(r - 1.0) < 1e-6) break;
        (r < 1.0 ? lo : hi) = eta;
    }
    return eta / (sigma * sigma);
}

Eigen::VectorXd vp_forward_step(const Eigen::VectorXd& x, double t, double dt,
                                const NoiseSchedule& beta_schedule, RngStream& rng) {
    const double sigma = sigma_at(beta_schedule, t);
    const double beta = sigma * sigma;
    Eigen::VectorXd noise(x.size());
    rng.fill_normal(std::span<double>(noise.data(), static_cast<std::size_t>(noise.size())));
    return x - 0.5 * beta * dt * x + std::sqrt(beta * dt) * noise;
}

VpMarginal vp_marginal(const NoiseSchedule& sched, double t) {
    const double b = integrated_variance(sched, t);
    return {std::exp(-0.5 * b), std::sqrt(-std::expm1(-b))};
}

}  // namespace ssdm
