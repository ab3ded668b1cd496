#include "ssdm/sampler.hpp"

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "ssdm/parallel.hpp"

namespace ssdm {

namespace {

constexpr std::uint64_t kTagSampleIndex = 7;

void require_net_dim(const ScoreNet& net, Index d) {
    if (net.d != d) throw DimensionMismatch(net.d, d);
}

}  // namespace

PureState reverse_update(const NoiseSchedule& sched, const PureState& psi,
                         const TangentVector& score, double t_k, double dt, RngStream& rng) {
    const double sigma = sigma_at(sched, t_k);
    const double tau = sigma * sigma * dt;
    const TangentVector noise = sample_horizontal_gaussian(psi, rng);
    const TangentVector v = (score * (sigma * sigma) - drift(sched, psi, t_k)) * dt +
                            noise * std::sqrt(tau);
    return exp_map(psi, v);
}

PureState reverse_step(const ScoreNet& net, const NoiseSchedule& sched, const PureState& psi,
                       double t_k, double dt, RngStream& rng) {
    require_net_dim(net, psi.dim());
    if (!(t_k > 0.0)) throw std::out_of_range("reverse_step: need t_k > 0");
    return reverse_update(sched, psi, score_forward(net, psi, t_k), t_k, dt, rng);
}

Ensemble sample_ensemble(const ScoreNet& net, const NoiseSchedule& sched, std::size_t count,
                         std::uint64_t seed) {
    if (count < 1) throw std::invalid_argument("sample_ensemble: count must be >= 1");
    sched.validate();
    const Index d = sched.anchor.dim();
    require_net_dim(net, d);

    const RngStream root(seed);
    std::vector<RngStream> streams;
    streams.reserve(count);
    Ensemble states(count);
    for (std::size_t i = 0; i < count; ++i) {
        streams.push_back(root.derive(kTagSampleIndex, i));
        states[i] = haar_state(d, streams.back());
    }

    const double dt = sched.dt();
    std::vector<double> times(count);
    for (int k = sched.n_steps; k >= 1; --k) {
        const double t_k = static_cast<double>(k) * dt;
        std::fill(times.begin(), times.end(), t_k);
        const auto scores = score_forward_batch(net, states, times);
        parallel_for(count, [&](std::size_t i) {
            states[i] = reverse_update(sched, states[i], scores[i], t_k, dt, streams[i]);
        });
    }
    return states;
}

Ensemble vp_sample(const ScoreNet& net_euclid, const NoiseSchedule& sched, std::size_t count,
                   std::uint64_t seed) {
    if (count < 1) throw std::invalid_argument("vp_sample: count must be >= 1");
    if (net_euclid.head != OutputHead::kIdentity)
        throw std::invalid_argument("vp_sample: expected an identity-head network");
    const Index dim = net_euclid.output_dim();

    const RngStream root(seed);
    std::vector<RngStream> streams;
    streams.reserve(count);
    Eigen::MatrixXd x(dim, static_cast<Index>(count));
    for (std::size_t i = 0; i < count; ++i) {
        streams.push_back(root.derive(kTagSampleIndex, i));
        streams.back().fill_normal(std::span<double>(x.col(static_cast<Index>(i)).data(),
                                                     static_cast<std::size_t>(dim)));
    }

    const double dt = sched.dt();
    Eigen::MatrixXd inputs(net_euclid.input_dim(), static_cast<Index>(count));
    for (int k = sched.n_steps; k >= 1; --k) {
        const double t_k = static_cast<double>(k) * dt;
        const double sigma = sigma_at(sched, t_k);
        const double beta = sigma * sigma;
        const Eigen::VectorXd embed = time_embed(t_k, net_euclid.horizon, net_euclid.time_embed_dim);
        inputs.topRows(dim) = x;
        inputs.bottomRows(net_euclid.time_embed_dim) = embed.replicate(1, static_cast<Index>(count));
        const Eigen::MatrixXd score = network_forward(net_euclid, inputs);
        parallel_for(count, [&](std::size_t i) {
            const auto c = static_cast<Index>(i);
            Eigen::VectorXd noise(dim);
            streams[i].fill_normal(std::span<double>(noise.data(), static_cast<std::size_t>(dim)));
            x.col(c) += (0.5 * beta * x.col(c) + beta * score.col(c)) * dt + std::sqrt(beta * dt) * noise;
        });
    }

    Ensemble out(count);
    parallel_for(count, [&](std::size_t i) {
        const ComplexVector<double> v = to_complex(x.col(static_cast<Index>(i)));
        out[i] = v.norm() > 0.0 ? PureState(v) : haar_state(dim / 2, streams[i]);
    });
    return out;
}

}  // namespace ssdm
