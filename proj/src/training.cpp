#include "ssdm/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>

#include "ssdm/atomic_file.hpp"
#include "ssdm/parallel.hpp"

namespace ssdm {

namespace {

constexpr std::uint64_t kTagInit = 101;
constexpr std::uint64_t kTagBatch = 102;
constexpr int kMaxTeacherRetries = 16;

AdamState make_optimizer(const TrainConfig& config, const ScoreNet& net) {
    AdamState opt = AdamState::for_net(net);
    opt.lr = config.lr;
    opt.beta1 = config.beta1;
    opt.beta2 = config.beta2;
    opt.eps = config.adam_eps;
    opt.weight_decay = config.weight_decay;
    opt.clip_norm = config.clip_norm;
    return opt;
}

Index common_dimension(std::span<const PureState> data) {
    if (data.empty()) throw std::invalid_argument("train: empty dataset");
    const Index d = data.front().dim();
    for (const auto& s : data)
        if (s.dim() != d) throw DimensionMismatch(d, s.dim());
    return d;
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

double sample_time(const NoiseSchedule& sched, RngStream& rng) {
    const double dt = sched.dt();
    return dt + (sched.horizon - dt) * rng.uniform();
}

struct DrawnExample {
    ScoreExample example;
    int resamples = 0;
    double distance = 0.0;
};

DrawnExample draw_example(const NoiseSchedule& sched, std::span<const PureState> data,
                          RngStream rng) {
    const auto& psi0 = data[rng.below(data.size())];
    const double t = sample_time(sched, rng);
    int resamples = 0;
    for (int attempt = 0;; ++attempt) {
        try {
            LocalPair pair = simulate_pair(sched, psi0, t, rng);
            resamples += pair.resamples;
            TangentVector teacher = teacher_score(pair, sched);
            const double distance = fs_distance(pair.phi, pair.psi);
            return {{pair.psi, std::move(teacher), t, loss_weight(sched, t)}, resamples, distance};
        } catch (const OrthogonalStates&) {
            if (attempt + 1 >= kMaxTeacherRetries) throw;
            ++resamples;
        }
    }
}

std::string describe_batch(std::span<const DrawnExample> batch) {
    std::ostringstream os;
    os << " (t, d_FS):";
    for (const auto& ex : batch) os << " (" << ex.example.t << ", " << ex.distance << ")";
    return os.str();
}

}  // namespace

void TrainConfig::validate() const {
    if (steps < 0) throw std::invalid_argument("train: steps must be >= 0");
    if (batch < 1) throw std::invalid_argument("train: batch must be >= 1");
    if (pool_size < batch) throw std::invalid_argument("train: pool_size must be >= batch");
    if (!(lr > 0.0)) throw std::invalid_argument("train: lr must be positive");
    if (!(clip_norm > 0.0)) throw std::invalid_argument("train: clip_norm must be positive");
    schedule.validate();
}

TangentVector teacher_score(const LocalPair& pair, const NoiseSchedule& sched) {
    // Score of the simulated step: the noise is centred on the drift displacement.
    const TangentVector z = log_map(pair.phi, pair.psi) - drift(sched, pair.phi, pair.t - pair.dt) * pair.dt;
    if (z.norm() == 0.0) return TangentVector::zero(pair.psi);
    const double sigma = sigma_at(sched, pair.t);
    const TangentVector score_at_phi = z * (-1.0 / (sigma * sigma * pair.dt));
    return rebase(parallel_transport(pair.phi, pair.psi, score_at_phi), pair.psi);
}

double loss_weight(const NoiseSchedule& sched, double t) {
    const double sigma = sigma_at(sched, t);
    return sigma * sigma * sched.dt();
}

TrainResult train(const TrainConfig& config, std::span<const PureState> data, RngStream rng,
                  const TrainObserver& observer) {
    config.validate();
    const Index d = common_dimension(data);
    if (config.schedule.anchor.dim() != d) throw DimensionMismatch(d, config.schedule.anchor.dim());

    RngStream init_rng = rng.derive(kTagInit);
    TrainResult result{ScoreNet::create(d, config.schedule.horizon, init_rng, config.shape), {}, {}};
    result.optimizer = make_optimizer(config, result.net);
    result.log.reserve(static_cast<std::size_t>(config.steps));

    const RngStream batch_root = rng.derive(kTagBatch);
    const auto start = std::chrono::steady_clock::now();
    long long resample_total = 0;
    std::vector<DrawnExample> drawn(static_cast<std::size_t>(config.batch));
    std::vector<ScoreExample> examples;

    for (long long step = 0; step < config.steps; ++step) {
        parallel_for(drawn.size(), [&](std::size_t b) {
            drawn[b] = draw_example(config.schedule, data,
                                    batch_root.derive(static_cast<std::uint64_t>(step), b));
        });
        examples.clear();
        for (const auto& ex : drawn) {
            resample_total += ex.resamples;
            examples.push_back(ex.example);
        }
        const LossAndGrads lg = loss_and_grads(result.net, examples);
        if (!std::isfinite(lg.loss))
            throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) +
                                     describe_batch(drawn));
        adam_step(result.net, result.optimizer, lg.grads);
        result.log.push_back({step, lg.loss, elapsed_ms(start), resample_total});
        if (observer && config.log_every > 0 &&
            (step % config.log_every == 0 || step + 1 == config.steps))
            observer(result.log.back());
    }
    return result;
}

TrainResult train_vp(const TrainConfig& config, std::span<const PureState> data, RngStream rng,
                     const TrainObserver& observer) {
    config.validate();
    const Index d = common_dimension(data);
    RngStream init_rng = rng.derive(kTagInit);
    TrainResult result{ScoreNet::create(d, config.schedule.horizon, init_rng, config.shape,
                                        OutputHead::kIdentity),
                       {},
                       {}};
    result.optimizer = make_optimizer(config, result.net);
    result.log.reserve(static_cast<std::size_t>(config.steps));

    const RngStream batch_root = rng.derive(kTagBatch);
    const auto start = std::chrono::steady_clock::now();
    std::vector<EuclideanExample> examples(static_cast<std::size_t>(config.batch));

    for (long long step = 0; step < config.steps; ++step) {
        parallel_for(examples.size(), [&](std::size_t b) {
            RngStream ex_rng = batch_root.derive(static_cast<std::uint64_t>(step), b);
            const auto& psi0 = data[ex_rng.below(data.size())];
            const double t = sample_time(config.schedule, ex_rng);
            const VpMarginal m = vp_marginal(config.schedule, t);
            Eigen::VectorXd eps(2 * d);
            ex_rng.fill_normal(std::span<double>(eps.data(), static_cast<std::size_t>(eps.size())));
            examples[b] = {m.alpha * to_real(psi0.amplitudes()) + m.stddev * eps, -eps / m.stddev, t,
                           m.stddev * m.stddev};
        });
        const LossAndGrads lg = euclidean_loss_and_grads(result.net, examples);
        if (!std::isfinite(lg.loss))
            throw std::runtime_error("train_vp: non-finite loss at step " + std::to_string(step));
        adam_step(result.net, result.optimizer, lg.grads);
        result.log.push_back({step, lg.loss, elapsed_ms(start), 0});
        if (observer && config.log_every > 0 &&
            (step % config.log_every == 0 || step + 1 == config.steps))
            observer(result.log.back());
    }
    return result;
}

TeacherConsistencyReport teacher_consistency_check(const NoiseSchedule& sched, const PureState& phi,
                                                   double t, int n_samples, RngStream rng) {
    if (sched.lambda_ou != 0.0)
        throw std::invalid_argument("teacher_consistency_check: drift must be disabled");
    if (n_samples < 2) throw std::invalid_argument("teacher_consistency_check: need n_samples >= 2");
    const double dt = sched.dt();
    const double t_prev = std::max(0.0, t - dt);
    const auto frame = horizontal_frame(phi);
    const auto m = static_cast<Index>(frame.size());
    const auto n = static_cast<std::size_t>(n_samples);

    Eigen::MatrixXd coords(m, static_cast<Index>(n));
    parallel_for(n, [&](std::size_t i) {
        RngStream draw = rng.derive(0, i);
        const PureState psi = forward_step(sched, phi, t_prev, dt, draw);
        const TangentVector z = log_map(phi, psi);
        for (Index k = 0; k < m; ++k)
            coords(k, static_cast<Index>(i)) =
                frame[static_cast<std::size_t>(k)].components().dot(z.components()).real();
    });

    TeacherConsistencyReport report;
    const Eigen::VectorXd mean = coords.rowwise().mean();
    const Eigen::MatrixXd centered = coords.colwise() - mean;
    report.covariance = centered * centered.transpose() / static_cast<double>(n - 1);
    const double sigma = sigma_at(sched, t);
    report.target_variance = sigma * sigma * dt;
    const Eigen::MatrixXd target = report.target_variance * Eigen::MatrixXd::Identity(m, m);
    report.relative_error = (report.covariance - target).norm() / target.norm();
    report.mean_norm = mean.norm();
    report.mean_standard_error = std::sqrt(report.covariance.trace() / static_cast<double>(n));
    report.passed = report.relative_error < 0.05 && report.mean_norm < 3.0 * report.mean_standard_error;
    return report;
}

void write_train_log_csv(const std::filesystem::path& path, std::span<const TrainLogEntry> log) {
    std::string text = "step,loss,wall_ms,resample_count\n";
    char line[128];
    for (const auto& e : log) {
        std::snprintf(line, sizeof line, "%lld,%.17g,%.3f,%lld\n", e.step, e.loss, e.wall_ms,
                      e.resample_count);
        text += line;
    }
    write_file_atomic(path, text);
}

}  // namespace ssdm
