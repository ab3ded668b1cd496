#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ssdm/diffusion.hpp"
#include "ssdm/geometry.hpp"
#include "ssdm/rng.hpp"
#include "ssdm/score_model.hpp"

namespace ssdm {

struct TrainConfig {
    int steps = 10000;
    int batch = 64;
    int pool_size = 4096;
    NoiseSchedule schedule;
    std::uint64_t seed = 0;
    /// Progress callback interval in steps (0 disables it).
    int log_every = 500;
    NetShape shape;
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
    double clip_norm = 1.0;

    void validate() const;
};

struct TrainLogEntry {
    long long step = 0;
    double loss = 0.0;
    double wall_ms = 0.0;
    long long resample_count = 0;
};

struct TrainResult {
    ScoreNet net;
    AdamState optimizer;
    std::vector<TrainLogEntry> log;
};

using TrainObserver = std::function<void(const TrainLogEntry&)>;

/// Local-time teacher at pair.psi: the Gaussian normal-coordinate score
/// -z / (sigma(t)^2 dt) with z = Log_phi(psi) - b(phi) dt, transported from phi to psi.
TangentVector teacher_score(const LocalPair& pair, const NoiseSchedule& sched);

/// Loss weight sigma(t)^2 dt.
double loss_weight(const NoiseSchedule& sched, double t);

/// Riemannian denoising score matching with local-time teachers.
/// The RNG is only used to derive per-purpose streams; results are
/// independent of the worker count.
TrainResult train(const TrainConfig& config, std::span<const PureState> data, RngStream rng,
                  const TrainObserver& observer = {});

/// Euclidean VP-SDE baseline: standard denoising score matching on (Re psi, Im psi).
TrainResult train_vp(const TrainConfig& config, std::span<const PureState> data, RngStream rng,
                     const TrainObserver& observer = {});

struct TeacherConsistencyReport {
    /// Sample covariance of z in a fixed horizontal frame at phi.
    Eigen::MatrixXd covariance;
    double target_variance = 0.0;
    /// |C - target I|_F / |target I|_F.
    double relative_error = 0.0;
    double mean_norm = 0.0;
    double mean_standard_error = 0.0;
    bool passed = false;
};

/// Fits the covariance of one-step normal coordinates from phi and compares
/// it with sigma(t)^2 dt I. Requires a drift-free schedule.
TeacherConsistencyReport teacher_consistency_check(const NoiseSchedule& sched, const PureState& phi,
                                                   double t, int n_samples, RngStream rng);

/// CSV with header step,loss,wall_ms,resample_count.
void write_train_log_csv(const std::filesystem::path& path, std::span<const TrainLogEntry> log);

}  // namespace ssdm
