#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssdm/geometry.hpp"

namespace ssdm {

struct EnsembleMetrics {
    double f0 = 0.0;
    double mmd = 0.0;
    double delta_obs = 0.0;
    double ent_w1 = 0.0;
    std::size_t n_generated = 0;
    std::size_t n_target = 0;
    std::uint64_t seed = 0;
};

/// Mean of |<psi, phi>|^2 over all generated x target pairs.
double mean_fidelity(std::span<const PureState> gen, std::span<const PureState> target);

/// Biased (V-statistic) MMD with the overlap kernel |<psi, phi>|^2.
double mmd_overlap(std::span<const PureState> gen, std::span<const PureState> target);

/// Mean absolute gap of single-qubit Pauli expectations between ensembles.
double delta_obs(std::span<const PureState> gen, std::span<const PureState> target, int n_qubits);

/// Von Neumann entropy (nats) of the first floor(n/2) qubits of each state.
std::vector<double> entanglement_profile(std::span<const PureState> ens, int n_qubits);

/// Exact Wasserstein-1 distance between two empirical distributions on R.
double wasserstein1(std::span<const double> a, std::span<const double> b);

/// Overlap-kernel Gram matrix K_ij = |<psi_i, psi_j>|^2.
Eigen::MatrixXd overlap_kernel(std::span<const PureState> states);

/// <K, y y^T>_F / (|K|_F |y y^T|_F).
double kernel_alignment(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& labels);

/// Mean same-class minus mean different-class kernel value over i != j.
double kernel_gap(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& labels);

/// Mean y_i f(x_i) for the kernel ridge fit (K + ridge I) alpha = y.
double mean_margin(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& labels,
                   double ridge = 1e-3);

/// Full metric record; ent_w1 is 0 for single-qubit ensembles.
EnsembleMetrics evaluate(std::span<const PureState> gen, std::span<const PureState> target,
                         int n_qubits, std::uint64_t seed);

inline constexpr const char* kMetricsCsvHeader = "f0,mmd,delta_obs,ent_w1,n_gen,n_target,seed";

std::string metrics_csv(const EnsembleMetrics& m);
void write_metrics_csv(const std::filesystem::path& path, const EnsembleMetrics& m);

}  // namespace ssdm
