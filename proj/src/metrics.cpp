#include "ssdm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "ssdm/atomic_file.hpp"
#include "ssdm/parallel.hpp"
#include "ssdm/quantum_linear.hpp"

namespace ssdm {

namespace {

Index common_dim(std::span<const PureState> a, std::span<const PureState> b, const char* who) {
    if (a.empty() || b.empty()) throw std::invalid_argument(std::string(who) + ": empty ensemble");
    const Index d = a.front().dim();
    for (const auto& s : a)
        if (s.dim() != d) throw DimensionMismatch(d, s.dim());
    for (const auto& s : b)
        if (s.dim() != d) throw DimensionMismatch(d, s.dim());
    return d;
}

// Ensemble-averaged density matrix. Mean pairwise overlaps |<psi,phi>|^2
// reduce to Frobenius products of these.
ComplexMatrix<double> mean_density(std::span<const PureState> ens, Index d) {
    ComplexMatrix<double> rho = ComplexMatrix<double>::Zero(d, d);
    for (const auto& s : ens) rho.noalias() += s.amplitudes() * s.amplitudes().adjoint();
    return rho / static_cast<double>(ens.size());
}

double frobenius_product(const ComplexMatrix<double>& a, const ComplexMatrix<double>& b) {
    return (a.array() * b.array().conjugate()).sum().real();
}

void check_labels(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& labels, const char* who) {
    if (kernel.rows() != kernel.cols()) throw DimensionMismatch(kernel.rows(), kernel.cols());
    if (labels.size() != kernel.rows()) throw DimensionMismatch(kernel.rows(), labels.size());
    const double scale = std::max(1.0, kernel.cwiseAbs().maxCoeff());
    if ((kernel - kernel.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
        throw std::invalid_argument(std::string(who) + ": kernel is not symmetric");
    for (Index i = 0; i < labels.size(); ++i)
        if (labels(i) != 1.0 && labels(i) != -1.0)
            throw std::invalid_argument(std::string(who) + ": labels must be +1 or -1");
}

}  // namespace

double mean_fidelity(std::span<const PureState> gen, std::span<const PureState> target) {
    const Index d = common_dim(gen, target, "mean_fidelity");
    const double f = frobenius_product(mean_density(gen, d), mean_density(target, d));
    return std::clamp(f, 0.0, 1.0);
}

double mmd_overlap(std::span<const PureState> gen, std::span<const PureState> target) {
    const Index d = common_dim(gen, target, "mmd_overlap");
    const ComplexMatrix<double> diff = mean_density(gen, d) - mean_density(target, d);
    return std::sqrt(std::max(0.0, diff.squaredNorm()));
}

double delta_obs(std::span<const PureState> gen, std::span<const PureState> target, int n_qubits) {
    const Index d = common_dim(gen, target, "delta_obs");
    if (detail::log2_exact(d) != n_qubits) throw DimensionMismatch(Index(1) << n_qubits, d);
    const ComplexMatrix<double> diff = mean_density(gen, d) - mean_density(target, d);
    const auto paulis = pauli_observables(n_qubits);
    double total = 0.0;
    for (const auto& p : paulis) total += std::abs((p.entries() * diff).trace().real());
    return total / static_cast<double>(paulis.size());
}

std::vector<double> entanglement_profile(std::span<const PureState> ens, int n_qubits) {
    if (n_qubits < 2) throw std::invalid_argument("entanglement_profile: need n >= 2");
    std::vector<double> out(ens.size());
    parallel_for(ens.size(), [&](std::size_t i) {
        out[i] = von_neumann_entropy(partial_trace_first(ens[i], n_qubits / 2, n_qubits));
    });
    return out;
}

double wasserstein1(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein1: empty sample");
    std::vector<double> x(a.begin(), a.end());
    std::vector<double> y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    if (x.size() == y.size()) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - y[i]);
        return s / static_cast<double>(x.size());
    }
    // Integral of |F_a - F_b| over the merged breakpoints.
    const double na = static_cast<double>(x.size());
    const double nb = static_cast<double>(y.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double prev = std::min(x.front(), y.front());
    double total = 0.0;
    while (i < x.size() || j < y.size()) {
        const double next = (j >= y.size() || (i < x.size() && x[i] <= y[j])) ? x[i] : y[j];
        total += std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (next - prev);
        while (i < x.size() && x[i] == next) ++i;
        while (j < y.size() && y[j] == next) ++j;
        prev = next;
    }
    return total;
}

Eigen::MatrixXd overlap_kernel(std::span<const PureState> states) {
    const auto n = static_cast<Index>(states.size());
    Eigen::MatrixXd k(n, n);
    parallel_for(states.size(), [&](std::size_t i) {
        const auto r = static_cast<Index>(i);
        for (Index c = r; c < n; ++c)
            k(r, c) = std::norm(overlap(states[i], states[static_cast<std::size_t>(c)]));
    });
    k.triangularView<Eigen::StrictlyLower>() = k.transpose();
    return k;
}

double kernel_alignment(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& labels) {
    check_labels(kernel, labels, "kernel_alignment");
    const double kn = kernel.norm();
    if (kn == 0.0) throw std::invalid_argument("kernel_alignment: zero kernel");
    const double inner = labels.dot(kernel * labels);
    return inner / (kn * labels.squaredNorm());
}

double kernel_gap(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& labels) {
    check_labels(kernel, labels, "kernel_gap");
    const Index n = labels.size();
    const Index positives = (labels.array() > 0.0).count();
    if (positives < 2 || n - positives < 2)
        throw std::invalid_argument("kernel_gap: each class needs at least two members");
    double same = 0.0;
    double cross = 0.0;
    long long n_same = 0;
    long long n_cross = 0;
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) {
            if (i == j) continue;
            if (labels(i) == labels(j)) {
                same += kernel(i, j);
                ++n_same;
            } else {
                cross += kernel(i, j);
                ++n_cross;
            }
        }
    return same / static_cast<double>(n_same) - cross / static_cast<double>(n_cross);
}

double mean_margin(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& labels, double ridge) {
    check_labels(kernel, labels, "mean_margin");
    if (!(ridge > 0.0)) throw std::invalid_argument("mean_margin: ridge must be positive");
    const Index n = labels.size();
    const Eigen::MatrixXd system = kernel + ridge * Eigen::MatrixXd::Identity(n, n);
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(system);
    const double pivot_floor = 1e-14 * std::max(1.0, system.cwiseAbs().maxCoeff());
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().cwiseAbs().minCoeff() <= pivot_floor)
        throw std::runtime_error("mean_margin: singular ridge system");
    const Eigen::VectorXd alpha = ldlt.solve(labels);
    const Eigen::VectorXd f = kernel * alpha;
    return labels.cwiseProduct(f).mean();
}

EnsembleMetrics evaluate(std::span<const PureState> gen, std::span<const PureState> target,
                         int n_qubits, std::uint64_t seed) {
    EnsembleMetrics m;
    m.f0 = mean_fidelity(gen, target);
    m.mmd = mmd_overlap(gen, target);
    m.delta_obs = delta_obs(gen, target, n_qubits);
    if (n_qubits >= 2) {
        const auto eg = entanglement_profile(gen, n_qubits);
        const auto et = entanglement_profile(target, n_qubits);
        m.ent_w1 = wasserstein1(eg, et);
    }
    m.n_generated = gen.size();
    m.n_target = target.size();
    m.seed = seed;
    return m;
}

std::string metrics_csv(const EnsembleMetrics& m) {
    char row[256];
    std::snprintf(row, sizeof row, "%.17g,%.17g,%.17g,%.17g,%zu,%zu,%llu\n", m.f0, m.mmd,
                  m.delta_obs, m.ent_w1, m.n_generated, m.n_target,
                  static_cast<unsigned long long>(m.seed));
    return std::string(kMetricsCsvHeader) + "\n" + row;
}

void write_metrics_csv(const std::filesystem::path& path, const EnsembleMetrics& m) {
    write_file_atomic(path, metrics_csv(m));
}

}  // namespace ssdm
