#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "ssdm/diffusion.hpp"
#include "ssdm/geometry.hpp"
#include "ssdm/rng.hpp"
#include "ssdm/training.hpp"

namespace ssdm {

/// States normalize(|0...0> + epsilon xi) with xi ~ CN(0, I), i.e. real and
/// imaginary parts N(0, 1/2). State i is drawn from rng.derive(kData, i).
Ensemble make_cluster_ensemble(int n_qubits, double epsilon, std::size_t count,
                               const RngStream& rng);

/// Malformed ensemble file; offset is the byte position of the problem.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : std::runtime_error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

inline constexpr std::uint16_t kEnsembleFormatVersion = 1;
inline constexpr std::size_t kEnsembleHeaderBytes = 18;

/// "SSDM", u16 version, u32 d, u64 count, then count * d (re, im) f64 pairs;
/// all little-endian. An empty ensemble is written with d = 0 unless given.
std::string encode_ensemble(std::span<const PureState> ens, std::uint32_t dim_if_empty = 0);
Ensemble decode_ensemble(std::string_view bytes);
void write_ensemble(const std::filesystem::path& path, std::span<const PureState> ens);
Ensemble read_ensemble(const std::filesystem::path& path);

enum class ModelKind { kSsdm, kVp };

struct ExperimentConfig {
    int n_qubits = 2;
    double epsilon = 0.1;
    int pool_size = 4096;
    int eval_count = 256;

    double sigma_min = 0.05;
    double sigma_max = 1.0;
    double horizon = 1.0;
    int n_steps = 500;
    double lambda_ou = 0.2;
    int drift_sign = -1;

    ModelKind model = ModelKind::kSsdm;
    int train_steps = 10000;
    int batch = 64;
    int hidden_width = 512;
    int time_embed_dim = 128;
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
    double clip_norm = 1.0;
    int log_every = 500;

    std::uint64_t seed = 0;
    std::string out_dir = "out";

    static ExperimentConfig defaults(int n_qubits);
    void validate() const;

    Index dim() const { return Index(1) << n_qubits; }
    NoiseSchedule schedule() const;
    TrainConfig train_config() const;
};

nlohmann::json config_to_json(const ExperimentConfig& cfg);
/// Strict: every key must be present and no other key is accepted.
ExperimentConfig config_from_json(const nlohmann::json& doc);
void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

}  // namespace ssdm
