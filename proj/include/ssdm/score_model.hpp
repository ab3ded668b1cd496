#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ssdm/geometry.hpp"
#include "ssdm/rng.hpp"

namespace ssdm {

inline constexpr std::size_t kNetLayers = 5;

/// Columns per network evaluation block. Every forward pass runs on blocks of
/// exactly this many columns (zero-padded), so a column's result never
/// depends on how many other columns are evaluated with it.
inline constexpr Index kEvalBlock = 64;

struct DenseLayer {
    Eigen::MatrixXd weight;
    Eigen::VectorXd bias;
};

/// Weights and biases of all layers; also used for gradients and moments.
struct NetParameters {
    std::array<DenseLayer, kNetLayers> layers;

    NetParameters zeros_like() const;
    double squared_norm() const;
    bool all_finite() const;
    std::size_t size() const;
};

/// Output head: project onto the horizontal space of the input state, or
/// pass the raw 2d output through (Euclidean baseline).
enum class OutputHead { kHorizontal, kIdentity };

struct NetShape {
    Index hidden = 512;
    Index time_embed_dim = 128;
};

/// Five-layer SiLU MLP mapping (Re psi, Im psi, time embedding) to 2d outputs.
struct ScoreNet {
    Index d = 0;
    Index hidden = 0;
    Index time_embed_dim = 0;
    double horizon = 1.0;
    OutputHead head = OutputHead::kHorizontal;
    NetParameters params;

    /// He-uniform hidden layers, zero biases, zero final layer.
    static ScoreNet create(Index d, double horizon, RngStream& rng, NetShape shape = {},
                           OutputHead head = OutputHead::kHorizontal);

    Index input_dim() const noexcept { return 2 * d + time_embed_dim; }
    Index output_dim() const noexcept { return 2 * d; }
};

/// Sinusoidal embedding: [sin(w_k t/T), cos(w_k t/T)] for w_k geometric in [1, 1e4].
Eigen::VectorXd time_embed(double t, double horizon, Index dim = 128);

/// Real layout used by the network: (Re v, Im v).
Eigen::VectorXd to_real(const ComplexVector<double>& v);
ComplexVector<double> to_complex(const Eigen::Ref<const Eigen::VectorXd>& x);

/// Raw network outputs (2d x n) for stacked inputs (input_dim x n).
Eigen::MatrixXd network_forward(const ScoreNet& net, const Eigen::MatrixXd& inputs);

/// Stacks (real features, time embedding) columns for a batch.
Eigen::MatrixXd stack_inputs(const ScoreNet& net, std::span<const Eigen::VectorXd> features,
                             std::span<const double> times);

/// Score field s_theta(psi, t), horizontal at psi.
TangentVector score_forward(const ScoreNet& net, const PureState& psi, double t);

/// Batched score field; times has one entry per state.
std::vector<TangentVector> score_forward_batch(const ScoreNet& net,
                                               std::span<const PureState> states,
                                               std::span<const double> times);

struct ScoreExample {
    PureState psi;
    TangentVector target;
    double t = 0.0;
    double weight = 1.0;
};

struct EuclideanExample {
    Eigen::VectorXd x;
    Eigen::VectorXd target;
    double t = 0.0;
    double weight = 1.0;
};

struct LossAndGrads {
    double loss = 0.0;
    NetParameters grads;
};

/// Mean of weight * |s_theta(psi, t) - target|^2 and its exact gradient.
LossAndGrads loss_and_grads(const ScoreNet& net, std::span<const ScoreExample> batch);

/// Same objective for an identity-head network on Euclidean vectors.
LossAndGrads euclidean_loss_and_grads(const ScoreNet& net, std::span<const EuclideanExample> batch);

struct AdamState {
    NetParameters first_moment;
    NetParameters second_moment;
    long long step = 0;
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double clip_norm = 1.0;

    static AdamState for_net(const ScoreNet& net);
};

/// Global-norm clipping followed by one AdamW update, in place.
/// Returns the gradient norm before clipping.
double adam_step(ScoreNet& net, AdamState& state, const NetParameters& grads);

/// Versioned structured-text checkpoint (JSON).
void save_checkpoint(const std::filesystem::path& path, const ScoreNet& net,
                     const AdamState& optimizer, const nlohmann::json& config_echo);

struct Checkpoint {
    ScoreNet net;
    nlohmann::json optimizer;
    nlohmann::json config;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json checkpoint_json(const ScoreNet& net, const AdamState& optimizer,
                               const nlohmann::json& config_echo);
Checkpoint checkpoint_from_json(const nlohmann::json& doc);

}  // namespace ssdm
