#include "ssdm/score_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ssdm/atomic_file.hpp"
#include "ssdm/parallel.hpp"

namespace ssdm {

namespace {

constexpr int kFormatVersion = 1;

Eigen::MatrixXd silu(const Eigen::MatrixXd& z) {
    return (z.array() / (1.0 + (-z.array()).exp())).matrix();
}

Eigen::MatrixXd silu_derivative(const Eigen::MatrixXd& z) {
    const Eigen::ArrayXXd sig = 1.0 / (1.0 + (-z.array()).exp());
    return (sig * (1.0 + z.array() * (1.0 - sig))).matrix();
}

/// Activations of one block: act[0] is the input, act[l] = silu(pre[l-1]).
struct BlockCache {
    std::array<Eigen::MatrixXd, kNetLayers> act;
    std::array<Eigen::MatrixXd, kNetLayers - 1> pre;
};

/// Forward pass of exactly kEvalBlock columns.
Eigen::MatrixXd forward_block(const NetParameters& p, const Eigen::MatrixXd& input,
                              BlockCache* cache) {
    Eigen::MatrixXd a = input;
    for (std::size_t l = 0; l + 1 < kNetLayers; ++l) {
        Eigen::MatrixXd z = p.layers[l].weight * a;
        z.colwise() += p.layers[l].bias;
        Eigen::MatrixXd next = silu(z);
        if (cache) {
            cache->act[l] = std::move(a);
            cache->pre[l] = std::move(z);
        }
        a = std::move(next);
    }
    Eigen::MatrixXd out = p.layers[kNetLayers - 1].weight * a;
    out.colwise() += p.layers[kNetLayers - 1].bias;
    if (cache) cache->act[kNetLayers - 1] = std::move(a);
    return out;
}

Eigen::MatrixXd padded_block(const Eigen::MatrixXd& m, Index start) {
    const Index cols = std::min(kEvalBlock, m.cols() - start);
    Eigen::MatrixXd block = Eigen::MatrixXd::Zero(m.rows(), kEvalBlock);
    block.leftCols(cols) = m.middleCols(start, cols);
    return block;
}

void backward_block(const NetParameters& p, const BlockCache& cache, Eigen::MatrixXd grad_out,
                    NetParameters& grads) {
    Eigen::MatrixXd g = std::move(grad_out);
    for (std::size_t l = kNetLayers; l-- > 0;) {
        grads.layers[l].weight.noalias() += g * cache.act[l].transpose();
        grads.layers[l].bias += g.rowwise().sum();
        if (l == 0) break;
        Eigen::MatrixXd back = p.layers[l].weight.transpose() * g;
        g = back.cwiseProduct(silu_derivative(cache.pre[l - 1]));
    }
}

/// Shared regression engine. states is empty for the identity head.
LossAndGrads regression(const ScoreNet& net, const Eigen::MatrixXd& inputs,
                        const Eigen::MatrixXd& targets, std::span<const double> weights,
                        std::span<const ComplexVector<double>> states) {
    const Index n = inputs.cols();
    if (n == 0) throw std::invalid_argument("loss_and_grads: empty batch");
    LossAndGrads result{0.0, net.params.zeros_like()};
    const double inv_n = 1.0 / static_cast<double>(n);

    for (Index start = 0; start < n; start += kEvalBlock) {
        const Index cols = std::min(kEvalBlock, n - start);
        BlockCache cache;
        const Eigen::MatrixXd out = forward_block(net.params, padded_block(inputs, start), &cache);
        Eigen::MatrixXd grad_out = Eigen::MatrixXd::Zero(out.rows(), out.cols());
        for (Index c = 0; c < cols; ++c) {
            const Index i = start + c;
            const double w = weights[static_cast<std::size_t>(i)];
            if (net.head == OutputHead::kHorizontal) {
                const auto& psi = states[static_cast<std::size_t>(i)];
                ComplexVector<double> s = to_complex(out.col(c));
                s -= psi.dot(s) * psi;
                const ComplexVector<double> diff = s - to_complex(targets.col(i));
                result.loss += w * diff.squaredNorm() * inv_n;
                ComplexVector<double> g = (2.0 * w * inv_n) * diff;
                g -= psi.dot(g) * psi;
                grad_out.col(c) = to_real(g);
            } else {
                const Eigen::VectorXd diff = out.col(c) - targets.col(i);
                result.loss += w * diff.squaredNorm() * inv_n;
                grad_out.col(c) = (2.0 * w * inv_n) * diff;
            }
        }
        backward_block(net.params, cache, std::move(grad_out), result.grads);
    }
    return result;
}

void check_example_dims(const ScoreNet& net, Index dim) {
    if (dim != net.d) throw DimensionMismatch(net.d, dim);
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(m.size()));
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
    return flat;
}

}  // namespace

NetParameters NetParameters::zeros_like() const {
    NetParameters z;
    for (std::size_t l = 0; l < kNetLayers; ++l) {
        z.layers[l].weight = Eigen::MatrixXd::Zero(layers[l].weight.rows(), layers[l].weight.cols());
        z.layers[l].bias = Eigen::VectorXd::Zero(layers[l].bias.size());
    }
    return z;
}

double NetParameters::squared_norm() const {
    double s = 0.0;
    for (const auto& layer : layers) s += layer.weight.squaredNorm() + layer.bias.squaredNorm();
    return s;
}

bool NetParameters::all_finite() const {
    for (const auto& layer : layers)
        if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
    return true;
}

std::size_t NetParameters::size() const {
    std::size_t n = 0;
    for (const auto& layer : layers)
        n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
    return n;
}

ScoreNet ScoreNet::create(Index d, double horizon, RngStream& rng, NetShape shape,
                          OutputHead head) {
    if (d < 2) throw std::invalid_argument("ScoreNet: d must be >= 2");
    if (shape.hidden < 1 || shape.time_embed_dim < 2 || shape.time_embed_dim % 2 != 0)
        throw std::invalid_argument("ScoreNet: invalid shape");
    ScoreNet net;
    net.d = d;
    net.hidden = shape.hidden;
    net.time_embed_dim = shape.time_embed_dim;
    net.horizon = horizon;
    net.head = head;
    const std::array<Index, kNetLayers + 1> widths = {
        net.input_dim(), shape.hidden, shape.hidden, shape.hidden, shape.hidden, net.output_dim()};
    for (std::size_t l = 0; l < kNetLayers; ++l) {
        auto& layer = net.params.layers[l];
        const Index fan_in = widths[l];
        const Index fan_out = widths[l + 1];
        layer.bias = Eigen::VectorXd::Zero(fan_out);
        layer.weight = Eigen::MatrixXd::Zero(fan_out, fan_in);
        if (l + 1 == kNetLayers) continue;
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (Index r = 0; r < fan_out; ++r)
            for (Index c = 0; c < fan_in; ++c) layer.weight(r, c) = limit * (2.0 * rng.uniform() - 1.0);
    }
    return net;
}

Eigen::VectorXd time_embed(double t, double horizon, Index dim) {
    const Index pairs = dim / 2;
    Eigen::VectorXd out(dim);
    const double x = t / horizon;
    for (Index k = 0; k < pairs; ++k) {
        const double exponent =
            pairs > 1 ? 4.0 * static_cast<double>(k) / static_cast<double>(pairs - 1) : 0.0;
        const double omega = std::pow(10.0, exponent);
        out(2 * k) = std::sin(omega * x);
        out(2 * k + 1) = std::cos(omega * x);
    }
    return out;
}

Eigen::VectorXd to_real(const ComplexVector<double>& v) {
    Eigen::VectorXd x(2 * v.size());
    x.head(v.size()) = v.real();
    x.tail(v.size()) = v.imag();
    return x;
}

ComplexVector<double> to_complex(const Eigen::Ref<const Eigen::VectorXd>& x) {
    const Index d = x.size() / 2;
    ComplexVector<double> v(d);
    for (Index j = 0; j < d; ++j) v(j) = {x(j), x(d + j)};
    return v;
}

Eigen::MatrixXd stack_inputs(const ScoreNet& net, std::span<const Eigen::VectorXd> features,
                             std::span<const double> times) {
    if (features.size() != times.size())
        throw std::invalid_argument("stack_inputs: features/times size mismatch");
    Eigen::MatrixXd in(net.input_dim(), static_cast<Index>(features.size()));
    for (std::size_t i = 0; i < features.size(); ++i) {
        const Index c = static_cast<Index>(i);
        if (features[i].size() != net.output_dim())
            throw DimensionMismatch(net.output_dim(), features[i].size());
        in.col(c).head(net.output_dim()) = features[i];
        in.col(c).tail(net.time_embed_dim) = time_embed(times[i], net.horizon, net.time_embed_dim);
    }
    return in;
}

Eigen::MatrixXd network_forward(const ScoreNet& net, const Eigen::MatrixXd& inputs) {
    if (inputs.rows() != net.input_dim()) throw DimensionMismatch(net.input_dim(), inputs.rows());
    const Index n = inputs.cols();
    Eigen::MatrixXd out(net.output_dim(), n);
    const auto blocks = static_cast<std::size_t>((n + kEvalBlock - 1) / kEvalBlock);
    parallel_for(blocks, [&](std::size_t b) {
        const Index start = static_cast<Index>(b) * kEvalBlock;
        const Index cols = std::min(kEvalBlock, n - start);
        const Eigen::MatrixXd block = forward_block(net.params, padded_block(inputs, start), nullptr);
        out.middleCols(start, cols) = block.leftCols(cols);
    });
    return out;
}

std::vector<TangentVector> score_forward_batch(const ScoreNet& net,
                                               std::span<const PureState> states,
                                               std::span<const double> times) {
    if (net.head != OutputHead::kHorizontal)
        throw std::logic_error("score_forward: network has an identity head");
    std::vector<Eigen::VectorXd> features;
    features.reserve(states.size());
    for (const auto& s : states) {
        check_example_dims(net, s.dim());
        features.push_back(to_real(s.amplitudes()));
    }
    const Eigen::MatrixXd raw = network_forward(net, stack_inputs(net, features, times));
    std::vector<TangentVector> out;
    out.reserve(states.size());
    for (std::size_t i = 0; i < states.size(); ++i)
        out.push_back(project_horizontal(states[i], to_complex(raw.col(static_cast<Index>(i)))));
    return out;
}

TangentVector score_forward(const ScoreNet& net, const PureState& psi, double t) {
    const double times[] = {t};
    return score_forward_batch(net, std::span<const PureState>(&psi, 1), times).front();
}

LossAndGrads loss_and_grads(const ScoreNet& net, std::span<const ScoreExample> batch) {
    if (net.head != OutputHead::kHorizontal)
        throw std::logic_error("loss_and_grads: network has an identity head");
    std::vector<Eigen::VectorXd> features;
    std::vector<double> times;
    std::vector<double> weights;
    std::vector<ComplexVector<double>> states;
    Eigen::MatrixXd targets(net.output_dim(), static_cast<Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& ex = batch[i];
        check_example_dims(net, ex.psi.dim());
        check_example_dims(net, ex.target.dim());
        const double tol = 1e-8 * std::max(1.0, ex.target.norm());
        if (std::abs(ex.psi.amplitudes().dot(ex.target.components())) > tol)
            throw std::invalid_argument("loss_and_grads: target is not horizontal at psi");
        features.push_back(to_real(ex.psi.amplitudes()));
        times.push_back(ex.t);
        weights.push_back(ex.weight);
        states.push_back(ex.psi.amplitudes());
        targets.col(static_cast<Index>(i)) = to_real(ex.target.components());
    }
    return regression(net, stack_inputs(net, features, times), targets, weights, states);
}

LossAndGrads euclidean_loss_and_grads(const ScoreNet& net, std::span<const EuclideanExample> batch) {
    if (net.head != OutputHead::kIdentity)
        throw std::logic_error("euclidean_loss_and_grads: network has a horizontal head");
    std::vector<Eigen::VectorXd> features;
    std::vector<double> times;
    std::vector<double> weights;
    Eigen::MatrixXd targets(net.output_dim(), static_cast<Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& ex = batch[i];
        if (ex.target.size() != net.output_dim())
            throw DimensionMismatch(net.output_dim(), ex.target.size());
        features.push_back(ex.x);
        times.push_back(ex.t);
        weights.push_back(ex.weight);
        targets.col(static_cast<Index>(i)) = ex.target;
    }
    return regression(net, stack_inputs(net, features, times), targets, weights, {});
}

AdamState AdamState::for_net(const ScoreNet& net) {
    AdamState s;
    s.first_moment = net.params.zeros_like();
    s.second_moment = net.params.zeros_like();
    return s;
}

double adam_step(ScoreNet& net, AdamState& state, const NetParameters& grads) {
    const double norm = std::sqrt(grads.squared_norm());
    if (!std::isfinite(norm) || !grads.all_finite())
        throw std::runtime_error("adam_step: non-finite gradient at optimizer step " +
                                 std::to_string(state.step + 1));
    const double scale = norm > state.clip_norm ? state.clip_norm / norm : 1.0;
    ++state.step;
    const double bias1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

    auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
        const auto g = (scale * grad.array()).eval();
        m.array() = state.beta1 * m.array() + (1.0 - state.beta1) * g;
        v.array() = state.beta2 * v.array() + (1.0 - state.beta2) * g.square();
        param.array() -= state.lr * ((m.array() / bias1) / ((v.array() / bias2).sqrt() + state.eps) +
                                     state.weight_decay * param.array());
    };
    for (std::size_t l = 0; l < kNetLayers; ++l) {
        auto& p = net.params.layers[l];
        auto& m = state.first_moment.layers[l];
        auto& v = state.second_moment.layers[l];
        update(p.weight, grads.layers[l].weight, m.weight, v.weight);
        update(p.bias, grads.layers[l].bias, m.bias, v.bias);
    }
    return norm;
}

nlohmann::json checkpoint_json(const ScoreNet& net, const AdamState& optimizer,
                               const nlohmann::json& config_echo) {
    nlohmann::json doc;
    doc["format_version"] = kFormatVersion;
    doc["head"] = net.head == OutputHead::kHorizontal ? "horizontal" : "identity";
    doc["d"] = net.d;
    doc["hidden"] = net.hidden;
    doc["time_embed_dim"] = net.time_embed_dim;
    doc["horizon"] = net.horizon;
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& layer : net.params.layers) {
        layers.push_back({{"rows", layer.weight.rows()},
                          {"cols", layer.weight.cols()},
                          {"weight", matrix_json(layer.weight)},
                          {"bias", matrix_json(layer.bias)}});
    }
    doc["layers"] = std::move(layers);
    doc["optimizer"] = {{"lr", optimizer.lr},
                        {"beta1", optimizer.beta1},
                        {"beta2", optimizer.beta2},
                        {"eps", optimizer.eps},
                        {"weight_decay", optimizer.weight_decay},
                        {"clip_norm", optimizer.clip_norm},
                        {"step", optimizer.step}};
    doc["config"] = config_echo;
    return doc;
}

Checkpoint checkpoint_from_json(const nlohmann::json& doc) {
    if (doc.value("format_version", -1) != kFormatVersion)
        throw std::runtime_error("checkpoint: unsupported format_version");
    Checkpoint ck;
    ScoreNet& net = ck.net;
    const std::string head = doc.at("head").get<std::string>();
    if (head == "horizontal") net.head = OutputHead::kHorizontal;
    else if (head == "identity") net.head = OutputHead::kIdentity;
    else throw std::runtime_error("checkpoint: unknown head '" + head + "'");
    net.d = doc.at("d").get<Index>();
    net.hidden = doc.at("hidden").get<Index>();
    net.time_embed_dim = doc.at("time_embed_dim").get<Index>();
    net.horizon = doc.at("horizon").get<double>();
    const auto& layers = doc.at("layers");
    if (layers.size() != kNetLayers) throw std::runtime_error("checkpoint: expected 5 layers");
    const std::array<Index, kNetLayers + 1> widths = {
        net.input_dim(), net.hidden, net.hidden, net.hidden, net.hidden, net.output_dim()};
    for (std::size_t l = 0; l < kNetLayers; ++l) {
        const auto& entry = layers[l];
        const Index rows = entry.at("rows").get<Index>();
        const Index cols = entry.at("cols").get<Index>();
        if (rows != widths[l + 1] || cols != widths[l])
            throw std::runtime_error("checkpoint: layer " + std::to_string(l) + " has wrong shape");
        const auto w = entry.at("weight").get<std::vector<double>>();
        const auto b = entry.at("bias").get<std::vector<double>>();
        if (w.size() != static_cast<std::size_t>(rows * cols) || b.size() != static_cast<std::size_t>(rows))
            throw std::runtime_error("checkpoint: layer " + std::to_string(l) + " is truncated");
        auto& layer = net.params.layers[l];
        layer.weight.resize(rows, cols);
        for (Index r = 0; r < rows; ++r)
            for (Index c = 0; c < cols; ++c) layer.weight(r, c) = w[static_cast<std::size_t>(r * cols + c)];
        layer.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
    }
    if (!net.params.all_finite()) throw std::runtime_error("checkpoint: non-finite parameters");
    ck.optimizer = doc.at("optimizer");
    ck.config = doc.value("config", nlohmann::json::object());
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ScoreNet& net,
                     const AdamState& optimizer, const nlohmann::json& config_echo) {
    write_file_atomic(path, checkpoint_json(net, optimizer, config_echo).dump());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("checkpoint " + path.string() + ": " + e.what());
    }
    return checkpoint_from_json(doc);
}

}  // namespace ssdm
