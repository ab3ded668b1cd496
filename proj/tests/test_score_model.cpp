#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "ssdm/score_model.hpp"
#include "test_support.hpp"

using namespace ssdm;

namespace {

// Small net with every layer randomized, so gradients reach all parameters.
ScoreNet small_net(OutputHead head, std::uint64_t seed) {
    RngStream rng(seed);
    ScoreNet net = ScoreNet::create(2, 1.0, rng, {8, 8}, head);
    auto& last = net.params.layers[kNetLayers - 1];
    for (Index r = 0; r < last.weight.rows(); ++r) {
        for (Index c = 0; c < last.weight.cols(); ++c) last.weight(r, c) = 0.5 * rng.normal();
        last.bias(r) = 0.1 * rng.normal();
    }
    for (auto& layer : net.params.layers)
        for (Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) += 0.1 * rng.normal();
    return net;
}

std::vector<ScoreExample> horizontal_batch(std::uint64_t seed, int n) {
    RngStream rng(seed);
    std::vector<ScoreExample> out;
    for (int i = 0; i < n; ++i) {
        const PureState psi = haar_state(2, rng);
        out.push_back({psi, sample_horizontal_gaussian(psi, rng), rng.uniform(), 0.5 + rng.uniform()});
    }
    return out;
}

std::vector<EuclideanExample> euclidean_batch(std::uint64_t seed, int n) {
    RngStream rng(seed);
    std::vector<EuclideanExample> out;
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd x(4);
        Eigen::VectorXd y(4);
        for (Index j = 0; j < 4; ++j) {
            x(j) = rng.normal();
            y(j) = rng.normal();
        }
        out.push_back({x, y, rng.uniform(), 0.5 + rng.uniform()});
    }
    return out;
}

// Largest relative error between analytic gradients and a fourth-order
// five-point central difference.
template <typename LossFn>
double gradient_check(ScoreNet net, const NetParameters& analytic, LossFn loss) {
    const double h = 1e-4;
    double worst = 0.0;
    for (std::size_t l = 0; l < kNetLayers; ++l) {
        auto check = [&](Eigen::Ref<Eigen::VectorXd> flat, Eigen::Ref<const Eigen::VectorXd> grad) {
            for (Index i = 0; i < flat.size(); ++i) {
                const double keep = flat(i);
                auto at = [&](double offset) {
                    flat(i) = keep + offset;
                    return loss(net);
                };
                const double fd = (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12 * h);
                flat(i) = keep;
                const double a = grad(i);
                const double denom = std::max({std::abs(a), std::abs(fd), 1e-6});
                worst = std::max(worst, std::abs(a - fd) / denom);
            }
        };
        auto& layer = net.params.layers[l];
        check(Eigen::Map<Eigen::VectorXd>(layer.weight.data(), layer.weight.size()),
              Eigen::Map<const Eigen::VectorXd>(analytic.layers[l].weight.data(), layer.weight.size()));
        check(layer.bias, analytic.layers[l].bias);
    }
    return worst;
}

}  // namespace

TEST_CASE("time embedding layout") {
    const Eigen::VectorXd e0 = time_embed(0.0, 1.0, 128);
    REQUIRE(e0.size() == 128);
    for (Index k = 0; k < 64; ++k) {
        CHECK(e0(2 * k) == 0.0);
        CHECK(e0(2 * k + 1) == 1.0);
    }
    const Eigen::VectorXd e = time_embed(0.37, 2.0, 128);
    CHECK(e.cwiseAbs().maxCoeff() <= 1.0);
    CHECK(e(0) == doctest::Approx(std::sin(0.185)).epsilon(1e-15));
    CHECK(e(127) == doctest::Approx(std::cos(1e4 * 0.185)).epsilon(1e-9));
    CHECK(e(2 * 21) == doctest::Approx(std::sin(std::pow(10.0, 4.0 * 21 / 63) * 0.185)).epsilon(1e-12));
}

TEST_CASE("real/complex layout round trips") {
    ComplexVector<double> v(3);
    v << std::complex<double>(1, 2), std::complex<double>(3, 4), std::complex<double>(5, 6);
    const Eigen::VectorXd r = to_real(v);
    CHECK(r(0) == 1.0);
    CHECK(r(3) == 2.0);
    CHECK(to_complex(r) == v);
}

TEST_CASE("fresh networks output a zero score and have He-uniform hidden weights") {
    RngStream rng(1);
    const ScoreNet net = ScoreNet::create(4, 1.0, rng);
    CHECK(net.input_dim() == 8 + 128);
    CHECK(net.params.layers[0].weight.rows() == 512);
    CHECK(net.params.layers[4].weight.rows() == 8);
    const double limit = std::sqrt(6.0 / 136.0);
    CHECK(net.params.layers[0].weight.cwiseAbs().maxCoeff() <= limit);
    CHECK(net.params.layers[0].weight.cwiseAbs().maxCoeff() > 0.9 * limit);
    CHECK(net.params.layers[4].weight.isZero(0.0));
    RngStream s(2);
    CHECK(score_forward(net, haar_state(4, s), 0.5).norm() == 0.0);
    CHECK_THROWS_AS(ScoreNet::create(1, 1.0, rng), std::invalid_argument);
}

TEST_CASE("scores are horizontal and independent of batch composition") {
    const ScoreNet net = small_net(OutputHead::kHorizontal, 3);
    RngStream rng(4);
    std::vector<PureState> states;
    std::vector<double> times;
    for (int i = 0; i < 150; ++i) {
        states.push_back(haar_state(2, rng));
        times.push_back(rng.uniform());
    }
    const auto batch = score_forward_batch(net, states, times);
    for (std::size_t i = 0; i < states.size(); ++i) {
        CHECK(std::abs(states[i].amplitudes().dot(batch[i].components())) < 1e-14);
        const TangentVector alone = score_forward(net, states[i], times[i]);
        CHECK(alone.components() == batch[i].components());
    }
}

TEST_CASE("analytic gradients match central differences") {
    SUBCASE("horizontal head") {
        const ScoreNet net = small_net(OutputHead::kHorizontal, 5);
        const auto batch = horizontal_batch(6, 5);
        const LossAndGrads lg = loss_and_grads(net, batch);
        const double err = gradient_check(net, lg.grads,
                                          [&](const ScoreNet& n) { return loss_and_grads(n, batch).loss; });
        CHECK(err < 1e-5);
    }
    SUBCASE("identity head") {
        const ScoreNet net = small_net(OutputHead::kIdentity, 7);
        const auto batch = euclidean_batch(8, 5);
        const LossAndGrads lg = euclidean_loss_and_grads(net, batch);
        const double err = gradient_check(
            net, lg.grads, [&](const ScoreNet& n) { return euclidean_loss_and_grads(n, batch).loss; });
        CHECK(err < 1e-5);
    }
}

TEST_CASE("loss is the weighted mean squared error") {
    const ScoreNet net = small_net(OutputHead::kHorizontal, 9);
    const auto batch = horizontal_batch(10, 3);
    double expected = 0.0;
    for (const auto& ex : batch)
        expected += ex.weight * (score_forward(net, ex.psi, ex.t).components() - ex.target.components()).squaredNorm();
    expected /= 3.0;
    CHECK(loss_and_grads(net, batch).loss == doctest::Approx(expected).epsilon(1e-12));

    auto bad = batch;
    RngStream rng(13);
    bad[0].target = sample_horizontal_gaussian(haar_state(2, rng), rng);
    CHECK_THROWS_AS(loss_and_grads(net, bad), std::invalid_argument);
}

TEST_CASE("Adam step: unit-magnitude first update, clipping and non-finite guard") {
    ScoreNet net = small_net(OutputHead::kHorizontal, 11);
    const ScoreNet before = net;
    AdamState opt = AdamState::for_net(net);
    NetParameters g = net.params.zeros_like();
    g.layers[0].bias(0) = 0.25;
    g.layers[2].weight(1, 1) = -0.5;
    const double norm = adam_step(net, opt, g);
    CHECK(norm == doctest::Approx(std::sqrt(0.25 * 0.25 + 0.25)).epsilon(1e-15));
    CHECK(before.params.layers[0].bias(0) - net.params.layers[0].bias(0) == doctest::Approx(2e-4).epsilon(1e-6));
    CHECK(net.params.layers[2].weight(1, 1) - before.params.layers[2].weight(1, 1) == doctest::Approx(2e-4).epsilon(1e-6));
    CHECK(net.params.layers[1].weight == before.params.layers[1].weight);

    // Clipping: a huge gradient produces the same first moment as its clipped version.
    ScoreNet a = before;
    AdamState oa = AdamState::for_net(a);
    NetParameters big = g;
    big.layers[0].bias(0) *= 1e6;
    big.layers[2].weight(1, 1) *= 1e6;
    adam_step(a, oa, big);
    const double clipped_norm = std::sqrt(oa.first_moment.squared_norm()) / (1.0 - opt.beta1);
    CHECK(clipped_norm == doctest::Approx(1.0).epsilon(1e-12));

    NetParameters nan = g;
    nan.layers[3].bias(0) = std::nan("");
    CHECK_THROWS_AS(adam_step(net, opt, nan), std::runtime_error);
}

TEST_CASE("checkpoints round trip bit-exactly") {
    const ScoreNet net = small_net(OutputHead::kIdentity, 12);
    AdamState opt = AdamState::for_net(net);
    opt.step = 17;
    const auto path = std::filesystem::temp_directory_path() / "ssdm_test_checkpoint.json";
    save_checkpoint(path, net, opt, nlohmann::json{{"note", "x"}});
    const Checkpoint ck = load_checkpoint(path);
    CHECK(ck.net.head == OutputHead::kIdentity);
    CHECK(ck.net.d == 2);
    for (std::size_t l = 0; l < kNetLayers; ++l) {
        CHECK(ck.net.params.layers[l].weight == net.params.layers[l].weight);
        CHECK(ck.net.params.layers[l].bias == net.params.layers[l].bias);
    }
    CHECK(ck.optimizer.at("step").get<long long>() == 17);
    CHECK(ck.config.at("note") == "x");

    nlohmann::json doc = checkpoint_json(net, opt, {});
    doc["format_version"] = 99;
    CHECK_THROWS_AS(checkpoint_from_json(doc), std::runtime_error);
    doc = checkpoint_json(net, opt, {});
    doc["layers"][1]["rows"] = 3;
    CHECK_THROWS_AS(checkpoint_from_json(doc), std::runtime_error);
    std::filesystem::remove(path);
}
