#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "ssdm/diffusion.hpp"
#include "test_support.hpp"

using namespace ssdm;

namespace {

NoiseSchedule schedule_d(Index d) { return NoiseSchedule::defaults(d); }

double simpson(auto f, double a, double b, int n) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

struct MeanAndError {
    double mean;
    double se;
};

MeanAndError mean_and_error(const std::vector<double>& x) {
    double m = 0.0;
    for (double v : x) m += v;
    m /= static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return {m, std::sqrt(ss / static_cast<double>(x.size() - 1) / static_cast<double>(x.size()))};
}

}  // namespace

TEST_CASE("default schedule constants") {
    const NoiseSchedule s = schedule_d(4);
    CHECK(s.sigma_min == 0.05);
    CHECK(s.sigma_max == 1.0);
    CHECK(s.horizon == 1.0);
    CHECK(s.n_steps == 500);
    CHECK(s.lambda_ou == 0.2);
    CHECK(s.dt() == doctest::Approx(0.002));
    CHECK(std::abs(overlap(s.anchor, PureState::uniform(4)) - 1.0) < 1e-15);
    CHECK_NOTHROW(s.validate());
}

TEST_CASE("sigma schedule is geometric between its endpoints") {
    const NoiseSchedule s = schedule_d(2);
    CHECK(sigma_at(s, 0.0) == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(sigma_at(s, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(sigma_at(s, 0.5) == doctest::Approx(std::sqrt(0.05)).epsilon(1e-14));
    CHECK_THROWS_AS(sigma_at(s, 1.1), std::out_of_range);
    CHECK_THROWS_AS(sigma_at(s, -0.1), std::out_of_range);

    NoiseSchedule flat = s;
    flat.sigma_min = flat.sigma_max = 2.0;
    CHECK(sigma_at(flat, 0.7) == 2.0);
    CHECK(integrated_variance(flat, 0.7) == doctest::Approx(4.0 * 0.7).epsilon(1e-15));
}

TEST_CASE("integrated variance matches quadrature") {
    const NoiseSchedule s = schedule_d(2);
    for (double t : {0.0, 0.1, 0.5, 1.0}) {
        const double oracle = simpson([&](double u) { return std::pow(sigma_at(s, u), 2); }, 0.0, t, 2000);
        CHECK(integrated_variance(s, t) == doctest::Approx(oracle).epsilon(1e-10));
    }
}

TEST_CASE("schedule validation") {
    NoiseSchedule s = schedule_d(2);
    s.sigma_min = 2.0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = schedule_d(2);
    s.n_steps = 0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = schedule_d(2);
    s.drift_sign = 0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = schedule_d(2);
    s.lambda_ou = -1.0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    CHECK_THROWS_AS(NoiseSchedule{}.validate(), std::invalid_argument);
}

TEST_CASE("drift is lambda times the log map with the configured sign") {
    RngStream rng(1);
    NoiseSchedule s = schedule_d(3);
    const PureState psi = haar_state(3, rng);
    const TangentVector toward = log_map(psi, s.anchor);
    s.drift_sign = 1;
    CHECK((drift(s, psi, 0.3).components() - 0.2 * toward.components()).norm() < 1e-15);
    s.drift_sign = -1;
    CHECK((drift(s, psi, 0.3).components() + 0.2 * toward.components()).norm() < 1e-15);
    s.lambda_ou = 0.0;
    CHECK(drift(s, psi, 0.3).norm() == 0.0);
    // Orthogonal to the anchor: the drift is undefined and replaced by zero.
    NoiseSchedule e = schedule_d(2);
    e.anchor = PureState::basis(2, 0);
    CHECK(drift(e, PureState::basis(2, 1), 0.1).norm() == 0.0);
}

TEST_CASE("forward step with dt = 0 is the identity and steps stay normalized") {
    RngStream rng(2);
    const NoiseSchedule s = schedule_d(4);
    const PureState psi = haar_state(4, rng);
    CHECK(forward_step(s, psi, 0.5, 0.0, rng).amplitudes() == psi.amplitudes());
    PureState x = psi;
    for (int k = 0; k < 500; ++k) x = forward_step(s, x, k * s.dt(), s.dt(), rng);
    CHECK(x.amplitudes().norm() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("forward generator on CP^1 matches the Laplacian plus OU drift") {
    // f = |<psi,e1>|^2 = cos^2 r; L f = -2 sigma^2 cos 2r + s lambda r sin 2r,
    // since CP^1 is the sphere of radius 1/2.
    const double r0 = 0.4;
    ComplexVector<double> v(2);
    v << std::cos(r0), std::sin(r0);
    const PureState psi0(v);
    const PureState e1 = PureState::basis(2, 0);
    for (int sign : {1, -1}) {
        NoiseSchedule s = schedule_d(2);
        s.sigma_min = s.sigma_max = 0.8;
        s.lambda_ou = 0.5;
        s.drift_sign = sign;
        s.anchor = e1;
        const double dt = 1e-3;
        const int n = 200000;
        RngStream rng(10 + static_cast<std::uint64_t>(sign + 1));
        std::vector<double> inc(n);
        const double f0 = std::norm(overlap(psi0, e1));
        for (int i = 0; i < n; ++i) inc[static_cast<std::size_t>(i)] =
            (std::norm(overlap(forward_step(s, psi0, 0.0, dt, rng), e1)) - f0) / dt;
        const auto [mean, se] = mean_and_error(inc);
        const double expected = -2.0 * 0.64 * std::cos(2 * r0) + sign * 0.5 * r0 * std::sin(2 * r0);
        CHECK(std::abs(mean - expected) < 4.0 * se + 0.02 * std::abs(expected));
    }
}

TEST_CASE("simulate_forward is reproducible and handles off-grid end times") {
    const NoiseSchedule s = schedule_d(4);
    RngStream a(3);
    RngStream b(3);
    const PureState psi0 = PureState::basis(4, 0);
    const PureState x = simulate_forward(s, psi0, 0.3333, a);
    const PureState y = simulate_forward(s, psi0, 0.3333, b);
    CHECK(x.amplitudes() == y.amplitudes());
    CHECK(a.counter() == b.counter());
    RngStream c(3);
    CHECK(simulate_forward(s, psi0, 0.0, c).amplitudes() == psi0.amplitudes());
}

TEST_CASE("local pairs are one step apart and off the cut locus") {
    const NoiseSchedule s = schedule_d(4);
    RngStream rng(4);
    const PureState psi0 = PureState::basis(4, 0);
    for (int i = 0; i < 50; ++i) {
        const double t = s.dt() + (1.0 - s.dt()) * rng.uniform();
        const LocalPair p = simulate_pair(s, psi0, t, rng);
        CHECK(p.t == t);
        CHECK(p.dt == s.dt());
        CHECK(fs_distance(p.phi, p.psi) < std::numbers::pi / 2 - 1e-6);
    }
    CHECK_THROWS_AS(simulate_pair(s, psi0, 0.0005, rng), std::out_of_range);
}

TEST_CASE("SSE steps are norm preserving and vanish without coupling") {
    RngStream rng(5);
    const auto g = gell_mann_basis(3);
    const PureState psi = haar_state(3, rng);
    CHECK(sse_step(g, 0.0, psi, 1e-4, rng).amplitudes() == psi.amplitudes());
    PureState x = psi;
    for (int k = 0; k < 1000; ++k) x = sse_step(g, 1.0, x, 1e-4, rng);
    CHECK(x.amplitudes().norm() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK_THROWS_AS(sse_step(g, 1.0, psi, 0.5, rng), std::runtime_error);
    CHECK_THROWS_AS(sse_step(g, -1.0, psi, 1e-4, rng), std::invalid_argument);
}

TEST_CASE("SSE calibration matches the intrinsic short-time displacement") {
    RngStream cal(6);
    const double ratio = calibrate_sse_rate(2, 1.0, 1e-4, cal, 100000);
    CHECK(ratio > 0.0);
    RngStream fresh(7);
    const double measured = sse_displacement_ratio(2, ratio, 1.0, 1e-4, 100000, fresh);
    CHECK(measured > 0.98);
    CHECK(measured < 1.02);
    // The rate scales with sigma^2, so eta / sigma^2 is sigma-independent.
    RngStream cal2(6);
    CHECK(calibrate_sse_rate(2, 2.0, 1e-4, cal2, 100000) == doctest::Approx(ratio).epsilon(0.01));
    RngStream bad(8);
    CHECK_THROWS_AS(calibrate_sse_rate(2, 1.0, 0.01, bad), std::invalid_argument);
}

TEST_CASE("VP forward steps reproduce the closed-form marginal") {
    const NoiseSchedule s = schedule_d(2);
    for (double t : {0.0, 0.3, 1.0}) {
        const VpMarginal m = vp_marginal(s, t);
        CHECK(m.alpha * m.alpha + m.stddev * m.stddev == doctest::Approx(1.0).epsilon(1e-15));
    }
    CHECK(vp_marginal(s, 0.0).stddev == 0.0);

    RngStream rng(9);
    const int n = 20000;
    const double t_end = 1.0;
    Eigen::VectorXd x0(1);
    x0 << 1.5;
    double m1 = 0.0;
    double m2 = 0.0;
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd x = x0;
        for (int k = 0; k < s.n_steps; ++k) x = vp_forward_step(x, k * s.dt(), s.dt(), s, rng);
        m1 += x(0);
        m2 += x(0) * x(0);
    }
    m1 /= n;
    const double var = m2 / n - m1 * m1;
    const VpMarginal m = vp_marginal(s, t_end);
    CHECK(m1 == doctest::Approx(m.alpha * 1.5).epsilon(0.02));
    CHECK(var == doctest::Approx(m.stddev * m.stddev).epsilon(0.04));
}
