#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "ssdm/data_io.hpp"
#include "test_support.hpp"

using namespace ssdm;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

std::string error_message(auto fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

bool bit_equal(const Ensemble& a, const Ensemble& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto& x = a[i].amplitudes();
        const auto& y = b[i].amplitudes();
        if (x.size() != y.size() ||
            std::memcmp(x.data(), y.data(), sizeof(std::complex<double>) * static_cast<std::size_t>(x.size())) != 0)
            return false;
    }
    return true;
}

}  // namespace

TEST_CASE("cluster ensembles: zero width, unit norm and index keying") {
    const RngStream rng(1);
    for (const auto& psi : make_cluster_ensemble(2, 0.0, 10, rng))
        CHECK(psi.amplitudes() == PureState::basis(4, 0).amplitudes());

    const Ensemble a = make_cluster_ensemble(3, 0.1, 50, rng);
    REQUIRE(a.size() == 50);
    for (const auto& psi : a) {
        CHECK(psi.dim() == 8);
        CHECK(std::abs(psi.amplitudes().norm() - 1.0) < 1e-12);
    }
    // Each state depends on its own index only.
    const Ensemble prefix = make_cluster_ensemble(3, 0.1, 20, rng);
    for (std::size_t i = 0; i < prefix.size(); ++i) CHECK(prefix[i].amplitudes() == a[i].amplitudes());
    const Ensemble other = make_cluster_ensemble(3, 0.1, 20, RngStream(2));
    CHECK(other[0].amplitudes() != a[0].amplitudes());

    CHECK_THROWS_AS(make_cluster_ensemble(0, 0.1, 1, rng), std::invalid_argument);
    CHECK_THROWS_AS(make_cluster_ensemble(2, -0.1, 1, rng), std::invalid_argument);
}

TEST_CASE("cluster overlap with the centre matches a direct Monte Carlo of the defining formula") {
    // xi ~ CN(0, I): real and imaginary parts N(0, 1/2).
    const double eps = 0.1;
    const int n = 100000;
    const Ensemble ens = make_cluster_ensemble(2, eps, n, RngStream(3));
    double m_gen = 0.0;
    double s_gen = 0.0;
    for (const auto& psi : ens) {
        const double f = std::norm(psi.amplitudes()(0));
        m_gen += f;
        s_gen += f * f;
    }
    RngStream rng(4);
    double m_ref = 0.0;
    double s_ref = 0.0;
    const double h = std::sqrt(0.5);
    for (int i = 0; i < n; ++i) {
        const std::complex<double> lead(1.0 + eps * h * rng.normal(), eps * h * rng.normal());
        double rest = 0.0;
        for (int j = 1; j < 4; ++j) rest += std::pow(eps * h * rng.normal(), 2) + std::pow(eps * h * rng.normal(), 2);
        const double f = std::norm(lead) / (std::norm(lead) + rest);
        m_ref += f;
        s_ref += f * f;
    }
    m_gen /= n;
    m_ref /= n;
    const double se = std::sqrt((s_gen / n - m_gen * m_gen + s_ref / n - m_ref * m_ref) / n);
    CHECK(std::abs(m_gen - m_ref) < 4.0 * se);
    CHECK(m_gen == doctest::Approx(0.971).epsilon(0.003));
}

TEST_CASE("ensemble files round trip bit-exactly with the documented layout") {
    const Ensemble ens = make_cluster_ensemble(2, 0.3, 4096, RngStream(5));
    const auto path = temp_file("ssdm_io_roundtrip.ssdm");
    write_ensemble(path, ens);
    CHECK(std::filesystem::file_size(path) == 18 + 16 * 4 * 4096);
    CHECK(bit_equal(read_ensemble(path), ens));

    const std::string bytes = encode_ensemble(ens);
    CHECK(bytes.substr(0, 4) == "SSDM");
    CHECK(static_cast<unsigned char>(bytes[4]) == 1);
    CHECK(static_cast<unsigned char>(bytes[5]) == 0);
    CHECK(static_cast<unsigned char>(bytes[6]) == 4);
    std::uint64_t count = 0;
    for (int i = 7; i >= 0; --i) count = (count << 8) | static_cast<unsigned char>(bytes[10 + static_cast<std::size_t>(i)]);
    CHECK(count == 4096);
    double re0 = 0.0;
    std::memcpy(&re0, bytes.data() + 18, 8);
    CHECK(re0 == ens[0].amplitudes()(0).real());

    for (int n_qubits : {1, 3}) {
        const Ensemble small = make_cluster_ensemble(n_qubits, 0.5, 7, RngStream(6));
        CHECK(bit_equal(decode_ensemble(encode_ensemble(small)), small));
    }
    const Ensemble empty;
    const std::string eb = encode_ensemble(empty, 4);
    CHECK(eb.size() == 18);
    CHECK(decode_ensemble(eb).empty());
    std::filesystem::remove(path);
}

TEST_CASE("malformed ensemble files are rejected with byte offsets") {
    const Ensemble ens = make_cluster_ensemble(1, 0.2, 3, RngStream(7));
    const std::string good = encode_ensemble(ens);

    std::string bad_magic = good;
    bad_magic[0] = 'X';
    try {
        decode_ensemble(bad_magic);
        FAIL("bad magic accepted");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 0);
    }

    std::string bad_version = good;
    bad_version[4] = 2;
    try {
        decode_ensemble(bad_version);
        FAIL("bad version accepted");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 4);
    }

    CHECK_THROWS_AS(decode_ensemble(good.substr(0, good.size() - 3)), FormatError);
    CHECK_THROWS_AS(decode_ensemble(good.substr(0, 10)), FormatError);
    CHECK_THROWS_AS(decode_ensemble(good + "x"), FormatError);

    // Non-normalized payload.
    std::string scaled = good;
    const double two = 2.0;
    std::memcpy(scaled.data() + 18, &two, 8);
    try {
        decode_ensemble(scaled);
        FAIL("non-normalized state accepted");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 18);
    }

    const auto path = temp_file("ssdm_io_bad.ssdm");
    write_text(path, bad_magic);
    CHECK_THROWS_AS(read_ensemble(path), FormatError);
    std::filesystem::remove(path);
    CHECK_THROWS(read_ensemble(temp_file("ssdm_io_missing.ssdm")));
}

TEST_CASE("default configuration constants") {
    const ExperimentConfig c = ExperimentConfig::defaults(2);
    CHECK(c.sigma_min == 0.05);
    CHECK(c.sigma_max == 1.0);
    CHECK(c.n_steps == 500);
    CHECK(c.lambda_ou == 0.2);
    CHECK(c.lr == 2e-4);
    CHECK(c.batch == 64);
    CHECK(c.train_steps == 10000);
    CHECK(c.pool_size == 4096);
    CHECK(c.hidden_width == 512);
    CHECK(c.time_embed_dim == 128);
    CHECK(c.clip_norm == 1.0);
    CHECK(c.epsilon == 0.1);
    CHECK(c.dim() == 4);
    CHECK(c.schedule().dt() == doctest::Approx(0.002));
    CHECK(c.train_config().steps == 10000);
}

TEST_CASE("configuration files are strict and round trip") {
    ExperimentConfig c = ExperimentConfig::defaults(3);
    c.epsilon = 0.123456789012345;
    c.model = ModelKind::kVp;
    c.seed = 18446744073709551615ULL;
    c.out_dir = "runs/x";
    const auto path = temp_file("ssdm_config_test.json");
    save_config(path, c);
    const ExperimentConfig back = load_config(path);
    CHECK(config_to_json(back) == config_to_json(c));
    CHECK(back.epsilon == c.epsilon);
    CHECK(back.seed == c.seed);
    CHECK(back.model == ModelKind::kVp);

    nlohmann::json doc = config_to_json(c);
    doc["schedule"]["sigma_mx"] = 1.0;
    CHECK(error_message([&] { config_from_json(doc); }).find("sigma_mx") != std::string::npos);

    doc = config_to_json(c);
    doc["train"].erase("lr");
    CHECK(error_message([&] { config_from_json(doc); }).find("lr") != std::string::npos);

    doc = config_to_json(c);
    doc["train"]["batch"] = "big";
    CHECK_THROWS_AS(config_from_json(doc), std::invalid_argument);

    doc = config_to_json(c);
    doc["data"]["n_qubits"] = 0;
    CHECK_THROWS_AS(config_from_json(doc), std::invalid_argument);

    write_text(path, "{not json");
    CHECK_THROWS_AS(load_config(path), std::invalid_argument);
    std::filesystem::remove(path);

    CHECK(model_kind_from_string(to_string(ModelKind::kSsdm)) == ModelKind::kSsdm);
    CHECK_THROWS_AS(model_kind_from_string("gan"), std::invalid_argument);
}
