#include "ssdm/data_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <set>

#include "ssdm/atomic_file.hpp"
#include "ssdm/parallel.hpp"

namespace ssdm {

static_assert(std::endian::native == std::endian::little,
              "ensemble I/O assumes a little-endian host");

Ensemble make_cluster_ensemble(int n_qubits, double epsilon, std::size_t count,
                               const RngStream& rng) {
    if (n_qubits < 1 || n_qubits > 20)
        throw std::invalid_argument("make_cluster_ensemble: n_qubits out of range");
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon))
        throw std::invalid_argument("make_cluster_ensemble: epsilon must be >= 0");
    const Index d = Index(1) << n_qubits;
    const double scale = epsilon * std::sqrt(0.5);
    Ensemble out(count);
    parallel_for(count, [&](std::size_t i) {
        RngStream r = rng.derive(stream_tag::kData, i);
        ComplexVector<double> v(d);
        for (Index j = 0; j < d; ++j) {
            const auto z = r.normal_pair();
            v(j) = {scale * z[0], scale * z[1]};
        }
        v(0) += 1.0;
        out[i] = PureState(std::move(v));
    });
    return out;
}

namespace {

template <typename T>
void put(std::string& buf, T value) {
    char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    buf.append(raw, sizeof(T));
}

template <typename T>
T get(std::string_view bytes, std::size_t offset) {
    T value;
    std::memcpy(&value, bytes.data() + offset, sizeof(T));
    return value;
}

}  // namespace

std::string encode_ensemble(std::span<const PureState> ens, std::uint32_t dim_if_empty) {
    const std::uint32_t d = ens.empty() ? dim_if_empty : static_cast<std::uint32_t>(ens.front().dim());
    std::string buf;
    buf.reserve(kEnsembleHeaderBytes + 16 * static_cast<std::size_t>(d) * ens.size());
    buf.append("SSDM", 4);
    put<std::uint16_t>(buf, kEnsembleFormatVersion);
    put<std::uint32_t>(buf, d);
    put<std::uint64_t>(buf, ens.size());
    for (const auto& s : ens) {
        if (s.dim() != static_cast<Index>(d)) throw DimensionMismatch(d, s.dim());
        for (Index j = 0; j < s.dim(); ++j) {
            put<double>(buf, s.amplitudes()(j).real());
            put<double>(buf, s.amplitudes()(j).imag());
        }
    }
    return buf;
}

Ensemble decode_ensemble(std::string_view bytes) {
    if (bytes.size() < 4) throw FormatError("truncated magic", bytes.size());
    if (bytes.substr(0, 4) != "SSDM") throw FormatError("bad magic", 0);
    if (bytes.size() < kEnsembleHeaderBytes) throw FormatError("truncated header", bytes.size());
    const auto version = get<std::uint16_t>(bytes, 4);
    if (version != kEnsembleFormatVersion)
        throw FormatError("unsupported format version " + std::to_string(version), 4);
    const auto d = get<std::uint32_t>(bytes, 6);
    const auto count = get<std::uint64_t>(bytes, 10);
    if (count > 0 && d < 2) throw FormatError("dimension " + std::to_string(d) + " below 2", 6);
    const std::uint64_t payload = bytes.size() - kEnsembleHeaderBytes;
    const std::uint64_t per_state = 16ULL * d;
    if (per_state != 0 && count > payload / per_state)
        throw FormatError("truncated payload for " + std::to_string(count) + " states", bytes.size());
    const std::uint64_t expected = kEnsembleHeaderBytes + per_state * count;
    if (bytes.size() != expected) throw FormatError("trailing bytes after payload", expected);

    Ensemble out;
    out.reserve(count);
    std::size_t offset = kEnsembleHeaderBytes;
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::size_t start = offset;
        ComplexVector<double> v(d);
        for (std::uint32_t j = 0; j < d; ++j) {
            v(j) = {get<double>(bytes, offset), get<double>(bytes, offset + 8)};
            offset += 16;
        }
        try {
            out.push_back(PureState::from_unit(std::move(v), 1e-10));
        } catch (const std::exception& e) {
            throw FormatError(std::string("invalid state: ") + e.what(), start);
        }
    }
    return out;
}

void write_ensemble(const std::filesystem::path& path, std::span<const PureState> ens) {
    write_file_atomic(path, encode_ensemble(ens));
}

Ensemble read_ensemble(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    try {
        return decode_ensemble(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what(), e.offset());
    }
}

std::string to_string(ModelKind kind) { return kind == ModelKind::kVp ? "vp" : "ssdm"; }

ModelKind model_kind_from_string(const std::string& name) {
    if (name == "ssdm") return ModelKind::kSsdm;
    if (name == "vp") return ModelKind::kVp;
    throw std::invalid_argument("unknown model '" + name + "' (expected ssdm or vp)");
}

ExperimentConfig ExperimentConfig::defaults(int n_qubits) {
    ExperimentConfig cfg;
    cfg.n_qubits = n_qubits;
    cfg.validate();
    return cfg;
}

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("config: " + what); };
    if (n_qubits < 1 || n_qubits > 12) fail("n_qubits must be in [1, 12]");
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) fail("epsilon must be >= 0");
    if (pool_size < 1) fail("pool_size must be positive");
    if (eval_count < 1) fail("eval_count must be positive");
    if (train_steps < 0) fail("train_steps must be >= 0");
    if (batch < 1) fail("batch must be positive");
    if (hidden_width < 1) fail("hidden_width must be positive");
    if (time_embed_dim < 2 || time_embed_dim % 2 != 0) fail("time_embed_dim must be even and >= 2");
    if (log_every < 0) fail("log_every must be >= 0");
    if (out_dir.empty()) fail("out_dir must not be empty");
    schedule().validate();
    train_config().validate();
}

NoiseSchedule ExperimentConfig::schedule() const {
    NoiseSchedule s = NoiseSchedule::defaults(dim());
    s.sigma_min = sigma_min;
    s.sigma_max = sigma_max;
    s.horizon = horizon;
    s.n_steps = n_steps;
    s.lambda_ou = lambda_ou;
    s.drift_sign = drift_sign;
    return s;
}

TrainConfig ExperimentConfig::train_config() const {
    TrainConfig t;
    t.steps = train_steps;
    t.batch = batch;
    t.pool_size = pool_size;
    t.schedule = schedule();
    t.seed = seed;
    t.log_every = log_every;
    t.shape = {hidden_width, time_embed_dim};
    t.lr = lr;
    t.beta1 = beta1;
    t.beta2 = beta2;
    t.adam_eps = adam_eps;
    t.weight_decay = weight_decay;
    t.clip_norm = clip_norm;
    return t;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
    using nlohmann::json;
    return json{
        {"data", {{"n_qubits", c.n_qubits}, {"epsilon", c.epsilon}, {"pool_size", c.pool_size},
                  {"eval_count", c.eval_count}}},
        {"schedule", {{"sigma_min", c.sigma_min}, {"sigma_max", c.sigma_max},
                      {"horizon", c.horizon}, {"n_steps", c.n_steps},
                      {"lambda_ou", c.lambda_ou}, {"drift_sign", c.drift_sign}}},
        {"train", {{"model", to_string(c.model)}, {"steps", c.train_steps}, {"batch", c.batch},
                   {"hidden_width", c.hidden_width}, {"time_embed_dim", c.time_embed_dim},
                   {"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2},
                   {"adam_eps", c.adam_eps}, {"weight_decay", c.weight_decay},
                   {"clip_norm", c.clip_norm}, {"log_every", c.log_every}}},
        {"run", {{"seed", c.seed}, {"out_dir", c.out_dir}}},
    };
}

namespace {

// One JSON object with a fixed key set: unknown keys are rejected before
// any value is read, and every declared key must be present.
class StrictObject {
public:
    StrictObject(const nlohmann::json& doc, std::string path, std::initializer_list<const char*> keys)
        : doc_(doc), path_(std::move(path)) {
        if (!doc_.is_object()) throw std::invalid_argument("config: '" + path_ + "' must be an object");
        const std::set<std::string> allowed(keys.begin(), keys.end());
        for (const auto& [key, _] : doc_.items())
            if (!allowed.contains(key))
                throw std::invalid_argument("config: unknown key '" + qualified(key) + "'");
        for (const auto& key : allowed)
            if (!doc_.contains(key))
                throw std::invalid_argument("config: missing key '" + qualified(key) + "'");
    }

    template <typename T>
    void read(const std::string& key, T& out) const {
        const auto& v = doc_.at(key);
        try {
            if constexpr (std::is_same_v<T, double>) {
                if (!v.is_number()) throw std::invalid_argument("expected a number");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
                if constexpr (std::is_unsigned_v<T>)
                    if (!v.is_number_unsigned())
                        throw std::invalid_argument("expected a non-negative integer");
            } else {
                if (!v.is_string()) throw std::invalid_argument("expected a string");
            }
            out = v.get<T>();
        } catch (const std::exception& e) {
            throw std::invalid_argument("config: key '" + qualified(key) + "': " + e.what());
        }
    }

    StrictObject child(const std::string& key, std::initializer_list<const char*> keys) const {
        return StrictObject(doc_.at(key), qualified(key), keys);
    }

private:
    std::string qualified(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

    const nlohmann::json& doc_;
    std::string path_;
};

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& doc) {
    ExperimentConfig c;
    const StrictObject root(doc, "", {"data", "schedule", "train", "run"});

    const StrictObject data = root.child("data", {"n_qubits", "epsilon", "pool_size", "eval_count"});
    data.read("n_qubits", c.n_qubits);
    data.read("epsilon", c.epsilon);
    data.read("pool_size", c.pool_size);
    data.read("eval_count", c.eval_count);

    const StrictObject sched = root.child(
        "schedule", {"sigma_min", "sigma_max", "horizon", "n_steps", "lambda_ou", "drift_sign"});
    sched.read("sigma_min", c.sigma_min);
    sched.read("sigma_max", c.sigma_max);
    sched.read("horizon", c.horizon);
    sched.read("n_steps", c.n_steps);
    sched.read("lambda_ou", c.lambda_ou);
    sched.read("drift_sign", c.drift_sign);

    const StrictObject train =
        root.child("train", {"model", "steps", "batch", "hidden_width", "time_embed_dim", "lr",
                             "beta1", "beta2", "adam_eps", "weight_decay", "clip_norm", "log_every"});
    std::string model;
    train.read("model", model);
    c.model = model_kind_from_string(model);
    train.read("steps", c.train_steps);
    train.read("batch", c.batch);
    train.read("hidden_width", c.hidden_width);
    train.read("time_embed_dim", c.time_embed_dim);
    train.read("lr", c.lr);
    train.read("beta1", c.beta1);
    train.read("beta2", c.beta2);
    train.read("adam_eps", c.adam_eps);
    train.read("weight_decay", c.weight_decay);
    train.read("clip_norm", c.clip_norm);
    train.read("log_every", c.log_every);

    const StrictObject run = root.child("run", {"seed", "out_dir"});
    run.read("seed", c.seed);
    run.read("out_dir", c.out_dir);

    c.validate();
    return c;
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg) {
    cfg.validate();
    write_file_atomic(path, config_to_json(cfg).dump(2) + "\n");
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument("config: " + path.string() + ": " + e.what());
    }
    return config_from_json(doc);
}

}  // namespace ssdm
