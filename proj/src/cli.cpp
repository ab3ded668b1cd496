#include "ssdm/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>

#include "ssdm/atomic_file.hpp"
#include "ssdm/parallel.hpp"
#include "ssdm/sampler.hpp"

namespace ssdm {

namespace fs = std::filesystem;

namespace {

// Stage streams split from a master seed by the fixed purpose tags.
RngStream pool_stream(std::uint64_t seed) { return RngStream(seed).derive(stream_tag::kData, 0); }
RngStream target_stream(std::uint64_t seed) { return RngStream(seed).derive(stream_tag::kData, 1); }
RngStream train_stream(std::uint64_t seed) { return RngStream(seed).derive(stream_tag::kTrain); }
std::uint64_t sample_seed(std::uint64_t seed) {
    return RngStream(seed).derive(stream_tag::kSample).seed();
}

fs::path sidecar(const fs::path& p) {
    fs::path s = p;
    s += ".json";
    return s;
}

// Binary ensembles and the training log have no room for provenance, so
// each gets a JSON sidecar with the config echo and seed.
void write_sidecar(const fs::path& p, const std::string& kind, std::uint64_t seed,
                   const nlohmann::json& config) {
    const nlohmann::json doc{{"kind", kind}, {"seed", seed}, {"config", config}};
    write_file_atomic(sidecar(p), doc.dump(2) + "\n");
}

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string(name) + ": " + e.what());
    }
}

int qubits_of(Index d) { return detail::log2_exact(d); }

TrainResult train_model(const ExperimentConfig& cfg, std::span<const PureState> data,
                        const TrainObserver& observer) {
    const TrainConfig tc = cfg.train_config();
    return cfg.model == ModelKind::kVp ? train_vp(tc, data, train_stream(cfg.seed), observer)
                                       : train(tc, data, train_stream(cfg.seed), observer);
}

Ensemble sample_model(const ScoreNet& net, const NoiseSchedule& sched, std::size_t count,
                      std::uint64_t seed) {
    return net.head == OutputHead::kIdentity ? vp_sample(net, sched, count, sample_seed(seed))
                                             : sample_ensemble(net, sched, count, sample_seed(seed));
}

std::uint64_t seed_from_sidecar(const fs::path& p) {
    if (!fs::exists(sidecar(p))) return 0;
    const auto doc = nlohmann::json::parse(read_file(sidecar(p)));
    return doc.value("seed", std::uint64_t{0});
}

TrainObserver progress_printer(std::ostream& out) {
    return [&out](const TrainLogEntry& e) {
        out << "step " << e.step << " loss " << e.loss << " wall_ms " << e.wall_ms << "\n";
        out.flush();
    };
}

void print_metrics(std::ostream& out, const EnsembleMetrics& m) {
    out << "f0 " << m.f0 << " mmd " << m.mmd << " delta_obs " << m.delta_obs << " ent_w1 "
        << m.ent_w1 << "\n";
}

int apply_threads(std::optional<int> flag) {
    int n = 1;
    if (flag) {
        n = *flag;
    } else if (const char* env = std::getenv("SSDM_THREADS"); env && *env) {
        try {
            n = std::stoi(env);
        } catch (const std::exception&) {
            throw std::invalid_argument("SSDM_THREADS must be an integer");
        }
    }
    if (n < 1) throw std::invalid_argument("thread count must be >= 1");
    set_thread_count(n);
    return n;
}

struct SseDiagnosis {
    double eta = 0.0;
    double mean = 0.0;
    double standard_error = 0.0;
    double target = 0.0;
    bool passed = false;
};

SseDiagnosis sse_diagnose(int n_qubits, double sigma, double t, int trajectories, double dt,
                          std::uint64_t seed) {
    if (!(sigma > 0.0) || !(t > 0.0) || trajectories < 2)
        throw std::invalid_argument("sse-diagnose: need sigma > 0, t > 0, trajectories >= 2");
    const Index d = Index(1) << n_qubits;
    const RngStream root(seed);
    RngStream cal = root.derive(11);
    SseDiagnosis out;
    out.eta = calibrate_sse_rate(d, sigma, dt, cal) * sigma * sigma;
    const auto generators = gell_mann_basis(d);
    const PureState psi0 = PureState::basis(d, 0);
    const auto steps = static_cast<long long>(std::llround(t / dt));
    std::vector<double> fid(static_cast<std::size_t>(trajectories));
    parallel_for(fid.size(), [&](std::size_t i) {
        RngStream r = root.derive(12, i);
        PureState psi = psi0;
        for (long long k = 0; k < steps; ++k) psi = sse_step(generators, out.eta, psi, dt, r);
        fid[i] = std::norm(overlap(psi, psi0));
    });
    double sum = 0.0;
    for (double f : fid) sum += f;
    out.mean = sum / static_cast<double>(fid.size());
    double ss = 0.0;
    for (double f : fid) ss += (f - out.mean) * (f - out.mean);
    out.standard_error = std::sqrt(ss / static_cast<double>(fid.size() - 1) / static_cast<double>(fid.size()));
    out.target = 1.0 / static_cast<double>(d);
    out.passed = std::abs(out.mean - out.target) <= 3.0 * out.standard_error;
    return out;
}

}  // namespace

PipelinePaths PipelinePaths::under(const fs::path& dir) {
    return {dir / "data.ssdm",   dir / "target.ssdm",   dir / "model.ckpt", dir / "gen.ssdm",
            dir / "metrics.csv", dir / "train_log.csv", dir / "config.json"};
}

EnsembleMetrics run_pipeline(const ExperimentConfig& cfg, const TrainObserver& observer) {
    cfg.validate();
    const PipelinePaths paths = PipelinePaths::under(cfg.out_dir);
    const nlohmann::json echo = config_to_json(cfg);
    fs::create_directories(cfg.out_dir);
    save_config(paths.config, cfg);

    const auto [pool, target] = stage("gen-data", [&] {
        Ensemble p = make_cluster_ensemble(cfg.n_qubits, cfg.epsilon,
                                           static_cast<std::size_t>(cfg.pool_size), pool_stream(cfg.seed));
        Ensemble t = make_cluster_ensemble(cfg.n_qubits, cfg.epsilon,
                                           static_cast<std::size_t>(cfg.eval_count), target_stream(cfg.seed));
        write_ensemble(paths.data, p);
        write_sidecar(paths.data, "data", cfg.seed, echo);
        write_ensemble(paths.target, t);
        write_sidecar(paths.target, "target", cfg.seed, echo);
        return std::pair{std::move(p), std::move(t)};
    });

    const TrainResult trained = stage("train", [&] {
        TrainResult r = train_model(cfg, pool, observer);
        save_checkpoint(paths.model, r.net, r.optimizer, echo);
        write_train_log_csv(paths.train_log, r.log);
        write_sidecar(paths.train_log, "train_log", cfg.seed, echo);
        return r;
    });

    const Ensemble generated = stage("sample", [&] {
        Ensemble g = sample_model(trained.net, cfg.schedule(),
                                  static_cast<std::size_t>(cfg.eval_count), cfg.seed);
        write_ensemble(paths.generated, g);
        write_sidecar(paths.generated, "generated", cfg.seed, echo);
        return g;
    });

    return stage("eval", [&] {
        const EnsembleMetrics m = evaluate(generated, target, cfg.n_qubits, cfg.seed);
        write_metrics_csv(paths.metrics, m);
        return m;
    });
}

int run_command(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Stochastic Schrodinger diffusion models on CP^{d-1}", "ssdm"};
    app.require_subcommand(1);
    std::optional<int> threads;
    app.add_option("--threads", threads, "Worker threads (falls back to SSDM_THREADS, then 1)");

    // gen-data
    int gd_qubits = 2;
    std::size_t gd_count = 4096;
    double gd_epsilon = 0.1;
    std::uint64_t gd_seed = 0;
    std::string gd_out;
    auto* gen_data = app.add_subcommand("gen-data", "Generate a clustered target ensemble");
    gen_data->add_option("--qubits", gd_qubits)->required()->check(CLI::Range(1, 12));
    gen_data->add_option("--count", gd_count)->required()->check(CLI::PositiveNumber);
    gen_data->add_option("--epsilon", gd_epsilon)->check(CLI::NonNegativeNumber);
    gen_data->add_option("--seed", gd_seed)->required();
    gen_data->add_option("--out", gd_out)->required();

    // train
    std::string tr_data;
    std::string tr_config;
    std::optional<std::uint64_t> tr_seed;
    std::string tr_out;
    std::string tr_log;
    std::optional<int> tr_steps;
    auto* train_cmd = app.add_subcommand("train", "Train a score model on an ensemble");
    train_cmd->add_option("--data", tr_data)->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--config", tr_config)->check(CLI::ExistingFile);
    train_cmd->add_option("--seed", tr_seed);
    train_cmd->add_option("--out", tr_out)->required();
    train_cmd->add_option("--log", tr_log, "Training-log CSV (default: <out>.log.csv)");
    train_cmd->add_option("--steps", tr_steps)->check(CLI::NonNegativeNumber);

    // sample
    std::string sa_model;
    std::size_t sa_count = 256;
    std::uint64_t sa_seed = 0;
    std::string sa_out;
    auto* sample_cmd = app.add_subcommand("sample", "Draw states from a trained model");
    sample_cmd->add_option("--model", sa_model)->required()->check(CLI::ExistingFile);
    sample_cmd->add_option("--count", sa_count)->check(CLI::PositiveNumber);
    sample_cmd->add_option("--seed", sa_seed)->required();
    sample_cmd->add_option("--out", sa_out)->required();

    // eval
    std::string ev_gen;
    std::string ev_target;
    std::string ev_out;
    std::optional<std::uint64_t> ev_seed;
    auto* eval_cmd = app.add_subcommand("eval", "Compare a generated ensemble with a target");
    eval_cmd->add_option("--gen", ev_gen)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--target", ev_target)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--out", ev_out)->required();
    eval_cmd->add_option("--seed", ev_seed, "Seed recorded in the CSV (default: from the gen sidecar)");

    // pipeline / baseline-vp
    std::string pl_config;
    std::optional<int> pl_qubits;
    std::optional<std::uint64_t> pl_seed;
    std::optional<std::string> pl_out;
    std::optional<int> pl_steps;
    std::optional<double> pl_epsilon;
    std::string pl_baseline = "none";
    auto add_pipeline_flags = [&](CLI::App* cmd) {
        cmd->add_option("--config", pl_config)->check(CLI::ExistingFile);
        cmd->add_option("--qubits", pl_qubits)->check(CLI::Range(1, 12));
        cmd->add_option("--seed", pl_seed);
        cmd->add_option("--out", pl_out, "Output directory");
        cmd->add_option("--steps", pl_steps)->check(CLI::NonNegativeNumber);
        cmd->add_option("--epsilon", pl_epsilon)->check(CLI::NonNegativeNumber);
    };
    auto* pipeline_cmd = app.add_subcommand("pipeline", "gen-data, train, sample and eval in one run");
    add_pipeline_flags(pipeline_cmd);
    pipeline_cmd->add_option("--baseline", pl_baseline)->check(CLI::IsMember({"none", "vp"}));
    auto* baseline_cmd = app.add_subcommand("baseline-vp", "Pipeline with the Euclidean VP baseline");
    add_pipeline_flags(baseline_cmd);

    // sse-diagnose
    int sd_qubits = 1;
    double sd_sigma = 1.0;
    double sd_t = 3.0;
    int sd_traj = 10000;
    double sd_dt = 5e-5;
    std::uint64_t sd_seed = 0;
    auto* sse_cmd = app.add_subcommand("sse-diagnose", "Check SSE relaxation toward the Haar overlap 1/d");
    sse_cmd->add_option("--qubits", sd_qubits)->check(CLI::Range(1, 6));
    sse_cmd->add_option("--sigma", sd_sigma)->check(CLI::PositiveNumber);
    sse_cmd->add_option("--t", sd_t)->check(CLI::PositiveNumber);
    sse_cmd->add_option("--trajectories", sd_traj)->check(CLI::Range(2, 100000000));
    sse_cmd->add_option("--dt", sd_dt, "SSE step (default 5e-5)")->check(CLI::Range(1e-9, 1e-3));
    sse_cmd->add_option("--seed", sd_seed);

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return 1;
    }

    try {
        apply_threads(threads);

        if (gen_data->parsed()) {
            const Ensemble ens = make_cluster_ensemble(gd_qubits, gd_epsilon, gd_count, pool_stream(gd_seed));
            write_ensemble(gd_out, ens);
            ExperimentConfig echo = ExperimentConfig::defaults(gd_qubits);
            echo.epsilon = gd_epsilon;
            echo.seed = gd_seed;
            write_sidecar(gd_out, "data", gd_seed, config_to_json(echo));
            out << "wrote " << ens.size() << " states to " << gd_out << "\n";
        } else if (train_cmd->parsed()) {
            const Ensemble data = read_ensemble(tr_data);
            if (data.empty()) throw std::invalid_argument("train: empty dataset");
            const int n = qubits_of(data.front().dim());
            ExperimentConfig cfg = tr_config.empty() ? ExperimentConfig::defaults(n) : load_config(tr_config);
            if (cfg.n_qubits != n)
                throw std::invalid_argument("train: config n_qubits " + std::to_string(cfg.n_qubits) +
                                            " does not match data dimension " + std::to_string(data.front().dim()));
            if (tr_seed) cfg.seed = *tr_seed;
            if (tr_steps) cfg.train_steps = *tr_steps;
            cfg.pool_size = static_cast<int>(data.size());
            cfg.validate();
            const TrainResult r = train_model(cfg, data, progress_printer(out));
            const nlohmann::json echo = config_to_json(cfg);
            save_checkpoint(tr_out, r.net, r.optimizer, echo);
            const fs::path log = tr_log.empty() ? fs::path(tr_out + ".log.csv") : fs::path(tr_log);
            write_train_log_csv(log, r.log);
            write_sidecar(log, "train_log", cfg.seed, echo);
            out << "wrote model to " << tr_out << "\n";
        } else if (sample_cmd->parsed()) {
            const Checkpoint ck = load_checkpoint(sa_model);
            ExperimentConfig cfg = config_from_json(ck.config);
            const Ensemble g = sample_model(ck.net, cfg.schedule(), sa_count, sa_seed);
            write_ensemble(sa_out, g);
            cfg.seed = sa_seed;
            write_sidecar(sa_out, "generated", sa_seed, config_to_json(cfg));
            out << "wrote " << g.size() << " states to " << sa_out << "\n";
        } else if (eval_cmd->parsed()) {
            const Ensemble gen = read_ensemble(ev_gen);
            const Ensemble target = read_ensemble(ev_target);
            if (gen.empty() || target.empty()) throw std::invalid_argument("eval: empty ensemble");
            const std::uint64_t seed = ev_seed ? *ev_seed : seed_from_sidecar(ev_gen);
            const EnsembleMetrics m = evaluate(gen, target, qubits_of(gen.front().dim()), seed);
            write_metrics_csv(ev_out, m);
            print_metrics(out, m);
        } else if (pipeline_cmd->parsed() || baseline_cmd->parsed()) {
            ExperimentConfig cfg;
            if (!pl_config.empty()) {
                cfg = load_config(pl_config);
                if (pl_qubits && *pl_qubits != cfg.n_qubits)
                    throw std::invalid_argument("pipeline: --qubits conflicts with the config file");
            } else {
                cfg = ExperimentConfig::defaults(pl_qubits.value_or(2));
            }
            if (pl_seed) cfg.seed = *pl_seed;
            if (pl_out) cfg.out_dir = *pl_out;
            if (pl_steps) cfg.train_steps = *pl_steps;
            if (pl_epsilon) cfg.epsilon = *pl_epsilon;
            if (baseline_cmd->parsed() || pl_baseline == "vp") cfg.model = ModelKind::kVp;
            const EnsembleMetrics m = run_pipeline(cfg, progress_printer(out));
            print_metrics(out, m);
        } else if (sse_cmd->parsed()) {
            const SseDiagnosis r = sse_diagnose(sd_qubits, sd_sigma, sd_t, sd_traj, sd_dt, sd_seed);
            out << "eta " << r.eta << "\n"
                << "measured E|<psi_t,psi_0>|^2 " << r.mean << " +/- " << r.standard_error << "\n"
                << "target 1/d " << r.target << "\n"
                << (r.passed ? "PASS" : "FAIL") << "\n";
            return r.passed ? 0 : 2;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

int run_command(int argc, const char* const* argv) { return run_command(argc, argv, std::cout, std::cerr); }

}  // namespace ssdm
