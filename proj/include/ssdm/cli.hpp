#pragma once

#include <filesystem>
#include <iosfwd>

#include "ssdm/data_io.hpp"
#include "ssdm/metrics.hpp"
#include "ssdm/training.hpp"

namespace ssdm {

/// Files written by run_pipeline, all under the configured out_dir.
struct PipelinePaths {
    std::filesystem::path data;
    std::filesystem::path target;
    std::filesystem::path model;
    std::filesystem::path generated;
    std::filesystem::path metrics;
    std::filesystem::path train_log;
    std::filesystem::path config;

    static PipelinePaths under(const std::filesystem::path& dir);
};

/// gen-data, train, sample and eval from one master seed. Stage failures are
/// rethrown as std::runtime_error prefixed with the stage name.
EnsembleMetrics run_pipeline(const ExperimentConfig& config, const TrainObserver& observer = {});

/// Command-line entry point. Returns 0 on success, 1 on usage errors and 2
/// on runtime or validation errors.
int run_command(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_command(int argc, const char* const* argv);

}  // namespace ssdm
