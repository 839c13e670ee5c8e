#pragma once

// Plain-text run configuration (`key = value` per line, '#' comments) and CSV history.

#include <filesystem>
#include <string>

#include "cdnet/trainer.hpp"

namespace cdnet {

struct RunConfig {
  NetworkConfig network;
  TrainConfig train;
  LossConfig loss;
  double threshold = kDefaultThreshold;
  std::uint64_t init_seed = 0;
};

/// Keys are the field names of NetworkConfig, TrainConfig and LossConfig
/// (`kind` takes a loss name), plus `threshold` and `init_seed`.
/// Unknown keys and malformed values raise ConfigError with the line number.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string format_run_config(const RunConfig& cfg);

/// Header `epoch,total_loss,output_loss,supervision_loss,lr`, one row per epoch.
void write_history_csv(const std::filesystem::path& path, const TrainHistory& history);

}  // namespace cdnet
