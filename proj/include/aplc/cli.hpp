#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "aplc/layer.hpp"
#include "aplc/trainer.hpp"

namespace aplc {

/// Everything a CLI run can be configured with. Populated from defaults, then
/// a flat key=value config file, then command-line overrides.
struct RunConfig {
  std::string command;
  std::filesystem::path train_path;
  std::filesystem::path test_path;
  std::filesystem::path input_path;
  std::filesystem::path model_path = "model.bin";
  std::filesystem::path log_path;
  std::filesystem::path metrics_csv;
  std::filesystem::path output_path;
  std::filesystem::path coverage_csv;
  std::filesystem::path ablation_csv = "ablation.csv";
  std::string ablation = "none";
  std::string format = "text";
  std::size_t benchmark_steps = 0;
  bool benchmark_backward = true;
  std::size_t threads = 1;
  bool resume = false;
  TrainConfig train;
};

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

/// Every accepted config key with its default and a one-line description.
const std::vector<ConfigKey>& config_keys();

/// Applies one key=value pair. Throws UsageError for unknown keys or
/// unparsable values.
void apply_config_value(RunConfig& config, const std::string& key, const std::string& value);

/// Reads a flat key=value file ('#' starts a comment). Throws DataError if
/// the file cannot be read, UsageError for unknown keys.
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

/// Parses "exact" or "pruned:<m>".
InferenceMode parse_inference_mode(const std::string& text);

/// The ablation grid: "clusters" gives even splits with 2..6 clusters,
/// "proportions" the three 3-cluster splits, "all" both.
std::vector<std::vector<double>> ablation_grid(const std::string& which);

/// CLI entry point. Exit codes: 0 success, 1 usage error, 2 data error,
/// 3 numeric failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace aplc
