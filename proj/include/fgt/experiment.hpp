#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "fgt/data/dataset.hpp"
#include "fgt/results.hpp"
#include "fgt/strategy.hpp"

namespace fgt {

enum class DatasetSource { Synthetic, PixelCsv, Manifest };

/// Where a dataset comes from.
///
///   synthetic  rendered by the generator: `params` (optional domain file,
///              default source domain) shifted by `shift`; per-class sizes and
///              a data seed
///   fer_csv    pixel CSV whose usage column provides train/val/test
///   manifest   image manifest split by `split`
struct DatasetRef {
  DatasetSource type = DatasetSource::Synthetic;
  double shift = 0.0;
  std::filesystem::path params;
  std::size_t train_per_class = 200;
  std::size_t val_per_class = 20;
  std::size_t test_per_class = 40;
  std::uint64_t data_seed = 1;
  std::filesystem::path path;
  SplitSpec split;

  static DatasetRef default_source();
  static DatasetRef default_target();
  /// Short stable description stored in plan files.
  std::string describe() const;
};

struct DataSplits {
  Dataset train, val, test;
};

/// Loads or renders the three subsets. Throws ConfigError if a file is missing.
DataSplits resolve(const DatasetRef& ref, const std::string& name);

struct ExperimentConfig {
  DatasetRef source = DatasetRef::default_source();
  DatasetRef target = DatasetRef::default_target();
  std::vector<StrategyKind> strategies{kAllStrategies, kAllStrategies + 5};
  std::vector<double> fractions{0.5, 1.0};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  Hyper hyper;
  std::filesystem::path out = "results";
  Architecture arch = Architecture::Desk;
  bool record_wall_time = false;
  int workers = 1;
};

/// Parses a JSON config. Every key is optional; unknown keys are errors.
/// Relative paths are resolved against `base_dir`.
ExperimentConfig config_from_json(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& config);
/// Throws ConfigError unless seeds are non-empty and fractions lie in (0,1].
void validate(const ExperimentConfig& config);

/// CRC-32 of the canonical config text, excluding output location and worker count.
std::string config_hash(const ExperimentConfig& config);

using LogSink = std::function<void(std::string_view)>;

struct ExperimentData {
  DataSplits source, target;
};

ExperimentData load_experiment_data(const ExperimentConfig& config);

struct MatrixOutcome {
  std::vector<ExperimentResult> results;  // canonical order
  std::size_t computed = 0;               // cells trained in this invocation
  std::size_t skipped = 0;                // cells already present in results.csv
  std::size_t failed = 0;
};

/// Runs BL once per seed and every (strategy, fraction, seed) cell, writing
/// to `config.out`:
///
///   results.csv             one row per finished cell, canonical order
///   summary.json            aggregate() of the rows
///   failures.jsonl          one object per failed cell
///   config.json, config.hash
///   checkpoints/, plans/, audits/, logs/
///
/// Cells already in results.csv (same config hash) are skipped; a differing
/// hash is a ConfigError. Failing cells are recorded and do not stop the run.
MatrixOutcome run_matrix(const ExperimentConfig& config, const LogSink& log = {});
MatrixOutcome run_matrix(const ExperimentConfig& config, const ExperimentData& data, const LogSink& log = {});

std::string cell_stem(StrategyKind kind, double fraction, std::uint64_t seed);

}  // namespace fgt
