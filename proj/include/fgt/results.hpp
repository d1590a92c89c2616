#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fgt/strategy.hpp"

namespace fgt {

/// One cell of the experiment matrix. Deltas are relative to the baseline of
/// the same seed, so BL rows carry zeros.
struct ExperimentResult {
  StrategyKind strategy = StrategyKind::BL;
  double fraction = 1.0;
  std::uint64_t seed = 0;
  double source_test_acc = 0.0;
  double target_test_acc = 0.0;
  double delta_source = 0.0;
  double delta_target = 0.0;
  int epochs_run = 0;
  double wall_time_s = 0.0;
  std::string checkpoint;

  friend bool operator==(const ExperimentResult&, const ExperimentResult&) = default;
};

inline constexpr const char* kResultsHeader =
    "strategy,fraction,seed,source_test_acc,target_test_acc,delta_source,delta_target,epochs_run,wall_time_s,"
    "checkpoint";

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);
double parse_double(std::string_view text, const std::string& where);

std::string format_result_row(const ExperimentResult& r);
ExperimentResult parse_result_row(std::string_view line, const std::string& where);

/// Canonical order: strategy (BL, FT_FC, FT_FC_CL, RE, FU), fraction, seed.
bool canonical_less(const ExperimentResult& a, const ExperimentResult& b);
void sort_canonical(std::vector<ExperimentResult>& rows);

void write_results_csv(const std::filesystem::path& path, std::vector<ExperimentResult> rows);
std::vector<ExperimentResult> read_results_csv(const std::filesystem::path& path);

struct Stat {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t n = 0;
};

Stat describe(std::span<const double> values);

struct StrategySummary {
  StrategyKind strategy = StrategyKind::BL;
  std::size_t rows = 0;
  Stat delta_source, delta_target, source_acc, target_acc;
  double score = 0.0;  // mean delta_target + mean delta_source
  std::map<double, double> target_acc_by_fraction;
  std::map<double, double> source_acc_by_fraction;
  std::vector<StrategyKind> dominated_by;  // Pareto on (mean delta_target, mean delta_source)
};

struct Summary {
  std::vector<StrategySummary> strategies;  // canonical strategy order
  std::vector<StrategyKind> ranking;        // lexicographic on (mean delta_target, mean delta_source), best first

  const StrategySummary* find(StrategyKind kind) const;
};

/// Per-strategy mean/min/max over every row (all fractions and seeds).
Summary aggregate(std::span<const ExperimentResult> rows);

std::string summary_to_json(const Summary& summary);

/// Long format for plotting accuracy against strategy and fraction:
/// strategy,fraction,seed,test_set,accuracy with one line per row and test set.
std::string plot_csv(std::vector<ExperimentResult> rows);

}  // namespace fgt
