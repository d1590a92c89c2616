#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "fgt/data/dataset.hpp"
#include "fgt/network.hpp"
#include "fgt/optimizer.hpp"

namespace fgt {

/// Baseline plus the four adaptation strategies:
///   BL        random init, all layers, source data
///   FT_FC     pretrained, fc1..fc3 trainable, target data
///   FT_FC_CL  pretrained, conv5 + bn5 + fc1..fc3 trainable, target data
///   RE        pretrained, all layers, target data
///   FU        random init, all layers, source + target merged
enum class StrategyKind { BL, FT_FC, FT_FC_CL, RE, FU };

inline constexpr StrategyKind kAllStrategies[] = {StrategyKind::BL, StrategyKind::FT_FC, StrategyKind::FT_FC_CL,
                                                  StrategyKind::RE, StrategyKind::FU};

std::string_view to_string(StrategyKind kind);
StrategyKind strategy_from_string(std::string_view name);
bool is_finetune(StrategyKind kind);

enum class InitKind { Random, Pretrained };
enum class TrainData { Source, Target, Merged };

std::string_view to_string(InitKind kind);
std::string_view to_string(TrainData data);

struct InitSpec {
  InitKind kind = InitKind::Random;
  std::string checkpoint;  // pretrained only
  std::uint64_t seed = 0;  // random only

  friend bool operator==(const InitSpec&, const InitSpec&) = default;
};

struct Hyper {
  int epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double finetune_lr_scale = 0.1;  // FT_FC and FT_FC_CL train at learning_rate * scale
  OptimizerKind optimizer = OptimizerKind::Adam;
  int patience = 10;
  int lr_decay_epochs = 0;       // step decay period; 0 keeps the rate constant
  double lr_decay_factor = 0.1;

  friend bool operator==(const Hyper&, const Hyper&) = default;
};

struct StrategyPlan {
  StrategyKind kind = StrategyKind::BL;
  InitSpec init;
  std::set<std::string> trainable_layers;
  TrainData train_data = TrainData::Source;
  Hyper hyper;
  double learning_rate = 1e-3;  // effective rate for this plan
  Architecture arch = Architecture::Desk;
  std::string source_ref;
  std::string target_ref;
  std::uint64_t seed = 0;  // data order and dropout masks

  friend bool operator==(const StrategyPlan&, const StrategyPlan&) = default;
};

/// Canonical trainable set of `kind` for architecture `arch`.
std::set<std::string> canonical_trainable(StrategyKind kind, Architecture arch);

/// Builds a plan satisfying the kind's invariants. `pretrained` must name an
/// existing checkpoint for FT_FC, FT_FC_CL and RE. A trainable override may
/// narrow a fine-tuning set but never add layers outside it; BL, RE and FU
/// accept only the full set.
StrategyPlan make_plan(StrategyKind kind, std::string source_ref, std::string target_ref, const Hyper& hyper,
                       std::uint64_t seed, Architecture arch = Architecture::Desk,
                       const std::filesystem::path& pretrained = {},
                       const std::optional<std::set<std::string>>& trainable_override = std::nullopt);

std::string plan_to_json(const StrategyPlan& plan);
StrategyPlan plan_from_json(const std::string& text);
void save_plan(const StrategyPlan& plan, const std::filesystem::path& path);
StrategyPlan load_plan(const std::filesystem::path& path);

struct TrainingData {
  const Dataset* source_train = nullptr;
  const Dataset* source_val = nullptr;
  const Dataset* target_train = nullptr;
  const Dataset* target_val = nullptr;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  std::size_t samples = 0;
};

struct ExecutionResult {
  Network model;
  std::vector<EpochRecord> log;
  int epochs_run = 0;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Initializes, freezes and trains per `plan`, early-stopping on the matching
/// validation set (source for BL, target for FT_* and RE, merged for FU) and
/// returning the best-validation weights. A trailing batch of one sample is
/// folded into the previous batch while any batch norm is in training mode.
ExecutionResult execute(const StrategyPlan& plan, const TrainingData& data, const EpochCallback& on_epoch = {});

/// Network the plan starts from (random or pretrained), already frozen per plan.
Network initial_network(const StrategyPlan& plan);

struct LayerAudit {
  std::string layer;
  bool changed = false;
  bool trainable = false;
};

struct AuditReport {
  std::vector<LayerAudit> layers;
  std::set<std::string> changed;
  bool passed = false;

  std::string to_text() const;
};

/// Per-layer bitwise comparison of parameters and batch-norm statistics.
/// Passes iff every changed layer is in the plan's trainable set.
AuditReport freeze_audit(const Network& before, const Network& after, const StrategyPlan& plan);
AuditReport freeze_audit(const std::filesystem::path& before, const std::filesystem::path& after,
                         const StrategyPlan& plan);

}  // namespace fgt
