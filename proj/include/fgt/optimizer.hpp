#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "fgt/network.hpp"

namespace fgt {

enum class OptimizerKind { SgdMomentum, Adam };

std::string_view to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double momentum = 0.9;  // SGD only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Step-decay schedule: `base * factor^(floor((epoch - 1) / every))` for
/// 1-based epochs. `every` = 0 keeps the rate constant.
double step_decay(double base, int epoch, int every, double factor);

/// Per-parameter optimizer state for the trainable parameters of one network.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config = {}) : config_(config) {}

  /// Applies one update to every trainable parameter and zeroes its gradient.
  /// Frozen parameters are never touched and get no state.
  void step(Network& net);

  const OptimizerConfig& config() const noexcept { return config_; }
  /// Changes the step size for subsequent updates; moment estimates are kept.
  void set_learning_rate(double lr) noexcept { config_.learning_rate = lr; }
  std::int64_t step_count() const noexcept { return steps_; }
  bool has_state(const std::string& param_name) const { return slots_.count(param_name) > 0; }
  std::size_t state_size() const noexcept { return slots_.size(); }

 private:
  struct Slot {
    Tensor first;   // momentum buffer or Adam first moment
    Tensor second;  // Adam second moment
  };

  OptimizerConfig config_;
  std::map<std::string, Slot> slots_;
  std::int64_t steps_ = 0;
};

}  // namespace fgt
