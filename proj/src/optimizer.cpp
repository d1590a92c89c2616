#include "fgt/optimizer.hpp"

#include <cmath>

namespace fgt {

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::Adam ? "adam" : "sgd-momentum";
}

OptimizerKind optimizer_kind_from_string(std::string_view name) {
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "sgd-momentum" || name == "sgd") return OptimizerKind::SgdMomentum;
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected adam or sgd-momentum)");
}

double step_decay(double base, int epoch, int every, double factor) {
  if (every <= 0 || epoch <= 1) return base;
  return base * std::pow(factor, (epoch - 1) / every);
}

void Optimizer::step(Network& net) {
  ++steps_;
  const double lr = config_.learning_rate;
  const double bias1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bias2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));

  for (auto& layer : net.layers()) {
    if (!layer.trainable) continue;
    for (auto& [name, p] : layer.params()) {
      if (p->grad.empty()) continue;
      auto [it, fresh] = slots_.try_emplace(name);
      Slot& slot = it->second;
      if (fresh) {
        slot.first = Tensor::zeros_like(p->value);
        if (config_.kind == OptimizerKind::Adam) slot.second = Tensor::zeros_like(p->value);
      }
      auto value = p->value.array();
      auto grad = p->grad.array();
      if (config_.kind == OptimizerKind::SgdMomentum) {
        auto velocity = slot.first.array();
        velocity = config_.momentum * velocity + grad;
        value -= lr * velocity;
      } else {
        auto m = slot.first.array();
        auto v = slot.second.array();
        m = config_.beta1 * m + (1.0 - config_.beta1) * grad;
        v = config_.beta2 * v + (1.0 - config_.beta2) * grad.square();
        value -= lr * (m / bias1) / ((v / bias2).sqrt() + config_.epsilon);
      }
      p->grad.set_zero();
    }
  }
}

}  // namespace fgt
