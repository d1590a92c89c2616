#pragma once

#include <array>
#include <cstddef>

#include "fgt/data/dataset.hpp"
#include "fgt/network.hpp"

namespace fgt {

using ConfusionMatrix = std::array<std::array<std::size_t, kNumClasses>, kNumClasses>;  // [true][predicted]

struct Evaluation {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  ConfusionMatrix confusion{};
};

/// Index of the largest entry of row `n`; ties go to the lowest index.
int argmax_row(const Tensor& logits, Index n);

/// Eval-mode top-1 accuracy and confusion matrix. Throws DataError on an empty set.
Evaluation evaluate(const Network& net, const Dataset& test, std::size_t batch_size = 64);

}  // namespace fgt
