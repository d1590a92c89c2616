#pragma once

#include <cmath>
#include <span>

#include "fgt/tensor.hpp"

namespace fgt {

template <class Scalar>
struct LossResult {
  Scalar loss = 0;  // mean negative log-likelihood over the batch
  BasicTensor<Scalar> grad_logits;
  BasicTensor<Scalar> probs;
};

/// Max-subtracted softmax followed by mean cross-entropy against class indices.
/// grad_logits = (probs - onehot) / B.
template <class Scalar>
LossResult<Scalar> softmax_cross_entropy(const BasicTensor<Scalar>& logits,
                                         std::span<const int> labels) {
  expect_rank("softmax_cross_entropy", "logits", 2, logits.rank());
  const Index batch = logits.dim(0), classes = logits.dim(1);
  expect_extent("softmax_cross_entropy", "batch (labels)", batch, static_cast<Index>(labels.size()));

  LossResult<Scalar> result{Scalar(0), BasicTensor<Scalar>(logits.shape()),
                            BasicTensor<Scalar>(logits.shape())};
  for (Index n = 0; n < batch; ++n) {
    const int label = labels[static_cast<std::size_t>(n)];
    if (label < 0 || label >= classes)
      throw Error("softmax_cross_entropy: label " + std::to_string(label) + " at row " +
                  std::to_string(n) + " outside 0.." + std::to_string(classes - 1));
    const Scalar* z = logits.data() + n * classes;
    Scalar peak = z[0];
    for (Index k = 1; k < classes; ++k) peak = std::max(peak, z[k]);
    Scalar total = 0;
    for (Index k = 0; k < classes; ++k) total += std::exp(z[k] - peak);
    const Scalar log_total = std::log(total);
    for (Index k = 0; k < classes; ++k) {
      const Scalar p = std::exp(z[k] - peak - log_total);
      result.probs(n, k) = p;
      result.grad_logits(n, k) = (p - Scalar(k == label ? 1 : 0)) / Scalar(batch);
    }
    result.loss += -(z[label] - peak - log_total);
  }
  result.loss /= Scalar(batch);
  return result;
}

}  // namespace fgt
