#include "fgt/evaluate.hpp"

#include <numeric>

namespace fgt {

int argmax_row(const Tensor& logits, Index n) {
  const Index classes = logits.dim(1);
  int best = 0;
  for (Index k = 1; k < classes; ++k)
    if (logits(n, k) > logits(n, best)) best = static_cast<int>(k);
  return best;
}

Evaluation evaluate(const Network& net, const Dataset& test, std::size_t batch_size) {
  if (test.empty()) throw DataError("evaluate: test set '" + test.name + "' is empty");
  if (batch_size == 0) throw ConfigError("evaluate: batch size must be positive");
  Evaluation ev;
  std::vector<std::size_t> idx(test.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, idx.size() - start);
    const Batch batch = make_batch(test, std::span<const std::size_t>(idx.data() + start, count));
    const Tensor logits = net.predict(batch.images);
    for (std::size_t k = 0; k < count; ++k) {
      const int truth = batch.labels[k];
      const int pred = argmax_row(logits, static_cast<Index>(k));
      ++ev.confusion.at(static_cast<std::size_t>(truth)).at(static_cast<std::size_t>(pred));
      ev.correct += truth == pred;
    }
  }
  ev.total = test.size();
  ev.accuracy = static_cast<double>(ev.correct) / static_cast<double>(ev.total);
  return ev;
}

}  // namespace fgt
