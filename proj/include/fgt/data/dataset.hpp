#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fgt/tensor.hpp"

namespace fgt {

/// Fixed 7-class expression taxonomy shared by every dataset in a run.
inline const std::vector<std::string> kClassNames{"angry", "disgust", "fear", "happy",
                                                  "sad",   "surprise", "neutral"};

/// Index of `name` in kClassNames (case-insensitive); throws DataError listing the valid names.
int class_index(std::string_view name);

inline constexpr Index kImageSide = 48;

struct Sample {
  Tensor image;  // [1,48,48], values in [0,1]
  int label = 0;
  std::optional<std::string> subject_id;
  std::string origin;
};

struct Dataset {
  std::string name;
  std::vector<Sample> samples;
  std::vector<std::string> class_names = kClassNames;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  std::vector<std::size_t> class_histogram() const;
};

/// Throws DataError unless every sample has shape [1,48,48], pixels in [0,1]
/// and a label indexing `class_names`.
void validate(const Dataset& ds);

struct SplitSpec {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  bool subject_disjoint = false;
  std::uint64_t seed = 0;
};

struct SplitResult {
  Dataset train, val, test;
  std::vector<std::string> warnings;
};

/// Subject-disjoint splits assign whole subjects greedily to the subset with the
/// largest remaining deficit (ties favour train, then val). Otherwise each class
/// is split separately; remainders go to train.
SplitResult split(const Dataset& ds, const SplitSpec& spec);

/// Stratified subsample keeping ceil(f * n_c) samples of each class c, in the
/// original order. f == 1 returns the dataset unchanged.
Dataset take_fraction(const Dataset& ds, double fraction, std::uint64_t seed);

/// Plain concatenation; origins are preserved and nothing is rebalanced.
Dataset merge(const Dataset& a, const Dataset& b);

struct Batch {
  Tensor images;  // [B,1,48,48]
  std::vector<int> labels;
};

Batch make_batch(const Dataset& ds, std::span<const std::size_t> indices);

/// Permutation of 0..n-1 keyed by (seed, epoch).
std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

/// Iterates one epoch of shuffled mini-batches. The final short batch is kept.
class ShuffledBatches {
 public:
  ShuffledBatches(const Dataset& ds, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch);

  std::optional<Batch> next();
  std::size_t batch_count() const noexcept;
  /// Index lists of every batch, in iteration order.
  std::vector<std::vector<std::size_t>> index_batches() const;

 private:
  const Dataset* ds_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace fgt
