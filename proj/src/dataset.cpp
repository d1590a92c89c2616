#include "fgt/data/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace fgt {

namespace {

std::mt19937_64 keyed_rng(std::uint64_t seed, std::uint64_t key) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)};
  return std::mt19937_64(seq);
}

Dataset subset(const Dataset& ds, std::vector<std::size_t> indices, const std::string& suffix) {
  std::sort(indices.begin(), indices.end());
  Dataset out{ds.name + suffix, {}, ds.class_names};
  out.samples.reserve(indices.size());
  for (auto i : indices) out.samples.push_back(ds.samples[i]);
  return out;
}

}  // namespace

int class_index(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (std::size_t i = 0; i < kClassNames.size(); ++i)
    if (kClassNames[i] == lower) return static_cast<int>(i);
  std::string valid;
  for (const auto& n : kClassNames) valid += (valid.empty() ? "" : ", ") + n;
  throw DataError("unknown label '" + std::string(name) + "'; valid labels: " + valid);
}

std::vector<std::size_t> Dataset::class_histogram() const {
  std::vector<std::size_t> hist(class_names.size(), 0);
  for (const auto& s : samples) ++hist.at(static_cast<std::size_t>(s.label));
  return hist;
}

void validate(const Dataset& ds) {
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    const std::string where = ds.name + " sample " + std::to_string(i);
    if (s.image.shape() != Shape{1, kImageSide, kImageSide})
      throw DataError(where + ": image shape " + shape_string(s.image.shape()) + ", expected [1,48,48]");
    if (!s.image.all_finite() || s.image.array().minCoeff() < 0.0 || s.image.array().maxCoeff() > 1.0)
      throw DataError(where + ": pixel values outside [0,1]");
    if (s.label < 0 || s.label >= static_cast<int>(ds.class_names.size()))
      throw DataError(where + ": label " + std::to_string(s.label) + " out of range");
  }
}

SplitResult split(const Dataset& ds, const SplitSpec& spec) {
  for (double f : {spec.train, spec.val, spec.test})
    if (!(f > 0.0 && f < 1.0)) throw ConfigError("split fractions must lie in (0,1)");
  if (std::abs(spec.train + spec.val + spec.test - 1.0) > 1e-6)
    throw ConfigError("split fractions must sum to 1");
  const double fractions[3] = {spec.train, spec.val, spec.test};
  const char* suffixes[3] = {"/train", "/val", "/test"};
  std::vector<std::size_t> parts[3];
  SplitResult result;

  if (spec.subject_disjoint) {
    std::map<std::string, std::vector<std::size_t>> by_subject;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
      const auto& sid = ds.samples[i].subject_id;
      if (!sid) throw ConfigError("subject-disjoint split: sample " + std::to_string(i) + " has no subject id");
      by_subject[*sid].push_back(i);
    }
    std::vector<const std::pair<const std::string, std::vector<std::size_t>>*> subjects;
    for (const auto& entry : by_subject) subjects.push_back(&entry);
    auto rng = keyed_rng(spec.seed, 0x5b1d);
    std::shuffle(subjects.begin(), subjects.end(), rng);
    std::stable_sort(subjects.begin(), subjects.end(),
                     [](auto* a, auto* b) { return a->second.size() > b->second.size(); });

    const double total = static_cast<double>(ds.size());
    const double largest = *std::max_element(fractions, fractions + 3);
    if (!subjects.empty() && static_cast<double>(subjects.front()->second.size()) > largest * total)
      result.warnings.push_back("subject '" + subjects.front()->first + "' owns " +
                                std::to_string(subjects.front()->second.size()) + " of " +
                                std::to_string(ds.size()) +
                                " samples; requested fractions are unreachable, using best effort");

    double filled[3] = {0, 0, 0};
    for (auto* subject : subjects) {
      int best = 0;
      double best_deficit = -1e300;
      for (int k = 0; k < 3; ++k) {
        const double deficit = fractions[k] * total - filled[k];
        if (deficit > best_deficit + 1e-9) {
          best = k;
          best_deficit = deficit;
        }
      }
      filled[best] += static_cast<double>(subject->second.size());
      parts[best].insert(parts[best].end(), subject->second.begin(), subject->second.end());
    }
  } else {
    std::vector<std::vector<std::size_t>> per_class(ds.class_names.size());
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
      per_class.at(static_cast<std::size_t>(ds.samples[i].label)).push_back(i);
    for (std::size_t c = 0; c < per_class.size(); ++c) {
      auto& idx = per_class[c];
      auto rng = keyed_rng(spec.seed, c);
      std::shuffle(idx.begin(), idx.end(), rng);
      const auto n = static_cast<double>(idx.size());
      const auto n_val = static_cast<std::size_t>(std::floor(spec.val * n));
      const auto n_test = static_cast<std::size_t>(std::floor(spec.test * n));
      parts[1].insert(parts[1].end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
      parts[2].insert(parts[2].end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val),
                      idx.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
      parts[0].insert(parts[0].end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val + n_test), idx.end());
    }
  }
  result.train = subset(ds, std::move(parts[0]), suffixes[0]);
  result.val = subset(ds, std::move(parts[1]), suffixes[1]);
  result.test = subset(ds, std::move(parts[2]), suffixes[2]);
  return result;
}

Dataset take_fraction(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ConfigError("take_fraction: fraction must lie in (0,1], got " + std::to_string(fraction));
  if (fraction == 1.0) return ds;
  std::vector<std::vector<std::size_t>> per_class(ds.class_names.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    per_class.at(static_cast<std::size_t>(ds.samples[i].label)).push_back(i);
  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    auto& idx = per_class[c];
    auto rng = keyed_rng(seed, 0xf4ac + c);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(idx.size()) - 1e-9));
    keep.insert(keep.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(std::min(k, idx.size())));
  }
  Dataset out = subset(ds, std::move(keep), "");
  return out;
}

Dataset merge(const Dataset& a, const Dataset& b) {
  if (a.class_names != b.class_names)
    throw DataError("merge: datasets '" + a.name + "' and '" + b.name + "' have different label spaces");
  Dataset out{a.name + "+" + b.name, a.samples, a.class_names};
  out.samples.insert(out.samples.end(), b.samples.begin(), b.samples.end());
  return out;
}

Batch make_batch(const Dataset& ds, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DataError("make_batch: empty index list");
  const Index pixels = kImageSide * kImageSide;
  Batch batch{Tensor({static_cast<Index>(indices.size()), 1, kImageSide, kImageSide}), {}};
  batch.labels.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const Sample& s = ds.samples.at(indices[k]);
    std::copy(s.image.data(), s.image.data() + pixels, batch.images.data() + static_cast<Index>(k) * pixels);
    batch.labels.push_back(s.label);
  }
  return batch;
}

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = keyed_rng(seed, epoch);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

ShuffledBatches::ShuffledBatches(const Dataset& ds, std::size_t batch_size, std::uint64_t seed,
                                 std::uint64_t epoch)
    : ds_(&ds), batch_size_(batch_size), order_(epoch_permutation(ds.size(), seed, epoch)) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
}

std::optional<Batch> ShuffledBatches::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t count = std::min(batch_size_, order_.size() - cursor_);
  Batch b = make_batch(*ds_, std::span<const std::size_t>(order_.data() + cursor_, count));
  cursor_ += count;
  return b;
}

std::size_t ShuffledBatches::batch_count() const noexcept {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

std::vector<std::vector<std::size_t>> ShuffledBatches::index_batches() const {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order_.size(); i += batch_size_)
    out.emplace_back(order_.begin() + static_cast<std::ptrdiff_t>(i),
                     order_.begin() + static_cast<std::ptrdiff_t>(std::min(i + batch_size_, order_.size())));
  return out;
}

}  // namespace fgt
