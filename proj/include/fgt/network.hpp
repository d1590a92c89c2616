#pragma once

#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fgt/ops/batchnorm.hpp"
#include "fgt/ops/pool.hpp"
#include "fgt/tensor.hpp"

namespace fgt {

enum class LayerKind { Conv, BatchNorm, Relu, MaxPool, Flatten, Dense, Dropout };

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view name);

/// Declarative description of one layer. `units` is the filter count for conv
/// and the output width for dense; `kernel` is the square conv kernel size.
struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::string name;
  Index units = 0;
  Index kernel = 0;
  double rate = 0.0;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

enum class Architecture { Paper, Desk };

std::string_view to_string(Architecture arch);
Architecture architecture_from_string(std::string_view name);

/// Parameter value plus its accumulated gradient. The gradient is empty while
/// the owning layer is frozen.
struct GradPair {
  Tensor value;
  Tensor grad;
};

struct ConvLayer {
  GradPair weight, bias;
  Tensor input;
};

struct BatchNormLayer {
  GradPair gamma, beta;
  BatchNormState<double> stats;
  BatchNormCache<double> cache;
  bool pinned = false;  // forward ran on running statistics
};

struct ReluLayer {
  Tensor input;
};

struct MaxPoolLayer {
  PoolIndex index;
};

struct FlattenLayer {
  Shape input_shape;
};

struct DenseLayer {
  GradPair weight, bias;
  Tensor input;
};

struct DropoutLayer {
  Tensor mask;
};

using LayerState =
    std::variant<ConvLayer, BatchNormLayer, ReluLayer, MaxPoolLayer, FlattenLayer, DenseLayer, DropoutLayer>;

struct NamedParam {
  std::string name;  // "<layer>.<param>", e.g. "conv1.weight"
  GradPair* param;
};

struct Layer {
  LayerSpec spec;
  bool trainable = true;
  Shape output_shape;  // per-sample shape, without the batch axis
  LayerState state;

  bool has_params() const;
  std::vector<NamedParam> params();
  std::vector<const GradPair*> params() const;
  /// Parameters followed by non-trainable state (batch-norm running statistics),
  /// in checkpoint order.
  std::vector<const Tensor*> persistent_tensors() const;
  std::vector<Tensor*> persistent_tensors();
};

struct LayerParamRow {
  std::string name;
  LayerKind kind;
  Shape output_shape;
  Index params = 0;
  bool trainable = false;
};

/// Sequential network with per-layer trainable flags.
///
/// A Network is single-writer: train-mode forward/backward and optimizer steps
/// mutate caches and parameters. `predict` is const and safe to share.
class Network {
 public:
  /// Materializes every layer with He-normal weights drawn from `seed`, and
  /// type-checks the sequence against `input_shape` ([C,H,W]).
  Network(std::vector<LayerSpec> specs, Shape input_shape, std::uint64_t seed);

  /// Train mode caches what backward needs and applies dropout; eval mode does not cache.
  Tensor forward(const Tensor& x, Mode mode);
  Tensor predict(const Tensor& x) const;

  /// Accumulates gradients into trainable parameters. Gradients flow through
  /// frozen layers as long as a trainable layer sits upstream.
  void backward(const Tensor& grad_logits);

  /// Exactly the named layers become trainable; all others are frozen and their
  /// gradients released. Frozen batch norms run on running statistics in train mode.
  void set_trainable(const std::set<std::string>& names);
  void set_all_trainable();
  std::set<std::string> trainable_names() const;

  void zero_grad();

  /// Reseeds the dropout mask generator.
  void reseed(std::uint64_t seed);

  Index param_count() const;
  std::vector<LayerParamRow> layer_param_report() const;

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& layers() noexcept { return layers_; }
  const Layer& layer(std::string_view name) const;
  Layer& layer(std::string_view name);
  std::vector<LayerSpec> specs() const;
  const Shape& input_shape() const noexcept { return input_shape_; }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  void check_input(const Tensor& x) const;

  std::vector<Layer> layers_;
  Shape input_shape_;
  std::uint64_t seed_ = 0;
  std::mt19937_64 dropout_rng_;
};

/// Layer stack of the baseline expression CNN. Paper width uses 64/64/128/128/128
/// filters and 2048/1024 hidden units; the desk variant keeps the topology with
/// 8/8/16/16/16 filters and 64/32 units.
std::vector<LayerSpec> baseline_specs(Architecture arch);

inline const Shape kImageShape{1, 48, 48};
inline constexpr int kNumClasses = 7;

Network build_baseline(std::uint64_t seed, Architecture arch = Architecture::Paper);

/// Names of every layer that owns parameters, in declaration order.
std::vector<std::string> parametrized_layer_names(const std::vector<LayerSpec>& specs);

}  // namespace fgt
