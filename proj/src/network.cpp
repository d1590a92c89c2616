#include "fgt/network.hpp"

#include <algorithm>
#include <cmath>

#include "fgt/ops/conv.hpp"
#include "fgt/ops/dense.hpp"
#include "fgt/ops/elementwise.hpp"

namespace fgt {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

constexpr std::pair<LayerKind, std::string_view> kKindNames[] = {
    {LayerKind::Conv, "conv"},       {LayerKind::BatchNorm, "batchnorm"},
    {LayerKind::Relu, "relu"},       {LayerKind::MaxPool, "maxpool"},
    {LayerKind::Flatten, "flatten"}, {LayerKind::Dense, "dense"},
    {LayerKind::Dropout, "dropout"},
};

Tensor he_normal(Shape shape, Index fan_in, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (Index i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

/// Builds layer state for `spec` given the per-sample input shape; returns the output shape.
LayerState materialize(const LayerSpec& spec, const Shape& in, Shape& out, std::mt19937_64& rng) {
  auto need_rank = [&](std::size_t rank) {
    if (in.size() != rank)
      throw DimensionError("layer '" + spec.name + "': expected rank-" + std::to_string(rank) +
                           " input, got " + shape_string(in));
  };
  switch (spec.kind) {
    case LayerKind::Conv: {
      need_rank(3);
      if (spec.units <= 0 || spec.kernel <= 0)
        throw ConfigError("layer '" + spec.name + "': conv needs positive filters and kernel");
      if (in[1] < spec.kernel || in[2] < spec.kernel)
        throw DimensionError("layer '" + spec.name + "': spatial input " + shape_string(in) +
                             " smaller than kernel");
      out = {spec.units, in[1] - spec.kernel + 1, in[2] - spec.kernel + 1};
      const Index fan_in = in[0] * spec.kernel * spec.kernel;
      ConvLayer conv;
      conv.weight.value = he_normal({spec.units, in[0], spec.kernel, spec.kernel}, fan_in, rng);
      conv.bias.value = Tensor({spec.units});
      return conv;
    }
    case LayerKind::BatchNorm: {
      if (in.size() != 3 && in.size() != 1)
        throw DimensionError("layer '" + spec.name + "': batchnorm input must be [C,H,W] or [F]");
      out = in;
      BatchNormLayer bn;
      bn.gamma.value = Tensor({in[0]}, 1.0);
      bn.beta.value = Tensor({in[0]});
      bn.stats = BatchNormState<double>::initial(in[0]);
      return bn;
    }
    case LayerKind::Relu:
      out = in;
      return ReluLayer{};
    case LayerKind::MaxPool:
      need_rank(3);
      if (in[1] < 2 || in[2] < 2)
        throw DimensionError("layer '" + spec.name + "': maxpool input " + shape_string(in));
      out = {in[0], in[1] / 2, in[2] / 2};
      return MaxPoolLayer{};
    case LayerKind::Flatten:
      out = {shape_product(in)};
      return FlattenLayer{};
    case LayerKind::Dense: {
      need_rank(1);
      if (spec.units <= 0) throw ConfigError("layer '" + spec.name + "': dense needs units");
      out = {spec.units};
      DenseLayer dense;
      dense.weight.value = he_normal({spec.units, in[0]}, in[0], rng);
      dense.bias.value = Tensor({spec.units});
      return dense;
    }
    case LayerKind::Dropout:
      if (!(spec.rate >= 0.0 && spec.rate < 1.0))
        throw ConfigError("layer '" + spec.name + "': dropout rate outside [0,1)");
      out = in;
      return DropoutLayer{};
  }
  throw ConfigError("unknown layer kind");
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "?";
}

LayerKind layer_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  throw ConfigError("unknown layer kind '" + std::string(name) + "'");
}

std::string_view to_string(Architecture arch) { return arch == Architecture::Paper ? "paper" : "desk"; }

Architecture architecture_from_string(std::string_view name) {
  if (name == "paper") return Architecture::Paper;
  if (name == "desk") return Architecture::Desk;
  throw ConfigError("unknown architecture '" + std::string(name) + "' (expected paper or desk)");
}

// ---------------------------------------------------------------------------
// Layer

bool Layer::has_params() const {
  return std::holds_alternative<ConvLayer>(state) || std::holds_alternative<BatchNormLayer>(state) ||
         std::holds_alternative<DenseLayer>(state);
}

std::vector<NamedParam> Layer::params() {
  const std::string& n = spec.name;
  return std::visit(Overloaded{
                        [&](ConvLayer& l) -> std::vector<NamedParam> {
                          return {{n + ".weight", &l.weight}, {n + ".bias", &l.bias}};
                        },
                        [&](DenseLayer& l) -> std::vector<NamedParam> {
                          return {{n + ".weight", &l.weight}, {n + ".bias", &l.bias}};
                        },
                        [&](BatchNormLayer& l) -> std::vector<NamedParam> {
                          return {{n + ".gamma", &l.gamma}, {n + ".beta", &l.beta}};
                        },
                        [](auto&) -> std::vector<NamedParam> { return {}; },
                    },
                    state);
}

std::vector<const GradPair*> Layer::params() const {
  std::vector<const GradPair*> out;
  for (auto& p : const_cast<Layer*>(this)->params()) out.push_back(p.param);
  return out;
}

std::vector<Tensor*> Layer::persistent_tensors() {
  std::vector<Tensor*> out;
  for (auto& p : params()) out.push_back(&p.param->value);
  if (auto* bn = std::get_if<BatchNormLayer>(&state)) {
    out.push_back(&bn->stats.running_mean);
    out.push_back(&bn->stats.running_var);
  }
  return out;
}

std::vector<const Tensor*> Layer::persistent_tensors() const {
  std::vector<const Tensor*> out;
  for (Tensor* t : const_cast<Layer*>(this)->persistent_tensors()) out.push_back(t);
  return out;
}

// ---------------------------------------------------------------------------
// Network

Network::Network(std::vector<LayerSpec> specs, Shape input_shape, std::uint64_t seed)
    : input_shape_(std::move(input_shape)), seed_(seed), dropout_rng_(seed) {
  std::mt19937_64 init_rng(seed);
  std::set<std::string> names;
  Shape shape = input_shape_;
  for (auto& spec : specs) {
    if (spec.name.empty()) throw ConfigError("layer without a name");
    if (!names.insert(spec.name).second) throw ConfigError("duplicate layer name '" + spec.name + "'");
    Layer layer;
    Shape out;
    layer.state = materialize(spec, shape, out, init_rng);
    layer.spec = std::move(spec);
    layer.output_shape = out;
    shape = std::move(out);
    layers_.push_back(std::move(layer));
  }
  set_all_trainable();
}

void Network::check_input(const Tensor& x) const {
  if (x.rank() != static_cast<int>(input_shape_.size()) + 1)
    throw DimensionError("network input must be [B," + shape_string(input_shape_).substr(1) +
                         ", got " + shape_string(x.shape()));
  for (std::size_t i = 0; i < input_shape_.size(); ++i)
    if (x.shape()[i + 1] != input_shape_[i])
      throw DimensionError("network input axis " + std::to_string(i + 1) + " expected " +
                           std::to_string(input_shape_[i]) + ", got " +
                           std::to_string(x.shape()[i + 1]));
}

Tensor Network::forward(const Tensor& x, Mode mode) {
  if (mode == Mode::Eval) return predict(x);
  check_input(x);
  Tensor h = x;
  for (auto& layer : layers_) {
    const bool frozen = !layer.trainable;
    h = std::visit(
        Overloaded{
            [&](ConvLayer& l) {
              l.input = h;
              return conv2d_forward(h, l.weight.value, l.bias.value);
            },
            [&](BatchNormLayer& l) {
              l.pinned = frozen;
              return batchnorm_forward(h, l.gamma.value, l.beta.value,
                                       frozen ? Mode::Eval : Mode::Train, l.stats, &l.cache);
            },
            [&](ReluLayer& l) {
              l.input = h;
              return relu_forward(h);
            },
            [&](MaxPoolLayer& l) {
              auto r = maxpool2x2_forward(h);
              l.index = std::move(r.index);
              return std::move(r.output);
            },
            [&](FlattenLayer& l) {
              l.input_shape = h.shape();
              return h.reshaped({h.dim(0), h.size() / h.dim(0)});
            },
            [&](DenseLayer& l) {
              l.input = h;
              return dense_forward(h, l.weight.value, l.bias.value);
            },
            [&](DropoutLayer& l) {
              auto r = dropout_forward(h, layer.spec.rate, Mode::Train, dropout_rng_);
              l.mask = std::move(r.mask);
              return std::move(r.output);
            },
        },
        layer.state);
  }
  ensure_finite(h, "network forward output");
  return h;
}

Tensor Network::predict(const Tensor& x) const {
  check_input(x);
  Tensor h = x;
  for (const auto& layer : layers_) {
    h = std::visit(Overloaded{
                       [&](const ConvLayer& l) { return conv2d_forward(h, l.weight.value, l.bias.value); },
                       [&](const BatchNormLayer& l) {
                         auto stats = l.stats;
                         return batchnorm_forward(h, l.gamma.value, l.beta.value, Mode::Eval, stats);
                       },
                       [&](const ReluLayer&) { return relu_forward(h); },
                       [&](const MaxPoolLayer&) { return maxpool2x2_forward(h).output; },
                       [&](const FlattenLayer&) { return h.reshaped({h.dim(0), h.size() / h.dim(0)}); },
                       [&](const DenseLayer& l) { return dense_forward(h, l.weight.value, l.bias.value); },
                       [&](const DropoutLayer&) { return h; },
                   },
                   layer.state);
  }
  ensure_finite(h, "network predict output");
  return h;
}

void Network::backward(const Tensor& grad_logits) {
  // Nothing upstream of the first trainable layer needs a gradient.
  std::ptrdiff_t first = -1;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i].trainable && layers_[i].has_params()) {
      first = static_cast<std::ptrdiff_t>(i);
      break;
    }
  if (first < 0) return;

  auto accumulate = [](GradPair& p, Tensor&& g) {
    if (p.grad.empty())
      p.grad = std::move(g);
    else
      p.grad.storage() += g.storage();
  };

  Tensor g = grad_logits;
  for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(layers_.size()) - 1; i >= first; --i) {
    Layer& layer = layers_[static_cast<std::size_t>(i)];
    const bool need_x = i > first;
    const bool update = layer.trainable;
    g = std::visit(
        Overloaded{
            [&](ConvLayer& l) {
              auto grads = conv2d_backward(l.input, l.weight.value, g, need_x);
              if (update) {
                accumulate(l.weight, std::move(grads.w));
                accumulate(l.bias, std::move(grads.b));
              }
              return std::move(grads.x);
            },
            [&](BatchNormLayer& l) {
              if (l.pinned) return need_x ? batchnorm_backward_frozen(l.gamma.value, l.stats, g) : Tensor();
              auto grads = batchnorm_backward(l.cache, l.gamma.value, g);
              if (update) {
                accumulate(l.gamma, std::move(grads.gamma));
                accumulate(l.beta, std::move(grads.beta));
              }
              return std::move(grads.x);
            },
            [&](ReluLayer& l) { return relu_backward(l.input, g); },
            [&](MaxPoolLayer& l) { return maxpool2x2_backward(l.index, g); },
            [&](FlattenLayer& l) { return g.reshaped(l.input_shape); },
            [&](DenseLayer& l) {
              auto grads = dense_backward(l.input, l.weight.value, g, need_x);
              if (update) {
                accumulate(l.weight, std::move(grads.w));
                accumulate(l.bias, std::move(grads.b));
              }
              return std::move(grads.x);
            },
            [&](DropoutLayer& l) { return dropout_backward(l.mask, g); },
        },
        layer.state);
  }
}

void Network::set_trainable(const std::set<std::string>& names) {
  for (const auto& n : names)
    if (std::none_of(layers_.begin(), layers_.end(), [&](const Layer& l) { return l.spec.name == n; }))
      throw ConfigError("set_trainable: unknown layer '" + n + "'");
  for (auto& layer : layers_) {
    layer.trainable = names.count(layer.spec.name) > 0;
    for (auto& p : layer.params())
      p.param->grad = layer.trainable ? Tensor::zeros_like(p.param->value) : Tensor();
  }
}

void Network::set_all_trainable() {
  std::set<std::string> all;
  for (const auto& l : layers_) all.insert(l.spec.name);
  set_trainable(all);
}

std::set<std::string> Network::trainable_names() const {
  std::set<std::string> out;
  for (const auto& l : layers_)
    if (l.trainable && l.has_params()) out.insert(l.spec.name);
  return out;
}

void Network::zero_grad() {
  for (auto& layer : layers_)
    for (auto& p : layer.params())
      if (!p.param->grad.empty()) p.param->grad.set_zero();
}

void Network::reseed(std::uint64_t seed) { dropout_rng_.seed(seed); }

Index Network::param_count() const {
  Index total = 0;
  for (const auto& l : layers_)
    for (const auto* p : l.params()) total += p->value.size();
  return total;
}

std::vector<LayerParamRow> Network::layer_param_report() const {
  std::vector<LayerParamRow> rows;
  for (const auto& l : layers_) {
    Index count = 0;
    for (const auto* p : l.params()) count += p->value.size();
    rows.push_back({l.spec.name, l.spec.kind, l.output_shape, count, l.trainable && l.has_params()});
  }
  return rows;
}

const Layer& Network::layer(std::string_view name) const {
  for (const auto& l : layers_)
    if (l.spec.name == name) return l;
  throw ConfigError("unknown layer '" + std::string(name) + "'");
}

Layer& Network::layer(std::string_view name) {
  return const_cast<Layer&>(static_cast<const Network&>(*this).layer(name));
}

std::vector<LayerSpec> Network::specs() const {
  std::vector<LayerSpec> out;
  for (const auto& l : layers_) out.push_back(l.spec);
  return out;
}

// ---------------------------------------------------------------------------
// Baseline

std::vector<LayerSpec> baseline_specs(Architecture arch) {
  const bool paper = arch == Architecture::Paper;
  const Index f1 = paper ? 64 : 8, f3 = paper ? 128 : 16;
  const Index fc1 = paper ? 2048 : 64, fc2 = paper ? 1024 : 32;
  using K = LayerKind;
  return {
      {K::Conv, "conv1", f1, 2},   {K::BatchNorm, "bn1"}, {K::Relu, "relu1"},
      {K::Conv, "conv2", f1, 2},   {K::BatchNorm, "bn2"}, {K::Relu, "relu2"},
      {K::MaxPool, "pool1"},
      {K::Conv, "conv3", f3, 3},   {K::BatchNorm, "bn3"}, {K::Relu, "relu3"},
      {K::Conv, "conv4", f3, 3},   {K::BatchNorm, "bn4"}, {K::Relu, "relu4"},
      {K::Conv, "conv5", f3, 3},   {K::BatchNorm, "bn5"}, {K::Relu, "relu5"},
      {K::MaxPool, "pool2"},
      {K::Flatten, "flatten"},
      {K::Dense, "fc1", fc1},      {K::Relu, "relu6"},    {K::Dropout, "drop1", 0, 0, 0.5},
      {K::Dense, "fc2", fc2},      {K::Relu, "relu7"},    {K::Dropout, "drop2", 0, 0, 0.5},
      {K::Dense, "fc3", kNumClasses},
  };
}

Network build_baseline(std::uint64_t seed, Architecture arch) {
  return Network(baseline_specs(arch), kImageShape, seed);
}

std::vector<std::string> parametrized_layer_names(const std::vector<LayerSpec>& specs) {
  std::vector<std::string> out;
  for (const auto& s : specs)
    if (s.kind == LayerKind::Conv || s.kind == LayerKind::BatchNorm || s.kind == LayerKind::Dense)
      out.push_back(s.name);
  return out;
}

}  // namespace fgt
