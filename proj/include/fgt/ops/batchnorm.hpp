#pragma once

#include <cmath>

#include "fgt/tensor.hpp"

namespace fgt {

enum class Mode { Train, Eval };

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Running statistics, updated as new = (1 - momentum) * old + momentum * batch.
template <class Scalar>
struct BatchNormState {
  BasicTensor<Scalar> running_mean;
  BasicTensor<Scalar> running_var;

  static BatchNormState initial(Index channels) {
    return {BasicTensor<Scalar>({channels}, Scalar(0)), BasicTensor<Scalar>({channels}, Scalar(1))};
  }
};

/// Saved by a train-mode forward; consumed by batchnorm_backward.
template <class Scalar>
struct BatchNormCache {
  BasicTensor<Scalar> normalized;  // x_hat, same shape as the input
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std;
  bool valid = false;
};

template <class Scalar>
struct BatchNormGrads {
  BasicTensor<Scalar> x;
  BasicTensor<Scalar> gamma;
  BasicTensor<Scalar> beta;
};

namespace detail {

struct ChannelLayout {
  Index batch, channels, spatial;
};

template <class Scalar>
ChannelLayout channel_layout(const BasicTensor<Scalar>& x, const char* what) {
  if (x.rank() != 2 && x.rank() != 4)
    throw DimensionError(std::string(what) + ": input must be [B,F] or [B,C,H,W], got " +
                         shape_string(x.shape()));
  const Index spatial = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  return {x.dim(0), x.dim(1), spatial};
}

}  // namespace detail

/// Per-channel normalization over batch and spatial axes, then y = gamma * x_hat + beta.
///
/// Train mode normalizes with batch statistics, updates `state` and fills `cache`.
/// Eval mode uses the running statistics and leaves `state` untouched.
template <class Scalar>
BasicTensor<Scalar> batchnorm_forward(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& gamma,
                                      const BasicTensor<Scalar>& beta, Mode mode,
                                      BatchNormState<Scalar>& state,
                                      BatchNormCache<Scalar>* cache = nullptr) {
  const auto [batch, channels, spatial] = detail::channel_layout(x, "batchnorm");
  expect_extent("batchnorm", "channels (gamma)", channels, gamma.size());
  expect_extent("batchnorm", "channels (beta)", channels, beta.size());
  expect_extent("batchnorm", "channels (running_mean)", channels, state.running_mean.size());
  expect_extent("batchnorm", "channels (running_var)", channels, state.running_var.size());
  if (mode == Mode::Train && batch < 2)
    throw DimensionError("batchnorm: train mode needs axis 'batch' >= 2, got " +
                         std::to_string(batch));

  const Scalar eps = Scalar(kBatchNormEpsilon);
  const Scalar momentum = Scalar(kBatchNormMomentum);
  const Index count = batch * spatial;
  BasicTensor<Scalar> out(x.shape());
  BasicTensor<Scalar> normalized;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std(channels);
  if (mode == Mode::Train) normalized = BasicTensor<Scalar>(x.shape());

  for (Index c = 0; c < channels; ++c) {
    Scalar mean, var;
    if (mode == Mode::Train) {
      Scalar sum = 0;
      for (Index n = 0; n < batch; ++n) {
        const Scalar* p = x.data() + (n * channels + c) * spatial;
        for (Index s = 0; s < spatial; ++s) sum += p[s];
      }
      mean = sum / Scalar(count);
      Scalar sq = 0;
      for (Index n = 0; n < batch; ++n) {
        const Scalar* p = x.data() + (n * channels + c) * spatial;
        for (Index s = 0; s < spatial; ++s) sq += (p[s] - mean) * (p[s] - mean);
      }
      var = sq / Scalar(count);
      const Scalar unbiased = sq / Scalar(count - 1);
      state.running_mean[c] = (Scalar(1) - momentum) * state.running_mean[c] + momentum * mean;
      state.running_var[c] = (Scalar(1) - momentum) * state.running_var[c] + momentum * unbiased;
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    const Scalar istd = Scalar(1) / std::sqrt(std::max(var, Scalar(0)) + eps);
    inv_std[c] = istd;
    for (Index n = 0; n < batch; ++n) {
      const Index base = (n * channels + c) * spatial;
      for (Index s = 0; s < spatial; ++s) {
        const Scalar xh = (x[base + s] - mean) * istd;
        if (mode == Mode::Train) normalized[base + s] = xh;
        out[base + s] = gamma[c] * xh + beta[c];
      }
    }
  }
  if (cache && mode == Mode::Train) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
    cache->valid = true;
  }
  return out;
}

/// Exact train-mode adjoint, including the dependence of batch mean/variance on x.
template <class Scalar>
BatchNormGrads<Scalar> batchnorm_backward(const BatchNormCache<Scalar>& cache,
                                          const BasicTensor<Scalar>& gamma,
                                          const BasicTensor<Scalar>& grad_out) {
  if (!cache.valid) throw Error("batchnorm_backward: no cached train-mode forward state");
  if (grad_out.shape() != cache.normalized.shape())
    throw DimensionError("batchnorm_backward: grad_out shape " + shape_string(grad_out.shape()) +
                         " != cached " + shape_string(cache.normalized.shape()));
  const auto [batch, channels, spatial] = detail::channel_layout(grad_out, "batchnorm_backward");
  expect_extent("batchnorm_backward", "channels (gamma)", channels, gamma.size());
  const Scalar count = Scalar(batch * spatial);

  BatchNormGrads<Scalar> grads{BasicTensor<Scalar>(grad_out.shape()),
                               BasicTensor<Scalar>({channels}), BasicTensor<Scalar>({channels})};
  const auto& xh = cache.normalized;
  for (Index c = 0; c < channels; ++c) {
    Scalar sum_g = 0, sum_gx = 0;
    for (Index n = 0; n < batch; ++n) {
      const Index base = (n * channels + c) * spatial;
      for (Index s = 0; s < spatial; ++s) {
        sum_g += grad_out[base + s];
        sum_gx += grad_out[base + s] * xh[base + s];
      }
    }
    grads.beta[c] = sum_g;
    grads.gamma[c] = sum_gx;
    const Scalar scale = gamma[c] * cache.inv_std[c] / count;
    for (Index n = 0; n < batch; ++n) {
      const Index base = (n * channels + c) * spatial;
      for (Index s = 0; s < spatial; ++s)
        grads.x[base + s] = scale * (count * grad_out[base + s] - sum_g - xh[base + s] * sum_gx);
    }
  }
  return grads;
}

/// Input gradient of an eval-mode (running statistics) batch norm. Used for
/// frozen layers, whose affine map does not depend on the batch.
template <class Scalar>
BasicTensor<Scalar> batchnorm_backward_frozen(const BasicTensor<Scalar>& gamma,
                                              const BatchNormState<Scalar>& state,
                                              const BasicTensor<Scalar>& grad_out) {
  const auto [batch, channels, spatial] =
      detail::channel_layout(grad_out, "batchnorm_backward_frozen");
  expect_extent("batchnorm_backward_frozen", "channels (gamma)", channels, gamma.size());
  BasicTensor<Scalar> grad_x(grad_out.shape());
  for (Index c = 0; c < channels; ++c) {
    const Scalar scale =
        gamma[c] / std::sqrt(std::max(state.running_var[c], Scalar(0)) + Scalar(kBatchNormEpsilon));
    for (Index n = 0; n < batch; ++n) {
      const Index base = (n * channels + c) * spatial;
      for (Index s = 0; s < spatial; ++s) grad_x[base + s] = scale * grad_out[base + s];
    }
  }
  return grad_x;
}

}  // namespace fgt
