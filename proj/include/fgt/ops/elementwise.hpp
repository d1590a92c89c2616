#pragma once

#include <cstdint>
#include <random>

#include "fgt/ops/batchnorm.hpp"
#include "fgt/tensor.hpp"

namespace fgt {

template <class Scalar>
BasicTensor<Scalar> relu_forward(const BasicTensor<Scalar>& x) {
  BasicTensor<Scalar> out(x.shape());
  out.array() = x.array().max(Scalar(0));
  return out;
}

/// Passes the gradient where x > 0; the subgradient at exactly 0 is 0.
template <class Scalar>
BasicTensor<Scalar> relu_backward(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& grad_out) {
  if (x.shape() != grad_out.shape())
    throw DimensionError("relu_backward: grad_out shape " + shape_string(grad_out.shape()) +
                         " != input " + shape_string(x.shape()));
  BasicTensor<Scalar> grad_x(x.shape());
  grad_x.array() = (x.array() > Scalar(0)).select(grad_out.array(), Scalar(0));
  return grad_x;
}

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit engine draw.
/// Unlike std::uniform_real_distribution this is identical across standard libraries.
inline double uniform_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <class Scalar>
struct DropoutResult {
  BasicTensor<Scalar> output;
  BasicTensor<Scalar> mask;  // 0 for dropped units, 1/(1-rate) for survivors
};

/// Inverted dropout. Eval mode (or rate 0) is the identity and draws nothing from `rng`.
template <class Scalar>
DropoutResult<Scalar> dropout_forward(const BasicTensor<Scalar>& x, double rate, Mode mode,
                                      std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw Error("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  if (mode == Mode::Eval || rate == 0.0)
    return {x, BasicTensor<Scalar>(x.shape(), Scalar(1))};
  const Scalar keep_scale = Scalar(1.0 / (1.0 - rate));
  DropoutResult<Scalar> result{BasicTensor<Scalar>(x.shape()), BasicTensor<Scalar>(x.shape())};
  for (Index i = 0; i < x.size(); ++i) {
    const Scalar m = uniform_unit(rng) < rate ? Scalar(0) : keep_scale;
    result.mask[i] = m;
    result.output[i] = x[i] * m;
  }
  return result;
}

template <class Scalar>
BasicTensor<Scalar> dropout_backward(const BasicTensor<Scalar>& mask,
                                     const BasicTensor<Scalar>& grad_out) {
  if (mask.shape() != grad_out.shape())
    throw DimensionError("dropout_backward: grad_out shape " + shape_string(grad_out.shape()) +
                         " != mask " + shape_string(mask.shape()));
  BasicTensor<Scalar> grad_x(mask.shape());
  grad_x.array() = mask.array() * grad_out.array();
  return grad_x;
}

}  // namespace fgt
