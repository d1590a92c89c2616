#pragma once

#include <vector>

#include "fgt/tensor.hpp"

namespace fgt {

/// Winning input offset for every output cell of a 2x2 max-pool.
struct PoolIndex {
  Shape input_shape;
  Shape output_shape;
  std::vector<Index> argmax;  // flat offsets into the input, one per output cell
};

template <class Scalar>
struct PoolResult {
  BasicTensor<Scalar> output;
  PoolIndex index;
};

/// 2x2 window, stride 2. Odd trailing rows/columns are dropped. Ties go to the
/// first position in row-major scan order.
template <class Scalar>
PoolResult<Scalar> maxpool2x2_forward(const BasicTensor<Scalar>& x) {
  expect_rank("maxpool2x2", "input", 4, x.rank());
  if (x.dim(2) < 2 || x.dim(3) < 2)
    throw DimensionError("maxpool2x2: spatial extent " + shape_string(x.shape()) +
                         " below 2 on axis '" + (x.dim(2) < 2 ? "height" : "width") + "'");
  const Index planes = x.dim(0) * x.dim(1), height = x.dim(2), width = x.dim(3);
  const Index out_h = height / 2, out_w = width / 2;

  PoolResult<Scalar> result;
  result.output = BasicTensor<Scalar>({x.dim(0), x.dim(1), out_h, out_w});
  result.index.input_shape = x.shape();
  result.index.output_shape = result.output.shape();
  result.index.argmax.resize(static_cast<std::size_t>(result.output.size()));

  const Scalar* src = x.data();
  Scalar* dst = result.output.data();
  Index* arg = result.index.argmax.data();
  for (Index p = 0; p < planes; ++p) {
    const Index base = p * height * width;
    for (Index i = 0; i < out_h; ++i)
      for (Index j = 0; j < out_w; ++j) {
        Index best = base + 2 * i * width + 2 * j;
        for (const Index off : {Index{1}, width, width + 1}) {
          const Index cand = base + 2 * i * width + 2 * j + off;
          if (src[cand] > src[best]) best = cand;
        }
        *dst++ = src[best];
        *arg++ = best;
      }
  }
  return result;
}

/// Routes each output gradient to its recorded argmax; every other input gets 0.
template <class Scalar>
BasicTensor<Scalar> maxpool2x2_backward(const PoolIndex& index, const BasicTensor<Scalar>& grad_out) {
  if (grad_out.shape() != index.output_shape)
    throw DimensionError("maxpool2x2_backward: grad_out shape " + shape_string(grad_out.shape()) +
                         " does not match index map " + shape_string(index.output_shape));
  if (static_cast<Index>(index.argmax.size()) != grad_out.size())
    throw DimensionError("maxpool2x2_backward: index map has " +
                         std::to_string(index.argmax.size()) + " entries for " +
                         std::to_string(grad_out.size()) + " outputs");
  BasicTensor<Scalar> grad_x(index.input_shape);
  for (Index k = 0; k < grad_out.size(); ++k) {
    const Index target = index.argmax[static_cast<std::size_t>(k)];
    if (target < 0 || target >= grad_x.size())
      throw DimensionError("maxpool2x2_backward: index map entry out of input range");
    grad_x[target] += grad_out[k];
  }
  return grad_x;
}

}  // namespace fgt
