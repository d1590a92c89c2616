#pragma once

#include "fgt/tensor.hpp"

namespace fgt {

/// Gradients of a 2-D convolution. `x` is left empty when not requested.
template <class Scalar>
struct ConvGrads {
  BasicTensor<Scalar> x;
  BasicTensor<Scalar> w;
  BasicTensor<Scalar> b;
};

namespace detail {

template <class Scalar>
void check_conv_shapes(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& w,
                       const BasicTensor<Scalar>& b) {
  expect_rank("conv2d", "input", 4, x.rank());
  expect_rank("conv2d", "weight", 4, w.rank());
  expect_rank("conv2d", "bias", 1, b.rank());
  expect_extent("conv2d", "in_channels", w.dim(1), x.dim(1));
  expect_extent("conv2d", "out_channels (bias)", w.dim(0), b.dim(0));
  if (x.dim(2) < w.dim(2))
    throw DimensionError("conv2d: axis 'height' " + std::to_string(x.dim(2)) +
                         " smaller than kernel " + std::to_string(w.dim(2)));
  if (x.dim(3) < w.dim(3))
    throw DimensionError("conv2d: axis 'width' " + std::to_string(x.dim(3)) +
                         " smaller than kernel " + std::to_string(w.dim(3)));
}

/// Unfolds sample `n` of `x` into a [Cin*kh*kw, Ho*Wo] row-major patch matrix.
template <class Scalar>
void im2col(const BasicTensor<Scalar>& x, Index n, Index kh, Index kw, RowMatrix<Scalar>& cols) {
  const Index channels = x.dim(1), height = x.dim(2), width = x.dim(3);
  const Index out_h = height - kh + 1, out_w = width - kw + 1;
  cols.resize(channels * kh * kw, out_h * out_w);
  const Scalar* src = x.data() + n * channels * height * width;
  for (Index c = 0; c < channels; ++c)
    for (Index u = 0; u < kh; ++u)
      for (Index v = 0; v < kw; ++v) {
        Scalar* row = cols.data() + ((c * kh + u) * kw + v) * out_h * out_w;
        for (Index i = 0; i < out_h; ++i) {
          const Scalar* line = src + (c * height + i + u) * width + v;
          std::copy(line, line + out_w, row + i * out_w);
        }
      }
}

/// Adjoint of im2col: scatters-and-adds patch gradients into sample `n` of `grad_x`.
template <class Scalar>
void col2im(const RowMatrix<Scalar>& cols, Index n, Index kh, Index kw, BasicTensor<Scalar>& grad_x) {
  const Index channels = grad_x.dim(1), height = grad_x.dim(2), width = grad_x.dim(3);
  const Index out_h = height - kh + 1, out_w = width - kw + 1;
  Scalar* dst = grad_x.data() + n * channels * height * width;
  for (Index c = 0; c < channels; ++c)
    for (Index u = 0; u < kh; ++u)
      for (Index v = 0; v < kw; ++v) {
        const Scalar* row = cols.data() + ((c * kh + u) * kw + v) * out_h * out_w;
        for (Index i = 0; i < out_h; ++i) {
          Scalar* line = dst + (c * height + i + u) * width + v;
          const Scalar* g = row + i * out_w;
          for (Index j = 0; j < out_w; ++j) line[j] += g[j];
        }
      }
}

}  // namespace detail

/// Valid (unpadded) stride-1 cross-correlation:
/// out[n,o,i,j] = b[o] + sum_{c,u,v} x[n,c,i+u,j+v] * w[o,c,u,v].
template <class Scalar>
BasicTensor<Scalar> conv2d_forward(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& w,
                                   const BasicTensor<Scalar>& b) {
  detail::check_conv_shapes(x, w, b);
  const Index batch = x.dim(0), out_ch = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const Index out_h = x.dim(2) - kh + 1, out_w = x.dim(3) - kw + 1;
  const Index patch = w.size() / out_ch, pixels = out_h * out_w;

  BasicTensor<Scalar> out({batch, out_ch, out_h, out_w});
  const auto weights = w.matrix(out_ch, patch);
  const auto bias = b.storage();
  RowMatrix<Scalar> cols;
  for (Index n = 0; n < batch; ++n) {
    detail::im2col(x, n, kh, kw, cols);
    RowMatrixMap<Scalar> y(out.data() + n * out_ch * pixels, out_ch, pixels);
    y.noalias() = weights * cols;
    y.colwise() += bias;
  }
  return out;
}

/// Exact adjoint of conv2d_forward for upstream gradient `grad_out`.
template <class Scalar>
ConvGrads<Scalar> conv2d_backward(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& w,
                                  const BasicTensor<Scalar>& grad_out, bool need_grad_x = true) {
  expect_rank("conv2d_backward", "input", 4, x.rank());
  expect_rank("conv2d_backward", "weight", 4, w.rank());
  expect_rank("conv2d_backward", "grad_out", 4, grad_out.rank());
  expect_extent("conv2d_backward", "in_channels", w.dim(1), x.dim(1));
  const Index batch = x.dim(0), out_ch = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const Index out_h = x.dim(2) - kh + 1, out_w = x.dim(3) - kw + 1;
  expect_extent("conv2d_backward", "batch", batch, grad_out.dim(0));
  expect_extent("conv2d_backward", "out_channels", out_ch, grad_out.dim(1));
  expect_extent("conv2d_backward", "height", out_h, grad_out.dim(2));
  expect_extent("conv2d_backward", "width", out_w, grad_out.dim(3));
  const Index patch = w.size() / out_ch, pixels = out_h * out_w;

  ConvGrads<Scalar> grads;
  grads.w = BasicTensor<Scalar>(w.shape());
  grads.b = BasicTensor<Scalar>({out_ch});
  if (need_grad_x) grads.x = BasicTensor<Scalar>(x.shape());

  auto grad_w = grads.w.matrix(out_ch, patch);
  const auto weights = w.matrix(out_ch, patch);
  RowMatrix<Scalar> cols, grad_cols;
  for (Index n = 0; n < batch; ++n) {
    ConstRowMatrixMap<Scalar> g(grad_out.data() + n * out_ch * pixels, out_ch, pixels);
    detail::im2col(x, n, kh, kw, cols);
    grad_w.noalias() += g * cols.transpose();
    grads.b.storage() += g.rowwise().sum();
    if (need_grad_x) {
      grad_cols.noalias() = weights.transpose() * g;
      detail::col2im(grad_cols, n, kh, kw, grads.x);
    }
  }
  return grads;
}

}  // namespace fgt
