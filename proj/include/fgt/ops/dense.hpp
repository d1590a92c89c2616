#pragma once

#include "fgt/tensor.hpp"

namespace fgt {

template <class Scalar>
struct DenseGrads {
  BasicTensor<Scalar> x;
  BasicTensor<Scalar> w;
  BasicTensor<Scalar> b;
};

/// out = x * w^T + b, with x [B,Fin], w [Fout,Fin], b [Fout].
template <class Scalar>
BasicTensor<Scalar> dense_forward(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& w,
                                  const BasicTensor<Scalar>& b) {
  expect_rank("dense", "input", 2, x.rank());
  expect_rank("dense", "weight", 2, w.rank());
  expect_rank("dense", "bias", 1, b.rank());
  expect_extent("dense", "in_features", w.dim(1), x.dim(1));
  expect_extent("dense", "out_features (bias)", w.dim(0), b.dim(0));
  const Index batch = x.dim(0), fin = x.dim(1), fout = w.dim(0);
  BasicTensor<Scalar> out({batch, fout});
  auto y = out.matrix(batch, fout);
  y.noalias() = x.matrix(batch, fin) * w.matrix(fout, fin).transpose();
  y.rowwise() += b.storage().transpose();
  return out;
}

template <class Scalar>
DenseGrads<Scalar> dense_backward(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& w,
                                  const BasicTensor<Scalar>& grad_out, bool need_grad_x = true) {
  expect_rank("dense_backward", "input", 2, x.rank());
  expect_rank("dense_backward", "weight", 2, w.rank());
  expect_rank("dense_backward", "grad_out", 2, grad_out.rank());
  expect_extent("dense_backward", "in_features", w.dim(1), x.dim(1));
  expect_extent("dense_backward", "batch", x.dim(0), grad_out.dim(0));
  expect_extent("dense_backward", "out_features", w.dim(0), grad_out.dim(1));
  const Index batch = x.dim(0), fin = x.dim(1), fout = w.dim(0);
  const auto g = grad_out.matrix(batch, fout);

  DenseGrads<Scalar> grads{BasicTensor<Scalar>(), BasicTensor<Scalar>(w.shape()),
                           BasicTensor<Scalar>({fout})};
  grads.w.matrix(fout, fin).noalias() = g.transpose() * x.matrix(batch, fin);
  grads.b.storage() = g.colwise().sum().transpose();
  if (need_grad_x) {
    grads.x = BasicTensor<Scalar>(x.shape());
    grads.x.matrix(batch, fin).noalias() = g * w.matrix(fout, fin);
  }
  return grads;
}

}  // namespace fgt
