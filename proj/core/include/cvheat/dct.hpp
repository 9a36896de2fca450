#pragma once

#include "cvheat/tensor.hpp"

namespace cvheat::heat {

// Orthonormal DCT-II basis for one axis length. Row k of `fwd` is the k-th
// basis vector; `fwd * fwd^T = I`, so the inverse transform is the transpose.
struct DctBasis {
  int n = 0;
  Tensor fwd;  // (n, n)
  static const DctBasis& get(int n);  // cached per length
};

// 2-D separable orthonormal DCT-II and its inverse on (H,W) grids.
// dct2(x) = D_H x D_W^T ; idct2(y) = D_H^T y D_W.
Tensor dct2(const Tensor& x);
Tensor idct2(const Tensor& x);

}  // namespace cvheat::heat
