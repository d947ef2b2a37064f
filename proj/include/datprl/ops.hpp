// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor operations.
//
// Binary elementwise ops broadcast when one operand has a single element or
// when the smaller shape is a trailing suffix of the larger one
// (e.g. [N,T,d] with [d]). Anything else is a ShapeError naming both shapes.

#ifndef DATPRL_OPS_HPP
#define DATPRL_OPS_HPP

#include <cstddef>
#include <vector>

#include "datprl/tensor.hpp"

namespace datprl {

// elementwise
Tensor add(const Tensor &a, const Tensor &b);
Tensor sub(const Tensor &a, const Tensor &b);
Tensor mul(const Tensor &a, const Tensor &b);
Tensor div(const Tensor &a, const Tensor &b);
Tensor add(const Tensor &a, double b);
Tensor mul(const Tensor &a, double b);
/// max(x, floor) elementwise; gradient passes where x > floor.
Tensor max_scalar(const Tensor &x, double floor);

Tensor neg(const Tensor &x);
Tensor exp(const Tensor &x);
/// Natural log; rejects non-positive inputs.
Tensor log(const Tensor &x);
Tensor sqrt(const Tensor &x);
Tensor abs(const Tensor &x);
Tensor square(const Tensor &x);
Tensor sigmoid(const Tensor &x);
/// x * sigmoid(x).
Tensor silu(const Tensor &x);
/// x log x with 0 log 0 := 0 (gradient taken as 0 there). Needs x >= 0.
Tensor xlogx(const Tensor &x);

inline Tensor operator+(const Tensor &a, const Tensor &b) { return add(a, b); }
inline Tensor operator-(const Tensor &a, const Tensor &b) { return sub(a, b); }
inline Tensor operator*(const Tensor &a, const Tensor &b) { return mul(a, b); }
inline Tensor operator/(const Tensor &a, const Tensor &b) { return div(a, b); }
inline Tensor operator+(const Tensor &a, double b) { return add(a, b); }
inline Tensor operator-(const Tensor &a, double b) { return add(a, -b); }
inline Tensor operator*(const Tensor &a, double b) { return mul(a, b); }
inline Tensor operator*(double a, const Tensor &b) { return mul(b, a); }
inline Tensor operator-(const Tensor &x) { return neg(x); }

// linear algebra
Tensor matmul(const Tensor &a, const Tensor &b);
Tensor transpose(const Tensor &x);

// shape algebra and reductions
Tensor reshape(const Tensor &x, Shape shape);
Tensor flatten(const Tensor &x);
Tensor sum(const Tensor &x);
Tensor mean(const Tensor &x);
/// Reduces one axis away; a rank-1 input yields shape [1].
Tensor sum(const Tensor &x, std::size_t axis);
Tensor mean(const Tensor &x, std::size_t axis);
Tensor concat(const std::vector<Tensor> &parts, std::size_t axis);
/// Gathers slices along axis 0.
Tensor index_select(const Tensor &x, const std::vector<std::size_t> &indices);

// normalisation and similarity
/// Softmax over the last axis of exp(x / temperature), max-subtracted.
Tensor softmax(const Tensor &x, double temperature = 1.0);
/// log(sum(exp(x))) over all elements.
Tensor logsumexp(const Tensor &x);
/// Rows of the last axis scaled to unit L2 norm. Zero rows stay zero.
Tensor l2_normalize_rows(const Tensor &x);
/// Scalar cosine of two equal-length tensors. A zero-norm input yields 0 and
/// sets *degenerate when provided.
Tensor cosine_similarity(const Tensor &a, const Tensor &b, bool *degenerate = nullptr);
/// Cosine between each row of `rows` [n x d] and `query` [d]: shape [n].
Tensor cosine_rows(const Tensor &rows, const Tensor &query);

// spectral
struct Spectrum {
  Tensor real;
  Tensor imag;
};
/// Exact 2-D DFT per channel of an [h, w] or [c, h, w] tensor:
/// X[u,v] = sum_{x,y} img[x,y] exp(-2 pi i (ux/h + vy/w)).
Spectrum dft2(const Tensor &image);

// convolutional
struct Conv2dSpec {
  std::size_t stride = 1;
  std::size_t padding = 0;
};
/// x [c_in, h, w], weight [c_out, c_in, k, k], bias [c_out] (may be empty
/// via has_bias=false). Zero padding.
Tensor conv2d(const Tensor &x, const Tensor &weight, const Tensor *bias,
              Conv2dSpec spec);
Tensor upsample_nearest2x(const Tensor &x);
/// [c, h, w] -> [c].
Tensor global_avg_pool(const Tensor &x);
/// x [n, in] or [in], weight [in, out], bias [out] or nullptr.
Tensor linear(const Tensor &x, const Tensor &weight, const Tensor *bias);

} // namespace datprl

#endif // DATPRL_OPS_HPP
