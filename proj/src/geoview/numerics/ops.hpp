#pragma once

#include <span>

#include "geoview/numerics/tensor.hpp"

namespace geoview::nn {

// Differentiable operations. Shapes are checked eagerly; mismatches throw a
// dimension error naming both shapes. Broadcasting is limited to bias-add and
// scalar scaling.

Tensor matmul(const Tensor& a, const Tensor& b);          // [m,k]x[k,n]
Tensor add(const Tensor& a, const Tensor& b);             // same shape
Tensor sub(const Tensor& a, const Tensor& b);             // same shape
Tensor mul(const Tensor& a, const Tensor& b);             // elementwise
Tensor scale(const Tensor& x, double s);
Tensor add_bias(const Tensor& x, const Tensor& bias);     // [m,n] + [n]
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Numerically stable softmax along `axis` (max-subtracted).
Tensor softmax(const Tensor& x, std::size_t axis);

// Rows are laid out as [outer][blocks][inner]; returns the mean over the
// block index, shape [outer*inner, cols].
Tensor block_mean(const Tensor& x, std::size_t outer, std::size_t blocks);

// Rows of `x` in the given order; indices may repeat. Output [rows, cols].
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);

// Weighted mean of consecutive row segments of equal length. `mask` has one
// weight per row (empty = all ones); a segment with zero total weight yields
// zeros. Output shape [segments, cols].
Tensor segment_mean(const Tensor& x, std::size_t segments,
                    std::span<const double> mask = {});

// Multi-head scaled dot-product attention with independent groups: query
// rows are split into `groups` equal blocks and each block attends only to
// the matching block of key rows. q: [G*nq, C], k and v: [G*nk, C].
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 std::size_t heads, std::size_t groups);

// Attention distribution of the above, shape [G, heads, nq, nk]. Not
// differentiable.
Tensor attention_weights(const Tensor& q, const Tensor& k, std::size_t heads,
                         std::size_t groups);

}  // namespace geoview::nn
