#pragma once

#include <span>

#include "almt/tape.hpp"
#include "almt/tensor.hpp"

// Differentiable tensor operations. Each op validates shapes, computes its
// forward value through the kernels, verifies finiteness, and records its
// backward rule on the tape when any input participates in gradients.

namespace almt {

// [m x k] * [k x n] -> [m x n]
template <typename T>
TensorT<T> matmul(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b);

// [m x k] * [n x k]^T -> [m x n]
template <typename T>
TensorT<T> matmul_nt(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b);

template <typename T>
TensorT<T> add(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b);

template <typename T>
TensorT<T> sub(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b);

// Elementwise product.
template <typename T>
TensorT<T> mul(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b);

template <typename T>
TensorT<T> scale(TapeT<T>& tape, const TensorT<T>& x, double c);

// [t x n] plus a rank-1 [n] row, broadcast over rows.
template <typename T>
TensorT<T> add_row_broadcast(TapeT<T>& tape, const TensorT<T>& x, const TensorT<T>& row);

// Row-wise softmax with max subtraction; rows sum to 1.
template <typename T>
TensorT<T> softmax_rows(TapeT<T>& tape, const TensorT<T>& x);

// Row-wise standardization (population variance) followed by gamma/beta.
template <typename T>
TensorT<T> layer_norm_rows(TapeT<T>& tape, const TensorT<T>& x, const TensorT<T>& gamma,
                           const TensorT<T>& beta, double eps = 1e-5);

// Exact GELU, x * Phi(x).
template <typename T>
TensorT<T> gelu(TapeT<T>& tape, const TensorT<T>& x);

// Stack rows in argument order; all parts share the column extent.
template <typename T>
TensorT<T> concat_rows(TapeT<T>& tape, std::span<const TensorT<T>> parts);

// Stack columns in argument order; all parts share the row extent.
template <typename T>
TensorT<T> concat_cols(TapeT<T>& tape, std::span<const TensorT<T>> parts);

// Rows [begin, begin+count) of x.
template <typename T>
TensorT<T> slice_rows(TapeT<T>& tape, const TensorT<T>& x, int begin, int count);

// Column-wise mean over rows: [t x n] -> [1 x n].
template <typename T>
TensorT<T> mean_rows(TapeT<T>& tape, const TensorT<T>& x);

// Full reduction to a [1 x 1] scalar.
template <typename T>
TensorT<T> sum_all(TapeT<T>& tape, const TensorT<T>& x);

// Inverted dropout driven by an explicit rng; rate 0 returns x unchanged.
template <typename T>
TensorT<T> dropout(TapeT<T>& tape, const TensorT<T>& x, double rate, Rng& rng);

} // namespace almt
