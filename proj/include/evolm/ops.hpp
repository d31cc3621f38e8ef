#pragma once

#include <cstdint>
#include <vector>

#include "evolm/tensor.hpp"

namespace evolm::ops {

// Log inputs are clamped below by this before taking the logarithm.
inline constexpr double kLogClamp = 1e-12;
// Variance floor added inside layer_norm / standardize.
inline constexpr double kLayerNormEps = 1e-5;
// Stand-in for -inf when masking attention scores; keeps every stored value
// finite while still flushing masked probabilities to exactly zero.
inline constexpr double kNegFill = -1e30;

// All operations validate shapes, compute forward values through the active
// kernel table where one applies, and append a backward node to the graph
// when it is recording and any input requires a gradient.

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b);
Tensor transpose(Graph& g, const Tensor& a);
Tensor reshape(Graph& g, const Tensor& a, std::vector<std::int64_t> shape);

Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor sub(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);
Tensor add_row_bias(Graph& g, const Tensor& m, const Tensor& bias);
Tensor scale(Graph& g, const Tensor& a, double c);
Tensor add_scalar(Graph& g, const Tensor& a, double c);
Tensor sum_all(Graph& g, const Tensor& a);

Tensor gelu(Graph& g, const Tensor& a);
Tensor log_clamped(Graph& g, const Tensor& a);

// Softmax over the last axis; rows are the flattened leading axes.
Tensor softmax(Graph& g, const Tensor& a);

// Per-row affine normalization over the last axis, epsilon kLayerNormEps.
Tensor layer_norm(Graph& g, const Tensor& x, const Tensor& gain, const Tensor& bias);
// layer_norm without the affine part (zero mean, unit variance per row).
Tensor standardize(Graph& g, const Tensor& x);

// out[i, :] = m[ids[i], :]
Tensor gather_rows(Graph& g, const Tensor& m, const std::vector<std::int64_t>& ids);
// out[r, c] = m[r, idx[r * out_cols + c]]
Tensor gather_cols_per_row(Graph& g, const Tensor& m, const std::vector<std::int64_t>& idx,
                           std::int64_t out_cols);
Tensor concat_rows(Graph& g, const Tensor& a, const Tensor& b);
Tensor concat_cols(Graph& g, const std::vector<Tensor>& parts);

// out = keep ? a : value; `keep` is a constant 0/1 mask of a's size.
Tensor masked_fill(Graph& g, const Tensor& a, const std::vector<std::uint8_t>& keep,
                   double value);

// -sum target_i * log(max(p_i, kLogClamp)) for probability vectors.
// Both arguments must sum to 1 within 1e-6.
Tensor cross_entropy(Graph& g, const Tensor& p, const Tensor& target);
// Row-wise cross entropy summed over the rows of two [m x V] matrices.
Tensor cross_entropy_rowsum(Graph& g, const Tensor& p, const Tensor& target);

}  // namespace evolm::ops
