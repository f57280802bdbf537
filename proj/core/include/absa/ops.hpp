#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "absa/tensor.hpp"

namespace absa {

// Every op records a backward closure when any input requires grad.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// [m,n] + [n], bias broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& bias);
// Left fold a0 + a1 + ... over same-shaped tensors.
Tensor add_n(std::span<const Tensor> terms);

Tensor sum(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);

// Throws NumericError on non-finite input.
Tensor softmax(const Tensor& x, std::size_t axis);
// Row-wise softmax over the columns of x with key_mask[j] == 0 excluded
// (probability exactly zero). At least one column must be unmasked.
Tensor masked_softmax_rows(const Tensor& x, std::span<const int> key_mask);
// Reduces `axis` away: result shape drops that dimension.
Tensor logsumexp(const Tensor& x, std::size_t axis);
// -log softmax(logits)[cls] for a rank-1 logits vector.
Tensor cross_entropy(const Tensor& logits, std::size_t cls);

// Normalizes over the last axis. gamma and beta have the last-axis length.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);
// Exact erf form: x * Phi(x).
Tensor gelu(const Tensor& x);
Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng);

// Rows of `table` gathered by id: [ids.size(), table.dim(1)].
Tensor embedding_lookup(const Tensor& table, std::span<const int> ids);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_cols(std::span<const Tensor> parts);

}  // namespace absa
