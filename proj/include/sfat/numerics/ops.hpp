#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "sfat/numerics/tensor.hpp"

namespace sfat {

using TokenId = std::int32_t;

// Every op records a backward closure when grad mode is on and any input
// requires a gradient. All 2-D inputs are row-major [rows x cols].

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// a * b^T without materialising the transpose.
template <typename T> Tensor<T> matmul_bt(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> transpose(const Tensor<T>& a);

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
// a [n x d] + bias [d] broadcast over rows.
template <typename T> Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& bias);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> gelu(const Tensor<T>& a);

template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);
template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-5));

// Row-wise softmax of factor * x. `keep` (optional, rows*cols bytes) marks the
// admissible entries; excluded entries get probability 0 and a row with no
// admissible entry is all zeros.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x, std::span<const std::uint8_t> keep = {},
                       T factor = T(1));

// exp(s_i / epsilon) / sum_j exp(s_j / epsilon) over a 1-D score vector.
template <typename T>
Tensor<T> softmax_with_temperature(const Tensor<T>& scores, T epsilon);

template <typename T> Tensor<T> log_softmax_rows(const Tensor<T>& x);

// Mean over non-ignored rows of -log softmax(logits)[target].
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const TokenId> targets,
                        TokenId ignore_id);

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const TokenId> ids);

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t start, std::size_t count);
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t count);
template <typename T> Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);
template <typename T> Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);

// x_i / sqrt(|x_i|^2 + tiny) per row; smooth at the origin.
template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x, T tiny = T(1e-12));

// Inverted dropout. Identity when rng is null or rate is 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, std::mt19937_64* rng);

}  // namespace sfat
