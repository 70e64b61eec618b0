#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>

#include "sfat/numerics/parameters.hpp"

namespace sfat {

struct AttentionSpec {
  std::size_t num_heads = 1;
  std::size_t model_dim = 1;
  bool causal = false;
  double dropout_rate = 0.0;

  void validate() const;
  std::size_t head_dim() const { return model_dim / num_heads; }
};

// Projection weights are stored [in x out] and applied as x * W + b.
template <typename T>
struct AttentionWeights {
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;

  static AttentionWeights register_in(ParameterSet<T>& params, const std::string& prefix,
                                      std::size_t model_dim, std::mt19937_64& rng);
  static AttentionWeights lookup(const ParameterSet<T>& params, const std::string& prefix);
};

/// Scaled dot-product attention over `num_heads` column groups, concatenated
/// and output-projected. With `causal`, query i only sees keys j <= i.
/// `key_keep` (optional, one byte per key) masks out padding keys; a query
/// with no admissible key yields the output bias only.
/// `dropout_rng` enables dropout on the attention weights.
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& query, const Tensor<T>& key_source,
                               const Tensor<T>& value_source, const AttentionWeights<T>& w,
                               const AttentionSpec& spec,
                               std::span<const std::uint8_t> key_keep = {},
                               std::mt19937_64* dropout_rng = nullptr);

}  // namespace sfat
