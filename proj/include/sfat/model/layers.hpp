#pragma once

#include <random>
#include <span>
#include <string>

#include "sfat/numerics/attention.hpp"
#include "sfat/numerics/ops.hpp"

namespace sfat {

/// Train mode enables dropout; it needs an rng to draw masks from.
struct ForwardMode {
  bool train = false;
  std::mt19937_64* rng = nullptr;

  std::mt19937_64* dropout_rng() const { return train ? rng : nullptr; }
  static ForwardMode eval() { return {}; }
};

template <typename T>
struct LayerNormWeights {
  Tensor<T> gain, bias;

  static LayerNormWeights register_in(ParameterSet<T>& params, const std::string& prefix, std::size_t d);
  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gain, bias); }
};

template <typename T>
struct FeedForwardWeights {
  Tensor<T> w1, b1, w2, b2;

  static FeedForwardWeights register_in(ParameterSet<T>& params, const std::string& prefix, std::size_t d,
                                        std::size_t hidden, std::mt19937_64& rng);
  // gelu(x W1 + b1), dropout, then W2 + b2.
  Tensor<T> operator()(const Tensor<T>& x, double dropout_rate, const ForwardMode& mode) const;
};

// Pre-norm encoder block: x + Attn(LN(x)), then x + FF(LN(x)).
template <typename T>
struct EncoderLayerWeights {
  AttentionWeights<T> attn;
  LayerNormWeights<T> ln1, ln2;
  FeedForwardWeights<T> ff;

  static EncoderLayerWeights register_in(ParameterSet<T>& params, const std::string& prefix, std::size_t d,
                                         std::mt19937_64& rng);
  Tensor<T> operator()(const Tensor<T>& x, const AttentionSpec& spec, std::span<const std::uint8_t> keep,
                       const ForwardMode& mode) const;
};

}  // namespace sfat
