#include "sfat/model/layers.hpp"

namespace sfat {

template <typename T>
LayerNormWeights<T> LayerNormWeights<T>::register_in(ParameterSet<T>& params, const std::string& prefix,
                                                     std::size_t d) {
  return {params.add(prefix + ".gain", Tensor<T>::full({d}, T(1))), params.add(prefix + ".bias", Tensor<T>::zeros({d}))};
}

template <typename T>
FeedForwardWeights<T> FeedForwardWeights<T>::register_in(ParameterSet<T>& params, const std::string& prefix,
                                                         std::size_t d, std::size_t hidden, std::mt19937_64& rng) {
  FeedForwardWeights f;
  f.w1 = params.add(prefix + ".w1", glorot_uniform<T>(d, hidden, rng));
  f.b1 = params.add(prefix + ".b1", Tensor<T>::zeros({hidden}));
  f.w2 = params.add(prefix + ".w2", glorot_uniform<T>(hidden, d, rng));
  f.b2 = params.add(prefix + ".b2", Tensor<T>::zeros({d}));
  return f;
}

template <typename T>
Tensor<T> FeedForwardWeights<T>::operator()(const Tensor<T>& x, double dropout_rate, const ForwardMode& mode) const {
  auto h = gelu(add_row(matmul(x, w1), b1));
  h = dropout(h, dropout_rate, mode.dropout_rng());
  return add_row(matmul(h, w2), b2);
}

template <typename T>
EncoderLayerWeights<T> EncoderLayerWeights<T>::register_in(ParameterSet<T>& params, const std::string& prefix,
                                                           std::size_t d, std::mt19937_64& rng) {
  EncoderLayerWeights l;
  l.attn = AttentionWeights<T>::register_in(params, prefix + ".attn", d, rng);
  l.ln1 = LayerNormWeights<T>::register_in(params, prefix + ".ln1", d);
  l.ln2 = LayerNormWeights<T>::register_in(params, prefix + ".ln2", d);
  l.ff = FeedForwardWeights<T>::register_in(params, prefix + ".ff", d, 4 * d, rng);
  return l;
}

template <typename T>
Tensor<T> EncoderLayerWeights<T>::operator()(const Tensor<T>& x, const AttentionSpec& spec,
                                             std::span<const std::uint8_t> keep, const ForwardMode& mode) const {
  const auto h = ln1(x);
  auto y = add(x, multi_head_attention(h, h, h, attn, spec, keep, mode.dropout_rng()));
  return add(y, ff(ln2(y), spec.dropout_rate, mode));
}

template struct LayerNormWeights<float>;
template struct LayerNormWeights<double>;
template struct FeedForwardWeights<float>;
template struct FeedForwardWeights<double>;
template struct EncoderLayerWeights<float>;
template struct EncoderLayerWeights<double>;

}  // namespace sfat
